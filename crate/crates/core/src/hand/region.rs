use std::fmt;

use serde::{Deserialize, Serialize};

/// Hand surface regions: the palm, four thumb segments and three phalanges
/// for each of the other fingers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Palm,
    ThumbMeta,
    ThumbProximal,
    ThumbDistal,
    ThumbTip,
    IndexProximal,
    IndexMiddle,
    IndexDistal,
    MiddleProximal,
    MiddleMiddle,
    MiddleDistal,
    RingProximal,
    RingMiddle,
    RingDistal,
    LittleProximal,
    LittleMiddle,
    LittleDistal,
}

impl Region {
    pub const COUNT: usize = 17;

    pub const ALL: [Region; Region::COUNT] = [
        Region::Palm,
        Region::ThumbMeta,
        Region::ThumbProximal,
        Region::ThumbDistal,
        Region::ThumbTip,
        Region::IndexProximal,
        Region::IndexMiddle,
        Region::IndexDistal,
        Region::MiddleProximal,
        Region::MiddleMiddle,
        Region::MiddleDistal,
        Region::RingProximal,
        Region::RingMiddle,
        Region::RingDistal,
        Region::LittleProximal,
        Region::LittleMiddle,
        Region::LittleDistal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Palm => "palm",
            Region::ThumbMeta => "thumb_meta",
            Region::ThumbProximal => "thumb_proximal",
            Region::ThumbDistal => "thumb_distal",
            Region::ThumbTip => "thumb_tip",
            Region::IndexProximal => "index_proximal",
            Region::IndexMiddle => "index_middle",
            Region::IndexDistal => "index_distal",
            Region::MiddleProximal => "middle_proximal",
            Region::MiddleMiddle => "middle_middle",
            Region::MiddleDistal => "middle_distal",
            Region::RingProximal => "ring_proximal",
            Region::RingMiddle => "ring_middle",
            Region::RingDistal => "ring_distal",
            Region::LittleProximal => "little_proximal",
            Region::LittleMiddle => "little_middle",
            Region::LittleDistal => "little_distal",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
