//! Low-poly capsule hand, 18 cm from wrist to middle fingertip.
//!
//! Rest pose: wrist at the origin, fingers along +y, palm facing -z, thumb on
//! the -x side. Flexion curls the fingers toward -z.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{Point3, Vector3};

use super::{Anchor, AxisLimits, HandTemplate, Region, TemplateParts, JOINT_COUNT};
use crate::mesh::shapes::{sweep, Ring};
use crate::mesh::TriMesh;

const SEGMENTS: usize = 8;
/// Shaft rings at these fractions of each bone.
const SHAFT: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
const DEG: f64 = std::f64::consts::PI / 180.0;

struct Bone {
    joint: usize,
    parent: usize,
    start: Point3<f64>,
    /// End of the straight part; the rounded cap extends one radius beyond.
    end: Point3<f64>,
    radius: f64,
    /// Unit vector toward the palmar side, orthogonal to the bone.
    palmar: Vector3<f64>,
    region: Region,
    /// Shaft fractions where anchors sit on the palmar side.
    anchors: &'static [f64],
    fingertip: Option<usize>,
}

impl Bone {
    fn axis(&self) -> Vector3<f64> {
        (self.end - self.start).normalize()
    }

    fn shaft_length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    fn mesh(&self) -> TriMesh {
        let d = self.axis();
        let u = self.palmar;
        let v = d.cross(&u);
        let ring = |center: Point3<f64>, r: f64| Ring { center, u, v, rx: r, ry: r };
        let r = self.radius;
        let mut rings = vec![
            ring(self.start - d * r, 0.0),
            ring(self.start - d * (r * FRAC_PI_4.cos()), r * FRAC_PI_4.sin()),
        ];
        for f in SHAFT {
            rings.push(ring(self.start + (self.end - self.start) * f, r));
        }
        rings.push(ring(self.end + d * (r * FRAC_PI_4.cos()), r * FRAC_PI_4.sin()));
        rings.push(ring(self.end + d * r, 0.0));
        sweep(&rings, SEGMENTS)
    }
}

struct Chain {
    base: Point3<f64>,
    dirs: [Vector3<f64>; 3],
    lengths: [f64; 3],
    radii: [f64; 3],
    curl: Vector3<f64>,
    regions: [Region; 3],
    anchors: [&'static [f64]; 3],
}

fn fingers() -> [Chain; 5] {
    let finger = |base: [f64; 3], dir: [f64; 3], lengths, radii, regions| {
        let d = Vector3::from(dir).normalize();
        Chain {
            base: Point3::from(base),
            dirs: [d; 3],
            lengths,
            radii,
            curl: -Vector3::z(),
            regions,
            anchors: [&[1.0 / 3.0, 2.0 / 3.0], &[0.6], &[1.0 / 3.0, 1.0]],
        }
    };
    use Region::*;
    let thumb_meta = Vector3::new(-0.75, 1.0, -0.45).normalize();
    let thumb_rest = Vector3::new(-0.4, 1.0, -0.5).normalize();
    [
        Chain {
            base: Point3::new(-1.9, 1.6, -0.4),
            dirs: [thumb_meta, thumb_rest, thumb_rest],
            lengths: [3.6, 3.0, 2.4],
            radii: [1.15, 0.95, 0.85],
            curl: Vector3::new(0.55, 0.0, -0.85),
            regions: [ThumbMeta, ThumbProximal, ThumbDistal],
            anchors: [&[0.6], &[1.0 / 3.0, 2.0 / 3.0], &[0.0, 1.0 / 3.0]],
        },
        finger([-2.6, 9.2, 0.0], [-0.08, 1.0, 0.0], [4.0, 2.4, 1.9], [0.85, 0.78, 0.72], [IndexProximal, IndexMiddle, IndexDistal]),
        finger([-0.85, 9.5, 0.0], [0.0, 1.0, 0.0], [4.3, 2.6, 1.6], [0.88, 0.8, 0.74], [MiddleProximal, MiddleMiddle, MiddleDistal]),
        finger([0.85, 9.2, 0.0], [0.04, 1.0, 0.0], [4.0, 2.5, 1.8], [0.83, 0.76, 0.7], [RingProximal, RingMiddle, RingDistal]),
        finger([2.5, 8.6, 0.0], [0.12, 1.0, 0.0], [3.2, 1.9, 1.6], [0.74, 0.68, 0.62], [LittleProximal, LittleMiddle, LittleDistal]),
    ]
}

fn palm() -> TriMesh {
    let ys: [f64; 9] = [-0.4, 0.8, 2.2, 3.6, 5.0, 6.4, 7.8, 8.9, 9.6];
    let rings: Vec<Ring> = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let s = (y / 5.0).clamp(0.0, 1.0);
            let mut width = 3.2 + 0.9 * s * s * (3.0 - 2.0 * s);
            let mut thick = 1.25 - 0.2 * (y / 9.6).clamp(0.0, 1.0);
            if i == 0 || i == ys.len() - 1 {
                width *= 0.93;
                thick *= 0.8;
            }
            Ring {
                center: Point3::new(0.0, y, 0.0),
                u: Vector3::z(),
                v: Vector3::x(),
                rx: thick,
                ry: width,
            }
        })
        .collect();
    sweep(&rings, 12)
}

fn limits(joint_in_chain: usize, thumb: bool) -> AxisLimits {
    let flex = Some([0.0, 100.0 * DEG]);
    let twist = Some([-5.0 * DEG, 5.0 * DEG]);
    match (thumb, joint_in_chain) {
        (true, 0) => [Some([-30.0 * DEG, 60.0 * DEG]), Some([-30.0 * DEG, 60.0 * DEG]), twist],
        (_, 0) | (true, 1) => [flex, Some([-20.0 * DEG, 20.0 * DEG]), twist],
        (_, 3) => [None, None, None],
        _ => [flex, None, twist],
    }
}

fn nearest(vertices: &[Point3<f64>], range: std::ops::Range<usize>, target: &Point3<f64>, taken: &[Anchor]) -> usize {
    range
        .filter(|v| !taken.iter().any(|a| a.vertex == *v))
        .min_by(|&a, &b| {
            (vertices[a] - target)
                .norm_squared()
                .total_cmp(&(vertices[b] - target).norm_squared())
        })
        .expect("component has free vertices")
}

/// Builds the template hand.
pub fn procedural_template() -> HandTemplate {
    let mut joints = vec![Point3::origin(); JOINT_COUNT];
    let mut parents = vec![None; JOINT_COUNT];
    let mut flexion_axes = vec![-Vector3::x(); JOINT_COUNT];
    let mut lims: Vec<AxisLimits> = vec![[None, None, None]; JOINT_COUNT];
    let mut bones = Vec::new();

    for (f, chain) in fingers().iter().enumerate() {
        let first = 1 + 4 * f;
        let mut p = chain.base;
        for k in 0..4 {
            let j = first + k;
            joints[j] = p;
            parents[j] = Some(if k == 0 { 0 } else { j - 1 });
            let d = chain.dirs[k.min(2)];
            let palmar = (chain.curl - d * chain.curl.dot(&d)).normalize();
            flexion_axes[j] = d.cross(&palmar);
            lims[j] = limits(k, f == 0);
            if k == 3 {
                break;
            }
            let next = p + d * chain.lengths[k];
            let r = chain.radii[k];
            bones.push(Bone {
                joint: j,
                parent: parents[j].unwrap(),
                start: p,
                end: if k == 2 { next - d * r } else { next },
                radius: r,
                palmar,
                region: chain.regions[k],
                anchors: chain.anchors[k],
                fingertip: (k == 2).then_some(f),
            });
            p = next;
        }
    }

    let palm = palm();
    let mut vertices: Vec<Point3<f64>> = palm.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = palm.faces().to_vec();
    let mut skin: Vec<Vec<(usize, f64)>> = vec![vec![(0, 1.0)]; vertices.len()];
    let mut regions = vec![Region::Palm; faces.len()];
    let mut anchors = Vec::new();
    let mut fingertips = vec![Vec::new(); 5];

    for (x, y) in [(-2.0, 3.0), (0.0, 3.0), (2.0, 3.0), (-2.0, 7.0), (0.0, 7.0), (2.0, 7.0)] {
        let v = nearest(&vertices, 0..vertices.len(), &Point3::new(x, y, -1.3), &anchors);
        anchors.push(Anchor { vertex: v, region: Region::Palm });
    }

    for bone in &bones {
        let base = vertices.len();
        let m = bone.mesh();
        let d = bone.axis();
        let len = bone.shaft_length();
        let r = bone.radius;
        for x in m.vertices() {
            let s = (x - bone.start).dot(&d);
            let w = 0.5 + 0.5 * ((s + r) / (2.0 * r)).clamp(0.0, 1.0);
            skin.push(if w < 1.0 {
                vec![(bone.joint, w), (bone.parent, 1.0 - w)]
            } else {
                vec![(bone.joint, 1.0)]
            });
            if let Some(f) = bone.fingertip {
                if s >= len - 1e-9 {
                    fingertips[f].push(vertices.len());
                }
            }
            vertices.push(*x);
        }
        for face in m.faces() {
            let g = [face[0] + base, face[1] + base, face[2] + base];
            let centroid = (vertices[g[0]].coords + vertices[g[1]].coords + vertices[g[2]].coords) / 3.0;
            let s = (Point3::from(centroid) - bone.start).dot(&d);
            regions.push(if bone.region == Region::ThumbDistal && s >= 0.55 * len {
                Region::ThumbTip
            } else {
                bone.region
            });
            faces.push(g);
        }
        let range = base..vertices.len();
        for &frac in bone.anchors {
            let target = bone.start + d * (frac * len) + bone.palmar * r;
            let v = nearest(&vertices, range.clone(), &target, &anchors);
            anchors.push(Anchor { vertex: v, region: bone.region });
        }
        if bone.region == Region::ThumbDistal {
            let target = bone.end + (bone.palmar + d).normalize() * r;
            let v = nearest(&vertices, range, &target, &anchors);
            anchors.push(Anchor { vertex: v, region: Region::ThumbTip });
        }
    }

    let mesh = TriMesh::new(vertices, faces).expect("procedural hand is a valid mesh");
    HandTemplate::new(TemplateParts {
        mesh,
        joints,
        parents,
        skin,
        regions,
        anchors,
        fingertips,
        limits: lims,
        flexion_axes,
    })
    .expect("procedural hand passes validation")
}
