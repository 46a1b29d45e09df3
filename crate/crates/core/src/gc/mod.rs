//! Generalized cylinders: a skeleton curve with cross-section loops and the
//! polar surface parameterization `p ↔ (h, φ)` built on them.

mod cylinder;
mod frame;
pub mod section;
mod skeleton;
mod slice;

pub use cylinder::{
    build_gc, wrap_angle, CrossSection, GcCoordinate, GcParams, GcWarnings, GeneralizedCylinder,
    HeightLookup, Parameterization, GC_SCHEMA, GC_VERSION, TABLE_HEIGHTS,
};
pub use frame::{frames_at, Frame};
pub use section::{abstract_section, AbstractionParams, Loop2};
pub use skeleton::Skeleton;
pub use slice::{slice_mesh, Slice};
