//! Grasp transfer between object parts through generalized cylinders.
//!
//! The pipeline models a source and a target object part as generalized
//! cylinders, carries a hand-object contact map from one to the other in the
//! cylinders' polar coordinates, and refits an articulated hand to the
//! transferred contacts by gradient descent.
// `!(x > 0.0)` style checks are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod error;
pub mod gc;
pub mod hand;
pub mod mesh;
pub mod metrics;
pub mod optimize;
pub mod transfer;

pub use error::{Error, Result};
