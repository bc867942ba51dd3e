//! Deep visual odometry with motion-gated memory and attention-based pose
//! refinement, at desk scale.

// Validation uses `!(x > 0.0)` on purpose: the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod memory;
pub mod model;
pub mod net;
pub mod pipeline;
pub mod refining;
pub mod training;

pub use error::{Error, Result};
