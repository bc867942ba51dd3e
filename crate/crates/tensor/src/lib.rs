//! Dense `f64` tensors and a reverse-mode differentiation tape, sized for
//! small convolutional-recurrent models.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod tape;
pub mod tensor;
pub mod votb;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, relative_error};
pub use ops::Activation;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
