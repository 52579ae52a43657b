//! Wearable-sensor time-series toolkit: augmentation transforms for
//! tri-axial acceleration windows, a small strided CNN trained from scratch,
//! a statistical-feature baseline, a synthetic two-class data generator, and
//! a subject-wise cross-validation harness.

pub mod augment;
pub mod cnn;
pub mod error;
pub mod eval;
pub mod io;
pub mod features;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod window;

pub use error::{Error, Result};
pub use rng::{derive_stream, gauss, RngStream};
pub use tensor::Tensor;
pub use window::{Window, CHANNELS};
