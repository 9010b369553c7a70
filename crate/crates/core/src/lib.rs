//! Synchrosqueezed short-time Fourier transforms with higher-order
//! instantaneous-frequency estimates, reassignment, ridge extraction,
//! mode reconstruction and time-frequency quality metrics.

pub mod error;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod ridge;
pub mod signal;
pub mod squeeze;
pub mod stft;
pub mod symbolic;
pub mod window;

pub use error::{Error, Result};
pub use num_complex::Complex64;
