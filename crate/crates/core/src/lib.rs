//! Simulator for a memristor/photonic CNN training accelerator.
//!
//! [`oracle`] is the exact digital reference. [`analog`] runs the same
//! network through device models from [`device`]. [`perf`] estimates
//! latency, power and area, and [`train`] drives both pipelines.

pub mod analog;
pub mod arch;
pub mod dataset;
pub mod device;
pub mod error;
pub mod oracle;
pub mod perf;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{DatasetError, Error, Result};
pub use tensor::Tensor;
