//! The analog pipeline: memristive convolution, photonic activation and
//! pooling, and the photonic backward pass with in-array weight updates.

mod backward;
mod forward;

pub use backward::*;
pub use forward::*;
