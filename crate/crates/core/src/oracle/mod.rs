//! Full-precision, noise-free reference implementation of the network.

mod layers;
mod network;

pub use layers::*;
pub use network::*;
