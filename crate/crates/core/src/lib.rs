//! Face descriptors from a VGG-Face style network with an average-biased
//! rectifier, and the retrieval metrics used to compare them.

pub mod activations;
pub mod descriptor;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod selftest;
pub mod similarity;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
