//! Feed-forward neural network classifiers trained by gradient ascent on a
//! margin objective: maximize the normalized margin of each output
//! hyperplane, minimize it for every hidden neuron.
//!
//! Inference is an ordinary forward pass through shifted-sigmoid layers, so a
//! network trained here is interchangeable with one trained on squared error
//! ([`trainer::train_squared_error`]), which is provided as the baseline.

pub mod data;
pub mod error;
pub mod experiments;
pub mod gradients;
pub mod model_io;
pub mod network;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
pub use network::{init_network, Network, NetworkShape};
