//! Spectrogram-mask music source separation with a stacked hourglass
//! fully-convolutional network.

pub mod archive;
pub mod bsseval;
pub mod datasets;
pub mod dsp;
pub mod error;
pub mod inference;
pub mod model;
pub mod tensor;
pub mod training;

pub use archive::Archive;
pub use datasets::{ClipRecord, PreparedClip, Split, Task};
pub use dsp::{AudioClip, ComplexSpectrogram, MagSpec, StftConfig};
pub use error::{Error, Result};
pub use inference::{MaskEstimator, SeparationConfig, SeparationResult};
pub use model::{Checkpoint, Network, NetworkConfig, Params};
pub use tensor::{Gradients, Scalar, Tape, Tensor, Var};
pub use training::{AdamState, TrainConfig};
