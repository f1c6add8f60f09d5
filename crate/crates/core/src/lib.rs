pub mod corpus;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete double-precision aliases for the generic core types.
pub type Waveform = signal::Waveform<f64>;
pub type Spectrogram = signal::Spectrogram<f64>;
pub type ArticulatoryTrack = corpus::ArticulatoryTrack<f64>;
pub type CorpusItem = corpus::CorpusItem<f64>;
pub type Tensor = nn::Tensor<f64>;
pub type Model = models::Model<f64>;
