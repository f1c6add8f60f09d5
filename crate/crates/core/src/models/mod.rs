//! The twelve enhancement systems: specs, construction, fusion, training,
//! enhancement and checkpoints.

mod checkpoint;
mod model;
mod spec;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use model::{
    build_model, enhance, enhance_for_speaker, fuse, oracle_magnitude_enhance, spectral_target, Example, Features,
    Model,
};
pub use spec::{Backbone, FusionStrategy, ModelSpec, ShapeReport};
pub use train::{fit_norm, train, train_items, TrainConfig, TrainLog, DEFAULT_CLIP_NORM};
