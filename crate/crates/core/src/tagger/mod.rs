//! A small from-scratch token classifier and its training loop.

mod features;
mod loss;
mod model;
mod train;

pub use features::{bucket, fnv1a, EncodedSentence, BOUNDARY_TOKEN, SHAPE_FEATURES};
pub use loss::{soft_cross_entropy, LOG_FLOOR};
pub use model::{Gradients, Params, TaggerConfig, TaggerModel};
pub use train::{train, SoftDataset, SoftExample, TrainData, TrainReport};

pub(crate) use train::{run_epoch, shuffle_rng, BestTracker, Optimizer, Progress};
