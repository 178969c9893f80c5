//! Object-property classifier: two graph convolutions over the joint tree,
//! an attention-gated GRU over time and two dense layers.
//!
//! Inputs are `[T, J, D]` feature tensors, normally body-frame positions and
//! velocities resampled to 30 frames. [`train_classifier`] augments the
//! training clips, normalises each channel by its RMS, trains with
//! class-balanced minibatches and keeps the epoch with the lowest validation
//! error.

mod attention;
mod metrics;
mod model;
mod neighborhood;
mod network;
mod train;

pub use attention::{attention_colors, write_attention_csv};
pub use metrics::{pairwise_accuracy, Metrics};
pub use model::{argmax, prepare_sequence, Classifier, ClassifierHeader, InputKind};
pub use neighborhood::NeighborhoodSpec;
pub use network::{
    attention_gate, classify_forward, graph_conv, gru_step, AttentionNodes, ClassifierDims, ClassifierNodes,
    ForwardNodes, GruNodes,
};
pub use train::{
    channel_rms, evaluate, load_split, loss_and_error, prepare_projected_samples, prepare_samples, prepare_training_set, train_classifier,
    train_from_manifest, train_on_samples, EpochLog, Sample, TrainConfig, TrainOutcome,
};
