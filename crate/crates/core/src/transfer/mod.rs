//! Property-conditioned motion transfer.
//!
//! Clips are resampled to 64 frames and encoded as body-frame joint
//! positions plus root velocity and foot contacts. A stack of stride-2
//! convolutions maps them to a short latent sequence; the decoder
//! upsamples it back, conditioned on a one-hot target property. Training
//! minimises the reconstruction error towards the same performer's clip at
//! the target property, plus `λ` times a contrastive term that pulls a
//! latent towards the same performer at another property and pushes it at
//! least `α` away from another performer at the same property.

mod latent;
mod network;
mod repr;
mod train;
mod triplets;

pub use latent::{linear_probe_accuracy, pca_2d, write_latent_csv, LatentPoint, ProbeConfig};
pub use network::{
    contrastive_loss, decode, encode, one_hot_tiled, reconstruction_loss, total_loss, TransferDims, TransferNodes,
};
pub use repr::{
    reassemble, to_transfer_input, transfer_channels, TransferInput, CONTACTS_KEY, GLOBAL_CHANNELS, TRANSFER_FRAMES,
};
pub use train::{
    train_transfer, triplet_graph, TransferConfig, TransferEpochLog, TransferHeader, TransferLosses, TransferModel,
    TransferOutcome,
};
pub use triplets::{sample_triplets, TransferCorpus, TripletBatch};
