//! Fine-grained object-property inference from 3D skeletal motion, and
//! property-conditioned motion transfer.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: a small reverse-mode AD engine over [`Tensor`]s plus Adam.
//! * [`skeleton`]: the 23-joint topology, motion files, local body frame,
//!   feature construction, augmentation, weak-perspective projection and
//!   cross-subject splits.
//! * [`synth`]: a procedural motion generator with known ground truth.
//! * [`classifier`]: graph convolution + attention-gated GRU property classifier.
//! * [`transfer`]: convolutional encoder/decoder with reconstruction and
//!   contrastive losses.
//! * [`cli`]: the command-line front end.

pub mod autodiff;
pub mod classifier;
pub mod cli;
mod error;
pub mod io;
pub mod rng;
pub mod skeleton;
pub mod synth;
mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::Tensor;
