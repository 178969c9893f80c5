//! Reverse-mode automatic differentiation over dense `f64` tensors, with Adam.

mod adam;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, rel_error, GradCheckReport, REL_ERR_FLOOR};
pub use graph::{Gradients, Graph, NodeId, Op, PROB_FLOOR};
pub use params::{Checkpoint, CheckpointMeta, ParamStore, METADATA_KEY};

