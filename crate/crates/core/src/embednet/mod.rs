//! The trainable projection head: features → hidden (relu) → embedding →
//! class logits, with exact backpropagation, SGD with decoupled bias handling,
//! and max-norm projection.

pub mod checkpoint;
pub mod head;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_checked, save_checkpoint, Checkpoint, SeedEntry, StageTag,
};
pub use head::{
    backward, embed, forward, init_head, max_row_norm, maxnorm_project, maxnorm_project_scoped,
    sgd_step, sgd_step_masked, ForwardCache, GradientSet, HeadDims, HeadParams, LayerMask,
    MaxNormScope,
};
