//! The dual-branch expression network, its building blocks and tooling.

mod checkpoint;
mod config;
mod count;
mod gradcam;
mod layers;
mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{FusionStrategy, Modality, ModelConfig, Stage};
pub use count::{count_params, ParamCount};
pub use gradcam::{gradcam, gradcam_on_tape, min_max_normalize, upsample_bilinear};
pub use layers::{
    adaptive_fuse, head_forward, iwc_weights, ma_forward, residual_block_forward, stem_forward, Ctx,
};
pub use net::{AfNet, ModelInput, ATTENTION_INIT_STD};
