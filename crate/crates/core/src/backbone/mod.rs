//! Desk-scale backbone: an MLP over feature vectors producing one logit
//! per meta-training class, plus the cross-entropy pre-training
//! procedure and checkpoint files.

mod checkpoint;
mod model;
mod pretrain;

pub use checkpoint::{load_backbone, save_backbone, save_backbone_with_sidecar, sidecar_path};
pub use model::{BackboneParams, BatchNormLayer, BoundBackbone, ForwardNodes, HiddenBlock, LinearLayer};
pub use pretrain::{
    cross_entropy_smoothed, mix_with_lambda, mixup, pretrain, smooth_labels, PretrainConfig,
    PretrainOutcome,
};
