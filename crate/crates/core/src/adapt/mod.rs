//! Episode adaptation: support-based classifier initialization,
//! fine-tuning on the labeled supports, transductive fine-tuning that
//! additionally minimizes the prediction entropy of the unlabeled
//! queries, and per-episode evaluation.

mod eval;
mod head;
mod tune;

pub use eval::{evaluate_episode, EpisodeResult, Method};
pub use head::{
    embed_eval, embed_nodes, head_from_outputs, head_logits_nodes, support_init, HeadInput,
    HeadParams,
};
pub use tune::{finetune, transductive_finetune, AdaptConfig, AdaptTraces, AdaptedModel};
