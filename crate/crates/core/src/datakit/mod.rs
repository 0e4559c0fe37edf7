//! Dataset representation, class splits, synthetic data, reproducible
//! N-way K-shot episode sampling, and bit-exact binary serialization.
//!
//! All randomness flows through seeded ChaCha streams with a documented
//! draw order, so datasets, splits, and minted episode files are
//! identical across runs and platforms.

pub(crate) mod binfmt;
mod dataset;
mod episode;
mod files;
pub mod rng;
mod synthetic;

pub use dataset::{ClassSplit, Dataset, SplitFractions};
pub use episode::{augment, sample_episode, Episode};
pub use files::{load_dataset, load_episodes, read_dataset_csv, save_dataset, save_episodes};
pub use synthetic::{make_synthetic, SyntheticSpec};
