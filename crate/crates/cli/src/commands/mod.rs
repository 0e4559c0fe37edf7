//! Command implementations shared by the binary and the test suites.

mod build;
mod evaluate;
mod hardness;

pub use build::{cmd_episodes, cmd_gen_data, cmd_pretrain};
pub use evaluate::{cmd_eval, cmd_sweep, evaluate_episodes};
pub use hardness::cmd_hardness;

use crate::config::RunConfig;
use fewshot_core::datakit::{load_dataset, ClassSplit, Dataset};
use fewshot_core::{Error, Result};
use std::path::{Path, PathBuf};

pub fn dataset_path(out_dir: &Path) -> PathBuf {
    out_dir.join("dataset.fsds")
}

pub fn backbone_path(out_dir: &Path) -> PathBuf {
    out_dir.join("backbone.fsbb")
}

pub fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))
}

/// Loads the run's dataset: an explicit `dataset.path` wins, otherwise
/// the file produced by `gen-data` in the output directory.
pub fn load_run_dataset(config: &RunConfig, out_dir: &Path) -> Result<Dataset> {
    let path = config
        .dataset
        .path
        .clone()
        .unwrap_or_else(|| dataset_path(out_dir));
    load_dataset(&path)
}

/// The run's class split, derived from the master seed.
pub fn run_split(config: &RunConfig, dataset: &Dataset) -> Result<ClassSplit> {
    ClassSplit::new(
        dataset,
        config.split.fractions(),
        fewshot_core::datakit::rng::derive_seed(config.master_seed, "split"),
    )
}

/// Deterministic shortest-roundtrip float formatting for CSV cells.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
