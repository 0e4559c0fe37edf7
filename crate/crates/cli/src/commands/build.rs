//! Pipeline-building commands: dataset generation, backbone
//! pre-training, and episode minting.

use super::{
    backbone_path, dataset_path, ensure_out_dir, fmt_f64, load_run_dataset, run_split, write_text,
};
use crate::config::RunConfig;
use crate::manifest::ManifestWriter;
use fewshot_core::backbone::{pretrain, save_backbone_with_sidecar, sidecar_path};
use fewshot_core::datakit::{make_synthetic, read_dataset_csv, sample_episode, save_dataset, save_episodes};
use fewshot_core::{Error, Result};
use std::path::{Path, PathBuf};

/// `gen-data`: writes the dataset file (synthetic by default, CSV
/// import when `dataset.csv` is set).
pub fn cmd_gen_data(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let inputs: Vec<PathBuf> = config.dataset.csv.iter().cloned().collect();
    let manifest = ManifestWriter::begin(out_dir, "gen-data", config, &inputs)?;

    let dataset = match &config.dataset.csv {
        Some(csv) => read_dataset_csv(csv, "csv-import")?,
        None => make_synthetic(&config.dataset.synthetic_spec(config.master_seed))?,
    };
    let path = dataset_path(out_dir);
    save_dataset(&path, &dataset)?;

    let outputs = vec![path];
    manifest.finish(&outputs)?;
    Ok(outputs)
}

/// `pretrain`: fits the backbone on the train (or train + val) classes
/// and writes the checkpoint, its config-echo sidecar, and the
/// per-epoch loss trace CSV.
pub fn cmd_pretrain(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let ds_path = config
        .dataset
        .path
        .clone()
        .unwrap_or_else(|| dataset_path(out_dir));
    let manifest = ManifestWriter::begin(out_dir, "pretrain", config, &[ds_path.clone()])?;

    let dataset = load_run_dataset(config, out_dir)?;
    let split = run_split(config, &dataset)?;
    let pool = if config.pretrain.include_val_classes {
        split.train_plus_val()
    } else {
        split.train.clone()
    };
    let pretrain_config = config.pretrain.pretrain_config(config.master_seed);
    let outcome = pretrain(&dataset, &pool, &pretrain_config)?;

    let ckpt = backbone_path(out_dir);
    let echo = toml::to_string_pretty(&config.pretrain)
        .map_err(|e| Error::Config(format!("sidecar serialization: {e}")))?;
    let echo = format!(
        "# fewshot {} pretrain\n# master_seed = {}\n# pool_classes = {}\n# final_train_accuracy = {}\n{echo}",
        env!("CARGO_PKG_VERSION"),
        config.master_seed,
        pool.len(),
        outcome.final_train_accuracy,
    );
    save_backbone_with_sidecar(&ckpt, &outcome.backbone, &echo)?;

    let trace_path = out_dir.join("pretrain_loss.csv");
    let mut csv = String::from("epoch,train_loss,eval_loss\n");
    for (epoch, (train, eval)) in outcome
        .train_loss_trace
        .iter()
        .zip(&outcome.eval_loss_trace)
        .enumerate()
    {
        csv.push_str(&format!("{epoch},{},{}\n", fmt_f64(*train), fmt_f64(*eval)));
    }
    write_text(&trace_path, &csv)?;

    let outputs = vec![ckpt.clone(), sidecar_path(&ckpt), trace_path];
    manifest.finish(&outputs)?;
    Ok(outputs)
}

/// `episodes`: mints one FSEP file per protocol in the evaluation grid.
pub fn cmd_episodes(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let ds_path = config
        .dataset
        .path
        .clone()
        .unwrap_or_else(|| dataset_path(out_dir));
    let manifest = ManifestWriter::begin(out_dir, "episodes", config, &[ds_path.clone()])?;

    let dataset = load_run_dataset(config, out_dir)?;
    let split = run_split(config, &dataset)?;

    let mut outputs = Vec::new();
    for protocol in config.eval.protocols() {
        if protocol.way as usize > split.test.len() {
            return Err(Error::Config(format!(
                "grid entry way={} s={} q={} infeasible: only {} test classes",
                protocol.way,
                protocol.support_shot,
                protocol.query_shot,
                split.test.len()
            )));
        }
        let episodes: Vec<_> = (0..config.eval.episodes_per_protocol)
            .map(|i| {
                sample_episode(
                    &dataset,
                    &split.test,
                    protocol.way,
                    protocol.support_shot,
                    protocol.query_shot,
                    protocol.episode_seed(config.master_seed, i),
                )
            })
            .collect::<Result<_>>()?;
        let path = out_dir.join(format!("{}.fsep", protocol.file_stem()));
        save_episodes(&path, &episodes)?;
        outputs.push(path);
    }
    manifest.finish(&outputs)?;
    Ok(outputs)
}
