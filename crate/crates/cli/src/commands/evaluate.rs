//! `eval` and `sweep`: run every (protocol, method) cell and emit the
//! per-episode CSV plus summary statistics.

use super::{backbone_path, ensure_out_dir, fmt_f64, load_run_dataset, run_split, write_text};
use crate::config::{Protocol, RunConfig};
use crate::manifest::ManifestWriter;
use fewshot_core::adapt::{evaluate_episode, AdaptConfig, EpisodeResult, Method};
use fewshot_core::backbone::{load_backbone, BackboneParams};
use fewshot_core::datakit::{load_episodes, sample_episode, Episode};
use fewshot_core::metrics::{summarize, SummaryStats};
use fewshot_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Evaluates one method over a protocol's episodes, optionally in
/// parallel. Episodes are independent (each evaluation deep-copies the
/// backbone) and results come back in episode order regardless of
/// worker scheduling, so worker count never changes the output.
pub fn evaluate_episodes(
    backbone: &BackboneParams,
    episodes: &[Episode],
    method: Method,
    adapt: &AdaptConfig,
    workers: usize,
) -> Result<Vec<EpisodeResult>> {
    if workers <= 1 {
        return episodes
            .iter()
            .map(|e| evaluate_episode(backbone, e, method, adapt))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        episodes
            .par_iter()
            .map(|e| evaluate_episode(backbone, e, method, adapt))
            .collect()
    })
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    way: u32,
    support_shot: u32,
    query_shot: u32,
    method: Method,
    stats: SummaryStats,
}

/// `eval`: every method over every protocol's episode file.
pub fn cmd_eval(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let ckpt = backbone_path(out_dir);
    let protocols = config.eval.protocols();
    let mut inputs = vec![ckpt.clone()];
    for p in &protocols {
        inputs.push(out_dir.join(format!("{}.fsep", p.file_stem())));
    }
    let manifest = ManifestWriter::begin(out_dir, "eval", config, &inputs)?;

    let backbone = load_backbone(&ckpt)?;
    if backbone.input_dim() != config.dataset.dim {
        return Err(Error::Config(format!(
            "checkpoint input dim {} does not match dataset dim {}",
            backbone.input_dim(),
            config.dataset.dim
        )));
    }

    let mut csv = String::from("episode,way,support_shot,query_shot,method,accuracy\n");
    let mut summaries = Vec::new();
    for protocol in &protocols {
        let episodes = load_episodes(&out_dir.join(format!("{}.fsep", protocol.file_stem())))?;
        for &method in &config.eval.methods {
            let results = evaluate_episodes(
                &backbone,
                &episodes,
                method,
                &config.adapt,
                config.eval.workers,
            )?;
            for (i, r) in results.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{},{},{},{},{}\n",
                    protocol.way,
                    protocol.support_shot,
                    protocol.query_shot,
                    method.name(),
                    fmt_f64(r.accuracy)
                ));
            }
            let accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
            summaries.push(SummaryRow {
                way: protocol.way,
                support_shot: protocol.support_shot,
                query_shot: protocol.query_shot,
                method,
                stats: summarize(&accuracies)?,
            });
        }
    }

    let csv_path = out_dir.join("eval.csv");
    write_text(&csv_path, &csv)?;
    let summary_path = out_dir.join("eval_summary.json");
    let summary_text = serde_json::to_string_pretty(&summaries)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    write_text(&summary_path, &summary_text)?;

    let outputs = vec![csv_path, summary_path];
    manifest.finish(&outputs)?;
    Ok(outputs)
}

/// `sweep`: one evaluation per axis value with everything else fixed.
pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let ckpt = backbone_path(out_dir);
    let ds_path = config
        .dataset
        .path
        .clone()
        .unwrap_or_else(|| super::dataset_path(out_dir));
    let manifest = ManifestWriter::begin(out_dir, "sweep", config, &[ckpt.clone(), ds_path])?;

    let backbone = load_backbone(&ckpt)?;
    let dataset = load_run_dataset(config, out_dir)?;
    let split = run_split(config, &dataset)?;

    let mut csv = String::from("axis,value,method,mean,std,ci95\n");
    for &value in &config.sweep.values {
        let protocol: Protocol = config.sweep.protocol_at(value);
        if protocol.way as usize > split.test.len() {
            return Err(Error::Config(format!(
                "sweep value {value} infeasible: way={} exceeds {} test classes",
                protocol.way,
                split.test.len()
            )));
        }
        let episodes: Vec<Episode> = (0..config.sweep.episodes)
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
        for &method in &config.eval.methods {
            let results = evaluate_episodes(
                &backbone,
                &episodes,
                method,
                &config.adapt,
                config.eval.workers,
            )?;
            let accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
            let stats = summarize(&accuracies)?;
            csv.push_str(&format!(
                "{},{value},{},{},{},{}\n",
                config.sweep.axis.name(),
                method.name(),
                fmt_f64(stats.mean),
                fmt_f64(stats.std),
                fmt_f64(stats.ci95_half_width)
            ));
        }
    }

    let csv_path = out_dir.join("sweep.csv");
    write_text(&csv_path, &csv)?;
    let outputs = vec![csv_path];
    manifest.finish(&outputs)?;
    Ok(outputs)
}
