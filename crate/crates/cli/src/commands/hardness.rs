//! `hardness`: score every evaluated episode, join with the accuracy
//! results, and fit the accuracy-vs-hardness regression per method.

use super::{backbone_path, ensure_out_dir, fmt_f64, write_text};
use crate::config::RunConfig;
use crate::manifest::ManifestWriter;
use fewshot_core::adapt::Method;
use fewshot_core::backbone::load_backbone;
use fewshot_core::datakit::load_episodes;
use fewshot_core::metrics::{correlate, fit_hardness_curve, hardness, ReferenceExtractor, RegressionFit};
use fewshot_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Accuracy rows parsed back from `eval.csv`, keyed by
/// (way, s, q, episode index, method name).
type AccuracyTable = BTreeMap<(u32, u32, u32, u32, String), f64>;

fn parse_eval_csv(path: &Path) -> Result<AccuracyTable> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut table = AccuracyTable::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format {
                path: path.display().to_string(),
                detail: format!("line {}: expected 6 columns", lineno + 1),
            });
        }
        let parse_u32 = |s: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::Format {
                path: path.display().to_string(),
                detail: format!("line {}: bad integer '{s}'", lineno + 1),
            })
        };
        let episode = parse_u32(fields[0])?;
        let way = parse_u32(fields[1])?;
        let s = parse_u32(fields[2])?;
        let q = parse_u32(fields[3])?;
        let accuracy: f64 = fields[5].parse().map_err(|_| Error::Format {
            path: path.display().to_string(),
            detail: format!("line {}: bad accuracy '{}'", lineno + 1, fields[5]),
        })?;
        table.insert((way, s, q, episode, fields[4].to_string()), accuracy);
    }
    Ok(table)
}

#[derive(Debug, Serialize)]
struct MethodFit {
    method: Method,
    fit: RegressionFit,
    pearson_r: f64,
    degenerate_episodes: usize,
}

/// Joined rows and fits. Hardness is method-independent; the join
/// repeats it against each method's accuracy so every row is
/// self-contained. Fits pool the episodes of all protocols per method.
pub fn cmd_hardness(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let reference_path = config
        .hardness
        .reference
        .clone()
        .unwrap_or_else(|| backbone_path(out_dir));
    let eval_csv = out_dir.join("eval.csv");
    let protocols = config.eval.protocols();
    let mut inputs = vec![reference_path.clone(), eval_csv.clone()];
    for p in &protocols {
        inputs.push(out_dir.join(format!("{}.fsep", p.file_stem())));
    }
    let manifest = ManifestWriter::begin(out_dir, "hardness", config, &inputs)?;

    let phi = ReferenceExtractor {
        backbone: load_backbone(&reference_path)?,
        head_input: config.adapt.head_input,
        relu_before_norm: config.adapt.relu_before_norm,
    };
    let accuracies = parse_eval_csv(&eval_csv)?;

    let mut csv = String::from("episode,way,support_shot,query_shot,method,accuracy,omega\n");
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut degenerate: BTreeMap<String, usize> = BTreeMap::new();

    for protocol in &protocols {
        let episodes = load_episodes(&out_dir.join(format!("{}.fsep", protocol.file_stem())))?;
        for (i, episode) in episodes.iter().enumerate() {
            let score = hardness(episode, &phi)?;
            for &method in &config.eval.methods {
                let key = (
                    protocol.way,
                    protocol.support_shot,
                    protocol.query_shot,
                    i as u32,
                    method.name().to_string(),
                );
                let accuracy = *accuracies.get(&key).ok_or_else(|| Error::Format {
                    path: eval_csv.display().to_string(),
                    detail: format!(
                        "missing accuracy row for way={} s={} q={} episode={i} method={}",
                        protocol.way,
                        protocol.support_shot,
                        protocol.query_shot,
                        method.name()
                    ),
                })?;
                csv.push_str(&format!(
                    "{i},{},{},{},{},{},{}\n",
                    protocol.way,
                    protocol.support_shot,
                    protocol.query_shot,
                    method.name(),
                    fmt_f64(accuracy),
                    fmt_f64(score.omega)
                ));
                points
                    .entry(method.name().to_string())
                    .or_default()
                    .push((score.omega, accuracy * 100.0));
                if score.degenerate {
                    *degenerate.entry(method.name().to_string()).or_default() += 1;
                }
            }
        }
    }

    let mut fits = Vec::new();
    for &method in &config.eval.methods {
        let pts = points.get(method.name()).cloned().unwrap_or_default();
        let fit = fit_hardness_curve(&pts)?;
        if fit.area.is_none() {
            eprintln!(
                "warning: method {} fit has non-negative slope; first-quadrant area undefined",
                method.name()
            );
        }
        fits.push(MethodFit {
            method,
            fit,
            pearson_r: correlate(&pts)?,
            degenerate_episodes: degenerate.get(method.name()).copied().unwrap_or(0),
        });
    }

    let csv_path = out_dir.join("hardness.csv");
    write_text(&csv_path, &csv)?;
    let json_path = out_dir.join("hardness.json");
    let json = serde_json::to_string_pretty(&fits)
        .map_err(|e| Error::Config(format!("fit serialization: {e}")))?;
    write_text(&json_path, &json)?;

    let outputs = vec![csv_path, json_path];
    manifest.finish(&outputs)?;
    Ok(outputs)
}
