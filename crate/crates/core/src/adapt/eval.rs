//! Per-episode evaluation: build a fresh adapted model from the shared
//! backbone, adapt it per the chosen method, and score the queries.

use super::head::support_init;
use super::tune::{finetune, transductive_finetune, AdaptConfig, AdaptTraces, AdaptedModel};
use crate::backbone::BackboneParams;
use crate::datakit::Episode;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Adaptation method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Support-based initialization only; no gradient updates.
    InitOnly,
    /// Support cross-entropy fine-tuning.
    Finetune,
    /// Support cross-entropy plus query-entropy fine-tuning.
    Transductive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::InitOnly, Method::Finetune, Method::Transductive];

    pub fn name(self) -> &'static str {
        match self {
            Method::InitOnly => "init_only",
            Method::Finetune => "finetune",
            Method::Transductive => "transductive",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init_only" => Ok(Method::InitOnly),
            "finetune" => Ok(Method::Finetune),
            "transductive" => Ok(Method::Transductive),
            other => Err(crate::Error::Config(format!(
                "unknown method '{other}' (expected init_only, finetune, or transductive)"
            ))),
        }
    }
}

/// Outcome of one episode evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub method: Method,
    pub accuracy: f64,
    /// Predicted label per query, argmax with lowest-index tie-break.
    pub predictions: Vec<u32>,
    /// Class probability vector per query.
    pub probabilities: Vec<Vec<f64>>,
    pub traces: AdaptTraces,
    pub duration_secs: f64,
}

/// Evaluates one episode. The backbone is deep-copied, so concurrent
/// calls over different episodes never share mutable state, and query
/// labels are read only here, never by the adaptation routines.
pub fn evaluate_episode(
    backbone: &BackboneParams,
    episode: &Episode,
    method: Method,
    config: &AdaptConfig,
) -> Result<EpisodeResult> {
    let started = Instant::now();
    let head = support_init(
        backbone,
        &episode.support,
        episode.way as usize,
        config.head_input,
        config.relu_before_norm,
    )?;
    let mut model = AdaptedModel {
        backbone: backbone.clone(),
        head,
        head_input: config.head_input,
        relu_before_norm: config.relu_before_norm,
    };

    let query_x = episode.query_matrix();
    let traces = match method {
        Method::InitOnly => AdaptTraces::default(),
        Method::Finetune => finetune(&mut model, &episode.support, config)?,
        Method::Transductive => {
            transductive_finetune(&mut model, &episode.support, &query_x, config)?
        }
    };

    let probs = model.predict(&query_x, config.temperature)?;
    let mut predictions = Vec::with_capacity(probs.rows());
    let mut probabilities = Vec::with_capacity(probs.rows());
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        predictions.push(best as u32);
        probabilities.push(row.to_vec());
    }
    let labels = episode.query_labels();
    let correct = predictions
        .iter()
        .zip(&labels)
        .filter(|(p, y)| p == y)
        .count();

    Ok(EpisodeResult {
        method,
        accuracy: correct as f64 / labels.len().max(1) as f64,
        predictions,
        probabilities,
        traces,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}
