//! Run configuration: a flat TOML file with one section per pipeline
//! stage. Unknown keys are hard errors, and every random decision is
//! derived from the single `master_seed`, so a config file pins an
//! entire run.

use fewshot_core::adapt::{AdaptConfig, Method};
use fewshot_core::backbone::PretrainConfig;
use fewshot_core::datakit::{rng, SplitFractions, SyntheticSpec};
use fewshot_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable consulted for the default output root when the
/// config has no `out_dir`.
pub const OUT_ROOT_ENV: &str = "FEWSHOT_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub pretrain: PretrainSection,
    pub adapt: AdaptConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub hardness: HardnessSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            out_dir: None,
            dataset: DatasetSection::default(),
            split: SplitSection::default(),
            pretrain: PretrainSection::default(),
            adapt: AdaptConfig::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            hardness: HardnessSection::default(),
        }
    }
}

/// Dataset source: a synthetic spec (the default), a pre-built FSDS
/// file, or a CSV import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_classes: 20,
            dim: 16,
            samples_per_class: 50,
            center_scale: 3.0,
            noise_sigma: 1.0,
            path: None,
            csv: None,
        }
    }
}

impl DatasetSection {
    pub fn synthetic_spec(&self, master_seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_classes: self.n_classes,
            dim: self.dim,
            samples_per_class: self.samples_per_class,
            center_scale: self.center_scale,
            noise_sigma: self.noise_sigma,
            seed: rng::derive_seed(master_seed, "dataset"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train: 0.5,
            val: 0.2,
            test: 0.3,
        }
    }
}

impl SplitSection {
    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub mixup_alpha: f64,
    pub mixup_enabled: bool,
    pub momentum: f64,
    pub weight_decay: f64,
    pub cycles: Vec<usize>,
    pub augment_sigma: f64,
    /// Pre-train on train + val classes instead of train only.
    pub include_val_classes: bool,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            hidden: d.hidden,
            batch_size: d.batch_size,
            label_smoothing: d.label_smoothing,
            mixup_alpha: d.mixup_alpha,
            mixup_enabled: d.mixup_enabled,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            cycles: d.cycles,
            augment_sigma: d.augment_sigma,
            include_val_classes: false,
        }
    }
}

impl PretrainSection {
    pub fn pretrain_config(&self, master_seed: u64) -> PretrainConfig {
        PretrainConfig {
            hidden: self.hidden.clone(),
            batch_size: self.batch_size,
            label_smoothing: self.label_smoothing,
            mixup_alpha: self.mixup_alpha,
            mixup_enabled: self.mixup_enabled,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            cycles: self.cycles.clone(),
            augment_sigma: self.augment_sigma,
            seed: rng::derive_seed(master_seed, "pretrain"),
        }
    }
}

/// Evaluation grid: the cross product of ways, support shots, and query
/// shots, each protocol evaluated with every listed method under the
/// single shared adapt config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ways: Vec<u32>,
    pub support_shots: Vec<u32>,
    pub query_shots: Vec<u32>,
    pub episodes_per_protocol: u32,
    pub methods: Vec<Method>,
    pub workers: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ways: vec![5],
            support_shots: vec![1, 5],
            query_shots: vec![15],
            episodes_per_protocol: 200,
            methods: Method::ALL.to_vec(),
            workers: 1,
        }
    }
}

/// One few-shot protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub way: u32,
    pub support_shot: u32,
    pub query_shot: u32,
}

impl Protocol {
    pub fn file_stem(&self) -> String {
        format!("episodes_w{}_s{}_q{}", self.way, self.support_shot, self.query_shot)
    }

    /// Seed of episode `index` of this protocol; shared by `episodes`,
    /// `eval`, and `sweep`, so a sweep point at an eval protocol sees
    /// the same episodes.
    pub fn episode_seed(&self, master_seed: u64, index: u32) -> u64 {
        rng::derive_seed(
            master_seed,
            &format!(
                "episodes/w{}s{}q{}/{index}",
                self.way, self.support_shot, self.query_shot
            ),
        )
    }
}

impl EvalSection {
    pub fn protocols(&self) -> Vec<Protocol> {
        let mut out = Vec::new();
        for &way in &self.ways {
            for &support_shot in &self.support_shots {
                for &query_shot in &self.query_shots {
                    out.push(Protocol {
                        way,
                        support_shot,
                        query_shot,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Way,
    SupportShot,
    QueryShot,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Way => "way",
            SweepAxis::SupportShot => "support_shot",
            SweepAxis::QueryShot => "query_shot",
        }
    }
}

/// One-axis sweep around a base protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<u32>,
    pub way: u32,
    pub support_shot: u32,
    pub query_shot: u32,
    pub episodes: u32,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::QueryShot,
            values: vec![1, 5, 15, 30],
            way: 5,
            support_shot: 1,
            query_shot: 15,
            episodes: 100,
        }
    }
}

impl SweepSection {
    pub fn protocol_at(&self, value: u32) -> Protocol {
        let mut p = Protocol {
            way: self.way,
            support_shot: self.support_shot,
            query_shot: self.query_shot,
        };
        match self.axis {
            SweepAxis::Way => p.way = value,
            SweepAxis::SupportShot => p.support_shot = value,
            SweepAxis::QueryShot => p.query_shot = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HardnessSection {
    /// Reference extractor checkpoint; defaults to this run's backbone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.fractions().validate()?;
        self.adapt.validate()?;
        if self.eval.ways.is_empty()
            || self.eval.support_shots.is_empty()
            || self.eval.query_shots.is_empty()
        {
            return Err(Error::Config("eval grid axes must be non-empty".into()));
        }
        if self.eval.methods.is_empty() {
            return Err(Error::Config("eval methods must be non-empty".into()));
        }
        if self.eval.episodes_per_protocol == 0 {
            return Err(Error::Config("episodes_per_protocol must be >= 1".into()));
        }
        if self.eval.query_shots.iter().any(|&q| q == 0) {
            return Err(Error::Config("evaluation needs query_shot >= 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep values must be non-empty".into()));
        }
        if self.eval.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Output directory resolution: config `out_dir`, else the
    /// `FEWSHOT_OUT_ROOT` environment variable, else `./runs`.
    pub fn resolve_out_dir(&self, override_out: Option<&Path>) -> PathBuf {
        if let Some(o) = override_out {
            return o.to_path_buf();
        }
        if let Some(o) = &self.out_dir {
            return o.clone();
        }
        if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
            return PathBuf::from(root);
        }
        PathBuf::from("runs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "master_seed = 1\n[eval]\nwais = [5]\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
        let text = "master_sed = 1\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn grid_is_the_cross_product() {
        let eval = EvalSection {
            ways: vec![5, 10],
            support_shots: vec![1, 5],
            query_shots: vec![15],
            ..EvalSection::default()
        };
        let protocols = eval.protocols();
        assert_eq!(protocols.len(), 4);
        assert!(protocols.contains(&Protocol {
            way: 10,
            support_shot: 5,
            query_shot: 15
        }));
    }

    #[test]
    fn sweep_axis_substitutes_one_field() {
        let sweep = SweepSection::default();
        let p = sweep.protocol_at(30);
        assert_eq!(p.query_shot, 30);
        assert_eq!(p.way, 5);
        assert_eq!(p.support_shot, 1);
    }

    #[test]
    fn episode_seeds_differ_across_protocols_and_indices() {
        let a = Protocol {
            way: 5,
            support_shot: 1,
            query_shot: 15,
        };
        let b = Protocol {
            way: 10,
            support_shot: 1,
            query_shot: 15,
        };
        assert_ne!(a.episode_seed(1, 0), a.episode_seed(1, 1));
        assert_ne!(a.episode_seed(1, 0), b.episode_seed(1, 0));
        assert_eq!(a.episode_seed(1, 3), a.episode_seed(1, 3));
    }
}
