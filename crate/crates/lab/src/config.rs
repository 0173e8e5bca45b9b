//! Experiment configuration, read from a sectioned TOML file. Every field
//! has a default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use genil_core::baselines::BcConfig;
use genil_core::genetics::GaConfig;
use genil_core::policy::CemConfig;
use genil_core::reward::TrainConfig;
use genil_core::{EnvKind, EnvSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    /// Overrides the environment's default horizon.
    pub horizon: Option<usize>,
    pub discount: f64,
    pub stream: u64,
    pub good_quality: f64,
    pub bad_quality: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { kind: EnvKind::GridNav, horizon: None, discount: 0.99, stream: 0, good_quality: 0.1, bad_quality: 0.5 }
    }
}

impl EnvSection {
    pub fn spec(&self) -> EnvSpec {
        let mut spec = EnvSpec::for_kind(self.kind);
        if let Some(h) = self.horizon {
            spec.horizon = h;
        }
        spec.discount = self.discount;
        spec.stream = self.stream;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_snippets: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_pairs: usize,
    pub min_margin: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { n_snippets: 1000, min_len: 20, max_len: 40, n_pairs: 2000, min_margin: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// Value iteration stopping threshold on the sup-norm residual.
    pub tol: f64,
    pub cem: CemConfig,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { tol: 1e-8, cem: CemConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub qualities: Vec<f64>,
    pub n_per_quality: usize,
    pub n_bins: usize,
    pub n_trials: usize,
    pub n_models: usize,
    pub n_eval_episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            qualities: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            n_per_quality: 10,
            n_bins: 8,
            n_trials: 5,
            n_models: 3,
            n_eval_episodes: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// A step size `s` allows crossover segments of 1 to `s` steps.
    pub step_sizes: Vec<usize>,
    pub n_trials: usize,
    pub n_models: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { step_sizes: vec![1, 2, 5, 10, 20], n_trials: 5, n_models: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    /// Demonstration qualities for the multi-level ranking baseline.
    pub trex_qualities: Vec<f64>,
    pub trex_per_quality: usize,
    pub drex_noise_levels: Vec<f64>,
    pub drex_per_level: usize,
    pub bc: BcConfig,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        Self {
            trex_qualities: vec![0.5, 0.4, 0.3, 0.2, 0.1],
            trex_per_quality: 2,
            drex_noise_levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            drex_per_level: 5,
            bc: BcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub env: EnvSection,
    pub ga: GaConfig,
    pub data: DataSection,
    pub train: TrainConfig,
    pub policy: PolicySection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub baselines: BaselinesSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            env: EnvSection::default(),
            ga: GaConfig::default(),
            data: DataSection::default(),
            train: TrainConfig { learning_rate: 1e-3, l2: 0.1, ..TrainConfig::default() },
            policy: PolicySection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            baselines: BaselinesSection::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("reading config {}: {e}", path.display())))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spec(&self) -> EnvSpec {
        self.env.spec()
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: genil_core::Result<()>| r.map_err(|e| bad(e.to_string()));
        wrap(self.spec().validate())?;
        wrap(self.ga.validate())?;
        wrap(self.train.validate())?;
        wrap(self.baselines.bc.validate())?;
        let q = |x: f64| (0.0..=1.0).contains(&x);
        if !q(self.env.good_quality) || !q(self.env.bad_quality) || self.env.good_quality >= self.env.bad_quality {
            return Err(bad("env: need 0 <= good_quality < bad_quality <= 1"));
        }
        let d = &self.data;
        if d.n_snippets < 2 || d.min_len == 0 || d.min_len > d.max_len || d.n_pairs == 0 || !(d.min_margin > 0.0) {
            return Err(bad("data: need n_snippets >= 2, 1 <= min_len <= max_len, n_pairs >= 1, min_margin > 0"));
        }
        if !(self.policy.tol > 0.0) {
            return Err(bad("policy: tol must be positive"));
        }
        let c = &self.policy.cem;
        if c.population < 8 || !(c.elite_frac > 0.0 && c.elite_frac < 1.0) || c.episodes == 0 {
            return Err(bad("policy.cem: need population >= 8, 0 < elite_frac < 1, episodes >= 1"));
        }
        let e = &self.eval;
        if e.qualities.is_empty() || !e.qualities.iter().all(|x| q(*x)) || e.n_per_quality == 0 {
            return Err(bad("eval: need qualities in [0, 1] and n_per_quality >= 1"));
        }
        if e.n_bins < 2 || e.n_trials == 0 || e.n_models == 0 || e.n_eval_episodes == 0 {
            return Err(bad("eval: need n_bins >= 2 and positive trial, model and episode counts"));
        }
        let s = &self.sweep;
        if s.step_sizes.len() < 2 || s.step_sizes.contains(&0) || s.n_trials < 2 || s.n_models < 2 {
            return Err(bad("sweep: need >= 2 positive step sizes, n_trials >= 2, n_models >= 2"));
        }
        let b = &self.baselines;
        wrap(
            genil_core::baselines::BaselineSpec::Trex {
                qualities: b.trex_qualities.clone(),
                n_per_quality: b.trex_per_quality,
            }
            .validate(),
        )?;
        wrap(
            genil_core::baselines::BaselineSpec::Drex {
                noise_levels: b.drex_noise_levels.clone(),
                n_per_level: b.drex_per_level,
                bc: b.bc.clone(),
            }
            .validate(),
        )?;
        Ok(())
    }
}
