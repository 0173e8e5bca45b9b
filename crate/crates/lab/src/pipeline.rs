//! In-memory experiment stages shared by the CLI commands.
//!
//! Every random stream is derived from the base seed, a stage label and the
//! `(trial, model)` coordinates, so cells can run in any order or in
//! parallel and still produce the same numbers. Cell `(0, 0)` of the GenIL
//! grid is exactly the single pipeline written out by the stage commands.

use std::fmt;

use anyhow::{Context, Result};
use genil_core::baselines::{self, BcConfig};
use genil_core::env::{make_demo_pair, make_eval_set, Policy};
use genil_core::genetics::{self, GaConfig};
use genil_core::metrics::{self, ExtrapolationReport, PolicyRow};
use genil_core::policy::{self, PolicyArtifact};
use genil_core::ranking::{self, SnippetPair};
use genil_core::reward::{self, RewardFn, RewardModel, TrainConfig};
use genil_core::seed::derive;
use genil_core::{EnvKind, RankedDataset, Trajectory};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    GenIL,
    Trex2,
    TrexMulti,
    Drex,
    Bc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::GenIL, Method::Trex2, Method::TrexMulti, Method::Drex, Method::Bc];

    pub fn name(self) -> &'static str {
        match self {
            Method::GenIL => "GenIL",
            Method::Trex2 => "T-REX-2",
            Method::TrexMulti => "T-REX-multi",
            Method::Drex => "D-REX",
            Method::Bc => "BC",
        }
    }

    pub fn learns_reward(self) -> bool {
        self != Method::Bc
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn demos(cfg: &ExperimentConfig) -> Result<(Trajectory, Trajectory)> {
    let spec = cfg.spec();
    Ok(make_demo_pair(&spec, cfg.env.good_quality, cfg.env.bad_quality, derive(cfg.seed, "demos", &[]))?)
}

pub fn eval_set(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let e = &cfg.eval;
    Ok(make_eval_set(&cfg.spec(), &e.qualities, e.n_per_quality, derive(cfg.seed, "eval-set", &[]))?)
}

pub fn genil_dataset(
    cfg: &ExperimentConfig,
    ga: &GaConfig,
    good: &Trajectory,
    bad: &Trajectory,
    trial: usize,
) -> Result<RankedDataset> {
    let (g, b) = genetics::relabel_demos(good, bad, cfg.env.discount, ga)?;
    Ok(genetics::reproduce(&g, &b, ga, derive(cfg.seed, "reproduce", &[trial as u64]))?)
}

fn bc_config(cfg: &ExperimentConfig, label: &str, coords: &[u64]) -> BcConfig {
    BcConfig { seed: derive(cfg.seed, label, &[&[cfg.baselines.bc.seed], coords].concat()), ..cfg.baselines.bc.clone() }
}

/// Ranked dataset a reward-learning method trains on in `trial`.
pub fn method_dataset(
    cfg: &ExperimentConfig,
    method: Method,
    good: &Trajectory,
    bad: &Trajectory,
    trial: usize,
) -> Result<RankedDataset> {
    let spec = cfg.spec();
    let b = &cfg.baselines;
    let t = trial as u64;
    match method {
        Method::GenIL => genil_dataset(cfg, &cfg.ga, good, bad, trial),
        Method::Trex2 => Ok(baselines::build_trex2_dataset(good, bad, spec.discount, derive(cfg.seed, "trex2", &[t]))?),
        Method::TrexMulti => Ok(baselines::build_trex_dataset(
            &spec,
            &b.trex_qualities,
            b.trex_per_quality,
            derive(cfg.seed, "trex", &[t]),
        )?),
        Method::Drex => {
            let bc = baselines::train_bc(&[good.clone(), bad.clone()], &bc_config(cfg, "drex-bc", &[t]))?;
            Ok(baselines::build_drex_dataset(&bc, &spec, &b.drex_noise_levels, b.drex_per_level, derive(cfg.seed, "drex", &[t]))?)
        }
        Method::Bc => anyhow::bail!("behavioural cloning does not learn from a ranked dataset"),
    }
}

pub struct TrainedReward {
    pub model: RewardModel,
    pub pairs: Vec<SnippetPair>,
    pub losses: Vec<f64>,
    pub train_config: TrainConfig,
}

pub fn train_reward(cfg: &ExperimentConfig, ds: &RankedDataset, trial: usize, model: usize) -> Result<TrainedReward> {
    let d = &cfg.data;
    let c = [trial as u64, model as u64];
    let snippets = ranking::subsample(ds, d.n_snippets, d.min_len, d.max_len, derive(cfg.seed, "snippets", &c))?;
    let pairs = ranking::make_pairs(&snippets, d.n_pairs, d.min_margin, derive(cfg.seed, "pairs", &c))?;
    let tc = TrainConfig { seed: derive(cfg.seed, "train", &[c[0], c[1], cfg.train.seed]), ..cfg.train.clone() };
    let init = tc.init_model(cfg.spec().feature_dim)?;
    let out = reward::train(init, &pairs, ds, &tc)?;
    Ok(TrainedReward { model: out.model, pairs, losses: out.losses, train_config: tc })
}

/// Value iteration on GridNav, cross-entropy search on PointChase.
pub fn derive_policy(cfg: &ExperimentConfig, reward: &dyn RewardFn, trial: usize, model: usize) -> Result<PolicyArtifact> {
    let spec = cfg.spec();
    match spec.kind {
        EnvKind::GridNav => Ok(policy::value_iteration(&spec, reward, spec.discount, cfg.policy.tol)?),
        EnvKind::PointChase => {
            let seed = derive(cfg.seed, "cem", &[trial as u64, model as u64]);
            Ok(policy::cem_search(&spec, reward, &cfg.policy.cem, seed)?.policy)
        }
    }
}

/// Mean ground-truth return over the configured evaluation episodes.
pub fn policy_return(cfg: &ExperimentConfig, p: &dyn Policy, trial: usize, model: usize) -> Result<f64> {
    let seed = derive(cfg.seed, "evaluate", &[trial as u64, model as u64]);
    Ok(policy::evaluate_policy(p, &cfg.spec(), cfg.eval.n_eval_episodes, seed)?.mean)
}

pub fn extrapolation(cfg: &ExperimentConfig, model: &RewardModel, eval: &[Trajectory]) -> Result<ExtrapolationReport> {
    Ok(metrics::extrapolation_report(model, eval, cfg.env.discount, cfg.eval.n_bins)?)
}

/// Outcome of one method over a `trials x models` grid.
pub struct MethodRun {
    pub method: Method,
    /// `returns[trial][model]`.
    pub returns: Vec<Vec<f64>>,
    /// Extrapolation of the cell `(0, 0)` reward model.
    pub report: Option<ExtrapolationReport>,
    pub warnings: Vec<String>,
}

impl MethodRun {
    pub fn row(&self) -> Result<PolicyRow> {
        Ok(metrics::policy_table_row(self.method.name(), &self.returns)?)
    }
}

struct CellOut {
    gt_return: f64,
    report: Option<ExtrapolationReport>,
}

fn reward_cell(
    cfg: &ExperimentConfig,
    ds: &RankedDataset,
    eval: Option<&[Trajectory]>,
    trial: usize,
    model: usize,
) -> Result<CellOut> {
    let trained = train_reward(cfg, ds, trial, model)?;
    let p = derive_policy(cfg, &trained.model, trial, model)?;
    let gt_return = policy_return(cfg, &p, trial, model)?;
    let report = match eval {
        Some(e) if trial == 0 && model == 0 => Some(extrapolation(cfg, &trained.model, e)?),
        _ => None,
    };
    Ok(CellOut { gt_return, report })
}

/// Run `method` on every `(trial, model)` cell. `ga` overrides the GenIL
/// reproduction settings (used by the step-size sweep).
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    ga: &GaConfig,
    good: &Trajectory,
    bad: &Trajectory,
    eval: Option<&[Trajectory]>,
    n_trials: usize,
    n_models: usize,
) -> Result<MethodRun> {
    let per_trial: Vec<(Vec<CellOut>, Vec<String>)> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<(Vec<CellOut>, Vec<String>)> {
            if method == Method::Bc {
                let demos = [good.clone(), bad.clone()];
                let cells = (0..n_models)
                    .into_par_iter()
                    .map(|model| {
                        let bc = baselines::train_bc(&demos, &bc_config(cfg, "bc", &[trial as u64, model as u64]))?;
                        Ok(CellOut { gt_return: policy_return(cfg, &bc, trial, model)?, report: None })
                    })
                    .collect::<Result<Vec<_>>>()?;
                return Ok((cells, Vec::new()));
            }
            let ds = match method {
                Method::GenIL => genil_dataset(cfg, ga, good, bad, trial)?,
                _ => method_dataset(cfg, method, good, bad, trial)?,
            };
            let cells = (0..n_models)
                .into_par_iter()
                .map(|model| reward_cell(cfg, &ds, eval, trial, model))
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("{method} trial {trial}"))?;
            let warnings = ds.warnings.iter().map(|w| format!("{method} trial {trial}: {w}")).collect();
            Ok((cells, warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut returns = Vec::with_capacity(n_trials);
    let mut report = None;
    let mut warnings = Vec::new();
    for (cells, w) in per_trial {
        warnings.extend(w);
        let mut row = Vec::with_capacity(cells.len());
        for c in cells {
            row.push(c.gt_return);
            report = report.or(c.report);
        }
        returns.push(row);
    }
    Ok(MethodRun { method, returns, report, warnings })
}

/// Crossover segment bound for a sweep step size: segments of 1 to `s` steps.
pub fn ga_for_step(ga: &GaConfig, step_size: usize) -> GaConfig {
    GaConfig { max_crossover_step: step_size + 1, ..ga.clone() }
}

pub struct SweepCell {
    pub step_size: usize,
    pub trial: usize,
    pub model: usize,
    pub gt_return: f64,
    pub trial_std: f64,
    pub step_mean: f64,
}

pub struct SweepRun {
    pub cells: Vec<SweepCell>,
    pub warnings: Vec<String>,
}

impl SweepRun {
    /// Mean over trials of the across-model std, per step size.
    pub fn mean_trial_std(&self, step_size: usize) -> Option<f64> {
        let mut seen = std::collections::BTreeMap::new();
        for c in self.cells.iter().filter(|c| c.step_size == step_size) {
            seen.insert(c.trial, c.trial_std);
        }
        (!seen.is_empty()).then(|| seen.values().sum::<f64>() / seen.len() as f64)
    }
}

/// GenIL over every configured crossover step size. Trials share their
/// seeds across step sizes, so only the segment bound differs.
pub fn sweep(cfg: &ExperimentConfig, good: &Trajectory, bad: &Trajectory) -> Result<SweepRun> {
    let s = &cfg.sweep;
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    for &step in &s.step_sizes {
        if step >= cfg.data.min_len {
            warnings.push(format!(
                "step size {step} >= snippet min length {}: snippets may lie inside a single segment",
                cfg.data.min_len
            ));
        }
        let ga = ga_for_step(&cfg.ga, step);
        let run = run_method(cfg, Method::GenIL, &ga, good, bad, None, s.n_trials, s.n_models)
            .with_context(|| format!("step size {step}"))?;
        warnings.extend(run.warnings.iter().map(|w| format!("step {step}: {w}")));
        let all: Vec<f64> = run.returns.iter().flatten().copied().collect();
        let step_mean = all.iter().sum::<f64>() / all.len() as f64;
        for (trial, models) in run.returns.iter().enumerate() {
            let trial_std = population_std(models);
            for (model, &gt_return) in models.iter().enumerate() {
                cells.push(SweepCell { step_size: step, trial, model, gt_return, trial_std, step_mean });
            }
        }
    }
    Ok(SweepRun { cells, warnings })
}

fn population_std(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
