//! Comparator dataset builders and behavioural cloning.
//!
//! The ranking builders return [`RankedDataset`]s shaped exactly like the
//! output of genetic reproduction, so reward training and evaluation are
//! shared with the main pipeline.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::{label_constant, RankedDataset};
use crate::env::demo::{quality_rollout, random_action};
use crate::env::{make_env, rollout, Action, EnvKind, EnvSpec, Environment, Policy, State, Trajectory};
use crate::error::{Error, Result};
use crate::math::mean;
use crate::mlp::{Mlp, Trace};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum BaselineSpec {
    Trex { qualities: Vec<f64>, n_per_quality: usize },
    Drex { noise_levels: Vec<f64>, n_per_level: usize, bc: BcConfig },
    Bc(BcConfig),
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Trex { qualities, n_per_quality } => {
                check_qualities(qualities)?;
                if *n_per_quality == 0 {
                    return Err(Error::Config("n_per_quality must be positive".into()));
                }
                Ok(())
            }
            Self::Drex { noise_levels, n_per_level, bc } => {
                check_noise_levels(noise_levels)?;
                if *n_per_level == 0 {
                    return Err(Error::Config("n_per_level must be positive".into()));
                }
                bc.validate()
            }
            Self::Bc(bc) => bc.validate(),
        }
    }
}

fn check_qualities(qualities: &[f64]) -> Result<()> {
    if qualities.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 qualities, got {}", qualities.len())));
    }
    if qualities.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Config(format!("qualities must lie in [0, 1]: {qualities:?}")));
    }
    let mut sorted = qualities.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("qualities must be distinct: {qualities:?}")));
    }
    Ok(())
}

fn check_noise_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("noise levels are empty".into()));
    }
    if levels.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Config(format!("noise levels must lie in [0, 1]: {levels:?}")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("noise levels must be strictly increasing: {levels:?}")));
    }
    Ok(())
}

/// Record a warning when mean ground-truth return does not increase with rank.
fn monotonicity_warning(groups: &[(u32, f64)]) -> Option<String> {
    let mut by_rank = groups.to_vec();
    by_rank.sort_by_key(|g| g.0);
    by_rank.windows(2).find(|w| w[1].1 <= w[0].1).map(|w| {
        format!(
            "mean return not increasing with rank: rank {} has {:.4}, rank {} has {:.4}",
            w[0].0, w[0].1, w[1].0, w[1].1
        )
    })
}

/// Rollouts of the demonstration policy at several quality levels. Lower
/// quality values are better behaved and get higher ranks; trajectories are
/// emitted in the order the qualities are listed.
pub fn build_trex_dataset(spec: &EnvSpec, qualities: &[f64], n_per_quality: usize, seed: u64) -> Result<RankedDataset> {
    check_qualities(qualities)?;
    let mut trajectories = Vec::with_capacity(qualities.len() * n_per_quality);
    let mut ranks = Vec::with_capacity(trajectories.capacity());
    let mut groups = Vec::new();
    for (qi, &q) in qualities.iter().enumerate() {
        let rank = qualities.iter().filter(|&&o| o > q).count() as u32;
        let mut returns = Vec::with_capacity(n_per_quality);
        for k in 0..n_per_quality {
            let mut t = quality_rollout(spec, q, seed::derive(seed, "trex", &[qi as u64, k as u64]))?;
            t.id = format!("trex-{qi:02}-{k:03}");
            label_constant(&mut t, rank as f64);
            returns.push(t.gt_return(spec.discount));
            trajectories.push(t);
            ranks.push(rank);
        }
        groups.push((rank, mean(&returns)));
    }
    let mut ds = RankedDataset::new(trajectories, ranks, seed)?;
    ds.warnings.extend(monotonicity_warning(&groups));
    Ok(ds)
}

/// The two demonstrations alone: the bad one at rank 0, the good one at 1.
pub fn build_trex2_dataset(good: &Trajectory, bad: &Trajectory, discount: f64, seed: u64) -> Result<RankedDataset> {
    let mut good = good.clone();
    let mut bad = bad.clone();
    label_constant(&mut bad, 0.0);
    label_constant(&mut good, 1.0);
    let warning = monotonicity_warning(&[(0, bad.gt_return(discount)), (1, good.gt_return(discount))]);
    let mut ds = RankedDataset::new(vec![bad, good], vec![0, 1], seed)?;
    ds.warnings.extend(warning);
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BcConfig {
    /// Minibatch gradient steps.
    pub steps: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { steps: 2000, hidden: 64, learning_rate: 0.05, batch_size: 32, seed: 0 }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config("bc hidden width and batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("bc learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// State to action predictor: action logits for the grid, accelerations for
/// the point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BcPolicy {
    pub env: EnvKind,
    pub mlp: Mlp,
}

fn output_dim(kind: EnvKind) -> usize {
    match kind {
        EnvKind::GridNav => crate::env::gridnav::N_ACTIONS,
        EnvKind::PointChase => 2,
    }
}

impl BcPolicy {
    pub fn predict(&self, state: &State, trace: &mut Trace) -> Result<Action> {
        let out = self.mlp.forward(&state.features, trace)?;
        Ok(match self.env {
            EnvKind::GridNav => {
                let mut best = 0;
                for (a, &v) in out.iter().enumerate() {
                    if v > out[best] {
                        best = a;
                    }
                }
                Action::Discrete(best)
            }
            EnvKind::PointChase => Action::Continuous(crate::env::pointchase::clip_action([out[0], out[1]])),
        })
    }
}

impl Policy for BcPolicy {
    fn env_kind(&self) -> EnvKind {
        self.env
    }

    fn act(&self, _env: &Environment, state: &State, _rng: &mut Rng) -> Action {
        self.predict(state, &mut Trace::default()).expect("observation matches network input")
    }
}

/// `(observation, action)` pairs. Recorded states are the ones entered, so
/// action `t` is paired with state `t - 1` and the first action of every
/// trajectory is dropped.
pub fn bc_samples(demos: &[Trajectory]) -> Result<Vec<(&State, &Action)>> {
    let mut out = Vec::new();
    for t in demos {
        let actions = t
            .actions
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{}: behavioural cloning needs recorded actions", t.id)))?;
        out.extend(t.states.iter().zip(actions.iter().skip(1)));
    }
    Ok(out)
}

/// Cross-entropy for grid actions, squared error for accelerations, plain
/// minibatch gradient descent.
pub fn train_bc(demos: &[Trajectory], cfg: &BcConfig) -> Result<BcPolicy> {
    cfg.validate()?;
    let first = demos.first().ok_or_else(|| Error::Precondition("no demonstrations to clone".into()))?;
    let env = first.env;
    if let Some(t) = demos.iter().find(|t| t.env != env) {
        return Err(Error::EnvMismatch(format!("{} is from {}, expected {env}", t.id, t.env)));
    }
    let samples = bc_samples(demos)?;
    if samples.is_empty() {
        return Err(Error::Precondition("demonstrations too short to clone".into()));
    }
    let n_out = output_dim(env);
    let mut rng = seed::derive_rng(cfg.seed, "bc", &[]);
    let mut mlp = Mlp::init(&[env.feature_dim(), cfg.hidden, cfg.hidden, n_out], &mut rng)?;
    let mut grad = vec![0.0; mlp.n_params()];
    let mut trace = Trace::default();
    let mut d_out = vec![0.0; n_out];
    let scale = 1.0 / cfg.batch_size as f64;
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for _ in 0..cfg.batch_size {
            let (s, a) = samples[rng.random_range(0..samples.len())];
            let out = mlp.forward(&s.features, &mut trace)?;
            match (env, a) {
                (EnvKind::GridNav, Action::Discrete(k)) => {
                    let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = out.iter().map(|v| libm::exp(v - m)).sum();
                    for (i, d) in d_out.iter_mut().enumerate() {
                        let p = libm::exp(out[i] - m) / z;
                        *d = scale * (p - if i == *k { 1.0 } else { 0.0 });
                    }
                }
                (EnvKind::PointChase, Action::Continuous(u)) => {
                    for i in 0..2 {
                        d_out[i] = scale * (out[i] - u[i]);
                    }
                }
                _ => return Err(Error::EnvMismatch(format!("action {a:?} does not belong to {env}"))),
            }
            mlp.backward(&mut trace, &d_out, &mut grad);
        }
        for (p, g) in mlp.params_mut().iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        if mlp.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(BcPolicy { env, mlp })
}

/// With probability `epsilon` a uniformly random action, otherwise `inner`'s.
pub struct NoisyPolicy<'a> {
    pub inner: &'a dyn Policy,
    pub epsilon: f64,
}

impl Policy for NoisyPolicy<'_> {
    fn env_kind(&self) -> EnvKind {
        self.inner.env_kind()
    }

    fn act(&self, env: &Environment, state: &State, rng: &mut Rng) -> Action {
        if rng.random::<f64>() < self.epsilon {
            random_action(self.env_kind(), rng)
        } else {
            self.inner.act(env, state, rng)
        }
    }
}

/// Noise-injection ranking: rollouts of the cloned policy mixed with random
/// actions, less noise ranked higher.
pub fn build_drex_dataset(
    bc: &dyn Policy,
    spec: &EnvSpec,
    noise_levels: &[f64],
    n_per_level: usize,
    seed: u64,
) -> Result<RankedDataset> {
    check_noise_levels(noise_levels)?;
    let mut env = make_env(spec, seed)?;
    let top = noise_levels.len() as u32 - 1;
    let mut trajectories = Vec::new();
    let mut ranks = Vec::new();
    let mut groups = Vec::new();
    for (li, &eps) in noise_levels.iter().enumerate() {
        let rank = top - li as u32;
        let policy = NoisyPolicy { inner: bc, epsilon: eps };
        let mut returns = Vec::with_capacity(n_per_level);
        for k in 0..n_per_level {
            let mut t = rollout(&mut env, &policy, seed::derive(seed, "drex", &[li as u64, k as u64]))?;
            t.id = format!("drex-{li:02}-{k:03}");
            t.meta.insert("noise".to_string(), format!("{eps:?}"));
            label_constant(&mut t, rank as f64);
            returns.push(t.gt_return(spec.discount));
            trajectories.push(t);
            ranks.push(rank);
        }
        groups.push((rank, mean(&returns)));
    }
    let mut ds = RankedDataset::new(trajectories, ranks, seed)?;
    ds.warnings.extend(monotonicity_warning(&groups));
    Ok(ds)
}
