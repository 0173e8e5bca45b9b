//! Policies derived from a reward function, and ground-truth evaluation.
//!
//! GridNav policies come from exact value iteration over the 64 cells;
//! PointChase policies are linear feedback laws found by the cross-entropy
//! method. Optimizers only see the reward through [`RewardFn`]; the true
//! reward is read exclusively by [`evaluate_policy`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::env::{gridnav, make_env, pointchase, rollout, Action, EnvKind, EnvSpec, Environment, Policy, State};
use crate::error::{Error, Result};
use crate::math::{mean, pop_std};
use crate::reward::RewardFn;
use crate::seed::{self, Rng};

/// Number of linear gains: 2 action rows x 6 features.
pub const LINEAR_GAINS: usize = 2 * pointchase::FEATURE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    /// One action id per GridNav cell.
    GreedyTabular,
    /// Row-major 2x6 gain matrix followed by the action noise std.
    LinearGaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub kind: PolicyKind,
    pub params: Vec<f64>,
    /// Content hash of the reward checkpoint the policy was derived from.
    pub source_model: String,
}

impl PolicyArtifact {
    pub fn greedy(actions: &[usize]) -> Self {
        Self {
            kind: PolicyKind::GreedyTabular,
            params: actions.iter().map(|&a| a as f64).collect(),
            source_model: String::new(),
        }
    }

    pub fn linear(gains: &[f64], noise_std: f64) -> Self {
        let mut params = gains.to_vec();
        params.push(noise_std);
        Self { kind: PolicyKind::LinearGaussian, params, source_model: String::new() }
    }

    /// Validate parameter shape and range.
    pub fn check(&self) -> Result<()> {
        let (expected, ok) = match self.kind {
            PolicyKind::GreedyTabular => (
                gridnav::N_CELLS,
                self.params.iter().all(|&a| a >= 0.0 && a < gridnav::N_ACTIONS as f64 && a == libm::floor(a)),
            ),
            PolicyKind::LinearGaussian => (
                LINEAR_GAINS + 1,
                self.params.iter().all(|p| p.is_finite()) && self.params.last().is_some_and(|&s| s >= 0.0),
            ),
        };
        if self.params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: self.params.len() });
        }
        if !ok {
            return Err(Error::Config(format!("malformed {:?} parameters", self.kind)));
        }
        Ok(())
    }

    pub fn greedy_actions(&self) -> Option<Vec<usize>> {
        (self.kind == PolicyKind::GreedyTabular).then(|| self.params.iter().map(|&a| a as usize).collect())
    }
}

fn linear_action(gains: &[f64], features: &[f64]) -> [f64; 2] {
    let d = pointchase::FEATURE_DIM;
    let mut a = [0.0; 2];
    for (r, out) in a.iter_mut().enumerate() {
        *out = gains[r * d..(r + 1) * d].iter().zip(features).map(|(g, x)| g * x).sum();
    }
    a
}

impl Policy for PolicyArtifact {
    fn env_kind(&self) -> EnvKind {
        match self.kind {
            PolicyKind::GreedyTabular => EnvKind::GridNav,
            PolicyKind::LinearGaussian => EnvKind::PointChase,
        }
    }

    fn act(&self, env: &Environment, state: &State, rng: &mut Rng) -> Action {
        match self.kind {
            PolicyKind::GreedyTabular => {
                let cell = env.as_grid_nav().map(|g| g.cell()).unwrap_or_default();
                Action::Discrete(self.params[cell] as usize)
            }
            PolicyKind::LinearGaussian => {
                let mut a = linear_action(&self.params[..LINEAR_GAINS], &state.features);
                let std = self.params[LINEAR_GAINS];
                if std > 0.0 {
                    for x in a.iter_mut() {
                        let n: f64 = rng.sample(StandardNormal);
                        *x += std * n;
                    }
                }
                Action::Continuous(pointchase::clip_action(a))
            }
        }
    }
}

/// Ground-truth state reward, usable wherever a [`RewardFn`] is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueReward(pub EnvKind);

impl RewardFn for TrueReward {
    fn reward(&self, s: &State) -> f64 {
        match self.0 {
            EnvKind::GridNav => gridnav::cell_of_state(s).map(gridnav::cell_reward).unwrap_or(f64::NAN),
            EnvKind::PointChase => -libm::hypot(s.features[4], s.features[5]),
        }
    }
}

/// Greedy policy from value iteration on `reward`, evaluated once per cell.
pub fn value_iteration(spec: &EnvSpec, reward: &dyn RewardFn, discount: f64, tol: f64) -> Result<PolicyArtifact> {
    if spec.kind != EnvKind::GridNav {
        return Err(Error::EnvMismatch(format!("value iteration needs GridNav, got {}", spec.kind)));
    }
    let rewards: Vec<f64> = (0..gridnav::N_CELLS).map(|c| reward.reward(&gridnav::cell_features(c))).collect();
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::Config("reward model produced a non-finite cell reward".into()));
    }
    let sol = gridnav::solve(&rewards, discount, tol)?;
    Ok(PolicyArtifact::greedy(&sol.actions))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub iters: usize,
    pub init_std: f64,
    /// Floor on the sampling std after each refit.
    pub min_std: f64,
    /// Rollouts per candidate; episode seeds are shared within an iteration.
    pub episodes: usize,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { population: 32, elite_frac: 0.25, iters: 25, init_std: 2.0, min_std: 0.05, episodes: 3 }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 8 {
            return Err(Error::Config(format!("CEM population must be >= 8, got {}", self.population)));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac < 1.0) {
            return Err(Error::Config(format!("elite fraction must lie in (0, 1), got {}", self.elite_frac)));
        }
        if self.episodes == 0 || !(self.init_std > 0.0) || !(self.min_std >= 0.0) {
            return Err(Error::Config("CEM episodes and std must be positive".into()));
        }
        Ok(())
    }

    fn n_elite(&self) -> usize {
        ((self.elite_frac * self.population as f64) as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub policy: PolicyArtifact,
    /// Sampling mean before the first iteration and after each one.
    pub means: Vec<Vec<f64>>,
}

/// Discounted `reward` return of one deterministic linear-policy episode.
fn linear_return(env: &mut Environment, gains: &[f64], reward: &dyn RewardFn, episode_seed: u64) -> Result<f64> {
    env.reseed(episode_seed);
    let discount = env.spec().discount;
    let mut state = env.reset();
    let mut ret = 0.0;
    let mut w = 1.0;
    loop {
        let a = pointchase::clip_action(linear_action(gains, &state.features));
        let out = env.step(&Action::Continuous(a))?;
        ret += w * reward.reward(&out.state);
        w *= discount;
        state = out.state;
        if out.done {
            return Ok(ret);
        }
    }
}

/// Cross-entropy search over PointChase linear feedback gains.
pub fn cem_search(spec: &EnvSpec, reward: &dyn RewardFn, cfg: &CemConfig, seed: u64) -> Result<CemOutcome> {
    if spec.kind != EnvKind::PointChase {
        return Err(Error::EnvMismatch(format!("CEM needs PointChase, got {}", spec.kind)));
    }
    cfg.validate()?;
    let mut env = make_env(spec, seed)?;
    let mut mu = vec![0.0; LINEAR_GAINS];
    let mut sigma = vec![cfg.init_std; LINEAR_GAINS];
    let mut means = vec![mu.clone()];
    let n_elite = cfg.n_elite();
    for iter in 0..cfg.iters {
        let episode_seeds: Vec<u64> =
            (0..cfg.episodes).map(|e| seed::derive(seed, "cem-episode", &[iter as u64, e as u64])).collect();
        let mut scored = Vec::with_capacity(cfg.population);
        for k in 0..cfg.population {
            let mut rng = seed::derive_rng(seed, "cem-sample", &[iter as u64, k as u64]);
            let theta: Vec<f64> = mu
                .iter()
                .zip(&sigma)
                .map(|(m, s)| {
                    let n: f64 = rng.sample(StandardNormal);
                    m + s * n
                })
                .collect();
            let mut fitness = 0.0;
            for &es in &episode_seeds {
                fitness += linear_return(&mut env, &theta, reward, es)?;
            }
            fitness /= cfg.episodes as f64;
            if !fitness.is_finite() {
                return Err(Error::Divergence { step: iter });
            }
            scored.push((fitness, theta));
        }
        // Stable sort keeps candidate order among equal fitness.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let elites = &scored[..n_elite];
        for j in 0..LINEAR_GAINS {
            let vals: Vec<f64> = elites.iter().map(|(_, t)| t[j]).collect();
            mu[j] = mean(&vals);
            sigma[j] = pop_std(&vals).max(cfg.min_std);
        }
        means.push(mu.clone());
    }
    Ok(CemOutcome { policy: PolicyArtifact::linear(&mu, 0.0), means })
}

/// Ground-truth return statistics (population std).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

pub fn evaluate_policy(policy: &dyn Policy, spec: &EnvSpec, n_episodes: usize, seed: u64) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::Precondition("n_episodes must be >= 1".into()));
    }
    if policy.env_kind() != spec.kind {
        return Err(Error::EnvMismatch(format!("policy for {} evaluated on {}", policy.env_kind(), spec.kind)));
    }
    let mut env = make_env(spec, seed)?;
    let returns = (0..n_episodes)
        .map(|k| {
            let t = rollout(&mut env, policy, seed::derive(seed, "evaluate", &[k as u64]))?;
            Ok(t.gt_return(spec.discount))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalStats { mean: mean(&returns), std: pop_std(&returns), returns })
}
