//! Demonstration policies of tunable quality and trajectory recording.
//!
//! A single `quality` knob in `[0, 1]` stands in for training checkpoints:
//! 0 is the reference policy, 1 is uniformly random behaviour.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{gridnav, pointchase, Action, EnvKind, EnvSpec, Environment, Source, State, Trajectory};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Anything that picks actions in an environment.
pub trait Policy {
    fn env_kind(&self) -> EnvKind;

    /// `state` is the current observation; `env` gives access to the
    /// underlying handle for tabular policies.
    fn act(&self, env: &Environment, state: &State, rng: &mut Rng) -> Action;
}

/// Uniformly random action for the given environment.
pub fn random_action(kind: EnvKind, rng: &mut Rng) -> Action {
    match kind {
        EnvKind::GridNav => Action::Discrete(rng.random_range(0..gridnav::N_ACTIONS)),
        EnvKind::PointChase => Action::Continuous([
            rng.random_range(-pointchase::MAX_ACCEL..=pointchase::MAX_ACCEL),
            rng.random_range(-pointchase::MAX_ACCEL..=pointchase::MAX_ACCEL),
        ]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoKind {
    /// With probability `quality` a random action, otherwise the optimal one.
    EpsilonGreedyOptimal,
    /// `(1 - quality) * controller + quality * N(0, NOISE_SCALE^2)`, clipped.
    NoisyProportional,
}

/// Gaussian action noise scale of the noisy controller at quality 1.
pub const NOISE_SCALE: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct DemoPolicy {
    pub env: EnvKind,
    pub quality: f64,
    pub kind: DemoKind,
    optimal: Vec<usize>,
}

impl DemoPolicy {
    pub fn new(spec: &EnvSpec, quality: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(Error::Config(format!("quality must lie in [0, 1], got {quality}")));
        }
        spec.validate()?;
        let (kind, optimal) = match spec.kind {
            EnvKind::GridNav => (DemoKind::EpsilonGreedyOptimal, gridnav::optimal_actions(spec.discount)?),
            EnvKind::PointChase => (DemoKind::NoisyProportional, Vec::new()),
        };
        Ok(Self { env: spec.kind, quality, kind, optimal })
    }
}

impl Policy for DemoPolicy {
    fn env_kind(&self) -> EnvKind {
        self.env
    }

    fn act(&self, env: &Environment, state: &State, rng: &mut Rng) -> Action {
        match self.kind {
            DemoKind::EpsilonGreedyOptimal => {
                let explore = rng.random::<f64>() < self.quality;
                if explore {
                    random_action(EnvKind::GridNav, rng)
                } else {
                    let cell = env.as_grid_nav().map(|g| g.cell()).unwrap_or_default();
                    Action::Discrete(self.optimal[cell])
                }
            }
            DemoKind::NoisyProportional => {
                let u = pointchase::controller(state);
                let n0: f64 = rng.sample(StandardNormal);
                let n1: f64 = rng.sample(StandardNormal);
                let q = self.quality;
                Action::Continuous(pointchase::clip_action([
                    (1.0 - q) * u[0] + q * NOISE_SCALE * n0,
                    (1.0 - q) * u[1] + q * NOISE_SCALE * n1,
                ]))
            }
        }
    }
}

/// Run one full episode. The result is a pure function of the environment
/// spec, the policy and `seed`.
pub fn rollout(env: &mut Environment, policy: &dyn Policy, seed: u64) -> Result<Trajectory> {
    if policy.env_kind() != env.kind() {
        return Err(Error::EnvMismatch(format!(
            "policy for {} used on {}",
            policy.env_kind(),
            env.kind()
        )));
    }
    env.reseed(seed);
    let mut rng = seed::derive_rng(seed, "policy", &[]);
    let horizon = env.spec().horizon;
    let mut state = env.reset();
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    loop {
        let a = policy.act(env, &state, &mut rng);
        let out = env.step(&a)?;
        actions.push(a);
        rewards.push(out.reward);
        states.push(out.state.clone());
        state = out.state;
        if out.done {
            break;
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), seed.to_string());
    Ok(Trajectory {
        id: format!("rollout-{seed:016x}"),
        env: env.kind(),
        states,
        actions: Some(actions),
        gt_step_rewards: rewards,
        step_ranks: None,
        source: Source::Demo,
        meta,
    })
}

/// One rollout of the demonstration policy at `quality`, tagged with it.
pub fn quality_rollout(spec: &EnvSpec, quality: f64, seed: u64) -> Result<Trajectory> {
    let mut env = super::make_env(spec, seed)?;
    let policy = DemoPolicy::new(spec, quality)?;
    let mut t = rollout(&mut env, &policy, seed)?;
    t.meta.insert("quality".to_string(), fmt_quality(quality));
    Ok(t)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_quality(q: f64) -> String {
    format!("{q:?}")
}

pub const MAX_DEMO_RETRIES: u64 = 100;

/// One good and one bad demonstration with strictly ordered ground-truth
/// returns. Fresh seeds are tried until the ordering holds.
pub fn make_demo_pair(
    spec: &EnvSpec,
    good_quality: f64,
    bad_quality: f64,
    seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    if !(bad_quality > good_quality) {
        return Err(Error::Precondition(format!(
            "bad quality {bad_quality} must exceed good quality {good_quality}"
        )));
    }
    for attempt in 0..MAX_DEMO_RETRIES {
        let mut good = quality_rollout(spec, good_quality, seed::derive(seed, "demo-good", &[attempt]))?;
        let mut bad = quality_rollout(spec, bad_quality, seed::derive(seed, "demo-bad", &[attempt]))?;
        if good.gt_return(spec.discount) > bad.gt_return(spec.discount) {
            good.id = "demo-good".to_string();
            bad.id = "demo-bad".to_string();
            for t in [&mut good, &mut bad] {
                t.meta.insert("attempt".to_string(), attempt.to_string());
            }
            return Ok((good, bad));
        }
    }
    Err(Error::DegenerateDemo { attempts: MAX_DEMO_RETRIES as usize })
}

/// `n_per_quality` evaluation rollouts for each listed quality.
pub fn make_eval_set(spec: &EnvSpec, qualities: &[f64], n_per_quality: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if qualities.is_empty() {
        return Err(Error::Precondition("evaluation qualities are empty".into()));
    }
    let mut out = Vec::with_capacity(qualities.len() * n_per_quality);
    for (qi, &q) in qualities.iter().enumerate() {
        for k in 0..n_per_quality {
            let mut t = quality_rollout(spec, q, seed::derive(seed, "eval", &[qi as u64, k as u64]))?;
            t.id = format!("eval-{qi:02}-{k:03}");
            t.source = Source::Eval;
            out.push(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;

    fn mean_return(spec: &EnvSpec, q: f64, n: u64) -> f64 {
        (0..n).map(|s| quality_rollout(spec, q, s).unwrap().gt_return(spec.discount)).sum::<f64>() / n as f64
    }

    #[test]
    fn rollout_is_deterministic() {
        for spec in [EnvSpec::grid_nav(), EnvSpec::point_chase()] {
            let policy = DemoPolicy::new(&spec, 0.3).unwrap();
            let mut env = make_env(&spec, 0).unwrap();
            let a = rollout(&mut env, &policy, 42).unwrap();
            let b = rollout(&mut env, &policy, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), spec.horizon);
            assert!(a.step_ranks.is_none());
            a.validate().unwrap();
        }
    }

    #[test]
    fn random_is_no_better_than_optimal() {
        for spec in [EnvSpec::grid_nav(), EnvSpec::point_chase()] {
            assert!(mean_return(&spec, 1.0, 100) <= mean_return(&spec, 0.0, 100));
        }
    }

    #[test]
    fn demo_pair_is_ordered() {
        let spec = EnvSpec::grid_nav();
        let (g, b) = make_demo_pair(&spec, 0.1, 0.5, 9).unwrap();
        assert!(g.gt_return(spec.discount) > b.gt_return(spec.discount));
        assert_eq!(g.id, "demo-good");
    }

    #[test]
    fn demo_pair_rejects_equal_quality() {
        let spec = EnvSpec::grid_nav();
        assert!(matches!(make_demo_pair(&spec, 0.3, 0.3, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn point_chase_pair_is_deterministic() {
        let spec = EnvSpec::point_chase();
        let a = make_demo_pair(&spec, 0.05, 0.6, 3).unwrap();
        let b = make_demo_pair(&spec, 0.05, 0.6, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_set_counts_and_extrapolation_span() {
        let spec = EnvSpec::grid_nav();
        let qs: Vec<f64> = (0..7).map(|i| i as f64 / 10.0).collect();
        let eval = make_eval_set(&spec, &qs, 10, 1).unwrap();
        assert_eq!(eval.len(), 70);
        assert!(eval.iter().all(|t| t.source == Source::Eval));
        let (good, _) = make_demo_pair(&spec, 0.1, 0.5, 1).unwrap();
        let g = good.gt_return(spec.discount);
        assert!(eval.iter().any(|t| t.gt_return(spec.discount) > g));
        assert_eq!(eval, make_eval_set(&spec, &qs, 10, 1).unwrap());
    }

    #[test]
    fn policy_env_mismatch() {
        let policy = DemoPolicy::new(&EnvSpec::grid_nav(), 0.0).unwrap();
        let mut env = make_env(&EnvSpec::point_chase(), 0).unwrap();
        assert!(matches!(rollout(&mut env, &policy, 0), Err(Error::EnvMismatch(_))));
    }
}
