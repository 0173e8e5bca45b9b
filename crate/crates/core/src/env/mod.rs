//! Benchmark environments with known ground-truth rewards.
//!
//! Two environments are provided. [`gridnav`] is an 8x8 deterministic grid
//! with a per-cell reward field, small enough for exact dynamic programming.
//! [`pointchase`] is a continuous point mass chasing a target on a circle.
//!
//! Trajectories record the state *entered* after each step together with the
//! reward of that state, so `states[t]` and `gt_step_rewards[t]` are aligned.

pub mod demo;
pub mod gridnav;
pub mod pointchase;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::seed;

pub use demo::{make_demo_pair, make_eval_set, rollout, DemoKind, DemoPolicy, Policy};
pub use gridnav::GridNav;
pub use pointchase::PointChase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EnvKind {
    GridNav,
    PointChase,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::GridNav => "GridNav",
            EnvKind::PointChase => "PointChase",
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            EnvKind::GridNav => gridnav::FEATURE_DIM,
            EnvKind::PointChase => pointchase::FEATURE_DIM,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GridNav" => Ok(EnvKind::GridNav),
            "PointChase" => Ok(EnvKind::PointChase),
            other => Err(Error::Config(format!("unknown environment '{other}'"))),
        }
    }
}

/// Static description of an environment instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Steps per episode.
    pub horizon: usize,
    /// Discount applied to ground-truth returns, in `[0, 1)`.
    pub discount: f64,
    pub feature_dim: usize,
    /// Mixed into every environment seed.
    pub stream: u64,
}

impl EnvSpec {
    pub fn grid_nav() -> Self {
        Self {
            kind: EnvKind::GridNav,
            horizon: 50,
            discount: 0.99,
            feature_dim: gridnav::FEATURE_DIM,
            stream: 0,
        }
    }

    pub fn point_chase() -> Self {
        Self {
            kind: EnvKind::PointChase,
            horizon: 100,
            discount: 0.99,
            feature_dim: pointchase::FEATURE_DIM,
            stream: 0,
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::GridNav => Self::grid_nav(),
            EnvKind::PointChase => Self::point_chase(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config(format!("horizon must be >= 2, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount must lie in [0, 1), got {}", self.discount)));
        }
        if self.feature_dim != self.kind.feature_dim() {
            return Err(Error::Config(format!(
                "{} has feature_dim {}, spec says {}",
                self.kind,
                self.kind.feature_dim(),
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Feature vector observed by reward models and policies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct State {
    pub features: Vec<f64>,
}

impl State {
    pub fn new(features: Vec<f64>) -> Self {
        Self { features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(untagged))]
pub enum Action {
    Discrete(usize),
    Continuous([f64; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Source {
    Demo,
    Offspring,
    Eval,
}

/// A recorded episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub id: String,
    pub env: EnvKind,
    pub states: Vec<State>,
    pub actions: Option<Vec<Action>>,
    pub gt_step_rewards: Vec<f64>,
    pub step_ranks: Option<Vec<f64>>,
    pub source: Source,
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `sum_t discount^t * r_t` over the recorded ground-truth rewards.
    pub fn gt_return(&self, discount: f64) -> f64 {
        let mut g = 0.0;
        let mut w = 1.0;
        for r in &self.gt_step_rewards {
            g += w * r;
            w *= discount;
        }
        g
    }

    pub fn rank_sum(&self) -> Option<f64> {
        self.step_ranks.as_ref().map(|r| r.iter().sum())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let bad = |what: &str, m: usize| {
            Err(Error::InvalidTrajectory(format!(
                "{}: {what} has length {m}, states have {n}",
                self.id
            )))
        };
        if self.gt_step_rewards.len() != n {
            return bad("gt_step_rewards", self.gt_step_rewards.len());
        }
        if let Some(r) = &self.step_ranks {
            if r.len() != n {
                return bad("step_ranks", r.len());
            }
        }
        if let Some(a) = &self.actions {
            if a.len() != n {
                return bad("actions", a.len());
            }
        }
        let dim = self.env.feature_dim();
        for s in &self.states {
            if s.dim() != dim || s.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidTrajectory(format!("{}: malformed state", self.id)));
            }
        }
        if self.gt_step_rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("{}: non-finite reward", self.id)));
        }
        Ok(())
    }
}

/// An environment handle. Single-threaded; clone for independent copies.
#[derive(Debug, Clone)]
pub enum Environment {
    GridNav(GridNav),
    PointChase(PointChase),
}

pub fn make_env(spec: &EnvSpec, seed: u64) -> Result<Environment> {
    spec.validate()?;
    let seed = seed::derive(seed, "env", &[spec.stream]);
    Ok(match spec.kind {
        EnvKind::GridNav => Environment::GridNav(GridNav::new(spec.clone())),
        EnvKind::PointChase => Environment::PointChase(PointChase::new(spec.clone(), seed)),
    })
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        match self {
            Environment::GridNav(e) => &e.spec,
            Environment::PointChase(e) => &e.spec,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.spec().kind
    }

    /// Replace the seed used by subsequent resets.
    pub fn reseed(&mut self, seed: u64) {
        if let Environment::PointChase(e) = self {
            let stream = e.spec.stream;
            e.reseed(seed::derive(seed, "env", &[stream]));
        }
    }

    /// Start a new episode. Repeated resets without reseeding return the
    /// same start state.
    pub fn reset(&mut self) -> State {
        match self {
            Environment::GridNav(e) => e.reset(),
            Environment::PointChase(e) => e.reset(),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        match (self, action) {
            (Environment::GridNav(e), Action::Discrete(a)) => e.step(*a),
            (Environment::PointChase(e), Action::Continuous(a)) => e.step(*a),
            (env, a) => Err(Error::EnvMismatch(format!("{:?} is not an action of {}", a, env.kind()))),
        }
    }

    pub fn observe(&self) -> State {
        match self {
            Environment::GridNav(e) => e.observe(),
            Environment::PointChase(e) => e.observe(),
        }
    }

    pub fn as_grid_nav(&self) -> Option<&GridNav> {
        match self {
            Environment::GridNav(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_point_chase(&self) -> Option<&PointChase> {
        match self {
            Environment::PointChase(e) => Some(e),
            _ => None,
        }
    }
}
