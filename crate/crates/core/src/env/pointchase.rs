//! Point mass chasing a target that moves on a circle.
//!
//! Position and velocity are 2-D; actions are accelerations clipped to
//! `[-1, 1]` per axis, integrated with explicit Euler at `DT`. The reward of
//! a step is minus the Euclidean distance to the target after the step.

use alloc::format;
use alloc::vec;

use rand::Rng as _;

use super::{EnvSpec, State, StepOutcome};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Position, velocity, target offset.
pub const FEATURE_DIM: usize = 6;
pub const DT: f64 = 0.1;
pub const MAX_ACCEL: f64 = 1.0;
pub const TARGET_RADIUS: f64 = 0.6;
/// Angular speed of the target, radians per second.
pub const TARGET_OMEGA: f64 = 0.5;

/// Gains of the reference proportional-derivative controller.
pub const KP: f64 = 4.0;
pub const KD: f64 = 3.0;

pub fn clip_action(a: [f64; 2]) -> [f64; 2] {
    [a[0].clamp(-MAX_ACCEL, MAX_ACCEL), a[1].clamp(-MAX_ACCEL, MAX_ACCEL)]
}

/// Reference controller on a PointChase feature vector:
/// `kp * offset - kd * velocity`, clipped.
pub fn controller(state: &State) -> [f64; 2] {
    let f = &state.features;
    clip_action([KP * f[4] - KD * f[2], KP * f[5] - KD * f[3]])
}

#[derive(Debug, Clone)]
pub struct PointChase {
    pub(crate) spec: EnvSpec,
    seed: u64,
    pos: [f64; 2],
    vel: [f64; 2],
    phase: f64,
    t: usize,
}

impl PointChase {
    pub(crate) fn new(spec: EnvSpec, seed: u64) -> Self {
        let mut env = Self { spec, seed, pos: [0.0; 2], vel: [0.0; 2], phase: 0.0, t: 0 };
        env.reset();
        env
    }

    pub(crate) fn reseed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn target(&self) -> [f64; 2] {
        let angle = self.phase + TARGET_OMEGA * DT * self.t as f64;
        [TARGET_RADIUS * libm::cos(angle), TARGET_RADIUS * libm::sin(angle)]
    }

    pub fn distance_to_target(&self) -> f64 {
        let tg = self.target();
        libm::hypot(tg[0] - self.pos[0], tg[1] - self.pos[1])
    }

    pub(crate) fn reset(&mut self) -> State {
        let mut rng: Rng = seed::derive_rng(self.seed, "pointchase-reset", &[]);
        self.pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        self.vel = [0.0; 2];
        self.phase = rng.random_range(0.0..core::f64::consts::TAU);
        self.t = 0;
        self.observe()
    }

    pub(crate) fn observe(&self) -> State {
        let tg = self.target();
        State::new(vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            tg[0] - self.pos[0],
            tg[1] - self.pos[1],
        ])
    }

    pub(crate) fn step(&mut self, action: [f64; 2]) -> Result<StepOutcome> {
        if !(action[0].is_finite() && action[1].is_finite()) {
            return Err(Error::Precondition(format!("non-finite action {action:?}")));
        }
        if self.t >= self.spec.horizon {
            return Err(Error::Precondition("step after episode end".into()));
        }
        let a = clip_action(action);
        for i in 0..2 {
            self.pos[i] += self.vel[i] * DT;
            self.vel[i] += a[i] * DT;
        }
        self.t += 1;
        Ok(StepOutcome {
            state: self.observe(),
            reward: -self.distance_to_target(),
            done: self.t >= self.spec.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, Action, EnvSpec};

    #[test]
    fn horizon_termination() {
        let spec = EnvSpec::point_chase();
        let mut env = make_env(&spec, 3).unwrap();
        env.reset();
        let mut steps = 0;
        loop {
            let out = env.step(&Action::Continuous([0.3, -0.2])).unwrap();
            steps += 1;
            if out.done {
                break;
            }
        }
        assert_eq!(steps, 100);
    }

    #[test]
    fn reward_is_negative_distance() {
        let spec = EnvSpec::point_chase();
        let mut env = make_env(&spec, 11).unwrap();
        env.reset();
        let out = env.step(&Action::Continuous([5.0, 5.0])).unwrap();
        let f = &out.state.features;
        assert!((out.reward + libm::hypot(f[4], f[5])).abs() < 1e-15);
        // clipped to MAX_ACCEL
        assert!((f[2] - MAX_ACCEL * DT).abs() < 1e-15);
    }

    #[test]
    fn resets_depend_on_seed_only() {
        let spec = EnvSpec::point_chase();
        let mut a = make_env(&spec, 5).unwrap();
        let mut b = make_env(&spec, 5).unwrap();
        assert_eq!(a.reset(), b.reset());
        assert_eq!(a.reset(), a.reset());
        let mut c = make_env(&spec, 6).unwrap();
        assert_ne!(a.reset(), c.reset());
    }
}
