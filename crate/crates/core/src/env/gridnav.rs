//! 8x8 deterministic grid navigation.
//!
//! Layout (x to the right, y downwards), `S` start, `G` goal, `P` pit:
//!
//! ```text
//! S . . . . . . .
//! . . . P . . . .
//! . P . . . . P .
//! . . . P P . . .
//! . . . . . . P .
//! . P P . . . . .
//! . . . . . P . .
//! P . . . . . . G
//! ```
//!
//! Entering the goal pays +1, a pit -1, any other cell -0.01. Nothing is
//! absorbing: the episode always lasts `horizon` steps. Moving into a wall
//! leaves the agent in place.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{EnvSpec, State, StepOutcome};
use crate::error::{Error, Result};

pub const SIZE: usize = 8;
pub const N_CELLS: usize = SIZE * SIZE;
pub const N_ACTIONS: usize = 4;
/// Normalized `(x, y)` followed by a one-hot cell encoding.
pub const FEATURE_DIM: usize = 2 + N_CELLS;

pub const START: (usize, usize) = (0, 0);
pub const GOAL: (usize, usize) = (7, 7);
pub const PITS: [(usize, usize); 10] = [
    (3, 1),
    (1, 2),
    (6, 2),
    (3, 3),
    (4, 3),
    (6, 4),
    (1, 5),
    (2, 5),
    (5, 6),
    (0, 7),
];

pub const GOAL_REWARD: f64 = 1.0;
pub const PIT_REWARD: f64 = -1.0;
pub const STEP_REWARD: f64 = -0.01;

/// Action ids: up, right, down, left.
pub const ACTION_DELTAS: [(isize, isize); N_ACTIONS] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

pub fn cell_index(x: usize, y: usize) -> usize {
    y * SIZE + x
}

pub fn cell_coords(cell: usize) -> (usize, usize) {
    (cell % SIZE, cell / SIZE)
}

pub fn cell_reward(cell: usize) -> f64 {
    let xy = cell_coords(cell);
    if xy == GOAL {
        GOAL_REWARD
    } else if PITS.contains(&xy) {
        PIT_REWARD
    } else {
        STEP_REWARD
    }
}

pub fn next_cell(cell: usize, action: usize) -> usize {
    let (x, y) = cell_coords(cell);
    let (dx, dy) = ACTION_DELTAS[action];
    let nx = x as isize + dx;
    let ny = y as isize + dy;
    if nx < 0 || ny < 0 || nx >= SIZE as isize || ny >= SIZE as isize {
        cell
    } else {
        cell_index(nx as usize, ny as usize)
    }
}

pub fn cell_features(cell: usize) -> State {
    let (x, y) = cell_coords(cell);
    let mut f = vec![0.0; FEATURE_DIM];
    f[0] = x as f64 / (SIZE - 1) as f64;
    f[1] = y as f64 / (SIZE - 1) as f64;
    f[2 + cell] = 1.0;
    State::new(f)
}

/// Recover the cell from a GridNav feature vector.
pub fn cell_of_state(state: &State) -> Option<usize> {
    if state.dim() != FEATURE_DIM {
        return None;
    }
    state.features[2..].iter().position(|&v| v == 1.0)
}

/// Solved tabular control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSolution {
    pub values: Vec<f64>,
    /// Greedy action per cell; ties resolve to the lowest action id.
    pub actions: Vec<usize>,
    pub iterations: usize,
}

pub const MAX_SWEEPS: usize = 100_000;

/// Infinite-horizon value iteration where `rewards[c]` is paid on entering
/// cell `c`. Iterates until the sup-norm change drops below `tol`.
pub fn solve(rewards: &[f64], discount: f64, tol: f64) -> Result<TabularSolution> {
    if rewards.len() != N_CELLS {
        return Err(Error::DimensionMismatch { expected: N_CELLS, found: rewards.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = vec![0.0; N_CELLS];
    let mut next = vec![0.0; N_CELLS];
    let mut iterations = 0;
    loop {
        if iterations >= MAX_SWEEPS {
            return Err(Error::Config(format!(
                "value iteration did not converge in {MAX_SWEEPS} sweeps (discount {discount})"
            )));
        }
        iterations += 1;
        let mut residual: f64 = 0.0;
        for c in 0..N_CELLS {
            let mut best = f64::NEG_INFINITY;
            for a in 0..N_ACTIONS {
                let n = next_cell(c, a);
                let q = rewards[n] + discount * v[n];
                if q > best {
                    best = q;
                }
            }
            let d = best - v[c];
            residual = residual.max(if d < 0.0 { -d } else { d });
            next[c] = best;
        }
        core::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            return Err(Error::Config("value iteration produced non-finite values".into()));
        }
        if residual < tol {
            break;
        }
    }
    let actions = (0..N_CELLS)
        .map(|c| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..N_ACTIONS {
                let n = next_cell(c, a);
                let q = rewards[n] + discount * v[n];
                if q > best_q {
                    best_q = q;
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok(TabularSolution { values: v, actions, iterations })
}

pub fn true_rewards() -> Vec<f64> {
    (0..N_CELLS).map(cell_reward).collect()
}

/// Greedy optimal action table for the true reward.
pub fn optimal_actions(discount: f64) -> Result<Vec<usize>> {
    Ok(solve(&true_rewards(), discount, 1e-12)?.actions)
}

#[derive(Debug, Clone)]
pub struct GridNav {
    pub(crate) spec: EnvSpec,
    cell: usize,
    t: usize,
}

impl GridNav {
    pub(crate) fn new(spec: EnvSpec) -> Self {
        Self { spec, cell: cell_index(START.0, START.1), t: 0 }
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub(crate) fn reset(&mut self) -> State {
        self.cell = cell_index(START.0, START.1);
        self.t = 0;
        cell_features(self.cell)
    }

    pub(crate) fn observe(&self) -> State {
        cell_features(self.cell)
    }

    pub(crate) fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= N_ACTIONS {
            return Err(Error::Precondition(format!("GridNav action {action} out of range")));
        }
        if self.t >= self.spec.horizon {
            return Err(Error::Precondition("step after episode end".into()));
        }
        self.cell = next_cell(self.cell, action);
        self.t += 1;
        Ok(StepOutcome {
            state: cell_features(self.cell),
            reward: cell_reward(self.cell),
            done: self.t >= self.spec.horizon,
        })
    }
}
