use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Trajectories partitioned into integer rank buckets.
///
/// Produced by genetic reproduction and by every baseline builder, so the
/// downstream training and metrics code is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDataset {
    pub trajectories: Vec<Trajectory>,
    /// Integer rank label per trajectory, parallel to `trajectories`.
    pub ranks: Vec<u32>,
    pub seed: u64,
    /// Reproduction attempts consumed (0 for non-genetic builders).
    pub attempts_used: usize,
    pub warnings: Vec<String>,
}

impl RankedDataset {
    pub fn new(trajectories: Vec<Trajectory>, ranks: Vec<u32>, seed: u64) -> Result<Self> {
        if trajectories.len() != ranks.len() {
            return Err(Error::Precondition("one rank label per trajectory required".into()));
        }
        for t in &trajectories {
            t.validate()?;
            if t.step_ranks.is_none() {
                return Err(Error::InvalidTrajectory(alloc::format!("{}: step ranks missing", t.id)));
            }
        }
        Ok(Self { trajectories, ranks, seed, attempts_used: 0, warnings: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `rank -> trajectory ids`, ids in dataset order.
    pub fn by_rank(&self) -> BTreeMap<u32, Vec<String>> {
        let mut m: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for (t, &r) in self.trajectories.iter().zip(&self.ranks) {
            m.entry(r).or_default().push(t.id.clone());
        }
        m
    }

    pub fn shortest_len(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).min().unwrap_or(0)
    }
}

/// Overwrite every step rank of `t` with `rank`.
pub fn label_constant(t: &mut Trajectory, rank: f64) {
    t.step_ranks = Some(alloc::vec![rank; t.len()]);
}
