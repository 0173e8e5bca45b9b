//! Snippet subsampling and ordered snippet pairs.
//!
//! Snippets are stored by reference (parent index, start, length) so pair
//! lists stay small and can be written out without copying states.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::RankedDataset;
use crate::env::State;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    /// Index of the parent trajectory in its dataset.
    pub parent: usize,
    pub parent_id: String,
    pub start: usize,
    pub length: usize,
    /// Mean step rank over the slice.
    pub rank_label: f64,
}

impl Snippet {
    pub fn states<'a>(&self, ds: &'a RankedDataset) -> &'a [State] {
        &ds.trajectories[self.parent].states[self.start..self.start + self.length]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnippetPair {
    pub lo: Snippet,
    pub hi: Snippet,
    /// `hi.rank_label - lo.rank_label`, strictly positive.
    pub margin: f64,
}

impl SnippetPair {
    /// Order two snippets so that `hi` outranks `lo`. Ties give `None`.
    pub fn orient(a: Snippet, b: Snippet) -> Option<Self> {
        if a.rank_label == b.rank_label {
            return None;
        }
        let (lo, hi) = if a.rank_label < b.rank_label { (a, b) } else { (b, a) };
        let margin = hi.rank_label - lo.rank_label;
        Some(Self { lo, hi, margin })
    }
}

fn slice_mean(ranks: &[f64]) -> f64 {
    ranks.iter().sum::<f64>() / ranks.len() as f64
}

/// Draw `n_snippets` random contiguous slices. Parent, length and start are
/// each uniform.
pub fn subsample(
    ds: &RankedDataset,
    n_snippets: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Snippet>> {
    if n_snippets < 2 {
        return Err(Error::Config(format!("need at least 2 snippets, got {n_snippets}")));
    }
    if min_len == 0 || min_len > max_len {
        return Err(Error::Config(format!("invalid snippet length range [{min_len}, {max_len}]")));
    }
    if ds.is_empty() {
        return Err(Error::DatasetTooSmall { len: 0 });
    }
    for t in &ds.trajectories {
        if t.len() < max_len {
            return Err(Error::Config(format!(
                "snippet max_len {max_len} exceeds length {} of trajectory {}",
                t.len(),
                t.id
            )));
        }
        if t.step_ranks.is_none() {
            return Err(Error::InvalidTrajectory(format!("{}: step ranks missing", t.id)));
        }
    }
    let mut rng = seed::derive_rng(seed, "subsample", &[]);
    let out = (0..n_snippets)
        .map(|_| {
            let parent = rng.random_range(0..ds.len());
            let t = &ds.trajectories[parent];
            let length = rng.random_range(min_len..=max_len);
            let start = rng.random_range(0..=t.len() - length);
            let ranks = t.step_ranks.as_ref().expect("checked above");
            Snippet {
                parent,
                parent_id: t.id.clone(),
                start,
                length,
                rank_label: slice_mean(&ranks[start..start + length]),
            }
        })
        .collect();
    Ok(out)
}

fn qualifies(a: f64, b: f64, min_margin: f64) -> bool {
    let d = (a - b).abs();
    d > 0.0 && d >= min_margin
}

const REJECTION_BUDGET: usize = 64;

/// Sample `n_pairs` unordered snippet pairs uniformly among those whose
/// label gap is at least `min_margin`, oriented so `hi` outranks `lo`.
pub fn make_pairs(snips: &[Snippet], n_pairs: usize, min_margin: f64, seed: u64) -> Result<Vec<SnippetPair>> {
    let n = snips.len();
    let (lo, hi) = snips.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.rank_label), hi.max(s.rank_label))
    });
    if n < 2 || !qualifies(lo, hi, min_margin) {
        return Err(Error::EmptyPairs);
    }
    let mut rng = seed::derive_rng(seed, "pairs", &[]);
    let draw = |rng: &mut seed::Rng| {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        (i, j)
    };
    let mut out = Vec::with_capacity(n_pairs);
    let mut enumerated: Option<Vec<(usize, usize)>> = None;
    while out.len() < n_pairs {
        let picked = match &enumerated {
            Some(all) => Some(all[rng.random_range(0..all.len())]),
            None => (0..REJECTION_BUDGET)
                .map(|_| draw(&mut rng))
                .find(|&(i, j)| qualifies(snips[i].rank_label, snips[j].rank_label, min_margin)),
        };
        match picked {
            Some((i, j)) => {
                let pair = SnippetPair::orient(snips[i].clone(), snips[j].clone()).expect("qualifying pair");
                out.push(pair);
            }
            None => {
                // Qualifying pairs are rare: sample from the explicit list.
                let all: Vec<_> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| qualifies(snips[i].rank_label, snips[j].rank_label, min_margin))
                    .collect();
                enumerated = Some(all);
            }
        }
    }
    Ok(out)
}
