//! Extrapolation and policy comparison statistics.
//!
//! Predicted and ground-truth returns are min-max normalized independently
//! over the evaluation set. Standard deviations are population deviations.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::math::{mean, pop_std};
use crate::reward::RewardFn;

/// Trajectories whose normalized ground truth is below this are left out of
/// the accuracy ratio.
pub const ACCURACY_GT_FLOOR: f64 = 0.1;
pub const DEFAULT_BINS: usize = 8;
pub const NORMALIZATION: &str = "min-max over evaluation set";

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationRow {
    pub id: String,
    pub gt_return: f64,
    pub pred_return: f64,
    pub gt_norm: f64,
    pub pred_norm: f64,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationReport {
    pub rows: Vec<ExtrapolationRow>,
    /// Mean of `pred_norm / gt_norm` over rows with `gt_norm >= 0.1`.
    pub accuracy_ratio: f64,
    pub spearman_rho: f64,
    pub pearson_r: f64,
    /// Std of `pred_norm` per ground-truth bin; `None` for empty bins.
    pub per_bin_std: Vec<Option<f64>>,
    /// Unweighted mean over non-empty bins.
    pub mean_bin_std: f64,
    pub n_bins: usize,
    pub bin_edges: Vec<f64>,
    /// Every prediction was identical: `pred_norm` is set to 0 and the
    /// correlations to 0.
    pub zero_spread_predictions: bool,
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0)
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Build a report from precomputed returns.
pub fn report_from_returns(ids: Vec<String>, gt: &[f64], pred: &[f64], n_bins: usize) -> Result<ExtrapolationReport> {
    if n_bins < 2 {
        return Err(Error::Config(alloc::format!("n_bins must be >= 2, got {n_bins}")));
    }
    if gt.len() != pred.len() || ids.len() != gt.len() {
        return Err(Error::DimensionMismatch { expected: gt.len(), found: pred.len() });
    }
    if gt.iter().chain(pred).any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite return in evaluation set".into()));
    }
    let (g_lo, g_hi) = min_max(gt);
    if gt.is_empty() || g_lo == g_hi {
        return Err(Error::DegenerateEval);
    }
    let (p_lo, p_hi) = min_max(pred);
    let zero_spread = p_lo == p_hi;
    let gt_norm: Vec<f64> = gt.iter().map(|g| (g - g_lo) / (g_hi - g_lo)).collect();
    let pred_norm: Vec<f64> = if zero_spread {
        vec![0.0; pred.len()]
    } else {
        pred.iter().map(|p| (p - p_lo) / (p_hi - p_lo)).collect()
    };
    let bin_of = |g: f64| ((g * n_bins as f64) as usize).min(n_bins - 1);
    let bin_edges = (0..=n_bins).map(|b| b as f64 / n_bins as f64).collect();

    let ratios: Vec<f64> = gt_norm
        .iter()
        .zip(&pred_norm)
        .filter(|(g, _)| **g >= ACCURACY_GT_FLOOR)
        .map(|(g, p)| p / g)
        .collect();

    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (g, p) in gt_norm.iter().zip(&pred_norm) {
        per_bin[bin_of(*g)].push(*p);
    }
    let per_bin_std: Vec<Option<f64>> =
        per_bin.iter().map(|b| (!b.is_empty()).then(|| pop_std(b))).collect();
    let filled: Vec<f64> = per_bin_std.iter().flatten().copied().collect();

    let rows = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| ExtrapolationRow {
            id,
            gt_return: gt[i],
            pred_return: pred[i],
            gt_norm: gt_norm[i],
            pred_norm: pred_norm[i],
            bin: bin_of(gt_norm[i]),
        })
        .collect();
    Ok(ExtrapolationReport {
        rows,
        accuracy_ratio: mean(&ratios),
        spearman_rho: if zero_spread { 0.0 } else { spearman(gt, pred) },
        pearson_r: if zero_spread { 0.0 } else { pearson(gt, pred) },
        per_bin_std,
        mean_bin_std: mean(&filled),
        n_bins,
        bin_edges,
        zero_spread_predictions: zero_spread,
    })
}

/// Score every evaluation trajectory with `reward` (undiscounted sum) and
/// compare against its discounted ground-truth return.
pub fn extrapolation_report(
    reward: &dyn RewardFn,
    eval: &[Trajectory],
    discount: f64,
    n_bins: usize,
) -> Result<ExtrapolationReport> {
    let ids = eval.iter().map(|t| t.id.clone()).collect();
    let gt: Vec<f64> = eval.iter().map(|t| t.gt_return(discount)).collect();
    let pred: Vec<f64> = eval.iter().map(|t| t.states.iter().map(|s| reward.reward(s)).sum()).collect();
    report_from_returns(ids, &gt, &pred, n_bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub method: String,
    /// Grand mean ground-truth return.
    pub avg: f64,
    /// Std across all (trial, model) evaluations.
    pub std: f64,
    pub n_trials: usize,
    pub n_models: usize,
    /// Std across models within each trial.
    pub per_trial_std: Vec<f64>,
    pub per_trial_std_mean: f64,
}

/// `evals[trial][model]` ground-truth returns.
pub fn policy_table_row(method: &str, evals: &[Vec<f64>]) -> Result<PolicyRow> {
    if evals.is_empty() || evals.iter().any(|t| t.is_empty()) {
        return Err(Error::Precondition("need at least one trial with at least one model".into()));
    }
    let all: Vec<f64> = evals.iter().flatten().copied().collect();
    let per_trial_std: Vec<f64> = evals.iter().map(|t| pop_std(t)).collect();
    Ok(PolicyRow {
        method: method.into(),
        avg: mean(&all),
        std: pop_std(&all),
        n_trials: evals.len(),
        n_models: evals.iter().map(|t| t.len()).max().unwrap_or(0),
        per_trial_std_mean: mean(&per_trial_std),
        per_trial_std,
    })
}
