//! Learned state reward and the pairwise ranking loss.
//!
//! For a pair where `hi` outranks `lo`, with predicted returns
//! `S = sum_s R(s)` (undiscounted), the loss is
//!
//! ```text
//! L = -log( exp(S_hi) / (exp(S_lo) + exp(S_hi)) ) = softplus(S_lo - S_hi)
//! dL/dS_hi = -sigmoid(S_lo - S_hi),  dL/dS_lo = +sigmoid(S_lo - S_hi)
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::RankedDataset;
use crate::env::State;
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::mlp::{Mlp, Trace};
use crate::ranking::SnippetPair;
use crate::seed;

/// Anything that scores single states. Policy search and metrics only see
/// rewards through this trait.
pub trait RewardFn {
    fn reward(&self, state: &State) -> f64;
}

/// `R_theta`: `[feature_dim, h, h, h, 1]` rectifier network.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    mlp: Mlp,
}

impl RewardModel {
    pub fn init(feature_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::derive_rng(seed, "reward-init", &[]);
        Self::from_mlp(Mlp::init(&[feature_dim, hidden, hidden, hidden, 1], &mut rng)?)
    }

    pub fn zeros(feature_dim: usize, hidden: usize) -> Result<Self> {
        Self::from_mlp(Mlp::zeros(&[feature_dim, hidden, hidden, hidden, 1])?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.output_dim() != 1 {
            return Err(Error::Config(format!("reward network must have one output, has {}", mlp.output_dim())));
        }
        Ok(Self { mlp })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn predict_state(&self, s: &State) -> Result<f64> {
        let mut trace = Trace::default();
        Ok(self.mlp.forward(&s.features, &mut trace)?[0])
    }

    /// Undiscounted sum of per-state predictions.
    pub fn predict_return(&self, states: &[State]) -> Result<f64> {
        if states.is_empty() {
            return Err(Error::Precondition("predicted return of an empty state sequence".into()));
        }
        let mut trace = Trace::default();
        let mut total = 0.0;
        for s in states {
            total += self.mlp.forward(&s.features, &mut trace)?[0];
        }
        Ok(total)
    }
}

impl RewardFn for RewardModel {
    fn reward(&self, state: &State) -> f64 {
        self.predict_state(state).unwrap_or(f64::NAN)
    }
}

/// Loss for predicted returns `s_lo`, `s_hi`.
pub fn pair_loss_from_returns(s_lo: f64, s_hi: f64) -> f64 {
    softplus(s_lo - s_hi)
}

pub fn pair_loss(model: &RewardModel, lo: &[State], hi: &[State]) -> Result<f64> {
    Ok(pair_loss_from_returns(model.predict_return(lo)?, model.predict_return(hi)?))
}

/// Analytic gradient of [`pair_loss`] with respect to the flat parameters.
pub fn pair_grad(model: &RewardModel, lo: &[State], hi: &[State]) -> Result<Vec<f64>> {
    let s_lo = model.predict_return(lo)?;
    let s_hi = model.predict_return(hi)?;
    let d = sigmoid(s_lo - s_hi);
    let n = model.mlp.n_params();
    let mut trace = Trace::default();
    let mut sum_grad = |states: &[State]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; n];
        for s in states {
            model.mlp.forward(&s.features, &mut trace)?;
            model.mlp.backward(&mut trace, &[1.0], &mut g);
        }
        Ok(g)
    };
    let g_lo = sum_grad(lo)?;
    let g_hi = sum_grad(hi)?;
    Ok(g_lo.iter().zip(&g_hi).map(|(a, b)| d * (a - b)).collect())
}

/// Loss of a snippet pair whose states live in `ds`.
pub fn snippet_pair_loss(model: &RewardModel, pair: &SnippetPair, ds: &RankedDataset) -> Result<f64> {
    pair_loss(model, pair.lo.states(ds), pair.hi.states(ds))
}

/// Fraction of pairs whose predicted returns are correctly ordered.
pub fn ordering_accuracy(model: &RewardModel, pairs: &[SnippetPair], ds: &RankedDataset) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut ok = 0usize;
    for p in pairs {
        if model.predict_return(p.hi.states(ds))? > model.predict_return(p.lo.states(ds))? {
            ok += 1;
        }
    }
    Ok(ok as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Pairs per minibatch, drawn with replacement.
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Hidden width used by [`TrainConfig::init_model`].
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, steps: 5000, batch_size: 16, l2: 0.0, seed: 0, hidden: 64 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config("batch_size and hidden must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }

    /// Fan-in scaled uniform initialisation seeded from `self.seed`.
    pub fn init_model(&self, feature_dim: usize) -> Result<RewardModel> {
        RewardModel::init(feature_dim, self.hidden, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RewardModel,
    /// Mean minibatch loss at each step, before the update.
    pub losses: Vec<f64>,
}

/// Training pairs with states interned, so repeated states inside a
/// minibatch are evaluated once.
struct Interned {
    features: Vec<Vec<f64>>,
    lo: Vec<Vec<u32>>,
    hi: Vec<Vec<u32>>,
}

impl Interned {
    fn build(pairs: &[SnippetPair], ds: &RankedDataset) -> Self {
        let mut ids: BTreeMap<Vec<u64>, u32> = BTreeMap::new();
        let mut features = Vec::new();
        let mut intern = |s: &State| -> u32 {
            let key: Vec<u64> = s.features.iter().map(|x| x.to_bits()).collect();
            *ids.entry(key).or_insert_with(|| {
                features.push(s.features.clone());
                (features.len() - 1) as u32
            })
        };
        let mut lo = Vec::with_capacity(pairs.len());
        let mut hi = Vec::with_capacity(pairs.len());
        for p in pairs {
            lo.push(p.lo.states(ds).iter().map(&mut intern).collect());
            hi.push(p.hi.states(ds).iter().map(&mut intern).collect());
        }
        Self { features, lo, hi }
    }
}

struct Workspace {
    slot: Vec<u32>,
    unique: Vec<u32>,
    outs: Vec<f64>,
    coefs: Vec<f64>,
    traces: Vec<Trace>,
}

const ABSENT: u32 = u32::MAX;

impl Workspace {
    fn new(n_states: usize) -> Self {
        Self { slot: vec![ABSENT; n_states], unique: Vec::new(), outs: Vec::new(), coefs: Vec::new(), traces: Vec::new() }
    }
}

/// Mean loss over `batch` and its gradient, accumulated into `grad`.
fn batch_loss_grad(
    mlp: &Mlp,
    data: &Interned,
    batch: &[usize],
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<f64> {
    ws.unique.clear();
    for &k in batch {
        for &id in data.lo[k].iter().chain(&data.hi[k]) {
            if ws.slot[id as usize] == ABSENT {
                ws.slot[id as usize] = ws.unique.len() as u32;
                ws.unique.push(id);
            }
        }
    }
    let n = ws.unique.len();
    if ws.traces.len() < n {
        ws.traces.resize_with(n, Trace::default);
    }
    ws.outs.clear();
    for (pos, &id) in ws.unique.iter().enumerate() {
        let y = mlp.forward(&data.features[id as usize], &mut ws.traces[pos])?[0];
        ws.outs.push(y);
    }
    ws.coefs.clear();
    ws.coefs.resize(n, 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &k in batch {
        let s_lo: f64 = data.lo[k].iter().map(|&id| ws.outs[ws.slot[id as usize] as usize]).sum();
        let s_hi: f64 = data.hi[k].iter().map(|&id| ws.outs[ws.slot[id as usize] as usize]).sum();
        loss += softplus(s_lo - s_hi);
        let d = sigmoid(s_lo - s_hi) * scale;
        for &id in &data.lo[k] {
            ws.coefs[ws.slot[id as usize] as usize] += d;
        }
        for &id in &data.hi[k] {
            ws.coefs[ws.slot[id as usize] as usize] -= d;
        }
    }
    for pos in 0..n {
        let c = ws.coefs[pos];
        if c != 0.0 {
            mlp.backward(&mut ws.traces[pos], &[c], grad);
        }
    }
    for &id in &ws.unique {
        ws.slot[id as usize] = ABSENT;
    }
    Ok(loss * scale)
}

/// Plain minibatch gradient descent on the ranking loss.
pub fn train(model: RewardModel, pairs: &[SnippetPair], ds: &RankedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut model = model;
    let data = Interned::build(pairs, ds);
    if let Some(f) = data.features.first() {
        if f.len() != model.feature_dim() {
            return Err(Error::DimensionMismatch { expected: model.feature_dim(), found: f.len() });
        }
    }
    let mut rng = seed::derive_rng(cfg.seed, "train", &[]);
    let mut ws = Workspace::new(data.features.len());
    let mut grad = vec![0.0; model.mlp.n_params()];
    let mut batch = vec![0usize; cfg.batch_size];
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        for b in batch.iter_mut() {
            *b = rng.random_range(0..pairs.len());
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = batch_loss_grad(&model.mlp, &data, &batch, &mut ws, &mut grad)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        let params = model.mlp.params_mut();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * (g + cfg.l2 * *p);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { step });
        }
        losses.push(loss);
    }
    Ok(TrainOutcome { model, losses })
}
