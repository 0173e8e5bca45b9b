//! Genetic reproduction of "fake" trajectories.
//!
//! The two demonstrations are relabelled with constant per-step ranks
//! (`rank_high` for the good one, `rank_low` for the bad one). Offspring are
//! built by alternating contiguous segments of two parents and then mutating
//! individual steps; an offspring is kept when its mean step rank falls into
//! an intermediate selection bucket that still has quota. Accepted offspring
//! re-enter the parent pool.
//!
//! Step ranks are integers throughout, so the identity
//! `sum(offspring) = sum(from x) + sum(from y) + sum(mutated)` is exact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::{label_constant, RankedDataset};
use crate::env::{Source, State, Trajectory};
use crate::error::{BucketFill, Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GaConfig {
    /// Offspring to accept.
    pub n_offspring: usize,
    /// Probability of switching donor after each segment.
    pub p_crx: f64,
    /// Per-step mutation probability.
    pub p_mut: f64,
    /// Exclusive upper bound on crossover segment length.
    pub max_crossover_step: usize,
    pub n_ranks: usize,
    pub rank_low: i64,
    pub rank_high: i64,
    /// When set, an offspring must also lie within this distance of its
    /// bucket centre.
    pub bucket_tolerance: Option<f64>,
    pub max_attempts: usize,
    /// Only recombine the two original demonstrations.
    pub originals_only: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            n_offspring: 12,
            p_crx: 0.9,
            p_mut: 0.05,
            max_crossover_step: 10,
            n_ranks: 5,
            rank_low: 0,
            rank_high: 4,
            bucket_tolerance: None,
            max_attempts: 10_000,
            originals_only: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_offspring == 0 {
            return err("n_offspring must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p_crx) || !(0.0..=1.0).contains(&self.p_mut) {
            return err(format!("p_crx {} / p_mut {} must lie in [0, 1]", self.p_crx, self.p_mut));
        }
        if self.max_crossover_step < 2 {
            return err(format!("max_crossover_step must be >= 2, got {}", self.max_crossover_step));
        }
        if self.n_ranks < 3 {
            return err(format!("n_ranks must be >= 3, got {}", self.n_ranks));
        }
        if self.rank_low >= self.rank_high {
            return err(format!("rank_low {} must be < rank_high {}", self.rank_low, self.rank_high));
        }
        if let Some(tol) = self.bucket_tolerance {
            if !(tol > 0.0) {
                return err(format!("bucket_tolerance must be positive, got {tol}"));
            }
        }
        if self.max_attempts == 0 {
            return err("max_attempts must be positive".into());
        }
        Ok(())
    }

    /// Per-bucket acceptance quota: `ceil(K / (R - 2))`.
    pub fn bucket_quota(&self) -> usize {
        self.n_offspring.div_ceil(self.n_ranks - 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ParentX,
    ParentY,
    Mutated,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::ParentX => "x",
            Provenance::ParentY => "y",
            Provenance::Mutated => "m",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    /// `source = offspring`, step ranks populated.
    pub trajectory: Trajectory,
    pub ranks: Vec<i64>,
    pub parent_ids: (String, String),
    pub provenance: Vec<Provenance>,
}

/// Rank mass contributed by each provenance class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Decomposition {
    pub from_x: i64,
    pub from_y: i64,
    pub mutated: i64,
}

impl Decomposition {
    pub fn total(&self) -> i64 {
        self.from_x + self.from_y + self.mutated
    }
}

impl Offspring {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank_sum(&self) -> i64 {
        self.ranks.iter().sum()
    }

    pub fn mean_rank(&self) -> f64 {
        self.rank_sum() as f64 / self.len() as f64
    }

    /// Recompute the per-class rank mass by reading the parents' ranks at the
    /// copied indices. Fails if a copied step does not match its parent.
    pub fn decompose(&self, x: &Trajectory, y: &Trajectory) -> Result<Decomposition> {
        let xr = integer_ranks(x)?;
        let yr = integer_ranks(y)?;
        let mut d = Decomposition::default();
        for (t, p) in self.provenance.iter().enumerate() {
            let (parent, ranks, slot) = match p {
                Provenance::ParentX => (x, &xr, &mut d.from_x),
                Provenance::ParentY => (y, &yr, &mut d.from_y),
                Provenance::Mutated => {
                    d.mutated += self.ranks[t];
                    continue;
                }
            };
            if parent.states.get(t) != Some(&self.trajectory.states[t]) || ranks[t] != self.ranks[t] {
                return Err(Error::InvalidTrajectory(format!(
                    "{}: step {t} does not match parent {}",
                    self.trajectory.id, parent.id
                )));
            }
            *slot += ranks[t];
        }
        Ok(d)
    }

    fn sync_trajectory(&mut self) {
        self.trajectory.step_ranks = Some(self.ranks.iter().map(|&r| r as f64).collect());
    }
}

/// Integer view of a trajectory's step ranks.
pub fn integer_ranks(t: &Trajectory) -> Result<Vec<i64>> {
    let ranks = t
        .step_ranks
        .as_ref()
        .ok_or_else(|| Error::InvalidTrajectory(format!("{}: step ranks missing", t.id)))?;
    ranks
        .iter()
        .map(|&r| {
            if r.is_finite() && libm::floor(r) == r && r.abs() < 1e15 {
                Ok(r as i64)
            } else {
                Err(Error::InvalidTrajectory(format!("{}: non-integer step rank {r}", t.id)))
            }
        })
        .collect()
}

/// States visited anywhere in the current dataset, with their ground-truth
/// step rewards.
#[derive(Debug, Clone, Default)]
pub struct MutationPool {
    entries: Vec<(State, f64)>,
}

impl MutationPool {
    pub fn from_trajectories<'a>(ts: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut pool = Self::default();
        for t in ts {
            pool.extend(t);
        }
        pool
    }

    pub fn extend(&mut self, t: &Trajectory) {
        self.entries
            .extend(t.states.iter().cloned().zip(t.gt_step_rewards.iter().copied()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, s: &State) -> bool {
        self.entries.iter().any(|(p, _)| p == s)
    }
}

/// Constant-rank relabelling of the two demonstrations.
pub fn relabel_demos(
    good: &Trajectory,
    bad: &Trajectory,
    discount: f64,
    cfg: &GaConfig,
) -> Result<(Trajectory, Trajectory)> {
    if !(good.gt_return(discount) > bad.gt_return(discount)) {
        return Err(Error::Precondition(format!(
            "{} does not outperform {}",
            good.id, bad.id
        )));
    }
    let mut g = good.clone();
    let mut b = bad.clone();
    label_constant(&mut g, cfg.rank_high as f64);
    label_constant(&mut b, cfg.rank_low as f64);
    Ok((g, b))
}

/// Two distinct indices into `pool`, uniform without replacement, in random
/// order.
pub fn sample_parents(pool: &[Trajectory], rng: &mut Rng) -> Result<(usize, usize)> {
    let n = pool.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall { len: n });
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    Ok((i, j))
}

/// Segment-wise donor alternation, aligned at `t = 0`.
pub fn crossover(x: &Trajectory, y: &Trajectory, cfg: &GaConfig, rng: &mut Rng) -> Result<Offspring> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidTrajectory("crossover parent is empty".into()));
    }
    let xr = integer_ranks(x)?;
    let yr = integer_ranks(y)?;
    let len = x.len().min(y.len());
    let mut from_x = rng.random_bool(0.5);
    let mut states = Vec::with_capacity(len);
    let mut rewards = Vec::with_capacity(len);
    let mut ranks = Vec::with_capacity(len);
    let mut provenance = Vec::with_capacity(len);
    let mut t = 0;
    while t < len {
        let seg = rng.random_range(1..cfg.max_crossover_step);
        let end = (t + seg).min(len);
        let (src, src_ranks, tag) = if from_x {
            (x, &xr, Provenance::ParentX)
        } else {
            (y, &yr, Provenance::ParentY)
        };
        states.extend_from_slice(&src.states[t..end]);
        rewards.extend_from_slice(&src.gt_step_rewards[t..end]);
        ranks.extend_from_slice(&src_ranks[t..end]);
        provenance.extend(core::iter::repeat_n(tag, end - t));
        t = end;
        if t < len && rng.random::<f64>() < cfg.p_crx {
            from_x = !from_x;
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("parent_x".to_string(), x.id.clone());
    meta.insert("parent_y".to_string(), y.id.clone());
    let mut off = Offspring {
        trajectory: Trajectory {
            id: format!("child-of-{}-{}", x.id, y.id),
            env: x.env,
            states,
            actions: None,
            gt_step_rewards: rewards,
            step_ranks: None,
            source: Source::Offspring,
            meta,
        },
        ranks,
        parent_ids: (x.id.clone(), y.id.clone()),
        provenance,
    };
    off.sync_trajectory();
    Ok(off)
}

/// Independently per step with probability `p_mut`, swap in a random pool
/// state together with a uniform random rank.
pub fn mutate(mut off: Offspring, pool: &MutationPool, cfg: &GaConfig, rng: &mut Rng) -> Result<Offspring> {
    if pool.is_empty() {
        return Err(Error::EmptyMutationPool);
    }
    for t in 0..off.len() {
        if rng.random::<f64>() < cfg.p_mut {
            let (s, r) = &pool.entries[rng.random_range(0..pool.len())];
            off.trajectory.states[t] = s.clone();
            off.trajectory.gt_step_rewards[t] = *r;
            off.ranks[t] = rng.random_range(cfg.rank_low..=cfg.rank_high);
            off.provenance[t] = Provenance::Mutated;
        }
    }
    off.sync_trajectory();
    Ok(off)
}

/// Bucket of a mean rank `rank_sum / len` under the uniform partition of
/// `[rank_low, rank_high]` into `n_ranks` half-open intervals (the last one
/// closed). Exact integer arithmetic.
pub fn bucket_of(rank_sum: i64, len: usize, cfg: &GaConfig) -> usize {
    let len = len as i128;
    let num = (rank_sum as i128 - cfg.rank_low as i128 * len) * cfg.n_ranks as i128;
    let den = (cfg.rank_high - cfg.rank_low) as i128 * len;
    let b = num.div_euclid(den).clamp(0, cfg.n_ranks as i128 - 1);
    b as usize
}

/// `[lo, hi)` bounds of bucket `b` (the top bucket includes `hi`).
pub fn bucket_bounds(b: usize, cfg: &GaConfig) -> (f64, f64) {
    let w = (cfg.rank_high - cfg.rank_low) as f64 / cfg.n_ranks as f64;
    let lo = cfg.rank_low as f64 + w * b as f64;
    let hi = if b + 1 == cfg.n_ranks { cfg.rank_high as f64 } else { lo + w };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quotas {
    filled: Vec<usize>,
    per_bucket: usize,
    limit: usize,
}

impl Quotas {
    pub fn new(cfg: &GaConfig) -> Self {
        Self { filled: vec![0; cfg.n_ranks], per_bucket: cfg.bucket_quota(), limit: cfg.n_offspring }
    }

    pub fn filled(&self, bucket: usize) -> usize {
        self.filled[bucket]
    }

    pub fn per_bucket(&self) -> usize {
        self.per_bucket
    }

    pub fn total(&self) -> usize {
        self.filled.iter().sum()
    }

    pub fn report(&self) -> Vec<BucketFill> {
        let r = self.filled.len();
        (1..r - 1)
            .map(|b| BucketFill { bucket: b, filled: self.filled[b], quota: self.per_bucket })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    EndBucket,
    QuotaFull,
    OutsideTolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept { bucket: usize },
    Reject { bucket: usize, reason: RejectReason },
}

/// Interval selection rule. Updates `quotas` on acceptance.
pub fn select(off: &Offspring, cfg: &GaConfig, quotas: &mut Quotas) -> Verdict {
    let bucket = bucket_of(off.rank_sum(), off.len(), cfg);
    let reject = |reason| Verdict::Reject { bucket, reason };
    if bucket == 0 || bucket + 1 == cfg.n_ranks {
        return reject(RejectReason::EndBucket);
    }
    if let Some(tol) = cfg.bucket_tolerance {
        let (lo, hi) = bucket_bounds(bucket, cfg);
        if (off.mean_rank() - 0.5 * (lo + hi)).abs() > tol {
            return reject(RejectReason::OutsideTolerance);
        }
    }
    if quotas.filled[bucket] >= quotas.per_bucket || quotas.total() >= quotas.limit {
        return reject(RejectReason::QuotaFull);
    }
    quotas.filled[bucket] += 1;
    Verdict::Accept { bucket }
}

/// The reproduction loop: sample parents, cross over, mutate, select, until
/// `n_offspring` are accepted or `max_attempts` run out.
///
/// `good` and `bad` must already carry constant step ranks (see
/// [`relabel_demos`]). The result lists the originals first, then the
/// offspring in acceptance order.
pub fn reproduce(good: &Trajectory, bad: &Trajectory, cfg: &GaConfig, seed: u64) -> Result<RankedDataset> {
    cfg.validate()?;
    integer_ranks(good)?;
    integer_ranks(bad)?;
    let mut rng = seed::derive_rng(seed, "reproduce", &[]);
    let mut pool = vec![good.clone(), bad.clone()];
    let mut labels = vec![(cfg.n_ranks - 1) as u32, 0];
    let mut mutation_pool = MutationPool::from_trajectories(&pool);
    let mut quotas = Quotas::new(cfg);
    let mut attempts = 0;
    let mut accepted = 0;
    while accepted < cfg.n_offspring && attempts < cfg.max_attempts {
        attempts += 1;
        let candidates = if cfg.originals_only { 2 } else { pool.len() };
        let (i, j) = sample_parents(&pool[..candidates], &mut rng)?;
        let child = crossover(&pool[i], &pool[j], cfg, &mut rng)?;
        let child = mutate(child, &mutation_pool, cfg, &mut rng)?;
        if let Verdict::Accept { bucket } = select(&child, cfg, &mut quotas) {
            let mut t = child.trajectory;
            t.id = format!("offspring-{accepted:02}");
            t.meta.insert("bucket".to_string(), bucket.to_string());
            t.meta.insert("attempt".to_string(), attempts.to_string());
            let tags: String = child.provenance.iter().map(|p| p.tag()).collect();
            t.meta.insert("provenance".to_string(), tags);
            mutation_pool.extend(&t);
            pool.push(t);
            labels.push(bucket as u32);
            accepted += 1;
        }
    }
    if accepted < cfg.n_offspring {
        return Err(Error::ReproductionStalled { attempts, accepted, buckets: quotas.report() });
    }
    let mut ds = RankedDataset::new(pool, labels, seed)?;
    ds.attempts_used = attempts;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_demo_pair, EnvSpec};

    fn demos() -> (Trajectory, Trajectory) {
        let spec = EnvSpec::grid_nav();
        let (g, b) = make_demo_pair(&spec, 0.1, 0.5, 4).unwrap();
        relabel_demos(&g, &b, spec.discount, &GaConfig::default()).unwrap()
    }

    #[test]
    fn relabel_uses_constant_ranks() {
        let (g, b) = demos();
        assert_eq!(g.step_ranks.as_deref(), Some(&[4.0; 50][..]));
        assert_eq!(b.step_ranks.as_deref(), Some(&[0.0; 50][..]));
        assert!(g.rank_sum() > b.rank_sum());
    }

    #[test]
    fn relabel_rejects_misordered_demos() {
        let (g, b) = demos();
        assert!(relabel_demos(&b, &g, 0.99, &GaConfig::default()).is_err());
    }

    #[test]
    fn sample_parents_needs_two() {
        let (g, b) = demos();
        let mut rng = seed::rng(0);
        assert!(matches!(sample_parents(&[g.clone()], &mut rng), Err(Error::DatasetTooSmall { len: 1 })));
        let pool = [g, b];
        let mut seen = [false; 2];
        for _ in 0..50 {
            let (i, j) = sample_parents(&pool, &mut rng).unwrap();
            assert_ne!(i, j);
            seen[i] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn sample_parents_covers_all_pairs() {
        let (g, _) = demos();
        let pool: Vec<_> = (0..5).map(|_| g.clone()).collect();
        let mut rng = seed::rng(1);
        let mut seen = BTreeMap::new();
        for _ in 0..2000 {
            let (i, j) = sample_parents(&pool, &mut rng).unwrap();
            *seen.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn self_crossover_is_rank_neutral() {
        let (g, _) = demos();
        let mut rng = seed::rng(2);
        let off = crossover(&g, &g, &GaConfig::default(), &mut rng).unwrap();
        assert_eq!(off.rank_sum(), 200);
        assert_eq!(off.trajectory.states, g.states);
    }

    #[test]
    fn crossover_mean_rank_tracks_good_share() {
        let (g, b) = demos();
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let off = crossover(&g, &b, &GaConfig::default(), &mut rng).unwrap();
            let good_steps = off.provenance.iter().filter(|&&p| p == Provenance::ParentX).count();
            assert_eq!(off.mean_rank(), 4.0 * good_steps as f64 / 50.0);
            assert!((0.0..=4.0).contains(&off.mean_rank()));
        }
    }

    #[test]
    fn no_switching_copies_the_first_donor() {
        let (g, b) = demos();
        let cfg = GaConfig { p_crx: 0.0, ..GaConfig::default() };
        let mut rng = seed::rng(4);
        for _ in 0..10 {
            let off = crossover(&g, &b, &cfg, &mut rng).unwrap();
            let first = off.provenance[0];
            assert!(off.provenance.iter().all(|&p| p == first));
            let donor = if first == Provenance::ParentX { &g } else { &b };
            assert_eq!(off.trajectory.states, donor.states);
        }
    }

    #[test]
    fn crossover_rejects_unranked_or_empty_parents() {
        let (g, b) = demos();
        let mut rng = seed::rng(5);
        let mut unranked = b.clone();
        unranked.step_ranks = None;
        assert!(crossover(&g, &unranked, &GaConfig::default(), &mut rng).is_err());
        let mut empty = b;
        empty.states.clear();
        empty.gt_step_rewards.clear();
        empty.step_ranks = Some(Vec::new());
        assert!(matches!(
            crossover(&g, &empty, &GaConfig::default(), &mut rng),
            Err(Error::InvalidTrajectory(_))
        ));
    }

    #[test]
    fn zero_mutation_rate_is_identity() {
        let (g, b) = demos();
        let pool = MutationPool::from_trajectories([&g, &b]);
        let mut rng = seed::rng(6);
        let off = crossover(&g, &b, &GaConfig::default(), &mut rng).unwrap();
        let cfg = GaConfig { p_mut: 0.0, ..GaConfig::default() };
        assert_eq!(mutate(off.clone(), &pool, &cfg, &mut rng).unwrap(), off);
    }

    #[test]
    fn full_mutation_draws_uniform_ranks() {
        let (g, b) = demos();
        let pool = MutationPool::from_trajectories([&g, &b]);
        let cfg = GaConfig { p_mut: 1.0, ..GaConfig::default() };
        let mut rng = seed::rng(7);
        let mut total = 0i64;
        let mut steps = 0usize;
        while steps < 10_000 {
            let off = crossover(&g, &b, &cfg, &mut rng).unwrap();
            let off = mutate(off, &pool, &cfg, &mut rng).unwrap();
            assert!(off.provenance.iter().all(|&p| p == Provenance::Mutated));
            assert!(off.trajectory.states.iter().all(|s| pool.contains(s)));
            assert_eq!(off.decompose(&g, &b).unwrap().total(), off.rank_sum());
            total += off.rank_sum();
            steps += off.len();
        }
        // Uniform{0..4}: mean 2, sd sqrt(2); 4 sigma over 10^4 draws is ~0.057.
        let m = total as f64 / steps as f64;
        assert!((m - 2.0).abs() < 0.06, "mean rank {m}");
    }

    #[test]
    fn empty_pool_is_an_error() {
        let (g, b) = demos();
        let mut rng = seed::rng(8);
        let off = crossover(&g, &b, &GaConfig::default(), &mut rng).unwrap();
        assert!(matches!(
            mutate(off, &MutationPool::default(), &GaConfig::default(), &mut rng),
            Err(Error::EmptyMutationPool)
        ));
    }

    #[test]
    fn bucket_partition_matches_interval_enumeration() {
        let cfg = GaConfig::default();
        // Brute force: locate m by walking the interval list.
        let edges = [0.0, 0.8, 1.6, 2.4, 3.2, 4.0];
        for len in [1usize, 7, 50] {
            for sum in 0..=(4 * len as i64) {
                let m = sum as f64 / len as f64;
                let expect = (0..5).find(|&b| m >= edges[b] && m < edges[b + 1]).unwrap_or(4);
                // 0.8 etc. are not exact in binary; only compare away from the edges.
                if edges.iter().all(|e| (m - e).abs() > 1e-9) {
                    assert_eq!(bucket_of(sum, len, &cfg), expect, "sum {sum} len {len}");
                }
            }
        }
        // m = 2.1 sits in [1.6, 2.4)
        assert_eq!(bucket_of(21, 10, &cfg), 2);
        assert_eq!(bucket_bounds(2, &cfg), (1.6, 2.4000000000000004));
        // exact edges go up: 0.8 = 4/5
        assert_eq!(bucket_of(4, 5, &cfg), 1);
    }

    #[test]
    fn end_buckets_and_quota() {
        let cfg = GaConfig::default();
        assert_eq!(cfg.bucket_quota(), 4);
        let (g, b) = demos();
        let mut rng = seed::rng(9);
        let mut off = crossover(&g, &b, &cfg, &mut rng).unwrap();
        let mut q = Quotas::new(&cfg);
        off.ranks = vec![0; 50];
        off.ranks[0] = 5; // mean 0.1
        assert_eq!(
            select(&off, &cfg, &mut q),
            Verdict::Reject { bucket: 0, reason: RejectReason::EndBucket }
        );
        off.ranks = vec![2; 50];
        for _ in 0..4 {
            assert_eq!(select(&off, &cfg, &mut q), Verdict::Accept { bucket: 2 });
        }
        assert_eq!(
            select(&off, &cfg, &mut q),
            Verdict::Reject { bucket: 2, reason: RejectReason::QuotaFull }
        );
    }

    #[test]
    fn tolerance_narrows_buckets() {
        let cfg = GaConfig { bucket_tolerance: Some(0.1), ..GaConfig::default() };
        let (g, b) = demos();
        let mut rng = seed::rng(10);
        let mut off = crossover(&g, &b, &cfg, &mut rng).unwrap();
        let mut q = Quotas::new(&cfg);
        off.ranks = vec![2; 50];
        off.ranks[0] = 0;
        off.ranks[1] = 0;
        off.ranks[2] = 0;
        off.ranks[3] = 0;
        off.ranks[4] = 0; // mean 1.8, centre 2.0
        assert_eq!(
            select(&off, &cfg, &mut q),
            Verdict::Reject { bucket: 2, reason: RejectReason::OutsideTolerance }
        );
    }

    #[test]
    fn reproduce_defaults() {
        let (g, b) = demos();
        let ds = reproduce(&g, &b, &GaConfig::default(), 11).unwrap();
        assert_eq!(ds.len(), 14);
        let by_rank = ds.by_rank();
        assert_eq!(by_rank.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(by_rank.values().all(|ids| ids.len() <= 4));
        assert!(ds.attempts_used >= 12);
        assert_eq!(ds, reproduce(&g, &b, &GaConfig::default(), 11).unwrap());
    }

    #[test]
    fn reproduce_stalls_with_report() {
        let (g, b) = demos();
        let cfg = GaConfig { max_attempts: 3, ..GaConfig::default() };
        match reproduce(&g, &b, &cfg, 0) {
            Err(Error::ReproductionStalled { attempts, buckets, .. }) => {
                assert_eq!(attempts, 3);
                assert_eq!(buckets.len(), 3);
            }
            other => panic!("expected stall, got {other:?}"),
        }
    }
}
