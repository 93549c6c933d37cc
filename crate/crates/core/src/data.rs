//! Labeled datasets, synthetic generation and label-skewed partitioning.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Tolerance on the unit-sum constraint of a [`LabelDistribution`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Redraws allowed before a partition with an empty worker is reported.
const MAX_PARTITION_DRAWS: usize = 100;

/// Features stored row-major next to class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

/// Borrowed `(x, y)` pair.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub y: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(invalid("feature_dim and num_classes must be positive"));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(invalid(format!(
                "{} feature values for {} labels of dimension {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(invalid(format!("label {y} out of range for {num_classes} classes")));
        }
        crate::numerics::check_finite(&features)?;
        Ok(Self {
            features,
            feature_dim,
            labels,
            num_classes,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            x: self.x(i),
            y: self.labels[i],
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = Sample<'_>> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Indices of the samples labeled `c`, in dataset order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == c).collect()
    }

    /// The samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            feature_dim: self.feature_dim,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Same features with every label passed through `map`.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Result<Self> {
        let labels = self.labels.iter().map(|&y| map(y)).collect();
        Self::new(self.features.clone(), self.feature_dim, labels, self.num_classes)
    }

    /// Seeded shuffle, then the first `train_fraction` of samples form the
    /// training set and the rest the test set.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(invalid("train_fraction must lie in [0, 1]"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, "split", 0));
        let cut = libm::round(train_fraction * self.len() as f64) as usize;
        Ok((self.subset(&idx[..cut]), self.subset(&idx[cut..])))
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty label distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("label distribution entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid(format!("label distribution sums to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(num_classes: usize, c: usize) -> Self {
        let mut p = vec![0.0; num_classes];
        p[c] = 1.0;
        Self(p)
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(invalid("no samples to form a label distribution"));
        }
        Ok(Self(
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        ))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `Σ_c |p^c − other^c|`.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Smallest class index with the minimal probability.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.0.iter().enumerate() {
            if p < self.0[best] {
                best = c;
            }
        }
        best
    }
}

/// One worker's local dataset with its per-class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerShard {
    data: LabeledDataset,
    class_counts: Vec<usize>,
}

impl WorkerShard {
    pub fn new(data: LabeledDataset) -> Self {
        let class_counts = data.class_counts();
        Self { data, class_counts }
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn size(&self) -> usize {
        self.data.len()
    }
}

/// How [`dirichlet_partition`] sizes the shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionMode {
    /// Every worker receives `⌊N/n⌋` or `⌈N/n⌉` samples; each worker's class
    /// mix follows its own Dirichlet draw over classes.
    #[default]
    EqualSize,
    /// Each class is split across workers by a Dirichlet draw over workers;
    /// shard sizes follow from the draws.
    PerClass,
}

/// Isotropic unit-variance Gaussian blobs whose means sit `class_separation`
/// apart. With `feature_dim ≥ num_classes` the means are the scaled vertices of
/// a regular simplex; otherwise they lie on a circle (or a line when
/// `feature_dim = 1`) with neighbouring means `class_separation` apart.
pub fn generate_synthetic(
    num_classes: usize,
    feature_dim: usize,
    samples_per_class: usize,
    class_separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 || feature_dim == 0 || samples_per_class == 0 {
        return Err(invalid(
            "synthetic data needs num_classes >= 2, feature_dim >= 1, samples_per_class >= 1",
        ));
    }
    if !(class_separation > 0.0) {
        return Err(invalid("class_separation must be positive"));
    }
    let means = class_means(num_classes, feature_dim, class_separation);
    let mut rng = rng::stream(seed, "synthetic", 0);
    let mut features = Vec::with_capacity(num_classes * samples_per_class * feature_dim);
    let mut labels = Vec::with_capacity(num_classes * samples_per_class);
    for _ in 0..samples_per_class {
        for (c, mean) in means.iter().enumerate() {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + z);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(features, feature_dim, labels, num_classes)
}

fn class_means(num_classes: usize, feature_dim: usize, sep: f64) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|c| {
            let mut m = vec![0.0; feature_dim];
            if feature_dim >= num_classes {
                m[c] = sep / core::f64::consts::SQRT_2;
            } else if feature_dim >= 2 {
                let angle = 2.0 * core::f64::consts::PI * c as f64 / num_classes as f64;
                let radius = sep / (2.0 * libm::sin(core::f64::consts::PI / num_classes as f64));
                m[0] = radius * libm::cos(angle);
                m[1] = radius * libm::sin(angle);
            } else {
                m[0] = sep * c as f64;
            }
            m
        })
        .collect()
}

/// A symmetric `Dirichlet(alpha)` draw over `k` categories.
pub fn dirichlet_draw<R: Rng + ?Sized>(rng: &mut R, alpha: f64, k: usize) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| invalid(format!("gamma({alpha}): {e}")))?;
    let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        // every gamma draw underflowed; fall back to a uniformly chosen vertex
        let hot = rng.random_range(0..k);
        w.iter_mut().enumerate().for_each(|(i, v)| *v = f64::from(u8::from(i == hot)));
    }
    Ok(w)
}

/// Integer counts summing to `total` that follow `weights` (largest remainder,
/// ties toward the smaller index).
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits `ds` into `num_workers` label-skewed shards. Smaller `alpha`
/// means stronger skew. The shards partition `ds` exactly.
pub fn dirichlet_partition(
    ds: &LabeledDataset,
    num_workers: usize,
    alpha: f64,
    seed: u64,
    mode: PartitionMode,
) -> Result<Vec<WorkerShard>> {
    if num_workers == 0 {
        return Err(invalid("num_workers must be at least 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha must be positive and finite"));
    }
    let counts = ds.class_counts();
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(invalid(format!("class {c} has no samples in the dataset")));
    }
    if num_workers == 1 {
        return Ok(vec![WorkerShard::new(ds.clone())]);
    }
    let mut rng = rng::stream(seed, "partition", 0);
    let mut pools: Vec<Vec<usize>> = (0..ds.num_classes()).map(|c| ds.class_indices(c)).collect();
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let assignment = match mode {
        PartitionMode::PerClass => per_class_assignment(&pools, num_workers, alpha, &mut rng)?,
        PartitionMode::EqualSize => equal_size_assignment(&pools, num_workers, alpha, &mut rng)?,
    };
    Ok(assignment
        .iter()
        .map(|idx| WorkerShard::new(ds.subset(idx)))
        .collect())
}

fn per_class_assignment<R: Rng + ?Sized>(
    pools: &[Vec<usize>],
    num_workers: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    for _ in 0..MAX_PARTITION_DRAWS {
        let mut shards = vec![Vec::new(); num_workers];
        for pool in pools {
            let props = dirichlet_draw(rng, alpha, num_workers)?;
            let mut start = 0;
            for (shard, k) in shards.iter_mut().zip(largest_remainder(pool.len(), &props)) {
                shard.extend_from_slice(&pool[start..start + k]);
                start += k;
            }
        }
        if shards.iter().all(|s| !s.is_empty()) {
            return Ok(shards);
        }
    }
    Err(Error::DegeneratePartition {
        attempts: MAX_PARTITION_DRAWS,
    })
}

fn equal_size_assignment<R: Rng + ?Sized>(
    pools: &[Vec<usize>],
    num_workers: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let total: usize = pools.iter().map(Vec::len).sum();
    if total < num_workers {
        return Err(Error::DegeneratePartition { attempts: 1 });
    }
    let sizes: Vec<usize> = (0..num_workers)
        .map(|i| total / num_workers + usize::from(i < total % num_workers))
        .collect();
    let mixes: Vec<Vec<f64>> = (0..num_workers)
        .map(|_| dirichlet_draw(rng, alpha, pools.len()))
        .collect::<Result<_>>()?;
    let mut cursor = vec![0usize; pools.len()];
    let mut taken = vec![vec![0usize; pools.len()]; num_workers];
    let mut shards: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    // Workers take one sample per turn so class exhaustion is shared fairly;
    // each turn goes to the available class furthest behind the worker's mix.
    for slot in 0..sizes[0] {
        for (i, shard) in shards.iter_mut().enumerate() {
            if slot >= sizes[i] {
                continue;
            }
            let c = next_class(&mixes[i], &taken[i], slot, pools, &cursor);
            shard.push(pools[c][cursor[c]]);
            cursor[c] += 1;
            taken[i][c] += 1;
        }
    }
    Ok(shards)
}

/// Available class with the largest deficit `mix_c (slot + 1) − taken_c`;
/// when the mix puts no mass on any available class, the class with the
/// most remaining samples.
fn next_class(mix: &[f64], taken: &[usize], slot: usize, pools: &[Vec<usize>], cursor: &[usize]) -> usize {
    let remaining = |c: usize| pools[c].len() - cursor[c];
    let mut best: Option<(usize, f64)> = None;
    for c in (0..pools.len()).filter(|&c| remaining(c) > 0 && mix[c] > 0.0) {
        let deficit = mix[c] * (slot + 1) as f64 - taken[c] as f64;
        if best.is_none_or(|(_, d)| deficit > d) {
            best = Some((c, deficit));
        }
    }
    match best {
        Some((c, _)) => c,
        None => (0..pools.len())
            .max_by(|&a, &b| remaining(a).cmp(&remaining(b)).then(b.cmp(&a)))
            .unwrap_or(0),
    }
}

/// `p_i^c = N_i^c / N_i`.
pub fn label_distribution(shard: &WorkerShard) -> Result<LabelDistribution> {
    if shard.size() == 0 {
        return Err(invalid("empty shard"));
    }
    LabelDistribution::from_counts(shard.class_counts())
}

/// Label distribution of the union of `shards`.
pub fn global_distribution(shards: &[WorkerShard]) -> Result<LabelDistribution> {
    let first = shards.first().ok_or_else(|| invalid("no shards"))?;
    let mut counts = vec![0usize; first.class_counts().len()];
    for s in shards {
        if s.class_counts().len() != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: counts.len(),
                found: s.class_counts().len(),
            });
        }
        for (acc, &k) in counts.iter_mut().zip(s.class_counts()) {
            *acc += k;
        }
    }
    LabelDistribution::from_counts(&counts)
}
