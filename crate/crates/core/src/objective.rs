//! The shared training objective `q` and the label-alignment weights derived
//! from it, plus the attack on `q` and its geometric-median defense.
//!
//! A worker holding label distribution `p_i` scales the loss of a class-`y`
//! sample by `q^y / p_i^y`. Its gradient then becomes `Σ_c q^c μ_i^c` where
//! `μ_i^c` is the mean gradient of its class-`c` samples, so every honest
//! worker targets the same mixture of class gradients regardless of how
//! skewed its local labels are.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::data::{LabelDistribution, LabeledDataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::model::{weighted_batch_gradient, ModelSpec, ParamVector};
use crate::numerics::{dot, norm, weiszfeld_geometric_median, VectorBatch};

/// The class weighting every honest worker trains towards.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingObjective(LabelDistribution);

impl TrainingObjective {
    pub fn new(q: LabelDistribution) -> Self {
        Self(q)
    }

    pub fn distribution(&self) -> &LabelDistribution {
        &self.0
    }

    pub fn probs(&self) -> &[f64] {
        self.0.probs()
    }
}

/// Per-sample loss weights `q^y / p_i^y`.
pub fn wola_weights(q: &TrainingObjective, p_i: &LabelDistribution, labels: &[usize]) -> Result<Vec<f64>> {
    if q.0.num_classes() != p_i.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: q.0.num_classes(),
            found: p_i.num_classes(),
        });
    }
    let (q, p) = (q.probs(), p_i.probs());
    labels
        .iter()
        .map(|&y| match p.get(y) {
            Some(&py) if py > 0.0 => Ok(q[y] / py),
            Some(_) => Err(invalid(format!("label {y} is absent from the local distribution"))),
            None => Err(invalid(format!("label {y} out of range"))),
        })
        .collect()
}

/// Where the shared objective comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    /// Size-weighted mean of the honest label distributions.
    Global,
    /// Equal weight on every class.
    Uniform,
    /// Supplied from outside the federation.
    Provided,
}

impl FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "uniform" => Ok(Self::Uniform),
            "provided" => Ok(Self::Provided),
            other => Err(invalid(format!("unknown objective mode '{other}'"))),
        }
    }
}

/// Plain mean of distributions over the same classes.
pub fn mean_distribution(dists: &[LabelDistribution]) -> Result<LabelDistribution> {
    let sizes = vec![1; dists.len()];
    weighted_mean_distribution(dists, &sizes)
}

fn weighted_mean_distribution(dists: &[LabelDistribution], sizes: &[usize]) -> Result<LabelDistribution> {
    let first = dists.first().ok_or_else(|| invalid("no distributions"))?;
    if sizes.len() != dists.len() {
        return Err(Error::DimensionMismatch {
            expected: dists.len(),
            found: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(invalid("all sizes are zero"));
    }
    let mut acc = vec![0.0; first.num_classes()];
    for (d, &n) in dists.iter().zip(sizes) {
        if d.num_classes() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                found: d.num_classes(),
            });
        }
        let w = n as f64 / total as f64;
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += w * p;
        }
    }
    LabelDistribution::new(acc)
}

pub fn build_objective(
    mode: ObjectiveMode,
    num_classes: usize,
    honest_dists: &[LabelDistribution],
    sizes: &[usize],
    provided: Option<&LabelDistribution>,
) -> Result<TrainingObjective> {
    let q = match mode {
        ObjectiveMode::Global => weighted_mean_distribution(honest_dists, sizes)?,
        ObjectiveMode::Uniform => {
            if num_classes == 0 {
                return Err(invalid("num_classes must be positive"));
            }
            LabelDistribution::uniform(num_classes)
        }
        ObjectiveMode::Provided => {
            let p = provided.ok_or_else(|| invalid("objective mode 'provided' needs a distribution"))?;
            LabelDistribution::new(p.probs().to_vec())?
        }
    };
    Ok(TrainingObjective(q))
}

/// Submissions under the strongest attack on `q`: honest distributions pass
/// through, and each of the `f` Byzantine workers puts all its mass on the
/// class least represented in the honest mean (smallest index on ties).
pub fn objective_attack_worst(
    honest_dists: &[LabelDistribution],
    f: usize,
    n: usize,
) -> Result<Vec<LabelDistribution>> {
    if f >= n {
        return Err(invalid(format!("f = {f} must be below n = {n}")));
    }
    if honest_dists.len() != n - f {
        return Err(invalid(format!(
            "expected {} honest distributions, got {}",
            n - f,
            honest_dists.len()
        )));
    }
    let mut out = honest_dists.to_vec();
    if f > 0 {
        let u = mean_distribution(honest_dists)?;
        let target = LabelDistribution::one_hot(u.num_classes(), u.argmin());
        out.extend(core::iter::repeat_n(target, f));
    }
    Ok(out)
}

/// `(f/n)(2 − 2 min_c u^c)`: the largest ℓ1 shift `f` of `n` submissions can
/// impose on the mean objective.
pub fn objective_deviation_bound(u: &LabelDistribution, f: usize, n: usize) -> Result<f64> {
    if f >= n {
        return Err(invalid(format!("f = {f} must be below n = {n}")));
    }
    let u_min = u.probs()[u.argmin()];
    Ok(f as f64 / n as f64 * (2.0 - 2.0 * u_min))
}

/// Geometric median of submitted distributions; it is a convex combination
/// of the submissions and therefore stays on the simplex.
pub fn aggregate_objective_gm(
    submissions: &[LabelDistribution],
    tol: f64,
    max_iter: usize,
) -> Result<TrainingObjective> {
    let batch = VectorBatch::from_rows(submissions.iter().map(LabelDistribution::probs))?;
    let gm = weiszfeld_geometric_median(&batch, tol, max_iter)?;
    Ok(TrainingObjective(LabelDistribution::new(gm)?))
}

/// Mean gradient over the class-`c` samples of `ds`.
pub fn class_gradient(spec: &ModelSpec, theta: &[f64], ds: &LabeledDataset, c: usize) -> Result<ParamVector> {
    let batch: Vec<Sample<'_>> = ds.samples().filter(|s| s.y == c).collect();
    if batch.is_empty() {
        return Err(invalid(format!("class {c} has no samples")));
    }
    let ones = vec![1.0; batch.len()];
    weighted_batch_gradient(spec, theta, &batch, &ones, 0.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
