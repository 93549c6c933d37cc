//! Dense vector primitives shared by the aggregators, attacks and metrics.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Error, Result};

/// Default stopping tolerance of the Weiszfeld solver.
pub const WEISZFELD_TOL: f64 = 1e-9;
/// Default iteration cap of the Weiszfeld solver.
pub const WEISZFELD_MAX_ITER: usize = 1000;
/// Denominator smoothing for iterates that land on an input point.
const WEISZFELD_EPS: f64 = 1e-12;

pub fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(invalid(alloc::format!("non-finite entry at coordinate {k}"))),
        None => Ok(()),
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Euclidean norm, rejecting non-finite input.
pub fn l2_norm(v: &[f64]) -> Result<f64> {
    check_finite(v)?;
    Ok(libm::sqrt(sq_norm(v)))
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    libm::sqrt(sq_norm(v))
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(sq_dist(a, b))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(v: &mut [f64], alpha: f64) {
    v.iter_mut().for_each(|x| *x *= alpha);
}

/// Total order on finite floats.
#[inline]
pub(crate) fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

/// A non-empty batch of equal-length finite vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBatch {
    data: Vec<f64>,
    dim: usize,
}

impl VectorBatch {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| invalid("empty batch"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("zero-dimensional rows"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            check_finite(row)?;
            data.extend_from_slice(row);
        }
        Ok(Self { data, dim })
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(invalid("empty batch"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        check_finite(&data)?;
        Ok(Self { data, dim })
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        Self::new(rows.into_iter().map(<[f64]>::to_vec).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        check_finite(row)?;
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::from_rows(indices.iter().map(|&i| self.row(i)))
    }

    /// Values of coordinate `k` across rows.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for r in self.rows() {
            axpy(&mut acc, 1.0, r);
        }
        scale(&mut acc, 1.0 / self.count() as f64);
        acc
    }
}

/// Symmetric matrix of squared distances, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

pub fn pairwise_sq_distances(b: &VectorBatch) -> DistanceMatrix {
    let n = b.count();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(b.row(i), b.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    DistanceMatrix { n, d }
}

/// Median of a non-empty slice; midpoint of the two middle values for even length.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(cmp_f64);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn coordinate_median(b: &VectorBatch) -> Vec<f64> {
    let mut scratch = vec![0.0; b.count()];
    (0..b.dim())
        .map(|k| {
            for (s, r) in scratch.iter_mut().zip(b.rows()) {
                *s = r[k];
            }
            median_in_place(&mut scratch)
        })
        .collect()
}

/// Sum of distances from `x` to every row.
pub fn geometric_median_objective(b: &VectorBatch, x: &[f64]) -> f64 {
    b.rows().map(|r| dist(r, x)).sum()
}

/// The first row that minimises the sum of distances, if any does: row `k`
/// with multiplicity `w` is optimal iff the unit vectors pointing from the
/// other rows to it sum to a vector of norm at most `w`.
fn optimal_input_row(b: &VectorBatch) -> Option<usize> {
    let mut pull = vec![0.0; b.dim()];
    (0..b.count()).find(|&k| {
        let xk = b.row(k);
        pull.iter_mut().for_each(|v| *v = 0.0);
        let mut weight = 0.0;
        for r in b.rows() {
            let d = dist(xk, r);
            if d == 0.0 {
                weight += 1.0;
            } else {
                for ((p, a), c) in pull.iter_mut().zip(xk).zip(r) {
                    *p += (a - c) / d;
                }
            }
        }
        norm(&pull) <= weight
    })
}

/// Largest extrapolation factor tried along a Weiszfeld step.
const WEISZFELD_MAX_EXTRAPOLATION: f64 = 1048576.0;

/// Smoothed Weiszfeld iteration for the geometric median, started at the
/// coordinate-wise mean. When an input row is itself a minimiser it is
/// returned directly.
///
/// Each step moves from `x` towards the Weiszfeld point `T(x)` and then
/// keeps doubling the step length while the objective decreases and the
/// iterate stays a convex combination of the rows. Plain Weiszfeld
/// contracts at a rate close to one when the minimiser lies near a
/// repeated row; the doubling recovers a fast rate there.
pub fn weiszfeld_geometric_median(b: &VectorBatch, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("weiszfeld needs tol > 0 and max_iter >= 1"));
    }
    if let Some(k) = optimal_input_row(b) {
        return Ok(b.row(k).to_vec());
    }
    let n = b.count();
    let mut x = b.mean();
    let mut coef = vec![1.0 / n as f64; n];
    let mut target = vec![0.0; b.dim()];
    let mut weights = vec![0.0; n];
    let mut candidate = vec![0.0; b.dim()];
    let mut step = f64::INFINITY;
    for _ in 0..max_iter {
        target.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (w, r) in weights.iter_mut().zip(b.rows()) {
            *w = 1.0 / (dist(r, &x) + WEISZFELD_EPS);
            axpy(&mut target, *w, r);
            total += *w;
        }
        scale(&mut target, 1.0 / total);
        weights.iter_mut().for_each(|w| *w /= total);

        // coefficients (1 − λ) coef + λ weights stay nonnegative up to this λ
        let mut lam_max = WEISZFELD_MAX_EXTRAPOLATION;
        for (&a, &w) in coef.iter().zip(&weights) {
            if a > w {
                lam_max = lam_max.min(a / (a - w));
            }
        }
        let at = |lam: f64, out: &mut Vec<f64>| {
            out.clear();
            out.extend(x.iter().zip(&target).map(|(xi, ti)| xi + lam * (ti - xi)));
        };
        let mut lam = 1.0;
        at(lam, &mut candidate);
        let mut best = geometric_median_objective(b, &candidate);
        let mut next = candidate.clone();
        while 2.0 * lam <= lam_max {
            at(2.0 * lam, &mut candidate);
            let value = geometric_median_objective(b, &candidate);
            if value >= best {
                break;
            }
            lam *= 2.0;
            best = value;
            core::mem::swap(&mut next, &mut candidate);
        }
        for (a, &w) in coef.iter_mut().zip(&weights) {
            *a = ((1.0 - lam) * *a + lam * w).max(0.0);
        }
        step = dist(&next, &x);
        x = next;
        if step < tol {
            return Ok(x);
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
        last_step: step,
        last: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: &[&[f64]]) -> VectorBatch {
        VectorBatch::from_rows(rows.iter().copied()).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> VectorBatch {
        VectorBatch::new(
            (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(l2_norm(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(l2_norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(l2_norm(&[1.0, f64::NAN]).is_err());
        assert!(l2_norm(&[f64::INFINITY]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for x in &v {
            acc += x * x;
        }
        assert!((l2_norm(&v).unwrap() - acc.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn batch_rejects_ragged_and_nonfinite_rows() {
        assert!(matches!(
            VectorBatch::new(vec![vec![1.0, 2.0], vec![1.0]]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(VectorBatch::new(vec![vec![f64::NAN]]).is_err());
        assert!(VectorBatch::new(vec![]).is_err());
    }

    #[test]
    fn pairwise_distance_examples() {
        let d = pairwise_sq_distances(&batch(&[&[0.0, 0.0], &[3.0, 4.0]]));
        assert_eq!(d.row(0), &[0.0, 25.0]);
        assert_eq!(d.row(1), &[25.0, 0.0]);
        let d = pairwise_sq_distances(&batch(&[&[1.0, 2.0]]));
        assert_eq!(d.row(0), &[0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 5, 3);
        let d = pairwise_sq_distances(&b);
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    let t = b.row(i)[k] - b.row(j)[k];
                    s += t * t;
                }
                assert!((d.get(i, j) - s).abs() < 1e-12);
            }
            assert_eq!(d.get(i, i), 0.0);
        }
    }

    #[test]
    fn coordinate_median_examples() {
        let m = coordinate_median(&batch(&[&[1.0, 5.0], &[2.0, 6.0], &[9.0, 7.0]]));
        assert_eq!(m, vec![2.0, 6.0]);
        let m = coordinate_median(&batch(&[&[0.0, 0.0], &[2.0, 2.0]]));
        assert_eq!(m, vec![1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_batch(&mut rng, 7, 3);
        let m = coordinate_median(&b);
        for k in 0..3 {
            let mut col = b.column(k);
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(m[k], col[3]);
        }
    }

    #[test]
    fn weiszfeld_square_and_collinear() {
        let sq = batch(&[&[0.0, 0.0], &[2.0, 0.0], &[2.0, 2.0], &[0.0, 2.0]]);
        let x = weiszfeld_geometric_median(&sq, WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        assert!(dist(&x, &[1.0, 1.0]) < 1e-9);

        let line = batch(&[&[0.0], &[1.0], &[10.0]]);
        let x = weiszfeld_geometric_median(&line, WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn weiszfeld_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = VectorBatch::new(
            (0..6)
                .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect(),
        )
        .unwrap();
        let x = weiszfeld_geometric_median(&b, WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        let (lo0, hi0) = bounds(&b.column(0));
        let (lo1, hi1) = bounds(&b.column(1));
        let mut best = f64::INFINITY;
        let step = 1e-3;
        let mut u = lo0;
        while u <= hi0 {
            let mut v = lo1;
            while v <= hi1 {
                best = best.min(geometric_median_objective(&b, &[u, v]));
                v += step;
            }
            u += step;
        }
        assert!(geometric_median_objective(&b, &x) <= best + 1e-4);
    }

    fn bounds(v: &[f64]) -> (f64, f64) {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    #[test]
    fn weiszfeld_reports_nonconvergence() {
        let b = batch(&[&[0.0, 0.0], &[5.0, 1.0], &[1.0, 7.0], &[9.0, 9.0]]);
        match weiszfeld_geometric_median(&b, 1e-15, 2) {
            Err(Error::ConvergenceFailure { iterations, last, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.len(), 2);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
