//! Transforms applied to the submitted vectors before the aggregation rule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::aggregation::UpdateSet;
use crate::numerics::{axpy, cmp_f64, dist, pairwise_sq_distances, scale, VectorBatch};
use crate::rng;

/// Averages consecutive buckets of size `s = ⌊n/(2f)⌋` after a seeded
/// shuffle. With `s ≤ 1` the input is returned unchanged. The last bucket
/// keeps the remainder when `s` does not divide `n`.
pub fn pre_bucketing(u: &UpdateSet, seed: u64) -> Result<UpdateSet> {
    let (n, f) = (u.n(), u.declared_f());
    if f == 0 {
        return Err(invalid("bucketing needs declared f >= 1"));
    }
    let s = n / (2 * f);
    if s <= 1 {
        return Ok(u.clone());
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, "bucketing", 0));
    let rows: Vec<Vec<f64>> = perm
        .chunks(s)
        .map(|bucket| {
            let mut acc = vec![0.0; u.dim()];
            for &i in bucket {
                axpy(&mut acc, 1.0, u.updates().row(i));
            }
            scale(&mut acc, 1.0 / bucket.len() as f64);
            acc
        })
        .collect();
    UpdateSet::new(VectorBatch::new(rows)?, f)
}

/// Replaces each row by the mean of its `n − f` nearest rows, itself included.
pub fn pre_nnm(u: &UpdateSet) -> Result<UpdateSet> {
    let (n, f) = (u.n(), u.declared_f());
    let k = n - f;
    let d = pairwise_sq_distances(u.updates());
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| cmp_f64(&d.get(i, a), &d.get(i, b)).then(a.cmp(&b)));
            let mut acc = vec![0.0; u.dim()];
            for &j in &order[..k] {
                axpy(&mut acc, 1.0, u.updates().row(j));
            }
            scale(&mut acc, 1.0 / k as f64);
            acc
        })
        .collect();
    UpdateSet::new(VectorBatch::new(rows)?, f)
}

/// Scores `s_i = min(‖g_max − g_i‖, ‖g_min − g_i‖)` against the coordinate-wise
/// extremes.
pub fn foundationfl_scores(u: &UpdateSet) -> Vec<f64> {
    let b = u.updates();
    let mut hi = b.row(0).to_vec();
    let mut lo = b.row(0).to_vec();
    for r in b.rows() {
        for k in 0..r.len() {
            hi[k] = hi[k].max(r[k]);
            lo[k] = lo[k].min(r[k]);
        }
    }
    b.rows().map(|r| dist(&hi, r).min(dist(&lo, r))).collect()
}

/// Appends `m` copies of the highest-scoring row (smallest index on ties).
pub fn pre_foundationfl(u: &UpdateSet, m: usize) -> Result<UpdateSet> {
    if m == 0 {
        return Err(invalid("foundationfl needs m >= 1"));
    }
    let scores = foundationfl_scores(u);
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if cmp_f64(s, &scores[best]).is_gt() {
            best = i;
        }
    }
    let mut out = u.updates().clone();
    let row = u.updates().row(best).to_vec();
    for _ in 0..m {
        out.push(&row)?;
    }
    UpdateSet::new(out, u.declared_f())
}

/// Pre-aggregation strategy selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreAggregator {
    None,
    Bucketing,
    Nnm,
    /// `m = None` uses `⌊n/2⌋` replicas.
    FoundationFl { m: Option<usize> },
}

impl PreAggregator {
    pub fn name(self) -> &'static str {
        match self {
            PreAggregator::None => "none",
            PreAggregator::Bucketing => "bucketing",
            PreAggregator::Nnm => "nnm",
            PreAggregator::FoundationFl { .. } => "foundationfl",
        }
    }

    /// `seed` drives the bucketing shuffle and should differ per round.
    pub fn apply(self, u: &UpdateSet, seed: u64) -> Result<UpdateSet> {
        match self {
            PreAggregator::None => Ok(u.clone()),
            PreAggregator::Bucketing if u.declared_f() == 0 => Ok(u.clone()),
            PreAggregator::Bucketing => pre_bucketing(u, seed),
            PreAggregator::Nnm => pre_nnm(u),
            PreAggregator::FoundationFl { m } => pre_foundationfl(u, m.unwrap_or(u.n() / 2).max(1)),
        }
    }
}

impl FromStr for PreAggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "-" => Ok(Self::None),
            "bucketing" => Ok(Self::Bucketing),
            "nnm" => Ok(Self::Nnm),
            "foundationfl" => Ok(Self::FoundationFl { m: None }),
            other => Err(invalid(format!("unknown pre-aggregator '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::agg_mean;

    fn set(rows: &[&[f64]], f: usize) -> UpdateSet {
        UpdateSet::new(VectorBatch::from_rows(rows.iter().copied()).unwrap(), f).unwrap()
    }

    #[test]
    fn bucketing_is_identity_when_buckets_have_one_row() {
        let rows: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64, -(i as f64)]).collect();
        let u = UpdateSet::new(VectorBatch::new(rows).unwrap(), 6).unwrap();
        assert_eq!(pre_bucketing(&u, 1).unwrap(), u);
        let u8 = UpdateSet::new(u.updates().clone(), 8).unwrap();
        assert_eq!(pre_bucketing(&u8, 1).unwrap(), u8);
    }

    #[test]
    fn bucketing_preserves_the_mean_of_pairs() {
        let u = set(&[&[1.0, 0.0], &[1.0, 0.0], &[3.0, 2.0], &[3.0, 2.0]], 1);
        for seed in 0..20 {
            let b = pre_bucketing(&u, seed).unwrap();
            assert_eq!(b.n(), 2);
            assert_eq!(b.declared_f(), 1);
            assert_eq!(agg_mean(&b), vec![2.0, 1.0]);
        }
    }

    #[test]
    fn bucketing_keeps_a_short_last_bucket() {
        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let u = UpdateSet::new(VectorBatch::new(rows).unwrap(), 1).unwrap();
        let b = pre_bucketing(&u, 3).unwrap();
        assert_eq!(b.n(), 3);
        assert!(pre_bucketing(&UpdateSet::new(u.updates().clone(), 0).unwrap(), 3).is_err());
    }

    #[test]
    fn nnm_examples() {
        let u = set(&[&[0.0], &[1.0], &[10.0]], 1);
        let out = pre_nnm(&u).unwrap();
        assert_eq!(out.updates().to_rows(), vec![vec![0.5], vec![0.5], vec![5.5]]);

        let u = set(&[&[0.0, 1.0], &[2.0, 5.0], &[4.0, 0.0]], 0);
        let out = pre_nnm(&u).unwrap();
        for r in out.updates().rows() {
            assert_eq!(r, agg_mean(&u).as_slice());
        }

        let u = set(&[&[1.5, -2.0][..]; 4], 1);
        assert_eq!(pre_nnm(&u).unwrap(), u);
    }

    #[test]
    fn foundationfl_examples() {
        let u = set(&[&[0.0], &[1.0], &[2.0]], 0);
        assert_eq!(foundationfl_scores(&u), vec![0.0, 1.0, 0.0]);
        let out = pre_foundationfl(&u, 2).unwrap();
        assert_eq!(out.updates().to_rows(), vec![vec![0.0], vec![1.0], vec![2.0], vec![1.0], vec![1.0]]);

        let u = set(&[&[4.0, 4.0][..]; 3], 1);
        let out = pre_foundationfl(&u, 1).unwrap();
        assert_eq!(out.n(), 4);
        assert!(out.updates().rows().all(|r| r == [4.0, 4.0]));
        assert!(pre_foundationfl(&u, 0).is_err());
    }

    #[test]
    fn foundationfl_default_m_is_half_of_n_rounded_down() {
        let rows: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64]).collect();
        let u = UpdateSet::new(VectorBatch::new(rows).unwrap(), 2).unwrap();
        let out = PreAggregator::FoundationFl { m: None }.apply(&u, 0).unwrap();
        assert_eq!(out.n(), 17 + 8);
        assert_eq!(&out.updates().as_flat()[..17], u.updates().as_flat());
    }

    #[test]
    fn names_parse() {
        assert_eq!("none".parse::<PreAggregator>().unwrap(), PreAggregator::None);
        assert_eq!("nnm".parse::<PreAggregator>().unwrap(), PreAggregator::Nnm);
        assert!("bkt".parse::<PreAggregator>().is_err());
    }
}
