//! Aggregation rules mapping the `n` submitted vectors of a round to one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::model::ParamVector;
use crate::numerics::{
    axpy, cmp_f64, coordinate_median, pairwise_sq_distances, scale, weiszfeld_geometric_median,
    VectorBatch, WEISZFELD_MAX_ITER, WEISZFELD_TOL,
};

/// The vectors submitted in one round and the number of Byzantine inputs
/// the f-aware rules must tolerate.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet {
    updates: VectorBatch,
    declared_f: usize,
}

impl UpdateSet {
    pub fn new(updates: VectorBatch, declared_f: usize) -> Result<Self> {
        if declared_f >= updates.count() {
            return Err(invalid(format!(
                "declared f = {declared_f} must be below the number of updates ({})",
                updates.count()
            )));
        }
        Ok(Self { updates, declared_f })
    }

    pub fn updates(&self) -> &VectorBatch {
        &self.updates
    }

    pub fn n(&self) -> usize {
        self.updates.count()
    }

    pub fn declared_f(&self) -> usize {
        self.declared_f
    }

    pub fn dim(&self) -> usize {
        self.updates.dim()
    }

    pub fn into_updates(self) -> VectorBatch {
        self.updates
    }
}

pub fn agg_mean(u: &UpdateSet) -> ParamVector {
    u.updates.mean()
}

pub fn agg_cwmed(u: &UpdateSet) -> ParamVector {
    coordinate_median(&u.updates)
}

/// Per coordinate, drops the `f` largest and `f` smallest values and averages the rest.
pub fn agg_cwtm(u: &UpdateSet) -> Result<ParamVector> {
    let (n, f) = (u.n(), u.declared_f);
    if n <= 2 * f {
        return Err(invalid(format!("trimmed mean needs n > 2f (n = {n}, f = {f})")));
    }
    let kept = (n - 2 * f) as f64;
    Ok((0..u.dim())
        .map(|k| {
            let mut col = u.updates.column(k);
            col.sort_unstable_by(cmp_f64);
            col[f..n - f].iter().sum::<f64>() / kept
        })
        .collect())
}

pub fn agg_gm(u: &UpdateSet, tol: f64, max_iter: usize) -> Result<ParamVector> {
    weiszfeld_geometric_median(&u.updates, tol, max_iter)
}

/// Score of each row: the sum of its `n − f − 2` smallest squared distances
/// to the other rows.
pub fn krum_scores(u: &UpdateSet) -> Result<Vec<f64>> {
    let (n, f) = (u.n(), u.declared_f);
    if n < f + 3 {
        return Err(invalid(format!("Krum needs n >= f + 3 (n = {n}, f = {f})")));
    }
    let neighbours = n - f - 2;
    let d = pairwise_sq_distances(&u.updates);
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d.get(i, j)).collect();
            others.sort_unstable_by(cmp_f64);
            others[..neighbours].iter().sum()
        })
        .collect())
}

/// Indices of the `m` lowest Krum scores, ties toward smaller indices,
/// returned in increasing index order.
fn krum_selection(u: &UpdateSet, m: usize) -> Result<Vec<usize>> {
    let scores = krum_scores(u)?;
    let mut order: Vec<usize> = (0..u.n()).collect();
    order.sort_by(|&a, &b| cmp_f64(&scores[a], &scores[b]).then(a.cmp(&b)));
    let mut chosen = order[..m].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn mean_of(u: &UpdateSet, rows: &[usize]) -> ParamVector {
    let mut acc = vec![0.0; u.dim()];
    for &i in rows {
        axpy(&mut acc, 1.0, u.updates.row(i));
    }
    scale(&mut acc, 1.0 / rows.len() as f64);
    acc
}

/// Unweighted mean of the `n − f` rows with the lowest Krum scores.
pub fn agg_mkrum(u: &UpdateSet) -> Result<ParamVector> {
    let chosen = krum_selection(u, u.n() - u.declared_f)?;
    Ok(mean_of(u, &chosen))
}

/// The single row with the lowest Krum score.
pub fn agg_krum(u: &UpdateSet) -> Result<ParamVector> {
    let chosen = krum_selection(u, 1)?;
    Ok(u.updates.row(chosen[0]).to_vec())
}

/// Aggregation rule selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    CwMed,
    CwTm,
    Gm,
    Krum,
    MKrum,
}

impl Aggregator {
    pub const ALL: [Aggregator; 6] = [
        Aggregator::Mean,
        Aggregator::CwMed,
        Aggregator::CwTm,
        Aggregator::Gm,
        Aggregator::Krum,
        Aggregator::MKrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::CwMed => "cwmed",
            Aggregator::CwTm => "cwtm",
            Aggregator::Gm => "gm",
            Aggregator::Krum => "krum",
            Aggregator::MKrum => "mkrum",
        }
    }

    pub fn aggregate(self, u: &UpdateSet) -> Result<ParamVector> {
        match self {
            Aggregator::Mean => Ok(agg_mean(u)),
            Aggregator::CwMed => Ok(agg_cwmed(u)),
            Aggregator::CwTm => agg_cwtm(u),
            Aggregator::Gm => agg_gm(u, WEISZFELD_TOL, WEISZFELD_MAX_ITER),
            Aggregator::Krum => agg_krum(u),
            Aggregator::MKrum => agg_mkrum(u),
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aggregator::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown aggregator '{s}'")))
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dist;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[&[f64]], f: usize) -> UpdateSet {
        UpdateSet::new(VectorBatch::from_rows(rows.iter().copied()).unwrap(), f).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, f: usize) -> UpdateSet {
        UpdateSet::new(
            VectorBatch::new(
                (0..n)
                    .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
                    .collect(),
            )
            .unwrap(),
            f,
        )
        .unwrap()
    }

    #[test]
    fn update_set_rejects_excessive_f() {
        let b = VectorBatch::new(vec![vec![0.0]; 3]).unwrap();
        assert!(UpdateSet::new(b.clone(), 3).is_err());
        assert!(UpdateSet::new(b, 2).is_ok());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(agg_mean(&set(&[&[0.0, 0.0], &[2.0, 2.0]], 0)), vec![1.0, 1.0]);
        assert_eq!(agg_mean(&set(&[&[3.0, -1.0]], 0)), vec![3.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_set(&mut rng, 6, 3, 0);
        let m = agg_mean(&u);
        for k in 0..3 {
            let mut s = 0.0;
            for i in 0..6 {
                s += u.updates().row(i)[k];
            }
            assert!((m[k] - s / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cwmed_resists_a_corrupted_minority() {
        let u = set(&[&[1.0, 0.0], &[2.0, 0.5], &[3.0, 1.0], &[1e9, 0.7], &[2.5, 1e9]], 2);
        let m = agg_cwmed(&u);
        assert!((1.0..=3.0).contains(&m[0]));
        assert!((0.0..=1.0).contains(&m[1]));
        let p = set(&[&[2.5, 1e9], &[1e9, 0.7], &[1.0, 0.0], &[3.0, 1.0], &[2.0, 0.5]], 2);
        assert_eq!(agg_cwmed(&p), m);
    }

    #[test]
    fn cwtm_examples() {
        let u = set(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0]], 1);
        assert_eq!(agg_cwtm(&u).unwrap(), vec![3.0]);
        let u = set(&[&[1.0, 2.0], &[3.0, 7.0]], 0);
        assert_eq!(agg_cwtm(&u).unwrap(), agg_mean(&u));
        let u = set(&[&[1.0], &[2.0], &[3.0], &[4.0]], 2);
        assert!(agg_cwtm(&u).is_err());
    }

    #[test]
    fn gm_examples() {
        let u = set(&[&[1.0, 1.0], &[1.0, 1.0], &[50.0, -20.0]], 1);
        let g = agg_gm(&u, WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        assert!(dist(&g, &[1.0, 1.0]) < 1e-6, "{g:?}");
    }

    #[test]
    fn krum_flags_the_outlier() {
        let u = set(&[&[0.0, 0.0], &[0.1, 0.0], &[0.0, 0.1], &[9.0, 9.0]], 1);
        let s = krum_scores(&u).unwrap();
        assert!(s[3] > s[0] && s[3] > s[1] && s[3] > s[2]);
        let m = agg_mkrum(&u).unwrap();
        let expected = [0.1 / 3.0, 0.1 / 3.0];
        assert!(dist(&m, &expected) < 1e-15);
        assert_eq!(agg_krum(&u).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn krum_degenerate_and_error_cases() {
        let u = set(&[&[2.0], &[2.0], &[2.0], &[2.0]], 1);
        assert_eq!(krum_scores(&u).unwrap(), vec![0.0; 4]);
        let u = set(&[&[1.0], &[2.0], &[3.0]], 1);
        assert!(krum_scores(&u).is_err());
        assert!(agg_mkrum(&u).is_err());
    }

    #[test]
    fn mkrum_without_f_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_set(&mut rng, 5, 4, 0);
        assert_eq!(agg_mkrum(&u).unwrap(), agg_mean(&u));
    }

    #[test]
    fn krum_scores_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_set(&mut rng, 6, 2, 1);
        let s = krum_scores(&u).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let p = UpdateSet::new(u.updates().select(&perm).unwrap(), 1).unwrap();
        let sp = krum_scores(&p).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(sp[k], s[i]);
        }
    }

    #[test]
    fn names_round_trip() {
        for a in Aggregator::ALL {
            assert_eq!(a.name().parse::<Aggregator>().unwrap(), a);
        }
        assert!("median".parse::<Aggregator>().is_err());
    }
}
