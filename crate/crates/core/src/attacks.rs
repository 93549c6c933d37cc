//! Byzantine behaviours. Each attack sees every honest update of the round
//! before producing the `f` malicious rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::model::ParamVector;
use crate::numerics::{cmp_f64, dist, VectorBatch};

/// What an omniscient attacker knows in a round.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub honest: &'a VectorBatch,
    pub n: usize,
    pub f: usize,
    pub round: usize,
}

impl<'a> AttackContext<'a> {
    pub fn new(honest: &'a VectorBatch, n: usize, f: usize, round: usize) -> Result<Self> {
        if f > n || honest.count() != n - f {
            return Err(invalid(format!(
                "{} honest updates for n = {n}, f = {f}",
                honest.count()
            )));
        }
        Ok(Self { honest, n, f, round })
    }
}

fn replicate(row: ParamVector, f: usize) -> Vec<ParamVector> {
    vec![row; f]
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

/// Standard normal quantile by bisection on the CDF, accurate to 1e-10.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("quantile level {p} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ALIE's `z = Φ⁻¹((n − f − s)/(n − f))` with `s = ⌊n/2⌋ + 1 − f`, floored at 0.
pub fn alie_z(n: usize, f: usize) -> Result<f64> {
    if f == 0 || f >= n {
        return Err(invalid(format!("ALIE needs 0 < f < n (n = {n}, f = {f})")));
    }
    let h = (n - f) as f64;
    let s = (n / 2 + 1) as f64 - f as f64;
    let level = (h - s) / h;
    if level <= 0.5 {
        return Ok(0.0);
    }
    if level >= 1.0 {
        return Err(invalid(format!("ALIE quantile level {level} is not below 1")));
    }
    normal_quantile(level)
}

/// `f` copies of `μ − z σ` with the coordinate-wise honest mean and sample
/// standard deviation. `z_override` replaces the default `z`.
pub fn attack_alie(ctx: &AttackContext<'_>, z_override: Option<f64>) -> Result<Vec<ParamVector>> {
    let h = ctx.honest.count();
    if h < 2 {
        return Err(invalid("ALIE needs at least two honest updates"));
    }
    let z = match z_override {
        Some(z) => z,
        None => alie_z(ctx.n, ctx.f)?,
    };
    let mu = ctx.honest.mean();
    let row = (0..ctx.honest.dim())
        .map(|k| {
            let var = ctx
                .honest
                .rows()
                .map(|r| (r[k] - mu[k]) * (r[k] - mu[k]))
                .sum::<f64>()
                / (h - 1) as f64;
            mu[k] - z * libm::sqrt(var)
        })
        .collect();
    Ok(replicate(row, ctx.f))
}

/// `f` copies of `−ε μ`.
pub fn attack_foe(ctx: &AttackContext<'_>, epsilon: f64) -> Vec<ParamVector> {
    let row = ctx.honest.mean().into_iter().map(|m| -epsilon * m).collect();
    replicate(row, ctx.f)
}

/// `f` copies of `−μ`.
pub fn attack_sf(ctx: &AttackContext<'_>) -> Vec<ParamVector> {
    let row = ctx.honest.mean().into_iter().map(|m| -m).collect();
    replicate(row, ctx.f)
}

/// Scores of the most-surrounded-outlier rule. For every honest row `i`,
/// the others are ranked by decreasing distance from `i` (row `i` itself
/// last, ties toward smaller indices) and row `j` gains
/// `min(f, rank(i, j)) · ‖v_j − center‖`.
pub fn mimic_scores(honest: &VectorBatch, f: usize) -> Vec<f64> {
    let h = honest.count();
    let center = honest.mean();
    let spread: Vec<f64> = honest.rows().map(|r| dist(r, &center)).collect();
    let mut scores = vec![0.0; h];
    for i in 0..h {
        let from_i: Vec<f64> = honest.rows().map(|r| dist(honest.row(i), r)).collect();
        let mut order: Vec<usize> = (0..h).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| cmp_f64(&from_i[b], &from_i[a]).then(a.cmp(&b)));
        order.push(i);
        for (pos, &j) in order.iter().enumerate() {
            scores[j] += f.min(pos + 1) as f64 * spread[j];
        }
    }
    scores
}

/// Index of the honest row Mimic replicates.
pub fn mimic_target(honest: &VectorBatch, f: usize) -> usize {
    let scores = mimic_scores(honest, f);
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if cmp_f64(s, &scores[best]).is_gt() {
            best = j;
        }
    }
    best
}

/// `f` verbatim copies of the most surrounded honest outlier.
pub fn attack_mimic(ctx: &AttackContext<'_>) -> Vec<ParamVector> {
    let k = mimic_target(ctx.honest, ctx.f);
    replicate(ctx.honest.row(k).to_vec(), ctx.f)
}

/// Label map `y → C − 1 − y`.
#[inline]
pub fn flip_label(y: usize, num_classes: usize) -> usize {
    num_classes - 1 - y
}

/// Copy of `ds` with every label flipped.
pub fn flip_dataset(ds: &LabeledDataset) -> Result<LabeledDataset> {
    let c = ds.num_classes();
    ds.relabel(|y| flip_label(y, c))
}

/// Byzantine behaviour selected by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attack {
    None,
    Alie { z: Option<f64> },
    Foe { epsilon: f64 },
    Sf,
    /// Byzantine workers run the honest pipeline on label-flipped shards.
    Lf,
    Mimic,
}

/// FOE scale used when none is configured.
pub const FOE_DEFAULT_EPSILON: f64 = 1.1;

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Alie { .. } => "alie",
            Attack::Foe { .. } => "foe",
            Attack::Sf => "sf",
            Attack::Lf => "lf",
            Attack::Mimic => "mimic",
        }
    }

    /// Rows of the omniscient attacks. Label flipping is data-driven and is
    /// produced by the training loop instead.
    pub fn omniscient_rows(&self, ctx: &AttackContext<'_>) -> Result<Vec<ParamVector>> {
        if ctx.f == 0 {
            return Ok(Vec::new());
        }
        match *self {
            Attack::None => Err(invalid("attack 'none' with f > 0")),
            Attack::Alie { z } => attack_alie(ctx, z),
            Attack::Foe { epsilon } => Ok(attack_foe(ctx, epsilon)),
            Attack::Sf => Ok(attack_sf(ctx)),
            Attack::Mimic => Ok(attack_mimic(ctx)),
            Attack::Lf => Err(invalid("label flipping needs the training pipeline")),
        }
    }
}

impl FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "alie" => Ok(Self::Alie { z: None }),
            "foe" => Ok(Self::Foe {
                epsilon: FOE_DEFAULT_EPSILON,
            }),
            "sf" => Ok(Self::Sf),
            "lf" => Ok(Self::Lf),
            "mimic" => Ok(Self::Mimic),
            other => Err(invalid(format!("unknown attack '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;

    fn batch(rows: &[&[f64]]) -> VectorBatch {
        VectorBatch::from_rows(rows.iter().copied()).unwrap()
    }

    #[test]
    fn quantile_inverts_the_cdf() {
        for p in [0.01, 0.2, 0.5, 2.0 / 3.0, 0.975] {
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() < 1e-10);
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn alie_z_for_seventeen_workers() {
        // s = 4, level = 8/12; reference quantile from an independent normal-distribution library
        let z = alie_z(17, 5).unwrap();
        assert!((z - 0.430_727_299_295_457_5).abs() < 1e-9, "{z}");
        assert!((alie_z(17, 8).unwrap() - 1.220_640_348_851_702_7).abs() < 1e-9);
        // n = 10, f = 1: s = 5, level 4/9 is below one half and z floors at zero
        assert_eq!(alie_z(10, 1).unwrap(), 0.0);
    }

    #[test]
    fn alie_with_identical_honest_rows_sends_the_mean() {
        let honest = batch(&[&[1.0, -2.0][..]; 12]);
        let ctx = AttackContext::new(&honest, 17, 5, 0).unwrap();
        let rows = attack_alie(&ctx, None).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r == &[1.0, -2.0]));
    }

    #[test]
    fn alie_rows_are_identical_and_shifted() {
        let honest = batch(&[&[0.0], &[2.0], &[4.0]]);
        let ctx = AttackContext::new(&honest, 5, 2, 0).unwrap();
        let rows = attack_alie(&ctx, Some(1.0)).unwrap();
        assert_eq!(rows, vec![vec![0.0], vec![0.0]]);
        let one = batch(&[&[1.0]]);
        let ctx = AttackContext::new(&one, 3, 2, 0).unwrap();
        assert!(attack_alie(&ctx, None).is_err());
    }

    #[test]
    fn foe_and_sf() {
        let honest = batch(&[&[0.0, -4.0], &[2.0, 0.0]]);
        let ctx = AttackContext::new(&honest, 3, 1, 0).unwrap();
        let foe = attack_foe(&ctx, 1.1);
        assert!((foe[0][0] + 1.1).abs() < 1e-15 && (foe[0][1] - 2.2).abs() < 1e-15);
        assert_eq!(attack_foe(&ctx, 0.0), vec![vec![-0.0, -0.0]]);
        assert_eq!(attack_sf(&ctx), attack_foe(&ctx, 1.0));
        let mu = honest.mean();
        assert_eq!(dot(&attack_sf(&ctx)[0], &mu), -dot(&mu, &mu));
    }

    #[test]
    fn mimic_two_rows_ties_to_first() {
        let honest = batch(&[&[0.0], &[3.0]]);
        let s = mimic_scores(&honest, 2);
        assert_eq!(s[0], s[1]);
        assert_eq!(mimic_target(&honest, 2), 0);
        assert_eq!(mimic_target(&batch(&[&[2.0][..]; 4]), 1), 0);
    }

    #[test]
    fn mimic_prefers_a_surrounded_outlier() {
        let honest = batch(&[&[0.0], &[1.0], &[1.2], &[5.0]]);
        let ctx = AttackContext::new(&honest, 6, 2, 0).unwrap();
        let rows = attack_mimic(&ctx);
        let k = mimic_target(&honest, 2);
        assert_eq!(rows, vec![honest.row(k).to_vec(); 2]);
    }

    #[test]
    fn label_flip_map() {
        assert_eq!(flip_label(0, 3), 2);
        assert_eq!(flip_label(1, 3), 1);
        assert_eq!(flip_label(0, 1), 0);
    }

    #[test]
    fn names_parse() {
        assert_eq!("sf".parse::<Attack>().unwrap(), Attack::Sf);
        assert_eq!(
            "foe".parse::<Attack>().unwrap(),
            Attack::Foe { epsilon: FOE_DEFAULT_EPSILON }
        );
        assert!("ipm".parse::<Attack>().is_err());
    }
}
