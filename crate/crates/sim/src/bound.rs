//! Monte-Carlo check of the objective-attack bound under mean aggregation.

use rand::Rng;
use serde::Serialize;
use wola_core::data::{dirichlet_draw, LabelDistribution};
use wola_core::objective::{mean_distribution, objective_attack_worst, objective_deviation_bound};
use wola_core::rng;

use crate::error::{config_err, Result};

/// Absolute tolerance for the worst-case equality.
pub const EQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub f: usize,
    pub num_classes: usize,
    pub trials: usize,
    /// Largest `|deviation − bound|` under the worst-case attack.
    pub worst_case_max_gap: f64,
    /// Smallest and largest `deviation / bound` under the worst-case attack
    /// (1 when the bound is 0).
    pub worst_case_ratio: (f64, f64),
    /// Largest `deviation / bound` over random adversaries.
    pub random_max_ratio: f64,
    pub random_max_deviation: f64,
    /// Random adversaries whose deviation exceeded the bound.
    pub violations: usize,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.worst_case_max_gap <= EQUALITY_TOL
    }
}

/// `‖mean(submissions) − u‖₁`.
pub fn mean_deviation(submissions: &[LabelDistribution], u: &LabelDistribution) -> Result<f64> {
    Ok(mean_distribution(submissions)?.l1_distance(u))
}

fn ratio(dev: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if dev == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        dev / bound
    }
}

/// Each trial draws `n − f` honest distributions, measures the worst-case
/// attack and one random adversary. Random adversaries alternate between
/// one-hot submissions and diffuse Dirichlet draws.
pub fn bound_check(n: usize, f: usize, trials: usize, seed: u64, num_classes: usize) -> Result<BoundReport> {
    if f >= n {
        return Err(config_err("f", format!("must be below n = {n}")));
    }
    if num_classes < 2 {
        return Err(config_err("classes", "must be at least 2"));
    }
    if trials == 0 {
        return Err(config_err("trials", "must be at least 1"));
    }
    let mut report = BoundReport {
        n,
        f,
        num_classes,
        trials,
        worst_case_max_gap: 0.0,
        worst_case_ratio: (f64::INFINITY, 0.0),
        random_max_ratio: 0.0,
        random_max_deviation: 0.0,
        violations: 0,
    };
    const HONEST_ALPHAS: [f64; 4] = [0.1, 0.3, 1.0, 3.0];
    for trial in 0..trials {
        let mut rng = rng::stream(seed, "bound-check", trial as u64);
        let alpha = HONEST_ALPHAS[trial % HONEST_ALPHAS.len()];
        let honest: Vec<LabelDistribution> = (0..n - f)
            .map(|_| LabelDistribution::new(dirichlet_draw(&mut rng, alpha, num_classes)?).map_err(Into::into))
            .collect::<Result<_>>()?;
        let u = mean_distribution(&honest)?;
        let bound = objective_deviation_bound(&u, f, n)?;

        let worst = mean_deviation(&objective_attack_worst(&honest, f, n)?, &u)?;
        report.worst_case_max_gap = report.worst_case_max_gap.max((worst - bound).abs());
        let r = ratio(worst, bound);
        report.worst_case_ratio = (report.worst_case_ratio.0.min(r), report.worst_case_ratio.1.max(r));

        let mut submissions = honest.clone();
        for _ in 0..f {
            let d = if rng.random_bool(0.5) {
                LabelDistribution::one_hot(num_classes, rng.random_range(0..num_classes))
            } else {
                LabelDistribution::new(dirichlet_draw(&mut rng, 0.5, num_classes)?)?
            };
            submissions.push(d);
        }
        let dev = mean_deviation(&submissions, &u)?;
        report.random_max_deviation = report.random_max_deviation.max(dev);
        report.random_max_ratio = report.random_max_ratio.max(ratio(dev, bound));
        if dev > bound + EQUALITY_TOL {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_case_is_tight_and_random_is_bounded() {
        let r = bound_check(17, 6, 200, 5, 10).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!((r.worst_case_ratio.0 - 1.0).abs() < 1e-9);
        assert!(r.random_max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn no_byzantine_workers_means_no_deviation() {
        let r = bound_check(5, 0, 20, 1, 3).unwrap();
        assert_eq!(r.worst_case_max_gap, 0.0);
        assert_eq!(r.random_max_deviation, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn rejects_f_at_least_n() {
        assert!(bound_check(3, 3, 1, 0, 3).is_err());
    }
}
