//! Turning a config into simulations and writing their results.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use rand::seq::SliceRandom;
use wola_core::data::{dirichlet_partition, generate_synthetic, largest_remainder, LabeledDataset, WorkerShard};
use wola_core::model::init_params;
use wola_core::rng::{stream, stream_seed};
use wola_core::training::{resolve_loss_mode, RoundRecord, RunAverages, Simulation, TrainConfig};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::dataset::load_csv;
use crate::error::{io_err, Result};

/// Training pool and test set for one seed.
pub fn build_data(cfg: &ExperimentConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            num_classes,
            feature_dim,
            samples_per_class,
            class_separation,
            test_samples_per_class,
        } => Ok((
            generate_synthetic(
                *num_classes,
                *feature_dim,
                *samples_per_class,
                *class_separation,
                stream_seed(seed, "train-data", 0),
            )?,
            generate_synthetic(
                *num_classes,
                *feature_dim,
                *test_samples_per_class,
                *class_separation,
                stream_seed(seed, "test-data", 0),
            )?,
        )),
        DatasetConfig::Csv {
            path,
            label_column,
            train_fraction,
        } => {
            let ds = load_csv(path, label_column.as_deref())?;
            Ok(ds.data.split(*train_fraction, stream_seed(seed, "split", 0))?)
        }
    }
}

/// Class-stratified random subset of about `f·N/(n − f)` samples, at least
/// one per class.
fn byzantine_pool(train: &LabeledDataset, n: usize, f: usize, seed: u64) -> LabeledDataset {
    let counts = train.class_counts();
    let total = (f * train.len()).div_ceil(n - f).min(train.len());
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut rng = stream(seed, "byzantine-pool", 0);
    let mut picked = Vec::with_capacity(total);
    for (c, k) in largest_remainder(total, &weights).into_iter().enumerate() {
        let mut idx = train.class_indices(c);
        idx.shuffle(&mut rng);
        idx.truncate(k.clamp(1, counts[c]));
        picked.extend(idx);
    }
    picked.sort_unstable();
    train.subset(&picked)
}

/// Builds the simulation for `seed`. The training pool is split into `n − f`
/// label-skewed honest shards; the Byzantine workers (used only by label
/// flipping) get shards of the same expected size cut from a random subset
/// of the pool by the same procedure.
pub fn build_simulation(cfg: &ExperimentConfig, seed: u64) -> Result<Simulation> {
    cfg.validate()?;
    let r = cfg.resolve()?;
    let (train, test) = build_data(cfg, seed)?;
    let honest = dirichlet_partition(&train, cfg.n - cfg.f, cfg.alpha, stream_seed(seed, "partition", 0), r.partition)?;
    let byzantine: Vec<WorkerShard> = if cfg.f == 0 {
        Vec::new()
    } else {
        let pool = byzantine_pool(&train, cfg.n, cfg.f, seed);
        dirichlet_partition(&pool, cfg.f, cfg.alpha, stream_seed(seed, "partition", 1), r.partition)?
    };
    let spec = cfg.model_spec(train.feature_dim(), train.num_classes())?;
    let loss = resolve_loss_mode(r.loss, r.objective, r.provided.as_ref(), &honest, cfg.n, cfg.f)?;
    let theta = init_params(&spec, stream_seed(seed, "init", 0))?;
    let train_cfg = TrainConfig {
        spec,
        n: cfg.n,
        f: cfg.f,
        declared_f: r.declared_f,
        aggregator: r.aggregator,
        preagg: r.preagg,
        attack: r.attack,
        step: r.step,
        schedule: r.schedule,
        seed,
    };
    Ok(Simulation::new(train_cfg, loss, theta, honest, byzantine, test)?)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RoundRecord>> {
    let mut sim = build_simulation(cfg, seed)?;
    let mut records = Vec::with_capacity(cfg.optimizer.rounds);
    for _ in 0..cfg.optimizer.rounds {
        let start = Instant::now();
        let mut rec = sim.run_round()?;
        if cfg.record_timing {
            rec.wall_clock_ms = start.elapsed().as_millis() as u64;
        }
        records.push(rec);
    }
    Ok(records)
}

pub const CSV_HEADER: [&str; 6] = [
    "t",
    "test_accuracy",
    "gradient_dissimilarity",
    "mean_honest_loss",
    "aggregate_norm",
    "wall_clock_ms",
];

/// One header row and one line per round.
pub fn records_csv(records: &[RoundRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.test_accuracy.to_string(),
            r.gradient_dissimilarity.to_string(),
            r.mean_honest_loss.to_string(),
            r.aggregate_norm.to_string(),
            r.wall_clock_ms.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rounds: usize,
    pub mean_test_accuracy: f64,
    pub mean_gradient_dissimilarity: f64,
    pub final_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub seeds: Vec<SeedSummary>,
    pub test_accuracy: MeanSd,
    pub gradient_dissimilarity: MeanSd,
    pub final_test_accuracy: MeanSd,
}

impl Summary {
    pub fn new(runs: &[(u64, Vec<RoundRecord>)]) -> Result<Self> {
        let seeds = runs
            .iter()
            .map(|(seed, recs)| {
                let a = RunAverages::from_records(recs)?;
                Ok(SeedSummary {
                    seed: *seed,
                    rounds: a.rounds,
                    mean_test_accuracy: a.test_accuracy,
                    mean_gradient_dissimilarity: a.gradient_dissimilarity,
                    final_test_accuracy: a.final_accuracy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let col = |g: fn(&SeedSummary) -> f64| MeanSd::of(&seeds.iter().map(g).collect::<Vec<_>>());
        Ok(Self {
            test_accuracy: col(|s| s.mean_test_accuracy),
            gradient_dissimilarity: col(|s| s.mean_gradient_dissimilarity),
            final_test_accuracy: col(|s| s.final_test_accuracy),
            seeds,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

/// Runs every seed of `cfg` and writes `seed_<k>.csv` plus `summary.json`
/// into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let records = run_seed(cfg, seed)?;
        write_file(&out.join(format!("seed_{seed}.csv")), &records_csv(&records)?)?;
        runs.push((seed, records));
    }
    let summary = Summary::new(&runs)?;
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_file(&out.join("summary.json"), &json)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd() {
        let s = MeanSd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSd::of(&[4.0]).sd, 0.0);
    }

    #[test]
    fn csv_has_header_and_one_line_per_round() {
        let r = RoundRecord {
            t: 1,
            test_accuracy: 0.5,
            gradient_dissimilarity: 0.25,
            mean_honest_loss: 1.0,
            aggregate_norm: 2.0,
            wall_clock_ms: 0,
        };
        let text = String::from_utf8(records_csv(&[r, RoundRecord { t: 2, ..r }]).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "1,0.5,0.25,1,2,0");
        assert_eq!(lines.len(), 3);
    }
}
