//! Robust distributed stochastic heavy ball.
//!
//! Each round every honest worker samples a mini-batch, computes a
//! (possibly label-aligned) gradient, clips it and folds it into its local
//! momentum. Only once all honest momenta exist do the Byzantine workers
//! produce their rows. The server then applies the pre-aggregator and the
//! aggregation rule and takes a step along the aggregate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::aggregation::{Aggregator, UpdateSet};
use crate::attacks::{flip_dataset, Attack, AttackContext};
use crate::data::{label_distribution, LabelDistribution, LabeledDataset, Sample, WorkerShard};
use crate::error::{invalid, Error, Result};
use crate::model::{dataset_loss, predict, weighted_batch_gradient, ModelSpec, ParamVector};
use crate::numerics::{axpy, norm, scale, sq_dist, VectorBatch, WEISZFELD_MAX_ITER, WEISZFELD_TOL};
use crate::objective::{
    aggregate_objective_gm, build_objective, objective_attack_worst, wola_weights, ObjectiveMode,
    TrainingObjective,
};
use crate::preagg::PreAggregator;
use crate::rng::{self, StreamRng};

/// Learning rate as a function of the round `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// `base / (1 + ⌊t / period⌋)`
    InverseStep { base: f64, period: usize },
    /// `hi` while `t ≤ switch`, `lo` afterwards.
    TwoPhase { hi: f64, lo: f64, switch: usize },
    Constant { base: f64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::InverseStep { base, period } => base > 0.0 && period > 0,
            LrSchedule::TwoPhase { hi, lo, .. } => hi > 0.0 && lo > 0.0,
            LrSchedule::Constant { base } => base > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("learning-rate schedule parameters must be positive: {self:?}")))
        }
    }

    pub fn rate(&self, t: usize) -> Result<f64> {
        self.validate()?;
        if t == 0 {
            return Err(invalid("rounds are numbered from 1"));
        }
        Ok(match *self {
            LrSchedule::InverseStep { base, period } => base / (1 + t / period) as f64,
            LrSchedule::TwoPhase { hi, lo, switch } => {
                if t <= switch {
                    hi
                } else {
                    lo
                }
            }
            LrSchedule::Constant { base } => base,
        })
    }
}

/// Projects `g` onto the ball of radius `c`.
pub fn clip(g: &[f64], c: f64) -> Result<ParamVector> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, c)?;
    Ok(out)
}

fn clip_in_place(g: &mut [f64], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(invalid("clipping radius must be positive"));
    }
    let n = norm(g);
    if n > c {
        scale(g, c / n);
    }
    Ok(())
}

/// Whether clipping bounds the fresh gradient or the updated momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipTarget {
    #[default]
    Gradient,
    Momentum,
}

impl FromStr for ClipTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Self::Gradient),
            "momentum" => Ok(Self::Momentum),
            other => Err(invalid(format!("unknown clip target '{other}'"))),
        }
    }
}

/// Per-worker optimisation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub batch_size: usize,
    pub beta: f64,
    /// `None` disables clipping.
    pub clip: Option<f64>,
    pub clip_target: ClipTarget,
    pub l2_reg: f64,
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(invalid("momentum beta must lie in [0, 1)"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(invalid("clipping radius must be positive"));
            }
        }
        if !(self.l2_reg >= 0.0) {
            return Err(invalid("l2_reg must be nonnegative"));
        }
        Ok(())
    }
}

/// Loss used by the honest workers.
#[derive(Debug, Clone, PartialEq)]
pub enum LossMode {
    Standard,
    /// Samples weighted by `q^y / p_i^y` with `p_i` the full-shard distribution.
    Wola(TrainingObjective),
}

/// How the loss and its objective are chosen before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSetting {
    Standard,
    Wola,
    /// Label alignment with `q` obtained as the geometric median of the
    /// workers' submitted distributions, the Byzantine ones under the
    /// worst-case objective attack.
    WolaDagger,
}

impl FromStr for LossSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "wola" => Ok(Self::Wola),
            "wola_dagger" => Ok(Self::WolaDagger),
            other => Err(invalid(format!("unknown loss mode '{other}'"))),
        }
    }
}

/// Builds the loss mode for `setting` from the honest shards.
pub fn resolve_loss_mode(
    setting: LossSetting,
    objective: ObjectiveMode,
    provided: Option<&LabelDistribution>,
    honest: &[WorkerShard],
    n: usize,
    f: usize,
) -> Result<LossMode> {
    let dists: Vec<LabelDistribution> = honest.iter().map(label_distribution).collect::<Result<_>>()?;
    let sizes: Vec<usize> = honest.iter().map(WorkerShard::size).collect();
    let num_classes = honest
        .first()
        .map(|s| s.data().num_classes())
        .ok_or_else(|| invalid("no honest shards"))?;
    match setting {
        LossSetting::Standard => Ok(LossMode::Standard),
        LossSetting::Wola => Ok(LossMode::Wola(build_objective(
            objective,
            num_classes,
            &dists,
            &sizes,
            provided,
        )?)),
        LossSetting::WolaDagger => {
            let submissions = objective_attack_worst(&dists, f, n)?;
            Ok(LossMode::Wola(aggregate_objective_gm(
                &submissions,
                WEISZFELD_TOL,
                WEISZFELD_MAX_ITER,
            )?))
        }
    }
}

/// A worker's shard, label statistics, momentum and sampling stream.
#[derive(Debug, Clone)]
pub struct Worker {
    shard: WorkerShard,
    local: LabelDistribution,
    momentum: ParamVector,
    rng: StreamRng,
}

impl Worker {
    pub fn new(shard: WorkerShard, dim: usize, rng: StreamRng) -> Result<Self> {
        let local = label_distribution(&shard)?;
        Ok(Self {
            shard,
            local,
            momentum: vec![0.0; dim],
            rng,
        })
    }

    pub fn shard(&self) -> &WorkerShard {
        &self.shard
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    pub fn local_distribution(&self) -> &LabelDistribution {
        &self.local
    }
}

/// One heavy-ball step of a worker: sample `b` points with replacement,
/// compute the gradient under `loss`, clip, and update
/// `m ← β m + (1 − β) g`. Returns the new momentum.
pub fn honest_step<'w>(
    worker: &'w mut Worker,
    spec: &ModelSpec,
    theta: &[f64],
    loss: &LossMode,
    cfg: &StepConfig,
) -> Result<&'w [f64]> {
    let data = worker.shard.data();
    if data.is_empty() {
        return Err(invalid("empty shard"));
    }
    let batch: Vec<Sample<'_>> = (0..cfg.batch_size)
        .map(|_| data.sample(worker.rng.random_range(0..data.len())))
        .collect();
    let weights = match loss {
        LossMode::Standard => vec![1.0; batch.len()],
        LossMode::Wola(q) => {
            let labels: Vec<usize> = batch.iter().map(|s| s.y).collect();
            wola_weights(q, &worker.local, &labels)?
        }
    };
    let mut g = weighted_batch_gradient(spec, theta, &batch, &weights, cfg.l2_reg)?;
    if let (Some(c), ClipTarget::Gradient) = (cfg.clip, cfg.clip_target) {
        clip_in_place(&mut g, c)?;
    }
    for (m, gk) in worker.momentum.iter_mut().zip(&g) {
        *m = cfg.beta * *m + (1.0 - cfg.beta) * gk;
    }
    if let (Some(c), ClipTarget::Momentum) = (cfg.clip, cfg.clip_target) {
        clip_in_place(&mut worker.momentum, c)?;
    }
    Ok(&worker.momentum)
}

/// `(1/|H|) Σ_i ‖m_i − m̄‖²` where `m̄` is the size-weighted honest mean.
pub fn gradient_dissimilarity(momenta: &VectorBatch, sizes: &[usize]) -> Result<f64> {
    if sizes.len() != momenta.count() {
        return Err(Error::DimensionMismatch {
            expected: momenta.count(),
            found: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(invalid("all worker sizes are zero"));
    }
    let mut mean = vec![0.0; momenta.dim()];
    for (r, &s) in momenta.rows().zip(sizes) {
        axpy(&mut mean, s as f64 / total as f64, r);
    }
    Ok(momenta.rows().map(|r| sq_dist(r, &mean)).sum::<f64>() / momenta.count() as f64)
}

/// Fraction of `test` classified correctly.
pub fn test_accuracy(spec: &ModelSpec, theta: &[f64], test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(invalid("empty test set"));
    }
    let mut correct = 0usize;
    for s in test.samples() {
        if predict(spec, theta, s.x)? == s.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Metrics of one round, measured after the model step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub test_accuracy: f64,
    pub gradient_dissimilarity: f64,
    /// Unweighted cross-entropy over the union of honest shards.
    pub mean_honest_loss: f64,
    pub aggregate_norm: f64,
    /// Filled in by hosts that measure time; zero otherwise.
    pub wall_clock_ms: u64,
}

/// Run-averaged metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunAverages {
    pub test_accuracy: f64,
    pub gradient_dissimilarity: f64,
    pub final_accuracy: f64,
    pub rounds: usize,
}

impl RunAverages {
    pub fn from_records(records: &[RoundRecord]) -> Result<Self> {
        let last = records.last().ok_or_else(|| invalid("no rounds recorded"))?;
        let n = records.len() as f64;
        Ok(Self {
            test_accuracy: records.iter().map(|r| r.test_accuracy).sum::<f64>() / n,
            gradient_dissimilarity: records.iter().map(|r| r.gradient_dissimilarity).sum::<f64>() / n,
            final_accuracy: last.test_accuracy,
            rounds: records.len(),
        })
    }
}

/// Everything a simulation needs besides its data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    /// Total number of workers, Byzantine included.
    pub n: usize,
    /// Actual number of Byzantine workers.
    pub f: usize,
    /// Robustness parameter handed to the f-aware rules.
    pub declared_f: usize,
    pub aggregator: Aggregator,
    pub preagg: PreAggregator,
    pub attack: Attack,
    pub step: StepConfig,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.step.validate()?;
        self.schedule.validate()?;
        if 2 * self.f >= self.n {
            return Err(invalid(format!(
                "threat model requires f < n/2 (n = {}, f = {})",
                self.n, self.f
            )));
        }
        if 2 * self.declared_f >= self.n {
            return Err(invalid(format!(
                "declared f = {} must be below n/2 = {}",
                self.declared_f,
                self.n as f64 / 2.0
            )));
        }
        if self.f > 0 && self.attack == Attack::None {
            return Err(invalid("f > 0 needs an attack"));
        }
        Ok(())
    }
}

/// Training state: model, workers and round counter.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: TrainConfig,
    loss: LossMode,
    theta: ParamVector,
    honest: Vec<Worker>,
    byzantine: Vec<Worker>,
    honest_union: LabeledDataset,
    test_set: LabeledDataset,
    round: usize,
}

impl Simulation {
    /// `byzantine_shards` are used only by the label-flipping attack, which
    /// needs one shard per Byzantine worker.
    pub fn new(
        config: TrainConfig,
        loss: LossMode,
        theta: ParamVector,
        honest_shards: Vec<WorkerShard>,
        byzantine_shards: Vec<WorkerShard>,
        test_set: LabeledDataset,
    ) -> Result<Self> {
        config.validate()?;
        config.spec.check_params(&theta)?;
        if honest_shards.len() != config.n - config.f {
            return Err(invalid(format!(
                "{} honest shards for n - f = {}",
                honest_shards.len(),
                config.n - config.f
            )));
        }
        if config.attack == Attack::Lf && byzantine_shards.len() != config.f {
            return Err(invalid(format!(
                "label flipping needs {} Byzantine shards, got {}",
                config.f,
                byzantine_shards.len()
            )));
        }
        let dim = theta.len();
        let mut union_idx_parts = Vec::new();
        for s in &honest_shards {
            union_idx_parts.push(s.data().clone());
        }
        let honest_union = concat(&union_idx_parts)?;
        let honest = honest_shards
            .into_iter()
            .enumerate()
            .map(|(i, s)| Worker::new(s, dim, rng::stream(config.seed, "worker", i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let byzantine = if config.attack == Attack::Lf {
            byzantine_shards
                .into_iter()
                .enumerate()
                .map(|(j, s)| {
                    let flipped = WorkerShard::new(flip_dataset(s.data())?);
                    Worker::new(flipped, dim, rng::stream(config.seed, "byzantine", j as u64))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            loss,
            theta,
            honest,
            byzantine,
            honest_union,
            test_set,
            round: 0,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn loss_mode(&self) -> &LossMode {
        &self.loss
    }

    pub fn honest_workers(&self) -> &[Worker] {
        &self.honest
    }

    fn honest_phase(&mut self) -> Result<()> {
        let (spec, theta, loss, step) = (&self.config.spec, &self.theta, &self.loss, &self.config.step);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.honest
                .par_iter_mut()
                .map(|w| honest_step(w, spec, theta, loss, step).map(|_| ()))
                .collect::<Result<()>>()
        }
        #[cfg(not(feature = "parallel"))]
        {
            for w in &mut self.honest {
                honest_step(w, spec, theta, loss, step)?;
            }
            Ok(())
        }
    }

    fn byzantine_rows(&mut self, honest: &VectorBatch, t: usize) -> Result<Vec<ParamVector>> {
        let cfg = &self.config;
        match cfg.attack {
            Attack::Lf => {
                let mut rows = Vec::with_capacity(self.byzantine.len());
                for w in &mut self.byzantine {
                    rows.push(honest_step(w, &cfg.spec, &self.theta, &self.loss, &cfg.step)?.to_vec());
                }
                Ok(rows)
            }
            ref attack => attack.omniscient_rows(&AttackContext::new(honest, cfg.n, cfg.f, t)?),
        }
    }

    /// Runs one round and returns its metrics.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round + 1;
        self.honest_phase()?;
        let honest = VectorBatch::from_rows(self.honest.iter().map(Worker::momentum))?;
        let byzantine = self.byzantine_rows(&honest, t)?;

        let mut all = honest.clone();
        for row in &byzantine {
            all.push(row)?;
        }
        let cfg = &self.config;
        let updates = UpdateSet::new(all, cfg.declared_f)?;
        let pre = cfg
            .preagg
            .apply(&updates, rng::stream_seed(cfg.seed, "preagg-round", t as u64))?;
        let aggregate = cfg.aggregator.aggregate(&pre)?;

        let lr = cfg.schedule.rate(t)?;
        for (th, r) in self.theta.iter_mut().zip(&aggregate) {
            *th -= lr * r;
        }
        self.round = t;

        let sizes: Vec<usize> = self.honest.iter().map(|w| w.shard.size()).collect();
        Ok(RoundRecord {
            t,
            test_accuracy: test_accuracy(&cfg.spec, &self.theta, &self.test_set)?,
            gradient_dissimilarity: gradient_dissimilarity(&honest, &sizes)?,
            mean_honest_loss: dataset_loss(&cfg.spec, &self.theta, &self.honest_union)?,
            aggregate_norm: norm(&aggregate),
            wall_clock_ms: 0,
        })
    }

    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundRecord>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}

/// Concatenation of datasets sharing feature and class dimensions.
pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
    let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        if p.feature_dim() != first.feature_dim() || p.num_classes() != first.num_classes() {
            return Err(invalid("datasets disagree on feature or class count"));
        }
        for s in p.samples() {
            features.extend_from_slice(s.x);
            labels.push(s.y);
        }
    }
    LabeledDataset::new(features, first.feature_dim(), labels, first.num_classes())
}
