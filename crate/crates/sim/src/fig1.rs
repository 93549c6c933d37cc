//! Class-gradient directions during centralized full-batch training.

use std::path::Path;

use wola_core::data::LabeledDataset;
use wola_core::model::{dataset_loss, init_params, weighted_batch_gradient, Activation, ModelSpec};
use wola_core::objective::{class_gradient, cosine_similarity};
use wola_core::rng::stream_seed;
use wola_core::training::test_accuracy;

use crate::dataset::{load_csv, CsvDataset};
use crate::error::{config_err, io_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig1Options {
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub train_fraction: f64,
}

impl Default for Fig1Options {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 500,
            lr: 0.1,
            hidden_dim: 8,
            activation: Activation::Tanh,
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Row {
    pub step: usize,
    pub loss: f64,
    pub test_accuracy: f64,
    /// One entry per class pair `(a, b)` with `a < b`, in lexicographic order.
    pub cosines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Trace {
    pub class_names: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub rows: Vec<Fig1Row>,
}

impl Fig1Trace {
    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.test_accuracy)
    }

    /// Smallest cosine recorded for the pair `(a, b)`.
    pub fn min_cosine(&self, a: usize, b: usize) -> Option<f64> {
        let k = self.pairs.iter().position(|&p| p == (a.min(b), a.max(b)))?;
        self.rows.iter().map(|r| r.cosines[k]).reduce(f64::min)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string(), "loss".into(), "test_accuracy".into()];
        h.extend(
            self.pairs
                .iter()
                .map(|&(a, b)| format!("cos_{}_{}", self.class_names[a], self.class_names[b])),
        );
        h
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), r.loss.to_string(), r.test_accuracy.to_string()];
            rec.extend(r.cosines.iter().map(f64::to_string));
            w.write_record(rec)?;
        }
        Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
    }
}

/// Trains a one-hidden-layer network with full-batch gradient descent on a
/// seeded split of `ds`. Each row is measured before the step it numbers;
/// the last row follows the final step.
pub fn trace(ds: &CsvDataset, opts: &Fig1Options) -> Result<Fig1Trace> {
    if opts.steps == 0 {
        return Err(config_err("steps", "must be at least 1"));
    }
    let (train, test) = ds.data.split(opts.train_fraction, stream_seed(opts.seed, "fig1-split", 0))?;
    let num_classes = ds.data.num_classes();
    let spec = ModelSpec::mlp(ds.data.feature_dim(), opts.hidden_dim, num_classes, opts.activation);
    let mut theta = init_params(&spec, stream_seed(opts.seed, "fig1-init", 0))?;
    let pairs: Vec<(usize, usize)> = (0..num_classes)
        .flat_map(|a| (a + 1..num_classes).map(move |b| (a, b)))
        .collect();
    let present: Vec<bool> = train.class_counts().iter().map(|&c| c > 0).collect();

    let batch: Vec<_> = train.samples().collect();
    let ones = vec![1.0; batch.len()];
    let mut rows = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        rows.push(measure(&spec, &theta, &train, &test, &pairs, &present, step)?);
        if step == opts.steps {
            break;
        }
        let g = weighted_batch_gradient(&spec, &theta, &batch, &ones, 0.0)?;
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= opts.lr * gi;
        }
    }
    Ok(Fig1Trace {
        class_names: ds.class_names.clone(),
        pairs,
        rows,
    })
}

fn measure(
    spec: &ModelSpec,
    theta: &[f64],
    train: &LabeledDataset,
    test: &LabeledDataset,
    pairs: &[(usize, usize)],
    present: &[bool],
    step: usize,
) -> Result<Fig1Row> {
    let grads: Vec<Option<Vec<f64>>> = (0..present.len())
        .map(|c| present[c].then(|| class_gradient(spec, theta, train, c)).transpose())
        .collect::<std::result::Result<_, _>>()?;
    let cosines = pairs
        .iter()
        .map(|&(a, b)| match (&grads[a], &grads[b]) {
            (Some(ga), Some(gb)) => Ok(cosine_similarity(ga, gb)?),
            _ => Ok(f64::NAN),
        })
        .collect::<Result<_>>()?;
    Ok(Fig1Row {
        step,
        loss: dataset_loss(spec, theta, train)?,
        test_accuracy: test_accuracy(spec, theta, test)?,
        cosines,
    })
}

pub fn run_fig1(data: &Path, out: &Path, opts: &Fig1Options) -> Result<Fig1Trace> {
    let ds = load_csv(data, None)?;
    let t = trace(&ds, opts)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(out, t.to_csv()?).map_err(io_err(out))?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_csv;

    #[test]
    fn two_classes_give_one_cosine_column() {
        let text = "a,b,label\n0,0,x\n0.1,0.2,x\n1,1,y\n0.9,1.1,y\n0.2,0.1,x\n1.2,0.8,y\n0,0.1,x\n1,0.9,y\n";
        let ds = parse_csv(text.as_bytes(), None).unwrap();
        let opts = Fig1Options {
            steps: 5,
            train_fraction: 0.75,
            ..Fig1Options::default()
        };
        let t = trace(&ds, &opts).unwrap();
        assert_eq!(t.header(), ["step", "loss", "test_accuracy", "cos_x_y"]);
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.cosines.len() == 1));
        assert_eq!(trace(&ds, &opts).unwrap(), t);
    }
}
