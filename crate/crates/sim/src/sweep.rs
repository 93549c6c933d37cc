//! One experiment per value of a config field.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{config_err, io_err, Result};
use crate::experiment::{run_experiment, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: String,
    pub summary: Summary,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "axis",
    "value",
    "seeds",
    "test_accuracy_mean",
    "test_accuracy_sd",
    "gradient_dissimilarity_mean",
    "gradient_dissimilarity_sd",
    "final_test_accuracy_mean",
    "final_test_accuracy_sd",
];

fn cell_dir(axis: &str, value: &str) -> String {
    format!("{axis}={value}")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect()
}

/// Every cell gets its own directory under `out`; the table of cell
/// summaries goes to `out/sweep_<axis>.csv`. Cells run in parallel.
pub fn run_sweep(cfg: &ExperimentConfig, axis: &str, values: &[String], out: &Path) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(config_err("values", "at least one value is required"));
    }
    let cells: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| Ok((v.clone(), cfg.with_field(axis, v)?)))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let results: Vec<SweepCell> = cells
        .par_iter()
        .map(|(value, c)| {
            let summary = run_experiment(c, &out.join(cell_dir(axis, value)))?;
            Ok(SweepCell {
                value: value.clone(),
                summary,
            })
        })
        .collect::<Result<_>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for cell in &results {
        let s = &cell.summary;
        w.write_record([
            axis.to_string(),
            cell.value.clone(),
            s.seeds.len().to_string(),
            s.test_accuracy.mean.to_string(),
            s.test_accuracy.sd.to_string(),
            s.gradient_dissimilarity.mean.to_string(),
            s.gradient_dissimilarity.sd.to_string(),
            s.final_test_accuracy.mean.to_string(),
            s.final_test_accuracy.sd.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    let table = out.join(format!("sweep_{}.csv", cell_dir(axis, "").trim_end_matches('=')));
    fs::write(&table, bytes).map_err(io_err(&table))?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_dirs_are_path_safe() {
        assert_eq!(cell_dir("alpha", "0.3"), "alpha=0.3");
        assert_eq!(cell_dir("attack", "a/b c"), "attack=a_b_c");
    }
}
