use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wola_core::model::Activation;
use wola_sim::bound::bound_check;
use wola_sim::config::ExperimentConfig;
use wola_sim::experiment::run_experiment;
use wola_sim::fig1::{run_fig1, Fig1Options};
use wola_sim::sweep::run_sweep;

#[derive(Parser)]
#[command(name = "wola", version, about = "Byzantine-robust federated learning under label skew")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config; writes seed_<k>.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the config once per value of one field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted field name, e.g. `f`, `alpha`, `aggregator` or `optimizer.beta`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the objective-attack deviation bound on random instances.
    BoundCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
    },
    /// Track class-gradient cosines while training on a labeled CSV.
    Fig1 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Fig1Options::default().steps)]
        steps: usize,
        #[arg(long, default_value_t = Fig1Options::default().lr)]
        lr: f64,
        #[arg(long, default_value_t = Fig1Options::default().hidden_dim)]
        hidden: usize,
        #[arg(long, default_value = "tanh")]
        activation: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let out = out.unwrap_or_else(|| cfg.output.clone());
            let summary = run_experiment(&cfg, &out).with_context(|| format!("running {}", config.display()))?;
            println!(
                "{} seed(s): test accuracy {:.4} (sd {:.4}), gradient dissimilarity {:.6} (sd {:.6}); results in {}",
                summary.seeds.len(),
                summary.test_accuracy.mean,
                summary.test_accuracy.sd,
                summary.gradient_dissimilarity.mean,
                summary.gradient_dissimilarity.sd,
                out.display()
            );
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            let cells = run_sweep(&cfg, &axis, &values, &out)?;
            for c in &cells {
                println!(
                    "{axis}={}: test accuracy {:.4} (sd {:.4}), gradient dissimilarity {:.6} (sd {:.6})",
                    c.value,
                    c.summary.test_accuracy.mean,
                    c.summary.test_accuracy.sd,
                    c.summary.gradient_dissimilarity.mean,
                    c.summary.gradient_dissimilarity.sd
                );
            }
            Ok(true)
        }
        Command::BoundCheck {
            n,
            f,
            trials,
            seed,
            classes,
        } => {
            let r = bound_check(n, f, trials, seed, classes)?;
            println!(
                "n={n} f={f} classes={classes} trials={trials}: worst-case max |deviation - bound| = {:e}, \
                 deviation/bound in [{}, {}]; random max deviation/bound = {}, violations = {}",
                r.worst_case_max_gap, r.worst_case_ratio.0, r.worst_case_ratio.1, r.random_max_ratio, r.violations
            );
            println!("{}", if r.passed() { "PASS" } else { "FAIL" });
            Ok(r.passed())
        }
        Command::Fig1 {
            data,
            out,
            seed,
            steps,
            lr,
            hidden,
            activation,
        } => {
            let opts = Fig1Options {
                seed,
                steps,
                lr,
                hidden_dim: hidden,
                activation: activation.parse::<Activation>()?,
                ..Fig1Options::default()
            };
            let t = run_fig1(&data, &out, &opts)?;
            println!("final test accuracy {:.4}", t.final_accuracy());
            for (k, &(a, b)) in t.pairs.iter().enumerate() {
                let min = t.rows.iter().map(|r| r.cosines[k]).fold(f64::INFINITY, f64::min);
                println!("min cos({}, {}) = {min:.4}", t.class_names[a], t.class_names[b]);
            }
            Ok(true)
        }
    }
}
