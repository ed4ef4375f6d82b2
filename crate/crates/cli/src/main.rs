//! `rhmixer`: train, evaluate, run and cross-validate audio mixer models.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 data
//! error. Diagnostics go to standard error; metrics and results to standard
//! output.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rhmixer::config::RunConfig;
use rhmixer::frontend::{Manifest, Split};
use rhmixer::run::{run_eval, run_infer, run_kfold, run_train};
use rhmixer::selftest::run_selftest;
use rhmixer::toy::{write_toy_dataset, ToySpec};
use rhmixer::{Error, ErrorKind, Variant};

#[derive(Parser)]
#[command(name = "rhmixer", version, about = "Audio spectrogram mixer with roll-time and Hermitian-FFT mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the manifest's `train` split; select on `val` if present.
    Train {
        /// Run configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `model.variant`: RH, H, R or baseline.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Score a checkpoint on one manifest split and print the report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// train, val, test or fold0..fold9.
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Classify one WAV file.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
    },
    /// Cross-validate over the manifest's fold labels.
    Kfold {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle suite.
    Selftest,
    /// Write the synthetic four-class tone/chirp dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        train: usize,
        #[arg(long, default_value_t = 0)]
        val: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        /// Also write `--folded` clips spread over this many folds.
        #[arg(long, default_value_t = 0)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        folded: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>) -> rhmixer::Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn print_line(line: &str) {
    println!("{line}");
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    serde_json::to_string(value).expect("serializable")
}

/// Returns `Ok(false)` when the command ran but reported failure.
fn execute(command: Command) -> rhmixer::Result<bool> {
    match command {
        Command::Train { config, manifest, out, seed, variant } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(seed) = seed {
                cfg.train.seed = seed;
            }
            if let Some(variant) = variant {
                cfg.model.variant = variant;
            }
            let manifest = Manifest::load(&manifest)?;
            let summary = run_train(&cfg, &manifest, &out, &mut print_line)?;
            eprintln!(
                "best epoch {} ({} acc {:.4}); checkpoint in {}",
                summary.best_epoch,
                summary.selected.split,
                summary.selected.acc,
                out.display()
            );
            if let Some(test) = &summary.test {
                eprintln!("test acc {:.4} auc {}", test.acc, test.auc.map_or("n/a".into(), |a| format!("{a:.4}")));
            }
        }
        Command::Eval { checkpoint, manifest, split } => {
            let manifest = Manifest::load(&manifest)?;
            println!("{}", to_json(&run_eval(&checkpoint, &manifest, split)?));
        }
        Command::Infer { checkpoint, wav } => {
            println!("{}", to_json(&run_infer(&checkpoint, &wav)?));
        }
        Command::Kfold { config, manifest, out } => {
            let cfg = load_config(config.as_ref())?;
            let manifest = Manifest::load(&manifest)?;
            let summary = run_kfold(&cfg, &manifest, &out, &mut print_line)?;
            eprintln!("fold  held-out  best-epoch  acc");
            for f in &summary.folds {
                eprintln!("{:>4}  {:>8}  {:>10}  {:.4}", f.fold, f.held_out.len(), f.best_epoch, f.report.acc);
            }
            eprintln!("k={} mean acc {:.4} best acc {:.4}", summary.k, summary.mean_acc, summary.best_acc);
        }
        Command::Selftest => {
            let results = run_selftest()?;
            let mut all = true;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag}  {:<40} worst {:.3e} (tolerance {:.0e})", r.name, r.worst, r.tolerance);
                all &= r.passed;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                eprintln!("{failed} of {} properties failed", results.len());
            }
            return Ok(all);
        }
        Command::Synth { out, train, val, test, folds, folded, seed } => {
            let spec = ToySpec { train, val, test, folds, folded, seed };
            println!("{}", write_toy_dataset(&out, &spec)?.display());
        }
    }
    Ok(true)
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Runtime => 1,
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
