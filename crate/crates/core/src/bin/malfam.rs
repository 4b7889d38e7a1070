use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use malfam::deepfeat::Arch;
use malfam::featsel::ScoreMethod;
use malfam::gbt::ImportanceKind;
use malfam::pipeline::{self, LoadedConfig, Outcome};
use malfam::Error;

#[derive(Parser)]
#[command(name = "malfam", version, about = "Malware family classification pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline TOML file.
    #[arg(long, short, global = true, default_value = "malfam.toml")]
    config: PathBuf,
    /// Override any config key, e.g. `--set gbt.best.eta=0.05`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set gbt.params=...`.
    #[arg(long, global = true, value_parser = ["baseline", "best"])]
    params: Option<String>,
    /// Shorthand for `--set extract.workers=...`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the hand-crafted categories into the feature store.
    Extract,
    /// Train one CNN out-of-fold and add its features to the store.
    TrainCnn {
        /// gray-image, entropy-stream, byte-ngram or opcode-ngram.
        #[arg(long)]
        arch: String,
    },
    /// Fit the booster on every labeled row of a preset.
    TrainGbt {
        #[arg(long, default_value = "all")]
        preset: String,
    },
    /// k-fold cross-validation of a preset.
    Evaluate {
        #[arg(long, default_value = "all")]
        preset: String,
        /// Evaluate each category of the preset on its own.
        #[arg(long)]
        per_category: bool,
    },
    /// Univariate scoring and the top-K sweep.
    Select {
        #[arg(long, default_value = "all")]
        preset: String,
        /// chi2, anova-f or mutual-info.
        #[arg(long)]
        method: String,
    },
    /// Forward stepwise selection over whole categories.
    Stepwise {
        #[arg(long, default_value = "all")]
        preset: String,
    },
    /// Write a submission CSV for the unlabeled rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Score labeled rows too.
        #[arg(long)]
        all: bool,
    },
    /// Feature and category importance of a trained booster.
    Importance {
        #[arg(long)]
        model: PathBuf,
        /// weight, gain or total_gain.
        #[arg(long, default_value = "gain")]
        kind: String,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

fn load(common: &Common) -> malfam::Result<LoadedConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(p) = &common.params {
        overrides.push(format!("gbt.params=\"{p}\""));
    }
    if let Some(w) = common.workers {
        overrides.push(format!("extract.workers={w}"));
    }
    pipeline::load_config(&common.config, &overrides)
}

fn usage(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Config(m),
        other => other,
    }
}

fn run(cli: Cli) -> malfam::Result<Outcome> {
    let cfg = load(&cli.common)?;
    match cli.command {
        Command::Extract => {
            let (summary, outcome) = pipeline::cmd_extract(&cfg)?;
            println!("extracted {} samples, skipped {}", summary.rows, summary.skipped.len());
            for (id, why) in &summary.skipped {
                println!("  skipped {id}: {why}");
            }
            Ok(outcome)
        }
        Command::TrainCnn { arch } => {
            let arch: Arch = arch.parse().map_err(usage)?;
            pipeline::cmd_train_cnn(&cfg, arch)
        }
        Command::TrainGbt { preset } => {
            let path = pipeline::cmd_train_gbt(&cfg, &preset)?;
            println!("{}", path.display());
            Ok(Outcome::Success)
        }
        Command::Evaluate { preset, per_category } => {
            let names: Vec<String> = if per_category {
                pipeline::preset(&preset)?.iter().map(|c| c.to_string()).collect()
            } else {
                vec![preset]
            };
            for name in names {
                let (r, path) = pipeline::cmd_evaluate(&cfg, &name)?;
                println!(
                    "{name}: accuracy {:.4} logloss {:.4} ({})",
                    r.mean_accuracy,
                    r.mean_logloss,
                    path.display()
                );
            }
            Ok(Outcome::Success)
        }
        Command::Select { preset, method } => {
            let method: ScoreMethod = method.parse().map_err(usage)?;
            let s = pipeline::cmd_select(&cfg, &preset, method)?;
            for k in &s.k_grid {
                println!(
                    "K={:<5} accuracy {:.4} logloss {:.4}",
                    k.k, k.mean_accuracy, k.mean_logloss
                );
            }
            Ok(Outcome::Success)
        }
        Command::Stepwise { preset } => {
            let r = pipeline::cmd_stepwise(&cfg, &preset)?;
            for s in &r.trace.steps {
                println!(
                    "+{:<16} {:>6} features  logloss {:.6}",
                    s.added, s.num_features, s.cv_logloss
                );
            }
            println!("stopped: {}", r.trace.stop_reason);
            Ok(Outcome::Success)
        }
        Command::Predict { model, out, all } => {
            let n = pipeline::cmd_predict(&cfg, &model, &out, all)?;
            println!("wrote {n} rows to {}", out.display());
            Ok(Outcome::Success)
        }
        Command::Importance { model, kind, top } => {
            let kind: ImportanceKind = kind.parse().map_err(usage)?;
            let r = pipeline::cmd_importance(&cfg, &model, kind, top)?;
            for c in &r.categories {
                println!("{:<16} {:>12.4}", c.name, c.score);
            }
            for f in &r.features {
                println!("  {:<32} {:>12.4}", f.name, f.score);
            }
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
