use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use winnower::cli::{cmd_eval, cmd_infer, cmd_silver, cmd_synth, cmd_train, SilverMethod};
use winnower::em::EmConfig;
use winnower::error::{Error, Result};
use winnower::synth::SynthConfig;

#[derive(Parser)]
#[command(
    name = "winnower",
    version,
    about = "Weak-supervision denoising: silver labels, factor-graph inference, variational EM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark split with noisy vote metadata.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for dataset.jsonl, truth.jsonl, templates.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Per-function accuracies in (0.5, 1], comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.60, 0.65, 0.70, 0.75, 0.85])]
        accuracies: Vec<f64>,
        #[arg(long, default_value_t = 0.6)]
        coverage: f64,
        #[arg(long, default_value_t = 0.5)]
        balance: f64,
    },
    /// Run variational EM over a dataset and template file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file mirroring the EM config structure; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "em-iters")]
        em_iters: Option<usize>,
        /// Prediction-module epochs per EM iteration.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "hard-em", action = clap::ArgAction::SetTrue)]
        hard_em: bool,
        #[arg(long = "bp-iters")]
        bp_iters: Option<usize>,
        /// Gradient step size for both M-steps.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Predict with a trained model; no supervision factors involved.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against a truth file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate per-question silver evidence selections.
    Silver {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Rule)]
        method: MethodArg,
        /// Selection budget per question.
        #[arg(long = "L", default_value_t = 3)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rule,
    Ilp,
}

fn load_em_config(path: Option<&PathBuf>) -> Result<EmConfig> {
    let Some(path) = path else {
        return Ok(EmConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, 1, e.to_string()))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { seed, out, n, accuracies, coverage, balance } => {
            let config = SynthConfig {
                n_instances: n,
                lf_accuracies: accuracies,
                lf_coverage: coverage,
                class_balance: balance,
                seed,
            };
            cmd_synth(&config, &out)
        }
        Command::Train {
            data,
            templates,
            out,
            config,
            seed,
            em_iters,
            epochs,
            hard_em,
            bp_iters,
            lr,
        } => load_em_config(config.as_ref()).and_then(|mut em| {
            if let Some(s) = seed {
                em.seed = s;
            }
            if let Some(n) = em_iters {
                em.em_iters = n;
            }
            if let Some(n) = epochs {
                em.prediction_epochs = n;
            }
            if hard_em {
                em.hard_em = true;
            }
            if let Some(n) = bp_iters {
                em.bp.max_iters = n;
            }
            if let Some(rate) = lr {
                em.m_step.learning_rate = rate;
            }
            cmd_train(&data, &templates, &em, &out)
        }),
        Command::Infer { model, data, out } => cmd_infer(&model, &data, &out),
        Command::Eval { predictions, truth, out } => {
            cmd_eval(&predictions, &truth, &out).map(|report| {
                println!(
                    "accuracy {:.4}  macro_f1 {:.4}  n {}",
                    report.accuracy, report.macro_f1, report.n
                );
            })
        }
        Command::Silver { corpus, method, budget, out } => {
            let method = match method {
                MethodArg::Rule => SilverMethod::Rule,
                MethodArg::Ilp => SilverMethod::Ilp,
            };
            cmd_silver(&corpus, method, budget, &out).map(|entries| {
                println!("wrote {} silver selections", entries.len());
            })
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
