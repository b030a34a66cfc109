use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use localicl_cli::commands::circles::{cmd_circles_sweep, CirclesSweepArgs};
use localicl_cli::commands::evaluate::{cmd_evaluate, EvaluateArgs};
use localicl_cli::commands::finetune::{cmd_finetune, FinetuneArgs};
use localicl_cli::commands::priorfit::cmd_priorfit;
use localicl_cli::datasets::{parse_gen_spec, DatasetSpec};
use localicl_cli::error::CliError;
use localicl_core::pipeline::Method;
use localicl_core::training::TrainMode;

/// Retrieval-augmented tabular in-context learning at desk scale.
///
/// Exit codes: 2 = configuration error, 3 = data error, 4 = numeric error.
#[derive(Parser)]
#[command(name = "localicl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prior-fit the in-context model on synthetic tasks; writes
    /// checkpoint.lcpf, train_log.csv and manifest.json.
    Priorfit {
        /// Experiment configuration (JSON). Defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (defaults to the config's io.out_dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate methods on datasets over repeated seeded 80:10:10 splits;
    /// writes records.csv, aggregates.json and manifest.json.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of
        /// icl_full,icl_knn,icl_ensemble,icl_chunked,knn_baseline.
        #[arg(long, value_delimiter = ',', default_values_t = [
            "icl_full".to_string(), "icl_knn".to_string(), "knn_baseline".to_string()
        ])]
        methods: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fine-tune the model on one dataset; writes finetuned.lcpf,
    /// finetune_log.csv, metrics.json and manifest.json.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// "local" (shared k-NN contexts) or "random" (random contexts).
        #[arg(long, default_value = "local")]
        mode: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Complexity sweep over concentric-circles tasks; writes sweep.csv and
    /// manifest.json.
    CirclesSweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Ring-pair counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
        pairs: Vec<usize>,
        /// Neighbour counts for local-context inference.
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 30, 100, 300])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 25)]
        seeds: usize,
        /// Points per generated dataset.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Radial noise standard deviation.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset path (repeatable).
    #[arg(long)]
    csv: Vec<PathBuf>,
    /// Generator spec (repeatable): circles:pairs=P,n=N[,noise=S][,seed=X]
    /// or prior:n=N[,seed=X].
    #[arg(long)]
    gen: Vec<String>,
    /// Label column name for CSV datasets.
    #[arg(long)]
    label_col: Option<String>,
    /// Comma-separated categorical column names for CSV datasets.
    #[arg(long, value_delimiter = ',')]
    cat_cols: Vec<String>,
}

impl DataArgs {
    fn specs(&self) -> Result<Vec<DatasetSpec>, CliError> {
        let mut out: Vec<DatasetSpec> =
            self.csv.iter().map(|p| DatasetSpec::Csv(p.clone())).collect();
        for g in &self.gen {
            out.push(DatasetSpec::Gen(parse_gen_spec(g)?));
        }
        Ok(out)
    }
}

fn parse_mode(s: &str) -> Result<TrainMode, CliError> {
    match s {
        "local" | "finetune_local" => Ok(TrainMode::FinetuneLocal),
        "random" | "finetune_random" => Ok(TrainMode::FinetuneRandom),
        other => Err(CliError::config(format!(
            "unknown fine-tuning mode '{other}' (expected local or random)"
        ))),
    }
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Priorfit { config, out_dir } => {
            let out = cmd_priorfit(config.as_deref(), out_dir.as_deref())?;
            println!("checkpoint: {}", out.checkpoint.display());
            println!("train log:  {}", out.train_log.display());
            println!("manifest:   {}", out.manifest.display());
        }
        Command::Evaluate { checkpoint, data, methods, config, out_dir } => {
            let methods = methods
                .iter()
                .map(|m| Method::parse(m).map_err(CliError::from_config_err))
                .collect::<Result<Vec<_>, _>>()?;
            let out = cmd_evaluate(&EvaluateArgs {
                checkpoint,
                datasets: data.specs()?,
                label_col: data.label_col.clone(),
                cat_cols: data.cat_cols.clone(),
                methods,
                config,
                out_dir,
            })?;
            println!("records:    {}", out.records_csv.display());
            println!("aggregates: {}", out.aggregates_json.display());
            println!("manifest:   {}", out.manifest.display());
        }
        Command::Finetune { checkpoint, data, mode, config, out_dir } => {
            let mut specs = data.specs()?;
            if specs.len() != 1 {
                return Err(CliError::config("finetune needs exactly one --csv or --gen dataset"));
            }
            let out = cmd_finetune(&FinetuneArgs {
                checkpoint,
                dataset: specs.remove(0),
                label_col: data.label_col.clone(),
                cat_cols: data.cat_cols.clone(),
                mode: parse_mode(&mode)?,
                config,
                out_dir,
            })?;
            println!("checkpoint: {}", out.checkpoint.display());
            println!("metrics:    {}", out.metrics_json.display());
            println!(
                "test auc:   {:.4} -> {:.4}",
                out.step0_test_auc, out.final_test_auc
            );
        }
        Command::CirclesSweep { checkpoint, pairs, k, seeds, n, noise, config, out_dir } => {
            let out = cmd_circles_sweep(&CirclesSweepArgs {
                checkpoint,
                pairs,
                k,
                seeds,
                n,
                noise,
                config,
                out_dir,
            })?;
            println!("sweep:    {}", out.sweep_csv.display());
            println!("manifest: {}", out.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
