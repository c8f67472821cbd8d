use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::error;
use mvfuse_cli::config::{parse_configs, Overrides};
use mvfuse_cli::error::CliError;
use mvfuse_cli::output::read_cv_metrics;
use mvfuse_cli::pipeline::{run_pipeline, RunOptions, COMPARISON_LEVEL, COMPARISON_SIDED};
use mvfuse_cli::synthetic::{write_bundle, BundleConfig};
use mvfuse_core::evaluation::compare_models;

#[derive(Parser)]
#[command(name = "mvfuse", version, about = "Multi-view integration and risk modelling of tabular health data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run integration, cohort derivation and downstream evaluation.
    Run(RunArgs),
    /// Write a synthetic input bundle with data and model configs.
    GenerateSynthetic(SyntheticArgs),
    /// Paired fold comparison of models from one or more cv_metrics.csv files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config_data: PathBuf,
    #[arg(long)]
    config_model: PathBuf,
    /// Directory holding the cohort file.
    #[arg(long)]
    cohort_path: Option<PathBuf>,
    #[arg(long)]
    cohort_file: Option<String>,
    /// YYYY-MM-DD
    #[arg(long)]
    end_study_date: Option<NaiveDate>,
    #[arg(long)]
    out_path: Option<PathBuf>,
    /// Comma-separated cohort columns added as covariates.
    #[arg(long, value_delimiter = ',')]
    cohort_cov: Option<Vec<String>>,
    #[arg(long)]
    latent_impute: bool,
    #[arg(long)]
    test_size: Option<f64>,
    #[arg(long)]
    n_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite results in a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Record stage timings in the run manifest.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of samples missing from the second view.
    #[arg(long, default_value_t = 0.0)]
    missing_fraction: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    cv_metrics: Vec<PathBuf>,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let overrides = Overrides {
        cohort_path: args.cohort_path,
        cohort_file: args.cohort_file,
        end_study_date: args.end_study_date,
        out_path: args.out_path,
        cohort_cov: args.cohort_cov,
        latent_impute: args.latent_impute.then_some(true),
        test_size: args.test_size,
        n_folds: args.n_folds,
        seed: args.seed,
    };
    let (data, model) = parse_configs(&args.config_data, &args.config_model, &overrides)?;
    let summary = run_pipeline(
        &data,
        &model,
        RunOptions {
            force: args.force,
            record_timing: args.timing,
        },
    )?;
    for m in &summary.models {
        let test = m.test_metric.map_or("-".to_string(), |t| format!("{t:.4}"));
        println!(
            "{}\t{} cv {:.4} ± {:.4}\ttest {test}",
            m.model, m.metric_name, m.fold_mean, m.fold_std
        );
    }
    for c in &summary.comparisons {
        println!("{} > {}\tp = {:.4}{}", c.model_a, c.model_b, c.p_value, if c.significant { " *" } else { "" });
    }
    println!("results in {}", model.out_path.display());
    Ok(())
}

fn generate(args: SyntheticArgs) -> Result<(), CliError> {
    let mut cfg = BundleConfig::with_seed(args.seed);
    cfg.views.n_samples = args.n_samples;
    cfg.missing_fraction = args.missing_fraction;
    let files = write_bundle(&args.out, &cfg)?;
    println!("{}", files.data_config.display());
    println!("{}", files.model_config.display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let mut models = Vec::new();
    for p in &args.cv_metrics {
        models.extend(read_cv_metrics(p)?);
    }
    let comparisons = compare_models(&models, COMPARISON_SIDED, COMPARISON_LEVEL)
        .map_err(|source| CliError::Stage { stage: "compare", source })?;
    println!("model_a,model_b,p_value,significant");
    for c in comparisons {
        println!("{},{},{},{}", c.model_a, c.model_b, c.p_value, c.significant);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::GenerateSynthetic(a) => generate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
