//! Command-line harness around the `selfsep` library: the predictive
//! efficiency experiment, density rendering, and file-level plumbing for
//! generating datasets, fitting predictors, and scoring their predictions.

mod config;
mod model;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use model::Model;
use selfsep::density::{build_density_family, DensityFamily, FamilyConfig};
use selfsep::evaluation::{test_error, Method};
use selfsep::experiment::{render_density, run_experiment, ExperimentConfig, SeedPlan};
use selfsep::model_based::{
    bayes_posterior, map_estimate, map_estimate_multifidelity, predict_with_posterior,
    predict_with_weights, CrossFidelityPrior, MapEstimate, WeightPrior,
};
use selfsep::model_free::{predict_hifi_only, predict_multifidelity};
use selfsep::perception::Fidelity;
use selfsep::pilot::{JointAction, UtilityWeights};
use selfsep::scenario::{
    generate_dataset, load_dataset, sample_encounter, save_dataset, test_bearings,
    train_bearings, Dataset,
};
use selfsep::seeds::stream;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "selfsep", version, about = "Two-pilot collision-avoidance simulation and joint-decision predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that reads configuration.
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, as KEY=VALUE. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        config::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full sweep: every method scored over training budgets and replicates.
    Experiment(ExperimentArgs),
    /// Estimate one weight combination's action density and write it as a grid CSV.
    Density(DensityArgs),
    /// Simulate encounters and the pilots' decisions into a dataset file.
    GenData(GenDataArgs),
    /// Fit a predictor from dataset files and write a model file.
    Fit(FitArgs),
    /// Predict a test set's joint actions with a fitted model.
    Predict(PredictArgs),
    /// Predict a test set with known true weights, estimating the error floor.
    LowerBound(LowerBoundArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for the result CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Weight scenario: identical, small, large, or all.
    #[arg(long)]
    scenario: Option<String>,
    /// Low-fidelity training-pool size.
    #[arg(long)]
    lofi: Option<usize>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// First pilot's separation weight.
    #[arg(long)]
    w1: f64,
    /// Second pilot's separation weight.
    #[arg(long)]
    w2: f64,
    /// Observation fidelity: high or low.
    #[arg(long)]
    fidelity: Fidelity,
    /// Output file for the `a1_deg,a2_deg,density` grid.
    #[arg(long, default_value = "density.csv")]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Records to simulate.
    #[arg(long)]
    count: usize,
    /// Observation fidelity: high or low.
    #[arg(long)]
    fidelity: Fidelity,
    /// First pilot's true separation weight.
    #[arg(long)]
    w1: f64,
    /// Second pilot's true separation weight.
    #[arg(long)]
    w2: f64,
    /// Stream seed for this dataset.
    #[arg(long)]
    seed: u64,
    /// Approach bearings: 'train', 'test', or comma-separated degrees.
    #[arg(long, default_value = "train")]
    bearings: String,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Prediction method tag (mf-hifi, mf-multi, mb-map-hifi, mb-map-multi, mb-bayes).
    #[arg(long)]
    method: Method,
    /// High-fidelity training dataset.
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Low-fidelity training dataset (multi-fidelity methods only).
    #[arg(long, value_name = "FILE")]
    lofi: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Prior mean for w1 (model-based; defaults to the training metadata weights).
    #[arg(long)]
    prior_w1: Option<f64>,
    /// Prior mean for w2 (model-based; defaults to the training metadata weights).
    #[arg(long)]
    prior_w2: Option<f64>,
    /// Low-fidelity prior mean for w1 (mb-bayes; defaults to the --lofi metadata weights).
    #[arg(long)]
    lofi_prior_w1: Option<f64>,
    /// Low-fidelity prior mean for w2 (mb-bayes; defaults to the --lofi metadata weights).
    #[arg(long)]
    lofi_prior_w2: Option<f64>,
    /// Drop the cross-fidelity coupling of the mb-bayes prior.
    #[arg(long)]
    uncoupled: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Fitted model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Test dataset whose encounters are predicted.
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// Output predictions file (`a1,a2` rows aligned with the test records).
    #[arg(long)]
    out: PathBuf,
    /// Simulations averaged per encounter (model-based methods).
    #[arg(long)]
    samples: Option<usize>,
    /// Stream seed for the prediction simulations (model-based methods).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Test dataset to predict.
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// True w1 (defaults to the test dataset's metadata weights).
    #[arg(long)]
    w1: Option<f64>,
    /// True w2 (defaults to the test dataset's metadata weights).
    #[arg(long)]
    w2: Option<f64>,
    /// Simulations averaged per encounter.
    #[arg(long)]
    samples: Option<usize>,
    /// Stream seed for the prediction simulations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output predictions file.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match Cli::parse().command {
        Command::Experiment(args) => cmd_experiment(args),
        Command::Density(args) => cmd_density(args),
        Command::GenData(args) => cmd_gen_data(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::LowerBound(args) => cmd_lower_bound(args),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(name) = &args.scenario {
        cfg.scenarios = config::scenario_set(name)?;
    }
    if let Some(lofi) = args.lofi {
        cfg.lofi_count = lofi;
    }
    let summary = run_experiment(&cfg)?;
    println!(
        "wrote {} cells to {}",
        summary.cells.len(),
        summary.output_dir.join("results.csv").display()
    );
    Ok(())
}

fn cmd_density(args: DensityArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let weights = UtilityWeights::new(args.w1, args.w2)?;
    render_density(
        args.fidelity,
        &weights,
        cfg.novel_count,
        &cfg.geometry,
        &cfg.decision,
        &cfg.action_grid,
        &cfg.kde_method,
        cfg.master_seed,
        &args.out,
    )?;
    println!(
        "wrote the {}-fidelity density at ({}, {}) to {}",
        args.fidelity.tag(),
        args.w1,
        args.w2,
        args.out.display()
    );
    Ok(())
}

fn parse_bearings(value: &str) -> Result<Vec<f64>> {
    match value {
        "train" => Ok(train_bearings()),
        "test" => Ok(test_bearings()),
        list => list
            .split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| anyhow!("invalid bearing '{}' in --bearings", item.trim()))
            })
            .collect(),
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let weights = UtilityWeights::new(args.w1, args.w2)?;
    let bearings = parse_bearings(&args.bearings)?;
    let dataset = generate_dataset(
        args.count,
        args.fidelity,
        &weights,
        &bearings,
        &cfg.geometry,
        &cfg.decision,
        args.seed,
    )?;
    save_dataset(&dataset, &args.out)
        .with_context(|| format!("writing dataset {}", args.out.display()))?;
    println!("wrote {} records to {}", dataset.len(), args.out.display());
    Ok(())
}

/// Novel encounters and one fidelity's density family, derived from the
/// master seed exactly as the experiment derives them, so file-level fits
/// reproduce the experiment's internal estimates.
fn build_family(cfg: &ExperimentConfig, fidelity: Fidelity) -> Result<DensityFamily> {
    let plan = SeedPlan::new(cfg.master_seed);
    let mut rng = stream(plan.novel());
    let mut novel = Vec::with_capacity(cfg.novel_count);
    for _ in 0..cfg.novel_count {
        novel.push(sample_encounter(&train_bearings(), &cfg.geometry, &mut rng)?);
    }
    log::info!(
        "building the {}-fidelity density family over {} encounters",
        fidelity.tag(),
        novel.len()
    );
    Ok(build_density_family(
        &FamilyConfig {
            fidelity,
            weight_grid: cfg.weight_grid.clone(),
            action_grid: cfg.action_grid,
            method: cfg.kde_method,
            decision: cfg.decision,
            seed: plan.family(fidelity),
        },
        &novel,
        cfg.cache_dir.as_deref(),
    )?)
}

fn load_dataset_arg(path: &Path, what: &str) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {what} dataset {}", path.display()))
}

fn prior_mean(
    flags: (Option<f64>, Option<f64>),
    fallback: &Dataset,
    what: &str,
) -> Result<UtilityWeights> {
    match flags {
        (Some(w1), Some(w2)) => Ok(UtilityWeights::new(w1, w2)?),
        (None, None) => Ok(fallback.weights),
        _ => bail!("--{what}-w1 and --{what}-w2 must be given together"),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let method = args.method;
    let needs_lofi = matches!(method, Method::MfMulti | Method::MbMapMulti | Method::MbBayes);
    if needs_lofi && args.lofi.is_none() {
        bail!("method {} needs --lofi <low-fidelity dataset>", method.tag());
    }
    if !needs_lofi && args.lofi.is_some() {
        bail!("method {} takes no --lofi dataset", method.tag());
    }
    let model_based = matches!(method, Method::MbMapHifi | Method::MbMapMulti | Method::MbBayes);
    if !model_based
        && (args.prior_w1.is_some() || args.prior_w2.is_some() || args.uncoupled)
    {
        bail!("method {} takes no prior flags", method.tag());
    }
    if method != Method::MbBayes
        && (args.lofi_prior_w1.is_some() || args.lofi_prior_w2.is_some())
    {
        bail!("only mb-bayes takes --lofi-prior-w1/--lofi-prior-w2");
    }

    let train = load_dataset_arg(&args.train, "training")?;
    if train.fidelity == Fidelity::Low {
        log::warn!("--train {} holds low-fidelity records", args.train.display());
    }
    let lofi = match &args.lofi {
        Some(path) => {
            let ds = load_dataset_arg(path, "low-fidelity")?;
            if ds.fidelity == Fidelity::High {
                log::warn!("--lofi {} holds high-fidelity records", path.display());
            }
            Some(ds)
        }
        None => None,
    };

    let log_estimate = |estimate: &MapEstimate| {
        log::info!(
            "estimated weights ({}, {}), {} actions clamped to the grid edge",
            estimate.weights.w1,
            estimate.weights.w2,
            estimate.clamped
        );
    };
    let model = match method {
        Method::MfHifi => Model::MfHifi { hifi: train },
        Method::MfMulti => Model::MfMulti { hifi: train, lofi: lofi.expect("checked above") },
        Method::MbMapHifi => {
            let cfg = args.config.load()?;
            let prior = WeightPrior::standard(prior_mean((args.prior_w1, args.prior_w2), &train, "prior")?);
            let family = build_family(&cfg, Fidelity::High)?;
            let estimate = map_estimate(&family, &train.actions(), &prior)?;
            log_estimate(&estimate);
            Model::MbMap { method, weights: estimate.weights }
        }
        Method::MbMapMulti => {
            let cfg = args.config.load()?;
            let lofi = lofi.expect("checked above");
            let prior = WeightPrior::standard(prior_mean((args.prior_w1, args.prior_w2), &train, "prior")?);
            let hifi_family = build_family(&cfg, Fidelity::High)?;
            let lofi_family = build_family(&cfg, Fidelity::Low)?;
            let estimate = map_estimate_multifidelity(
                &hifi_family,
                &lofi_family,
                &train.actions(),
                &lofi.actions(),
                &prior,
            )?;
            log_estimate(&estimate);
            Model::MbMap { method, weights: estimate.weights }
        }
        Method::MbBayes => {
            let cfg = args.config.load()?;
            let lofi = lofi.expect("checked above");
            let hifi_mean = prior_mean((args.prior_w1, args.prior_w2), &train, "prior")?;
            let lofi_mean =
                prior_mean((args.lofi_prior_w1, args.lofi_prior_w2), &lofi, "lofi-prior")?;
            let prior = if args.uncoupled {
                CrossFidelityPrior::uncoupled(lofi_mean, hifi_mean)
            } else {
                CrossFidelityPrior::standard(lofi_mean, hifi_mean)
            };
            let hifi_family = build_family(&cfg, Fidelity::High)?;
            let lofi_family = build_family(&cfg, Fidelity::Low)?;
            let posterior = bayes_posterior(
                &hifi_family,
                &lofi_family,
                &train.actions(),
                &lofi.actions(),
                &prior,
            )?;
            Model::MbBayes { posterior }
        }
    };
    model.save(&args.out)?;
    println!("wrote {} model to {}", method.tag(), args.out.display());
    Ok(())
}

fn write_predictions(path: &Path, predictions: &[JointAction]) -> Result<()> {
    let mut text = String::from("a1,a2\n");
    for p in predictions {
        writeln!(text, "{},{}", p.a1, p.a2)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let test = load_dataset_arg(&args.test, "test")?;
    let encounters = test.encounters();
    let simulates = matches!(model, Model::MbMap { .. } | Model::MbBayes { .. });
    if !simulates && (args.samples.is_some() || args.seed.is_some()) {
        bail!(
            "method {} predicts without simulation; --samples and --seed do not apply",
            model.method().tag()
        );
    }
    let settings = || -> Result<_> {
        let cfg = args.config.load()?;
        let samples = args.samples.unwrap_or(cfg.prediction_samples);
        Ok((cfg, samples, args.seed.unwrap_or(0)))
    };
    let predictions = match &model {
        Model::MfHifi { hifi } => predict_hifi_only(hifi, &encounters)?,
        Model::MfMulti { hifi, lofi } => predict_multifidelity(hifi, lofi, &encounters)?,
        Model::MbMap { weights, .. } => {
            let (cfg, samples, seed) = settings()?;
            predict_with_weights(weights, Fidelity::High, &encounters, &cfg.decision, samples, seed)?
        }
        Model::MbBayes { posterior } => {
            let (cfg, samples, seed) = settings()?;
            predict_with_posterior(posterior, Fidelity::High, &encounters, &cfg.decision, samples, seed)?
        }
    };
    write_predictions(&args.out, &predictions)?;
    let error = test_error(&predictions, &test.actions())?;
    println!(
        "wrote {} predictions to {} (summed action distance {:.6})",
        predictions.len(),
        args.out.display(),
        error
    );
    Ok(())
}

fn cmd_lower_bound(args: LowerBoundArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let test = load_dataset_arg(&args.test, "test")?;
    let weights = match (args.w1, args.w2) {
        (Some(w1), Some(w2)) => UtilityWeights::new(w1, w2)?,
        (None, None) => test.weights,
        _ => bail!("--w1 and --w2 must be given together"),
    };
    let samples = args.samples.unwrap_or(cfg.prediction_samples);
    let predictions = predict_with_weights(
        &weights,
        Fidelity::High,
        &test.encounters(),
        &cfg.decision,
        samples,
        args.seed,
    )?;
    write_predictions(&args.out, &predictions)?;
    let error = test_error(&predictions, &test.actions())?;
    println!(
        "wrote {} floor predictions to {} (summed action distance {:.6})",
        predictions.len(),
        args.out.display(),
        error
    );
    Ok(())
}
