//! End-to-end comparison of the predictors over sample budgets, replicates,
//! and weight scenarios.
//!
//! One experiment fixes a set of true pilot weights per fidelity, then for
//! each replicate draws a held-out test set, a pool of cheap low-fidelity
//! records, and progressively larger high-fidelity training sets. Every
//! prediction method is scored on the same test set, and its total error is
//! divided into the error floor obtained by predicting with the true
//! weights, giving a predictive efficiency per (scenario, method, budget)
//! cell. Scores land in per-method CSV files plus one long-format summary.
//!
//! Randomness is organized as a tree of derived seeds rooted at one master
//! seed, so any dataset, decision, or prediction can be regenerated in
//! isolation and the whole experiment is reproducible byte for byte.

use crate::density::{
    build_density_family, ActionGrid, DensityFamily, FamilyConfig, KdeMethod, WeightGrid,
};
use crate::error::{Error, Result};
use crate::evaluation::{predictive_efficiency, summarize, test_error, Method};
use crate::model_based::{
    bayes_posterior, map_estimate, map_estimate_multifidelity, predict_with_posterior,
    predict_with_weights, CrossFidelityPrior, WeightPrior,
};
use crate::model_free::{predict_hifi_only, predict_multifidelity};
use crate::perception::Fidelity;
use crate::pilot::{DecisionConfig, JointAction, UtilityWeights};
use crate::scenario::{
    generate_dataset, sample_encounter, test_bearings, train_bearings, Dataset, Encounter,
    GeometryConfig,
};
use crate::seeds::{derive, stream, tag};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// True utility weights for both fidelities of the simulated pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScenario {
    pub name: String,
    pub lofi: UtilityWeights,
    pub hifi: UtilityWeights,
}

impl WeightScenario {
    fn build(name: &str, lofi: (f64, f64), hifi: (f64, f64)) -> Self {
        WeightScenario {
            name: name.into(),
            lofi: UtilityWeights { w1: lofi.0, w2: lofi.1 },
            hifi: UtilityWeights { w1: hifi.0, w2: hifi.1 },
        }
    }

    /// Both fidelities share the same true weights.
    pub fn identical() -> Self {
        Self::build("identical", (0.89, 0.90), (0.89, 0.90))
    }

    /// Low-fidelity weights sit one grid step below the high-fidelity ones.
    pub fn small_difference() -> Self {
        Self::build("small-difference", (0.88, 0.89), (0.89, 0.90))
    }

    /// Low-fidelity weights are far from the high-fidelity ones.
    pub fn large_difference() -> Self {
        Self::build("large-difference", (0.80, 0.81), (0.89, 0.90))
    }

    pub fn all() -> Vec<Self> {
        vec![
            Self::identical(),
            Self::small_difference(),
            Self::large_difference(),
        ]
    }
}

/// Full configuration of an experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenarios: Vec<WeightScenario>,
    pub methods: Vec<Method>,
    /// High-fidelity training-set sizes to sweep.
    pub hifi_counts: Vec<usize>,
    pub replicates: usize,
    /// Held-out encounters scored per replicate.
    pub test_count: usize,
    /// Low-fidelity records available to the multi-fidelity methods.
    pub lofi_count: usize,
    /// Encounters used to estimate each weight combination's action density.
    pub novel_count: usize,
    /// Simulations averaged per encounter when predicting from weights.
    pub prediction_samples: usize,
    pub weight_grid: WeightGrid,
    pub action_grid: ActionGrid,
    pub kde_method: KdeMethod,
    pub decision: DecisionConfig,
    pub geometry: GeometryConfig,
    /// Mean of the weight priors. Defaults to each scenario's true weights
    /// per fidelity when unset.
    pub prior_mean: Option<UtilityWeights>,
    pub master_seed: u64,
    /// Density families are cached here across runs when set.
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenarios: vec![WeightScenario::identical()],
            methods: Method::all(),
            hifi_counts: vec![5, 10, 20, 40, 80, 160],
            replicates: 10,
            test_count: 100,
            lofi_count: 400,
            novel_count: 1000,
            prediction_samples: 10,
            weight_grid: WeightGrid::default(),
            action_grid: ActionGrid::default(),
            kde_method: KdeMethod::GaussianSilverman,
            decision: DecisionConfig::default(),
            geometry: GeometryConfig::default(),
            prior_mean: None,
            master_seed: 42,
            cache_dir: None,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, value) in [
            ("scenarios", self.scenarios.len()),
            ("methods", self.methods.len()),
            ("sample counts", self.hifi_counts.len()),
            ("replicates", self.replicates),
            ("test count", self.test_count),
            ("low-fidelity count", self.lofi_count),
            ("novel count", self.novel_count),
            ("prediction samples", self.prediction_samples),
        ] {
            if value == 0 {
                return Err(Error::InvalidParameter {
                    what,
                    details: "must be at least 1".into(),
                });
            }
        }
        if self.hifi_counts.contains(&0) {
            return Err(Error::InvalidParameter {
                what: "sample counts",
                details: "every count must be at least 1".into(),
            });
        }
        self.action_grid.validate()?;
        self.decision.validate()?;
        self.geometry.validate()?;
        for s in &self.scenarios {
            s.lofi.validate()?;
            s.hifi.validate()?;
        }
        Ok(())
    }
}

/// The tree of derived seeds an experiment draws from. Everything hangs off
/// the master seed; the novel encounters and density families are shared by
/// all scenarios, while datasets, test sets, and predictions key off the
/// scenario, replicate, training-set size, and method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedPlan {
    master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan { master }
    }

    fn fidelity_code(fidelity: Fidelity) -> u64 {
        match fidelity {
            Fidelity::Low => 0,
            Fidelity::High => 1,
        }
    }

    /// Encounters the density families are built on.
    pub fn novel(&self) -> u64 {
        derive(self.master, &[tag::NOVEL])
    }

    /// Simulated decisions inside one fidelity's density family.
    pub fn family(&self, fidelity: Fidelity) -> u64 {
        derive(self.master, &[tag::FAMILY, Self::fidelity_code(fidelity)])
    }

    fn scenario_root(&self, scenario: u64) -> u64 {
        derive(self.master, &[tag::SCENARIO, scenario])
    }

    /// Test encounters and their true actions for one replicate.
    pub fn test_set(&self, scenario: u64, replicate: u64) -> u64 {
        derive(self.scenario_root(scenario), &[tag::TEST_SET, replicate])
    }

    /// The replicate's low-fidelity training records.
    pub fn lofi(&self, scenario: u64, replicate: u64) -> u64 {
        derive(self.scenario_root(scenario), &[tag::LOFI, replicate])
    }

    /// The error-floor prediction run at the true weights.
    pub fn lower_bound(&self, scenario: u64, replicate: u64) -> u64 {
        derive(self.scenario_root(scenario), &[tag::LOWER_BOUND, replicate])
    }

    /// High-fidelity training records of one size within a replicate.
    pub fn hifi(&self, scenario: u64, replicate: u64, count: u64) -> u64 {
        derive(self.scenario_root(scenario), &[tag::HIFI, replicate, count])
    }

    /// A method's prediction simulations for one cell.
    pub fn predict(&self, scenario: u64, replicate: u64, count: u64, method: Method) -> u64 {
        derive(
            self.scenario_root(scenario),
            &[tag::PREDICT, replicate, count, method.index()],
        )
    }
}

/// One (scenario, method, training-set size) cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub method: Method,
    pub samples: usize,
    /// Per-replicate predictive efficiencies that completed.
    pub efficiencies: Vec<f64>,
    pub score: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateLowerBound {
    pub scenario: String,
    pub replicate: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
    pub lower_bounds: Vec<ReplicateLowerBound>,
    pub output_dir: PathBuf,
}

struct Replicate {
    test_encounters: Vec<Encounter>,
    truth: Vec<JointAction>,
    lofi: Dataset,
    lower_bound: f64,
}

/// One unit of work for the cell workers: which scenario, replicate,
/// training-set size, and method to predict and score.
#[derive(Debug, Clone, Copy)]
struct CellJob {
    scenario: usize,
    replicate: usize,
    count_index: usize,
    method: Method,
}

fn draw_test_set(
    config: &ExperimentConfig,
    scenario: &WeightScenario,
    seed: u64,
) -> Result<(Vec<Encounter>, Vec<JointAction>)> {
    let ds = generate_dataset(
        config.test_count,
        Fidelity::High,
        &scenario.hifi,
        &test_bearings(),
        &config.geometry,
        &config.decision,
        seed,
    )?;
    Ok((ds.encounters(), ds.actions()))
}

fn prepare_replicate(
    config: &ExperimentConfig,
    plan: &SeedPlan,
    scenario_index: u64,
    scenario: &WeightScenario,
    replicate: u64,
) -> Result<Replicate> {
    let (test_encounters, truth) =
        draw_test_set(config, scenario, plan.test_set(scenario_index, replicate))?;
    let lofi = generate_dataset(
        config.lofi_count,
        Fidelity::Low,
        &scenario.lofi,
        &train_bearings(),
        &config.geometry,
        &config.decision,
        plan.lofi(scenario_index, replicate),
    )?;
    let floor_predictions = predict_with_weights(
        &scenario.hifi,
        Fidelity::High,
        &test_encounters,
        &config.decision,
        config.prediction_samples,
        plan.lower_bound(scenario_index, replicate),
    )?;
    let lower_bound = test_error(&floor_predictions, &truth)?;
    Ok(Replicate {
        test_encounters,
        truth,
        lofi,
        lower_bound,
    })
}

#[allow(clippy::too_many_arguments)]
fn predict_cell(
    config: &ExperimentConfig,
    scenario: &WeightScenario,
    method: Method,
    hifi_ds: &Dataset,
    replicate: &Replicate,
    hifi_family: Option<&DensityFamily>,
    lofi_family: Option<&DensityFamily>,
    predict_seed: u64,
) -> Result<Vec<JointAction>> {
    let hifi_prior_mean = config.prior_mean.unwrap_or(scenario.hifi);
    let lofi_prior_mean = config.prior_mean.unwrap_or(scenario.lofi);
    fn family(f: Option<&DensityFamily>) -> &DensityFamily {
        f.expect("families are built whenever a model-based method runs")
    }
    match method {
        Method::MfHifi => predict_hifi_only(hifi_ds, &replicate.test_encounters),
        Method::MfMulti => {
            predict_multifidelity(hifi_ds, &replicate.lofi, &replicate.test_encounters)
        }
        Method::MbMapHifi => {
            let prior = WeightPrior::standard(hifi_prior_mean);
            let estimate = map_estimate(family(hifi_family), &hifi_ds.actions(), &prior)?;
            predict_with_weights(
                &estimate.weights,
                Fidelity::High,
                &replicate.test_encounters,
                &config.decision,
                config.prediction_samples,
                predict_seed,
            )
        }
        Method::MbMapMulti => {
            let prior = WeightPrior::standard(hifi_prior_mean);
            let estimate = map_estimate_multifidelity(
                family(hifi_family),
                family(lofi_family),
                &hifi_ds.actions(),
                &replicate.lofi.actions(),
                &prior,
            )?;
            predict_with_weights(
                &estimate.weights,
                Fidelity::High,
                &replicate.test_encounters,
                &config.decision,
                config.prediction_samples,
                predict_seed,
            )
        }
        Method::MbBayes => {
            let prior = CrossFidelityPrior::standard(lofi_prior_mean, hifi_prior_mean);
            let posterior = bayes_posterior(
                family(hifi_family),
                family(lofi_family),
                &hifi_ds.actions(),
                &replicate.lofi.actions(),
                &prior,
            )?;
            predict_with_posterior(
                &posterior,
                Fidelity::High,
                &replicate.test_encounters,
                &config.decision,
                config.prediction_samples,
                predict_seed,
            )
        }
    }
}

/// Run the full sweep and write `results.csv` plus one CSV per method into
/// the output directory. Shared data (test sets, training pools, error
/// floors) is generated up front; the (scenario, replicate, size, method)
/// cells then execute on a worker pool bounded by the available cores, and
/// a single collector folds their scores in replicate order. Every
/// simulation draws from a stream derived for its cell, so the schedule
/// never affects the output. A failing cell is logged and omitted from the
/// averages rather than aborting the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let plan = SeedPlan::new(config.master_seed);

    let mut novel_rng = stream(plan.novel());
    let mut novel = Vec::with_capacity(config.novel_count);
    for _ in 0..config.novel_count {
        novel.push(sample_encounter(
            &train_bearings(),
            &config.geometry,
            &mut novel_rng,
        )?);
    }

    let needs_families = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::MbMapHifi | Method::MbMapMulti | Method::MbBayes));
    let cache = config.cache_dir.as_deref();
    let build_family = |fidelity: Fidelity| -> Result<DensityFamily> {
        build_density_family(
            &FamilyConfig {
                fidelity,
                weight_grid: config.weight_grid.clone(),
                action_grid: config.action_grid,
                method: config.kde_method,
                decision: config.decision,
                seed: plan.family(fidelity),
            },
            &novel,
            cache,
        )
    };
    let (lofi_family, hifi_family) = if needs_families {
        log::info!("building density families over {} encounters", novel.len());
        (Some(build_family(Fidelity::Low)?), Some(build_family(Fidelity::High)?))
    } else {
        (None, None)
    };

    let mut replicates = Vec::new();
    let mut hifi_sets = Vec::new();
    let mut lower_bounds = Vec::new();
    for (s, scenario) in config.scenarios.iter().enumerate() {
        for r in 0..config.replicates {
            let replicate = prepare_replicate(config, &plan, s as u64, scenario, r as u64)?;
            log::info!(
                "scenario {} replicate {r}: lower bound {:.4}",
                scenario.name,
                replicate.lower_bound
            );
            lower_bounds.push(ReplicateLowerBound {
                scenario: scenario.name.clone(),
                replicate: r,
                error: replicate.lower_bound,
            });
            for &count in &config.hifi_counts {
                hifi_sets.push(generate_dataset(
                    count,
                    Fidelity::High,
                    &scenario.hifi,
                    &train_bearings(),
                    &config.geometry,
                    &config.decision,
                    plan.hifi(s as u64, r as u64, count as u64),
                )?);
            }
            replicates.push(replicate);
        }
    }

    let mut jobs = Vec::new();
    for scenario in 0..config.scenarios.len() {
        for replicate in 0..config.replicates {
            for count_index in 0..config.hifi_counts.len() {
                for method in &config.methods {
                    jobs.push(CellJob {
                        scenario,
                        replicate,
                        count_index,
                        method: *method,
                    });
                }
            }
        }
    }

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel();
    let mut efficiencies: BTreeMap<(usize, u64, usize), Vec<(usize, f64)>> = BTreeMap::new();
    std::thread::scope(|scope| {
        let (next, jobs, replicates, hifi_sets) = (&next, &jobs, &replicates, &hifi_sets);
        let (hifi_family, lofi_family) = (hifi_family.as_ref(), lofi_family.as_ref());
        for _ in 0..workers {
            let sender = sender.clone();
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(index) else { break };
                let row = job.scenario * config.replicates + job.replicate;
                let replicate = &replicates[row];
                let count = config.hifi_counts[job.count_index];
                let outcome = predict_cell(
                    config,
                    &config.scenarios[job.scenario],
                    job.method,
                    &hifi_sets[row * config.hifi_counts.len() + job.count_index],
                    replicate,
                    hifi_family,
                    lofi_family,
                    plan.predict(
                        job.scenario as u64,
                        job.replicate as u64,
                        count as u64,
                        job.method,
                    ),
                )
                .and_then(|p| test_error(&p, &replicate.truth))
                .map(|error| predictive_efficiency(replicate.lower_bound, error).value());
                if sender.send((index, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(sender);
        for (index, outcome) in receiver {
            let job = &jobs[index];
            match outcome {
                Ok(eff) => efficiencies
                    .entry((job.scenario, job.method.index(), config.hifi_counts[job.count_index]))
                    .or_default()
                    .push((job.replicate, eff)),
                Err(e) => log::warn!(
                    "scenario {} replicate {} samples {} method {}: {e}",
                    config.scenarios[job.scenario].name,
                    job.replicate,
                    config.hifi_counts[job.count_index],
                    job.method.tag()
                ),
            }
        }
    });

    let mut cells = Vec::new();
    for ((s, method_index, samples), mut keyed) in efficiencies {
        keyed.sort_by_key(|(replicate, _)| *replicate);
        let values: Vec<f64> = keyed.into_iter().map(|(_, v)| v).collect();
        let method = Method::all()
            .into_iter()
            .find(|m| m.index() == method_index)
            .expect("efficiency keys come from valid methods");
        let (score, stderr) = summarize(&values)?;
        cells.push(CellSummary {
            scenario: config.scenarios[s].name.clone(),
            method,
            samples,
            efficiencies: values,
            score,
            stderr,
        });
    }
    write_outputs(config, &cells)?;
    Ok(ExperimentSummary {
        cells,
        lower_bounds,
        output_dir: config.output_dir.clone(),
    })
}

fn write_outputs(config: &ExperimentConfig, cells: &[CellSummary]) -> Result<()> {
    let mut results = String::from("scenario,method,samples,score,stderr\n");
    for cell in cells {
        writeln!(
            results,
            "{},{},{},{:.6},{:.6}",
            cell.scenario,
            cell.method.tag(),
            cell.samples,
            cell.score,
            cell.stderr
        )
        .expect("writing to a string cannot fail");
    }
    std::fs::write(config.output_dir.join("results.csv"), results)?;

    let single_scenario = config.scenarios.len() == 1;
    for scenario in &config.scenarios {
        for method in &config.methods {
            let rows: Vec<&CellSummary> = cells
                .iter()
                .filter(|c| c.scenario == scenario.name && c.method == *method)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let mut text = String::from("samples,score,stderr\n");
            for cell in rows {
                writeln!(text, "{},{:.6},{:.6}", cell.samples, cell.score, cell.stderr)
                    .expect("writing to a string cannot fail");
            }
            let name = if single_scenario {
                format!("{}.csv", method.tag())
            } else {
                format!("{}-{}.csv", scenario.name, method.tag())
            };
            std::fs::write(config.output_dir.join(name), text)?;
        }
    }
    Ok(())
}

/// Estimate and write one weight combination's action density as a CSV of
/// `a1_deg,a2_deg,density` rows, with actions converted to degrees. The
/// density is built exactly like one combination of an experiment's family,
/// so rendering the true weights shows what the decision model produces.
#[allow(clippy::too_many_arguments)]
pub fn render_density(
    fidelity: Fidelity,
    weights: &UtilityWeights,
    novel_count: usize,
    geometry: &GeometryConfig,
    decision: &DecisionConfig,
    action_grid: &ActionGrid,
    kde_method: &KdeMethod,
    master_seed: u64,
    path: &Path,
) -> Result<()> {
    if novel_count == 0 {
        return Err(Error::InvalidParameter {
            what: "novel count",
            details: "must be at least 1".into(),
        });
    }
    let plan = SeedPlan::new(master_seed);
    let mut rng = stream(plan.novel());
    let mut novel = Vec::with_capacity(novel_count);
    for _ in 0..novel_count {
        novel.push(sample_encounter(&train_bearings(), geometry, &mut rng)?);
    }
    let family = build_density_family(
        &FamilyConfig {
            fidelity,
            weight_grid: WeightGrid::new(vec![weights.w1], vec![weights.w2])?,
            action_grid: *action_grid,
            method: *kde_method,
            decision: *decision,
            seed: plan.family(fidelity),
        },
        &novel,
        None,
    )?;
    let density = family.density(0);
    let nodes = density.grid().nodes();
    let mut text = String::from("a1_deg,a2_deg,density\n");
    for (i, a1) in nodes.iter().enumerate() {
        for (j, a2) in nodes.iter().enumerate() {
            writeln!(
                text,
                "{},{},{:e}",
                a1.to_degrees(),
                a2.to_degrees(),
                density.value(i, j)
            )
            .expect("writing to a string cannot fail");
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
