//! Inference of pilot utility weights from recorded actions, and prediction
//! by simulating the decision model at the inferred weights.
//!
//! Given a family of simulated action densities indexed by candidate weight
//! combinations, recorded joint actions score each combination by summed
//! log-density. A point estimate takes the combination maximizing that score
//! plus a Gaussian log-prior; the Bayesian variant keeps the whole posterior
//! over the grid, optionally coupling low- and high-fidelity weights through
//! a joint Gaussian prior so plentiful cheap data sharpens the posterior
//! over the weights that matter. Predictions average fresh simulations of
//! the decision model, either at the point estimate or mixed over the
//! posterior.

use crate::density::{DensityFamily, WeightGrid};
use crate::error::{Error, Result};
use crate::perception::Fidelity;
use crate::pilot::{joint_decision, DecisionConfig, JointAction, UtilityWeights};
use crate::scenario::Encounter;
use crate::seeds::{derive, stream, tag};
use nalgebra::{Matrix4, Vector4};
use std::fmt::Write as _;
use std::path::Path;

/// Posterior probability below which a weight combination is skipped when
/// forming the posterior-mixture prediction.
pub const POSTERIOR_CUTOFF: f64 = 1e-4;

/// Independent Gaussian prior over one pilot pair's utility weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPrior {
    pub mean: UtilityWeights,
    pub sigma: f64,
}

impl WeightPrior {
    pub fn new(mean: UtilityWeights, sigma: f64) -> Result<Self> {
        mean.validate()?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter {
                what: "prior sigma",
                details: format!("must be finite and positive, got {sigma}"),
            });
        }
        Ok(WeightPrior { mean, sigma })
    }

    /// The default prior width used throughout: standard deviation matching
    /// the diagonal of [`CrossFidelityPrior::standard`].
    pub fn standard(mean: UtilityWeights) -> Self {
        WeightPrior {
            mean,
            sigma: 0.0017f64.sqrt(),
        }
    }

    /// Log-density at the given weights, up to an additive constant.
    pub fn log_density(&self, w: &UtilityWeights) -> f64 {
        let z1 = (w.w1 - self.mean.w1) / self.sigma;
        let z2 = (w.w2 - self.mean.w2) / self.sigma;
        -0.5 * (z1 * z1 + z2 * z2)
    }
}

/// Joint Gaussian prior over low- and high-fidelity weight pairs, ordered
/// `(w1 low, w2 low, w1 high, w2 high)`. The off-diagonal blocks couple each
/// pilot's weight across fidelities, which is what lets low-fidelity
/// evidence inform the high-fidelity posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFidelityPrior {
    mean: Vector4<f64>,
    precision: Matrix4<f64>,
}

impl CrossFidelityPrior {
    pub fn new(mean: [f64; 4], covariance: Matrix4<f64>) -> Result<Self> {
        for v in mean {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "prior mean",
                    value: v,
                });
            }
        }
        let chol = covariance
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(CrossFidelityPrior {
            mean: Vector4::from(mean),
            precision: chol.inverse(),
        })
    }

    /// The standard coupling: variance 0.0017 on every weight and covariance
    /// 0.0013 between the two fidelities of the same pilot's weight.
    pub fn standard(lofi_mean: UtilityWeights, hifi_mean: UtilityWeights) -> Self {
        let (v, c) = (0.0017, 0.0013);
        let covariance = Matrix4::new(
            v, 0.0, c, 0.0, //
            0.0, v, 0.0, c, //
            c, 0.0, v, 0.0, //
            0.0, c, 0.0, v,
        );
        Self::new(
            [lofi_mean.w1, lofi_mean.w2, hifi_mean.w1, hifi_mean.w2],
            covariance,
        )
        .expect("the standard covariance is positive definite")
    }

    /// A prior with the same marginals but no coupling between fidelities.
    pub fn uncoupled(lofi_mean: UtilityWeights, hifi_mean: UtilityWeights) -> Self {
        let covariance = Matrix4::from_diagonal_element(0.0017);
        Self::new(
            [lofi_mean.w1, lofi_mean.w2, hifi_mean.w1, hifi_mean.w2],
            covariance,
        )
        .expect("a diagonal covariance is positive definite")
    }

    /// Joint log-density at a (low, high) weight pair, up to an additive
    /// constant.
    pub fn log_density(&self, lofi: &UtilityWeights, hifi: &UtilityWeights) -> f64 {
        let x = Vector4::new(lofi.w1, lofi.w2, hifi.w1, hifi.w2) - self.mean;
        -0.5 * (self.precision * x).dot(&x)
    }
}

/// Result of a maximum a posteriori search over a weight grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEstimate {
    pub weights: UtilityWeights,
    pub combo: usize,
    pub log_score: f64,
    /// Recorded actions that fell outside the density grid and were
    /// evaluated at its nearest edge node.
    pub clamped: usize,
}

fn argmax_combo(family: &DensityFamily, scores: &[f64], clamped: usize) -> MapEstimate {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = j;
        }
    }
    MapEstimate {
        weights: family.combos[best],
        combo: best,
        log_score: scores[best],
        clamped,
    }
}

/// Pick the weight combination maximizing prior log-density plus summed
/// log-density of the recorded actions. Ties keep the lowest index.
pub fn map_estimate(
    family: &DensityFamily,
    actions: &[JointAction],
    prior: &WeightPrior,
) -> Result<MapEstimate> {
    if actions.is_empty() {
        return Err(Error::EmptyInput {
            what: "recorded actions",
        });
    }
    let mut clamped = 0;
    let scores: Vec<f64> = family
        .combos
        .iter()
        .zip(&family.densities)
        .map(|(w, d)| {
            let ll = d.log_likelihood(actions);
            clamped += ll.clamped;
            prior.log_density(w) + ll.value
        })
        .collect();
    Ok(argmax_combo(family, &scores, clamped))
}

fn check_grids(hifi: &DensityFamily, lofi: &DensityFamily) -> Result<()> {
    if hifi.weight_grid != lofi.weight_grid {
        return Err(Error::GridMismatch {
            details: format!(
                "high-fidelity grid is {}x{}, low-fidelity grid is {}x{}",
                hifi.weight_grid.w1.len(),
                hifi.weight_grid.w2.len(),
                lofi.weight_grid.w1.len(),
                lofi.weight_grid.w2.len()
            ),
        });
    }
    Ok(())
}

/// Like [`map_estimate`], but each combination is additionally scored by the
/// low-fidelity actions under the low-fidelity density family, treating the
/// weights as shared across fidelities. Both families must be built on the
/// same weight grid.
pub fn map_estimate_multifidelity(
    hifi_family: &DensityFamily,
    lofi_family: &DensityFamily,
    hifi_actions: &[JointAction],
    lofi_actions: &[JointAction],
    prior: &WeightPrior,
) -> Result<MapEstimate> {
    check_grids(hifi_family, lofi_family)?;
    if hifi_actions.is_empty() {
        return Err(Error::EmptyInput {
            what: "recorded actions",
        });
    }
    let mut clamped = 0;
    let scores: Vec<f64> = hifi_family
        .combos
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let hi = hifi_family.density(j).log_likelihood(hifi_actions);
            let lo = lofi_family.density(j).log_likelihood(lofi_actions);
            clamped += hi.clamped + lo.clamped;
            prior.log_density(w) + hi.value + lo.value
        })
        .collect();
    Ok(argmax_combo(hifi_family, &scores, clamped))
}

/// Discrete posterior over the weight combinations of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPosterior {
    grid: WeightGrid,
    combos: Vec<UtilityWeights>,
    probabilities: Vec<f64>,
}

impl WeightPosterior {
    /// Wrap raw probabilities over the grid's combinations, renormalizing
    /// them to sum to one exactly.
    pub fn from_probabilities(grid: WeightGrid, probabilities: Vec<f64>) -> Result<Self> {
        let combos = grid.combos();
        if probabilities.len() != combos.len() {
            return Err(Error::LengthMismatch {
                what: "posterior probabilities",
                expected: combos.len(),
                actual: probabilities.len(),
            });
        }
        let mut total = 0.0;
        for p in &probabilities {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::InvalidParameter {
                    what: "posterior probability",
                    details: format!("must be finite and non-negative, got {p}"),
                });
            }
            total += p;
        }
        if total <= 0.0 {
            return Err(Error::InvalidParameter {
                what: "posterior probabilities",
                details: "all mass is zero".into(),
            });
        }
        let probabilities = probabilities.into_iter().map(|p| p / total).collect();
        Ok(WeightPosterior {
            grid,
            combos,
            probabilities,
        })
    }

    /// Wrap probabilities that already sum to one, keeping every entry
    /// bit-exact, so a posterior written to disk and read back drives the
    /// same predictions. Rejects mass straying from one by more than 1e-6.
    pub fn from_normalized(grid: WeightGrid, probabilities: Vec<f64>) -> Result<Self> {
        let combos = grid.combos();
        if probabilities.len() != combos.len() {
            return Err(Error::LengthMismatch {
                what: "posterior probabilities",
                expected: combos.len(),
                actual: probabilities.len(),
            });
        }
        let mut total = 0.0;
        for p in &probabilities {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::InvalidParameter {
                    what: "posterior probability",
                    details: format!("must be finite and non-negative, got {p}"),
                });
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter {
                what: "posterior probabilities",
                details: format!("must already sum to one, got {total}"),
            });
        }
        Ok(WeightPosterior {
            grid,
            combos,
            probabilities,
        })
    }

    pub fn grid(&self) -> &WeightGrid {
        &self.grid
    }

    pub fn combos(&self) -> &[UtilityWeights] {
        &self.combos
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Index of the most probable combination, lowest index on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (j, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = j;
            }
        }
        best
    }

    /// Write the posterior as `w1,w2,probability` rows in combination order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::from("w1,w2,probability\n");
        for (w, p) in self.combos.iter().zip(&self.probabilities) {
            writeln!(text, "{},{},{:e}", w.w1, w.w2, p).expect("writing to a string cannot fail");
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "w1,w2,probability")) => {}
            Some((_, other)) => {
                return Err(parse_err(1, format!("expected posterior header, found '{other}'")))
            }
            None => return Err(parse_err(1, "empty file".into())),
        }
        let mut w1_axis: Vec<f64> = Vec::new();
        let mut w2_axis: Vec<f64> = Vec::new();
        let mut rows = Vec::new();
        for (index, line) in lines {
            let line_no = index + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(line_no, format!("expected 3 fields, found {}", fields.len())));
            }
            let mut values = [0.0; 3];
            for (k, (raw, name)) in fields.iter().zip(["w1", "w2", "probability"]).enumerate() {
                values[k] = raw
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("{name}: invalid float '{raw}'")))?;
            }
            if !w1_axis.contains(&values[0]) {
                w1_axis.push(values[0]);
            }
            if !w2_axis.contains(&values[1]) {
                w2_axis.push(values[1]);
            }
            rows.push(values[2]);
        }
        let grid = WeightGrid::new(w1_axis, w2_axis)?;
        Self::from_probabilities(grid, rows)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior over high-fidelity weight combinations given recorded actions
/// at both fidelities: the low-fidelity weights are marginalized out under
/// the joint prior, entirely in log space. Both families must share one
/// weight grid. Either action list may be empty, in which case its
/// likelihood term drops out and the prior does the work.
pub fn bayes_posterior(
    hifi_family: &DensityFamily,
    lofi_family: &DensityFamily,
    hifi_actions: &[JointAction],
    lofi_actions: &[JointAction],
    prior: &CrossFidelityPrior,
) -> Result<WeightPosterior> {
    check_grids(hifi_family, lofi_family)?;
    let combos = &hifi_family.combos;
    let hifi_ll: Vec<f64> = combos
        .iter()
        .enumerate()
        .map(|(j, _)| hifi_family.density(j).log_likelihood(hifi_actions).value)
        .collect();
    let lofi_ll: Vec<f64> = combos
        .iter()
        .enumerate()
        .map(|(k, _)| lofi_family.density(k).log_likelihood(lofi_actions).value)
        .collect();
    let mut log_post = Vec::with_capacity(combos.len());
    let mut inner = vec![0.0; combos.len()];
    for (j, hifi_w) in combos.iter().enumerate() {
        for (k, lofi_w) in combos.iter().enumerate() {
            inner[k] = lofi_ll[k] + prior.log_density(lofi_w, hifi_w);
        }
        log_post.push(hifi_ll[j] + log_sum_exp(&inner));
    }
    let norm = log_sum_exp(&log_post);
    let probabilities: Vec<f64> = log_post.into_iter().map(|lp| (lp - norm).exp()).collect();
    WeightPosterior::from_probabilities(hifi_family.weight_grid.clone(), probabilities)
}

/// Predict the joint action for each encounter by simulating the decision
/// model `samples_per_encounter` times at the given weights and averaging.
/// Each (encounter, repetition) pair draws from its own derived stream.
pub fn predict_with_weights(
    weights: &UtilityWeights,
    fidelity: Fidelity,
    encounters: &[Encounter],
    decision: &DecisionConfig,
    samples_per_encounter: usize,
    seed: u64,
) -> Result<Vec<JointAction>> {
    if samples_per_encounter == 0 {
        return Err(Error::InvalidParameter {
            what: "samples per encounter",
            details: "must be at least 1".into(),
        });
    }
    let mut predictions = Vec::with_capacity(encounters.len());
    for (e, encounter) in encounters.iter().enumerate() {
        let mut a1 = 0.0;
        let mut a2 = 0.0;
        for s in 0..samples_per_encounter {
            let mut rng = stream(derive(seed, &[tag::ENCOUNTER, e as u64, tag::MIX, s as u64]));
            let action = joint_decision(encounter, weights, fidelity, decision, &mut rng)?;
            a1 += action.a1;
            a2 += action.a2;
        }
        let n = samples_per_encounter as f64;
        predictions.push(JointAction::new(a1 / n, a2 / n));
    }
    Ok(predictions)
}

/// The derived seed used for one weight combination's simulations inside
/// [`predict_with_posterior`].
pub fn combo_prediction_seed(seed: u64, combo: usize) -> u64 {
    derive(seed, &[tag::COMBO, combo as u64])
}

/// Predict by mixing per-combination simulated predictions under the
/// posterior. Combinations below [`POSTERIOR_CUTOFF`] are skipped and the
/// remaining mass is renormalized.
pub fn predict_with_posterior(
    posterior: &WeightPosterior,
    fidelity: Fidelity,
    encounters: &[Encounter],
    decision: &DecisionConfig,
    samples_per_encounter: usize,
    seed: u64,
) -> Result<Vec<JointAction>> {
    let total: f64 = posterior
        .probabilities()
        .iter()
        .filter(|p| **p >= POSTERIOR_CUTOFF)
        .sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter {
            what: "posterior mixture",
            details: format!("no combination reaches the cutoff {POSTERIOR_CUTOFF}"),
        });
    }
    let mut mixed = vec![JointAction::new(0.0, 0.0); encounters.len()];
    for (j, (w, p)) in posterior
        .combos()
        .iter()
        .zip(posterior.probabilities())
        .enumerate()
    {
        if *p < POSTERIOR_CUTOFF {
            continue;
        }
        let share = p / total;
        let predictions = predict_with_weights(
            w,
            fidelity,
            encounters,
            decision,
            samples_per_encounter,
            combo_prediction_seed(seed, j),
        )?;
        for (m, pred) in mixed.iter_mut().zip(predictions) {
            m.a1 += share * pred.a1;
            m.a2 += share * pred.a2;
        }
    }
    Ok(mixed)
}
