//! Locally weighted prediction of joint actions from recorded encounters.
//!
//! The predictor is nonparametric: given a query encounter it weighs every
//! training record by a softmax of negative standardized Euclidean distance
//! in feature space and averages the recorded joint actions under those
//! weights. The multi-fidelity variant first fits a predictor to plentiful
//! low-fidelity data, then appends that predictor's output to the feature
//! vector of the scarce high-fidelity records, letting the high-fidelity
//! regression match on "what the cheap model expects" as well as on raw
//! geometry.

use crate::error::{Error, Result};
use crate::pilot::JointAction;
use crate::scenario::{Dataset, Encounter};

/// Flatten an encounter into the feature vector used by the predictors:
/// both aircraft states in position-velocity order.
pub fn state_features(encounter: &Encounter) -> Vec<f64> {
    let (s1, s2) = (&encounter.s1, &encounter.s2);
    vec![s1.px, s1.py, s1.vx, s1.vy, s2.px, s2.py, s2.vx, s2.vy]
}

#[derive(Debug, Clone)]
pub struct LwPredictor {
    features: Vec<Vec<f64>>,
    targets: Vec<JointAction>,
    scales: Vec<f64>,
}

impl LwPredictor {
    /// Fit on raw feature rows and their recorded joint actions. Features
    /// are standardized per dimension by the sample standard deviation;
    /// dimensions without spread (including the single-row case) fall back
    /// to unit scale so they contribute plain differences.
    pub fn fit(features: Vec<Vec<f64>>, targets: Vec<JointAction>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput {
                what: "training features",
            });
        }
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch {
                what: "training targets",
                expected: features.len(),
                actual: targets.len(),
            });
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput {
                what: "feature dimensions",
            });
        }
        for row in &features {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "training feature",
                        value: *v,
                    });
                }
            }
        }
        let n = features.len() as f64;
        let mut scales = vec![1.0; dim];
        if features.len() > 1 {
            for (k, scale) in scales.iter_mut().enumerate() {
                let mean = features.iter().map(|row| row[k]).sum::<f64>() / n;
                let var = features
                    .iter()
                    .map(|row| (row[k] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                let sd = var.sqrt();
                // spread at rounding-noise level would amplify ulp-sized
                // differences into order-one distances, so such a dimension
                // keeps unit scale like a truly constant one
                if sd.is_finite() && sd > 1e-12 * mean.abs().max(1.0) {
                    *scale = sd;
                }
            }
        }
        Ok(LwPredictor {
            features,
            targets,
            scales,
        })
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Softmax weights over the training rows for one query. The exponent is
    /// shifted by the minimum distance, so the nearest row always gets the
    /// largest weight and the exponentials stay in range.
    pub fn weights(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        for v in query {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "query feature",
                    value: *v,
                });
            }
        }
        let distances: Vec<f64> = self
            .features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(query)
                    .zip(&self.scales)
                    .map(|((x, q), s)| ((q - x) / s).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = distances.iter().map(|d| (-(d - min)).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|z| z / total).collect())
    }

    /// Weighted average of the training actions under [`Self::weights`].
    pub fn predict(&self, query: &[f64]) -> Result<JointAction> {
        let weights = self.weights(query)?;
        let mut a1 = 0.0;
        let mut a2 = 0.0;
        for (w, t) in weights.iter().zip(&self.targets) {
            a1 += w * t.a1;
            a2 += w * t.a2;
        }
        Ok(JointAction::new(a1, a2))
    }
}

/// Predict the joint action for each test encounter from high-fidelity
/// records alone.
pub fn predict_hifi_only(train: &Dataset, test: &[Encounter]) -> Result<Vec<JointAction>> {
    let predictor = LwPredictor::fit(
        train.records.iter().map(|r| state_features(&r.encounter)).collect(),
        train.actions(),
    )?;
    test.iter()
        .map(|e| predictor.predict(&state_features(e)))
        .collect()
}

/// Predict the joint action for each test encounter from high-fidelity
/// records whose features are augmented with a low-fidelity predictor's
/// output at the same encounter.
pub fn predict_multifidelity(
    hifi: &Dataset,
    lofi: &Dataset,
    test: &[Encounter],
) -> Result<Vec<JointAction>> {
    let low = LwPredictor::fit(
        lofi.records.iter().map(|r| state_features(&r.encounter)).collect(),
        lofi.actions(),
    )?;
    let augment = |encounter: &Encounter| -> Result<Vec<f64>> {
        let mut row = state_features(encounter);
        let hint = low.predict(&row)?;
        row.push(hint.a1);
        row.push(hint.a2);
        Ok(row)
    };
    let high = LwPredictor::fit(
        hifi.records
            .iter()
            .map(|r| augment(&r.encounter))
            .collect::<Result<Vec<_>>>()?,
        hifi.actions(),
    )?;
    test.iter().map(|e| high.predict(&augment(e)?)).collect()
}
