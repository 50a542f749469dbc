//! Scoring predictions of joint actions against ground truth.
//!
//! Every predictor is scored by the same total error: the sum over test
//! encounters of the Euclidean distance between predicted and true joint
//! action. Predictive efficiency relates that error to the error floor of
//! the generative model itself, measured by predicting with the true
//! weights, so a value near one means the predictor is about as good as
//! knowing the model.

use crate::error::{Error, Result};
use crate::pilot::JointAction;

/// The prediction methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Locally weighted regression on high-fidelity records.
    MfHifi,
    /// Locally weighted regression with low-fidelity hint features.
    MfMulti,
    /// Point-estimate weights from high-fidelity records, then simulation.
    MbMapHifi,
    /// Point-estimate weights from records at both fidelities.
    MbMapMulti,
    /// Posterior mixture over weights from records at both fidelities.
    MbBayes,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::MfHifi,
            Method::MfMulti,
            Method::MbMapHifi,
            Method::MbMapMulti,
            Method::MbBayes,
        ]
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::MfHifi => "mf-hifi",
            Method::MfMulti => "mf-multi",
            Method::MbMapHifi => "mb-map-hifi",
            Method::MbMapMulti => "mb-map-multi",
            Method::MbBayes => "mb-bayes",
        }
    }

    /// Stable index used when deriving per-method random streams.
    pub fn index(&self) -> u64 {
        match self {
            Method::MfHifi => 0,
            Method::MfMulti => 1,
            Method::MbMapHifi => 2,
            Method::MbMapMulti => 3,
            Method::MbBayes => 4,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::all()
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter {
                what: "method",
                details: format!(
                    "unknown method '{s}', expected one of {}",
                    Method::all()
                        .iter()
                        .map(|m| m.tag())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            })
    }
}

/// Sum over encounters of the Euclidean distance between predicted and true
/// joint actions.
pub fn test_error(predictions: &[JointAction], truth: &[JointAction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput { what: "predictions" });
    }
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "true actions",
            expected: predictions.len(),
            actual: truth.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p.a1 - t.a1).hypot(p.a2 - t.a2))
        .sum())
}

/// Below this total error a predictor is treated as exact rather than given
/// an unstable error ratio.
pub const EXACT_MATCH_THRESHOLD: f64 = 1e-9;

/// Ratio of the reference error floor to a predictor's error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Efficiency {
    Ratio(f64),
    /// The predictor's error was below [`EXACT_MATCH_THRESHOLD`].
    Exact,
}

impl Efficiency {
    pub fn value(&self) -> f64 {
        match self {
            Efficiency::Ratio(r) => *r,
            Efficiency::Exact => 1.0,
        }
    }
}

pub fn predictive_efficiency(lower_bound: f64, error: f64) -> Efficiency {
    if error < EXACT_MATCH_THRESHOLD {
        Efficiency::Exact
    } else {
        Efficiency::Ratio(lower_bound / error)
    }
}

/// Mean and standard error of a set of replicate scores. A single replicate
/// has no spread estimate and reports zero.
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput { what: "scores" });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
