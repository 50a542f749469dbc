//! Noisy observation channels and their fusion.
//!
//! A pilot never sees the intruder's true state. Each available channel
//! reports the state plus independent zero-mean Gaussian noise per axis:
//!
//! * out-the-window view: sigma = 900 ft on position, 318 ft/s on velocity
//! * instrument panel:    sigma = 600 ft on position, 318 ft/s on velocity
//!
//! At low fidelity only the out-the-window view exists. At high fidelity both
//! channels are available and are fused as a product of Gaussians, i.e. the
//! fused per-axis variance is the reciprocal of the summed precisions.

use crate::error::{Error, Result};
use crate::kinematics::AircraftState;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    Low,
    High,
}

impl Fidelity {
    pub fn tag(&self) -> &'static str {
        match self {
            Fidelity::Low => "low",
            Fidelity::High => "high",
        }
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Fidelity::Low),
            "high" => Ok(Fidelity::High),
            other => Err(Error::InvalidParameter {
                what: "fidelity",
                details: format!("expected 'low' or 'high', got '{other}'"),
            }),
        }
    }
}

/// Per-axis noise magnitudes of one observation source (or of a fusion of
/// several). Position axes share one sigma, velocity axes another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    pub position_sigma: f64,
    pub velocity_sigma: f64,
}

impl ObservationModel {
    pub fn new(position_sigma: f64, velocity_sigma: f64) -> Result<Self> {
        for (what, value) in [
            ("position sigma", position_sigma),
            ("velocity sigma", velocity_sigma),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidParameter {
                    what,
                    details: format!("must be finite and non-negative, got {value}"),
                });
            }
        }
        Ok(ObservationModel {
            position_sigma,
            velocity_sigma,
        })
    }

    pub fn out_the_window() -> Self {
        ObservationModel {
            position_sigma: 900.0,
            velocity_sigma: 318.0,
        }
    }

    pub fn instrument() -> Self {
        ObservationModel {
            position_sigma: 600.0,
            velocity_sigma: 318.0,
        }
    }

    /// Draw one noisy observation of `truth`.
    pub fn sample<R: Rng + ?Sized>(&self, truth: &AircraftState, rng: &mut R) -> AircraftState {
        let mut noise = |sigma: f64| sigma * rng.sample::<f64, _>(StandardNormal);
        AircraftState {
            px: truth.px + noise(self.position_sigma),
            py: truth.py + noise(self.position_sigma),
            vx: truth.vx + noise(self.velocity_sigma),
            vy: truth.vy + noise(self.velocity_sigma),
        }
    }
}

/// Product-of-Gaussians fusion: per-axis precisions add, so the fused sigma
/// is never larger than the sharpest input's.
pub fn fuse(models: &[ObservationModel]) -> Result<ObservationModel> {
    if models.is_empty() {
        return Err(Error::EmptyInput {
            what: "observation model list",
        });
    }
    let fused_sigma = |sigmas: &mut dyn Iterator<Item = f64>| -> Result<f64> {
        let mut precision = 0.0;
        for s in sigmas {
            if s <= 0.0 {
                return Err(Error::InvalidParameter {
                    what: "observation sigma",
                    details: "fusion requires strictly positive sigmas".into(),
                });
            }
            precision += 1.0 / (s * s);
        }
        Ok(precision.sqrt().recip())
    };
    Ok(ObservationModel {
        position_sigma: fused_sigma(&mut models.iter().map(|m| m.position_sigma))?,
        velocity_sigma: fused_sigma(&mut models.iter().map(|m| m.velocity_sigma))?,
    })
}

/// The effective observation model a pilot works with at the given fidelity.
/// The low-fidelity path never touches the instrument model.
pub fn fused_model(fidelity: Fidelity) -> ObservationModel {
    match fidelity {
        Fidelity::Low => ObservationModel::out_the_window(),
        Fidelity::High => fuse(&[
            ObservationModel::out_the_window(),
            ObservationModel::instrument(),
        ])
        .expect("standard channel sigmas are positive"),
    }
}

/// Draw `count` independent belief samples of the intruder's state from the
/// fused observation model for `fidelity`.
pub fn sample_beliefs<R: Rng + ?Sized>(
    truth: &AircraftState,
    fidelity: Fidelity,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AircraftState>> {
    sample_beliefs_with(&fused_model(fidelity), truth, count, rng)
}

/// As [`sample_beliefs`], but with an explicit observation model.
pub fn sample_beliefs_with<R: Rng + ?Sized>(
    model: &ObservationModel,
    truth: &AircraftState,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AircraftState>> {
    truth.validate()?;
    if count == 0 {
        return Err(Error::InvalidParameter {
            what: "belief count",
            details: "must be at least 1".into(),
        });
    }
    Ok((0..count).map(|_| model.sample(truth, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn high_fidelity_fusion_matches_closed_form() {
        let m = fused_model(Fidelity::High);
        let expected_pos = (1.0 / (900.0f64.powi(2)) + 1.0 / (600.0f64.powi(2)))
            .sqrt()
            .recip();
        assert_relative_eq!(m.position_sigma, expected_pos, max_relative = 1e-12);
        assert_relative_eq!(m.position_sigma, 499.2302, max_relative = 1e-6);
        assert_relative_eq!(
            m.velocity_sigma,
            318.0 / 2f64.sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(m.velocity_sigma, 224.8600, max_relative = 1e-6);
    }

    #[test]
    fn low_fidelity_is_the_window_alone() {
        assert_eq!(fused_model(Fidelity::Low), ObservationModel::out_the_window());
    }

    #[test]
    fn zero_sigma_reproduces_the_truth() {
        let truth = AircraftState::new(10.0, -20.0, 300.0, 4.0);
        let model = ObservationModel::new(0.0, 0.0).unwrap();
        let mut rng = stream(1);
        assert_eq!(model.sample(&truth, &mut rng), truth);
        let beliefs = sample_beliefs_with(&model, &truth, 1, &mut rng).unwrap();
        assert_eq!(beliefs, vec![truth]);
    }

    #[test]
    fn sample_noise_matches_the_model() {
        let truth = AircraftState::new(0.0, 0.0, 450.0, 0.0);
        let model = ObservationModel::out_the_window();
        let mut rng = stream(7);
        let n = 100_000;
        let draws: Vec<AircraftState> = (0..n).map(|_| model.sample(&truth, &mut rng)).collect();
        let mean_px = draws.iter().map(|d| d.px).sum::<f64>() / n as f64;
        let var_px =
            draws.iter().map(|d| (d.px - mean_px).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mean_vx = draws.iter().map(|d| d.vx).sum::<f64>() / n as f64;
        let var_vx =
            draws.iter().map(|d| (d.vx - mean_vx).powi(2)).sum::<f64>() / (n - 1) as f64;
        // sampling error of the std at n=1e5 is ~0.22%, so 2% is comfortable
        assert!((mean_px - 0.0).abs() < 10.0, "mean_px = {mean_px}");
        assert!((var_px.sqrt() - 900.0).abs() < 18.0, "std = {}", var_px.sqrt());
        assert!((mean_vx - 450.0).abs() < 4.0, "mean_vx = {mean_vx}");
        assert!((var_vx.sqrt() - 318.0).abs() < 6.4, "std = {}", var_vx.sqrt());
    }

    #[test]
    fn high_fidelity_beliefs_scatter_less_than_low() {
        let truth = AircraftState::new(0.0, 3000.0, 0.0, -450.0);
        let spread = |fidelity| {
            let mut rng = stream(11);
            let beliefs = sample_beliefs(&truth, fidelity, 4000, &mut rng).unwrap();
            beliefs
                .iter()
                .map(|b| crate::kinematics::distance(b, &truth))
                .sum::<f64>()
                / beliefs.len() as f64
        };
        assert!(spread(Fidelity::High) < spread(Fidelity::Low));
    }

    #[test]
    fn belief_mean_is_centered_on_the_truth() {
        let truth = AircraftState::new(100.0, -200.0, 50.0, 450.0);
        let mut rng = stream(3);
        let beliefs = sample_beliefs(&truth, Fidelity::High, 100_000, &mut rng).unwrap();
        let n = beliefs.len() as f64;
        let mean_py = beliefs.iter().map(|b| b.py).sum::<f64>() / n;
        let mean_vy = beliefs.iter().map(|b| b.vy).sum::<f64>() / n;
        assert!((mean_py - truth.py).abs() < 6.0);
        assert!((mean_vy - truth.vy).abs() < 3.0);
    }

    #[test]
    fn requested_count_is_honored_and_zero_rejected() {
        let truth = AircraftState::new(0.0, 0.0, 1.0, 0.0);
        let mut rng = stream(5);
        assert_eq!(
            sample_beliefs(&truth, Fidelity::Low, 50, &mut rng).unwrap().len(),
            50
        );
        assert!(sample_beliefs(&truth, Fidelity::Low, 0, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_beliefs() {
        let truth = AircraftState::new(0.0, 0.0, 450.0, 0.0);
        let a = sample_beliefs(&truth, Fidelity::High, 10, &mut stream(99)).unwrap();
        let b = sample_beliefs(&truth, Fidelity::High, 10, &mut stream(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fusing_empty_or_degenerate_lists_fails() {
        assert!(fuse(&[]).is_err());
        let degenerate = ObservationModel::new(0.0, 1.0).unwrap();
        assert!(fuse(&[degenerate]).is_err());
    }

    proptest! {
        #[test]
        fn fused_sigma_never_exceeds_the_sharpest_input(
            p1 in 1.0f64..2000.0, v1 in 1.0f64..2000.0,
            p2 in 1.0f64..2000.0, v2 in 1.0f64..2000.0,
        ) {
            let a = ObservationModel::new(p1, v1).unwrap();
            let b = ObservationModel::new(p2, v2).unwrap();
            let f = fuse(&[a, b]).unwrap();
            prop_assert!(f.position_sigma <= p1.min(p2) + 1e-12);
            prop_assert!(f.velocity_sigma <= v1.min(v2) + 1e-12);
        }
    }
}
