//! Point-mass aircraft kinematics in the horizontal plane.
//!
//! A state is position plus velocity in feet and feet per second. The only
//! maneuver is a single heading-change angle in radians, applied
//! instantaneously at the start of the action interval; speed is preserved
//! and the aircraft then flies straight for the interval duration.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AircraftState {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl AircraftState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        AircraftState { px, py, vx, vy }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Heading angle in (-pi, pi], measured counterclockwise from the +x axis.
    pub fn heading(&self) -> Result<f64> {
        if self.vx == 0.0 && self.vy == 0.0 {
            return Err(Error::ZeroVelocity);
        }
        Ok(self.vy.atan2(self.vx))
    }

    pub fn validate(&self) -> Result<()> {
        for (what, value) in [
            ("px", self.px),
            ("py", self.py),
            ("vx", self.vx),
            ("vy", self.vy),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { what, value });
            }
        }
        Ok(())
    }
}

/// Rotate the velocity by `heading_change` (counterclockwise, radians), then
/// advance the position along the new velocity for `duration` seconds.
pub fn propagate(state: &AircraftState, heading_change: f64, duration: f64) -> Result<AircraftState> {
    state.validate()?;
    if !heading_change.is_finite() {
        return Err(Error::NonFinite {
            what: "heading change",
            value: heading_change,
        });
    }
    if !duration.is_finite() || duration < 0.0 {
        return Err(Error::InvalidParameter {
            what: "duration",
            details: format!("must be finite and non-negative, got {duration}"),
        });
    }
    let (sin, cos) = heading_change.sin_cos();
    let vx = state.vx * cos - state.vy * sin;
    let vy = state.vx * sin + state.vy * cos;
    Ok(AircraftState {
        px: state.px + duration * vx,
        py: state.py + duration * vy,
        vx,
        vy,
    })
}

/// Euclidean distance between the two positions, in feet.
pub fn distance(a: &AircraftState, b: &AircraftState) -> f64 {
    (a.px - b.px).hypot(a.py - b.py)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quarter_turn_left_from_northbound() {
        let s = AircraftState::new(0.0, -3000.0, 0.0, 500.0);
        let f = propagate(&s, std::f64::consts::FRAC_PI_2, 5.0).unwrap();
        assert_relative_eq!(f.vx, -500.0, max_relative = 1e-12);
        assert_relative_eq!(f.vy, 0.0, epsilon = 1e-9);
        assert_relative_eq!(f.px, -2500.0, max_relative = 1e-12);
        assert_relative_eq!(f.py, -3000.0, max_relative = 1e-12);
    }

    #[test]
    fn half_turn_reverses_course() {
        let s = AircraftState::new(0.0, -3000.0, 0.0, 500.0);
        let f = propagate(&s, std::f64::consts::PI, 5.0).unwrap();
        assert_relative_eq!(f.vy, -500.0, max_relative = 1e-12);
        assert_relative_eq!(f.py, -5500.0, max_relative = 1e-12);
        assert_relative_eq!(f.px, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_action_is_linear_motion() {
        let s = AircraftState::new(100.0, 200.0, 50.0, -10.0);
        let f = propagate(&s, 0.0, 5.0).unwrap();
        assert_eq!(f, AircraftState::new(350.0, 150.0, 50.0, -10.0));
    }

    #[test]
    fn zero_duration_only_rotates() {
        let s = AircraftState::new(1.0, 2.0, 3.0, 4.0);
        let f = propagate(&s, 0.7, 0.0).unwrap();
        assert_eq!((f.px, f.py), (1.0, 2.0));
        assert_relative_eq!(f.speed(), s.speed(), max_relative = 1e-12);
    }

    #[test]
    fn heading_of_cardinal_velocities() {
        let north = AircraftState::new(0.0, 0.0, 0.0, 500.0);
        let east = AircraftState::new(0.0, 0.0, 500.0, 0.0);
        let west = AircraftState::new(0.0, 0.0, -500.0, 0.0);
        assert_relative_eq!(north.heading().unwrap(), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(east.heading().unwrap(), 0.0);
        assert_relative_eq!(west.heading().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn heading_undefined_at_rest() {
        let s = AircraftState::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(s.heading(), Err(Error::ZeroVelocity)));
    }

    #[test]
    fn distance_is_planar_euclidean() {
        let a = AircraftState::new(0.0, 0.0, 1.0, 0.0);
        let b = AircraftState::new(3.0, 4.0, -1.0, 0.0);
        assert_eq!(distance(&a, &b), 5.0);
        assert_eq!(distance(&a, &a), 0.0);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let s = AircraftState::new(f64::NAN, 0.0, 1.0, 0.0);
        assert!(propagate(&s, 0.0, 1.0).is_err());
        let ok = AircraftState::new(0.0, 0.0, 1.0, 0.0);
        assert!(propagate(&ok, f64::INFINITY, 1.0).is_err());
        assert!(propagate(&ok, 0.0, -1.0).is_err());
        assert!(propagate(&ok, 0.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn speed_is_preserved(
            px in -1e5f64..1e5, py in -1e5f64..1e5,
            vx in -1e3f64..1e3, vy in -1e3f64..1e3,
            angle in -std::f64::consts::PI..std::f64::consts::PI,
            duration in 0.0f64..60.0,
        ) {
            let s = AircraftState::new(px, py, vx, vy);
            let f = propagate(&s, angle, duration).unwrap();
            prop_assert!((f.speed() - s.speed()).abs() <= 1e-9 * s.speed().max(1.0));
        }

        #[test]
        fn composed_turns_preserve_speed_like_a_single_turn(
            vx in -1e3f64..1e3, vy in -1e3f64..1e3,
            a1 in -1.0f64..1.0, a2 in -1.0f64..1.0,
            t1 in 0.0f64..30.0, t2 in 0.0f64..30.0,
        ) {
            let s = AircraftState::new(0.0, 0.0, vx, vy);
            let two_step = propagate(&propagate(&s, a1, t1).unwrap(), a2, t2).unwrap();
            let one_step = propagate(&s, a1 + a2, t1 + t2).unwrap();
            prop_assert!((two_step.speed() - one_step.speed()).abs() <= 1e-9 * s.speed().max(1.0));
            // and the final velocity direction agrees, not just the speed
            prop_assert!((two_step.vx - one_step.vx).abs() <= 1e-9 * s.speed().max(1.0));
            prop_assert!((two_step.vy - one_step.vy).abs() <= 1e-9 * s.speed().max(1.0));
        }
    }
}
