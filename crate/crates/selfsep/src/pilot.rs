//! Single-shot pilot decision model.
//!
//! Each pilot observes the intruder through the noisy channels of
//! [`crate::perception`], assumes the intruder will apply a uniformly random
//! heading change, and picks the candidate maneuver maximizing a utility that
//! trades final separation against turn effort:
//!
//! ```text
//! score(a) = sum over belief samples j of
//!            w * d(own_final(a), intruder_final_j) / L  -  (1 - w) * |a|
//! ```
//!
//! Distances are in feet and maneuvers in radians, so the distance term is
//! normalized by a length scale L before it meets the |a| penalty. By default
//! L is a multiple of the pair's initial separation, calibrated so that over
//! the weight range 0.80..0.98 the preferred maneuver sweeps from "hold
//! course" to "turn hard" (see [`DistanceScale`]).

use crate::error::{Error, Result};
use crate::kinematics::{distance, propagate, AircraftState};
use crate::perception::{sample_beliefs, Fidelity};
use crate::scenario::Encounter;
use rand::Rng;

/// One simultaneous decision by both pilots: heading changes in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAction {
    pub a1: f64,
    pub a2: f64,
}

impl JointAction {
    pub fn new(a1: f64, a2: f64) -> Self {
        JointAction { a1, a2 }
    }
}

/// Per-pilot separation weights, each strictly inside (0, 1). Higher weight
/// means the pilot cares more about separation and less about turn effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityWeights {
    pub w1: f64,
    pub w2: f64,
}

impl UtilityWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        let w = UtilityWeights { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, value) in [("w1", self.w1), ("w2", self.w2)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidParameter {
                    what,
                    details: format!("utility weight must lie in (0, 1), got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// The length scale L dividing the utility's distance term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceScale {
    /// L = multiple * initial separation of the two aircraft.
    SeparationMultiple(f64),
    /// Fixed L in feet, independent of the encounter.
    Fixed(f64),
}

impl DistanceScale {
    pub fn resolve(&self, own: &AircraftState, intruder: &AircraftState) -> Result<f64> {
        let scale = match *self {
            DistanceScale::SeparationMultiple(k) => k * distance(own, intruder),
            DistanceScale::Fixed(v) => v,
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter {
                what: "distance scale",
                details: format!("resolved to {scale}; must be finite and positive"),
            });
        }
        Ok(scale)
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            DistanceScale::SeparationMultiple(k) => k,
            DistanceScale::Fixed(v) => v,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter {
                what: "distance scale",
                details: format!("must be finite and positive, got {v}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionConfig {
    /// Number of candidate maneuvers sampled per decision (m).
    pub candidate_count: usize,
    /// Number of intruder belief samples per decision (m').
    pub belief_count: usize,
    /// Candidate maneuvers are uniform on [-action_bound, action_bound] rad.
    pub action_bound: f64,
    /// Seconds the chosen maneuver is flown before the game is scored.
    pub horizon: f64,
    pub distance_scale: DistanceScale,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            candidate_count: 100,
            belief_count: 50,
            action_bound: 1.0,
            horizon: 5.0,
            distance_scale: DistanceScale::SeparationMultiple(2.5),
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_count == 0 {
            return Err(Error::InvalidParameter {
                what: "candidate count",
                details: "must be at least 1".into(),
            });
        }
        if self.belief_count == 0 {
            return Err(Error::InvalidParameter {
                what: "belief count",
                details: "must be at least 1".into(),
            });
        }
        if !(self.action_bound.is_finite() && self.action_bound > 0.0) {
            return Err(Error::InvalidParameter {
                what: "action bound",
                details: format!("must be finite and positive, got {}", self.action_bound),
            });
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "horizon",
                details: format!("must be finite and non-negative, got {}", self.horizon),
            });
        }
        self.distance_scale.validate()
    }
}

/// Draw the candidate maneuvers for one decision, i.i.d. uniform on
/// [-action_bound, action_bound].
pub fn sample_candidates<R: Rng + ?Sized>(config: &DecisionConfig, rng: &mut R) -> Vec<f64> {
    (0..config.candidate_count)
        .map(|_| rng.gen_range(-config.action_bound..config.action_bound))
        .collect()
}

/// Expected final state of an aircraft that applies a uniformly random
/// heading change on [-action_bound, action_bound] and then flies straight
/// for `horizon` seconds.
///
/// Averaging the rotation over the symmetric angle interval cancels the sine
/// terms and scales the velocity by sin(b)/b (= sin(1) ~ 0.8415 at the
/// default bound of 1 rad).
pub fn expected_intruder_final(
    belief: &AircraftState,
    horizon: f64,
    action_bound: f64,
) -> Result<AircraftState> {
    belief.validate()?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidParameter {
            what: "horizon",
            details: format!("must be finite and non-negative, got {horizon}"),
        });
    }
    if !(action_bound.is_finite() && action_bound > 0.0) {
        return Err(Error::InvalidParameter {
            what: "action bound",
            details: format!("must be finite and positive, got {action_bound}"),
        });
    }
    let shrink = action_bound.sin() / action_bound;
    let vx = shrink * belief.vx;
    let vy = shrink * belief.vy;
    Ok(AircraftState {
        px: belief.px + horizon * vx,
        py: belief.py + horizon * vy,
        vx,
        vy,
    })
}

/// Utility of one candidate against one believed intruder final state.
/// `w` must lie in (0, 1) and `distance_scale` must be positive.
pub fn utility(
    w: f64,
    own_final: &AircraftState,
    intruder_final: &AircraftState,
    heading_change: f64,
    distance_scale: f64,
) -> f64 {
    w * distance(own_final, intruder_final) / distance_scale - (1.0 - w) * heading_change.abs()
}

/// Pick the candidate with the highest summed utility over the believed
/// intruder finals. Ties go to the lowest candidate index.
pub fn choose_action_from(
    own: &AircraftState,
    w: f64,
    candidates: &[f64],
    intruder_finals: &[AircraftState],
    horizon: f64,
    distance_scale: f64,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput { what: "candidate list" });
    }
    if intruder_finals.is_empty() {
        return Err(Error::EmptyInput { what: "intruder belief list" });
    }
    UtilityWeights::new(w, 0.5).map_err(|_| Error::InvalidParameter {
        what: "w",
        details: format!("utility weight must lie in (0, 1), got {w}"),
    })?;
    if !(distance_scale.is_finite() && distance_scale > 0.0) {
        return Err(Error::InvalidParameter {
            what: "distance scale",
            details: format!("must be finite and positive, got {distance_scale}"),
        });
    }
    let mut best_action = 0.0;
    let mut best_score = f64::NEG_INFINITY;
    for &a in candidates {
        let own_final = propagate(own, a, horizon)?;
        let score: f64 = intruder_finals
            .iter()
            .map(|f| utility(w, &own_final, f, a, distance_scale))
            .sum();
        if score > best_score {
            best_score = score;
            best_action = a;
        }
    }
    Ok(best_action)
}

/// One pilot's full decision: sample candidates, sample beliefs about the
/// intruder, and return the best candidate. Beliefs are drawn once and
/// reused across all candidates, so candidate comparisons share the same
/// noise realization.
pub fn choose_action<R: Rng + ?Sized>(
    own: &AircraftState,
    intruder: &AircraftState,
    w: f64,
    fidelity: Fidelity,
    config: &DecisionConfig,
    rng: &mut R,
) -> Result<f64> {
    config.validate()?;
    own.validate()?;
    let candidates = sample_candidates(config, rng);
    let beliefs = sample_beliefs(intruder, fidelity, config.belief_count, rng)?;
    let finals = beliefs
        .iter()
        .map(|b| expected_intruder_final(b, config.horizon, config.action_bound))
        .collect::<Result<Vec<_>>>()?;
    let scale = config.distance_scale.resolve(own, intruder)?;
    choose_action_from(own, w, &candidates, &finals, config.horizon, scale)
}

/// Both pilots decide simultaneously: player 1 (weight w1) observes player 2
/// and vice versa, each through their own belief draws from `rng`.
pub fn joint_decision<R: Rng + ?Sized>(
    encounter: &Encounter,
    weights: &UtilityWeights,
    fidelity: Fidelity,
    config: &DecisionConfig,
    rng: &mut R,
) -> Result<JointAction> {
    weights.validate()?;
    let a1 = choose_action(&encounter.s1, &encounter.s2, weights.w1, fidelity, config, rng)?;
    let a2 = choose_action(&encounter.s2, &encounter.s1, weights.w2, fidelity, config, rng)?;
    Ok(JointAction { a1, a2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{derive, stream, tag};
    use approx::assert_relative_eq;

    fn head_on() -> Encounter {
        Encounter::new(
            AircraftState::new(0.0, -3000.0, 0.0, 450.0),
            AircraftState::new(0.0, 3000.0, 0.0, -450.0),
        )
        .unwrap()
    }

    #[test]
    fn candidates_respect_count_and_bound() {
        let config = DecisionConfig::default();
        let mut rng = stream(2);
        let c = sample_candidates(&config, &mut rng);
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|a| a.abs() <= 1.0));
        let many: Vec<f64> = (0..100_000)
            .map(|_| rng.gen_range(-1.0f64..1.0))
            .collect();
        let mean = many.iter().sum::<f64>() / many.len() as f64;
        assert!(mean.abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn expected_final_shrinks_velocity_by_sin_over_bound() {
        let belief = AircraftState::new(0.0, 0.0, 100.0, 0.0);
        let f = expected_intruder_final(&belief, 5.0, 1.0).unwrap();
        assert_relative_eq!(f.vx, 100.0 * 1f64.sin(), max_relative = 1e-12);
        assert_relative_eq!(f.vy, 0.0);
        assert_relative_eq!(f.px, 420.7355, max_relative = 1e-6);
        assert_relative_eq!(f.py, 0.0);
    }

    // Monte-Carlo oracle for the closed form: simulate the uniformly random
    // heading change directly and average the resulting final states.
    #[test]
    fn expected_final_matches_monte_carlo() {
        let belief = AircraftState::new(0.0, 0.0, 100.0, 0.0);
        let horizon = 5.0;
        let mut rng = stream(4);
        let n = 1_000_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let a = rng.gen_range(-1.0f64..1.0);
            let f = propagate(&belief, a, horizon).unwrap();
            sx += f.px;
            sy += f.py;
        }
        let f = expected_intruder_final(&belief, horizon, 1.0).unwrap();
        assert!((f.px - sx / n as f64).abs() < 0.5, "px gap {}", f.px - sx / n as f64);
        assert!((f.py - sy / n as f64).abs() < 0.5, "py gap {}", f.py - sy / n as f64);
    }

    #[test]
    fn utility_trades_distance_against_turn_effort() {
        let own = AircraftState::new(0.0, 0.0, 1.0, 0.0);
        let other = AircraftState::new(0.0, 1000.0, 1.0, 0.0);
        // equal distances, one maneuver-free: utilities 0.85 vs 0.805
        assert_relative_eq!(utility(0.85, &own, &other, 0.0, 1000.0), 0.85);
        assert_relative_eq!(utility(0.85, &own, &other, 0.3, 1000.0), 0.805, max_relative = 1e-12);
        // larger |a| never helps when distances are equal
        assert!(utility(0.85, &own, &other, 0.6, 1000.0) < utility(0.85, &own, &other, 0.3, 1000.0));
    }

    // Brute-force oracle over three candidates: evaluate the summed utility
    // of each by hand and compare the argmax against choose_action_from.
    #[test]
    fn separation_dominant_weight_turns_hard() {
        let e = head_on();
        let finals = [expected_intruder_final(&e.s2, 5.0, 1.0).unwrap()];
        let candidates = [-0.9, 0.0, 0.9];
        let w = 0.999;
        let scale = 6000.0;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &a in &candidates {
            let own_final = propagate(&e.s1, a, 5.0).unwrap();
            let score = utility(w, &own_final, &finals[0], a, scale);
            if score > best.0 {
                best = (score, a);
            }
        }
        let chosen = choose_action_from(&e.s1, w, &candidates, &finals, 5.0, scale).unwrap();
        assert_eq!(chosen, best.1);
        assert_eq!(chosen.abs(), 0.9);
    }

    #[test]
    fn effort_dominant_weight_holds_course() {
        let e = head_on();
        let finals = [expected_intruder_final(&e.s2, 5.0, 1.0).unwrap()];
        let candidates = [-0.9, 0.05, 0.9];
        let chosen = choose_action_from(&e.s1, 0.001, &candidates, &finals, 5.0, 6000.0).unwrap();
        assert_eq!(chosen, 0.05);
    }

    #[test]
    fn ties_break_toward_the_lowest_index() {
        // in a head-on geometry, +a and -a score identically (the intruder's
        // expected final position sits on the symmetry axis), so whichever
        // comes first must win
        let e = head_on();
        let finals = [expected_intruder_final(&e.s2, 5.0, 1.0).unwrap()];
        let chosen = choose_action_from(&e.s1, 0.5, &[0.4, -0.4], &finals, 5.0, 6000.0).unwrap();
        assert_eq!(chosen, 0.4);
        let chosen = choose_action_from(&e.s1, 0.5, &[-0.4, 0.4], &finals, 5.0, 6000.0).unwrap();
        assert_eq!(chosen, -0.4);
    }

    #[test]
    fn argmax_ignores_positive_scaling_of_the_utility() {
        // scaling all summed utilities by a positive constant (equivalently,
        // scoring against k identical copies of the belief list) cannot
        // change the argmax
        let e = head_on();
        let one = vec![expected_intruder_final(&e.s2, 5.0, 1.0).unwrap()];
        let three = vec![one[0]; 3];
        let candidates: Vec<f64> = stream(6).sample_iter(rand::distributions::Uniform::new(-1.0, 1.0)).take(25).collect();
        let a = choose_action_from(&e.s1, 0.9, &candidates, &one, 5.0, 6000.0).unwrap();
        let b = choose_action_from(&e.s1, 0.9, &candidates, &three, 5.0, 6000.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mirrored_world_gives_mirrored_decision() {
        // reflect everything about the north-south axis: positions and
        // velocities flip their x components, maneuvers flip sign
        let mirror_state =
            |s: &AircraftState| AircraftState::new(-s.px, s.py, -s.vx, s.vy);
        let own = AircraftState::new(500.0, -2800.0, 30.0, 440.0);
        let intruder = AircraftState::new(-2121.0, 2121.0, 318.0, -318.0);
        let mut rng = stream(17);
        let candidates: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        let beliefs = sample_beliefs(&intruder, Fidelity::High, 20, &mut rng).unwrap();
        let finals: Vec<AircraftState> = beliefs
            .iter()
            .map(|b| expected_intruder_final(b, 5.0, 1.0).unwrap())
            .collect();
        let a = choose_action_from(&own, 0.9, &candidates, &finals, 5.0, 14000.0).unwrap();

        let mirrored_candidates: Vec<f64> = candidates.iter().map(|c| -c).collect();
        let mirrored_finals: Vec<AircraftState> = finals.iter().map(&mirror_state).collect();
        let b = choose_action_from(
            &mirror_state(&own),
            0.9,
            &mirrored_candidates,
            &mirrored_finals,
            5.0,
            14000.0,
        )
        .unwrap();
        assert_relative_eq!(b, -a, max_relative = 1e-12);
    }

    #[test]
    fn chosen_action_stays_within_the_bound() {
        let e = head_on();
        let config = DecisionConfig::default();
        let mut rng = stream(21);
        for _ in 0..20 {
            let a = choose_action(&e.s1, &e.s2, 0.9, Fidelity::High, &config, &mut rng).unwrap();
            assert!(a.abs() <= config.action_bound);
        }
    }

    #[test]
    fn joint_decision_is_deterministic_per_seed() {
        let e = head_on();
        let config = DecisionConfig::default();
        let w = UtilityWeights::new(0.89, 0.90).unwrap();
        let a = joint_decision(&e, &w, Fidelity::High, &config, &mut stream(33)).unwrap();
        let b = joint_decision(&e, &w, Fidelity::High, &config, &mut stream(33)).unwrap();
        assert_eq!(a, b);
        let c = joint_decision(&e, &w, Fidelity::High, &config, &mut stream(34)).unwrap();
        assert!(a != c, "distinct seeds should almost surely differ");
    }

    #[test]
    fn low_weights_hold_course_high_weights_turn() {
        let e = head_on();
        let config = DecisionConfig::default();
        let mean_abs = |w: f64| {
            let mut total = 0.0;
            let n = 200;
            for i in 0..n {
                let mut rng = stream(derive(100, &[tag::ENCOUNTER, i]));
                total += choose_action(&e.s1, &e.s2, w, Fidelity::High, &config, &mut rng)
                    .unwrap()
                    .abs();
            }
            total / n as f64
        };
        let timid = mean_abs(0.80);
        let bold = mean_abs(0.98);
        assert!(timid < 0.1, "w=0.80 mean |a| = {timid}");
        assert!(bold > 0.5, "w=0.98 mean |a| = {bold}");
    }

    #[test]
    fn weight_ordering_raises_miss_distance() {
        // common random numbers: each weight level sees identical encounters
        // and identical decision noise
        let geometry = crate::scenario::GeometryConfig::default();
        let bearings = crate::scenario::train_bearings();
        let config = DecisionConfig::default();
        let miss = |w: f64| {
            let mut total = 0.0;
            let n = 500;
            for i in 0..n {
                let enc_seed = derive(7, &[tag::ENCOUNTER, i]);
                let e = crate::scenario::sample_encounter(&bearings, &geometry, &mut stream(enc_seed)).unwrap();
                let weights = UtilityWeights::new(w, w).unwrap();
                let a = joint_decision(&e, &weights, Fidelity::High, &config, &mut stream(derive(enc_seed, &[tag::MIX]))).unwrap();
                let f1 = propagate(&e.s1, a.a1, config.horizon).unwrap();
                let f2 = propagate(&e.s2, a.a2, config.horizon).unwrap();
                total += distance(&f1, &f2);
            }
            total / n as f64
        };
        let low = miss(0.82);
        let mid = miss(0.90);
        let high = miss(0.98);
        assert!(low <= mid + 1.0, "low {low} vs mid {mid}");
        assert!(mid <= high + 1.0, "mid {mid} vs high {high}");
        assert!(high > low, "separation weight had no effect: {low} vs {high}");
    }

    #[test]
    fn invalid_weights_and_configs_are_rejected() {
        assert!(UtilityWeights::new(0.0, 0.5).is_err());
        assert!(UtilityWeights::new(0.5, 1.0).is_err());
        assert!(UtilityWeights::new(f64::NAN, 0.5).is_err());
        let config = DecisionConfig { candidate_count: 0, ..Default::default() };
        assert!(config.validate().is_err());
        let config =
            DecisionConfig { distance_scale: DistanceScale::Fixed(0.0), ..Default::default() };
        assert!(config.validate().is_err());
    }
}
