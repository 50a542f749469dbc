//! Encounter generation and recorded decision datasets.
//!
//! An encounter puts both aircraft at the same range from a common collision
//! point, headed at it with the same speed, so the unmaneuvered zero-noise
//! trajectories meet exactly. Player 1 always approaches from the south;
//! player 2's approach bearing is drawn from a configured set, measured
//! relative to player 1's approach axis (0 deg = head-on). Actual headings
//! get independent Gaussian perturbations.

use crate::error::{Error, Result};
use crate::kinematics::{distance, AircraftState};
use crate::perception::Fidelity;
use crate::pilot::{joint_decision, DecisionConfig, JointAction, UtilityWeights};
use crate::seeds::{derive, stream, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    pub s1: AircraftState,
    pub s2: AircraftState,
}

impl Encounter {
    pub fn new(s1: AircraftState, s2: AircraftState) -> Result<Self> {
        s1.validate()?;
        s2.validate()?;
        for (what, s) in [("player 1", &s1), ("player 2", &s2)] {
            if s.speed() <= 0.0 {
                return Err(Error::InvalidParameter {
                    what: "aircraft speed",
                    details: format!("{what} is not moving"),
                });
            }
        }
        Ok(Encounter { s1, s2 })
    }

    pub fn initial_separation(&self) -> f64 {
        distance(&self.s1, &self.s2)
    }

    /// Closest approach of the two straight-line (no maneuver) trajectories,
    /// looking forward from the initial instant.
    pub fn nominal_miss_distance(&self) -> f64 {
        let rx = self.s2.px - self.s1.px;
        let ry = self.s2.py - self.s1.py;
        let vx = self.s2.vx - self.s1.vx;
        let vy = self.s2.vy - self.s1.vy;
        let v2 = vx * vx + vy * vy;
        let t = if v2 > 0.0 {
            (-(rx * vx + ry * vy) / v2).max(0.0)
        } else {
            0.0
        };
        (rx + t * vx).hypot(ry + t * vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    /// Range of each aircraft from the collision point, feet.
    pub initial_range: f64,
    /// Common aircraft speed, feet per second.
    pub speed: f64,
    /// Zero-noise nominal trajectories must pass within this distance, feet.
    pub collision_threshold: f64,
    /// Player 2 must start within this half-angle of player 1's velocity.
    pub fov_half_angle_deg: f64,
    /// Standard deviation of the heading perturbations, degrees.
    pub heading_sigma_deg: f64,
    /// Rejection-sampling attempts before giving up.
    pub max_attempts: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            initial_range: 3000.0,
            speed: 450.0,
            collision_threshold: 500.0,
            fov_half_angle_deg: 110.0,
            heading_sigma_deg: 5.0,
            max_attempts: 20,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial range", self.initial_range),
            ("speed", self.speed),
            ("collision threshold", self.collision_threshold),
            ("field-of-view half angle", self.fov_half_angle_deg),
        ];
        for (what, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    what,
                    details: format!("must be finite and positive, got {value}"),
                });
            }
        }
        if !(self.heading_sigma_deg.is_finite() && self.heading_sigma_deg >= 0.0) {
            return Err(Error::InvalidParameter {
                what: "heading sigma",
                details: format!("must be finite and non-negative, got {}", self.heading_sigma_deg),
            });
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter {
                what: "max attempts",
                details: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Approach bearings (degrees) used to generate training data.
pub fn train_bearings() -> Vec<f64> {
    vec![-45.0, 0.0, 45.0]
}

/// Approach bearings (degrees) held out for test data; disjoint from the
/// training set by construction.
pub fn test_bearings() -> Vec<f64> {
    vec![-22.5, 22.5]
}

/// Draw one encounter: pick a bearing from `bearings`, place both aircraft,
/// perturb the collision headings, and retry (up to `max_attempts`) whenever
/// the field-of-view or near-collision condition fails.
pub fn sample_encounter<R: Rng + ?Sized>(
    bearings: &[f64],
    geometry: &GeometryConfig,
    rng: &mut R,
) -> Result<Encounter> {
    geometry.validate()?;
    if bearings.is_empty() {
        return Err(Error::EmptyInput { what: "bearing set" });
    }
    for b in bearings {
        if !b.is_finite() {
            return Err(Error::NonFinite { what: "bearing", value: *b });
        }
    }
    let r = geometry.initial_range;
    let sigma = geometry.heading_sigma_deg.to_radians();
    let fov = geometry.fov_half_angle_deg.to_radians();
    for _ in 0..geometry.max_attempts {
        let bearing = bearings[rng.gen_range(0..bearings.len())].to_radians();
        // player 1 south of the collision point (the origin), aimed north
        let p1 = (0.0, -r);
        let collision_heading_1 = std::f64::consts::FRAC_PI_2;
        // player 2 on the same circle, `bearing` away from dead-ahead
        let position_angle = std::f64::consts::FRAC_PI_2 + bearing;
        let p2 = (r * position_angle.cos(), r * position_angle.sin());
        let collision_heading_2 = position_angle - std::f64::consts::PI;

        // equal ranges and speeds: the exact-heading paths meet at the origin
        let nominal = Encounter::new(
            state_at(p1, collision_heading_1, geometry.speed),
            state_at(p2, collision_heading_2, geometry.speed),
        )?;
        if nominal.nominal_miss_distance() >= geometry.collision_threshold {
            continue;
        }

        let h1 = collision_heading_1 + sigma * rng.sample::<f64, _>(StandardNormal);
        let h2 = collision_heading_2 + sigma * rng.sample::<f64, _>(StandardNormal);
        let s1 = state_at(p1, h1, geometry.speed);
        let s2 = state_at(p2, h2, geometry.speed);

        // player 2 must sit inside player 1's forward field of view
        let (dx, dy) = (s2.px - s1.px, s2.py - s1.py);
        let range = dx.hypot(dy);
        if range == 0.0 {
            continue;
        }
        let cos_angle = ((s1.vx * dx + s1.vy * dy) / (s1.speed() * range)).clamp(-1.0, 1.0);
        if cos_angle.acos() > fov {
            continue;
        }
        return Encounter::new(s1, s2);
    }
    Err(Error::GeometryRejected {
        attempts: geometry.max_attempts,
    })
}

fn state_at(position: (f64, f64), heading: f64, speed: f64) -> AircraftState {
    AircraftState {
        px: position.0,
        py: position.1,
        vx: speed * heading.cos(),
        vy: speed * heading.sin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncounterRecord {
    pub encounter: Encounter,
    pub action: JointAction,
}

/// Encounters plus the joint decisions both simulated pilots made in them,
/// tagged with the fidelity, weights, and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub fidelity: Fidelity,
    pub weights: UtilityWeights,
    pub seed: u64,
    pub records: Vec<EncounterRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn encounters(&self) -> Vec<Encounter> {
        self.records.iter().map(|r| r.encounter).collect()
    }

    pub fn actions(&self) -> Vec<JointAction> {
        self.records.iter().map(|r| r.action).collect()
    }
}

/// Simulate `count` fresh encounters at the given fidelity and weights. Each
/// record draws from its own stream derived from `seed`, so any record can be
/// regenerated independently.
pub fn generate_dataset(
    count: usize,
    fidelity: Fidelity,
    weights: &UtilityWeights,
    bearings: &[f64],
    geometry: &GeometryConfig,
    decision: &DecisionConfig,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            what: "record count",
            details: "must be at least 1".into(),
        });
    }
    weights.validate()?;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream(derive(seed, &[tag::RECORD, i as u64]));
        let encounter = sample_encounter(bearings, geometry, &mut rng)?;
        let action = joint_decision(&encounter, weights, fidelity, decision, &mut rng)?;
        records.push(EncounterRecord { encounter, action });
    }
    Ok(Dataset {
        fidelity,
        weights: *weights,
        seed,
        records,
    })
}

const DATASET_HEADER: &str = "s1_px,s1_py,s1_vx,s1_vy,s2_px,s2_py,s2_vx,s2_vy,a1,a2";

/// The dataset rendered as delimited text: a `#` metadata line with the
/// provenance, the header row, then one record per line. Floats are written
/// in shortest round-trip form, so save/load is bit-exact.
pub fn dataset_text(dataset: &Dataset) -> Result<String> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput { what: "dataset" });
    }
    let mut text = format!(
        "# fidelity={} w1={} w2={} seed={}\n{DATASET_HEADER}\n",
        dataset.fidelity.tag(),
        dataset.weights.w1,
        dataset.weights.w2,
        dataset.seed
    );
    for r in &dataset.records {
        let (s1, s2, a) = (&r.encounter.s1, &r.encounter.s2, &r.action);
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            s1.px, s1.py, s1.vx, s1.vy, s2.px, s2.py, s2.vx, s2.vy, a.a1, a.a2
        )
        .expect("writing to a string cannot fail");
    }
    Ok(text)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(dataset_text(dataset)?.as_bytes())?;
    Ok(())
}

/// Parse text in the dataset file format. `source` names the origin in
/// parse errors.
pub fn parse_dataset(text: &str, source: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();

    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let meta = meta_line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "expected a '#' metadata line".into()))?;
    let mut fidelity = None;
    let mut w1 = None;
    let mut w2 = None;
    let mut seed = None;
    for token in meta.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed metadata token '{token}'")))?;
        match key {
            "fidelity" => fidelity = Some(value.parse::<Fidelity>()?),
            "w1" => w1 = Some(parse_float(value, "w1").map_err(|m| parse_err(1, m))?),
            "w2" => w2 = Some(parse_float(value, "w2").map_err(|m| parse_err(1, m))?),
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|e| {
                    parse_err(1, format!("field seed: invalid integer '{value}': {e}"))
                })?)
            }
            _ => return Err(parse_err(1, format!("unknown metadata key '{key}'"))),
        }
    }
    let (Some(fidelity), Some(w1), Some(w2), Some(seed)) = (fidelity, w1, w2, seed) else {
        return Err(parse_err(1, "metadata must carry fidelity, w1, w2 and seed".into()));
    };

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing header row".into()))?;
    if header != DATASET_HEADER {
        return Err(parse_err(2, format!("header must be '{DATASET_HEADER}'")));
    }

    let column_names: Vec<&str> = DATASET_HEADER.split(',').collect();
    let mut records = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != column_names.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", column_names.len(), fields.len()),
            ));
        }
        let mut values = [0.0; 10];
        for (i, raw) in fields.iter().enumerate() {
            values[i] = parse_float(raw, column_names[i])
                .map_err(|m| parse_err(line_no, format!("field {} ({m})", i + 1)))?;
        }
        let encounter = Encounter::new(
            AircraftState::new(values[0], values[1], values[2], values[3]),
            AircraftState::new(values[4], values[5], values[6], values[7]),
        )?;
        records.push(EncounterRecord {
            encounter,
            action: JointAction::new(values[8], values[9]),
        });
    }
    if records.is_empty() {
        return Err(parse_err(3, "dataset holds no records".into()));
    }
    Ok(Dataset {
        fidelity,
        weights: UtilityWeights::new(w1, w2)?,
        seed,
        records,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, path)
}

fn parse_float(raw: &str, name: &str) -> std::result::Result<f64, String> {
    raw.parse::<f64>()
        .map_err(|_| format!("{name}: invalid float '{raw}'"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_head_on_collides_exactly() {
        let geometry = GeometryConfig { heading_sigma_deg: 0.0, ..Default::default() };
        let e = sample_encounter(&[0.0], &geometry, &mut stream(1)).unwrap();
        assert_relative_eq!(e.s1.px, 0.0, epsilon = 1e-9);
        assert_relative_eq!(e.s1.py, -3000.0);
        assert_relative_eq!(e.s2.py, 3000.0, max_relative = 1e-12);
        assert!(e.nominal_miss_distance() < 1e-6);
    }

    #[test]
    fn zero_noise_encounters_all_reach_near_collision() {
        let geometry = GeometryConfig { heading_sigma_deg: 0.0, ..Default::default() };
        let mut rng = stream(2);
        for _ in 0..200 {
            let e = sample_encounter(&train_bearings(), &geometry, &mut rng).unwrap();
            assert!(e.nominal_miss_distance() < geometry.collision_threshold);
            assert_relative_eq!(e.s1.speed(), 450.0, max_relative = 1e-12);
            assert_relative_eq!(e.s2.speed(), 450.0, max_relative = 1e-12);
            // both players sit on the circle of radius 3000 around the origin
            assert_relative_eq!(e.s2.px.hypot(e.s2.py), 3000.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn heading_noise_has_the_configured_spread() {
        let geometry = GeometryConfig::default();
        let mut rng = stream(3);
        let mut devs = Vec::new();
        for _ in 0..20_000 {
            let e = sample_encounter(&[0.0], &geometry, &mut rng).unwrap();
            devs.push(e.s1.heading().unwrap() - std::f64::consts::FRAC_PI_2);
        }
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let sd = (devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = 5.0f64.to_radians();
        assert!(mean.abs() < 0.002, "mean = {mean}");
        assert!((sd - expected).abs() < 0.03 * expected, "sd = {sd}");
    }

    #[test]
    fn bearings_come_from_the_requested_set() {
        let geometry = GeometryConfig { heading_sigma_deg: 0.0, ..Default::default() };
        let mut rng = stream(4);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..100 {
            let e = sample_encounter(&test_bearings(), &geometry, &mut rng).unwrap();
            let bearing = (e.s2.py.atan2(e.s2.px) - std::f64::consts::FRAC_PI_2).to_degrees();
            let rounded = (bearing * 10.0).round() / 10.0;
            seen.insert(format!("{rounded}"));
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec!["-22.5", "22.5"]);
    }

    #[test]
    fn train_and_test_bearings_are_disjoint() {
        let train = train_bearings();
        assert!(test_bearings().iter().all(|b| !train.contains(b)));
    }

    #[test]
    fn impossible_field_of_view_exhausts_attempts() {
        let geometry = GeometryConfig { fov_half_angle_deg: 1.0, ..Default::default() };
        let result = sample_encounter(&[90.0], &geometry, &mut stream(5));
        assert!(matches!(result, Err(Error::GeometryRejected { attempts: 20 })));
    }

    #[test]
    fn dataset_generation_is_deterministic_and_tagged() {
        let weights = UtilityWeights::new(0.89, 0.90).unwrap();
        let make = || {
            generate_dataset(
                20,
                Fidelity::High,
                &weights,
                &train_bearings(),
                &GeometryConfig::default(),
                &DecisionConfig::default(),
                42,
            )
            .unwrap()
        };
        let a = make();
        let b = make();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert_eq!(a.fidelity, Fidelity::High);
        assert!(a.records.iter().all(|r| r.action.a1.abs() <= 1.0 && r.action.a2.abs() <= 1.0));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let weights = UtilityWeights::new(0.89, 0.90).unwrap();
        let dataset = generate_dataset(
            10,
            Fidelity::Low,
            &weights,
            &train_bearings(),
            &GeometryConfig::default(),
            &DecisionConfig::default(),
            7,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(dataset, loaded);
        // saving the loaded dataset reproduces the file byte for byte
        let path2 = dir.path().join("data2.csv");
        save_dataset(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn malformed_rows_name_the_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "# fidelity=high w1=0.89 w2=0.9 seed=1\n\
             s1_px,s1_py,s1_vx,s1_vy,s2_px,s2_py,s2_vx,s2_vy,a1,a2\n\
             0,-3000,0,450,0,3000,0,-450,0.1,0.2\n\
             0,-3000,xx,450,0,3000,0,-450,0.1,0.2\n",
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("line 4"), "{message}");
        assert!(message.contains("s1_vx"), "{message}");

        std::fs::write(
            &path,
            "# fidelity=high w1=0.89 w2=0.9 seed=1\n\
             s1_px,s1_py,s1_vx,s1_vy,s2_px,s2_py,s2_vx,s2_vy,a1,a2\n\
             0,-3000,0,450\n",
        )
        .unwrap();
        let message = load_dataset(&path).unwrap_err().to_string();
        assert!(message.contains("expected 10 fields, found 4"), "{message}");
    }

    #[test]
    fn empty_datasets_are_rejected_on_save() {
        let dataset = Dataset {
            fidelity: Fidelity::High,
            weights: UtilityWeights::new(0.5, 0.5).unwrap(),
            seed: 0,
            records: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(save_dataset(&dataset, &dir.path().join("empty.csv")).is_err());
    }

    #[test]
    fn missing_files_and_headers_error_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(&dir.path().join("nope.csv")).is_err());
        let path = dir.path().join("noheader.csv");
        std::fs::write(&path, "0,1,2\n").unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
