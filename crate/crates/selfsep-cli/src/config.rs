//! Flat `key = value` configuration files and `--set` overrides.
//!
//! One file drives every subcommand: `experiment` reads all of it, the
//! utility subcommands read the parts they need and ignore the rest. A `#`
//! starts a comment, a key may appear at most once per source, and
//! command-line `--set key=value` pairs win over the file. Values use the
//! same spellings as the CLI flags (method tags, `high`/`low`, comma
//! separated lists).

use anyhow::{anyhow, bail, Result};
use selfsep::density::KdeMethod;
use selfsep::evaluation::Method;
use selfsep::experiment::{ExperimentConfig, WeightScenario};
use selfsep::pilot::{DistanceScale, UtilityWeights};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

struct Entry {
    key: String,
    value: String,
    /// Where the entry came from, for error messages: `file: line N` or the
    /// `--set` flag itself.
    origin: String,
}

fn parse_file(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("reading configuration file {}: {e}", path.display()))?;
    let mut entries: Vec<Entry> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let origin = format!("{}: line {line}", path.display());
        let Some((key, value)) = stripped.split_once('=') else {
            bail!("{origin}: expected 'key = value', found '{stripped}'");
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            bail!("{origin}: expected 'key = value', found '{stripped}'");
        }
        if let Some(first) = entries.iter().find(|e| e.key == key) {
            bail!("{origin}: duplicate key '{key}' (first set at {})", first.origin);
        }
        entries.push(Entry { key: key.into(), value: value.into(), origin });
    }
    Ok(entries)
}

fn parse_sets(sets: &[String]) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for raw in sets {
        let origin = format!("--set {raw}");
        let Some((key, value)) = raw.split_once('=') else {
            bail!("{origin}: expected KEY=VALUE");
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            bail!("{origin}: expected KEY=VALUE");
        }
        if entries.iter().any(|e| e.key == key) {
            bail!("{origin}: key '{key}' was already set by an earlier --set");
        }
        entries.push(Entry { key: key.into(), value: value.into(), origin });
    }
    Ok(entries)
}

/// The scenarios named by a `scenario =` value or `--scenario` flag.
pub fn scenario_set(name: &str) -> Result<Vec<WeightScenario>> {
    Ok(match name {
        "identical" => vec![WeightScenario::identical()],
        "small" | "small-difference" => vec![WeightScenario::small_difference()],
        "large" | "large-difference" => vec![WeightScenario::large_difference()],
        "all" => WeightScenario::all(),
        other => bail!("unknown scenario '{other}' (expected identical, small, large, or all)"),
    })
}

fn parse_value<T: FromStr>(entry: &Entry) -> Result<T>
where
    T::Err: Display,
{
    entry.value.parse().map_err(|e| {
        anyhow!("{}: {}: invalid value '{}': {e}", entry.origin, entry.key, entry.value)
    })
}

fn parse_list<T: FromStr>(entry: &Entry) -> Result<Vec<T>>
where
    T::Err: Display,
{
    entry
        .value
        .split(',')
        .map(|item| {
            item.trim().parse().map_err(|e| {
                anyhow!("{}: {}: invalid item '{}': {e}", entry.origin, entry.key, item.trim())
            })
        })
        .collect()
}

fn parse_kde(entry: &Entry) -> Result<KdeMethod> {
    let value = entry.value.as_str();
    if value == "gaussian-silverman" {
        return Ok(KdeMethod::GaussianSilverman);
    }
    if value == "diffusion" {
        return Ok(KdeMethod::Diffusion);
    }
    if let Some(rest) = value.strip_prefix("gaussian-fixed:") {
        if let Some((h1, h2)) = rest.split_once(':') {
            if let (Ok(h1), Ok(h2)) = (h1.parse(), h2.parse()) {
                return Ok(KdeMethod::GaussianFixed { h1, h2 });
            }
        }
    }
    bail!(
        "{}: kde: expected gaussian-silverman, diffusion, or gaussian-fixed:H1:H2, got '{value}'",
        entry.origin
    )
}

fn parse_distance_scale(entry: &Entry) -> Result<DistanceScale> {
    let value = entry.value.as_str();
    let parsed = value.split_once(':').and_then(|(kind, number)| {
        let number: f64 = number.parse().ok()?;
        match kind {
            "separation-multiple" => Some(DistanceScale::SeparationMultiple(number)),
            "fixed" => Some(DistanceScale::Fixed(number)),
            _ => None,
        }
    });
    parsed.ok_or_else(|| {
        anyhow!(
            "{}: distance-scale: expected separation-multiple:K or fixed:FEET, got '{value}'",
            entry.origin
        )
    })
}

/// Build an experiment configuration from the defaults, an optional file,
/// and `--set` overrides, in that order of precedence.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig> {
    let mut entries = match path {
        Some(p) => parse_file(p)?,
        None => Vec::new(),
    };
    let overrides = parse_sets(sets)?;
    entries.retain(|e| !overrides.iter().any(|o| o.key == e.key));
    entries.extend(overrides);

    let mut config = ExperimentConfig::default();
    let (mut weight_start, mut weight_stop, mut weight_step) = (0.80, 0.98, 0.02);
    let (mut prior_w1, mut prior_w2) = (None, None);
    for entry in &entries {
        match entry.key.as_str() {
            "scenario" => {
                config.scenarios = scenario_set(&entry.value)
                    .map_err(|e| anyhow!("{}: {e}", entry.origin))?;
            }
            "methods" => config.methods = parse_list::<Method>(entry)?,
            "hifi-counts" => config.hifi_counts = parse_list(entry)?,
            "replicates" => config.replicates = parse_value(entry)?,
            "test-count" => config.test_count = parse_value(entry)?,
            "lofi-count" => config.lofi_count = parse_value(entry)?,
            "novel-count" => config.novel_count = parse_value(entry)?,
            "prediction-samples" => config.prediction_samples = parse_value(entry)?,
            "weight-start" => weight_start = parse_value(entry)?,
            "weight-stop" => weight_stop = parse_value(entry)?,
            "weight-step" => weight_step = parse_value(entry)?,
            "action-grid-size" => config.action_grid.size = parse_value(entry)?,
            "action-grid-bound" => config.action_grid.bound = parse_value(entry)?,
            "kde" => config.kde_method = parse_kde(entry)?,
            "candidate-count" => config.decision.candidate_count = parse_value(entry)?,
            "belief-count" => config.decision.belief_count = parse_value(entry)?,
            "action-bound" => config.decision.action_bound = parse_value(entry)?,
            "horizon" => config.decision.horizon = parse_value(entry)?,
            "distance-scale" => config.decision.distance_scale = parse_distance_scale(entry)?,
            "initial-range" => config.geometry.initial_range = parse_value(entry)?,
            "speed" => config.geometry.speed = parse_value(entry)?,
            "collision-threshold" => config.geometry.collision_threshold = parse_value(entry)?,
            "fov-half-angle-deg" => config.geometry.fov_half_angle_deg = parse_value(entry)?,
            "heading-sigma-deg" => config.geometry.heading_sigma_deg = parse_value(entry)?,
            "max-attempts" => config.geometry.max_attempts = parse_value(entry)?,
            "prior-w1" => prior_w1 = Some(parse_value::<f64>(entry)?),
            "prior-w2" => prior_w2 = Some(parse_value::<f64>(entry)?),
            "master-seed" => config.master_seed = parse_value(entry)?,
            "cache-dir" => config.cache_dir = Some(PathBuf::from(&entry.value)),
            "output-dir" => config.output_dir = PathBuf::from(&entry.value),
            other => bail!("{}: unknown key '{other}'", entry.origin),
        }
    }
    config.weight_grid = selfsep::density::WeightGrid::from_range(
        weight_start,
        weight_stop,
        weight_step,
    )
    .map_err(|e| anyhow!("configured weight grid is invalid: {e}"))?;
    config.prior_mean = match (prior_w1, prior_w2) {
        (Some(w1), Some(w2)) => Some(
            UtilityWeights::new(w1, w2).map_err(|e| anyhow!("configured prior mean: {e}"))?,
        ),
        (None, None) => None,
        _ => bail!("prior-w1 and prior-w2 must be set together"),
    };
    Ok(config)
}
