//! Kernel density estimates of joint-action distributions on a fixed grid.
//!
//! Simulated pilots map an encounter to a pair of heading changes, so for a
//! candidate pair of utility weights the model induces a distribution over
//! the action square. This module estimates those distributions on a regular
//! grid from simulated draws, one density per weight combination, and ties
//! them together into a [`DensityFamily`] that the model-based predictors
//! evaluate recorded actions against. Densities are normalized so the
//! trapezoid rule over the grid integrates to one, blended with a small
//! uniform component so actions landing between kernel bumps keep a usable
//! log-likelihood, and floored at [`DENSITY_FLOOR`] so logs stay finite.

mod diffusion;

use crate::error::{Error, Result};
use crate::perception::Fidelity;
use crate::pilot::{joint_decision, DecisionConfig, DistanceScale, JointAction, UtilityWeights};
use crate::scenario::Encounter;
use crate::seeds::{derive, stream, tag};
use std::fmt::Write as _;
use std::path::Path;

/// Smallest value a normalized density may take at a grid node.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Weight of the uniform component blended into every estimated density.
/// Kernel estimates decay to nothing a few bandwidths from the samples, so
/// without the blend a single action in such a region would swing a summed
/// log-likelihood by the size of the floor's log and drown out the signal
/// from every other action.
pub const UNIFORM_MIXTURE: f64 = 1e-3;

/// Regular square grid over the action square `[-bound, bound]^2` with
/// inclusive endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionGrid {
    pub size: usize,
    pub bound: f64,
}

impl Default for ActionGrid {
    fn default() -> Self {
        ActionGrid {
            size: 128,
            bound: 1.0,
        }
    }
}

impl ActionGrid {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 {
            return Err(Error::InvalidParameter {
                what: "grid size",
                details: format!("need at least 4 nodes per axis, got {}", self.size),
            });
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::InvalidParameter {
                what: "grid bound",
                details: format!("must be finite and positive, got {}", self.bound),
            });
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.bound / (self.size - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.size)
            .map(|i| -self.bound + self.spacing() * i as f64)
            .collect()
    }

    /// Index of the node nearest to `x`, and whether `x` lay outside the
    /// grid bounds.
    pub fn nearest_index(&self, x: f64) -> (usize, bool) {
        let clamped = !(-self.bound..=self.bound).contains(&x);
        let raw = ((x + self.bound) / self.spacing()).round();
        let index = raw.clamp(0.0, (self.size - 1) as f64) as usize;
        (index, clamped)
    }
}

/// A probability density over the action square, stored by value at each
/// grid node, row-major with the first action as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDensity {
    grid: ActionGrid,
    values: Vec<f64>,
}

/// Summed log-density of a set of actions, plus how many of them fell
/// outside the grid and were evaluated at the nearest edge node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub clamped: usize,
}

impl ActionDensity {
    pub fn from_values(grid: ActionGrid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.size * grid.size {
            return Err(Error::LengthMismatch {
                what: "density values",
                expected: grid.size * grid.size,
                actual: values.len(),
            });
        }
        for v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "density value",
                    value: *v,
                });
            }
        }
        Ok(ActionDensity { grid, values })
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.size + j]
    }

    fn axis_weights(&self) -> Vec<f64> {
        let n = self.grid.size;
        let h = self.grid.spacing();
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect()
    }

    /// Trapezoid-rule integral of the density over the whole grid.
    pub fn integral(&self) -> f64 {
        let w = self.axis_weights();
        let n = self.grid.size;
        let mut total = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for (j, wj) in w.iter().enumerate() {
                row += wj * self.values[i * n + j];
            }
            total += w[i] * row;
        }
        total
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.integral();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidParameter {
                what: "density normalization",
                details: format!("grid integral is {total}"),
            });
        }
        for v in &mut self.values {
            *v /= total;
        }
        Ok(())
    }

    fn floor(&mut self) {
        for v in &mut self.values {
            if *v < DENSITY_FLOOR {
                *v = DENSITY_FLOOR;
            }
        }
    }

    fn mix_uniform(&mut self, weight: f64) {
        let uniform = 1.0 / (2.0 * self.grid.bound).powi(2);
        for v in &mut self.values {
            *v = (1.0 - weight) * *v + weight * uniform;
        }
    }

    /// Natural log of the density at the grid node nearest to the action,
    /// with a flag for actions outside the grid.
    pub fn log_density(&self, a1: f64, a2: f64) -> (f64, bool) {
        let (i, c1) = self.grid.nearest_index(a1);
        let (j, c2) = self.grid.nearest_index(a2);
        (self.value(i, j).ln(), c1 || c2)
    }

    pub fn log_likelihood(&self, actions: &[JointAction]) -> LogLikelihood {
        let mut value = 0.0;
        let mut clamped = 0;
        for a in actions {
            let (ld, clip) = self.log_density(a.a1, a.a2);
            value += ld;
            clamped += usize::from(clip);
        }
        LogLikelihood { value, clamped }
    }

    /// Probability mass on the sub-square where both actions are at most
    /// `limit` in absolute value, by the trapezoid rule over the grid nodes
    /// inside that square.
    pub fn mass_within(&self, limit: f64) -> f64 {
        let n = self.grid.size;
        let nodes = self.grid.nodes();
        let inside: Vec<usize> = (0..n).filter(|&i| nodes[i].abs() <= limit).collect();
        let Some((&lo, &hi)) = inside.first().zip(inside.last()) else {
            return 0.0;
        };
        let h = self.grid.spacing();
        let w = |i: usize| if i == lo || i == hi { 0.5 * h } else { h };
        let mut total = 0.0;
        for i in lo..=hi {
            let mut row = 0.0;
            for j in lo..=hi {
                row += w(j) * self.values[i * n + j];
            }
            total += w(i) * row;
        }
        total
    }

    /// Expected magnitude of a single pilot's action under the density,
    /// averaging the two axes.
    pub fn mean_abs_action(&self) -> f64 {
        let n = self.grid.size;
        let nodes = self.grid.nodes();
        let w = self.axis_weights();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let weight = w[i] * w[j];
                total += weight * 0.5 * (nodes[i].abs() + nodes[j].abs()) * self.values[i * n + j];
            }
        }
        total
    }
}

/// Bandwidth selection for [`kde2d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdeMethod {
    /// Gaussian product kernel with a per-axis rule-of-thumb bandwidth
    /// `sd * n^(-1/6)`, floored at one grid spacing so a tight cluster of
    /// samples still produces a resolvable bump.
    GaussianSilverman,
    /// Gaussian product kernel with fixed per-axis bandwidths.
    GaussianFixed { h1: f64, h2: f64 },
    /// Diffusion smoothing of the binned samples in the cosine basis, with
    /// the smoothing time chosen by a fixed-point rule on the transformed
    /// histogram.
    Diffusion,
}

impl KdeMethod {
    pub fn tag(&self) -> String {
        match self {
            KdeMethod::GaussianSilverman => "gaussian-silverman".into(),
            KdeMethod::GaussianFixed { h1, h2 } => format!("gaussian-fixed:{h1}:{h2}"),
            KdeMethod::Diffusion => "diffusion".into(),
        }
    }
}

/// Estimate the joint density of 2-D samples on the grid. Gaussian kernels
/// are reflected at all four edges of the action square, so mass that a
/// plain kernel would spill past a bound folds back inside, matching the
/// fact that actions cannot leave the square. The normalized estimate is
/// blended with a uniform component of weight [`UNIFORM_MIXTURE`].
pub fn kde2d(samples: &[(f64, f64)], grid: &ActionGrid, method: &KdeMethod) -> Result<ActionDensity> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput { what: "samples" });
    }
    for (x, y) in samples {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite {
                what: "sample coordinate",
                value: if x.is_finite() { *y } else { *x },
            });
        }
    }
    let mut values = match method {
        KdeMethod::GaussianSilverman => {
            let h1 = silverman_bandwidth(samples.iter().map(|s| s.0), samples.len(), grid);
            let h2 = silverman_bandwidth(samples.iter().map(|s| s.1), samples.len(), grid);
            gaussian_grid(samples, grid, h1, h2)
        }
        KdeMethod::GaussianFixed { h1, h2 } => {
            for (what, h) in [("first bandwidth", h1), ("second bandwidth", h2)] {
                if !(h.is_finite() && *h > 0.0) {
                    return Err(Error::InvalidParameter {
                        what,
                        details: format!("must be finite and positive, got {h}"),
                    });
                }
            }
            gaussian_grid(samples, grid, *h1, *h2)
        }
        KdeMethod::Diffusion => diffusion::estimate(samples, grid),
    };
    // series estimates can ring below zero around sharp peaks; keep the
    // positive part so normalization is meaningful
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut density = ActionDensity::from_values(*grid, values)?;
    density.normalize()?;
    density.mix_uniform(UNIFORM_MIXTURE);
    density.floor();
    Ok(density)
}

fn silverman_bandwidth(values: impl Iterator<Item = f64>, count: usize, grid: &ActionGrid) -> f64 {
    let values: Vec<f64> = values.collect();
    let n = count as f64;
    let mut sd = 0.0;
    if count > 1 {
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        sd = var.sqrt();
    }
    (sd * n.powf(-1.0 / 6.0)).max(grid.spacing())
}

fn gaussian_grid(samples: &[(f64, f64)], grid: &ActionGrid, h1: f64, h2: f64) -> Vec<f64> {
    let n = grid.size;
    let nodes = grid.nodes();
    let bound = grid.bound;
    let kernel_matrix = |h: f64, pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let mut k = vec![0.0; n * samples.len()];
        for (s_idx, s) in samples.iter().enumerate() {
            let x = pick(s);
            let images = [x, 2.0 * bound - x, -2.0 * bound - x];
            for (i, node) in nodes.iter().enumerate() {
                let mut total = 0.0;
                for image in images {
                    let z = (node - image) / h;
                    total += (-0.5 * z * z).exp();
                }
                k[i * samples.len() + s_idx] = norm * total;
            }
        }
        k
    };
    let k1 = kernel_matrix(h1, |s| s.0);
    let k2 = kernel_matrix(h2, |s| s.1);
    let scale = 1.0 / samples.len() as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut total = 0.0;
            for s in 0..samples.len() {
                total += k1[i * samples.len() + s] * k2[j * samples.len() + s];
            }
            values[i * n + j] = scale * total;
        }
    }
    values
}

/// Candidate utility-weight values for each pilot. Combinations enumerate
/// the grid row-major with the first pilot's weight as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl Default for WeightGrid {
    fn default() -> Self {
        WeightGrid::from_range(0.80, 0.98, 0.02).expect("the built-in range is valid")
    }
}

impl WeightGrid {
    /// Evenly spaced values from `lo` to `hi` inclusive on both axes.
    pub fn from_range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && lo < hi) {
            return Err(Error::InvalidParameter {
                what: "weight range",
                details: format!("need finite lo < hi and positive step, got [{lo}, {hi}] by {step}"),
            });
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        let values: Vec<f64> = (0..count).map(|k| lo + step * k as f64).collect();
        Self::new(values.clone(), values)
    }

    pub fn new(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        for (what, axis) in [("first pilot weights", &w1), ("second pilot weights", &w2)] {
            if axis.is_empty() {
                return Err(Error::EmptyInput { what });
            }
            for v in axis {
                if !(v.is_finite() && *v > 0.0 && *v < 1.0) {
                    return Err(Error::InvalidParameter {
                        what,
                        details: format!("weights must lie strictly inside (0, 1), got {v}"),
                    });
                }
            }
            if axis.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::InvalidParameter {
                    what,
                    details: "weights must be strictly increasing".into(),
                });
            }
        }
        Ok(WeightGrid { w1, w2 })
    }

    pub fn len(&self) -> usize {
        self.w1.len() * self.w2.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn combos(&self) -> Vec<UtilityWeights> {
        let mut combos = Vec::with_capacity(self.len());
        for &w1 in &self.w1 {
            for &w2 in &self.w2 {
                combos.push(UtilityWeights { w1, w2 });
            }
        }
        combos
    }

    /// Index of the grid combination nearest to the given weights.
    pub fn nearest_combo(&self, weights: &UtilityWeights) -> usize {
        let nearest = |axis: &[f64], w: f64| {
            let mut best = 0;
            for (i, v) in axis.iter().enumerate() {
                if (v - w).abs() < (axis[best] - w).abs() {
                    best = i;
                }
            }
            best
        };
        nearest(&self.w1, weights.w1) * self.w2.len() + nearest(&self.w2, weights.w2)
    }
}

/// Everything that determines a family of simulated action densities.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig {
    pub fidelity: Fidelity,
    pub weight_grid: WeightGrid,
    pub action_grid: ActionGrid,
    pub method: KdeMethod,
    pub decision: DecisionConfig,
    pub seed: u64,
}

/// One action density per weight combination, all estimated from decisions
/// simulated on the same set of encounters.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFamily {
    pub fidelity: Fidelity,
    pub weight_grid: WeightGrid,
    pub combos: Vec<UtilityWeights>,
    pub densities: Vec<ActionDensity>,
    pub encounter_count: usize,
    pub seed: u64,
}

impl DensityFamily {
    pub fn from_parts(
        fidelity: Fidelity,
        weight_grid: WeightGrid,
        densities: Vec<ActionDensity>,
        encounter_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let combos = weight_grid.combos();
        if densities.len() != combos.len() {
            return Err(Error::LengthMismatch {
                what: "family densities",
                expected: combos.len(),
                actual: densities.len(),
            });
        }
        Ok(DensityFamily {
            fidelity,
            weight_grid,
            combos,
            densities,
            encounter_count,
            seed,
        })
    }

    pub fn density(&self, combo: usize) -> &ActionDensity {
        &self.densities[combo]
    }

    /// Shared grid geometry of every density in the family.
    pub fn action_grid(&self) -> &ActionGrid {
        self.densities[0].grid()
    }
}

/// Simulate the per-combination action samples and estimate their densities.
/// Each (combination, encounter) pair draws from its own derived stream, so
/// any single decision can be reproduced in isolation. With a cache
/// directory, previously computed densities are reloaded when their
/// fingerprint still matches the inputs, and refreshed otherwise.
pub fn build_density_family(
    config: &FamilyConfig,
    novel: &[Encounter],
    cache_dir: Option<&Path>,
) -> Result<DensityFamily> {
    config.action_grid.validate()?;
    config.decision.validate()?;
    if novel.is_empty() {
        return Err(Error::EmptyInput {
            what: "novel encounters",
        });
    }
    let combos = config.weight_grid.combos();
    let fingerprint = family_fingerprint(config, novel);
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut densities = Vec::with_capacity(combos.len());
    for (c, weights) in combos.iter().enumerate() {
        let path = cache_dir.map(|dir| dir.join(cache_file_name(config.fidelity, config.seed, c)));
        if let Some(path) = &path {
            if let Some(cached) = try_load_cached(path, config, c, weights, fingerprint, novel.len())
            {
                densities.push(cached);
                continue;
            }
        }
        let mut samples = Vec::with_capacity(novel.len());
        for (e, encounter) in novel.iter().enumerate() {
            let mut rng = stream(derive(
                config.seed,
                &[tag::COMBO, c as u64, tag::ENCOUNTER, e as u64],
            ));
            let action =
                joint_decision(encounter, weights, config.fidelity, &config.decision, &mut rng)?;
            samples.push((action.a1, action.a2));
        }
        let density = kde2d(&samples, &config.action_grid, &config.method)?;
        if let Some(path) = &path {
            save_cached(path, config, c, weights, fingerprint, novel.len(), &density)?;
        }
        densities.push(density);
    }
    DensityFamily::from_parts(
        config.fidelity,
        config.weight_grid.clone(),
        densities,
        novel.len(),
        config.seed,
    )
}

fn cache_file_name(fidelity: Fidelity, seed: u64, combo: usize) -> String {
    format!("{}-s{}-c{:03}.csv", fidelity.tag(), seed, combo)
}

fn cache_metadata(
    config: &FamilyConfig,
    combo: usize,
    weights: &UtilityWeights,
    fingerprint: u64,
    encounter_count: usize,
) -> String {
    format!(
        "# fidelity={} combo={} w1={} w2={} seed={} encounters={} grid={} bound={} method={} fingerprint={fingerprint:016x}",
        config.fidelity.tag(),
        combo,
        weights.w1,
        weights.w2,
        config.seed,
        encounter_count,
        config.action_grid.size,
        config.action_grid.bound,
        config.method.tag(),
    )
}

fn try_load_cached(
    path: &Path,
    config: &FamilyConfig,
    combo: usize,
    weights: &UtilityWeights,
    fingerprint: u64,
    encounter_count: usize,
) -> Option<ActionDensity> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let expected = cache_metadata(config, combo, weights, fingerprint, encounter_count);
    if lines.next()? != expected {
        log::debug!("stale density cache at {}", path.display());
        return None;
    }
    let size = config.action_grid.size;
    let mut values = Vec::with_capacity(size * size);
    for line in lines {
        values.push(line.parse().ok()?);
    }
    if values.len() != size * size {
        log::debug!("truncated density cache at {}", path.display());
        return None;
    }
    ActionDensity::from_values(config.action_grid, values).ok()
}

fn save_cached(
    path: &Path,
    config: &FamilyConfig,
    combo: usize,
    weights: &UtilityWeights,
    fingerprint: u64,
    encounter_count: usize,
    density: &ActionDensity,
) -> Result<()> {
    let mut text = cache_metadata(config, combo, weights, fingerprint, encounter_count);
    text.push('\n');
    for v in density.values() {
        writeln!(text, "{v:e}").expect("writing to a string cannot fail");
    }
    std::fs::write(path, text)?;
    Ok(())
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn update_f64(&mut self, v: f64) {
        self.update(&v.to_bits().to_le_bytes());
    }
}

/// FNV-1a hash of everything a cached density depends on besides the weight
/// combination: encounters, decision parameters, grid, estimation method and
/// mixture, seed.
fn family_fingerprint(config: &FamilyConfig, novel: &[Encounter]) -> u64 {
    let mut fnv = Fnv::new();
    for e in novel {
        for v in [e.s1.px, e.s1.py, e.s1.vx, e.s1.vy, e.s2.px, e.s2.py, e.s2.vx, e.s2.vy] {
            fnv.update_f64(v);
        }
    }
    fnv.update(&(config.decision.candidate_count as u64).to_le_bytes());
    fnv.update(&(config.decision.belief_count as u64).to_le_bytes());
    fnv.update_f64(config.decision.action_bound);
    fnv.update_f64(config.decision.horizon);
    match config.decision.distance_scale {
        DistanceScale::SeparationMultiple(m) => {
            fnv.update(b"sep");
            fnv.update_f64(m);
        }
        DistanceScale::Fixed(l) => {
            fnv.update(b"fix");
            fnv.update_f64(l);
        }
    }
    fnv.update(&(config.action_grid.size as u64).to_le_bytes());
    fnv.update_f64(config.action_grid.bound);
    fnv.update(config.method.tag().as_bytes());
    fnv.update_f64(UNIFORM_MIXTURE);
    fnv.update(config.fidelity.tag().as_bytes());
    fnv.update(&config.seed.to_le_bytes());
    fnv.0
}
