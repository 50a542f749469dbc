//! Diffusion smoothing of a binned sample on the fixed action square.
//!
//! The samples are binned onto the grid, transformed with a type-II discrete
//! cosine transform, decayed by the heat kernel for an automatically chosen
//! smoothing time, and the resulting cosine series is evaluated back at the
//! grid nodes. Working in the cosine basis makes the square's edges
//! reflecting, so no probability mass leaks out of the domain. The smoothing
//! time solves a fixed-point equation driven by plug-in estimates of the
//! density's curvature functionals, with a separate time per axis so an
//! elongated sample cloud is smoothed anisotropically; degenerate inputs
//! where the plug-in estimates collapse fall back to one grid cell of
//! smoothing.

use super::ActionGrid;
use std::collections::HashMap;
use std::f64::consts::PI;

pub(super) fn estimate(samples: &[(f64, f64)], grid: &ActionGrid) -> Vec<f64> {
    let n = grid.size;
    let count = samples.len() as f64;
    let bound = grid.bound;

    // bin onto n x n cells of the unit square, total mass one
    let mut hist = vec![0.0; n * n];
    for (x, y) in samples {
        let u = (x + bound) / (2.0 * bound);
        let v = (y + bound) / (2.0 * bound);
        let i = ((u * n as f64).floor() as usize).min(n - 1);
        let j = ((v * n as f64).floor() as usize).min(n - 1);
        hist[i * n + j] += 1.0 / count;
    }

    let coeffs = dct2(&hist, n);
    let functionals = Functionals::new(&coeffs, n, count);

    let fallback = (grid.spacing() / (2.0 * bound)).powi(2);
    let t_star = solve_time(&functionals, samples.len());
    let (t_row, t_col) = functionals
        .axis_times(t_star)
        .unwrap_or((fallback, fallback));
    let t_row = if t_row.is_finite() && t_row > 0.0 { t_row } else { fallback };
    let t_col = if t_col.is_finite() && t_col > 0.0 { t_col } else { fallback };

    // decay each coefficient by the heat kernel at its axis times
    let mut smoothed = coeffs;
    for r in 0..n {
        let decay_r = (-((r * r) as f64) * PI * PI * t_row / 2.0).exp();
        for c in 0..n {
            let decay_c = (-((c * c) as f64) * PI * PI * t_col / 2.0).exp();
            smoothed[r * n + c] *= decay_r * decay_c;
        }
    }

    // evaluate the cosine series at the inclusive grid nodes and rescale
    // from the unit square to the action square
    let step = 1.0 / (n - 1) as f64;
    let mut basis = vec![0.0; n * n];
    for (i, row) in basis.chunks_exact_mut(n).enumerate() {
        let u = i as f64 * step;
        for (k, value) in row.iter_mut().enumerate() {
            *value = (PI * k as f64 * u).cos();
        }
    }
    let area = (2.0 * bound) * (2.0 * bound);
    let mut values = vec![0.0; n * n];
    let mut partial = vec![0.0; n];
    for i in 0..n {
        for (c, p) in partial.iter_mut().enumerate() {
            let mut total = 0.0;
            for r in 0..n {
                total += basis[i * n + r] * smoothed[r * n + c];
            }
            *p = total;
        }
        for j in 0..n {
            let mut total = 0.0;
            for (c, p) in partial.iter().enumerate() {
                total += p * basis[j * n + c];
            }
            values[i * n + j] = total / area;
        }
    }
    values
}

/// Type-II DCT along both axes with weights 1 on the constant term and 2 on
/// the rest, so the zeroth coefficient equals the total mass and the series
/// inverts as a plain cosine sum.
fn dct2(data: &[f64], n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n * n];
    for (k, row) in table.chunks_exact_mut(n).enumerate() {
        let c = if k == 0 { 1.0 } else { 2.0 };
        for (j, value) in row.iter_mut().enumerate() {
            *value = c * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let mut total = 0.0;
            for j in 0..n {
                total += table[k * n + j] * data[i * n + j];
            }
            rows[i * n + k] = total;
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for c in 0..n {
            let mut total = 0.0;
            for i in 0..n {
                total += table[k * n + i] * rows[i * n + c];
            }
            out[k * n + c] = total;
        }
    }
    out
}

/// Plug-in curvature functionals of the binned density, evaluated from the
/// squared cosine coefficients.
struct Functionals {
    coeff_sq: Vec<f64>,
    n: usize,
    count: f64,
}

impl Functionals {
    fn new(coeffs: &[f64], n: usize, count: f64) -> Self {
        Functionals {
            coeff_sq: coeffs.iter().map(|a| a * a).collect(),
            n,
            count,
        }
    }

    /// Weighted coefficient sum estimating the squared L2 norm of the
    /// density derivative of order `s = (s1, s2)` after diffusion time `t`.
    fn norm(&self, s: (u32, u32), t: f64) -> f64 {
        let n = self.n;
        let weights = |power: u32| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let k2 = (k * k) as f64;
                    let base = (-k2 * PI * PI * t).exp() * if k == 0 { 1.0 } else { 0.5 };
                    base * k2.powi(power as i32)
                })
                .collect()
        };
        let col_w = weights(s.0);
        let row_w = weights(s.1);
        let mut total = 0.0;
        for (r, wr) in row_w.iter().enumerate() {
            if *wr == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for (c, wc) in col_w.iter().enumerate() {
                row += wc * self.coeff_sq[r * n + c];
            }
            total += wr * row;
        }
        let order = (s.0 + s.1) as i32;
        (-1.0f64).powi(order) * total * PI.powi(2 * order)
    }

    /// The reference-rule time for estimating the order-`s` functional, fed
    /// by the next-higher functionals, recursing until the order is high
    /// enough to use the supplied time directly. Every functional of one
    /// derivative order feeds two of the next, so the memo table keeps the
    /// recursion linear in the number of distinct orders.
    fn plugin(&self, s: (u32, u32), t: f64, memo: &mut HashMap<(u32, u32), f64>) -> f64 {
        if let Some(v) = memo.get(&s) {
            return *v;
        }
        let value = if s.0 + s.1 > 4 {
            self.norm(s, t)
        } else {
            let higher =
                self.plugin((s.0 + 1, s.1), t, memo) + self.plugin((s.0, s.1 + 1), t, memo);
            let order = s.0 + s.1;
            let constant = (1.0 + 0.5f64.powi(order as i32 + 1)) / 3.0;
            let base = -2.0 * constant * gaussian_moment(s.0) * gaussian_moment(s.1)
                / (self.count * higher);
            if !(base.is_finite() && base > 0.0) {
                self.norm(s, t)
            } else {
                self.norm(s, base.powf(1.0 / (2.0 + order as f64)))
            }
        };
        memo.insert(s, value);
        value
    }

    /// Residual of the fixed-point equation for the overall smoothing time.
    fn residual(&self, t: f64) -> f64 {
        let memo = &mut HashMap::new();
        let total = self.plugin((0, 2), t, memo)
            + self.plugin((2, 0), t, memo)
            + 2.0 * self.plugin((1, 1), t, memo);
        if !(total.is_finite() && total > 0.0) {
            return f64::NAN;
        }
        t - (2.0 * PI * self.count * total).powf(-1.0 / 3.0)
    }

    /// Split the overall time into per-axis times using the relative sizes
    /// of the curvature functionals along each axis.
    fn axis_times(&self, t_star: f64) -> Option<(f64, f64)> {
        let memo = &mut HashMap::new();
        let p20 = self.plugin((2, 0), t_star, memo);
        let p02 = self.plugin((0, 2), t_star, memo);
        let p11 = self.plugin((1, 1), t_star, memo);
        let denom = p11 + (p20 * p02).sqrt();
        if !(denom.is_finite() && denom > 0.0 && p20 > 0.0 && p02 > 0.0) {
            return None;
        }
        let shared = 4.0 * PI * self.count * denom;
        let t_row = (p20.powf(0.75) / (p02.powf(0.75) * shared)).powf(1.0 / 3.0);
        let t_col = (p02.powf(0.75) / (p20.powf(0.75) * shared)).powf(1.0 / 3.0);
        Some((t_row, t_col))
    }
}

/// Expected value of the `2s`-th derivative functional of a standard
/// Gaussian: `(-1)^s (2s-1)!! / sqrt(2 pi)`.
fn gaussian_moment(s: u32) -> f64 {
    let mut double_factorial = 1.0;
    let mut k = 1;
    while k + 1 < 2 * s {
        k += 2;
        double_factorial *= k as f64;
    }
    (-1.0f64).powi(s as i32) * double_factorial / (2.0 * PI).sqrt()
}

/// Find the smoothing time: bisect the residual on a growing bracket, and
/// when no sign change appears, minimize the absolute residual instead.
fn solve_time(functionals: &Functionals, sample_count: usize) -> f64 {
    let n = (sample_count as f64).clamp(50.0, 1050.0);
    let mut upper = 1e-12 + 0.01 * (n - 50.0) / 1000.0;
    loop {
        let f_low = functionals.residual(0.0);
        let f_high = functionals.residual(upper);
        if f_low.is_finite() && f_high.is_finite() && (f_low <= 0.0) != (f_high <= 0.0) {
            let (mut lo, mut hi) = (0.0, upper);
            let low_sign = f_low <= 0.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let f_mid = functionals.residual(mid);
                if !f_mid.is_finite() {
                    break;
                }
                if (f_mid <= 0.0) == low_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        if upper >= 0.1 {
            let mut best = (f64::INFINITY, 0.01);
            for k in 1..=200 {
                let t = 0.1 * k as f64 / 200.0;
                let r = functionals.residual(t).abs();
                if r < best.0 {
                    best = (r, t);
                }
            }
            return best.1;
        }
        upper = (upper * 2.0).min(0.1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_zeroth_coefficient_is_the_total_mass() {
        let n = 8;
        let mut data = vec![0.0; n * n];
        data[3 * n + 5] = 0.7;
        data[0] = 0.3;
        let coeffs = dct2(&data, n);
        assert!((coeffs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_histogram_has_no_higher_coefficients() {
        let n = 16;
        let data = vec![1.0 / (n * n) as f64; n * n];
        let coeffs = dct2(&data, n);
        assert!((coeffs[0] - 1.0).abs() < 1e-12);
        for (idx, c) in coeffs.iter().enumerate().skip(1) {
            assert!(c.abs() < 1e-12, "coefficient {idx} = {c}");
        }
    }

    #[test]
    fn gaussian_moments_match_hand_values() {
        let root = (2.0 * PI).sqrt();
        assert!((gaussian_moment(0) - 1.0 / root).abs() < 1e-15);
        assert!((gaussian_moment(1) + 1.0 / root).abs() < 1e-15);
        assert!((gaussian_moment(2) - 3.0 / root).abs() < 1e-15);
        assert!((gaussian_moment(3) + 15.0 / root).abs() < 1e-15);
    }

    #[test]
    fn uniform_samples_smooth_to_a_flat_series() {
        let grid = ActionGrid {
            size: 32,
            bound: 1.0,
        };
        let mut samples = Vec::new();
        // one sample at every cell center: the binned histogram is constant
        for i in 0..32 {
            for j in 0..32 {
                let x = -1.0 + (2.0 * i as f64 + 1.0) / 32.0;
                let y = -1.0 + (2.0 * j as f64 + 1.0) / 32.0;
                samples.push((x, y));
            }
        }
        let values = estimate(&samples, &grid);
        for v in &values {
            assert!((v - 0.25).abs() < 1e-9, "value {v}");
        }
    }
}
