//! The optimality equation in the size variable `z = sqrt(t)`:
//!
//! ```text
//! u'(z) = 4 ∫_0^{θ*(z)} (u(z-y) + 1 - u(z)) (1 - y/z) dy,   u(0) = 0,
//! ```
//!
//! where `θ*(z) = z` while `u(z) <= 1` and otherwise solves
//! `u(z-y) + 1 - u(z) = 0`. Also hosts the record-count function `Ein`,
//! the comparison operator `I`, and the expansion diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integro::{self, Problem, Source, Threshold};
use crate::quad::{adaptive_simpson, bisect};
use crate::stats::{self, Basis, FitModel};
use crate::SQRT_2;

/// Default grid step of the value solve.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default right end of the value solve.
pub const DEFAULT_Z_MAX: f64 = 300.0;

/// Drift allowed in the `c + d/z` plateau across a fit window.
pub const PLATEAU_TOLERANCE: f64 = 1e-3;

/// Discretized solution of the optimality equation on `z_i = i·h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGrid {
    pub z_max: f64,
    pub h: f64,
    /// `u(z_i) = v(z_i^2)`.
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
    /// Optimal threshold `θ*(z_i)`; `theta_star[0] = 0`.
    pub theta_star: Vec<f64>,
    pub c_star_estimate: f64,
}

impl ValueGrid {
    /// Assembles a grid from nodal arrays (e.g. read back from CSV).
    pub fn from_parts(h: f64, u: Vec<f64>, u_prime: Vec<f64>, theta_star: Vec<f64>) -> Result<Self> {
        if u.len() < 2 || u.len() != u_prime.len() || u.len() != theta_star.len() {
            return Err(Error::domain("grid arrays must share a length of at least 2"));
        }
        if !(h > 0.0) {
            return Err(Error::domain(format!("grid step {h} must be positive")));
        }
        let z_max = (u.len() - 1) as f64 * h;
        let mut grid = ValueGrid { z_max, h, u, u_prime, theta_star, c_star_estimate: f64::NAN };
        grid.c_star_estimate = grid.plateau_constant();
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn z_values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.z(i)).collect()
    }

    fn check_range(&self, z: f64) -> Result<()> {
        if !(z >= 0.0) || z > self.z_max * (1.0 + 1e-12) {
            return Err(Error::Range { what: "z", value: z, limit: self.z_max });
        }
        Ok(())
    }

    /// Linearly interpolated value `u(z)`.
    pub fn u_at(&self, z: f64) -> Result<f64> {
        self.check_range(z)?;
        Ok(integro::interp(&self.u, self.h, z))
    }

    /// Linearly interpolated threshold `θ*(z)`.
    pub fn theta_at(&self, z: f64) -> Result<f64> {
        self.check_range(z)?;
        Ok(integro::interp(&self.theta_star, self.h, z))
    }

    /// Size variable at which `u` first exceeds 1 (end of the greedy regime).
    pub fn greedy_switch_z(&self) -> Option<f64> {
        let j = self.u.iter().position(|&v| v > 1.0)?;
        let (a, b) = (self.u[j - 1], self.u[j]);
        Some(self.z(j - 1) + self.h * (1.0 - a) / (b - a))
    }

    /// Constant `c` of a `c + d/z` fit to `u - sqrt(2) z + log(z)/6` over the
    /// upper half of the grid.
    fn plateau_constant(&self) -> f64 {
        let window = (0.5 * self.z_max, self.z_max);
        plateau_fit(self, window).map(|m| m.coefficients[0]).unwrap_or(f64::NAN)
    }
}

/// Coefficients of `a z + b log z + c + d/z` describing the large-`z` value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub fit_window: (f64, f64),
    pub residual_max: f64,
}

/// Entire exponential integral `Ein(t) = ∫_0^t (1 - e^{-s})/s ds`, the mean
/// number of records over horizon `t`.
pub fn ein(t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("Ein requires finite t >= 0, got {t}")));
    }
    let integrand = |s: f64| if s == 0.0 { 1.0 } else { -(-s).exp_m1() / s };
    Ok(adaptive_simpson(integrand, 0.0, t, 1e-12))
}

/// Solves the optimality equation on `[0, z_max]` with step `h`.
pub fn solve_value(z_max: f64, h: f64) -> Result<ValueGrid> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::domain(format!("step h = {h} must lie in (0, 0.01]")));
    }
    if !(z_max >= 10.0) || !z_max.is_finite() {
        return Err(Error::domain(format!("z_max = {z_max} must be at least 10")));
    }
    let steps_f = z_max / h;
    let steps = steps_f.round();
    if (steps_f - steps).abs() > 1e-9 * steps {
        return Err(Error::domain(format!("z_max / h = {steps_f} is not an integer")));
    }
    let problem = Problem {
        h,
        steps: steps as usize,
        threshold: Threshold::Optimal,
        source: Source::Unit,
    };
    let sol = problem.solve()?;
    ValueGrid::from_parts(h, sol.w, sol.slope, sol.theta).map(|mut g| {
        g.z_max = z_max;
        g
    })
}

/// Applies the comparison operator
/// `Ig(z) = 4 ∫_0^z (g(z-y) + 1 - g(z))_+ (1 - y/z) dy`.
///
/// Positive stretches of the integrand are located on a coarse scan and
/// their endpoints refined by bisection, so each quadrature piece is smooth.
pub fn apply_i<G: Fn(f64) -> f64>(g: G, z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("operator I needs z > 0, got {z}")));
    }
    let gz = g(z);
    if !gz.is_finite() {
        return Err(Error::domain(format!("g({z}) is not finite")));
    }
    let f = |y: f64| g(z - y) + 1.0 - gz;
    const SCAN: usize = 256;
    let ys: Vec<f64> = (0..=SCAN).map(|k| z * k as f64 / SCAN as f64).collect();
    let fs: Vec<f64> = ys.iter().map(|&y| f(y)).collect();
    if let Some(k) = fs.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(format!("g({}) is not finite", z - ys[k])));
    }
    let tol = 1e-15 * z.max(1.0);
    let mut pieces = Vec::new();
    let mut start = if fs[0] > 0.0 { Some(0.0) } else { None };
    for k in 0..SCAN {
        let (a, b) = (fs[k] > 0.0, fs[k + 1] > 0.0);
        if a != b {
            let root = bisect(f, ys[k], ys[k + 1], tol);
            if a {
                pieces.push((start.take().unwrap_or(ys[k]), root));
            } else {
                start = Some(root);
            }
        }
    }
    if let Some(s) = start {
        pieces.push((s, z));
    }
    let integrand = |y: f64| f(y).max(0.0) * (1.0 - y / z);
    let total: f64 = pieces
        .iter()
        .map(|&(a, b)| adaptive_simpson(integrand, a, b, 1e-14))
        .sum();
    Ok(4.0 * total)
}

/// Test functions for the comparison argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComparisonFunction {
    /// `α z`
    Linear { alpha: f64 },
    /// `sqrt(2) z + α log(z + 1)`
    Log { alpha: f64 },
    /// `sqrt(2) z - log(z + 1)/6 + α/(z + 1)`
    Refined { alpha: f64 },
}

impl ComparisonFunction {
    /// Coefficient making the log test function match to `O(z^-2)`.
    pub const LOG_MATCH: f64 = -1.0 / 6.0;

    /// Coefficient making the refined test function match to `O(z^-3)`.
    pub fn refined_match() -> f64 {
        1.0 / 6.0 + SQRT_2 / 144.0
    }

    pub fn value(&self, z: f64) -> f64 {
        match *self {
            ComparisonFunction::Linear { alpha } => alpha * z,
            ComparisonFunction::Log { alpha } => SQRT_2 * z + alpha * (z + 1.0).ln(),
            ComparisonFunction::Refined { alpha } => {
                SQRT_2 * z - (z + 1.0).ln() / 6.0 + alpha / (z + 1.0)
            }
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            ComparisonFunction::Linear { alpha } => alpha,
            ComparisonFunction::Log { alpha } => SQRT_2 + alpha / (z + 1.0),
            ComparisonFunction::Refined { alpha } => {
                SQRT_2 - 1.0 / (6.0 * (z + 1.0)) - alpha / ((z + 1.0) * (z + 1.0))
            }
        }
    }

    /// `g'(z) - Ig(z)`; positive means `u - g` stays bounded above.
    pub fn comparison_gap(&self, z: f64) -> Result<f64> {
        Ok(self.derivative(z) - apply_i(|x| self.value(x), z)?)
    }
}

fn plateau_data(grid: &ValueGrid) -> (Vec<f64>, Vec<f64>) {
    let z = grid.z_values();
    let p = z
        .iter()
        .zip(&grid.u)
        .map(|(&z, &u)| if z > 0.0 { u - SQRT_2 * z + z.ln() / 6.0 } else { f64::NAN })
        .collect();
    (z, p)
}

fn plateau_fit(grid: &ValueGrid, window: (f64, f64)) -> Result<FitModel> {
    let (z, p) = plateau_data(grid);
    stats::fit(&z, &p, &[Basis::Const, Basis::Inverse], window)
}

/// Expansion `u ≈ sqrt(2) z - log(z)/6 + c + d/z` on `fit_window` with the
/// two leading coefficients held at their asymptotic values.
pub fn expansion_residuals(grid: &ValueGrid, fit_window: (f64, f64)) -> Result<ExpansionFit> {
    let (lo, hi) = fit_window;
    if lo < 20.0 || hi > grid.z_max * (1.0 + 1e-12) || hi - lo < 50.0 {
        return Err(Error::domain(format!(
            "fit window [{lo}, {hi}] must lie in [20, {}] and span at least 50",
            grid.z_max
        )));
    }
    let model = plateau_fit(grid, fit_window)?;
    if model.residual_max > PLATEAU_TOLERANCE {
        return Err(Error::Plateau { drift: model.residual_max, tolerance: PLATEAU_TOLERANCE });
    }
    Ok(ExpansionFit {
        a: SQRT_2,
        b: -1.0 / 6.0,
        c: model.coefficients[0],
        d: model.coefficients[1],
        fit_window,
        residual_max: model.residual_max,
    })
}

/// Free fit of `u` against `{z, log z, 1}` on `window`.
pub fn free_log_fit(grid: &ValueGrid, window: (f64, f64)) -> Result<FitModel> {
    stats::fit(&grid.z_values(), &grid.u, &[Basis::Linear, Basis::Log, Basis::Const], window)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Power series oracle: Ein(t) = Σ_{k≥1} (-1)^{k+1} t^k / (k · k!)
    fn ein_series(t: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= t / k as f64;
            let add = if k % 2 == 1 { term / k as f64 } else { -term / k as f64 };
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn ein_values() {
        assert_eq!(ein(0.0).unwrap(), 0.0);
        let e1 = ein_series(1.0);
        let e5 = ein_series(5.0);
        assert!((e1 - 0.7966000).abs() < 1e-6);
        assert!((e5 - 2.1878100).abs() < 1e-5);
        assert!((ein(1.0).unwrap() - e1).abs() < 1e-10);
        assert!((ein(5.0).unwrap() - e5).abs() < 1e-10);
    }

    #[test]
    fn ein_large_t_matches_log_identity() {
        // Ein(t) = log t + γ + E1(t), and E1(40) < 1e-19
        let euler = 0.577_215_664_901_532_9;
        let t: f64 = 40.0;
        assert!((ein(t).unwrap() - (t.ln() + euler)).abs() < 1e-9);
    }

    #[test]
    fn ein_rejects_bad_input() {
        assert!(matches!(ein(-1.0), Err(Error::Domain(_))));
        assert!(ein(f64::NAN).is_err());
        assert!(ein(f64::INFINITY).is_err());
    }

    #[test]
    fn solve_value_validates_inputs() {
        assert!(solve_value(5.0, 1e-3).is_err());
        assert!(solve_value(20.0, 0.1).is_err());
        assert!(solve_value(10.0, 0.003).is_err());
    }

    #[test]
    fn small_grid_invariants() {
        let g = solve_value(20.0, 1e-3).unwrap();
        assert_eq!(g.u[0], 0.0);
        for i in 1..g.len() {
            let z = g.z(i);
            assert!(g.u[i] > g.u[i - 1]);
            assert!(g.u_prime[i] >= 0.0);
            assert!(g.theta_star[i] > 0.0 && g.theta_star[i] <= z);
            if g.u[i] <= 1.0 {
                assert_eq!(g.theta_star[i], z);
            } else {
                let resid = g.u_at(z - g.theta_star[i]).unwrap() + 1.0 - g.u[i];
                assert!(resid.abs() < 1e-9);
            }
            assert!(g.u[i] < SQRT_2 * z);
        }
    }

    #[test]
    fn greedy_regime_follows_ein() {
        let g = solve_value(10.0, 1e-3).unwrap();
        assert!((g.u_at(1.0).unwrap() - 0.79660).abs() < 1e-4);
        for i in (0..=1140).step_by(10) {
            let z = g.z(i);
            assert!((g.u[i] - ein(z * z).unwrap()).abs() < 1e-4, "z = {z}");
        }
        let t_switch = g.greedy_switch_z().unwrap().powi(2);
        assert!((t_switch - 1.345).abs() < 0.01, "{t_switch}");
    }

    #[test]
    fn refinement_is_second_order() {
        let coarse = solve_value(10.0, 4e-3).unwrap();
        let fine = solve_value(10.0, 2e-3).unwrap();
        let diff = (coarse.u.last().unwrap() - fine.u.last().unwrap()).abs();
        assert!(diff < 10.0 * 4e-3 * 4e-3, "{diff}");
    }

    #[test]
    fn operator_on_zero_function() {
        assert!((apply_i(|_| 0.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn operator_on_linear_function_tends_to_sqrt2() {
        let g = ComparisonFunction::Linear { alpha: SQRT_2 };
        let v = apply_i(|z| g.value(z), 100.0).unwrap();
        assert!((v - SQRT_2).abs() < 1e-2);
    }

    #[test]
    fn operator_rejects_bad_input() {
        assert!(apply_i(|_| 0.0, 0.0).is_err());
        assert!(apply_i(|z| if z < 0.5 { f64::NAN } else { z }, 1.0).is_err());
    }

    #[test]
    fn refined_test_function_matches_to_third_order() {
        let g = ComparisonFunction::Refined { alpha: ComparisonFunction::refined_match() };
        let scaled: Vec<f64> = [50.0, 75.0, 100.0, 150.0, 200.0]
            .iter()
            .map(|&z: &f64| g.comparison_gap(z).unwrap() * z.powi(3))
            .collect();
        for s in &scaled {
            assert!(s.abs() < 5.0, "{scaled:?}");
        }
    }

    #[test]
    fn log_test_functions_sandwich_the_value() {
        for k in 0..=30 {
            let z = 50.0 + 10.0 * k as f64;
            let above = ComparisonFunction::Log { alpha: ComparisonFunction::LOG_MATCH + 0.05 };
            let below = ComparisonFunction::Log { alpha: ComparisonFunction::LOG_MATCH - 0.05 };
            assert!(above.comparison_gap(z).unwrap() > 0.0, "z = {z}");
            assert!(below.comparison_gap(z).unwrap() < 0.0, "z = {z}");
        }
    }

    #[test]
    fn exact_model_is_recovered() {
        let h = 1e-2;
        let n = 30_000;
        let u: Vec<f64> = (0..=n)
            .map(|i| {
                let z = i as f64 * h;
                if i == 0 { 0.0 } else { SQRT_2 * z - z.ln() / 6.0 + 1.0 }
            })
            .collect();
        let g = ValueGrid::from_parts(h, u, vec![0.0; n + 1], vec![0.0; n + 1]).unwrap();
        let fit = expansion_residuals(&g, (100.0, 300.0)).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-10);
        assert!(fit.d.abs() < 1e-8);
        let free = free_log_fit(&g, (100.0, 300.0)).unwrap();
        assert!((free.coefficients[0] - SQRT_2).abs() < 1e-10);
        assert!((free.coefficients[1] + 1.0 / 6.0).abs() < 1e-9);
        assert!((free.coefficients[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn expansion_window_validation() {
        let g = solve_value(20.0, 1e-2).unwrap();
        assert!(matches!(expansion_residuals(&g, (10.0, 20.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn drifting_plateau_is_reported() {
        let h = 1e-2;
        let n = 30_000;
        let u: Vec<f64> = (0..=n).map(|i| 1.5 * i as f64 * h).collect();
        let g = ValueGrid::from_parts(h, u, vec![0.0; n + 1], vec![0.0; n + 1]).unwrap();
        assert!(matches!(expansion_residuals(&g, (100.0, 300.0)), Err(Error::Plateau { .. })));
    }
}
