use serde::Serialize;

use super::{simulate_z_with, ControlFunction};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, par_replicates};
use crate::stats::{fit, Basis};

pub const MIN_COVERAGE_Z0: f64 = 50.0;
pub const MIN_COVERAGE_REPS: u64 = 1000;

/// Monte Carlo coverage probabilities `p(z0, z)` on a grid of states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageEstimate {
    pub z0: f64,
    pub grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Coverage from the reference start `2·z0` on the same grid.
    pub reference_p_hat: Vec<f64>,
    pub reference_stderr: Vec<f64>,
    /// `(a, α)` of `|p(z0, z) - p(2 z0, z)| ≈ a e^{-α (z0 - z)}`, fitted where
    /// the difference is resolved (above 3 pooled standard errors).
    pub exp_fit: Option<(f64, f64)>,
}

/// Fraction of `reps` paths from `z0` whose drift covers each grid point.
fn coverage(ctrl: &ControlFunction, z0: f64, grid: &[f64], reps: u64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let step = grid[1] - grid[0];
    let per_rep = par_replicates(reps, seed, |_, rng| {
        let mut gaps = Vec::new();
        simulate_z_with(ctrl, z0, rng, |z, y| gaps.push((z - y, z))).map(|_| gaps)
    });
    let mut hits = vec![0u64; grid.len()];
    for gaps in per_rep {
        let mut covered = vec![true; grid.len()];
        for (lo, hi) in gaps? {
            // grid points in (lo, hi]
            let first = ((lo / step).floor() as usize).saturating_sub(1);
            let last = ((hi / step).ceil() as usize + 1).min(grid.len() - 1);
            for k in first..=last {
                if grid[k] > lo && grid[k] <= hi {
                    covered[k] = false;
                }
            }
        }
        for (h, c) in hits.iter_mut().zip(covered) {
            *h += c as u64;
        }
    }
    let n = reps as f64;
    let p: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let se = p.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok((p, se))
}

/// Estimates coverage on `{0, step, 2 step, ...} ∪ {z0}` from `z0`, plus a
/// reference run from `2·z0` for the closeness fit.
pub fn estimate_coverage(
    ctrl: &ControlFunction,
    z0: f64,
    grid_step: f64,
    reps: u64,
    seed: u64,
) -> Result<CoverageEstimate> {
    if !(z0 >= MIN_COVERAGE_Z0) || !z0.is_finite() {
        return Err(Error::domain(format!("coverage needs z0 >= {MIN_COVERAGE_Z0}, got {z0}")));
    }
    if reps < MIN_COVERAGE_REPS {
        return Err(Error::config(format!("coverage needs reps >= {MIN_COVERAGE_REPS}, got {reps}")));
    }
    if !(grid_step > 0.0 && grid_step <= z0) {
        return Err(Error::domain(format!("grid step {grid_step} must lie in (0, z0]")));
    }
    let n = (z0 / grid_step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * grid_step).collect();
    if z0 - grid[n] > 1e-9 * z0 {
        grid.push(z0);
    } else {
        grid[n] = z0;
    }
    let (p_hat, stderr) = coverage(ctrl, z0, &grid, reps, seed)?;
    let (reference_p_hat, reference_stderr) = coverage(ctrl, 2.0 * z0, &grid, reps, derive_seed(seed, 1))?;

    let mut xs = Vec::new();
    let mut logs = Vec::new();
    for k in 0..grid.len() {
        let diff = (p_hat[k] - reference_p_hat[k]).abs();
        let pooled = stderr[k].hypot(reference_stderr[k]);
        if diff > 3.0 * pooled && diff > 0.0 {
            xs.push(z0 - grid[k]);
            logs.push(diff.ln());
        }
    }
    let exp_fit = if xs.len() >= 10 {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        fit(&xs, &logs, &[Basis::Const, Basis::Linear], (lo, hi))
            .ok()
            .map(|m| (m.coefficients[0].exp(), -m.coefficients[1]))
    } else {
        None
    };
    Ok(CoverageEstimate { z0, grid, p_hat, stderr, reference_p_hat, reference_stderr, exp_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_always_covered() {
        let c = estimate_coverage(&ControlFunction::theta0(), 50.0, 0.5, 1000, 4).unwrap();
        assert_eq!(c.p_hat[0], 1.0);
        assert_eq!(*c.p_hat.last().unwrap(), 1.0);
        assert_eq!(*c.grid.last().unwrap(), 50.0);
        assert!(c.p_hat.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn trailing_start_is_appended() {
        let c = estimate_coverage(&ControlFunction::theta0(), 50.2, 0.5, 1000, 4).unwrap();
        assert_eq!(*c.grid.last().unwrap(), 50.2);
        assert_eq!(*c.p_hat.last().unwrap(), 1.0);
    }

    #[test]
    fn preconditions() {
        let c = ControlFunction::theta0();
        assert!(matches!(estimate_coverage(&c, 40.0, 1.0, 1000, 0), Err(Error::Domain(_))));
        assert!(matches!(estimate_coverage(&c, 60.0, 1.0, 999, 0), Err(Error::Config(_))));
    }
}
