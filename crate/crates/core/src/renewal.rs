//! Renewal comparison of the jump process.
//!
//! Reading `Z|z` from the top, `[0, z]` splits into cycles: a drift interval
//! `D_z` followed by the gap `J_{z - D_z}` of the next jump. As `z → ∞` the
//! cycle length converges to `H = E/(2 sqrt 2) + U/sqrt 2`, with `E`
//! exponential and `U` uniform, so the jump count behaves like the renewal
//! count of `H` (mean `1/sqrt 2`, variance `1/6`).

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pdmp::{jump_size, ControlFunction};
use crate::quad::{adaptive_simpson, bisect};
use crate::rng::par_replicates;
use crate::{FRAC_1_SQRT_2, SQRT_2};

/// Mean of the limiting cycle step `H`.
pub const STEP_MEAN: f64 = FRAC_1_SQRT_2;
/// Variance of `H`.
pub const STEP_VARIANCE: f64 = 1.0 / 6.0;

const HAZARD_CELL: f64 = 0.05;
const HAZARD_TOL: f64 = 1e-12;
const DRIFT_TOL: f64 = 1e-10;

/// `σ μ^{-3/2}`, the scale of the jump-count fluctuations per `sqrt(z)`.
pub fn clt_scale() -> f64 {
    STEP_VARIANCE.sqrt() * STEP_MEAN.powf(-1.5)
}

/// Cycle laws at a fixed right endpoint `z`, with the integrated hazard of
/// the drift tabulated on cells of width 0.05.
#[derive(Debug, Clone)]
pub struct CycleDistributions {
    pub ctrl: ControlFunction,
    pub z: f64,
    /// `Λ(k·cell) = ∫_{z - k·cell}^z 4λ`; the last entry is at `y = z`.
    cumulative: Vec<f64>,
}

impl CycleDistributions {
    pub fn new(ctrl: ControlFunction, z: f64) -> Result<Self> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(format!("cycle endpoint z = {z} must be positive")));
        }
        let limit = ctrl.domain_max();
        if z > limit * (1.0 + 1e-12) {
            return Err(Error::Range { what: "z", value: z, limit });
        }
        let n = (z / HAZARD_CELL).ceil() as usize;
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        let mut cd = CycleDistributions { ctrl, z, cumulative: Vec::new() };
        for k in 0..n {
            let lo = k as f64 * HAZARD_CELL;
            let hi = ((k + 1) as f64 * HAZARD_CELL).min(z);
            acc += adaptive_simpson(|y| cd.rate(z - y), lo, hi, HAZARD_TOL);
            cumulative.push(acc);
        }
        if !acc.is_finite() {
            return Err(Error::domain(format!("control {} has a non-finite hazard below z = {z}", cd.ctrl.label())));
        }
        cd.cumulative = cumulative;
        Ok(cd)
    }

    /// Jump rate `4λ(x)`.
    fn rate(&self, x: f64) -> f64 {
        4.0 * self.ctrl.lambda(x.max(0.0)).unwrap_or(f64::NAN)
    }

    /// Integrated hazard `Λ(y) = ∫_{z-y}^z 4λ` of the drift length.
    pub fn integrated_hazard(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.z);
        let k = ((y / HAZARD_CELL).floor() as usize).min(self.cumulative.len() - 1);
        let lo = k as f64 * HAZARD_CELL;
        self.cumulative[k] + adaptive_simpson(|s| self.rate(self.z - s), lo, y, HAZARD_TOL)
    }

    /// `P(D_z > y) = exp(-Λ(y))`.
    pub fn drift_survival(&self, y: f64) -> f64 {
        (-self.integrated_hazard(y)).exp()
    }

    /// Drift length solving `Λ(d) = e`, or `z` when the drift reaches 0.
    pub fn drift_for(&self, e: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        if e >= total {
            return self.z;
        }
        let k = self.cumulative.partition_point(|&c| c <= e) - 1;
        let lo = k as f64 * HAZARD_CELL;
        let hi = ((k + 1) as f64 * HAZARD_CELL).min(self.z);
        let base = self.cumulative[k];
        bisect(
            |y| base + adaptive_simpson(|s| self.rate(self.z - s), lo, y, HAZARD_TOL) - e,
            lo,
            hi,
            DRIFT_TOL,
        )
    }

    pub fn sample_drift<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.drift_for(rng.sample(Exp1))
    }

    /// Gap of the jump at state `x`, zero when `x <= 0`.
    pub fn sample_gap<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let lam = self.ctrl.lambda(x)?;
        let f = 1.0 - rng.random::<f64>();
        Ok(jump_size(x, lam, f).min(self.ctrl.theta(x)?))
    }

    /// One cycle `(d, j)`: drift from `z`, then the gap at `z - d`.
    pub fn sample_cycle<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        let d = self.sample_drift(rng);
        let j = self.sample_gap(self.z - d, rng)?;
        Ok((d, j))
    }
}

/// `H = E/(2 sqrt 2) + U/sqrt 2`.
pub fn sample_h<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    let u: f64 = rng.random();
    e / (2.0 * SQRT_2) + u * FRAC_1_SQRT_2
}

/// Exact CDF of `H`: `m - e^{-2 sqrt 2 x} (e^{2m} - 1)/2` with `m = min(1, sqrt 2 x)`.
pub fn h_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let m = (SQRT_2 * x).min(1.0);
    m - (-2.0 * SQRT_2 * x).exp() * (2.0 * m).exp_m1() / 2.0
}

/// `max{n : H_1 + ... + H_n <= z}`.
pub fn renewal_count<R: Rng + ?Sized>(z: f64, rng: &mut R) -> Result<u64> {
    renewal_count_scaled(z, 1.0, rng)
}

/// Renewal count at level `z` for the step `scale · H`.
pub fn renewal_count_scaled<R: Rng + ?Sized>(z: f64, scale: f64, rng: &mut R) -> Result<u64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("renewal level z = {z} must be finite and >= 0")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!("step scale {scale} must be positive")));
    }
    let mut sum = 0.0;
    let mut n = 0;
    loop {
        sum += scale * sample_h(rng);
        if sum > z {
            return Ok(n);
        }
        n += 1;
    }
}

/// `(count - z/μ) / (σ μ^{-3/2} sqrt z)` per sample.
pub fn clt_statistic(counts: &[f64], z: f64) -> Result<Vec<f64>> {
    if !(z >= 100.0) || !z.is_finite() {
        return Err(Error::domain(format!("CLT statistic needs z >= 100, got {z}")));
    }
    let centre = z / STEP_MEAN;
    let scale = clt_scale() * z.sqrt();
    Ok(counts.iter().map(|&n| (n - centre) / scale).collect())
}

/// Comparison at one empirical quantile of the truncated cycle length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileCheck {
    pub level: f64,
    pub x: f64,
    pub cdf_cycle: f64,
    /// CDF of the stochastically smaller bound `((1+ε)^{-1} H) ∧ (z - z_lower)`.
    pub cdf_small: f64,
    /// CDF of the stochastically larger bound `(1-ε)^{-1} H`.
    pub cdf_large: f64,
    pub std_error: f64,
    /// `cdf_small - cdf_cycle + 3 SE`; non-negative when the check holds.
    pub small_margin: f64,
    /// `cdf_cycle - cdf_large + 3 SE`; non-negative when the check holds.
    pub large_margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub control: String,
    pub z_lower: f64,
    pub z: f64,
    pub reps: u64,
    /// Smallest `c` with `|sqrt 2 λ - 1| <= c/z` and `|1/(sqrt 2 θ) - 1| <= c/z` on `[z_lower, ∞)`.
    pub c: f64,
    /// `c / z_lower`.
    pub epsilon: f64,
    pub checks: Vec<QuantileCheck>,
    pub passed: usize,
    pub all_pass: bool,
}

/// Smallest envelope constant `c` over `[z_lower, ∞)` (or the control's
/// domain), found on a log-spaced scan.
pub fn envelope_constant(ctrl: &ControlFunction, z_lower: f64) -> Result<f64> {
    if !(z_lower > 0.0) || !z_lower.is_finite() {
        return Err(Error::domain(format!("z_lower = {z_lower} must be positive")));
    }
    let z_hi = ctrl.domain_max().min(z_lower * 1e6);
    if z_hi < z_lower {
        return Err(Error::Range { what: "z_lower", value: z_lower, limit: z_hi });
    }
    let n = 20_000;
    let ratio = (z_hi / z_lower).ln();
    let mut c: f64 = 0.0;
    for k in 0..=n {
        let z = (z_lower * (ratio * k as f64 / n as f64).exp()).min(z_hi);
        let th = ctrl.theta(z)?;
        let lam = th - th * th / (2.0 * z);
        let resid = (SQRT_2 * lam - 1.0).abs().max((1.0 / (SQRT_2 * th) - 1.0).abs());
        c = c.max(z * resid);
    }
    Ok(c)
}

/// Checks that the truncated cycle length from `z` lies between the scaled
/// renewal steps at 99 empirical quantiles, within 3 standard errors.
pub fn dominance_check(ctrl: &ControlFunction, z_lower: f64, z: f64, reps: u64, seed: u64) -> Result<DominanceReport> {
    if !(z >= z_lower) {
        return Err(Error::domain(format!("need z >= z_lower, got z = {z}, z_lower = {z_lower}")));
    }
    if reps < 100 {
        return Err(Error::config(format!("dominance check needs reps >= 100, got {reps}")));
    }
    let c = envelope_constant(ctrl, z_lower)?;
    let epsilon = c / z_lower;
    if !c.is_finite() || epsilon >= 1.0 {
        return Err(Error::domain(format!(
            "envelope constant c = {c} gives c/z_lower = {epsilon}; the control does not approach 1/sqrt 2 fast enough"
        )));
    }
    let cap = z - z_lower;
    let cycles = CycleDistributions::new(ctrl.clone(), z)?;
    let mut sizes = par_replicates(reps, seed, |_, rng| cycles.sample_cycle(rng).map(|(d, j)| (d + j).min(cap)))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    sizes.sort_by(f64::total_cmp);
    let n = sizes.len();
    let checks: Vec<QuantileCheck> = (1..=99)
        .map(|q| {
            let level = q as f64 / 100.0;
            let x = sizes[((level * n as f64).ceil() as usize).clamp(1, n) - 1];
            let cdf_cycle = sizes.partition_point(|&s| s <= x) as f64 / n as f64;
            let cdf_small = if x >= cap { 1.0 } else { h_cdf((1.0 + epsilon) * x) };
            let cdf_large = h_cdf((1.0 - epsilon) * x);
            let std_error = (cdf_cycle * (1.0 - cdf_cycle) / n as f64).sqrt();
            let small_margin = cdf_small - cdf_cycle + 3.0 * std_error;
            let large_margin = cdf_cycle - cdf_large + 3.0 * std_error;
            QuantileCheck {
                level,
                x,
                cdf_cycle,
                cdf_small,
                cdf_large,
                std_error,
                small_margin,
                large_margin,
                pass: small_margin >= 0.0 && large_margin >= 0.0,
            }
        })
        .collect();
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(DominanceReport {
        control: ctrl.label(),
        z_lower,
        z,
        reps,
        c,
        epsilon,
        all_pass: passed == checks.len(),
        passed,
        checks,
    })
}
