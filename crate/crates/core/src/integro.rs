//! Fixed-step solver for the convolution-type integro-ODEs
//!
//! ```text
//! w'(z) = 4 ∫_0^{θ(z)} (w(z-y) + s(z, z-y) - w(z)) (1 - y/z) dy,   w(0) = 0,
//! ```
//!
//! shared by the optimality equation (θ found as a root), the reward
//! equation (prescribed θ, source `r(z)`), and the second-moment equation
//! (prescribed θ, source `1 + 2 u(z-y)`).
//!
//! Substituting `x = z - y` turns the kernel into `x / z` on `[z - θ, z]`.
//! The integral is a composite trapezoid over whole grid cells plus the
//! linearly interpolated partial cell at `z - θ`. Time stepping is Heun's
//! predictor-corrector in PECE form, with the history read off the uniform
//! grid by linear interpolation.

use crate::error::{Error, Result};

/// How the upper integration limit `θ(z)` is chosen.
pub enum Threshold<'a> {
    /// `θ(z) = z` while `w(z) <= 1`, otherwise the root of
    /// `w(z - y) + 1 - w(z) = 0`.
    Optimal,
    /// A prescribed control with `0 < θ(z) <= z`.
    Prescribed(&'a (dyn Fn(f64) -> f64 + Sync)),
}

/// Inhomogeneous term `s(z, x)` inside the integral.
pub enum Source<'a> {
    /// `s ≡ 1`: counts jumps.
    Unit,
    /// `s = r(z)`: reward collected at the jump point.
    State(&'a (dyn Fn(f64) -> f64 + Sync)),
    /// `s = 1 + coef · hist(x)`, with `hist` given on the same grid.
    UnitPlusHistory { coef: f64, hist: &'a [f64] },
}

pub struct Problem<'a> {
    pub h: f64,
    pub steps: usize,
    pub threshold: Threshold<'a>,
    pub source: Source<'a>,
}

/// Nodal solution on `z_i = i·h`, `i = 0..=steps`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub w: Vec<f64>,
    pub slope: Vec<f64>,
    pub theta: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn solve(&self) -> Result<Solution> {
        let n = self.steps;
        let h = self.h;
        if let Source::UnitPlusHistory { hist, .. } = self.source {
            if hist.len() < n + 1 {
                return Err(Error::Sequencing(format!(
                    "history has {} nodes, grid needs {}",
                    hist.len(),
                    n + 1
                )));
            }
        }
        let mut w = vec![0.0; n + 1];
        let mut slope = vec![0.0; n + 1];
        let mut theta = vec![0.0; n + 1];
        let mut k1 = 0.0;
        for i in 0..n {
            w[i + 1] = w[i] + h * k1;
            let th = self.threshold_at(i + 1, &w)?;
            let k2 = self.rhs(i + 1, &w, th);
            w[i + 1] = w[i] + 0.5 * h * (k1 + k2);
            if matches!(self.threshold, Threshold::Optimal) && w[i + 1] <= w[i] {
                return Err(Error::SolverFault {
                    z: (i + 1) as f64 * h,
                    reason: format!("value not increasing: {} -> {}", w[i], w[i + 1]),
                });
            }
            let th = self.threshold_at(i + 1, &w)?;
            k1 = self.rhs(i + 1, &w, th);
            slope[i + 1] = k1;
            theta[i + 1] = th;
        }
        Ok(Solution { w, slope, theta })
    }

    fn threshold_at(&self, i: usize, w: &[f64]) -> Result<f64> {
        let z = i as f64 * self.h;
        match self.threshold {
            Threshold::Optimal => Ok(optimal_threshold(i, self.h, w)),
            Threshold::Prescribed(f) => {
                let th = f(z);
                if !th.is_finite() || th <= 0.0 || th > z * (1.0 + 1e-12) {
                    return Err(Error::domain(format!(
                        "control θ({z}) = {th} outside (0, z]"
                    )));
                }
                Ok(th.min(z))
            }
        }
    }

    #[inline]
    fn source_node(&self, j: usize) -> f64 {
        match self.source {
            Source::Unit => 1.0,
            Source::State(_) => 0.0,
            Source::UnitPlusHistory { coef, hist } => 1.0 + coef * hist[j],
        }
    }

    /// Right-hand side at node `i`, using `w[0..=i]` with `w[i] = w(z_i)`.
    fn rhs(&self, i: usize, w: &[f64], theta: f64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let h = self.h;
        let z = i as f64 * h;
        let wz = w[i];
        let state = match self.source {
            Source::State(r) => r(z),
            _ => 0.0,
        };
        let x_lo = (z - theta).max(0.0);
        let mut k = ((x_lo / h).ceil() as usize).min(i);
        if (k as f64) * h < x_lo && k < i {
            k += 1;
        }
        let g = |j: usize| (w[j] + self.source_node(j) + state - wz) * (j as f64 * h);

        let mut total = 0.0;
        if k < i {
            let mut acc = 0.0;
            for j in k..=i {
                acc += g(j);
            }
            acc -= 0.5 * (g(k) + g(i));
            total += h * acc;
        }
        let width = k as f64 * h - x_lo;
        if width > 0.0 && k > 0 {
            let frac = (x_lo - (k - 1) as f64 * h) / h;
            let w_lo = w[k - 1] + (w[k] - w[k - 1]) * frac;
            let s_lo = self.source_node(k - 1) + (self.source_node(k) - self.source_node(k - 1)) * frac;
            let g_lo = (w_lo + s_lo + state - wz) * x_lo;
            total += 0.5 * width * (g_lo + g(k));
        }
        4.0 * total / z
    }
}

/// Root of `w(z_i - y) + 1 - w(z_i) = 0` on the interpolated grid function,
/// or `z_i` while `w(z_i) <= 1`. Requires `w[0..=i]` increasing.
pub fn optimal_threshold(i: usize, h: f64, w: &[f64]) -> f64 {
    let z = i as f64 * h;
    let wz = w[i];
    if wz <= 1.0 {
        return z;
    }
    let target = wz - 1.0;
    // last node with w[j] <= target; w[0] = 0 <= target so j exists
    let j = w[..=i].partition_point(|&v| v <= target) - 1;
    let x = if j >= i {
        z
    } else {
        let dw = w[j + 1] - w[j];
        j as f64 * h + h * (target - w[j]) / dw
    };
    z - x
}

/// Linear interpolation of nodal values on `z_i = i·h`; clamps to the ends.
pub fn interp(values: &[f64], h: f64, z: f64) -> f64 {
    let n = values.len() - 1;
    if z <= 0.0 {
        return values[0];
    }
    let pos = z / h;
    let j = pos.floor() as usize;
    if j >= n {
        return values[n];
    }
    let frac = pos - j as f64;
    values[j] + (values[j + 1] - values[j]) * frac
}
