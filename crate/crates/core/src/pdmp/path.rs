use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::ControlFunction;
use crate::error::{Error, Result};
use crate::rng::{par_replicates, replicate_rng};

/// One realization of `Z|z0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PDMPPath {
    pub z0: f64,
    /// States just before each jump, strictly decreasing.
    pub jump_points: Vec<f64>,
    /// Jump magnitudes.
    pub gap_sizes: Vec<f64>,
    pub n_jumps: usize,
}

impl PDMPPath {
    pub fn total_gap(&self) -> f64 {
        self.gap_sizes.iter().sum()
    }

    /// Length of `[0, z0]` traversed by drift.
    pub fn total_drift(&self) -> f64 {
        let mut drift = 0.0;
        let mut top = self.z0;
        for (&z, &y) in self.jump_points.iter().zip(&self.gap_sizes) {
            drift += top - z;
            top = z - y;
        }
        drift + top
    }

    /// Whether `z` lies in a drift interval, i.e. in no gap `(z_k - y_k, z_k]`.
    pub fn covers(&self, z: f64) -> bool {
        !self
            .jump_points
            .iter()
            .zip(&self.gap_sizes)
            .any(|(&p, &y)| z <= p && z > p - y)
    }
}

/// Jump size with CDF `(y - y²/(2z))/λ` on `[0, θ]` at level `f ∈ [0, 1]`,
/// in the cancellation-free form `2fλ / (1 + sqrt(1 - 2fλ/z))`.
pub fn jump_size(z: f64, lambda: f64, f: f64) -> f64 {
    let a = 2.0 * f * lambda;
    a / (1.0 + (1.0 - a / z).max(0.0).sqrt())
}

/// Simulates `Z|z0` by thinning, calling `on_jump(z, y)` at each jump.
/// Returns the number of jumps.
pub fn simulate_z_with<R, F>(ctrl: &ControlFunction, z0: f64, rng: &mut R, mut on_jump: F) -> Result<usize>
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64),
{
    if !(z0 >= 0.0) || !z0.is_finite() {
        return Err(Error::domain(format!("start z0 = {z0} must be finite and >= 0")));
    }
    let limit = ctrl.domain_max();
    if z0 > limit * (1.0 + 1e-12) {
        return Err(Error::Range { what: "z0", value: z0, limit });
    }
    let bar = ctrl.theta_bar();
    if !(bar.is_finite() && bar > 0.0) {
        return Err(Error::config(format!("rate bound {bar} of control {} is not finite and positive", ctrl.label())));
    }
    let mut z = z0;
    let mut n = 0;
    loop {
        let e: f64 = rng.sample(Exp1);
        z -= e / (4.0 * bar);
        if z <= 0.0 {
            return Ok(n);
        }
        let lam = ctrl.lambda(z)?;
        if lam > bar * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "rate factor {lam} at z = {z} exceeds the bound {bar} of control {}",
                ctrl.label()
            )));
        }
        if rng.random::<f64>() * bar < lam {
            let f = 1.0 - rng.random::<f64>();
            let y = jump_size(z, lam, f).min(ctrl.theta(z)?);
            on_jump(z, y);
            n += 1;
            z -= y;
            if z <= 0.0 {
                return Ok(n);
            }
        }
    }
}

/// Simulates one path on replicate stream 0 of `seed`.
pub fn simulate_z(ctrl: &ControlFunction, z0: f64, seed: u64) -> Result<PDMPPath> {
    let mut jump_points = Vec::new();
    let mut gap_sizes = Vec::new();
    let n_jumps = simulate_z_with(ctrl, z0, &mut replicate_rng(seed, 0), |z, y| {
        jump_points.push(z);
        gap_sizes.push(y);
    })?;
    Ok(PDMPPath { z0, jump_points, gap_sizes, n_jumps })
}

pub fn count_jumps<R: Rng + ?Sized>(ctrl: &ControlFunction, z0: f64, rng: &mut R) -> Result<u64> {
    simulate_z_with(ctrl, z0, rng, |_, _| {}).map(|n| n as u64)
}

/// Jump counts of `reps` independent paths from `z0`, in replicate order.
pub fn monte_carlo_jumps(ctrl: &ControlFunction, z0: f64, reps: u64, seed: u64) -> Result<Vec<u64>> {
    if reps < 1 {
        return Err(Error::config("reps must be positive"));
    }
    par_replicates(reps, seed, |_, rng| count_jumps(ctrl, z0, rng))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use crate::rng::replicate_rng;
    use crate::stats::Moments;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn zero_start_has_no_jumps() {
        let p = simulate_z(&ControlFunction::theta0(), 0.0, 3).unwrap();
        assert_eq!(p.n_jumps, 0);
        assert!(simulate_z(&ControlFunction::theta0(), -1.0, 3).is_err());
    }

    #[test]
    fn paths_are_consistent() {
        for ctrl in [ControlFunction::theta0(), ControlFunction::phi0(), ControlFunction::gamma(0.25).unwrap()] {
            for seed in 0..50 {
                let p = simulate_z(&ctrl, 60.0, seed).unwrap();
                assert_eq!(p.n_jumps, p.jump_points.len());
                for k in 0..p.n_jumps {
                    let (z, y) = (p.jump_points[k], p.gap_sizes[k]);
                    assert!(y > 0.0 && y <= ctrl.theta(z).unwrap());
                    if k + 1 < p.n_jumps {
                        assert!(z - y > p.jump_points[k + 1]);
                    }
                }
                let total = p.total_gap() + p.total_drift();
                assert!((total - p.z0).abs() < 1e-9, "{total}");
                assert!(p.covers(p.z0) && p.covers(0.0));
            }
        }
    }

    #[test]
    fn jump_rate_matches_four_lambda() {
        // jumps per unit of drift time spent in [a, b]
        let ctrl = ControlFunction::gamma(0.25).unwrap();
        let (a, b) = (1.0, 1.5);
        let (mut jumps, mut time) = (0u64, 0.0);
        for rep in 0..40_000 {
            let mut rng = replicate_rng(11, rep);
            let mut top: f64 = 3.0;
            simulate_z_with(&ctrl, 3.0, &mut rng, |z, y| {
                time += (top.min(b) - z.max(a)).max(0.0);
                if z >= a && z < b {
                    jumps += 1;
                }
                top = z - y;
            })
            .unwrap();
            time += (top.min(b) - a).max(0.0);
        }
        let mean_rate = adaptive_simpson(|z| 4.0 * ctrl.lambda(z).unwrap(), a, b, 1e-10) / (b - a);
        let observed = jumps as f64 / time;
        let se = (jumps as f64).sqrt() / time;
        // occupation is nearly flat on the window, so the averaged rate applies
        assert!((observed - mean_rate).abs() < 4.0 * se + 0.01 * mean_rate, "{observed} vs {mean_rate}");
    }

    #[test]
    fn jump_sizes_follow_their_density() {
        let (z, th) = (2.0, 0.9);
        let lam = th - th * th / (2.0 * z);
        let mut rng = replicate_rng(5, 0);
        let ys: Vec<f64> = (0..200_000).map(|_| jump_size(z, lam, 1.0 - rng.random::<f64>())).collect();
        let m: Moments = ys.iter().copied().collect();
        let exact = adaptive_simpson(|y| y * (1.0 - y / z) / lam, 0.0, th, 1e-12);
        assert!((m.mean() - exact).abs() < 3.5 * m.summary().std_error);
        assert!(ys.iter().all(|&y| y > 0.0 && y <= th + 1e-12));
    }

    proptest! {
        #[test]
        fn jump_density_is_normalized(z in 0.01f64..500.0, r in 0.001f64..1.0) {
            let th = r * z;
            let lam = th - th * th / (2.0 * z);
            let mass = adaptive_simpson(|y| (1.0 - y / z) / lam, 0.0, th, 1e-12);
            prop_assert!((mass - 1.0).abs() < 1e-10);
            prop_assert!((jump_size(z, lam, 1.0) - th).abs() < 1e-9 * z);
        }
    }
}
