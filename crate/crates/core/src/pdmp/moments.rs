use std::sync::Arc;

use serde::Serialize;

use super::ControlFunction;
use crate::error::{Error, Result};
use crate::integro::{self, Problem, Source, Threshold};

/// Reward collected at each jump point.
#[derive(Clone)]
pub enum Reward {
    /// `r ≡ 1`: the solution is the mean jump count `u_θ`.
    Unit,
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Grid solution `w(z_i)` of the reward equation on `z_i = i·h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardCurve {
    pub h: f64,
    pub z_max: f64,
    pub w: Vec<f64>,
    /// Whether `w` is the mean jump count `u_θ`.
    pub unit_reward: bool,
    pub control: String,
}

impl RewardCurve {
    pub fn z_values(&self) -> Vec<f64> {
        (0..self.w.len()).map(|i| i as f64 * self.h).collect()
    }

    pub fn at(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) || z > self.z_max * (1.0 + 1e-12) {
            return Err(Error::Range { what: "z", value: z, limit: self.z_max });
        }
        Ok(integro::interp(&self.w, self.h, z))
    }
}

/// Second moment `w2 = E N²` and variance of the jump count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMoment {
    pub h: f64,
    pub z_max: f64,
    pub w2: Vec<f64>,
    pub var: Vec<f64>,
}

impl SecondMoment {
    pub fn z_values(&self) -> Vec<f64> {
        (0..self.var.len()).map(|i| i as f64 * self.h).collect()
    }

    pub fn var_at(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) || z > self.z_max * (1.0 + 1e-12) {
            return Err(Error::Range { what: "z", value: z, limit: self.z_max });
        }
        Ok(integro::interp(&self.var, self.h, z))
    }
}

fn grid_steps(z_max: f64, h: f64, ctrl: &ControlFunction) -> Result<usize> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::domain(format!("step h = {h} must lie in (0, 0.01]")));
    }
    if !(z_max > 0.0) || !z_max.is_finite() {
        return Err(Error::domain(format!("z_max = {z_max} must be positive")));
    }
    let limit = ctrl.domain_max();
    if z_max > limit * (1.0 + 1e-12) {
        return Err(Error::Range { what: "z_max", value: z_max, limit });
    }
    let steps_f = z_max / h;
    let steps = steps_f.round();
    if (steps_f - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::domain(format!("z_max / h = {steps_f} is not an integer")));
    }
    Ok(steps as usize)
}

fn prescribed(ctrl: &ControlFunction) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |z| ctrl.theta(z).unwrap_or(f64::NAN)
}

/// Solves `w'(z) = 4 ∫_0^{θ(z)} (w(z-y) + r(z) - w(z)) (1 - y/z) dy`, `w(0) = 0`.
pub fn solve_reward(ctrl: &ControlFunction, reward: &Reward, z_max: f64, h: f64) -> Result<RewardCurve> {
    let steps = grid_steps(z_max, h, ctrl)?;
    let theta = prescribed(ctrl);
    let w = match reward {
        Reward::Unit => Problem { h, steps, threshold: Threshold::Prescribed(&theta), source: Source::Unit }.solve()?,
        Reward::Function(r) => {
            let r = |z: f64| r(z);
            Problem { h, steps, threshold: Threshold::Prescribed(&theta), source: Source::State(&r) }.solve()?
        }
    }
    .w;
    Ok(RewardCurve {
        h,
        z_max,
        w,
        unit_reward: matches!(reward, Reward::Unit),
        control: ctrl.label(),
    })
}

/// Solves the second-moment equation with inhomogeneous term
/// `1 + 2 u_θ(z - y)` taken from a unit-reward curve on the same grid.
pub fn solve_second_moment(ctrl: &ControlFunction, mean: &RewardCurve) -> Result<SecondMoment> {
    if !mean.unit_reward {
        return Err(Error::Sequencing("second moment needs the unit-reward mean count u_θ".into()));
    }
    if mean.control != ctrl.label() {
        return Err(Error::Sequencing(format!(
            "mean count was solved for control {}, not {}",
            mean.control,
            ctrl.label()
        )));
    }
    let (h, z_max) = (mean.h, mean.z_max);
    let steps = grid_steps(z_max, h, ctrl)?;
    let theta = prescribed(ctrl);
    let w2 = Problem {
        h,
        steps,
        threshold: Threshold::Prescribed(&theta),
        source: Source::UnitPlusHistory { coef: 2.0, hist: &mean.w },
    }
    .solve()?
    .w;
    let var = w2.iter().zip(&mean.w).map(|(a, u)| a - u * u).collect();
    Ok(SecondMoment { h, z_max, w2, var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{fit, Basis};

    #[test]
    fn zero_reward_is_identically_zero() {
        let r = Reward::Function(Arc::new(|_| 0.0));
        let c = solve_reward(&ControlFunction::theta0(), &r, 20.0, 1e-2).unwrap();
        assert!(c.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn greedy_regime_counts_match_records() {
        // θ(z) = z while z <= 1/sqrt(2); there the count is Ein(z²)
        let c = solve_reward(&ControlFunction::theta0(), &Reward::Unit, 0.7, 1e-4).unwrap();
        let e = crate::value_solver::ein(0.49).unwrap();
        assert!((c.at(0.7).unwrap() - e).abs() < 1e-6);
    }

    #[test]
    fn decaying_reward_has_a_limit() {
        let r = Reward::Function(Arc::new(|z: f64| 1.0 / (1.0 + z * z)));
        let c = solve_reward(&ControlFunction::theta0(), &r, 200.0, 1e-2).unwrap();
        let rho = c.at(200.0).unwrap();
        for z in [25.0, 50.0, 100.0] {
            let gap = (c.at(z).unwrap() - rho).abs() * z;
            assert!(gap < 5.0, "z = {z}: {gap}");
        }
        assert!((c.at(190.0).unwrap() - rho).abs() < 0.05);
    }

    #[test]
    fn second_moment_needs_the_unit_curve() {
        let ctrl = ControlFunction::theta0();
        let r = Reward::Function(Arc::new(|_| 1.0));
        let c = solve_reward(&ctrl, &r, 10.0, 1e-2).unwrap();
        assert!(matches!(solve_second_moment(&ctrl, &c), Err(Error::Sequencing(_))));
        let u = solve_reward(&ctrl, &Reward::Unit, 10.0, 1e-2).unwrap();
        let other = ControlFunction::gamma(0.25).unwrap();
        assert!(matches!(solve_second_moment(&other, &u), Err(Error::Sequencing(_))));
    }

    #[test]
    fn variance_starts_at_zero_and_grows() {
        let ctrl = ControlFunction::theta0();
        let u = solve_reward(&ctrl, &Reward::Unit, 30.0, 1e-2).unwrap();
        let m = solve_second_moment(&ctrl, &u).unwrap();
        assert_eq!(m.var[0], 0.0);
        assert!(m.var.windows(2).skip(1).all(|p| p[1] > p[0]));
    }

    #[test]
    fn theta0_mean_count_expansion() {
        let ctrl = ControlFunction::theta0();
        let u = solve_reward(&ctrl, &Reward::Unit, 200.0, 2e-3).unwrap();
        let z = u.z_values();
        let resid: Vec<f64> = z
            .iter()
            .zip(&u.w)
            .map(|(&z, &w)| if z > 0.0 { w - crate::SQRT_2 * z + z.ln() / 6.0 } else { 0.0 })
            .collect();
        let m = fit(&z, &resid, &[Basis::Const, Basis::Inverse], (60.0, 200.0)).unwrap();
        let d = m.coefficient(Basis::Inverse).unwrap();
        let target = crate::SQRT_2 / 72.0;
        assert!((d - target).abs() < 0.1 * target, "{d}");
    }

    #[test]
    fn prescribed_control_above_z_is_a_domain_error() {
        let bad = ControlFunction::Custom {
            theta: Arc::new(|z: f64| 2.0 * z),
            theta_bar: 10.0,
            label: "bad".into(),
        };
        assert!(matches!(solve_reward(&bad, &Reward::Unit, 1.0, 1e-2), Err(Error::Domain(_))));
    }
}
