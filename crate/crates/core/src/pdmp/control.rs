use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::strategies::{gamma_theta, gamma_theta_bar, theta_from_phi, SelfSimilarPhi};
use crate::value_solver::ValueGrid;

/// Maximal jump size `θ(z)` as a function of the state.
#[derive(Clone)]
pub enum ControlFunction {
    /// `θ(z) = min(z, 1/sqrt(2) + γ/z)`; `γ = 0` is `θ0`.
    Gamma { gamma: f64 },
    /// The optimal threshold read from a solved grid.
    Optimal(Arc<ValueGrid>),
    Custom {
        theta: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        theta_bar: f64,
        label: String,
    },
}

impl ControlFunction {
    pub fn theta0() -> Self {
        ControlFunction::Gamma { gamma: 0.0 }
    }

    pub fn gamma(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::domain(format!("gamma = {gamma} must be finite")));
        }
        Ok(ControlFunction::Gamma { gamma })
    }

    /// Control matched to a planar window `φ` through `θ = z (1 - sqrt(1 - φ(z²)))`.
    /// Without a known `sup θ`, `fallback_bar` must bound `θ` on the states used.
    pub fn from_phi(phi: &SelfSimilarPhi, fallback_bar: f64) -> Self {
        let f = phi.phi.clone();
        ControlFunction::Custom {
            theta: Arc::new(move |z| theta_from_phi(&*f, z).unwrap_or(f64::NAN)),
            theta_bar: phi.theta_bar.unwrap_or(fallback_bar),
            label: phi.label.clone(),
        }
    }

    /// Control matched to `φ0(t) = sqrt(2/t) ∧ 1`.
    pub fn phi0() -> Self {
        Self::from_phi(&SelfSimilarPhi::phi0(), std::f64::consts::SQRT_2)
    }

    /// Largest state at which the control is defined.
    pub fn domain_max(&self) -> f64 {
        match self {
            ControlFunction::Optimal(grid) => grid.z_max,
            _ => f64::INFINITY,
        }
    }

    /// `θ(z)`, validated to lie in `(0, z]` for `z > 0`.
    pub fn theta(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(format!("control evaluated at z = {z}; needs z > 0")));
        }
        let th = match self {
            ControlFunction::Gamma { gamma } => gamma_theta(*gamma, z),
            ControlFunction::Optimal(grid) => grid.theta_at(z)?.min(z),
            ControlFunction::Custom { theta, .. } => theta(z),
        };
        if !(th > 0.0 && th <= z * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("control θ({z}) = {th} outside (0, z]")));
        }
        Ok(th.min(z))
    }

    /// `λ(z) = θ - θ²/(2z)`; zero at `z = 0`.
    pub fn lambda(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return Ok(0.0);
        }
        let th = self.theta(z)?;
        Ok(th - th * th / (2.0 * z))
    }

    /// An upper bound of `θ` (hence of `λ`) over the whole domain.
    pub fn theta_bar(&self) -> f64 {
        match self {
            ControlFunction::Gamma { gamma } => gamma_theta_bar(*gamma),
            ControlFunction::Optimal(grid) => grid.theta_star.iter().copied().fold(0.0, f64::max),
            ControlFunction::Custom { theta_bar, .. } => *theta_bar,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ControlFunction::Gamma { gamma } if *gamma == 0.0 => "theta0".into(),
            ControlFunction::Gamma { gamma } => format!("gamma:{gamma}"),
            ControlFunction::Optimal(_) => "optimal".into(),
            ControlFunction::Custom { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for ControlFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlFunction")
            .field("label", &self.label())
            .field("theta_bar", &self.theta_bar())
            .finish()
    }
}

/// Control names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlName {
    Theta0,
    /// The control matched to the planar window `φ0`.
    Phi0,
    Optimal,
    Gamma(f64),
}

impl FromStr for ControlName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta0" => Ok(ControlName::Theta0),
            "phi0" => Ok(ControlName::Phi0),
            "optimal" => Ok(ControlName::Optimal),
            _ => match s.strip_prefix("gamma:") {
                Some(g) => g
                    .parse::<f64>()
                    .ok()
                    .filter(|g| g.is_finite())
                    .map(ControlName::Gamma)
                    .ok_or_else(|| Error::config(format!("bad gamma value in control '{s}'"))),
                None => Err(Error::config(format!(
                    "unknown control '{s}' (expected theta0 | phi0 | optimal | gamma:<value>)"
                ))),
            },
        }
    }
}

impl fmt::Display for ControlName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlName::Theta0 => write!(f, "theta0"),
            ControlName::Phi0 => write!(f, "phi0"),
            ControlName::Optimal => write!(f, "optimal"),
            ControlName::Gamma(g) => write!(f, "gamma:{g}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FRAC_1_SQRT_2;
    use proptest::prelude::*;

    #[test]
    fn theta0_lambda_at_one() {
        let c = ControlFunction::theta0();
        let lam = c.lambda(1.0).unwrap();
        assert!((lam - (FRAC_1_SQRT_2 - 0.25)).abs() < 1e-15);
        assert!((lam - 0.45711).abs() < 1e-5);
    }

    #[test]
    fn gamma_bar_is_the_crossing_point() {
        for g in [0.05, 0.25, 1.0] {
            let c = ControlFunction::gamma(g).unwrap();
            let bar = c.theta_bar();
            assert!((bar - (FRAC_1_SQRT_2 + g / bar)).abs() < 1e-12);
            for k in 1..2000 {
                let z = k as f64 * 0.01;
                assert!(c.theta(z).unwrap() <= bar + 1e-12);
            }
        }
    }

    #[test]
    fn phi0_control_has_constant_rate_past_the_corner() {
        let c = ControlFunction::phi0();
        for z in [1.5, 3.0, 20.0, 400.0] {
            assert!((c.lambda(z).unwrap() - FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!((c.theta(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn names_parse() {
        assert_eq!("theta0".parse::<ControlName>().unwrap(), ControlName::Theta0);
        assert_eq!("gamma:-0.5".parse::<ControlName>().unwrap(), ControlName::Gamma(-0.5));
        assert_eq!("phi0".parse::<ControlName>().unwrap(), ControlName::Phi0);
        assert!(matches!("greedy".parse::<ControlName>(), Err(Error::Config(_))));
        assert!("gamma:x".parse::<ControlName>().is_err());
    }

    proptest! {
        #[test]
        fn lambda_lies_in_half_open_range(z in 1e-3f64..1e3, g in -1.0f64..1.0) {
            let c = ControlFunction::gamma(g).unwrap();
            let lam = c.lambda(z).unwrap();
            prop_assert!(lam > 0.0 && lam <= z / 2.0 + 1e-12);
            prop_assert!(c.theta(z).unwrap() <= c.theta_bar() + 1e-12);
        }
    }
}
