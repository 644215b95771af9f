//! Acceptance windows for the planar problem and the exact mapping between
//! planar windows `φ` and PDMP controls `θ`.
//!
//! A self-similar window has the form `ψ(t, s, y) = (1 - y) φ((t - s)(1 - y))`.
//! Matching jump rates `4λ(z) = 2z φ(z²)` with `λ = θ - θ²/(2z)` gives the
//! closed forms `θ = z (1 - sqrt(1 - φ))` and `φ = 2θ/z - (θ/z)²`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::value_solver::ValueGrid;
use crate::FRAC_1_SQRT_2;

/// Smallest control value used when `1/sqrt(2) + γ/z` is not positive.
pub const MIN_THETA: f64 = 1e-12;

pub type PhiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A planar window function `φ: [0, ∞) → [0, 1]`.
#[derive(Clone)]
pub struct SelfSimilarPhi {
    pub phi: PhiFn,
    /// `φ` is non-increasing, so `ψ` is non-decreasing in `s` between
    /// selections; lets the simulator use a tight local rate bound.
    pub non_increasing: bool,
    /// Known `sup θ` of the induced PDMP control, if available.
    pub theta_bar: Option<f64>,
    pub label: String,
}

impl SelfSimilarPhi {
    /// `φ0(t) = sqrt(2/t) ∧ 1`.
    pub fn phi0() -> Self {
        SelfSimilarPhi {
            phi: Arc::new(phi0),
            non_increasing: true,
            theta_bar: Some(std::f64::consts::SQRT_2),
            label: "phi0".into(),
        }
    }

    /// Window matched to the γ-family control `min(z, 1/sqrt(2) + γ/z)`.
    pub fn gamma(gamma: f64) -> Self {
        SelfSimilarPhi {
            phi: Arc::new(move |t| {
                if t <= 0.0 {
                    1.0
                } else {
                    phi_from_theta(&|z| gamma_theta(gamma, z), t).unwrap_or(f64::NAN)
                }
            }),
            non_increasing: gamma >= 0.0,
            theta_bar: Some(gamma_theta_bar(gamma)),
            label: format!("gamma:{gamma}"),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.phi)(t)
    }
}

impl fmt::Debug for SelfSimilarPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SelfSimilarPhi")
            .field("label", &self.label)
            .field("non_increasing", &self.non_increasing)
            .finish()
    }
}

/// `sqrt(2/t) ∧ 1`.
pub fn phi0(t: f64) -> f64 {
    if t <= 2.0 {
        1.0
    } else {
        (2.0 / t).sqrt()
    }
}

/// The γ-family control `θ(z) = min(z, 1/sqrt(2) + γ/z)`, floored at
/// [`MIN_THETA`].
pub fn gamma_theta(gamma: f64, z: f64) -> f64 {
    z.min((FRAC_1_SQRT_2 + gamma / z).max(MIN_THETA))
}

/// `sup_z min(z, 1/sqrt(2) + γ/z)`: the crossing point for `γ > 0`,
/// otherwise `1/sqrt(2)`.
pub fn gamma_theta_bar(gamma: f64) -> f64 {
    if gamma > 0.0 {
        0.5 * (FRAC_1_SQRT_2 + (0.5 + 4.0 * gamma).sqrt())
    } else {
        FRAC_1_SQRT_2
    }
}

#[derive(Debug, Clone)]
pub enum WindowKind {
    Greedy,
    Stationary { delta: f64 },
    SelfSimilar(SelfSimilarPhi),
    Optimal(Arc<ValueGrid>),
    GammaFamily { gamma: f64 },
}

/// A strategy for horizon `t`.
#[derive(Debug, Clone)]
pub struct AcceptanceWindow {
    pub kind: WindowKind,
    pub horizon: f64,
}

fn check_horizon(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("horizon t = {t} must be finite and >= 0")));
    }
    Ok(())
}

impl AcceptanceWindow {
    pub fn greedy(t: f64) -> Result<Self> {
        check_horizon(t)?;
        Ok(Self { kind: WindowKind::Greedy, horizon: t })
    }

    /// Stationary window with `δ* = sqrt(2/t)` (capped at 1).
    pub fn stationary(t: f64) -> Result<Self> {
        check_horizon(t)?;
        let delta = if t > 0.0 { (2.0 / t).sqrt().min(1.0) } else { 1.0 };
        Self::stationary_with(t, delta)
    }

    pub fn stationary_with(t: f64, delta: f64) -> Result<Self> {
        check_horizon(t)?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!("stationary delta = {delta} must lie in (0, 1]")));
        }
        Ok(Self { kind: WindowKind::Stationary { delta }, horizon: t })
    }

    pub fn self_similar(t: f64, phi: SelfSimilarPhi) -> Result<Self> {
        check_horizon(t)?;
        Ok(Self { kind: WindowKind::SelfSimilar(phi), horizon: t })
    }

    pub fn phi0(t: f64) -> Result<Self> {
        Self::self_similar(t, SelfSimilarPhi::phi0())
    }

    /// Optimal window read from a solved grid; needs `t <= z_max²`.
    pub fn optimal(t: f64, grid: Arc<ValueGrid>) -> Result<Self> {
        check_horizon(t)?;
        let limit = grid.z_max * grid.z_max;
        if t > limit * (1.0 + 1e-12) {
            return Err(Error::Range { what: "t", value: t, limit });
        }
        Ok(Self { kind: WindowKind::Optimal(grid), horizon: t })
    }

    pub fn gamma(t: f64, gamma: f64) -> Result<Self> {
        check_horizon(t)?;
        if !gamma.is_finite() {
            return Err(Error::domain(format!("gamma = {gamma} must be finite")));
        }
        Ok(Self { kind: WindowKind::GammaFamily { gamma }, horizon: t })
    }

    /// `φ` evaluated at the remaining area `tau`, for self-similar kinds.
    fn phi_at(&self, tau: f64) -> Result<f64> {
        match &self.kind {
            WindowKind::SelfSimilar(p) => Ok(p.eval(tau)),
            WindowKind::Optimal(grid) => phi_star(grid, tau),
            WindowKind::GammaFamily { gamma } => {
                if tau <= 0.0 {
                    Ok(1.0)
                } else {
                    phi_from_theta(&|z| gamma_theta(*gamma, z), tau)
                }
            }
            WindowKind::Greedy | WindowKind::Stationary { .. } => unreachable!(),
        }
    }

    /// Window width `ψ(t, s, y)`.
    pub fn width(&self, s: f64, y: f64) -> Result<f64> {
        let t = self.horizon;
        if !(0.0..1.0).contains(&y) {
            return Err(Error::domain(format!("running maximum y = {y} must lie in [0, 1)")));
        }
        if !(s >= 0.0 && s <= t) {
            return Err(Error::domain(format!("time s = {s} must lie in [0, {t}]")));
        }
        let room = 1.0 - y;
        let psi = match &self.kind {
            WindowKind::Greedy => room,
            WindowKind::Stationary { delta } => room.min(*delta),
            _ => room * self.phi_at((t - s) * room)?,
        };
        Ok(psi.clamp(0.0, room))
    }

    /// Whether `ψ(t, ·, y)` is non-decreasing in `s` for every `y`.
    pub fn nondecreasing_in_time(&self) -> bool {
        match &self.kind {
            WindowKind::Greedy | WindowKind::Stationary { .. } => true,
            WindowKind::SelfSimilar(p) => p.non_increasing,
            WindowKind::Optimal(grid) => optimal_phi_is_monotone(grid),
            WindowKind::GammaFamily { gamma } => *gamma >= 0.0,
        }
    }

    /// Upper bound of `ψ(t, ·, y)` up to time `s_end`.
    pub fn rate_bound(&self, s_end: f64, y: f64, monotone: bool) -> Result<f64> {
        let room = 1.0 - y;
        Ok(match &self.kind {
            WindowKind::Greedy => room,
            WindowKind::Stationary { delta } => room.min(*delta),
            _ if monotone => self.width(s_end, y)?,
            _ => room,
        })
    }
}

/// Free-function form of [`AcceptanceWindow::width`].
pub fn window_width(w: &AcceptanceWindow, s: f64, y: f64) -> Result<f64> {
    w.width(s, y)
}

/// Optimal planar window fraction `φ*(t)` from the grid's threshold.
pub fn phi_star(grid: &ValueGrid, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("phi* needs t >= 0, got {t}")));
    }
    let limit = grid.z_max * grid.z_max;
    if t > limit * (1.0 + 1e-12) {
        return Err(Error::Range { what: "t", value: t, limit });
    }
    let z = t.sqrt();
    if z == 0.0 || grid.u_at(z)? <= 1.0 {
        return Ok(1.0);
    }
    let r = (grid.theta_at(z)? / z).min(1.0);
    Ok(2.0 * r - r * r)
}

fn optimal_phi_is_monotone(grid: &ValueGrid) -> bool {
    // φ* = 2r - r² is increasing in r = θ*/z, and r is monotone between
    // nodes, so node values decide
    let mut prev = f64::INFINITY;
    for i in 1..grid.len() {
        let r = if grid.u[i] <= 1.0 { 1.0 } else { grid.theta_star[i] / grid.z(i) };
        if r > prev + 1e-15 {
            return false;
        }
        prev = r;
    }
    true
}

/// `θ(z) = z (1 - sqrt(1 - φ(z²)))`.
pub fn theta_from_phi(phi: &dyn Fn(f64) -> f64, z: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("z = {z} must be finite and >= 0")));
    }
    let p = phi(z * z);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("phi({}) = {p} outside [0, 1]", z * z)));
    }
    Ok(z * p / (1.0 + (1.0 - p).sqrt()))
}

/// `φ(t) = 2θ(z)/z - (θ(z)/z)²` with `z = sqrt(t)`.
pub fn phi_from_theta(theta: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("t = {t} must be finite and positive")));
    }
    let z = t.sqrt();
    let th = theta(z);
    if !(th > 0.0 && th <= z * (1.0 + 1e-12)) {
        return Err(Error::domain(format!("theta({z}) = {th} outside (0, z]")));
    }
    let r = (th / z).min(1.0);
    Ok(r * (2.0 - r))
}

/// Strategy names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyName {
    Greedy,
    Stationary,
    Phi0,
    Optimal,
    Gamma(f64),
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(StrategyName::Greedy),
            "stationary" => Ok(StrategyName::Stationary),
            "phi0" => Ok(StrategyName::Phi0),
            "optimal" => Ok(StrategyName::Optimal),
            _ => match s.strip_prefix("gamma:") {
                Some(g) => g
                    .parse::<f64>()
                    .ok()
                    .filter(|g| g.is_finite())
                    .map(StrategyName::Gamma)
                    .ok_or_else(|| Error::config(format!("bad gamma value in strategy '{s}'"))),
                None => Err(Error::config(format!(
                    "unknown strategy '{s}' (expected greedy | stationary | phi0 | optimal | gamma:<value>)"
                ))),
            },
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyName::Greedy => write!(f, "greedy"),
            StrategyName::Stationary => write!(f, "stationary"),
            StrategyName::Phi0 => write!(f, "phi0"),
            StrategyName::Optimal => write!(f, "optimal"),
            StrategyName::Gamma(g) => write!(f, "gamma:{g}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn greedy_width() {
        let w = AcceptanceWindow::greedy(10.0).unwrap();
        assert!((w.width(3.0, 0.3).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn stationary_and_phi0_at_start() {
        let t = 1e4;
        let s = AcceptanceWindow::stationary(t).unwrap();
        assert!((s.width(0.0, 0.0).unwrap() - 0.0141421).abs() < 1e-7);
        let p = AcceptanceWindow::phi0(t).unwrap();
        assert!((p.width(0.0, 0.0).unwrap() - 0.0141421).abs() < 1e-7);
    }

    #[test]
    fn stationary_delta_validated() {
        assert!(AcceptanceWindow::stationary_with(10.0, 0.0).is_err());
        assert!(AcceptanceWindow::stationary_with(10.0, 1.5).is_err());
    }

    #[test]
    fn width_domain_errors() {
        let w = AcceptanceWindow::greedy(10.0).unwrap();
        assert!(w.width(1.0, 1.0).is_err());
        assert!(w.width(11.0, 0.0).is_err());
        assert!(w.width(-1.0, 0.0).is_err());
    }

    #[test]
    fn full_window_maps_to_full_control() {
        for z in [0.5, 1.0, 10.0, 300.0] {
            assert!((theta_from_phi(&|_| 1.0, z).unwrap() - z).abs() < 1e-12 * z);
        }
    }

    #[test]
    fn phi0_control_expansion() {
        // z (1 - sqrt(1 - sqrt(2)/z)) = 1/sqrt2 + 1/(4z) + sqrt2/(8 z²) + 5/(32 z³) + ...
        let z: f64 = 100.0;
        let th = theta_from_phi(&phi0, z).unwrap();
        let series = FRAC_1_SQRT_2 + 0.25 / z + std::f64::consts::SQRT_2 / (8.0 * z * z)
            + 5.0 / (32.0 * z.powi(3));
        assert!((th - series).abs() < 1e-8);
        // two-term truncation 1/sqrt2 + 1/(4z) = 0.709607 is off by O(z^-2)
        assert!((th - 0.709607).abs() < 2.0 / (z * z));
    }

    #[test]
    fn phi0_round_trip() {
        let theta = |z: f64| theta_from_phi(&phi0, z).unwrap();
        let back = phi_from_theta(&theta, 400.0).unwrap();
        assert!((back - phi0(400.0)).abs() < 1e-14);
    }

    #[test]
    fn mapping_domain_errors() {
        assert!(theta_from_phi(&|_| 1.5, 2.0).is_err());
        assert!(theta_from_phi(&|_| -0.1, 2.0).is_err());
        assert!(phi_from_theta(&|z| 2.0 * z, 4.0).is_err());
        assert!(phi_from_theta(&|_| 0.0, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn mapping_round_trip(p in 1e-9f64..=1.0, z in 1.0f64..1000.0) {
            let th = theta_from_phi(&|_| p, z).unwrap();
            let back = phi_from_theta(&|_| th, z * z).unwrap();
            prop_assert!((back - p).abs() < 1e-12);
        }

        #[test]
        fn widths_non_increasing_in_y(
            s_frac in 0.0f64..1.0,
            y1 in 0.0f64..0.999,
            y2 in 0.0f64..0.999,
            gamma in 0.0f64..0.5,
        ) {
            let t = 5000.0;
            let (lo, hi) = (y1.min(y2), y1.max(y2));
            let s = s_frac * t;
            let windows = [
                AcceptanceWindow::greedy(t).unwrap(),
                AcceptanceWindow::stationary(t).unwrap(),
                AcceptanceWindow::phi0(t).unwrap(),
                AcceptanceWindow::gamma(t, gamma).unwrap(),
            ];
            for w in &windows {
                let a = w.width(s, lo).unwrap();
                let b = w.width(s, hi).unwrap();
                prop_assert!(b <= a + 1e-15);
                prop_assert!(a >= 0.0 && a <= 1.0 - lo);
            }
        }
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("greedy".parse::<StrategyName>().unwrap(), StrategyName::Greedy);
        assert_eq!("gamma:0.25".parse::<StrategyName>().unwrap(), StrategyName::Gamma(0.25));
        assert!("gamma:x".parse::<StrategyName>().is_err());
        assert!("best".parse::<StrategyName>().is_err());
        assert_eq!(StrategyName::Gamma(-0.5).to_string(), "gamma:-0.5");
    }
}
