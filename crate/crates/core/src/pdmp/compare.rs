use serde::Serialize;

use super::{monte_carlo_jumps, ControlFunction};
use crate::error::{Error, Result};
use crate::planar_sim::monte_carlo_lengths;
use crate::rng::derive_seed;
use crate::stats::{chi_square_two_sample, ChiSquareTest, Moments, SummaryStats};
use crate::strategies::{AcceptanceWindow, SelfSimilarPhi};

/// Selection counts of the planar process and of the matched PDMP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarPdmpComparison {
    pub t: f64,
    pub z0: f64,
    pub planar: SummaryStats,
    pub pdmp: SummaryStats,
    pub chi_square: ChiSquareTest,
}

impl PlanarPdmpComparison {
    /// `|mean difference|` in units of the pooled standard error.
    pub fn mean_z(&self) -> f64 {
        (self.planar.mean - self.pdmp.mean).abs() / self.planar.std_error.hypot(self.pdmp.std_error)
    }

    pub fn variance_z(&self) -> f64 {
        let se = self.planar.variance_std_error().hypot(self.pdmp.variance_std_error());
        (self.planar.variance - self.pdmp.variance).abs() / se
    }
}

/// Runs the planar process under `φ` over horizon `t` and `Z|sqrt(t)` under
/// the matched control, on independent streams.
pub fn compare_planar_pdmp(phi: &SelfSimilarPhi, t: f64, reps: u64, seed: u64) -> Result<PlanarPdmpComparison> {
    if !(t >= 100.0) || !t.is_finite() {
        return Err(Error::domain(format!("comparison needs t >= 100, got {t}")));
    }
    let z0 = t.sqrt();
    let window = AcceptanceWindow::self_similar(t, phi.clone())?;
    let ctrl = ControlFunction::from_phi(phi, z0);
    let planar = monte_carlo_lengths(&window, reps, derive_seed(seed, 1))?;
    let pdmp = monte_carlo_jumps(&ctrl, z0, reps, derive_seed(seed, 2))?;
    let summary = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Moments>().summary();
    Ok(PlanarPdmpComparison {
        t,
        z0,
        planar: summary(&planar),
        pdmp: summary(&pdmp),
        chi_square: chi_square_two_sample(&planar, &pdmp, 20)?,
    })
}
