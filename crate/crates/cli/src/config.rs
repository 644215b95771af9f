//! Resolved experiment configuration and shared inputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chainsel::pdmp::{ControlFunction, ControlName};
use chainsel::strategies::StrategyName;
use chainsel::value_solver::{solve_value, ValueGrid};
use serde::Serialize;

use crate::CliError;

/// Environment variable naming a precomputed grid CSV.
pub const GRID_ENV: &str = "CHAINSEL_GRID";

/// The full resolved configuration, embedded in every artifact.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentConfig {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn parse_strategy(s: &str) -> Result<StrategyName, CliError> {
    Ok(s.parse::<StrategyName>()?)
}

pub fn parse_control(s: &str) -> Result<ControlName, CliError> {
    Ok(s.parse::<ControlName>()?)
}

pub fn gamma_of_strategy(s: StrategyName) -> Option<f64> {
    match s {
        StrategyName::Gamma(g) => Some(g),
        _ => None,
    }
}

pub fn gamma_of_control(c: ControlName) -> Option<f64> {
    match c {
        ControlName::Gamma(g) => Some(g),
        ControlName::Theta0 => Some(0.0),
        ControlName::Phi0 | ControlName::Optimal => None,
    }
}

/// Builds the control, loading or solving the optimal grid up to `z_needed`.
pub fn control(name: ControlName, z_needed: f64, cfg: &mut ExperimentConfig) -> Result<ControlFunction, CliError> {
    Ok(match name {
        ControlName::Theta0 => ControlFunction::theta0(),
        ControlName::Phi0 => ControlFunction::phi0(),
        ControlName::Gamma(g) => ControlFunction::gamma(g)?,
        ControlName::Optimal => ControlFunction::Optimal(optimal_grid(z_needed, cfg)?),
    })
}

/// Optimal grid covering `[0, z_needed]`: read from `CHAINSEL_GRID` when
/// set, otherwise solved with the default step.
pub fn optimal_grid(z_needed: f64, cfg: &mut ExperimentConfig) -> Result<Arc<ValueGrid>, CliError> {
    if let Some(path) = std::env::var_os(GRID_ENV) {
        let path = PathBuf::from(path);
        let grid = read_grid(&path)?;
        if grid.z_max < z_needed {
            return Err(CliError::Config(format!(
                "grid {} covers z <= {}, but z = {z_needed} is needed",
                path.display(),
                grid.z_max
            )));
        }
        cfg.grid = Some(format!("file:{}", path.display()));
        return Ok(Arc::new(grid));
    }
    let z_max = z_needed.ceil().max(10.0);
    let h = chainsel::value_solver::DEFAULT_STEP;
    cfg.grid = Some(format!("solved:z_max={z_max},h={h}"));
    Ok(Arc::new(solve_value(z_max, h)?))
}

/// Reads a grid CSV written by `solve`.
pub fn read_grid(path: &Path) -> Result<ValueGrid, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read grid {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Config(format!("grid {}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "z,u,u_prime,theta_star" => {}
        other => return Err(bad(format!("expected header z,u,u_prime,theta_star, found {other:?}"))),
    }
    let (mut z, mut u, mut up, mut th) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        if cells.len() != 4 {
            return Err(bad(format!("row {} has {} columns", k + 1, cells.len())));
        }
        z.push(cells[0]);
        u.push(cells[1]);
        up.push(cells[2]);
        th.push(cells[3]);
    }
    if z.len() < 2 {
        return Err(bad("fewer than two nodes".into()));
    }
    let h = z[1] - z[0];
    if let Some(i) = (0..z.len()).find(|&i| (z[i] - i as f64 * h).abs() > 1e-9 * (1.0 + z[i])) {
        return Err(bad(format!("nodes are not uniform at row {}", i + 1)));
    }
    let z_max = *z.last().unwrap();
    let mut grid = ValueGrid::from_parts(h, u, up, th)?;
    grid.z_max = z_max;
    Ok(grid)
}
