//! One function per subcommand. Each returns the summary JSON printed on
//! standard output and writes its artifact when `--out` is given.

use std::path::PathBuf;

use chainsel::pdmp::{
    compare_planar_pdmp, estimate_coverage, monte_carlo_jumps, simulate_z, solve_reward, solve_second_moment,
    Reward,
};
use chainsel::planar_sim::{fixed_n_length, monte_carlo_lengths, MIN_REPS};
use chainsel::renewal::{clt_statistic, dominance_check, renewal_count};
use chainsel::rng::par_replicates;
use chainsel::stats::{fit as ls_fit, ks_distance, Basis, Moments, SummaryStats};
use chainsel::strategies::{AcceptanceWindow, SelfSimilarPhi, StrategyName};
use chainsel::value_solver::{expansion_residuals, free_log_fit, solve_value, DEFAULT_STEP, DEFAULT_Z_MAX};
use chainsel::SQRT_2;
use clap::Args;
use serde_json::{json, Value};

use crate::config::{self, ExperimentConfig};
use crate::output::{real, write_atomic, Csv};
use crate::{CliError, Common};

#[derive(Args)]
pub struct SolveArgs {
    /// Right end of the solution grid
    #[arg(long, default_value_t = DEFAULT_Z_MAX)]
    pub zmax: f64,
    /// Grid step
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// greedy | stationary | phi0 | optimal | gamma:<g>
    #[arg(long)]
    pub strategy: String,
    /// Horizon
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct FixedNArgs {
    /// Number of observations
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct PdmpArgs {
    /// theta0 | phi0 | optimal | gamma:<g>
    #[arg(long, default_value = "theta0")]
    pub control: String,
    /// Starting state
    #[arg(long)]
    pub z: f64,
    /// Also summarize jump counts over this many replicates
    #[arg(long, default_value_t = 0)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct MomentsArgs {
    /// theta0 | phi0 | optimal | gamma:<g>
    #[arg(long, default_value = "theta0")]
    pub control: String,
    #[arg(long, default_value_t = DEFAULT_Z_MAX)]
    pub zmax: f64,
    /// Grid step of the moment equations
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct CoverageArgs {
    /// theta0 | phi0 | optimal | gamma:<g>
    #[arg(long, default_value = "theta0")]
    pub control: String,
    /// Starting state z0
    #[arg(long)]
    pub z: f64,
    /// Spacing of the coverage grid
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct RenewalArgs {
    /// theta0 | phi0 | optimal | gamma:<g>
    #[arg(long, default_value = "theta0")]
    pub control: String,
    /// Right endpoint of the cycle
    #[arg(long, default_value_t = 200.0)]
    pub z: f64,
    /// Truncation level; defaults to omega·sqrt(z)
    #[arg(long)]
    pub zlower: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct CltArgs {
    /// pdmp (jump counts under --control) | renewal (counts of the limiting step)
    #[arg(long, default_value = "pdmp")]
    pub source: String,
    /// theta0 | phi0 | optimal | gamma:<g>
    #[arg(long, default_value = "theta0")]
    pub control: String,
    #[arg(long)]
    pub z: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct CompareArgs {
    /// phi0 | gamma:<g>
    #[arg(long, default_value = "phi0")]
    pub strategy: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct FitArgs {
    /// Right end of the value grid (ignored when CHAINSEL_GRID is set)
    #[arg(long, default_value_t = DEFAULT_Z_MAX)]
    pub zmax: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    /// Left end of the fit window
    #[arg(long, default_value_t = 100.0)]
    pub from: f64,
    /// Right end of the fit window (default: end of the grid)
    #[arg(long)]
    pub to: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

fn base(command: &'static str, out: &Option<PathBuf>) -> ExperimentConfig {
    ExperimentConfig { command, out: out.clone(), ..Default::default() }
}

fn finish(cfg: &ExperimentConfig, mut summary: Value, artifact: Option<String>) -> Result<Value, CliError> {
    summary["config"] = serde_json::to_value(cfg)?;
    if let Some(path) = &cfg.out {
        let contents = match artifact {
            Some(csv) => csv,
            None => serde_json::to_string_pretty(&summary)? + "\n",
        };
        write_atomic(path, &contents)?;
    }
    Ok(summary)
}

fn check_reps(reps: u64, min: u64) -> Result<(), CliError> {
    if reps < min {
        return Err(CliError::Config(format!("--reps {reps} is below the minimum {min}")));
    }
    Ok(())
}

fn summary_of(values: &[u64]) -> SummaryStats {
    values.iter().map(|&v| v as f64).collect::<Moments>().summary()
}

fn count_csv(cfg: &ExperimentConfig, counts: &[u64]) -> Result<String, CliError> {
    let mut csv = Csv::new(cfg, &["replicate", "length"])?;
    for (i, c) in counts.iter().enumerate() {
        csv.row(&[i.to_string(), c.to_string()]);
    }
    Ok(csv.into_string())
}

fn fit_or_null<T: serde::Serialize>(r: chainsel::Result<T>) -> Value {
    r.ok().and_then(|m| serde_json::to_value(m).ok()).unwrap_or(Value::Null)
}

pub fn solve(a: SolveArgs) -> Result<Value, CliError> {
    let mut cfg = base("solve", &a.common.out);
    cfg.z_max = Some(a.zmax);
    cfg.h = Some(a.step);
    let grid = solve_value(a.zmax, a.step)?;
    let artifact = if cfg.out.is_some() {
        let mut csv = Csv::new(&cfg, &["z", "u", "u_prime", "theta_star"])?;
        for i in 0..grid.len() {
            csv.row(&[real(grid.z(i)), real(grid.u[i]), real(grid.u_prime[i]), real(grid.theta_star[i])]);
        }
        Some(csv.into_string())
    } else {
        None
    };
    let switch = grid.greedy_switch_z();
    let summary = json!({
        "z_max": grid.z_max,
        "h": grid.h,
        "nodes": grid.len(),
        "u_at_z_max": grid.u.last(),
        "theta_at_z_max": grid.theta_star.last(),
        "greedy_switch_t": switch.map(|z| z * z),
        "c_star_estimate": grid.c_star_estimate,
    });
    finish(&cfg, summary, artifact)
}

pub fn simulate(a: SimulateArgs) -> Result<Value, CliError> {
    let strategy = config::parse_strategy(&a.strategy)?;
    let mut cfg = base("simulate", &a.common.out);
    cfg.strategy = Some(strategy.to_string());
    cfg.gamma = config::gamma_of_strategy(strategy);
    cfg.t = Some(a.t);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    check_reps(a.reps, MIN_REPS)?;
    let window = match strategy {
        StrategyName::Greedy => AcceptanceWindow::greedy(a.t)?,
        StrategyName::Stationary => AcceptanceWindow::stationary(a.t)?,
        StrategyName::Phi0 => AcceptanceWindow::phi0(a.t)?,
        StrategyName::Gamma(g) => AcceptanceWindow::gamma(a.t, g)?,
        StrategyName::Optimal => {
            if !(a.t >= 0.0) || !a.t.is_finite() {
                return Err(CliError::Config(format!("horizon t = {} must be finite and >= 0", a.t)));
            }
            let grid = config::optimal_grid(a.t.sqrt(), &mut cfg)?;
            AcceptanceWindow::optimal(a.t, grid)?
        }
    };
    let lengths = monte_carlo_lengths(&window, a.reps, a.common.seed)?;
    let s = summary_of(&lengths);
    let summary = json!({
        "strategy": strategy.to_string(),
        "t": a.t,
        "reps": a.reps,
        "seed": a.common.seed,
        "mean": s.mean,
        "variance": s.variance,
        "std_error": s.std_error,
        "variance_std_error": s.variance_std_error(),
    });
    let artifact = cfg.out.as_ref().map(|_| count_csv(&cfg, &lengths)).transpose()?;
    finish(&cfg, summary, artifact)
}

pub fn fixed_n(a: FixedNArgs) -> Result<Value, CliError> {
    let mut cfg = base("fixedn", &a.common.out);
    cfg.n = Some(a.n);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    if a.n < 1 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    check_reps(a.reps, MIN_REPS)?;
    let counts = par_replicates(a.reps, a.common.seed, |_, rng| fixed_n_length(a.n, rng));
    let s = summary_of(&counts);
    let summary = json!({
        "strategy": "fixed-n",
        "n": a.n,
        "reps": a.reps,
        "seed": a.common.seed,
        "mean": s.mean,
        "variance": s.variance,
        "std_error": s.std_error,
    });
    let artifact = cfg.out.as_ref().map(|_| count_csv(&cfg, &counts)).transpose()?;
    finish(&cfg, summary, artifact)
}

pub fn pdmp(a: PdmpArgs) -> Result<Value, CliError> {
    let name = config::parse_control(&a.control)?;
    let mut cfg = base("pdmp", &a.common.out);
    cfg.control = Some(name.to_string());
    cfg.gamma = config::gamma_of_control(name);
    cfg.z = Some(a.z);
    cfg.seed = Some(a.common.seed);
    if a.reps > 0 {
        cfg.reps = Some(a.reps);
    }
    let ctrl = config::control(name, a.z, &mut cfg)?;
    let path = simulate_z(&ctrl, a.z, a.common.seed)?;
    let mut summary = json!({
        "control": name.to_string(),
        "z": a.z,
        "seed": a.common.seed,
        "n_jumps": path.n_jumps,
        "total_gap": path.total_gap(),
        "total_drift": path.total_drift(),
    });
    if a.reps > 0 {
        let counts = monte_carlo_jumps(&ctrl, a.z, a.reps, a.common.seed)?;
        let s = summary_of(&counts);
        summary["reps"] = json!(a.reps);
        summary["mean"] = json!(s.mean);
        summary["variance"] = json!(s.variance);
        summary["std_error"] = json!(s.std_error);
    }
    let artifact = if cfg.out.is_some() {
        let mut csv = Csv::new(&cfg, &["jump_point", "gap_size"])?;
        for (z, y) in path.jump_points.iter().zip(&path.gap_sizes) {
            csv.row(&[real(*z), real(*y)]);
        }
        Some(csv.into_string())
    } else {
        None
    };
    finish(&cfg, summary, artifact)
}

pub fn moments(a: MomentsArgs) -> Result<Value, CliError> {
    let name = config::parse_control(&a.control)?;
    let mut cfg = base("moments", &a.common.out);
    cfg.control = Some(name.to_string());
    cfg.gamma = config::gamma_of_control(name);
    cfg.z_max = Some(a.zmax);
    cfg.h = Some(a.step);
    let ctrl = config::control(name, a.zmax, &mut cfg)?;
    let mean = solve_reward(&ctrl, &Reward::Unit, a.zmax, a.step)?;
    let second = solve_second_moment(&ctrl, &mean)?;
    let z = mean.z_values();
    let remainder: Vec<f64> = z
        .iter()
        .zip(&mean.w)
        .map(|(&z, &w)| if z > 0.0 { w - SQRT_2 * z + z.ln() / 6.0 } else { 0.0 })
        .collect();
    let var_remainder: Vec<f64> = z.iter().zip(&second.var).map(|(&z, &v)| v - SQRT_2 * z / 3.0).collect();
    let mean_window = (a.zmax / 3.0, a.zmax);
    let var_window = (a.zmax / 6.0, a.zmax);
    let summary = json!({
        "control": name.to_string(),
        "z_max": a.zmax,
        "h": a.step,
        "u_theta_at_z_max": mean.w.last(),
        "var_at_z_max": second.var.last(),
        "var_over_z_at_z_max": second.var.last().map(|v| v / a.zmax),
        "mean_remainder_fit": fit_or_null(ls_fit(&z, &remainder, &[Basis::Const, Basis::Inverse], mean_window)),
        "variance_log_fit": fit_or_null(ls_fit(&z, &var_remainder, &[Basis::Log, Basis::Const], var_window)),
    });
    let artifact = if cfg.out.is_some() {
        let mut csv = Csv::new(&cfg, &["z", "u_theta", "var"])?;
        for ((z, u), v) in z.iter().zip(&mean.w).zip(&second.var) {
            csv.row(&[real(*z), real(*u), real(*v)]);
        }
        Some(csv.into_string())
    } else {
        None
    };
    finish(&cfg, summary, artifact)
}

pub fn coverage(a: CoverageArgs) -> Result<Value, CliError> {
    let name = config::parse_control(&a.control)?;
    let mut cfg = base("coverage", &a.common.out);
    cfg.control = Some(name.to_string());
    cfg.gamma = config::gamma_of_control(name);
    cfg.z = Some(a.z);
    cfg.grid_step = Some(a.step);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    let ctrl = config::control(name, 2.0 * a.z, &mut cfg)?;
    let c = estimate_coverage(&ctrl, a.z, a.step, a.reps, a.common.seed)?;
    let middle: Vec<f64> = c
        .grid
        .iter()
        .zip(&c.p_hat)
        .filter(|(z, _)| **z >= 0.2 * a.z && **z <= 0.8 * a.z)
        .map(|(_, p)| *p)
        .collect();
    let summary = json!({
        "control": name.to_string(),
        "z0": a.z,
        "reps": a.reps,
        "seed": a.common.seed,
        "mean_p_hat_middle": middle.iter().sum::<f64>() / middle.len().max(1) as f64,
        "max_deviation_from_half_middle": middle.iter().map(|p| (p - 0.5).abs()).fold(0.0, f64::max),
        "exp_fit": c.exp_fit.map(|(a, alpha)| json!({"a": a, "alpha": alpha})),
    });
    let artifact = if cfg.out.is_some() {
        let mut csv = Csv::new(&cfg, &["z", "p_hat", "stderr"])?;
        for i in 0..c.grid.len() {
            csv.row(&[real(c.grid[i]), real(c.p_hat[i]), real(c.stderr[i])]);
        }
        Some(csv.into_string())
    } else {
        None
    };
    finish(&cfg, summary, artifact)
}

pub fn renewal(a: RenewalArgs) -> Result<Value, CliError> {
    let name = config::parse_control(&a.control)?;
    let mut cfg = base("renewal", &a.common.out);
    cfg.control = Some(name.to_string());
    cfg.gamma = config::gamma_of_control(name);
    cfg.z = Some(a.z);
    let z_lower = match a.zlower {
        Some(v) => v,
        None => {
            if !(a.z > 0.0) {
                return Err(CliError::Config(format!("--z {} must be positive", a.z)));
            }
            a.omega * a.z.sqrt()
        }
    };
    cfg.z_lower = Some(z_lower);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    let ctrl = config::control(name, a.z, &mut cfg)?;
    let report = dominance_check(&ctrl, z_lower, a.z, a.reps, a.common.seed)?;
    let summary = serde_json::to_value(&report)?;
    finish(&cfg, summary, None)
}

pub fn clt(a: CltArgs) -> Result<Value, CliError> {
    let mut cfg = base("clt", &a.common.out);
    cfg.source = Some(a.source.clone());
    cfg.z = Some(a.z);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    check_reps(a.reps, MIN_REPS)?;
    if !(a.z >= 100.0) {
        return Err(CliError::Config(format!("--z {} must be at least 100", a.z)));
    }
    let counts: Vec<u64> = match a.source.as_str() {
        "pdmp" => {
            let name = config::parse_control(&a.control)?;
            cfg.control = Some(name.to_string());
            cfg.gamma = config::gamma_of_control(name);
            let ctrl = config::control(name, a.z, &mut cfg)?;
            monte_carlo_jumps(&ctrl, a.z, a.reps, a.common.seed)?
        }
        "renewal" => par_replicates(a.reps, a.common.seed, |_, rng| renewal_count(a.z, rng))
            .into_iter()
            .collect::<chainsel::Result<_>>()?,
        other => return Err(CliError::Config(format!("unknown source '{other}' (expected pdmp | renewal)"))),
    };
    let x: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let stat = clt_statistic(&x, a.z)?;
    let m: Moments = stat.iter().copied().collect();
    let summary = json!({
        "z": a.z,
        "reps": a.reps,
        "ks_distance": ks_distance(&stat),
        "mean": m.mean(),
        "variance": m.variance(),
        "source": a.source,
        "control": cfg.control,
        "seed": a.common.seed,
    });
    finish(&cfg, summary, None)
}

pub fn compare(a: CompareArgs) -> Result<Value, CliError> {
    let strategy = config::parse_strategy(&a.strategy)?;
    let phi = match strategy {
        StrategyName::Phi0 => SelfSimilarPhi::phi0(),
        StrategyName::Gamma(g) => SelfSimilarPhi::gamma(g),
        other => {
            return Err(CliError::Config(format!(
                "compare needs a self-similar strategy (phi0 | gamma:<g>), got {other}"
            )))
        }
    };
    let mut cfg = base("compare", &a.common.out);
    cfg.strategy = Some(strategy.to_string());
    cfg.gamma = config::gamma_of_strategy(strategy);
    cfg.t = Some(a.t);
    cfg.reps = Some(a.reps);
    cfg.seed = Some(a.common.seed);
    check_reps(a.reps, MIN_REPS)?;
    let c = compare_planar_pdmp(&phi, a.t, a.reps, a.common.seed)?;
    let mut summary = serde_json::to_value(&c)?;
    summary["mean_difference_in_se"] = json!(c.mean_z());
    summary["variance_difference_in_se"] = json!(c.variance_z());
    finish(&cfg, summary, None)
}

pub fn fit(a: FitArgs) -> Result<Value, CliError> {
    let mut cfg = base("fit", &a.common.out);
    let grid = if std::env::var_os(config::GRID_ENV).is_some() {
        config::optimal_grid(a.to.unwrap_or(a.from), &mut cfg)?
    } else {
        cfg.z_max = Some(a.zmax);
        cfg.h = Some(a.step);
        cfg.grid = Some("solved".into());
        std::sync::Arc::new(solve_value(a.zmax, a.step)?)
    };
    let window = (a.from, a.to.unwrap_or(grid.z_max));
    cfg.window = Some(window);
    let free = free_log_fit(&grid, window)?;
    let expansion = expansion_residuals(&grid, window)?;
    let summary = json!({
        "window": window,
        "free_fit": free,
        "expansion": expansion,
        "sqrt2_over_144": SQRT_2 / 144.0,
    });
    finish(&cfg, summary, None)
}

