//! Monte Carlo of the planar selection process.
//!
//! Rejected atoms never change the state `(s, y)`, so only acceptance
//! events are generated: between selections they form a Poisson process in
//! `s` with rate `ψ(t, s, y)`, sampled here by thinning against a local
//! bound. For windows that are non-decreasing in `s` the bound over
//! `[s, s_end]` is `ψ(t, s_end, y)`, and `s_end` halves the remaining time,
//! which keeps the work per run proportional to the selected length.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{par_replicates, replicate_rng, StreamRng};
use crate::stats::{Moments, SummaryStats};
use crate::strategies::AcceptanceWindow;

/// Minimum replicate count for Monte Carlo summaries.
pub const MIN_REPS: u64 = 100;

/// One realization of the selection process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRun {
    pub t: f64,
    /// Selected atoms `(s, x)` in time order.
    pub chain: Vec<(f64, f64)>,
    pub length: usize,
    pub final_y: f64,
}

impl SelectionRun {
    /// Strictly increasing in both coordinates.
    pub fn is_chain(&self) -> bool {
        self.chain.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 < p[1].1)
            && self.chain.iter().all(|&(s, x)| s > 0.0 && s <= self.t && x > 0.0 && x <= 1.0)
    }
}

/// Drives the acceptance process, calling `on_accept(s, y_before, x, ψ)`
/// for each selection. Returns the number of selections and the final `y`.
pub(crate) fn drive<R, F>(w: &AcceptanceWindow, rng: &mut R, mut on_accept: F) -> Result<(usize, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64, f64, f64),
{
    let t = w.horizon;
    let monotone = w.nondecreasing_in_time();
    let (mut s, mut y, mut count) = (0.0_f64, 0.0_f64, 0usize);
    while s < t && y < 1.0 {
        let s_end = if monotone && t - s > 1.0 { s + 0.5 * (t - s) } else { t };
        let bound = w.rate_bound(s_end, y, monotone)?;
        if !(bound > 0.0) {
            s = s_end;
            continue;
        }
        let gap: f64 = rng.sample(Exp1);
        let cand = s + gap / bound;
        if cand >= s_end {
            s = s_end;
            continue;
        }
        s = cand;
        let psi = w.width(s, y)?;
        if psi > bound * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "window {psi} exceeds its thinning bound {bound} at s = {s}"
            )));
        }
        if rng.random::<f64>() * bound < psi {
            // (0, 1] keeps the increment strictly positive
            let frac = 1.0 - rng.random::<f64>();
            let x = (y + frac * psi).min(1.0);
            if x <= y {
                continue;
            }
            on_accept(s, y, x, psi);
            y = x;
            count += 1;
        }
    }
    Ok((count, y))
}

/// Simulates one run, recording the selected chain.
pub fn simulate_selection_with<R: Rng + ?Sized>(w: &AcceptanceWindow, rng: &mut R) -> Result<SelectionRun> {
    let mut chain = Vec::new();
    let (length, final_y) = drive(w, rng, |s, _, x, _| chain.push((s, x)))?;
    Ok(SelectionRun { t: w.horizon, chain, length, final_y })
}

/// Simulates one run on replicate stream 0 of `seed`.
pub fn simulate_selection(w: &AcceptanceWindow, seed: u64) -> Result<SelectionRun> {
    simulate_selection_with(w, &mut replicate_rng(seed, 0))
}

/// Number of selections on one stream.
pub fn selection_length<R: Rng + ?Sized>(w: &AcceptanceWindow, rng: &mut R) -> Result<u64> {
    drive(w, rng, |_, _, _, _| {}).map(|(n, _)| n as u64)
}

/// Selected lengths of `reps` independent replicates, in replicate order.
pub fn monte_carlo_lengths(w: &AcceptanceWindow, reps: u64, seed: u64) -> Result<Vec<u64>> {
    if reps < MIN_REPS {
        return Err(Error::config(format!("reps = {reps} must be at least {MIN_REPS}")));
    }
    par_replicates(reps, seed, |_, rng| selection_length(w, rng))
        .into_iter()
        .collect()
}

/// Summary of selected lengths across replicates.
pub fn monte_carlo_length(w: &AcceptanceWindow, reps: u64, seed: u64) -> Result<SummaryStats> {
    let lengths = monte_carlo_lengths(w, reps, seed)?;
    Ok(lengths.iter().map(|&l| l as f64).collect::<Moments>().summary())
}

/// Fixed-n rule: observation `m` of `n` with mark `x` is accepted iff
/// `0 < (x - y)/(1 - y) < sqrt(2/((n - m + 1)(1 - y))) ∧ 1`.
pub fn fixed_n_length<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    let mut y = 0.0_f64;
    let mut count = 0;
    for m in 1..=n {
        let x: f64 = rng.random();
        if x <= y {
            continue;
        }
        let room = 1.0 - y;
        let ratio = (x - y) / room;
        let remaining = (n - m + 1) as f64;
        let window = (2.0 / (remaining * room)).sqrt().min(1.0);
        if ratio < window {
            y = x;
            count += 1;
        }
    }
    count
}

/// One fixed-n run on replicate stream 0 of `seed`.
pub fn simulate_fixed_n(n: u64, seed: u64) -> Result<u64> {
    if n < 1 {
        return Err(Error::domain("fixed-n problem needs n >= 1"));
    }
    Ok(fixed_n_length(n, &mut replicate_rng(seed, 0)))
}

pub fn monte_carlo_fixed_n(n: u64, reps: u64, seed: u64) -> Result<SummaryStats> {
    if n < 1 {
        return Err(Error::domain("fixed-n problem needs n >= 1"));
    }
    if reps < MIN_REPS {
        return Err(Error::config(format!("reps = {reps} must be at least {MIN_REPS}")));
    }
    let counts = par_replicates(reps, seed, |_, rng| fixed_n_length(n, rng));
    Ok(counts.iter().map(|&c| c as f64).collect::<Moments>().summary())
}

/// `sqrt(3) (L - sqrt(2t)) / (2t)^{1/4}` for the stationary strategy.
pub fn stationary_statistic(length: u64, t: f64) -> f64 {
    3f64.sqrt() * (length as f64 - (2.0 * t).sqrt()) / (2.0 * t).powf(0.25)
}

/// Moments of the normalized stationary-strategy length.
///
/// The stationary window `(1 - y) ∧ sqrt(2/t)` turns greedy by itself once
/// the running maximum passes `1 - sqrt(2/t)`.
pub fn stationary_limit_stat(t: f64, reps: u64, seed: u64) -> Result<SummaryStats> {
    if !(t >= 1e4) {
        return Err(Error::domain(format!("stationary limit statistic needs t >= 1e4, got {t}")));
    }
    let w = AcceptanceWindow::stationary(t)?;
    let lengths = monte_carlo_lengths(&w, reps, seed)?;
    let stats: Moments = lengths.iter().map(|&l| stationary_statistic(l, t)).collect();
    Ok(stats.summary())
}

/// Normalized increments `(x - y)/ψ` of all selections in a run.
pub fn normalized_increments(w: &AcceptanceWindow, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    drive(w, rng, |_, y, x, psi| out.push((x - y) / psi))?;
    Ok(out)
}
