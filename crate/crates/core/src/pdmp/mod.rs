//! The decreasing piecewise-deterministic Markov process `Z|z0`: unit drift
//! towards 0, jumps at rate `4λ(z)` with sizes of density `(1 - y/z)/λ(z)`
//! on `[0, θ(z)]`, where `λ(z) = θ(z) - θ(z)²/(2z)`.
//!
//! Each jump corresponds to one selection of the planar process under the
//! self-similar window matched to `θ`.

mod compare;
mod control;
mod coverage;
mod moments;
mod path;

pub use compare::{compare_planar_pdmp, PlanarPdmpComparison};
pub use control::{ControlFunction, ControlName};
pub use coverage::{estimate_coverage, CoverageEstimate, MIN_COVERAGE_REPS, MIN_COVERAGE_Z0};
pub use moments::{solve_reward, solve_second_moment, Reward, RewardCurve, SecondMoment};
pub use path::{count_jumps, jump_size, monte_carlo_jumps, simulate_z, simulate_z_with, PDMPPath};
