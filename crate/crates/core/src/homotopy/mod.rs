//! Homotopy continuation.
//!
//! A square target system `f` is solved by deforming the total-degree start
//! system `g_i = z_i^{d_i} - 1` along `H(z, t) = gamma t g(z) + (1 - t) f(z)`
//! from `t = 1` to `t = 0` with a predictor-corrector path tracker. A solved
//! generic member of a parameterized family can then be moved to other
//! parameter values by tracking only its finite roots ([`ParameterBasis`]).

mod parameter;
mod solve;
mod start;
mod tracker;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::poly::{PolyError, C64};

pub use parameter::{parameter_solve, random_parameter_point, ParameterBasis, ParameterHomotopy};
pub use solve::{add_random_slices, hausdorff_distance, scaled_distance, solve, solve_from, square_up};
pub use start::{start_points, start_system};
pub use tracker::{track_path, track_path_with_trace, write_trace_csv, Homotopy, StraightLineHomotopy, TracePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error("system is not square: {equations} equations in {unknowns} unknowns")]
    NotSquare { equations: usize, unknowns: usize },
    #[error("equation {0} has degree zero")]
    ZeroDegree(usize),
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("start point has residual {0:e} in the start system")]
    BadStartPoint(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Path tracker settings. `t` runs from 1 down to `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Corrector stops once the residual, or the Newton update relative to
    /// `1 + |z|`, drops below this.
    pub newton_tolerance: f64,
    pub max_newton_iters: usize,
    /// Paths are truncated once `|z|` exceeds this.
    pub divergence_norm: f64,
    pub t_end: f64,
    /// Endpoint residual (scaled target system) required for `Converged`.
    pub success_residual: f64,
    pub step_shrink: f64,
    pub step_grow: f64,
    pub max_steps: usize,
    /// Newton iterations spent refining the endpoint at `t_end`.
    pub final_newton_iters: usize,
    /// Endpoints closer than this (see [`scaled_distance`]) are merged.
    pub dedup_radius: f64,
    /// Endpoints whose Jacobian condition number exceeds this are singular.
    pub singular_condition: f64,
    /// Rounds of re-tracking, with smaller steps, for paths that collided or stalled.
    pub retrack_rounds: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-7,
            max_step: 0.2,
            newton_tolerance: 1e-10,
            max_newton_iters: 4,
            divergence_norm: 1e8,
            t_end: 0.0,
            success_residual: 1e-8,
            step_shrink: 0.5,
            step_grow: 1.5,
            max_steps: 20_000,
            final_newton_iters: 8,
            dedup_radius: 1e-6,
            singular_condition: 1e10,
            retrack_rounds: 2,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), HomotopyError> {
        let positive = [
            self.initial_step,
            self.min_step,
            self.max_step,
            self.newton_tolerance,
            self.divergence_norm,
            self.success_residual,
            self.dedup_radius,
            self.singular_condition,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HomotopyError::InvalidConfig("tolerances and steps must be positive"));
        }
        if self.min_step >= self.max_step {
            return Err(HomotopyError::InvalidConfig("min_step must be below max_step"));
        }
        if !(0.0 < self.step_shrink && self.step_shrink < 1.0 && self.step_grow >= 1.0) {
            return Err(HomotopyError::InvalidConfig("need 0 < step_shrink < 1 <= step_grow"));
        }
        if !(0.0..1.0).contains(&self.t_end) {
            return Err(HomotopyError::InvalidConfig("t_end must lie in [0, 1)"));
        }
        if self.max_newton_iters == 0 || self.max_steps == 0 {
            return Err(HomotopyError::InvalidConfig("iteration limits must be positive"));
        }
        Ok(())
    }

    /// Same settings with every step bound divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            initial_step: self.initial_step / factor,
            max_step: self.max_step / factor,
            min_step: self.min_step / factor,
            max_steps: self.max_steps * factor.ceil() as usize,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathStatus {
    Converged,
    Diverged,
    Stalled,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub endpoint: Vec<C64>,
    pub status: PathStatus,
    /// Residual of the (scaled) target system at `endpoint`, each equation
    /// divided by `max(1, |endpoint|_inf)^degree`.
    pub final_residual: f64,
    pub steps_taken: usize,
    /// Smallest `min |u_ii| / max |u_ii|` over the corrector LU factors seen
    /// along the path; small values flag near-singular Jacobians.
    pub min_jacobian_condition_proxy: f64,
    /// 2-norm condition number of the target Jacobian at `endpoint`.
    pub endpoint_condition: f64,
    /// Value of `t` where tracking stopped.
    pub t_reached: f64,
}

impl PathResult {
    pub fn is_converged(&self) -> bool {
        self.status == PathStatus::Converged
    }

    pub fn is_singular(&self, config: &TrackerConfig) -> bool {
        !(self.endpoint_condition < config.singular_condition)
    }

    /// Converged to a nonsingular root.
    pub fn is_regular_solution(&self, config: &TrackerConfig) -> bool {
        self.is_converged() && !self.is_singular(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finiteness {
    Finite,
    SuspectPositiveDimensional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub paths: Vec<PathResult>,
    /// Nonsingular converged endpoints, deduplicated and sorted.
    pub distinct_solutions: Vec<Vec<C64>>,
    /// Endpoints with small residual but a rank-deficient Jacobian.
    pub singular_endpoints: Vec<Vec<C64>>,
    pub finiteness: Finiteness,
}

impl SolveResult {
    pub fn converged_count(&self) -> usize {
        self.paths.iter().filter(|p| p.is_converged()).count()
    }
}

/// Unit-modulus constant multiplying the start system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma(pub C64);

impl Gamma {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        Self(Complex64::from_polar(1.0, theta))
    }
}
