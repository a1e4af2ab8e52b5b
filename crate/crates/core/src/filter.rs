//! From complex endpoints to physically feasible emitter positions.

use thiserror::Error;

use crate::builder::{planar_distance, GeoSystem, UnknownLayout};
use crate::geometry::{fdoa_forward, FdoaMeasurement, Scenario, Vec3};
use crate::homotopy::{scaled_distance, SolveResult, TrackerConfig};
use crate::poly::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// An endpoint is real when `max |im| <= real_tolerance * max |re|`.
    pub real_tolerance: f64,
    /// Ranges at or below this many metres are rejected.
    pub range_floor: f64,
    /// Allowed `| |e - x_k| - r_k |` relative to `1 + r_k`.
    pub range_consistency_tol: f64,
    /// Added to the velocity bound when screening measurements.
    pub fdoa_slack: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            real_tolerance: 1e-6,
            range_floor: 1e-6,
            range_consistency_tol: 1e-6,
            fdoa_slack: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("endpoint is not real")]
    Complex,
    #[error("range {index} is {value:e} m")]
    NonpositiveRange { index: usize, value: f64 },
    #[error("range {index} is off by {error:e} m from the emitter distance")]
    RangeInconsistent { index: usize, error: f64 },
    #[error("predicted FDOA for measurement {index} exceeds the velocity bound")]
    FdoaBound { index: usize },
}

impl Rejection {
    pub fn label(&self) -> &'static str {
        match self {
            Rejection::Complex => "complex",
            Rejection::NonpositiveRange { .. } => "nonpositive-range",
            Rejection::RangeInconsistent { .. } => "range-inconsistent",
            Rejection::FdoaBound { .. } => "fdoa-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleCandidate {
    pub emitter: Vec3,
    /// Emitter-receiver distances, recomputed from `emitter`, in layout order.
    pub ranges: Vec<f64>,
    /// Residual of the path endpoint in the scaled system.
    pub residual: f64,
    /// Index of the path that produced the endpoint.
    pub path_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealSolution {
    pub values: Vec<f64>,
    /// Position in the input list.
    pub index: usize,
}

pub fn is_real(z: &[C64], tolerance: f64) -> bool {
    let re = z.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let im = z.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    im <= tolerance * re
}

/// Keeps the (nearly) real solutions and drops their imaginary parts.
pub fn extract_real(solutions: &[Vec<C64>], tolerance: f64) -> Vec<RealSolution> {
    solutions
        .iter()
        .enumerate()
        .filter(|(_, z)| is_real(z, tolerance))
        .map(|(index, z)| RealSolution {
            values: z.iter().map(|c| c.re).collect(),
            index,
        })
        .collect()
}

/// True when `|f| <= |v_ref| + |v_other| + slack`.
pub fn fdoa_bound_check(measurement: &FdoaMeasurement, slack: f64) -> bool {
    measurement.value.abs() <= measurement.pair.fdoa_bound() + slack
}

/// Checks one endpoint of a system built from `scenario`.
pub fn feasibility_gate(
    endpoint: &[C64],
    path_index: usize,
    residual: f64,
    layout: &UnknownLayout,
    scenario: &Scenario,
    config: &GateConfig,
) -> Result<FeasibleCandidate, Rejection> {
    if !is_real(endpoint, config.real_tolerance) {
        return Err(Rejection::Complex);
    }
    let z: Vec<f64> = endpoint.iter().map(|c| c.re).collect();
    let emitter = layout.emitter_of(&z);
    let mut ranges = Vec::with_capacity(layout.ranges.len());
    for (k, r) in layout.ranges.iter().enumerate() {
        let value = layout.range_of(&z, r.index);
        if !(value > config.range_floor) {
            return Err(Rejection::NonpositiveRange { index: k, value });
        }
        let actual = planar_distance(&emitter, &r.position, layout.dimension);
        let error = (actual - value).abs();
        if !(error <= config.range_consistency_tol * (1.0 + value)) {
            return Err(Rejection::RangeInconsistent { index: k, error });
        }
        ranges.push(actual);
    }
    // Every measurement must have a defined prediction at the candidate.
    for (k, rx) in scenario.receivers().into_iter().enumerate() {
        let d = planar_distance(&emitter, &rx.position, layout.dimension);
        if !(d > config.range_floor) {
            return Err(Rejection::NonpositiveRange {
                index: layout.ranges.len() + k,
                value: d,
            });
        }
    }
    for (k, m) in scenario.fdoa_measurements().iter().enumerate() {
        let predicted = fdoa_forward(&emitter, &m.pair).map_err(|_| Rejection::FdoaBound { index: k })?;
        // Holds for any real emitter; checked so a violation is reported rather than assumed.
        if !(predicted.abs() <= m.pair.fdoa_bound() * (1.0 + 1e-12)) {
            return Err(Rejection::FdoaBound { index: k });
        }
    }
    Ok(FeasibleCandidate {
        emitter,
        ranges,
        residual,
        path_index,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateReport {
    pub accepted: Vec<FeasibleCandidate>,
    pub rejected: Vec<(usize, Rejection)>,
}

/// Gates every distinct and singular endpoint of `result`. Each endpoint is
/// attributed to the first path that reached it.
pub fn gate_solutions(
    result: &SolveResult,
    system: &GeoSystem,
    scenario: &Scenario,
    tracker: &TrackerConfig,
    config: &GateConfig,
) -> GateReport {
    let mut report = GateReport::default();
    for z in result.distinct_solutions.iter().chain(&result.singular_endpoints) {
        let (path_index, residual) = result
            .paths
            .iter()
            .enumerate()
            .find(|(_, p)| scaled_distance(&p.endpoint, z) <= tracker.dedup_radius)
            .map(|(i, p)| (i, p.final_residual))
            .unwrap_or((usize::MAX, f64::NAN));
        match feasibility_gate(z, path_index, residual, &system.layout, scenario, config) {
            Ok(c) => report.accepted.push(c),
            Err(r) => report.rejected.push((path_index, r)),
        }
    }
    report
}
