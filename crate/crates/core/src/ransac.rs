//! FDOAR: RANSAC over minimal FDOA samples, each solved by homotopy
//! continuation.
//!
//! Every sample of three measurements gives a system with the same structure,
//! so the family is solved once at a random complex parameter point and each
//! sample is reached by a parameter homotopy from those roots.

use std::io::Write;

use log::{debug, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::builder::{build_fdoa, length_scale_of, minimum_measurements, BuildError, GeoSystem, GeoSystemSpec};
use crate::filter::{fdoa_bound_check, gate_solutions, FeasibleCandidate, GateConfig};
use crate::geometry::{fdoa_forward, FdoaMeasurement, ReceiverPair, ReceiverState, Scenario, Vec3};
use crate::homotopy::{solve, square_up, Gamma, HomotopyError, ParameterBasis, SolveResult, TrackerConfig};
use crate::poly::PolyError;

/// A continuation that loses more than this fraction of the basis roots is
/// redone from scratch.
const MAX_LOST_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub maxiter: usize,
    /// Inlier tolerance, m/s.
    pub epsilon: f64,
    pub sample_size: usize,
    pub rng_seed: u64,
    /// Redraws allowed per iteration before giving up on a sample.
    pub max_resamples: usize,
    pub tracker: TrackerConfig,
    pub gate: GateConfig,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            maxiter: 20,
            epsilon: 0.03,
            sample_size: 3,
            rng_seed: 0,
            max_resamples: 1000,
            tracker: TrackerConfig::default(),
            gate: GateConfig::default(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), RansacError> {
        if self.maxiter == 0 {
            return Err(RansacError::InvalidConfig("maxiter must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(RansacError::InvalidConfig("epsilon must be positive"));
        }
        let need = minimum_measurements(crate::builder::MeasurementMode::FdoaOnly, 3, false).unwrap_or(3);
        if self.sample_size < need {
            return Err(RansacError::InvalidConfig(
                "sample_size is below the minimum for 3D FDOA",
            ));
        }
        self.tracker.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Indices into the scenario's FDOA measurements.
    pub sample: Vec<usize>,
    /// Draws rejected before this sample was accepted.
    pub resamples: usize,
    pub candidates: usize,
    pub best_score: usize,
    /// Solved by a fresh total-degree homotopy instead of the basis.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacEstimate {
    pub emitter: Vec3,
    pub inlier_mask: Vec<bool>,
    pub score: usize,
    pub mean_inlier_residual: f64,
    pub trace: Vec<IterationRecord>,
    /// Roots of the generic member used for continuation, if one was solved.
    pub generic_root_count: Option<usize>,
}

#[derive(Debug, Error)]
pub enum RansacError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("need {need} measurements within the velocity bound, have {have}")]
    TooFewMeasurements { have: usize, need: usize },
    #[error("no feasible candidate in {} iterations", trace.len())]
    NoEstimate { trace: Vec<IterationRecord> },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Consensus of `candidate` with every FDOA measurement: inlier iff
/// `|predicted - measured| < epsilon`.
pub fn count_inliers(candidate: &Vec3, measurements: &[FdoaMeasurement], epsilon: f64) -> (usize, Vec<bool>) {
    let mask: Vec<bool> = measurements
        .iter()
        .map(|m| fdoa_forward(candidate, &m.pair).is_ok_and(|f| (f - m.value).abs() < epsilon))
        .collect();
    (mask.iter().filter(|&&b| b).count(), mask)
}

fn mean_inlier_residual(candidate: &Vec3, measurements: &[FdoaMeasurement], mask: &[bool]) -> f64 {
    let res: Vec<f64> = measurements
        .iter()
        .zip(mask)
        .filter(|(_, &inl)| inl)
        .filter_map(|(m, _)| fdoa_forward(candidate, &m.pair).ok().map(|f| (f - m.value).abs()))
        .collect();
    if res.is_empty() {
        f64::INFINITY
    } else {
        res.iter().sum::<f64>() / res.len() as f64
    }
}

/// The sample with receivers renamed by position, so every sample builds
/// the same family.
fn canonical_sample(measurements: &[FdoaMeasurement], sample: &[usize]) -> Vec<FdoaMeasurement> {
    sample
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let m = &measurements[i];
            let relabel = |rx: &ReceiverState, id: &str| ReceiverState {
                id: id.to_string(),
                epoch: k as i64,
                ..rx.clone()
            };
            FdoaMeasurement {
                pair: ReceiverPair {
                    reference: relabel(&m.pair.reference, "ref"),
                    other: relabel(&m.pair.other, "other"),
                },
                value: m.value,
            }
        })
        .collect()
}

struct Best {
    emitter: Vec3,
    mask: Vec<bool>,
    score: usize,
    mean_residual: f64,
}

impl Best {
    /// Higher score wins; equal scores go to the smaller mean inlier
    /// residual; exact ties keep the earlier candidate.
    fn beats(&self, other: &Option<Best>) -> bool {
        match other {
            None => true,
            Some(o) => self.score > o.score || (self.score == o.score && self.mean_residual < o.mean_residual),
        }
    }
}

/// Runs FDOAR on the FDOA measurements of `scenario`.
pub fn run_fdoar(scenario: &Scenario, config: &RansacConfig) -> Result<RansacEstimate, RansacError> {
    config.validate()?;
    let measurements = scenario.fdoa_measurements();
    let eligible: Vec<usize> = (0..measurements.len())
        .filter(|&i| fdoa_bound_check(&measurements[i], config.gate.fdoa_slack))
        .collect();
    if eligible.len() < config.sample_size {
        return Err(RansacError::TooFewMeasurements {
            have: eligible.len(),
            need: config.sample_size,
        });
    }
    let receivers = scenario.receivers();
    let spec = GeoSystemSpec::fdoa_3d().with_length_unit(length_scale_of(&receivers, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut basis: Option<ParameterBasis> = None;
    let mut best: Option<Best> = None;
    let mut trace = Vec::with_capacity(config.maxiter);

    for iteration in 0..config.maxiter {
        let mut resamples = 0;
        let drawn = loop {
            let picked: Vec<usize> = sample(&mut rng, eligible.len(), config.sample_size)
                .into_iter()
                .map(|j| eligible[j])
                .collect();
            let mut epochs: Vec<i64> = picked.iter().map(|&i| measurements[i].pair.epoch()).collect();
            epochs.sort_unstable();
            epochs.dedup();
            if epochs.len() == picked.len() {
                // a pair with coincident receivers fails to build; draw again
                if let Ok(system) = build_fdoa(&canonical_sample(&measurements, &picked), spec) {
                    if basis.as_ref().is_none_or(|b| b.family().same_structure(&system.family)) {
                        break Some((picked, system));
                    }
                }
            }
            resamples += 1;
            if resamples > config.max_resamples {
                break None;
            }
        };
        let Some((picked, system)) = drawn else {
            warn!("iteration {iteration}: no usable sample after {resamples} draws");
            trace.push(IterationRecord {
                iteration,
                sample: Vec::new(),
                resamples,
                candidates: 0,
                best_score: best.as_ref().map_or(0, |b| b.score),
                fallback: false,
            });
            continue;
        };

        let (result, fallback) = solve_sample(&system, &mut basis, config, &mut rng)?;
        let report = gate_solutions(&result, &system, scenario, &config.tracker, &config.gate);
        debug!(
            "iteration {iteration}: sample {picked:?}, {} feasible, {} rejected",
            report.accepted.len(),
            report.rejected.len()
        );
        for FeasibleCandidate { emitter, .. } in &report.accepted {
            let (score, mask) = count_inliers(emitter, &measurements, config.epsilon);
            let candidate = Best {
                emitter: *emitter,
                mean_residual: mean_inlier_residual(emitter, &measurements, &mask),
                mask,
                score,
            };
            if candidate.beats(&best) {
                best = Some(candidate);
            }
        }
        trace.push(IterationRecord {
            iteration,
            sample: picked,
            resamples,
            candidates: report.accepted.len(),
            best_score: best.as_ref().map_or(0, |b| b.score),
            fallback,
        });
    }

    match best {
        Some(b) => Ok(RansacEstimate {
            emitter: b.emitter,
            inlier_mask: b.mask,
            score: b.score,
            mean_inlier_residual: b.mean_residual,
            trace,
            generic_root_count: basis.map(|b| b.generic_root_count()),
        }),
        None => Err(RansacError::NoEstimate { trace }),
    }
}

/// Minimal samples go through the shared basis; larger ones are squared up
/// and solved directly.
fn solve_sample(
    system: &GeoSystem,
    basis: &mut Option<ParameterBasis>,
    config: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(SolveResult, bool), RansacError> {
    if !system.family.is_square() {
        let target = square_up(&system.concrete()?, rng).normalized();
        return Ok((solve(&target, &config.tracker, Gamma::random(rng))?, true));
    }
    if basis.is_none() {
        *basis = Some(ParameterBasis::compute(&system.family, &config.tracker, rng)?);
    }
    let b = basis.as_ref().expect("just computed");
    // detours cost too much per sample; heavy losses fall back below instead
    let result = b.track_direct(&system.complex_parameters(), &config.tracker)?;
    let kept = result
        .paths
        .iter()
        .filter(|p| p.is_regular_solution(&config.tracker))
        .count();
    let lost = b.generic_root_count().saturating_sub(kept);
    if lost as f64 > MAX_LOST_FRACTION * b.generic_root_count() as f64 {
        warn!(
            "continuation lost {lost} of {} roots; solving from scratch",
            b.generic_root_count()
        );
        let fresh = solve(&system.concrete()?.normalized(), &config.tracker, Gamma::random(rng))?;
        return Ok((fresh, true));
    }
    Ok((result, false))
}

/// Writes the iteration trace as CSV.
pub fn write_trace_csv<W: Write>(out: W, trace: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "sample",
        "resamples",
        "candidates",
        "best_score",
        "fallback",
    ])?;
    for r in trace {
        let sample = r.sample.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([
            r.iteration.to_string(),
            sample,
            r.resamples.to_string(),
            r.candidates.to_string(),
            r.best_score.to_string(),
            r.fallback.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
