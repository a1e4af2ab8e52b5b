//! Monte Carlo harness: random scenarios, FDOA noise, the FDOAR noise sweep
//! and an empirical check of the minimum measurement counts.

use std::io::Write;

use log::info;
use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::builder::{
    add_altitude_constraint, build, minimum_measurements, AltitudeConstraint, BuildError, GeoSystem, GeoSystemSpec,
    MeasurementMode,
};
use crate::geometry::{
    fdoa_forward, tdoa_forward, Emitter, GeometryError, Observation, ReceiverPair, ReceiverState, Scenario, Vec3,
};
use crate::homotopy::{
    add_random_slices, hausdorff_distance, scaled_distance, solve, square_up, Finiteness, Gamma, HomotopyError,
    TrackerConfig,
};
use crate::poly::{PolyError, C64};
use crate::ransac::{run_fdoar, RansacConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("noise needs at least two FDOA measurements to estimate their variance")]
    TooFewForVariance,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Emitter and receivers lie in `[0, cube_side]^3`.
    pub cube_side: f64,
    pub n_pairs: usize,
    /// Range of every velocity component, m/s.
    pub velocity_range: (f64, f64),
    /// Relative FDOA noise levels, percent.
    pub noise_levels: Vec<f64>,
    pub trials_per_level: usize,
    pub ransac: RansacConfig,
    pub rng_seed: u64,
    /// Emitters closer than this to a cube face count as edge trials.
    pub edge_margin: f64,
    /// Standard deviation of Gaussian errors added to the receiver
    /// positions and velocities the solver sees (m, m/s). Off by default.
    pub receiver_position_noise: f64,
    pub receiver_velocity_noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cube_side: 100.0,
            n_pairs: 40,
            velocity_range: (-2.0, 2.0),
            noise_levels: vec![0.0, 5.0, 10.0, 20.0, 40.0],
            trials_per_level: 50,
            ransac: RansacConfig::default(),
            rng_seed: 0,
            edge_margin: 5.0,
            receiver_position_noise: 0.0,
            receiver_velocity_noise: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.cube_side > 0.0 && self.cube_side.is_finite()) {
            return Err(SimError::InvalidConfig("cube_side must be positive"));
        }
        if self.n_pairs == 0 || self.trials_per_level == 0 {
            return Err(SimError::InvalidConfig("n_pairs and trials_per_level must be positive"));
        }
        let (lo, hi) = self.velocity_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(SimError::InvalidConfig("velocity_range must be a nonempty interval"));
        }
        if self.noise_levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(SimError::InvalidConfig("noise levels must be nonnegative"));
        }
        if !(self.edge_margin >= 0.0)
            || !(self.receiver_position_noise >= 0.0)
            || !(self.receiver_velocity_noise >= 0.0)
        {
            return Err(SimError::InvalidConfig("margins and noise scales must be nonnegative"));
        }
        self.ransac
            .validate()
            .map_err(|_| SimError::InvalidConfig("invalid RANSAC settings"))
    }
}

/// Independent seed number `counter` of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(2 * counter as u128);
    rng.next_u64()
}

const GEOMETRY_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const RANSAC_STREAM: u64 = 3;

fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

/// A random emitter and `n_pairs` independent receiver pairs, `rx1`/`rx2` at
/// epochs `0..n_pairs`, with noiseless FDOA values.
pub fn generate_scenario(config: &ExperimentConfig, trial_seed: u64) -> Result<Scenario, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let side = config.cube_side;
    let (vlo, vhi) = config.velocity_range;
    let emitter = uniform_vec(&mut rng, 0.0, side);
    let mut observations = Vec::with_capacity(config.n_pairs);
    for k in 0..config.n_pairs as i64 {
        let a = ReceiverState::new(
            "rx1",
            k,
            uniform_vec(&mut rng, 0.0, side),
            uniform_vec(&mut rng, vlo, vhi),
        )?;
        let b = ReceiverState::new(
            "rx2",
            k,
            uniform_vec(&mut rng, 0.0, side),
            uniform_vec(&mut rng, vlo, vhi),
        )?;
        let pair = ReceiverPair::new(a, b)?;
        let f = fdoa_forward(&emitter, &pair)?;
        observations.push(Observation {
            pair,
            fdoa: Some(f),
            tdoa: None,
        });
    }
    Ok(Scenario::new(observations, Some(Emitter::new(emitter)?), trial_seed)?)
}

/// Sample variance (`n - 1` denominator).
fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Adds zero-mean Gaussian noise of variance `level / 100` times the sample
/// variance of the scenario's FDOA values to each of them.
pub fn add_noise<R: Rng + ?Sized>(scenario: &Scenario, level: f64, rng: &mut R) -> Result<Scenario, SimError> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(SimError::InvalidConfig("noise level must be nonnegative"));
    }
    let values: Vec<f64> = scenario.observations.iter().filter_map(|o| o.fdoa).collect();
    if values.len() < 2 {
        return Err(SimError::TooFewForVariance);
    }
    if level == 0.0 {
        return Ok(scenario.clone());
    }
    let sigma = (level / 100.0 * sample_variance(&values)).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|_| SimError::InvalidConfig("noise scale"))?;
    let mut out = scenario.clone();
    for o in &mut out.observations {
        if let Some(f) = o.fdoa.as_mut() {
            *f += noise.sample(rng);
        }
    }
    Ok(out)
}

fn perturb_receivers<R: Rng + ?Sized>(scenario: &Scenario, pos: f64, vel: f64, rng: &mut R) -> Scenario {
    if pos == 0.0 && vel == 0.0 {
        return scenario.clone();
    }
    let mut out = scenario.clone();
    let mut jitter = |v: &mut Vec3, s: f64| {
        if s > 0.0 {
            let n = Normal::new(0.0, s).expect("positive scale");
            for c in v.iter_mut() {
                *c += n.sample(rng);
            }
        }
    };
    for o in &mut out.observations {
        for rx in [&mut o.pair.reference, &mut o.pair.other] {
            jitter(&mut rx.position, pos);
            jitter(&mut rx.velocity, vel);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub noise_level: f64,
    pub trial: usize,
    /// Seed of the scenario geometry.
    pub seed: u64,
    pub truth: Vec3,
    /// `None` when FDOAR returned no estimate.
    pub estimate: Option<Vec3>,
    /// Metres; infinite when there is no estimate.
    pub error: f64,
    pub score: usize,
    pub iterations: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub noise_level: f64,
    pub median_error: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<LevelSummary>,
}

/// Lower median (element `(n - 1) / 2` after sorting); NaN for no values.
pub fn lower_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// One trial at one noise level. The geometry depends only on the trial
/// index, so every level sees the same scenarios.
pub fn run_trial(config: &ExperimentConfig, level_index: usize, trial: usize) -> Result<TrialRecord, SimError> {
    let level = config.noise_levels[level_index];
    let seed = derive_seed(config.rng_seed, GEOMETRY_STREAM, trial as u64);
    let clean = generate_scenario(config, seed)?;
    let truth = clean.truth.expect("generated with truth").position;
    let counter = (level_index * config.trials_per_level + trial) as u64;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, NOISE_STREAM, counter));
    let noisy = add_noise(&clean, level, &mut noise_rng)?;
    let seen = perturb_receivers(
        &noisy,
        config.receiver_position_noise,
        config.receiver_velocity_noise,
        &mut noise_rng,
    );
    let ransac = RansacConfig {
        rng_seed: derive_seed(config.rng_seed, RANSAC_STREAM, counter),
        ..config.ransac.clone()
    };
    let record = match run_fdoar(&seen, &ransac) {
        Ok(est) => TrialRecord {
            noise_level: level,
            trial,
            seed,
            truth,
            estimate: Some(est.emitter),
            error: (est.emitter - truth).norm(),
            score: est.score,
            iterations: est.trace.len(),
            fallbacks: est.trace.iter().filter(|r| r.fallback).count(),
        },
        Err(e) => {
            info!("level {level}% trial {trial}: no estimate ({e})");
            TrialRecord {
                noise_level: level,
                trial,
                seed,
                truth,
                estimate: None,
                error: f64::INFINITY,
                score: 0,
                iterations: ransac.maxiter,
                fallbacks: 0,
            }
        }
    };
    Ok(record)
}

/// Every trial at every level, in level-major order.
pub fn run_noise_sweep(config: &ExperimentConfig) -> Result<SweepResult, SimError> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.noise_levels.len())
        .flat_map(|l| (0..config.trials_per_level).map(move |t| (l, t)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(l, t)| run_trial(config, l, t))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&records, &config.noise_levels);
    Ok(SweepResult { records, summary })
}

fn summarize(records: &[TrialRecord], levels: &[f64]) -> Vec<LevelSummary> {
    levels
        .iter()
        .map(|&level| {
            let errors: Vec<f64> = records
                .iter()
                .filter(|r| r.noise_level == level)
                .map(|r| r.error)
                .collect();
            LevelSummary {
                noise_level: level,
                median_error: lower_median(&errors),
                trials: errors.len(),
                failures: errors.iter().filter(|e| e.is_infinite()).count(),
            }
        })
        .collect()
}

/// Number of adjacent level pairs whose median decreases.
pub fn median_inversions(summary: &[LevelSummary]) -> usize {
    summary
        .windows(2)
        .filter(|w| w[1].median_error < w[0].median_error)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEffect {
    pub noise_level: f64,
    pub edge_trials: usize,
    pub interior_trials: usize,
    pub edge_median: f64,
    pub interior_median: f64,
}

impl EdgeEffect {
    /// Edge trials did worse than interior ones.
    pub fn edge_is_worse(&self) -> bool {
        self.edge_median > self.interior_median
    }
}

/// Splits each level's trials by whether the emitter lies within `margin`
/// of a cube face and compares median errors.
pub fn edge_effect_report(records: &[TrialRecord], levels: &[f64], cube_side: f64, margin: f64) -> Vec<EdgeEffect> {
    let near_edge = |p: &Vec3| p.iter().any(|&c| c < margin || c > cube_side - margin);
    levels
        .iter()
        .map(|&level| {
            let (edge, interior): (Vec<&TrialRecord>, Vec<&TrialRecord>) = records
                .iter()
                .filter(|r| r.noise_level == level)
                .partition(|r| near_edge(&r.truth));
            let med = |rs: &[&TrialRecord]| lower_median(&rs.iter().map(|r| r.error).collect::<Vec<_>>());
            EdgeEffect {
                noise_level: level,
                edge_trials: edge.len(),
                interior_trials: interior.len(),
                edge_median: med(&edge),
                interior_median: med(&interior),
            }
        })
        .collect()
}

pub fn write_results_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "noise_level_pct",
        "trial",
        "seed",
        "truth_x",
        "truth_y",
        "truth_z",
        "est_x",
        "est_y",
        "est_z",
        "error_m",
        "score",
    ])?;
    for r in records {
        let est = r.estimate.unwrap_or(Vec3::repeat(f64::NAN));
        w.write_record([
            r.noise_level.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.truth.x.to_string(),
            r.truth.y.to_string(),
            r.truth.z.to_string(),
            est.x.to_string(),
            est.y.to_string(),
            est.z.to_string(),
            r.error.to_string(),
            r.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summary: &[LevelSummary]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["noise_level_pct", "median_error_m", "trials"])?;
    for s in summary {
        w.write_record([
            s.noise_level.to_string(),
            s.median_error.to_string(),
            s.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one solve in the bounds experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Isolated solutions, truth among them.
    Finite,
    /// The truth lies on a positive-dimensional solution set.
    NonFinite,
    /// Neither picture was confirmed.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRepeat {
    pub seed: u64,
    pub at_minimum: Verdict,
    pub below_minimum: Verdict,
    /// Local dimension of the solution set through the truth at the minimum
    /// and one below it.
    pub local_dimension: (usize, usize),
    pub solutions_at_minimum: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub mode: MeasurementMode,
    pub dimension: usize,
    pub altitude: bool,
    pub minimum: usize,
    pub repeats: Vec<BoundsRepeat>,
}

impl BoundsReport {
    /// Every repeat found a finite set at the minimum and none below it.
    pub fn confirmed(&self) -> bool {
        !self.repeats.is_empty()
            && self
                .repeats
                .iter()
                .all(|r| r.at_minimum == Verdict::Finite && r.below_minimum == Verdict::NonFinite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsConfig {
    pub repeats: usize,
    pub rng_seed: u64,
    pub cube_side: f64,
    pub velocity_range: (f64, f64),
    pub tracker: TrackerConfig,
    /// Singular values below this fraction of the largest count as zero.
    pub rank_tolerance: f64,
    /// Scaled distance within which a solution matches the truth.
    pub match_tolerance: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            rng_seed: 0,
            cube_side: 100.0,
            velocity_range: (-2.0, 2.0),
            tracker: TrackerConfig::default(),
            rank_tolerance: 1e-8,
            match_tolerance: 1e-6,
        }
    }
}

/// A generic noiseless scenario with `count` measurements of the given mode.
/// TDOA-only measurements share one reference receiver; the other modes use
/// a fresh receiver pair per epoch. In 2D everything lies in `z = 0`.
pub fn generate_mode_scenario(
    mode: MeasurementMode,
    dimension: usize,
    count: usize,
    config: &BoundsConfig,
    seed: u64,
) -> Result<Scenario, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = config.cube_side;
    let (vlo, vhi) = config.velocity_range;
    let flat = |mut v: Vec3| {
        if dimension == 2 {
            v.z = 0.0;
        }
        v
    };
    let emitter = flat(uniform_vec(&mut rng, 0.0, side));
    let reference = ReceiverState::new("ref", 0, flat(uniform_vec(&mut rng, 0.0, side)), Vec3::zeros())?;
    let mut observations = Vec::with_capacity(count);
    for k in 0..count {
        let pair = match mode {
            MeasurementMode::TdoaOnly => ReceiverPair::new(
                reference.clone(),
                ReceiverState::new(
                    format!("rx{}", k + 1),
                    0,
                    flat(uniform_vec(&mut rng, 0.0, side)),
                    Vec3::zeros(),
                )?,
            )?,
            _ => {
                let mut rx = |id: &str| {
                    let p = flat(uniform_vec(&mut rng, 0.0, side));
                    let v = flat(uniform_vec(&mut rng, vlo, vhi));
                    ReceiverState::new(id, k as i64, p, v)
                };
                let a = rx("rx1")?;
                let b = rx("rx2")?;
                ReceiverPair::new(a, b)?
            }
        };
        let fdoa = matches!(mode, MeasurementMode::FdoaOnly | MeasurementMode::TdoaFdoa)
            .then(|| fdoa_forward(&emitter, &pair))
            .transpose()?;
        let tdoa = matches!(mode, MeasurementMode::TdoaOnly | MeasurementMode::TdoaFdoa)
            .then(|| tdoa_forward(&emitter, &pair))
            .transpose()?;
        observations.push(Observation { pair, fdoa, tdoa });
    }
    Ok(Scenario::new(observations, Some(Emitter::new(emitter)?), seed)?)
}

fn build_with_altitude(scenario: &Scenario, spec: GeoSystemSpec, altitude: bool) -> Result<GeoSystem, SimError> {
    let system = build(scenario, spec)?;
    if !altitude {
        return Ok(system);
    }
    let h = scenario.truth.expect("generated with truth").position.z;
    Ok(add_altitude_constraint(
        &system,
        AltitudeConstraint::Flat { altitude: h },
    )?)
}

/// `n - rank(J)` of the system at `z`.
fn local_dimension(system: &GeoSystem, z: &[C64], tolerance: f64) -> Result<usize, SimError> {
    let jac: DMatrix<C64> = system.concrete()?.jacobian(z)?;
    let n = jac.ncols();
    if jac.nrows() == 0 {
        return Ok(n);
    }
    let sv = jac.singular_values();
    let top = sv.max();
    let rank = sv.iter().filter(|&&s| s > tolerance * top).count();
    Ok(n - rank)
}

fn contains(points: &[Vec<C64>], z: &[C64], tol: f64) -> bool {
    points.iter().any(|p| scaled_distance(p, z) <= tol)
}

/// Solves at `count` measurements and reports `(verdict, local dimension,
/// number of distinct solutions)`.
fn bounds_verdict(
    mode: MeasurementMode,
    dimension: usize,
    altitude: bool,
    count: usize,
    config: &BoundsConfig,
    seed: u64,
) -> Result<(Verdict, usize, usize), SimError> {
    let free = dimension - usize::from(altitude);
    if count == 0 {
        // no measurements: the emitter ranges over the whole feasible space
        return Ok((Verdict::NonFinite, free, 0));
    }
    let scenario = generate_mode_scenario(mode, dimension, count, config, seed)?;
    let spec = GeoSystemSpec::new(mode, dimension);
    let system = build_with_altitude(&scenario, spec, altitude)?;
    let truth = system
        .layout
        .lift_complex(&scenario.truth.expect("generated with truth").position);
    let target = system.concrete()?;
    let n = target.n_vars();
    let m = target.n_equations();
    let dim = local_dimension(&system, &truth, config.rank_tolerance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);

    if m >= n {
        let square = square_up(&target, &mut rng).normalized();
        let result = solve(&square, &config.tracker, Gamma::random(&mut rng))?;
        let found = contains(&result.distinct_solutions, &truth, config.match_tolerance);
        let verdict = if dim == 0 && found && result.finiteness == Finiteness::Finite {
            Verdict::Finite
        } else if dim > 0 {
            Verdict::NonFinite
        } else {
            Verdict::Inconclusive
        };
        return Ok((verdict, dim, result.distinct_solutions.len()));
    }

    // Underdetermined: cut with random slices twice. A finite set through the
    // truth would reappear in both witness sets; a positive-dimensional one
    // gives different points that miss the truth.
    let deficit = n - m;
    let mut witness = Vec::new();
    for _ in 0..2 {
        let sliced = add_random_slices(&target, deficit, 1.0, &mut rng).normalized();
        witness.push(solve(&sliced, &config.tracker, Gamma::random(&mut rng))?.distinct_solutions);
    }
    let moved = hausdorff_distance(&witness[0], &witness[1]) > config.match_tolerance;
    let missed = !witness.iter().any(|w| contains(w, &truth, config.match_tolerance));
    let verdict = if dim > 0 && moved && missed {
        Verdict::NonFinite
    } else {
        Verdict::Inconclusive
    };
    Ok((verdict, dim, 0))
}

/// Checks one cell of the minimum-measurement table: finite at the minimum,
/// positive-dimensional one below it, on `config.repeats` random scenarios.
pub fn verify_measurement_bounds(
    mode: MeasurementMode,
    dimension: usize,
    altitude: bool,
    config: &BoundsConfig,
) -> Result<BoundsReport, SimError> {
    let minimum = minimum_measurements(mode, dimension, altitude)
        .ok_or(SimError::InvalidConfig("no minimum defined for this combination"))?;
    let cell = (mode as u64) * 100 + (dimension as u64) * 10 + u64::from(altitude);
    let mut repeats = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let seed = derive_seed(config.rng_seed, cell, r as u64);
        let (at, dim_at, count) = bounds_verdict(mode, dimension, altitude, minimum, config, seed)?;
        let (below, dim_below, _) = bounds_verdict(mode, dimension, altitude, minimum - 1, config, seed)?;
        repeats.push(BoundsRepeat {
            seed,
            at_minimum: at,
            below_minimum: below,
            local_dimension: (dim_at, dim_below),
            solutions_at_minimum: count,
        });
    }
    Ok(BoundsReport {
        mode,
        dimension,
        altitude,
        minimum,
        repeats,
    })
}
