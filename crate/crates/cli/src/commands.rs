use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use fdoar::builder::{build, minimum_measurements, AltitudeConstraint, GeoSystemSpec, MeasurementMode};
use fdoar::filter::{feasibility_gate, GateConfig};
use fdoar::geometry::Scenario;
use fdoar::homotopy::{solve as homotopy_solve, square_up, Gamma, TrackerConfig};
use fdoar::poly::C64;
use fdoar::ransac::{run_fdoar, write_trace_csv, RansacConfig, RansacError};
use fdoar::scenario_file::ScenarioFile;
use fdoar::sim::{
    edge_effect_report, median_inversions, run_noise_sweep, verify_measurement_bounds, write_results_csv,
    write_summary_csv, BoundsConfig, ExperimentConfig, Verdict,
};

use crate::output::write_atomic;
use crate::{BoundsArgs, FdoarArgs, SolveArgs, SweepArgs};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn input(e: impl Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn infeasible(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Endpoints whose residual on the original (not squared-up) system exceeds
/// this are artefacts of squaring up.
const SPURIOUS_RESIDUAL: f64 = 1e-8;

fn load(path: &Path, seed: u64) -> Result<Scenario, Failure> {
    let file = ScenarioFile::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    file.to_scenario(seed)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn infer_mode(scenario: &Scenario) -> Result<MeasurementMode, Failure> {
    let obs = &scenario.observations;
    let both = obs.iter().all(|o| o.fdoa.is_some() && o.tdoa.is_some());
    let fdoa = obs.iter().all(|o| o.fdoa.is_some() && o.tdoa.is_none());
    let tdoa = obs.iter().all(|o| o.fdoa.is_none() && o.tdoa.is_some());
    match (fdoa, tdoa, both) {
        (true, _, _) => Ok(MeasurementMode::FdoaOnly),
        (_, true, _) => Ok(MeasurementMode::TdoaOnly),
        (_, _, true) => Ok(MeasurementMode::TdoaFdoa),
        _ => Err(input("measurements must all carry the same kinds of values")),
    }
}

fn max_imag(z: &[C64]) -> f64 {
    z.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
}

pub fn solve(args: &SolveArgs, seed: u64) -> Result<(), Failure> {
    let scenario = load(&args.scenario, seed)?;
    let mode = infer_mode(&scenario)?;
    let mut spec = GeoSystemSpec::new(mode, args.dim);
    if let Some(h) = args.altitude {
        spec = spec.with_altitude(AltitudeConstraint::Flat { altitude: h });
    }
    let system = build(&scenario, spec).map_err(input)?;
    for w in &system.warnings {
        eprintln!("warning: {w:?}");
    }
    let target = system.concrete().map_err(input)?;
    let (m, n) = (target.n_equations(), target.n_vars());
    if m < n {
        let need = minimum_measurements(mode, args.dim, args.altitude.is_some())
            .map_or_else(|| "more".to_string(), |k| k.to_string());
        return Err(input(format!(
            "{m} equations in {n} unknowns: {} {} measurements need at least {need}",
            mode.label(),
            if args.dim == 2 { "2D" } else { "3D" }
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let square = if m > n {
        square_up(&target, &mut rng)
    } else {
        target.clone()
    };
    let paths = square.total_degree();
    if paths > args.max_paths {
        return Err(input(format!(
            "total-degree solve needs {paths} paths (limit {}); use `fdoar fdoar` for large scenarios",
            args.max_paths
        )));
    }
    let tracker = TrackerConfig::default();
    let result = homotopy_solve(&square.normalized(), &tracker, Gamma::random(&mut rng)).map_err(input)?;
    let original = target.normalized();
    let gate = GateConfig::default();

    println!(
        "mode {} | {}D | {n} unknowns | {m} equations | {paths} paths | {} converged | solution set {:?}",
        mode.label(),
        args.dim,
        result.converged_count(),
        result.finiteness
    );
    println!(
        "{:>4}  {:>14} {:>14} {:>14}  {:>9}  {:>9}  verdict",
        "#", "x", "y", "z", "max|im|", "residual"
    );
    let mut feasible = 0;
    let mut tally = BTreeMap::new();
    let endpoints = result
        .distinct_solutions
        .iter()
        .map(|z| (z, false))
        .chain(result.singular_endpoints.iter().map(|z| (z, true)));
    for (k, (z, singular)) in endpoints.enumerate() {
        let residual = original.residual_norm(z).map_err(input)?;
        let re: Vec<f64> = z.iter().map(|c| c.re).collect();
        let e = system.layout.emitter_of(&re);
        let verdict = if residual > SPURIOUS_RESIDUAL {
            "spurious".to_string()
        } else {
            match feasibility_gate(z, k, residual, &system.layout, &scenario, &gate) {
                Ok(_) => {
                    feasible += 1;
                    "feasible".to_string()
                }
                Err(r) => r.label().to_string(),
            }
        };
        let tag = if singular { " (singular)" } else { "" };
        *tally.entry(verdict.clone()).or_insert(0usize) += 1;
        if !args.all && verdict == "complex" {
            continue;
        }
        println!(
            "{k:>4}  {:>14.6} {:>14.6} {:>14.6}  {:>9.2e}  {:>9.2e}  {verdict}{tag}",
            e.x,
            e.y,
            e.z,
            max_imag(z) * system.layout.unit,
            residual
        );
    }
    let counts: Vec<String> = tally.iter().map(|(v, c)| format!("{v} {c}")).collect();
    println!("verdicts: {}", counts.join(", "));
    if let Some(t) = scenario.truth {
        println!("truth {:.6} {:.6} {:.6}", t.position.x, t.position.y, t.position.z);
    }
    if feasible == 0 {
        return Err(infeasible("no feasible solution"));
    }
    Ok(())
}

pub fn fdoar(args: &FdoarArgs, seed: u64) -> Result<(), Failure> {
    let scenario = load(&args.scenario, seed)?;
    let config = RansacConfig {
        maxiter: args.maxiter,
        epsilon: args.epsilon,
        rng_seed: seed,
        ..RansacConfig::default()
    };
    let outcome = run_fdoar(&scenario, &config);
    let trace = match &outcome {
        Ok(est) => Some(est.trace.as_slice()),
        Err(RansacError::NoEstimate { trace }) => Some(trace.as_slice()),
        Err(_) => None,
    };
    if let (Some(path), Some(trace)) = (&args.trace, trace) {
        write_atomic(path, |w| write_trace_csv(w, trace)).map_err(input)?;
    }
    let est = match outcome {
        Ok(est) => est,
        Err(e @ RansacError::NoEstimate { .. }) => return Err(infeasible(e.to_string())),
        Err(e) => return Err(input(e)),
    };
    let n = est.inlier_mask.len();
    println!(
        "estimate {:.6} {:.6} {:.6}",
        est.emitter.x, est.emitter.y, est.emitter.z
    );
    println!(
        "score {}/{n} | mean inlier residual {:.3e} m/s",
        est.score, est.mean_inlier_residual
    );
    let outliers: Vec<String> = est
        .inlier_mask
        .iter()
        .enumerate()
        .filter(|(_, &inlier)| !inlier)
        .map(|(k, _)| k.to_string())
        .collect();
    if outliers.is_empty() {
        println!("outliers none");
    } else {
        println!("outliers {}", outliers.join(","));
    }
    if let Some(count) = est.generic_root_count {
        println!("generic root count {count}");
    }
    if let Some(t) = scenario.truth {
        println!("error vs truth {:.6e} m", (est.emitter - t.position).norm());
    }
    Ok(())
}

/// Sweep settings file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    cube_side: Option<f64>,
    n_pairs: Option<usize>,
    velocity_range: Option<[f64; 2]>,
    noise_levels: Option<Vec<f64>>,
    trials_per_level: Option<usize>,
    maxiter: Option<usize>,
    epsilon: Option<f64>,
    edge_margin: Option<f64>,
    receiver_position_noise: Option<f64>,
    receiver_velocity_noise: Option<f64>,
}

fn sweep_config(args: &SweepArgs, seed: u64) -> Result<ExperimentConfig, Failure> {
    let file: SweepFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => SweepFile::default(),
    };
    let mut c = ExperimentConfig {
        rng_seed: seed,
        ..ExperimentConfig::default()
    };
    c.cube_side = file.cube_side.unwrap_or(c.cube_side);
    c.n_pairs = file.n_pairs.unwrap_or(c.n_pairs);
    c.velocity_range = file.velocity_range.map_or(c.velocity_range, |[a, b]| (a, b));
    c.noise_levels = file.noise_levels.unwrap_or(c.noise_levels);
    c.trials_per_level = args.trials.or(file.trials_per_level).unwrap_or(c.trials_per_level);
    c.ransac.maxiter = file.maxiter.unwrap_or(c.ransac.maxiter);
    c.ransac.epsilon = file.epsilon.unwrap_or(c.ransac.epsilon);
    c.edge_margin = file.edge_margin.unwrap_or(c.edge_margin);
    c.receiver_position_noise = file.receiver_position_noise.unwrap_or(c.receiver_position_noise);
    c.receiver_velocity_noise = file.receiver_velocity_noise.unwrap_or(c.receiver_velocity_noise);
    c.validate().map_err(input)?;
    Ok(c)
}

pub fn sweep(args: &SweepArgs, seed: u64) -> Result<(), Failure> {
    let config = sweep_config(args, seed)?;
    let result = run_noise_sweep(&config).map_err(input)?;
    if let Some(path) = &args.results {
        write_atomic(path, |w| write_results_csv(w, &result.records)).map_err(input)?;
    }
    write_atomic(&args.summary, |w| write_summary_csv(w, &result.summary)).map_err(input)?;

    println!(
        "{:>10}  {:>14}  {:>6}  {:>8}",
        "noise_%", "median_err_m", "trials", "failures"
    );
    for s in &result.summary {
        println!(
            "{:>10}  {:>14.6e}  {:>6}  {:>8}",
            s.noise_level, s.median_error, s.trials, s.failures
        );
    }
    println!("median inversions {}", median_inversions(&result.summary));
    for e in edge_effect_report(
        &result.records,
        &config.noise_levels,
        config.cube_side,
        config.edge_margin,
    ) {
        println!(
            "edge check {}%: edge median {:.3e} m ({} trials) vs interior {:.3e} m ({} trials){}",
            e.noise_level,
            e.edge_median,
            e.edge_trials,
            e.interior_median,
            e.interior_trials,
            if e.edge_is_worse() { "" } else { " [edge not worse]" }
        );
    }
    Ok(())
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Finite => "finite",
        Verdict::NonFinite => "non-finite",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn bounds(args: &BoundsArgs, seed: u64) -> Result<(), Failure> {
    let config = BoundsConfig {
        repeats: args.repeats,
        rng_seed: seed,
        ..BoundsConfig::default()
    };
    let mode: MeasurementMode = args.mode.into();
    if minimum_measurements(mode, args.dim, args.alt).is_none() {
        return Err(input(format!(
            "no minimum defined for {} in {}D{}",
            mode.label(),
            args.dim,
            if args.alt { " with altitude" } else { "" }
        )));
    }
    let report = verify_measurement_bounds(mode, args.dim, args.alt, &config).map_err(input)?;
    println!(
        "{} {}D{}: minimum {} measurements",
        mode.label(),
        args.dim,
        if args.alt { " + altitude" } else { "" },
        report.minimum
    );
    for (k, r) in report.repeats.iter().enumerate() {
        println!(
            "repeat {k}: m={} {} ({} solutions, local dim {}) | m={} {} (local dim {})",
            report.minimum,
            verdict_label(r.at_minimum),
            r.solutions_at_minimum,
            r.local_dimension.0,
            report.minimum - 1,
            verdict_label(r.below_minimum),
            r.local_dimension.1
        );
    }
    println!("confirmed {}", if report.confirmed() { "yes" } else { "no" });
    Ok(())
}
