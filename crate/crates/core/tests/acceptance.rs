//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all criteria with `cargo test -p fdoar-core --test acceptance`, or a
//! subset by number: `cargo test -p fdoar-core --test acceptance -- 1 5 9`.
//! The process exits nonzero when any selected criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{fd_jacobian, fdoa_scenario, random_c64, uniform_vec};
use fdoar::builder::{build, minimum_measurements, GeoSystemSpec, MeasurementMode, GENERIC_FDOA_ROOT_COUNT};
use fdoar::filter::{feasibility_gate, gate_solutions, GateConfig};
use fdoar::geometry::{fdoa_forward, Emitter, Observation, ReceiverPair, ReceiverState, Scenario, Vec3};
use fdoar::homotopy::{
    hausdorff_distance, parameter_solve, random_parameter_point, solve, Finiteness, Gamma, TrackerConfig,
};
use fdoar::ransac::{run_fdoar, RansacConfig};
use fdoar::sim::{
    edge_effect_report, generate_mode_scenario, median_inversions, run_noise_sweep, verify_measurement_bounds,
    BoundsConfig, ExperimentConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECOVERY_TOL_M: f64 = 1e-6;
const RECOVERY_MIN_HITS: usize = 99;
const SOLVE_TIME_LIMIT: Duration = Duration::from_secs(1);
const BOUNDS_REPEATS: usize = 5;
const ROOT_COUNT_SOLVES: usize = 10;
const PARAMETER_TARGETS: usize = 20;
const SET_DISTANCE_TOL: f64 = 1e-6;
const FORWARD_DRAWS: usize = 10_000;
const EQUALITY_FRACTION: f64 = 0.999;
const ZERO_NOISE_MEDIAN_M: f64 = 1e-4;
const MAX_INVERSIONS: usize = 1;
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(30 * 60);
const OUTLIER_RUNS: usize = 50;
const OUTLIER_MIN_WINS: usize = 45;
const OUTLIER_MIN_SCORE: usize = 30;
const ZERO_RANGE_SCENARIOS: usize = 20;
const ZERO_RANGE_M: f64 = 1e-6;
const JACOBIAN_PAIRS: usize = 100;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const PATH_RESIDUAL_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_truth(rng: &mut ChaCha8Rng) -> Vec3 {
    uniform_vec(rng, 0.0, 100.0)
}

/// Noiseless three-epoch scenarios: one total-degree solve plus the gate.
fn exact_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let cfg = TrackerConfig::default();
    let (mut hits, mut slowest, mut total) = (0, Duration::ZERO, Duration::ZERO);
    for _ in 0..100 {
        let truth = random_truth(&mut rng);
        let sc = fdoa_scenario(&mut rng, truth, 3);
        let gamma = Gamma::random(&mut rng);
        let started = Instant::now();
        let sys = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
        let r = solve(&sys.concrete().unwrap().normalized(), &cfg, gamma).unwrap();
        let report = gate_solutions(&r, &sys, &sc, &cfg, &GateConfig::default());
        let elapsed = started.elapsed();
        slowest = slowest.max(elapsed);
        total += elapsed;
        if report
            .accepted
            .iter()
            .any(|c| (c.emitter - truth).norm() <= RECOVERY_TOL_M)
        {
            hits += 1;
        }
    }
    outcome(
        hits >= RECOVERY_MIN_HITS && slowest < SOLVE_TIME_LIMIT,
        format!(
            "{hits}/100 recovered within {RECOVERY_TOL_M:e} m; mean {:.3} s, slowest {:.3} s per solve",
            total.as_secs_f64() / 100.0,
            slowest.as_secs_f64()
        ),
    )
}

fn measurement_bounds() -> Outcome {
    let config = BoundsConfig {
        repeats: BOUNDS_REPEATS,
        ..BoundsConfig::default()
    };
    let mut lines = Vec::new();
    let mut all = true;
    for mode in [
        MeasurementMode::TdoaOnly,
        MeasurementMode::FdoaOnly,
        MeasurementMode::TdoaFdoa,
    ] {
        for dim in [2, 3] {
            for alt in [false, true] {
                if minimum_measurements(mode, dim, alt).is_none() {
                    continue;
                }
                let report = verify_measurement_bounds(mode, dim, alt, &config).unwrap();
                all &= report.confirmed();
                lines.push(format!(
                    "{} {dim}D{} m={}: {}",
                    mode.label(),
                    if alt { "+alt" } else { "" },
                    report.minimum,
                    if report.confirmed() { "ok" } else { "disagree" }
                ));
            }
        }
    }
    let detail = format!("{} cells x {BOUNDS_REPEATS} repeats; {}", lines.len(), lines.join(", "));
    outcome(all && lines.len() == 9, detail)
}

fn root_count_stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let sc = fdoa_scenario(&mut rng, Vec3::new(30.0, 60.0, 20.0), 3);
    let family = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap().family;
    let counts: Vec<usize> = (0..ROOT_COUNT_SOLVES)
        .map(|_| {
            let p0 = random_parameter_point(&family, &mut rng);
            let target = family.bind(&p0).unwrap().normalized();
            solve(&target, &TrackerConfig::default(), Gamma::random(&mut rng))
                .unwrap()
                .distinct_solutions
                .len()
        })
        .collect();
    let stable = counts.iter().all(|&c| c == GENERIC_FDOA_ROOT_COUNT);
    outcome(
        stable,
        format!("counts {counts:?}, recorded constant {GENERIC_FDOA_ROOT_COUNT}"),
    )
}

fn parameter_homotopy_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    // a fixed length unit keeps every target in one family
    let spec = GeoSystemSpec::fdoa_3d().with_length_unit(100.0);
    let systems: Vec<_> = (0..PARAMETER_TARGETS)
        .map(|_| {
            let truth = random_truth(&mut rng);
            build(&fdoa_scenario(&mut rng, truth, 3), spec).unwrap()
        })
        .collect();
    let family = &systems[0].family;
    assert!(systems.iter().all(|s| s.family.same_structure(family)));
    let targets: Vec<_> = systems.iter().map(|s| s.complex_parameters()).collect();
    let cfg = TrackerConfig::default();
    let (_, tracked) = parameter_solve(family, &targets, &cfg, &mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for (sys, r) in systems.iter().zip(&tracked) {
        let fresh = solve(&sys.concrete().unwrap().normalized(), &cfg, Gamma::random(&mut rng)).unwrap();
        worst = worst.max(hausdorff_distance(&r.distinct_solutions, &fresh.distinct_solutions));
    }
    outcome(
        worst <= SET_DISTANCE_TOL,
        format!("{PARAMETER_TARGETS} targets, worst set distance {worst:.2e} (limit {SET_DISTANCE_TOL:e})"),
    )
}

fn velocity_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut violations = 0;
    for _ in 0..FORWARD_DRAWS {
        let rx = |rng: &mut ChaCha8Rng, id: &str| {
            ReceiverState::new(id, 0, uniform_vec(rng, 0.0, 100.0), uniform_vec(rng, -2.0, 2.0)).unwrap()
        };
        let pair = ReceiverPair::new(rx(&mut rng, "a"), rx(&mut rng, "b")).unwrap();
        let e = random_truth(&mut rng);
        if fdoa_forward(&e, &pair).unwrap().abs() > pair.fdoa_bound() {
            violations += 1;
        }
    }
    // both lines of sight along x, velocities pointing opposite ways along them
    let reference = ReceiverState::new("a", 0, Vec3::new(-10.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
    let other = ReceiverState::new("b", 0, Vec3::new(10.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)).unwrap();
    let pair = ReceiverPair::new(reference, other).unwrap();
    let f = fdoa_forward(&Vec3::new(0.0, 0.05, 0.0), &pair).unwrap();
    let fraction = f.abs() / pair.fdoa_bound();
    outcome(
        violations == 0 && fraction >= EQUALITY_FRACTION,
        format!("{violations} of {FORWARD_DRAWS} draws exceed the bound; equality fixture reaches {fraction:.6} of it"),
    )
}

fn noise_sweep() -> Outcome {
    let config = ExperimentConfig::default();
    let started = Instant::now();
    let result = run_noise_sweep(&config).unwrap();
    let elapsed = started.elapsed();
    let medians: Vec<String> = result
        .summary
        .iter()
        .map(|s| format!("{}%: {:.3e}", s.noise_level, s.median_error))
        .collect();
    let inversions = median_inversions(&result.summary);
    let zero = result.summary[0].median_error;
    let edges: Vec<String> = edge_effect_report(
        &result.records,
        &config.noise_levels,
        config.cube_side,
        config.edge_margin,
    )
    .iter()
    .map(|e| {
        format!(
            "{}%: {}",
            e.noise_level,
            if e.edge_is_worse() {
                "edge worse"
            } else {
                "edge not worse"
            }
        )
    })
    .collect();
    println!("  edge check (not gating): {}", edges.join(", "));
    outcome(
        zero <= ZERO_NOISE_MEDIAN_M && inversions <= MAX_INVERSIONS && elapsed <= SWEEP_TIME_LIMIT,
        format!(
            "medians [{}]; {inversions} inversion(s); {:.0} s total",
            medians.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Forty pairs at epochs 0..40: the first thirty observe `majority`, the
/// rest observe `minority`.
fn two_emitter_fixture(rng: &mut ChaCha8Rng, majority: Vec3, minority: Vec3) -> Scenario {
    let obs = (0..40i64)
        .map(|k| {
            let a = ReceiverState::new("rx1", k, uniform_vec(rng, 0.0, 100.0), uniform_vec(rng, -2.0, 2.0)).unwrap();
            let b = ReceiverState::new("rx2", k, uniform_vec(rng, 0.0, 100.0), uniform_vec(rng, -2.0, 2.0)).unwrap();
            let pair = ReceiverPair::new(a, b).unwrap();
            let source = if k < 30 { majority } else { minority };
            Observation {
                fdoa: Some(fdoa_forward(&source, &pair).unwrap()),
                pair,
                tdoa: None,
            }
        })
        .collect();
    Scenario::new(obs, Some(Emitter::new(majority).unwrap()), 0).unwrap()
}

fn outlier_robustness() -> Outcome {
    let mut wins = 0;
    for run in 0..OUTLIER_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + run as u64);
        let majority = random_truth(&mut rng);
        let minority = random_truth(&mut rng);
        let sc = two_emitter_fixture(&mut rng, majority, minority);
        let config = RansacConfig {
            rng_seed: run as u64,
            ..RansacConfig::default()
        };
        if let Ok(est) = run_fdoar(&sc, &config) {
            if est.score >= OUTLIER_MIN_SCORE && (est.emitter - majority).norm() <= RECOVERY_TOL_M {
                wins += 1;
            }
        }
    }
    outcome(
        wins >= OUTLIER_MIN_WINS,
        format!("majority emitter with score >= {OUTLIER_MIN_SCORE} in {wins}/{OUTLIER_RUNS} runs"),
    )
}

fn zero_range_component() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let cfg = TrackerConfig::default();
    let gate = GateConfig::default();
    let (mut seen, mut leaked) = (0, 0);
    for _ in 0..ZERO_RANGE_SCENARIOS {
        let truth = random_truth(&mut rng);
        let sc = fdoa_scenario(&mut rng, truth, 3);
        let sys = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
        let r = solve(&sys.concrete().unwrap().normalized(), &cfg, Gamma::random(&mut rng)).unwrap();
        let first_range = sys.layout.ranges[0].index;
        // the emitter sitting on the first receiver lies on the zero-range locus
        let on_receiver = sys.layout.lift_complex(&sys.layout.ranges[0].position);
        seen += 1;
        if feasibility_gate(&on_receiver, 0, 0.0, &sys.layout, &sc, &gate).is_ok() {
            leaked += 1;
        }
        for p in r.paths.iter().filter(|p| p.is_converged()) {
            if (p.endpoint[first_range] * sys.layout.unit).norm() < ZERO_RANGE_M {
                seen += 1;
                if feasibility_gate(&p.endpoint, 0, p.final_residual, &sys.layout, &sc, &gate).is_ok() {
                    leaked += 1;
                }
            }
        }
        let report = gate_solutions(&r, &sys, &sc, &cfg, &gate);
        leaked += report
            .accepted
            .iter()
            .filter(|c| c.ranges.iter().any(|&v| v < ZERO_RANGE_M))
            .count();
        // the estimate of a run on the same three measurements
        let est = run_fdoar(
            &sc,
            &RansacConfig {
                maxiter: 1,
                ..RansacConfig::default()
            },
        )
        .unwrap();
        if sc
            .receivers()
            .iter()
            .any(|rx| (est.emitter - rx.position).norm() < ZERO_RANGE_M)
        {
            leaked += 1;
        }
    }
    outcome(
        leaked == 0,
        format!(
            "{seen} points with first range below {ZERO_RANGE_M:e} m (constructed or converged), {leaked} accepted"
        ),
    )
}

fn numerical_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let mut worst_jac: f64 = 0.0;
    for k in 0..JACOBIAN_PAIRS {
        let (mode, dim, count) = [
            (MeasurementMode::FdoaOnly, 3, 3),
            (MeasurementMode::TdoaOnly, 3, 4),
            (MeasurementMode::TdoaFdoa, 2, 2),
            (MeasurementMode::FdoaOnly, 2, 3),
        ][k % 4];
        let sc = generate_mode_scenario(mode, dim, count, &BoundsConfig::default(), rng.random()).unwrap();
        let s = build(&sc, GeoSystemSpec::new(mode, dim))
            .unwrap()
            .concrete()
            .unwrap()
            .normalized();
        let z: Vec<_> = (0..s.n_vars()).map(|_| random_c64(&mut rng) * 2.0).collect();
        let j = s.jacobian(&z).unwrap();
        let fd = fd_jacobian(&s, &z, 1e-6);
        let scale = j.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = j.iter().zip(fd.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst_jac = worst_jac.max(diff / scale);
    }

    let cfg = TrackerConfig::default();
    let (mut paths, mut worst_res, mut suspect) = (0, 0.0f64, 0);
    for _ in 0..5 {
        let truth = random_truth(&mut rng);
        let sys = build(&fdoa_scenario(&mut rng, truth, 3), GeoSystemSpec::fdoa_3d()).unwrap();
        let r = solve(&sys.concrete().unwrap().normalized(), &cfg, Gamma::random(&mut rng)).unwrap();
        suspect += usize::from(r.finiteness != Finiteness::Finite);
        for p in r.paths.iter().filter(|p| p.is_converged()) {
            paths += 1;
            worst_res = worst_res.max(p.final_residual);
        }
    }
    outcome(
        worst_jac <= JACOBIAN_REL_TOL && worst_res <= PATH_RESIDUAL_TOL,
        format!(
            "worst Jacobian relative error {worst_jac:.2e} over {JACOBIAN_PAIRS} pairs; worst residual {worst_res:.2e} over {paths} converged paths ({suspect} suspect solves)"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("noiseless exact recovery", exact_recovery),
        ("measurement bounds", measurement_bounds),
        ("generic root count stability", root_count_stability),
        ("parameter homotopy consistency", parameter_homotopy_consistency),
        ("velocity bound", velocity_bound),
        ("noise sweep", noise_sweep),
        ("outlier robustness", outlier_robustness),
        ("zero-range component", zero_range_component),
        ("numerical hygiene", numerical_hygiene),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=9).contains(n))
        .collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {n}: {} ({name}, {:.1} s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
