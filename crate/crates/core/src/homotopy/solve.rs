use std::cmp::Ordering;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::start::start_system;
use super::tracker::{track_path, Homotopy, StraightLineHomotopy};
use super::{Finiteness, Gamma, HomotopyError, PathResult, PathStatus, SolveResult, TrackerConfig};
use crate::poly::{ConcreteSystem, Monomial, Polynomial, C64};

/// Fraction of singular endpoints above which a solve is flagged as
/// possibly positive-dimensional.
const SINGULAR_FRACTION: f64 = 0.2;
/// Residual below which a non-converged, singular endpoint is still treated
/// as lying on the solution set.
const SINGULAR_RESIDUAL: f64 = 1e-6;
/// Stalled paths that stopped before this `t` are re-tracked.
const RETRACK_T: f64 = 1e-3;

/// `|a - b| / (1 + max(|a|, |b|))`.
pub fn scaled_distance(a: &[C64], b: &[C64]) -> f64 {
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    diff / (1.0 + norm(a).max(norm(b)))
}

/// Hausdorff distance between two finite point sets under [`scaled_distance`].
pub fn hausdorff_distance(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |from: &[Vec<C64>], to: &[Vec<C64>]| {
        from.iter()
            .map(|p| to.iter().map(|q| scaled_distance(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

fn lex_cmp(a: &[C64], b: &[C64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Sorts points lexicographically and drops those within `radius` of an
/// earlier one.
fn dedup(mut points: Vec<Vec<C64>>, radius: f64) -> Vec<Vec<C64>> {
    points.sort_by(|a, b| lex_cmp(a, b));
    let mut kept: Vec<Vec<C64>> = Vec::new();
    for p in points {
        if !kept.iter().any(|q| scaled_distance(&p, q) <= radius) {
            kept.push(p);
        }
    }
    kept
}

/// Solves a square system with the total-degree homotopy.
pub fn solve(target: &ConcreteSystem, config: &TrackerConfig, gamma: Gamma) -> Result<SolveResult, HomotopyError> {
    config.validate()?;
    let (g, starts) = start_system(target)?;
    let h = StraightLineHomotopy {
        start: &g,
        target,
        gamma: gamma.0,
    };
    Ok(solve_from(&h, &starts, config))
}

/// Tracks every start point through `h` (in parallel) and summarizes.
///
/// Paths whose regular endpoints coincide, or that stalled well before the
/// end, are tracked again with smaller steps.
pub fn solve_from<H: Homotopy + ?Sized>(h: &H, starts: &[Vec<C64>], config: &TrackerConfig) -> SolveResult {
    let mut paths: Vec<PathResult> = starts.par_iter().map(|s| track_path(h, s, config)).collect();
    for round in 1..=config.retrack_rounds {
        let redo = paths_to_retrack(&paths, config);
        if redo.is_empty() {
            break;
        }
        let tight = config.tightened(4f64.powi(round as i32));
        let redone: Vec<(usize, PathResult)> = redo
            .par_iter()
            .map(|&i| (i, track_path(h, &starts[i], &tight)))
            .collect();
        for (i, r) in redone {
            if better(&r, &paths[i], config) {
                paths[i] = r;
            }
        }
    }
    summarize(paths, config)
}

/// Finite endpoint with a small residual. The path residual is scaled by the
/// endpoint size, so a path that stopped far out on its way to infinity also
/// looks small; those are excluded unless they actually reached the end.
fn on_solution_set(p: &PathResult, config: &TrackerConfig) -> bool {
    let size = p.endpoint.iter().map(|c| c.norm()).fold(0.0, f64::max);
    match p.status {
        PathStatus::Diverged => false,
        PathStatus::Converged => p.final_residual <= SINGULAR_RESIDUAL,
        _ => p.final_residual <= SINGULAR_RESIDUAL && size < config.divergence_norm.sqrt(),
    }
}

fn better(new: &PathResult, old: &PathResult, config: &TrackerConfig) -> bool {
    new.is_regular_solution(config) || !old.is_regular_solution(config)
}

/// Regular endpoints that another finite path also reached, plus paths that
/// stalled part way.
fn paths_to_retrack(paths: &[PathResult], config: &TrackerConfig) -> Vec<usize> {
    let finite: Vec<usize> = (0..paths.len())
        .filter(|&i| on_solution_set(&paths[i], config))
        .collect();
    let mut redo = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let collides = p.is_regular_solution(config)
            && finite
                .iter()
                .any(|&j| j != i && scaled_distance(&p.endpoint, &paths[j].endpoint) <= config.dedup_radius);
        let stalled = matches!(p.status, PathStatus::Stalled | PathStatus::MaxSteps) && p.t_reached > RETRACK_T;
        if collides || stalled {
            redo.push(i);
        }
    }
    redo
}

fn summarize(paths: Vec<PathResult>, config: &TrackerConfig) -> SolveResult {
    // Regular endpoints still shared by several paths after re-tracking are
    // multiple roots, hence singular.
    let shared = paths_to_retrack(&paths, config);
    let mut regular = Vec::new();
    let mut singular = Vec::new();
    let mut singular_paths = 0;
    for (i, p) in paths.iter().enumerate() {
        if p.is_regular_solution(config) && shared.binary_search(&i).is_err() {
            regular.push(p.endpoint.clone());
        } else if on_solution_set(p, config) {
            if p.is_singular(config) || shared.binary_search(&i).is_ok() {
                singular.push(p.endpoint.clone());
                singular_paths += 1;
            }
        }
    }
    let finiteness = if singular_paths as f64 > SINGULAR_FRACTION * paths.len() as f64 {
        Finiteness::SuspectPositiveDimensional
    } else {
        Finiteness::Finite
    };
    SolveResult {
        distinct_solutions: dedup(regular, config.dedup_radius),
        singular_endpoints: dedup(singular, config.dedup_radius),
        finiteness,
        paths,
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn add_scaled(target: &mut Polynomial<C64>, source: &Polynomial<C64>, a: C64) {
    for t in source.terms() {
        target
            .push(t.coefficient * a, t.monomial.clone())
            .expect("same unknowns");
    }
}

/// Replaces an overdetermined system by `n` random combinations
/// `f_i + sum_j a_ij f_j` (`j >= n`). Every root of the original system is a
/// root of the result. Square or underdetermined systems are returned as is.
pub fn square_up<R: Rng + ?Sized>(system: &ConcreteSystem, rng: &mut R) -> ConcreteSystem {
    let n = system.n_vars();
    let m = system.n_equations();
    if m <= n {
        return system.clone();
    }
    let polys = system.polynomials();
    let squared = (0..n)
        .map(|i| {
            let mut p = polys[i].clone();
            for extra in &polys[n..] {
                add_scaled(&mut p, extra, complex_normal(rng));
            }
            p
        })
        .collect();
    ConcreteSystem::new(system.unknowns().to_vec(), squared).expect("same unknowns")
}

/// Appends `count` random complex affine hyperplanes `a . (z - c) = 0`,
/// with `c` drawn at magnitude `scale`.
pub fn add_random_slices<R: Rng + ?Sized>(
    system: &ConcreteSystem,
    count: usize,
    scale: f64,
    rng: &mut R,
) -> ConcreteSystem {
    let n = system.n_vars();
    let slices = (0..count)
        .map(|_| {
            let mut p = Polynomial::zero(n);
            let mut offset = C64::new(0.0, 0.0);
            for l in 0..n {
                let a = complex_normal(rng);
                offset -= a * complex_normal(rng) * scale;
                p.push(a, Monomial::var(n, l)).expect("arity");
            }
            p.push(offset, Monomial::one(n)).expect("arity");
            p
        })
        .collect();
    system.with_equations(slices).expect("same unknowns")
}
