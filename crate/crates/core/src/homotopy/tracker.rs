use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::{PathResult, PathStatus, TrackerConfig};
use crate::poly::{ConcreteSystem, C64};

/// A square homotopy `H(z, t)` with its partial derivatives.
pub trait Homotopy: Sync {
    fn n_vars(&self) -> usize;

    fn value(&self, z: &[C64], t: f64) -> DVector<C64>;

    fn value_and_jacobian(&self, z: &[C64], t: f64) -> (DVector<C64>, DMatrix<C64>);

    /// `dH/dt` at `(z, t)`.
    fn dt(&self, z: &[C64], t: f64) -> DVector<C64>;

    /// Degree in `z` of each equation of the target.
    fn degrees(&self) -> Vec<u32>;

    /// `(H_z, H_t)`; override when both can share work.
    fn jacobian_and_dt(&self, z: &[C64], t: f64) -> (DMatrix<C64>, DVector<C64>) {
        (self.value_and_jacobian(z, t).1, self.dt(z, t))
    }
}

/// `H = gamma t g + (1 - t) f`.
pub struct StraightLineHomotopy<'a> {
    pub start: &'a ConcreteSystem,
    pub target: &'a ConcreteSystem,
    pub gamma: C64,
}

impl Homotopy for StraightLineHomotopy<'_> {
    fn n_vars(&self) -> usize {
        self.target.n_vars()
    }

    fn value(&self, z: &[C64], t: f64) -> DVector<C64> {
        let g = self.start.evaluate_unchecked(z);
        let f = self.target.evaluate_unchecked(z);
        g * (self.gamma * t) + f * C64::new(1.0 - t, 0.0)
    }

    fn value_and_jacobian(&self, z: &[C64], t: f64) -> (DVector<C64>, DMatrix<C64>) {
        let (g, gz) = self.start.evaluate_with_jacobian_unchecked(z);
        let (f, fz) = self.target.evaluate_with_jacobian_unchecked(z);
        let a = self.gamma * t;
        let b = C64::new(1.0 - t, 0.0);
        (g * a + f * b, gz * a + fz * b)
    }

    fn degrees(&self) -> Vec<u32> {
        self.target.degrees()
    }

    fn dt(&self, z: &[C64], _t: f64) -> DVector<C64> {
        self.start.evaluate_unchecked(z) * self.gamma - self.target.evaluate_unchecked(z)
    }

    fn jacobian_and_dt(&self, z: &[C64], t: f64) -> (DMatrix<C64>, DVector<C64>) {
        let (g, gz) = self.start.evaluate_with_jacobian_unchecked(z);
        let (f, fz) = self.target.evaluate_with_jacobian_unchecked(z);
        let a = self.gamma * t;
        let b = C64::new(1.0 - t, 0.0);
        (gz * a + fz * b, g * self.gamma - f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub norm: f64,
    pub step: f64,
}

/// Writes a path trace as CSV with columns `t,norm,step`.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TracePoint]) -> std::io::Result<()> {
    writeln!(out, "t,norm,step")?;
    for p in trace {
        writeln!(out, "{:.17e},{:.17e},{:.17e}", p.t, p.norm, p.step)?;
    }
    Ok(())
}

/// Tracks one path of `h` from `start` at `t = 1` to `t = config.t_end`.
pub fn track_path<H: Homotopy + ?Sized>(h: &H, start: &[C64], config: &TrackerConfig) -> PathResult {
    track(h, start, config, None)
}

pub fn track_path_with_trace<H: Homotopy + ?Sized>(
    h: &H,
    start: &[C64],
    config: &TrackerConfig,
) -> (PathResult, Vec<TracePoint>) {
    let mut trace = Vec::new();
    let r = track(h, start, config, Some(&mut trace));
    (r, trace)
}

fn track<H: Homotopy + ?Sized>(
    h: &H,
    start: &[C64],
    config: &TrackerConfig,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> PathResult {
    let mut z = DVector::from_column_slice(start);
    let mut t = 1.0;
    let mut step = config.initial_step.min(config.max_step);
    let mut steps = 0;
    let mut min_rcond = f64::INFINITY;

    let status = loop {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TracePoint {
                t,
                norm: z.norm(),
                step,
            });
        }
        if t <= config.t_end {
            break None;
        }
        if !(z.norm() <= config.divergence_norm) {
            break Some(PathStatus::Diverged);
        }
        if steps >= config.max_steps {
            break Some(PathStatus::MaxSteps);
        }
        let dt = step.min(t - config.t_end);
        let t_next = if dt == t - config.t_end { config.t_end } else { t - dt };
        let corrected = predict(h, &z, t, dt).and_then(|zp| correct(h, zp, t_next, config));
        match corrected {
            Some(c) => {
                z = c.z;
                t = t_next;
                steps += 1;
                min_rcond = min_rcond.min(c.rcond);
                if c.iterations <= 2 {
                    step = (step * config.step_grow).min(config.max_step);
                }
            }
            None => {
                step *= config.step_shrink;
                if step < config.min_step {
                    break Some(PathStatus::Stalled);
                }
            }
        }
    };

    let t_reached = t;
    // Only paths that reached the end are polished; Newton from a stalled
    // point (often one headed to infinity) can land on an unrelated root.
    let status = match status {
        None => {
            z = polish(h, z, config);
            PathStatus::Converged
        }
        Some(s) => s,
    };
    let zs: Vec<C64> = z.iter().copied().collect();
    let (f, jac) = h.value_and_jacobian(&zs, config.t_end);
    let final_residual = projective_residual(&f, &h.degrees(), &zs);
    let status = if status == PathStatus::Converged && !(final_residual <= config.success_residual) {
        PathStatus::Stalled
    } else {
        status
    };
    let endpoint_condition = if status == PathStatus::Diverged {
        f64::INFINITY
    } else {
        condition_number(jac)
    };
    PathResult {
        endpoint: zs,
        status,
        final_residual,
        steps_taken: steps,
        min_jacobian_condition_proxy: min_rcond,
        endpoint_condition,
        t_reached,
    }
}

/// Norm of `f_i(z) / max(1, |z|_inf)^deg_i`: the residual of the
/// homogenized equations at the point scaled to unit size. Equals the plain
/// residual for `|z|_inf <= 1`; for larger roots it discounts the rounding
/// error that grows with the size of the terms.
fn projective_residual(f: &DVector<C64>, degrees: &[u32], z: &[C64]) -> f64 {
    let size = z.iter().map(|c| c.norm()).fold(1.0, f64::max);
    f.iter()
        .zip(degrees)
        .map(|(v, &d)| (v.norm() / size.powi(d as i32)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `dz/dt = -H_z^{-1} H_t`.
fn tangent<H: Homotopy + ?Sized>(h: &H, z: &DVector<C64>, t: f64) -> Option<DVector<C64>> {
    let (jac, dt) = h.jacobian_and_dt(z.as_slice(), t);
    let rhs = -dt;
    let v = jac.lu().solve(&rhs)?;
    v.iter().all(|c| c.re.is_finite() && c.im.is_finite()).then_some(v)
}

/// Classical fourth-order Runge-Kutta step from `t` to `t - dt`.
fn predict<H: Homotopy + ?Sized>(h: &H, z: &DVector<C64>, t: f64, dt: f64) -> Option<DVector<C64>> {
    let half = C64::new(-0.5 * dt, 0.0);
    let full = C64::new(-dt, 0.0);
    let k1 = tangent(h, z, t)?;
    let k2 = tangent(h, &(z + &k1 * half), t - 0.5 * dt)?;
    let k3 = tangent(h, &(z + &k2 * half), t - 0.5 * dt)?;
    let k4 = tangent(h, &(z + &k3 * full), t - dt)?;
    let incr = (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(-dt / 6.0, 0.0);
    Some(z + incr)
}

struct Corrected {
    z: DVector<C64>,
    iterations: usize,
    rcond: f64,
}

/// Newton's method on `H(., t)`; fails unless it converges within
/// `max_newton_iters` while contracting.
fn correct<H: Homotopy + ?Sized>(h: &H, mut z: DVector<C64>, t: f64, config: &TrackerConfig) -> Option<Corrected> {
    let mut previous = f64::INFINITY;
    let mut rcond = f64::INFINITY;
    for it in 0..config.max_newton_iters {
        let (value, jac) = h.value_and_jacobian(z.as_slice(), t);
        if it > 0 && value.norm() <= config.newton_tolerance {
            return Some(Corrected {
                z,
                iterations: it,
                rcond,
            });
        }
        let lu = jac.lu();
        rcond = rcond.min(lu_rcond(&lu.u()));
        let dz = lu.solve(&value)?;
        let size = dz.norm();
        if !size.is_finite() || (it > 0 && size > 0.5 * previous) {
            return None;
        }
        z -= dz;
        if size <= config.newton_tolerance * (1.0 + z.norm()) {
            return Some(Corrected {
                z,
                iterations: it + 1,
                rcond,
            });
        }
        previous = size;
    }
    None
}

/// Extra Newton steps at the end of the path. Stops as soon as an update
/// fails to shrink.
fn polish<H: Homotopy + ?Sized>(h: &H, mut z: DVector<C64>, config: &TrackerConfig) -> DVector<C64> {
    let mut previous = f64::INFINITY;
    for _ in 0..config.final_newton_iters {
        let (value, jac) = h.value_and_jacobian(z.as_slice(), config.t_end);
        if value.norm() == 0.0 {
            break;
        }
        let Some(dz) = jac.lu().solve(&value) else { break };
        let size = dz.norm();
        if !size.is_finite() || size >= previous {
            break;
        }
        z -= dz;
        if size <= f64::EPSILON * (1.0 + z.norm()) {
            break;
        }
        previous = size;
    }
    z
}

fn lu_rcond(u: &DMatrix<C64>) -> f64 {
    let d = u.diagonal();
    let (lo, hi) = d
        .iter()
        .map(|c| c.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

pub(crate) fn condition_number(jac: DMatrix<C64>) -> f64 {
    if jac.nrows() == 0 || jac.ncols() == 0 {
        return 1.0;
    }
    if jac.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return f64::INFINITY;
    }
    let sv = jac.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
