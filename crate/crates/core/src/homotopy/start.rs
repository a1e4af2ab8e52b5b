use num_complex::Complex64;

use super::HomotopyError;
use crate::poly::{ConcreteSystem, Monomial, Polynomial, C64};

/// Total-degree start system `g_i = z_i^{d_i} - 1` for `target`, together
/// with all of its roots.
pub fn start_system(target: &ConcreteSystem) -> Result<(ConcreteSystem, Vec<Vec<C64>>), HomotopyError> {
    if !target.is_square() {
        return Err(HomotopyError::NotSquare {
            equations: target.n_equations(),
            unknowns: target.n_vars(),
        });
    }
    let degrees = target.degrees();
    if let Some(i) = degrees.iter().position(|&d| d == 0) {
        return Err(HomotopyError::ZeroDegree(i));
    }
    let n = target.n_vars();
    let polys = degrees
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            Polynomial::from_terms(
                n,
                [
                    (C64::new(1.0, 0.0), Monomial::var_pow(n, i, d)),
                    (C64::new(-1.0, 0.0), Monomial::one(n)),
                ],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let g = ConcreteSystem::new(target.unknowns().to_vec(), polys)?;
    Ok((g, start_points(&degrees)))
}

/// Every combination of `d_i`-th roots of unity, in mixed-radix order.
pub fn start_points(degrees: &[u32]) -> Vec<Vec<C64>> {
    let roots: Vec<Vec<C64>> = degrees.iter().map(|&d| roots_of_unity(d)).collect();
    let count: usize = degrees.iter().map(|&d| d as usize).product();
    (0..count)
        .map(|mut k| {
            roots
                .iter()
                .map(|r| {
                    let v = r[k % r.len()];
                    k /= r.len();
                    v
                })
                .collect()
        })
        .collect()
}

fn roots_of_unity(d: u32) -> Vec<C64> {
    (0..d)
        .map(|k| match (k, d) {
            (0, _) => C64::new(1.0, 0.0),
            (1, 2) => C64::new(-1.0, 0.0),
            _ => Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / d as f64),
        })
        .collect()
}
