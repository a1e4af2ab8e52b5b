//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};
use rand::Rng;

use fdoar::geometry::{fdoa_forward, Emitter, Observation, ReceiverPair, ReceiverState, Scenario, Vec3};
use fdoar::poly::{ConcreteSystem, Polynomial, C64};

/// Value and gradient of `p` via exponent arithmetic on each term, without
/// the library's evaluator.
pub fn naive_eval(p: &Polynomial<C64>, z: &[C64]) -> C64 {
    p.terms()
        .iter()
        .map(|t| {
            t.monomial
                .exponents()
                .iter()
                .zip(z)
                .fold(t.coefficient, |acc, (&e, &v)| acc * v.powu(e))
        })
        .sum()
}

pub fn naive_system_eval(s: &ConcreteSystem, z: &[C64]) -> Vec<C64> {
    s.polynomials().iter().map(|p| naive_eval(p, z)).collect()
}

/// Central-difference Jacobian along the real axis of each variable. Valid
/// for holomorphic maps, where that derivative equals the complex one.
pub fn fd_jacobian(s: &ConcreteSystem, z: &[C64], h: f64) -> DMatrix<C64> {
    let n = s.n_vars();
    let mut j = DMatrix::zeros(s.n_equations(), n);
    for l in 0..n {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        let step = h * (1.0 + z[l].norm());
        zp[l] += step;
        zm[l] -= step;
        let fp = naive_system_eval(s, &zp);
        let fm = naive_system_eval(s, &zm);
        for k in 0..s.n_equations() {
            j[(k, l)] = (fp[k] - fm[k]) / (2.0 * step);
        }
    }
    j
}

/// Exact complex number with rational parts.
#[derive(Clone, Debug)]
pub struct ExactComplex {
    pub re: BigRational,
    pub im: BigRational,
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

impl ExactComplex {
    pub fn from(c: C64) -> Self {
        Self {
            re: exact(c.re),
            im: exact(c.im),
        }
    }

    fn one() -> Self {
        Self {
            re: BigRational::from_integer(BigInt::from(1)),
            im: BigRational::zero(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        Self {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            re: &self.re + &o.re,
            im: &self.im + &o.im,
        }
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64().unwrap(), self.im.to_f64().unwrap())
    }

    pub fn abs_bound(&self) -> f64 {
        self.re.abs().to_f64().unwrap() + self.im.abs().to_f64().unwrap()
    }
}

/// Exact value of `p` at `z`, every input taken as the rational it encodes.
pub fn exact_eval(p: &Polynomial<C64>, z: &[C64]) -> ExactComplex {
    let zs: Vec<ExactComplex> = z.iter().map(|&c| ExactComplex::from(c)).collect();
    let mut total = ExactComplex {
        re: BigRational::zero(),
        im: BigRational::zero(),
    };
    for t in p.terms() {
        let mut v = ExactComplex::from(t.coefficient);
        for (e, zi) in t.monomial.exponents().iter().zip(&zs) {
            let mut pw = ExactComplex::one();
            for _ in 0..*e {
                pw = pw.mul(zi);
            }
            v = v.mul(&pw);
        }
        total = total.add(&v);
    }
    total
}

/// Double-double arithmetic, about 32 significant digits.
#[derive(Clone, Copy, Debug)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

impl DD {
    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (s, e) = Self::two_sum(hi, lo);
        Self { hi: s, lo: e }
    }

    pub fn add(self, o: Self) -> Self {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        Self::renorm(s, e + self.lo + o.lo)
    }

    pub fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    pub fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(DD::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(DD::new(q2)));
        let q3 = r.hi / o.hi;
        DD::new(q1).add(DD::new(q2)).add(DD::new(q3))
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DD::new(0.0);
        }
        // one Newton step on the double estimate doubles the precision
        let x = DD::new(self.hi.sqrt());
        x.add(self.sub(x.mul(x)).div(x.add(x)))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

pub fn dd_distance(a: &Vec3, b: &Vec3) -> DD {
    let mut s = DD::new(0.0);
    for i in 0..3 {
        let d = DD::new(a[i]).sub(DD::new(b[i]));
        s = s.add(d.mul(d));
    }
    s.sqrt()
}

pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

pub fn random_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// `n` independent receiver pairs (`rx1`/`rx2` at epochs `0..n`) in the
/// 100 m cube with velocity components in [-2, 2] m/s, plus noiseless FDOA
/// values for `truth`.
pub fn fdoa_scenario<R: Rng + ?Sized>(rng: &mut R, truth: Vec3, n: usize) -> Scenario {
    let obs = (0..n as i64)
        .map(|k| {
            let a = ReceiverState::new("rx1", k, uniform_vec(rng, 0.0, 100.0), uniform_vec(rng, -2.0, 2.0)).unwrap();
            let b = ReceiverState::new("rx2", k, uniform_vec(rng, 0.0, 100.0), uniform_vec(rng, -2.0, 2.0)).unwrap();
            let pair = ReceiverPair::new(a, b).unwrap();
            let f = fdoa_forward(&truth, &pair).unwrap();
            Observation {
                pair,
                fdoa: Some(f),
                tdoa: None,
            }
        })
        .collect();
    Scenario::new(obs, Some(Emitter::new(truth).unwrap()), 0).unwrap()
}

/// Largest distance from a point of `a` to its nearest point of `b`, and back.
pub fn set_distance(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    let d = |x: &Vec<C64>, y: &Vec<C64>| x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let one = |a: &[Vec<C64>], b: &[Vec<C64>]| {
        a.iter()
            .map(|x| b.iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one(a, b).max(one(b, a))
}
