//! Sparse multivariate polynomials over complex coefficients.
//!
//! Coefficients are either plain complex numbers ([`ConcreteSystem`]) or
//! polynomial expressions in named parameters ([`ParameterizedSystem`]).
//! Only construction, evaluation and first derivatives are supported.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("monomial has {got} exponents but the system has {expected} unknowns")]
    MonomialArity { expected: usize, got: usize },
    #[error("parameter index {0} out of range")]
    UnknownParameter(usize),
    #[error("parameter `{0}` is not referenced by any coefficient")]
    UnusedParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exponents: Vec<u32>,
    /// `(variable, exponent)` for every nonzero exponent.
    support: Vec<(usize, u32)>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        let support = exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| (i, e))
            .collect();
        Self { exponents, support }
    }

    pub fn one(n_vars: usize) -> Self {
        Self::new(vec![0; n_vars])
    }

    pub fn var(n_vars: usize, index: usize) -> Self {
        Self::var_pow(n_vars, index, 1)
    }

    pub fn var_pow(n_vars: usize, index: usize, power: u32) -> Self {
        let mut e = vec![0; n_vars];
        e[index] = power;
        Self::new(e)
    }

    pub fn product(n_vars: usize, vars: &[usize]) -> Self {
        let mut e = vec![0; n_vars];
        for &v in vars {
            e[v] += 1;
        }
        Self::new(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Graded lexicographic order, largest first.
    fn grlex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .degree()
            .cmp(&self.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

/// A coefficient that is a polynomial in the system parameters:
/// `sum_k scale_k * prod_{j in factors_k} p_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamExpr {
    terms: Vec<ParamTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTerm {
    pub scale: f64,
    /// Sorted parameter indices; repeats mean powers.
    pub factors: Vec<usize>,
}

impl ParamExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::product(c, &[])
    }

    pub fn param(index: usize) -> Self {
        Self::product(1.0, &[index])
    }

    pub fn product(scale: f64, factors: &[usize]) -> Self {
        let mut factors = factors.to_vec();
        factors.sort_unstable();
        let mut e = Self {
            terms: vec![ParamTerm { scale, factors }],
        };
        e.normalize();
        e
    }

    pub fn terms(&self) -> &[ParamTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.scale *= s;
        }
        self.normalize();
        self
    }

    pub fn plus(mut self, other: &ParamExpr) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self.normalize();
        self
    }

    fn normalize(&mut self) {
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for t in self.terms.drain(..) {
            *merged.entry(t.factors).or_insert(0.0) += t.scale;
        }
        self.terms = merged
            .into_iter()
            .filter(|(_, s)| *s != 0.0)
            .map(|(factors, scale)| ParamTerm { scale, factors })
            .collect();
    }

    pub fn max_param(&self) -> Option<usize> {
        self.terms.iter().flat_map(|t| t.factors.iter().copied()).max()
    }

    pub fn eval(&self, params: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|t| t.factors.iter().fold(C64::new(t.scale, 0.0), |acc, &j| acc * params[j]))
            .sum()
    }

    /// Value and directional derivative along `dparams`.
    pub fn eval_with_tangent(&self, params: &[C64], dparams: &[C64]) -> (C64, C64) {
        let mut value = C64::new(0.0, 0.0);
        let mut tangent = C64::new(0.0, 0.0);
        for t in &self.terms {
            let mut v = C64::new(t.scale, 0.0);
            let mut d = C64::new(0.0, 0.0);
            for &j in &t.factors {
                d = d * params[j] + v * dparams[j];
                v *= params[j];
            }
            value += v;
            tangent += d;
        }
        (value, tangent)
    }

    /// Coefficients `c_j` of `sum_j c_j s^j`, the value of this expression at
    /// `base + s * direction`.
    pub fn along_line(&self, base: &[C64], direction: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0)];
        for t in &self.terms {
            let mut prod = vec![C64::new(t.scale, 0.0)];
            for &j in &t.factors {
                let mut next = vec![C64::new(0.0, 0.0); prod.len() + 1];
                for (k, c) in prod.iter().enumerate() {
                    next[k] += c * base[j];
                    next[k + 1] += c * direction[j];
                }
                prod = next;
            }
            if prod.len() > out.len() {
                out.resize(prod.len(), C64::new(0.0, 0.0));
            }
            for (o, c) in out.iter_mut().zip(&prod) {
                *o += c;
            }
        }
        out
    }

    fn fmt_with(&self, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.len() > 1 {
            write!(f, "(")?;
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            let is_unit = t.scale == 1.0 && !t.factors.is_empty();
            if !is_unit {
                write!(f, "{}", t.scale)?;
            }
            for (m, &j) in t.factors.iter().enumerate() {
                if m > 0 || !is_unit {
                    write!(f, "*")?;
                }
                write!(f, "{}", names.get(j).map(String::as_str).unwrap_or("?"))?;
            }
        }
        if self.terms.len() > 1 {
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term<C> {
    pub coefficient: C,
    pub monomial: Monomial,
}

/// Coefficient types that can be merged and tested for zero.
pub trait Coefficient: Clone {
    fn add_to(&mut self, other: &Self);
    fn is_zero_coefficient(&self) -> bool;
}

impl Coefficient for C64 {
    fn add_to(&mut self, other: &Self) {
        *self += other;
    }
    fn is_zero_coefficient(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl Coefficient for ParamExpr {
    fn add_to(&mut self, other: &Self) {
        *self = std::mem::take(self).plus(other);
    }
    fn is_zero_coefficient(&self) -> bool {
        self.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<C> {
    n_vars: usize,
    terms: Vec<Term<C>>,
}

impl<C: Coefficient> Polynomial<C> {
    pub fn zero(n_vars: usize) -> Self {
        Self {
            n_vars,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(n_vars: usize, terms: impl IntoIterator<Item = (C, Monomial)>) -> Result<Self, PolyError> {
        let mut p = Self::zero(n_vars);
        for (c, m) in terms {
            p.push(c, m)?;
        }
        Ok(p)
    }

    /// Adds a term, merging it into an existing one with the same monomial.
    pub fn push(&mut self, coefficient: C, monomial: Monomial) -> Result<(), PolyError> {
        if monomial.exponents.len() != self.n_vars {
            return Err(PolyError::MonomialArity {
                expected: self.n_vars,
                got: monomial.exponents.len(),
            });
        }
        match self.terms.iter_mut().find(|t| t.monomial == monomial) {
            Some(t) => t.coefficient.add_to(&coefficient),
            None => self.terms.push(Term { coefficient, monomial }),
        }
        self.terms.retain(|t| !t.coefficient.is_zero_coefficient());
        self.terms.sort_by(|a, b| a.monomial.grlex_cmp(&b.monomial));
        Ok(())
    }
}

impl<C> Polynomial<C> {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Term<C>] {
        &self.terms
    }

    /// Total degree over terms with nonzero coefficient (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.monomial.degree()).max().unwrap_or(0)
    }

    fn max_exponent(&self) -> u32 {
        self.terms
            .iter()
            .flat_map(|t| t.monomial.support.iter().map(|&(_, e)| e))
            .max()
            .unwrap_or(0)
    }

    pub fn map_coefficients<D>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        Polynomial {
            n_vars: self.n_vars,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coefficient: f(&t.coefficient),
                    monomial: t.monomial.clone(),
                })
                .collect(),
        }
    }

    /// Evaluates with coefficients produced by `coef`, using compensated summation.
    fn eval_with(&self, pw: &Powers, coef: impl Fn(&C) -> C64) -> C64 {
        let mut acc = NeumaierSum::default();
        for t in &self.terms {
            acc.add(coef(&t.coefficient) * pw.monomial(&t.monomial));
        }
        acc.value()
    }

    /// Value, with the gradient added into `row`.
    fn eval_gradient_with(&self, pw: &Powers, coef: impl Fn(&C) -> C64, mut row: impl FnMut(usize, C64)) -> C64 {
        let mut acc = NeumaierSum::default();
        for t in &self.terms {
            let c = coef(&t.coefficient);
            let support = &t.monomial.support;
            acc.add(c * pw.monomial(&t.monomial));
            for (a, &(l, el)) in support.iter().enumerate() {
                let mut d = c * el as f64 * pw.get(l, el - 1);
                for (b, &(i, ei)) in support.iter().enumerate() {
                    if a != b {
                        d *= pw.get(i, ei);
                    }
                }
                row(l, d);
            }
        }
        acc.value()
    }
}

#[derive(Default)]
struct NeumaierSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl NeumaierSum {
    fn add(&mut self, v: C64) {
        fn step(acc: &mut (f64, f64), x: f64) {
            let t = acc.0 + x;
            if acc.0.abs() >= x.abs() {
                acc.1 += (acc.0 - t) + x;
            } else {
                acc.1 += (x - t) + acc.0;
            }
            acc.0 = t;
        }
        step(&mut self.re, v.re);
        step(&mut self.im, v.im);
    }

    fn value(&self) -> C64 {
        C64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// Table of `z_i^e` for `e <= max_exp`.
struct Powers {
    stride: usize,
    data: Vec<C64>,
}

impl Powers {
    fn new(z: &[C64], max_exp: u32) -> Self {
        let stride = max_exp as usize + 1;
        let mut data = Vec::with_capacity(z.len() * stride);
        for &zi in z {
            let mut p = C64::new(1.0, 0.0);
            data.push(p);
            for _ in 0..max_exp {
                p *= zi;
                data.push(p);
            }
        }
        Self { stride, data }
    }

    fn get(&self, var: usize, exp: u32) -> C64 {
        self.data[var * self.stride + exp as usize]
    }

    fn monomial(&self, m: &Monomial) -> C64 {
        let mut v = C64::new(1.0, 0.0);
        for &(i, e) in &m.support {
            v *= self.get(i, e);
        }
        v
    }
}

fn max_exponent<C>(polys: &[Polynomial<C>]) -> u32 {
    polys.iter().map(Polynomial::max_exponent).max().unwrap_or(0)
}

fn check_len(expected: usize, got: usize) -> Result<(), PolyError> {
    if expected != got {
        return Err(PolyError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn eval_system<C>(polys: &[Polynomial<C>], z: &[C64], coef: impl Fn(&C) -> C64 + Copy) -> DVector<C64> {
    let pw = Powers::new(z, max_exponent(polys));
    DVector::from_iterator(polys.len(), polys.iter().map(|p| p.eval_with(&pw, coef)))
}

fn eval_jacobian_system<C>(
    polys: &[Polynomial<C>],
    n_vars: usize,
    z: &[C64],
    coef: impl Fn(&C) -> C64 + Copy,
) -> (DVector<C64>, DMatrix<C64>) {
    let pw = Powers::new(z, max_exponent(polys));
    let mut jac = DMatrix::zeros(polys.len(), n_vars);
    let values = DVector::from_iterator(
        polys.len(),
        polys
            .iter()
            .enumerate()
            .map(|(k, p)| p.eval_gradient_with(&pw, coef, |l, d| jac[(k, l)] += d)),
    );
    (values, jac)
}

/// A system with numeric coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteSystem {
    unknowns: Vec<String>,
    polynomials: Vec<Polynomial<C64>>,
}

impl ConcreteSystem {
    pub fn new(unknowns: Vec<String>, polynomials: Vec<Polynomial<C64>>) -> Result<Self, PolyError> {
        for p in &polynomials {
            check_len(unknowns.len(), p.n_vars)?;
        }
        Ok(Self { unknowns, polynomials })
    }

    /// Unknowns named `z1..zn`.
    pub fn anonymous(n_vars: usize, polynomials: Vec<Polynomial<C64>>) -> Result<Self, PolyError> {
        Self::new((1..=n_vars).map(|i| format!("z{i}")).collect(), polynomials)
    }

    pub fn unknowns(&self) -> &[String] {
        &self.unknowns
    }

    pub fn polynomials(&self) -> &[Polynomial<C64>] {
        &self.polynomials
    }

    pub fn n_vars(&self) -> usize {
        self.unknowns.len()
    }

    pub fn n_equations(&self) -> usize {
        self.polynomials.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_vars() == self.n_equations()
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.polynomials.iter().map(Polynomial::degree).collect()
    }

    /// Bezout number: the product of the equation degrees.
    pub fn total_degree(&self) -> u64 {
        self.degrees().iter().map(|&d| d as u64).product()
    }

    pub fn evaluate(&self, z: &[C64]) -> Result<DVector<C64>, PolyError> {
        check_len(self.n_vars(), z.len())?;
        Ok(self.evaluate_unchecked(z))
    }

    pub fn jacobian(&self, z: &[C64]) -> Result<DMatrix<C64>, PolyError> {
        check_len(self.n_vars(), z.len())?;
        Ok(self.evaluate_with_jacobian_unchecked(z).1)
    }

    pub(crate) fn evaluate_unchecked(&self, z: &[C64]) -> DVector<C64> {
        eval_system(&self.polynomials, z, |c| *c)
    }

    pub(crate) fn evaluate_with_jacobian_unchecked(&self, z: &[C64]) -> (DVector<C64>, DMatrix<C64>) {
        eval_jacobian_system(&self.polynomials, self.n_vars(), z, |c| *c)
    }

    /// Euclidean norm of the residual vector.
    pub fn residual_norm(&self, z: &[C64]) -> Result<f64, PolyError> {
        Ok(self.evaluate(z)?.norm())
    }

    /// Divides every equation by its largest coefficient magnitude.
    pub fn normalized(&self) -> Self {
        let scales = self.row_scales();
        self.scale_rows(&scales)
    }

    /// `1 / max |coefficient|` per equation (1 for the zero polynomial).
    pub fn row_scales(&self) -> Vec<f64> {
        self.polynomials
            .iter()
            .map(|p| {
                let m = p.terms.iter().map(|t| t.coefficient.norm()).fold(0.0, f64::max);
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn scale_rows(&self, scales: &[f64]) -> Self {
        Self {
            unknowns: self.unknowns.clone(),
            polynomials: self
                .polynomials
                .iter()
                .zip(scales)
                .map(|(p, &s)| p.map_coefficients(|c| c * s))
                .collect(),
        }
    }

    /// Appends equations; all must share this system's unknowns.
    pub fn with_equations(&self, extra: Vec<Polynomial<C64>>) -> Result<Self, PolyError> {
        let mut polys = self.polynomials.clone();
        polys.extend(extra);
        Self::new(self.unknowns.clone(), polys)
    }
}

impl fmt::Display for ConcreteSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in self.polynomials.iter().enumerate() {
            write!(f, "f{} = ", k + 1)?;
            write_poly(f, p, &self.unknowns, |f, c| write!(f, "({:+e}{:+e}i)", c.re, c.im))?;
            writeln!(f)?;
        }
        Ok(())
    }
}

fn write_poly<C>(
    f: &mut fmt::Formatter<'_>,
    p: &Polynomial<C>,
    unknowns: &[String],
    coef: impl Fn(&mut fmt::Formatter<'_>, &C) -> fmt::Result,
) -> fmt::Result {
    if p.terms.is_empty() {
        return write!(f, "0");
    }
    for (k, t) in p.terms.iter().enumerate() {
        if k > 0 {
            write!(f, " + ")?;
        }
        coef(f, &t.coefficient)?;
        for (i, &e) in t.monomial.exponents.iter().enumerate() {
            match e {
                0 => {}
                1 => write!(f, "*{}", unknowns[i])?,
                _ => write!(f, "*{}^{}", unknowns[i], e)?,
            }
        }
    }
    Ok(())
}

/// A family of systems sharing one monomial structure, with coefficients
/// given as polynomials in named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedSystem {
    unknowns: Vec<String>,
    parameters: Vec<String>,
    /// Typical magnitude of each parameter, used to draw generic complex
    /// parameter points.
    parameter_scales: Vec<f64>,
    polynomials: Vec<Polynomial<ParamExpr>>,
}

impl ParameterizedSystem {
    pub fn new(
        unknowns: Vec<String>,
        parameters: Vec<String>,
        parameter_scales: Vec<f64>,
        polynomials: Vec<Polynomial<ParamExpr>>,
    ) -> Result<Self, PolyError> {
        check_len(parameters.len(), parameter_scales.len())?;
        let mut used = vec![false; parameters.len()];
        for p in &polynomials {
            check_len(unknowns.len(), p.n_vars)?;
            for t in &p.terms {
                for pt in t.coefficient.terms() {
                    for &j in &pt.factors {
                        *used.get_mut(j).ok_or(PolyError::UnknownParameter(j))? = true;
                    }
                }
            }
        }
        if let Some(j) = used.iter().position(|u| !u) {
            return Err(PolyError::UnusedParameter(parameters[j].clone()));
        }
        Ok(Self {
            unknowns,
            parameters,
            parameter_scales,
            polynomials,
        })
    }

    pub fn unknowns(&self) -> &[String] {
        &self.unknowns
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn parameter_scales(&self) -> &[f64] {
        &self.parameter_scales
    }

    pub fn polynomials(&self) -> &[Polynomial<ParamExpr>] {
        &self.polynomials
    }

    pub fn n_vars(&self) -> usize {
        self.unknowns.len()
    }

    pub fn n_equations(&self) -> usize {
        self.polynomials.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_vars() == self.n_equations()
    }

    /// Same unknowns, parameter names and coefficient expressions; parameter
    /// scales are ignored.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.unknowns == other.unknowns && self.parameters == other.parameters && self.polynomials == other.polynomials
    }

    /// Substitutes parameter values into every coefficient.
    pub fn bind(&self, params: &[C64]) -> Result<ConcreteSystem, PolyError> {
        check_len(self.n_parameters(), params.len())?;
        let polys = self
            .polynomials
            .iter()
            .map(|p| {
                let mut q = Polynomial::zero(p.n_vars);
                for t in &p.terms {
                    q.push(t.coefficient.eval(params), t.monomial.clone())?;
                }
                Ok(q)
            })
            .collect::<Result<Vec<_>, PolyError>>()?;
        ConcreteSystem::new(self.unknowns.clone(), polys)
    }

    pub fn bind_real(&self, params: &[f64]) -> Result<ConcreteSystem, PolyError> {
        let p: Vec<C64> = params.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.bind(&p)
    }

    /// `d/ds f(z; params + s * dparams)` at `s = 0`.
    #[cfg(test)]
    pub(crate) fn parameter_derivative_at(&self, params: &[C64], dparams: &[C64], z: &[C64]) -> DVector<C64> {
        eval_system(&self.polynomials, z, |c| c.eval_with_tangent(params, dparams).1)
    }
}

/// A family restricted to a line in parameter space, with each coefficient
/// stored as a polynomial in the line coordinate `s`.
#[derive(Debug, Clone)]
pub(crate) struct LineSystem {
    n_vars: usize,
    polynomials: Vec<Polynomial<Vec<C64>>>,
}

fn horner(c: &[C64], s: f64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &v| acc * s + v)
}

fn horner_derivative(c: &[C64], s: f64) -> C64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, (k, &v)| acc * s + v * k as f64)
}

impl LineSystem {
    pub(crate) fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub(crate) fn value(&self, z: &[C64], s: f64) -> DVector<C64> {
        eval_system(&self.polynomials, z, |c| horner(c, s))
    }

    pub(crate) fn value_and_jacobian(&self, z: &[C64], s: f64) -> (DVector<C64>, DMatrix<C64>) {
        eval_jacobian_system(&self.polynomials, self.n_vars, z, |c| horner(c, s))
    }

    pub(crate) fn degrees(&self) -> Vec<u32> {
        self.polynomials.iter().map(|p| p.degree()).collect()
    }

    /// Derivative in `s` at fixed `z`.
    pub(crate) fn ds(&self, z: &[C64], s: f64) -> DVector<C64> {
        eval_system(&self.polynomials, z, |c| horner_derivative(c, s))
    }
}

impl ParameterizedSystem {
    /// The members at `base + s * direction`, each equation multiplied by
    /// the matching entry of `row_scales`.
    pub(crate) fn along_line(&self, base: &[C64], direction: &[C64], row_scales: &[f64]) -> LineSystem {
        LineSystem {
            n_vars: self.n_vars(),
            polynomials: self
                .polynomials
                .iter()
                .zip(row_scales)
                .map(|(p, &w)| {
                    p.map_coefficients(|c| c.along_line(base, direction).into_iter().map(|v| v * w).collect())
                })
                .collect(),
        }
    }
}

impl fmt::Display for ParameterizedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in self.polynomials.iter().enumerate() {
            write!(f, "f{} = ", k + 1)?;
            write_poly(f, p, &self.unknowns, |f, c| c.fmt_with(&self.parameters, f))?;
            writeln!(f)?;
        }
        Ok(())
    }
}
