//! Polynomial formulations of TDOA and FDOA geolocation.
//!
//! Square roots are removed by lifting: every receiver state that appears in
//! an FDOA equation (or the TDOA reference receiver) gets a range unknown
//! `r_k` tied to the emitter by `r_k^2 = |x - x_k|^2`. Receiver data and
//! measurement values enter as parameters, so one [`ParameterizedSystem`]
//! serves every scenario with the same measurement layout.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{
    FdoaMeasurement, ReceiverKey, ReceiverPair, ReceiverState, Scenario, TdoaMeasurement, Vec3, SPEED_OF_LIGHT,
};
use crate::poly::{ConcreteSystem, Monomial, ParamExpr, ParameterizedSystem, PolyError, Polynomial, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("no measurements for the requested mode")]
    Empty,
    #[error("pair {0} has both receivers at the same position")]
    DegeneratePair(usize),
    #[error("TDOA-only systems need one reference receiver shared by every pair")]
    NoCommonReference,
    #[error("receiver `{0}` at epoch {1} appears with two different states")]
    ConflictingReceiver(String, i64),
    #[error("altitude constraints are only defined in 3D")]
    AltitudeIn2d,
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("length unit must be positive and finite, got {0}")]
    BadLengthUnit(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildWarning {
    /// Fewer measurements than the minimum for a finite solution set.
    BelowMinimum { have: usize, need: usize },
    /// FDOA equation `index` has two stationary receivers.
    StationaryPair { index: usize, nonzero_value: bool },
    /// The built system is not square.
    NotSquare { equations: usize, unknowns: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementMode {
    TdoaOnly,
    FdoaOnly,
    TdoaFdoa,
}

impl MeasurementMode {
    pub fn label(self) -> &'static str {
        match self {
            MeasurementMode::TdoaOnly => "TDOA",
            MeasurementMode::FdoaOnly => "FDOA",
            MeasurementMode::TdoaFdoa => "TDOA+FDOA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AltitudeConstraint {
    /// Local flat frame: `z = altitude`.
    Flat { altitude: f64 },
    /// Emitter on the sphere `|x| = radius` about the origin.
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoSystemSpec {
    pub mode: MeasurementMode,
    pub dimension: usize,
    pub altitude: Option<AltitudeConstraint>,
    /// Metres per unknown unit. Defaults to the RMS receiver coordinate;
    /// fix it to keep families built from different data identical.
    pub length_unit: Option<f64>,
}

impl GeoSystemSpec {
    pub fn new(mode: MeasurementMode, dimension: usize) -> Self {
        Self {
            mode,
            dimension,
            altitude: None,
            length_unit: None,
        }
    }

    pub fn fdoa_3d() -> Self {
        Self::new(MeasurementMode::FdoaOnly, 3)
    }

    pub fn with_altitude(mut self, altitude: AltitudeConstraint) -> Self {
        self.altitude = Some(altitude);
        self
    }

    pub fn with_length_unit(mut self, unit: f64) -> Self {
        self.length_unit = Some(unit);
        self
    }
}

/// Isolated complex roots of a generic three-epoch 3D FDOA system (nine
/// unknowns, total degree 512), measured with repeated total-degree solves at
/// random complex parameters.
pub const GENERIC_FDOA_ROOT_COUNT: usize = 368;

/// Minimum number of measurements for a zero-dimensional solution set, or
/// `None` where the combination is undefined (altitude in 2D).
///
/// For TDOA+FDOA a measurement is one pair carrying both values.
pub fn minimum_measurements(mode: MeasurementMode, dimension: usize, altitude: bool) -> Option<usize> {
    use MeasurementMode::*;
    match (mode, dimension, altitude) {
        (_, 2, true) => None,
        (TdoaOnly, 2, false) => Some(2),
        (TdoaOnly, 3, false) => Some(3),
        (TdoaOnly, 3, true) => Some(2),
        (FdoaOnly, 2, false) => Some(2),
        (FdoaOnly, 3, false) => Some(3),
        (FdoaOnly, 3, true) => Some(2),
        (TdoaFdoa, 2, false) => Some(1),
        (TdoaFdoa, 3, false) => Some(2),
        (TdoaFdoa, 3, true) => Some(1),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeUnknown {
    pub receiver: ReceiverKey,
    pub position: Vec3,
    pub index: usize,
}

/// Where each physical quantity sits in the unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownLayout {
    pub dimension: usize,
    /// Indices of the emitter coordinates, `dimension` of them.
    pub emitter: Vec<usize>,
    pub ranges: Vec<RangeUnknown>,
    /// Metres per unit of every unknown. Unknowns are kept near unit
    /// magnitude so start roots and solutions live on the same scale.
    pub unit: f64,
}

impl UnknownLayout {
    pub fn n_unknowns(&self) -> usize {
        self.dimension + self.ranges.len()
    }

    /// The point `(emitter, ranges)` a noiseless scenario is expected to solve.
    pub fn lift(&self, emitter: &Vec3) -> Vec<f64> {
        let mut z = vec![0.0; self.n_unknowns()];
        for (d, &i) in self.emitter.iter().enumerate() {
            z[i] = emitter[d] / self.unit;
        }
        for r in &self.ranges {
            z[r.index] = planar_distance(emitter, &r.position, self.dimension) / self.unit;
        }
        z
    }

    pub fn lift_complex(&self, emitter: &Vec3) -> Vec<C64> {
        self.lift(emitter).into_iter().map(|v| C64::new(v, 0.0)).collect()
    }

    /// Range in metres stored at unknown `index`.
    pub fn range_of(&self, z: &[f64], index: usize) -> f64 {
        z[index] * self.unit
    }

    /// Emitter coordinates from a real solution vector; missing coordinates are 0.
    pub fn emitter_of(&self, z: &[f64]) -> Vec3 {
        let mut e = Vec3::zeros();
        for (d, &i) in self.emitter.iter().enumerate() {
            e[d] = z[i] * self.unit;
        }
        e
    }
}

pub(crate) fn planar_distance(a: &Vec3, b: &Vec3, dimension: usize) -> f64 {
    (0..dimension).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt()
}

/// A built geolocation system: the parameter family, the parameter values of
/// this instance, and the unknown layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoSystem {
    pub spec: GeoSystemSpec,
    pub family: ParameterizedSystem,
    pub parameters: Vec<f64>,
    pub layout: UnknownLayout,
    /// Degree of each equation as constructed.
    pub equation_degrees: Vec<u32>,
    pub warnings: Vec<BuildWarning>,
    /// Typical coordinate magnitude, m.
    pub length_scale: f64,
}

impl GeoSystem {
    /// The instance with each equation scaled to unit max coefficient.
    pub fn concrete(&self) -> Result<ConcreteSystem, PolyError> {
        Ok(self.family.bind_real(&self.parameters)?.normalized())
    }

    pub fn complex_parameters(&self) -> Vec<C64> {
        self.parameters.iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    pub fn reported_total_degree(&self) -> u64 {
        self.equation_degrees.iter().map(|&d| d as u64).product()
    }
}

/// Registers named parameters on first use.
struct ParamTable {
    names: Vec<String>,
    values: Vec<f64>,
    scales: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ParamTable {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            scales: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn get(&mut self, name: String, value: f64, scale: f64) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.values.push(value);
        self.scales.push(scale);
        i
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

struct Builder {
    dimension: usize,
    n_vars: usize,
    unknowns: Vec<String>,
    params: ParamTable,
    polys: Vec<Polynomial<ParamExpr>>,
    degrees: Vec<u32>,
    ranges: Vec<RangeUnknown>,
    receiver_tags: HashMap<ReceiverKey, (String, ReceiverState)>,
    length_scale: f64,
    speed_scale: f64,
}

impl Builder {
    fn new(spec: &GeoSystemSpec, receivers: &[&ReceiverState], n_ranges: usize) -> Result<Self, BuildError> {
        let dimension = spec.dimension;
        if !(2..=3).contains(&dimension) {
            return Err(BuildError::BadDimension(dimension));
        }
        let length_scale = match spec.length_unit {
            Some(u) if u.is_finite() && u > 0.0 => u,
            Some(u) => return Err(BuildError::BadLengthUnit(u)),
            None => length_scale_of(receivers, dimension),
        };
        let rms = |vals: Vec<f64>| (vals.iter().map(|v| v * v).sum::<f64>() / vals.len().max(1) as f64).sqrt();
        let speed_scale = rms(receivers
            .iter()
            .flat_map(|r| r.velocity.iter().take(dimension).copied().collect::<Vec<_>>())
            .collect())
        .max(1e-3);
        let mut unknowns: Vec<String> = AXES[..dimension].iter().map(|s| s.to_string()).collect();
        unknowns.extend((1..=n_ranges).map(|k| format!("r{k}")));
        Ok(Self {
            dimension,
            n_vars: dimension + n_ranges,
            unknowns,
            params: ParamTable::new(),
            polys: Vec::new(),
            degrees: Vec::new(),
            ranges: Vec::new(),
            receiver_tags: HashMap::new(),
            length_scale,
            speed_scale,
        })
    }

    fn tag(&mut self, rx: &ReceiverState) -> Result<String, BuildError> {
        let key = rx.key();
        if let Some((tag, known)) = self.receiver_tags.get(&key) {
            if known != rx {
                return Err(BuildError::ConflictingReceiver(rx.id.clone(), rx.epoch));
            }
            return Ok(tag.clone());
        }
        let tag = format!("{}@{}", rx.id, rx.epoch);
        self.receiver_tags.insert(key, (tag.clone(), rx.clone()));
        Ok(tag)
    }

    fn position(&mut self, rx: &ReceiverState, d: usize) -> Result<usize, BuildError> {
        let tag = self.tag(rx)?;
        Ok(self
            .params
            .get(format!("{tag}.p{}", AXES[d]), rx.position[d], self.length_scale))
    }

    fn velocity(&mut self, rx: &ReceiverState, d: usize) -> Result<usize, BuildError> {
        let tag = self.tag(rx)?;
        Ok(self
            .params
            .get(format!("{tag}.v{}", AXES[d]), rx.velocity[d], self.speed_scale))
    }

    fn range_index(&self, rx: &ReceiverState) -> Option<usize> {
        let key = rx.key();
        self.ranges.iter().find(|r| r.receiver == key).map(|r| r.index)
    }

    /// Range unknown for `rx`, adding its consistency equation on first use.
    fn range(&mut self, rx: &ReceiverState) -> Result<usize, BuildError> {
        self.tag(rx)?;
        if let Some(i) = self.range_index(rx) {
            return Ok(i);
        }
        let index = self.dimension + self.ranges.len();
        self.ranges.push(RangeUnknown {
            receiver: rx.key(),
            position: rx.position,
            index,
        });
        // r^2 - |x|^2 + 2 x_k . x - |x_k|^2
        let n = self.n_vars;
        let mut p = Polynomial::zero(n);
        p.push(ParamExpr::constant(1.0), Monomial::var_pow(n, index, 2))?;
        let mut constant = ParamExpr::zero();
        for d in 0..self.dimension {
            let pk = self.position(rx, d)?;
            p.push(ParamExpr::constant(-1.0), Monomial::var_pow(n, d, 2))?;
            p.push(ParamExpr::product(2.0, &[pk]), Monomial::var(n, d))?;
            constant = constant.plus(&ParamExpr::product(-1.0, &[pk, pk]));
        }
        p.push(constant, Monomial::one(n))?;
        self.polys.push(p);
        self.degrees.push(2);
        Ok(index)
    }

    /// `r_a r_b f - r_a [v_b . (x_b - x)] + r_b [v_a . (x_a - x)] = 0`.
    fn fdoa_equation(&mut self, k: usize, m: &FdoaMeasurement) -> Result<(), BuildError> {
        let (a, b) = (&m.pair.reference, &m.pair.other);
        let ra = self.range(a)?;
        let rb = self.range(b)?;
        let f = self.params.get(format!("f{}", k + 1), m.value, self.speed_scale);
        let n = self.n_vars;
        let mut p = Polynomial::zero(n);
        p.push(ParamExpr::param(f), Monomial::product(n, &[ra, rb]))?;
        let mut ra_const = ParamExpr::zero();
        let mut rb_const = ParamExpr::zero();
        for d in 0..self.dimension {
            let (vb, xb) = (self.velocity(b, d)?, self.position(b, d)?);
            let (va, xa) = (self.velocity(a, d)?, self.position(a, d)?);
            ra_const = ra_const.plus(&ParamExpr::product(-1.0, &[vb, xb]));
            rb_const = rb_const.plus(&ParamExpr::product(1.0, &[va, xa]));
            p.push(ParamExpr::param(vb), Monomial::product(n, &[ra, d]))?;
            p.push(ParamExpr::product(-1.0, &[va]), Monomial::product(n, &[rb, d]))?;
        }
        p.push(ra_const, Monomial::var(n, ra))?;
        p.push(rb_const, Monomial::var(n, rb))?;
        self.polys.push(p);
        self.degrees.push(2);
        Ok(())
    }

    fn tau(&mut self, k: usize, m: &TdoaMeasurement) -> usize {
        self.params
            .get(format!("tau{}", k + 1), m.value, self.length_scale / SPEED_OF_LIGHT)
    }

    /// Squared form with only the reference range:
    /// `c^2 tau^2 + 2 c tau r_1 + |x_1|^2 - |x_i|^2 + 2 (x_i - x_1) . x = 0`.
    fn tdoa_reference_equation(&mut self, k: usize, m: &TdoaMeasurement) -> Result<(), BuildError> {
        let (r, i) = (&m.pair.reference, &m.pair.other);
        let r1 = self.range(r)?;
        let tau = self.tau(k, m);
        let c = SPEED_OF_LIGHT;
        let n = self.n_vars;
        let mut p = Polynomial::zero(n);
        p.push(ParamExpr::product(2.0 * c, &[tau]), Monomial::var(n, r1))?;
        let mut constant = ParamExpr::product(c * c, &[tau, tau]);
        for d in 0..self.dimension {
            let x1 = self.position(r, d)?;
            let xi = self.position(i, d)?;
            constant = constant
                .plus(&ParamExpr::product(1.0, &[x1, x1]))
                .plus(&ParamExpr::product(-1.0, &[xi, xi]));
            p.push(
                ParamExpr::product(2.0, &[xi]).plus(&ParamExpr::product(-2.0, &[x1])),
                Monomial::var(n, d),
            )?;
        }
        p.push(constant, Monomial::one(n))?;
        self.polys.push(p);
        self.degrees.push(1);
        Ok(())
    }

    /// With both ranges lifted the definition is linear: `r_i - r_1 - c tau = 0`.
    fn tdoa_difference_equation(&mut self, k: usize, m: &TdoaMeasurement) -> Result<(), BuildError> {
        let ra = self.range(&m.pair.reference)?;
        let rb = self.range(&m.pair.other)?;
        let tau = self.tau(k, m);
        let n = self.n_vars;
        let p = Polynomial::from_terms(
            n,
            [
                (ParamExpr::constant(1.0), Monomial::var(n, rb)),
                (ParamExpr::constant(-1.0), Monomial::var(n, ra)),
                (ParamExpr::product(-SPEED_OF_LIGHT, &[tau]), Monomial::one(n)),
            ],
        )?;
        self.polys.push(p);
        self.degrees.push(1);
        Ok(())
    }

    fn altitude(&mut self, constraint: AltitudeConstraint) -> Result<(), BuildError> {
        if self.dimension != 3 {
            return Err(BuildError::AltitudeIn2d);
        }
        let n = self.n_vars;
        let p = match constraint {
            AltitudeConstraint::Flat { altitude } => {
                let h = self.params.get("alt".into(), altitude, self.length_scale);
                self.degrees.push(1);
                Polynomial::from_terms(
                    n,
                    [
                        (ParamExpr::constant(1.0), Monomial::var(n, 2)),
                        (ParamExpr::product(-1.0, &[h]), Monomial::one(n)),
                    ],
                )?
            }
            AltitudeConstraint::Sphere { radius } => {
                let r = self.params.get("radius".into(), radius, radius.abs().max(1.0));
                self.degrees.push(2);
                let mut p = Polynomial::zero(n);
                for d in 0..3 {
                    p.push(ParamExpr::constant(1.0), Monomial::var_pow(n, d, 2))?;
                }
                p.push(ParamExpr::product(-1.0, &[r, r]), Monomial::one(n))?;
                p
            }
        };
        self.polys.push(p);
        Ok(())
    }

    fn finish(self, spec: GeoSystemSpec, measurement_count: usize) -> Result<GeoSystem, BuildError> {
        let mut warnings = Vec::new();
        if let Some(need) = minimum_measurements(spec.mode, spec.dimension, spec.altitude.is_some()) {
            if measurement_count < need {
                warnings.push(BuildWarning::BelowMinimum {
                    have: measurement_count,
                    need,
                });
            }
        }
        if self.polys.len() != self.n_vars {
            warnings.push(BuildWarning::NotSquare {
                equations: self.polys.len(),
                unknowns: self.n_vars,
            });
        }
        let unit = self.length_scale;
        let family = ParameterizedSystem::new(
            self.unknowns,
            self.params.names,
            self.params.scales,
            self.polys.iter().map(|p| in_units(p, unit)).collect(),
        )?;
        Ok(GeoSystem {
            spec,
            family,
            parameters: self.params.values,
            layout: UnknownLayout {
                dimension: self.dimension,
                emitter: (0..self.dimension).collect(),
                ranges: self.ranges,
                unit,
            },
            equation_degrees: self.degrees,
            warnings,
            length_scale: self.length_scale,
        })
    }
}

/// RMS receiver coordinate over the first `dimension` axes, at least 1 m.
pub fn length_scale_of(receivers: &[&ReceiverState], dimension: usize) -> f64 {
    let vals: Vec<f64> = receivers
        .iter()
        .flat_map(|r| r.position.iter().take(dimension).copied().collect::<Vec<_>>())
        .collect();
    (vals.iter().map(|v| v * v).sum::<f64>() / vals.len().max(1) as f64)
        .sqrt()
        .max(1.0)
}

/// Substitutes `z = unit * w` so the polynomial is written in `w`.
fn in_units(p: &Polynomial<ParamExpr>, unit: f64) -> Polynomial<ParamExpr> {
    let mut q = Polynomial::zero(p.n_vars());
    for t in p.terms() {
        q.push(
            t.coefficient.clone().scaled(unit.powi(t.monomial.degree() as i32)),
            t.monomial.clone(),
        )
        .expect("same arity");
    }
    q
}

fn distinct_states<'a>(pairs: impl Iterator<Item = &'a ReceiverPair>) -> Vec<&'a ReceiverState> {
    let mut seen: Vec<&ReceiverState> = Vec::new();
    for p in pairs {
        for rx in [&p.reference, &p.other] {
            if !seen.iter().any(|s| s.key() == rx.key()) {
                seen.push(rx);
            }
        }
    }
    seen
}

fn check_pair(index: usize, pair: &ReceiverPair, dimension: usize) -> Result<(), BuildError> {
    if planar_distance(&pair.reference.position, &pair.other.position, dimension) == 0.0 {
        return Err(BuildError::DegeneratePair(index));
    }
    Ok(())
}

/// TDOA-only system: one reference range `r_1`, one linear equation per
/// measurement and the range equation for `r_1`.
pub fn build_tdoa(measurements: &[TdoaMeasurement], spec: GeoSystemSpec) -> Result<GeoSystem, BuildError> {
    if measurements.is_empty() {
        return Err(BuildError::Empty);
    }
    let reference = measurements[0].pair.reference.key();
    if measurements.iter().any(|m| m.pair.reference.key() != reference) {
        return Err(BuildError::NoCommonReference);
    }
    for (k, m) in measurements.iter().enumerate() {
        check_pair(k, &m.pair, spec.dimension)?;
    }
    let states = distinct_states(measurements.iter().map(|m| &m.pair));
    let mut b = Builder::new(&spec, &states, 1)?;
    b.range(&measurements[0].pair.reference)?;
    for (k, m) in measurements.iter().enumerate() {
        b.tdoa_reference_equation(k, m)?;
    }
    if let Some(alt) = spec.altitude {
        b.altitude(alt)?;
    }
    b.finish(spec, measurements.len())
}

/// FDOA system: a range unknown per distinct receiver state, one bilinear
/// equation per measurement and one range equation per receiver state.
pub fn build_fdoa(measurements: &[FdoaMeasurement], spec: GeoSystemSpec) -> Result<GeoSystem, BuildError> {
    build_fdoa_tdoa(measurements, &[], spec)
}

/// Joint system over FDOA and TDOA measurements. Every receiver state gets a
/// range unknown, so TDOA enters as `r_i - r_1 = c tau`.
pub fn build_fdoa_tdoa(
    fdoa: &[FdoaMeasurement],
    tdoa: &[TdoaMeasurement],
    spec: GeoSystemSpec,
) -> Result<GeoSystem, BuildError> {
    for (k, m) in fdoa.iter().enumerate() {
        check_pair(k, &m.pair, spec.dimension)?;
    }
    for (k, m) in tdoa.iter().enumerate() {
        check_pair(k, &m.pair, spec.dimension)?;
    }
    let states = distinct_states(fdoa.iter().map(|m| &m.pair).chain(tdoa.iter().map(|m| &m.pair)));
    let mut b = Builder::new(&spec, &states, states.len())?;
    let mut stationary = Vec::new();
    for (k, m) in fdoa.iter().enumerate() {
        b.fdoa_equation(k, m)?;
        let still = |rx: &ReceiverState| rx.velocity.iter().take(spec.dimension).all(|&v| v == 0.0);
        if still(&m.pair.reference) && still(&m.pair.other) {
            stationary.push(BuildWarning::StationaryPair {
                index: k,
                nonzero_value: m.value != 0.0,
            });
        }
    }
    for (k, m) in tdoa.iter().enumerate() {
        b.tdoa_difference_equation(k, m)?;
    }
    if let Some(alt) = spec.altitude {
        b.altitude(alt)?;
    }
    let count = match spec.mode {
        MeasurementMode::TdoaOnly => tdoa.len(),
        MeasurementMode::FdoaOnly => fdoa.len(),
        // pairs carrying both values
        MeasurementMode::TdoaFdoa => fdoa.len().min(tdoa.len()),
    };
    let mut sys = b.finish(spec, count)?;
    sys.warnings.extend(stationary);
    Ok(sys)
}

/// Builds the system for `scenario` in the requested mode.
pub fn build(scenario: &Scenario, spec: GeoSystemSpec) -> Result<GeoSystem, BuildError> {
    match spec.mode {
        MeasurementMode::TdoaOnly => build_tdoa(&scenario.tdoa_measurements(), spec),
        MeasurementMode::FdoaOnly => build_fdoa(&scenario.fdoa_measurements(), spec),
        MeasurementMode::TdoaFdoa => {
            build_fdoa_tdoa(&scenario.fdoa_measurements(), &scenario.tdoa_measurements(), spec)
        }
    }
}

/// Appends an altitude equation to an existing system.
pub fn add_altitude_constraint(system: &GeoSystem, constraint: AltitudeConstraint) -> Result<GeoSystem, BuildError> {
    if system.layout.dimension != 3 {
        return Err(BuildError::AltitudeIn2d);
    }
    let n = system.family.n_vars();
    let mut names = system.family.parameters().to_vec();
    let mut scales = system.family.parameter_scales().to_vec();
    let mut values = system.parameters.clone();
    let mut polys = system.family.polynomials().to_vec();
    let mut degrees = system.equation_degrees.clone();
    let length = system.length_scale;
    let idx = names.len();
    let p = match constraint {
        AltitudeConstraint::Flat { altitude } => {
            names.push("alt".into());
            values.push(altitude);
            scales.push(length);
            degrees.push(1);
            Polynomial::from_terms(
                n,
                [
                    (ParamExpr::constant(1.0), Monomial::var(n, 2)),
                    (ParamExpr::product(-1.0, &[idx]), Monomial::one(n)),
                ],
            )?
        }
        AltitudeConstraint::Sphere { radius } => {
            names.push("radius".into());
            values.push(radius);
            scales.push(radius.abs().max(1.0));
            degrees.push(2);
            let mut p = Polynomial::zero(n);
            for d in 0..3 {
                p.push(ParamExpr::constant(1.0), Monomial::var_pow(n, d, 2))?;
            }
            p.push(ParamExpr::product(-1.0, &[idx, idx]), Monomial::one(n))?;
            p
        }
    };
    polys.push(in_units(&p, system.layout.unit));
    let family = ParameterizedSystem::new(system.family.unknowns().to_vec(), names, scales, polys)?;
    let mut spec = system.spec;
    spec.altitude = Some(constraint);
    let mut warnings: Vec<BuildWarning> = system
        .warnings
        .iter()
        .filter(|w| !matches!(w, BuildWarning::NotSquare { .. } | BuildWarning::BelowMinimum { .. }))
        .cloned()
        .collect();
    if family.n_equations() != family.n_vars() {
        warnings.push(BuildWarning::NotSquare {
            equations: family.n_equations(),
            unknowns: family.n_vars(),
        });
    }
    Ok(GeoSystem {
        spec,
        family,
        parameters: values,
        layout: system.layout.clone(),
        equation_degrees: degrees,
        warnings,
        length_scale: system.length_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fdoa_forward, tdoa_forward};

    fn rx(id: &str, epoch: i64, p: [f64; 3], v: [f64; 3]) -> ReceiverState {
        ReceiverState::new(id, epoch, Vec3::from(p), Vec3::from(v)).unwrap()
    }

    fn three_epoch_fdoa(truth: &Vec3) -> Vec<FdoaMeasurement> {
        let data = [
            (
                [10.0, 20.0, 30.0],
                [1.0, -0.5, 0.3],
                [80.0, 15.0, 60.0],
                [-1.2, 0.4, 1.9],
            ),
            (
                [55.0, 90.0, 5.0],
                [0.2, 1.5, -1.0],
                [30.0, 40.0, 70.0],
                [1.1, -1.7, 0.6],
            ),
            (
                [95.0, 5.0, 45.0],
                [-0.8, 0.9, 1.4],
                [12.0, 66.0, 88.0],
                [0.5, 0.5, -1.5],
            ),
        ];
        data.iter()
            .enumerate()
            .map(|(k, (pa, va, pb, vb))| {
                let pair = ReceiverPair::new(rx("a", k as i64, *pa, *va), rx("b", k as i64, *pb, *vb)).unwrap();
                let value = fdoa_forward(truth, &pair).unwrap();
                FdoaMeasurement { pair, value }
            })
            .collect()
    }

    #[test]
    fn fdoa_three_epochs_is_square_nine_by_nine() {
        let truth = Vec3::new(40.0, 50.0, 20.0);
        let sys = build_fdoa(&three_epoch_fdoa(&truth), GeoSystemSpec::fdoa_3d()).unwrap();
        assert_eq!(sys.family.n_vars(), 9);
        assert_eq!(sys.family.n_equations(), 9);
        assert!(sys.warnings.is_empty(), "{:?}", sys.warnings);
        let concrete = sys.concrete().unwrap();
        assert_eq!(concrete.total_degree(), sys.reported_total_degree());
        assert_eq!(concrete.total_degree(), 512);
    }

    #[test]
    fn fdoa_truth_is_a_root() {
        let truth = Vec3::new(40.0, 50.0, 20.0);
        let sys = build_fdoa(&three_epoch_fdoa(&truth), GeoSystemSpec::fdoa_3d()).unwrap();
        let z = sys.layout.lift_complex(&truth);
        let r = sys.concrete().unwrap().evaluate(&z).unwrap();
        assert!(r.camax() <= 1e-9, "{r}");
    }

    #[test]
    fn stationary_pair_warns_and_vanishes() {
        let pair = ReceiverPair::new(
            rx("a", 0, [0.0, 0.0, 0.0], [0.0; 3]),
            rx("b", 0, [5.0, 1.0, 2.0], [0.0; 3]),
        )
        .unwrap();
        let sys = build_fdoa(&[FdoaMeasurement { pair, value: 0.0 }], GeoSystemSpec::fdoa_3d()).unwrap();
        assert!(sys.warnings.contains(&BuildWarning::StationaryPair {
            index: 0,
            nonzero_value: false
        }));
        assert!(sys.warnings.contains(&BuildWarning::BelowMinimum { have: 1, need: 3 }));
        let concrete = sys.family.bind_real(&sys.parameters).unwrap();
        // range equations come first, then the FDOA equation
        assert!(concrete.polynomials()[2].terms().is_empty());
    }

    #[test]
    fn shared_reference_shares_one_range() {
        let truth = Vec3::new(1.0, 2.0, 3.0);
        let r1 = rx("r1", 0, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let ms: Vec<_> = (0..3)
            .map(|k| {
                let p = [10.0 * (k + 1) as f64, 3.0, -4.0];
                let pair = ReceiverPair::new(r1.clone(), rx(&format!("r{}", k + 2), 0, p, [0.0, 1.0, 0.5])).unwrap();
                let value = fdoa_forward(&truth, &pair).unwrap();
                FdoaMeasurement { pair, value }
            })
            .collect();
        let sys = build_fdoa(&ms, GeoSystemSpec::fdoa_3d()).unwrap();
        assert_eq!(sys.layout.ranges.len(), 4);
        assert_eq!(sys.family.n_vars(), 7);
        assert_eq!(sys.family.n_equations(), 7);
    }

    #[test]
    fn tdoa_truth_is_root_and_zero_tau_gives_bisector() {
        let truth = Vec3::new(3.0, -4.0, 12.0);
        let reference = rx("ref", 0, [-20.0, 0.0, 0.0], [0.0; 3]);
        let others = [[20.0, 0.0, 0.0], [0.0, 25.0, 5.0], [7.0, -9.0, 30.0]];
        let ms: Vec<_> = others
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let pair = ReceiverPair::new(reference.clone(), rx(&format!("o{k}"), 0, *p, [0.0; 3])).unwrap();
                let value = tdoa_forward(&truth, &pair).unwrap();
                TdoaMeasurement { pair, value }
            })
            .collect();
        let spec = GeoSystemSpec::new(MeasurementMode::TdoaOnly, 3);
        let sys = build_tdoa(&ms, spec).unwrap();
        assert_eq!(sys.family.n_vars(), 4);
        assert!(sys.family.is_square());
        let z = sys.layout.lift_complex(&truth);
        assert!(sys.concrete().unwrap().evaluate(&z).unwrap().camax() <= 1e-9);

        // tau = 0 with receivers symmetric about the origin: 2 (x_2 - x_1) . x = 0,
        // written in units of the layout
        let bis = TdoaMeasurement {
            pair: ReceiverPair::new(reference.clone(), rx("o0", 0, others[0], [0.0; 3])).unwrap(),
            value: 0.0,
        };
        let sys = build_tdoa(&[bis], spec).unwrap();
        let unit = sys.layout.unit;
        let c = sys.family.bind_real(&sys.parameters).unwrap();
        let eq = &c.polynomials()[1];
        assert_eq!(eq.terms().len(), 1);
        assert_eq!(eq.terms()[0].monomial, Monomial::var(4, 0));
        assert!((eq.terms()[0].coefficient - C64::new(80.0 * unit, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn tdoa_needs_common_reference_and_distinct_positions() {
        let a = rx("a", 0, [0.0; 3], [0.0; 3]);
        let b = rx("b", 0, [1.0, 0.0, 0.0], [0.0; 3]);
        let c = rx("c", 0, [0.0, 1.0, 0.0], [0.0; 3]);
        let spec = GeoSystemSpec::new(MeasurementMode::TdoaOnly, 3);
        let m = |r: &ReceiverState, o: &ReceiverState| TdoaMeasurement {
            pair: ReceiverPair::new(r.clone(), o.clone()).unwrap(),
            value: 0.0,
        };
        assert_eq!(
            build_tdoa(&[m(&a, &b), m(&b, &c)], spec).unwrap_err(),
            BuildError::NoCommonReference
        );
        let twin = rx("twin", 0, [0.0; 3], [0.0; 3]);
        assert_eq!(
            build_tdoa(&[m(&a, &twin)], spec).unwrap_err(),
            BuildError::DegeneratePair(0)
        );
        assert_eq!(build_tdoa(&[], spec).unwrap_err(), BuildError::Empty);
    }

    #[test]
    fn altitude_constraints() {
        let truth = Vec3::new(40.0, 50.0, 20.0);
        let ms = three_epoch_fdoa(&truth);
        let sys = build_fdoa(&ms[..2], GeoSystemSpec::fdoa_3d()).unwrap();
        assert!(!sys.family.is_square());
        let flat = add_altitude_constraint(&sys, AltitudeConstraint::Flat { altitude: 20.0 }).unwrap();
        assert!(flat.family.is_square());
        assert!(flat.warnings.is_empty(), "{:?}", flat.warnings);
        let z = flat.layout.lift_complex(&truth);
        assert!(flat.concrete().unwrap().evaluate(&z).unwrap().camax() <= 1e-9);

        let sphere = add_altitude_constraint(&sys, AltitudeConstraint::Sphere { radius: truth.norm() }).unwrap();
        assert!(sphere.concrete().unwrap().evaluate(&z).unwrap().camax() <= 1e-9);
        assert_eq!(*sphere.equation_degrees.last().unwrap(), 2);

        let via_spec = build_fdoa(
            &ms[..2],
            GeoSystemSpec::fdoa_3d().with_altitude(AltitudeConstraint::Flat { altitude: 20.0 }),
        )
        .unwrap();
        assert_eq!(via_spec.family, flat.family);

        let planar = build_fdoa(&ms[..2], GeoSystemSpec::new(MeasurementMode::FdoaOnly, 2)).unwrap();
        assert_eq!(
            add_altitude_constraint(&planar, AltitudeConstraint::Flat { altitude: 0.0 }).unwrap_err(),
            BuildError::AltitudeIn2d
        );
    }

    #[test]
    fn minimum_counts() {
        use MeasurementMode::*;
        assert_eq!(minimum_measurements(FdoaOnly, 3, false), Some(3));
        assert_eq!(minimum_measurements(TdoaOnly, 2, false), Some(2));
        assert_eq!(minimum_measurements(TdoaFdoa, 3, true), Some(1));
        assert_eq!(minimum_measurements(TdoaOnly, 2, true), None);
    }

    #[test]
    fn binding_is_pure() {
        let truth = Vec3::new(40.0, 50.0, 20.0);
        let sys = build_fdoa(&three_epoch_fdoa(&truth), GeoSystemSpec::fdoa_3d()).unwrap();
        let a = sys.family.bind_real(&sys.parameters).unwrap();
        let b = sys.family.bind_real(&sys.parameters).unwrap();
        assert_eq!(a, b);
    }
}
