use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::solve::{solve, solve_from};
use super::tracker::Homotopy;
use super::{Gamma, HomotopyError, PathStatus, SolveResult, TrackerConfig};
use crate::poly::{LineSystem, ParameterizedSystem, PolyError, C64};

/// `H(z, t) = D f(z; p(t))` with `p(t) = target + t (start - target)` and a
/// constant row scaling `D` taken from the target member.
pub struct ParameterHomotopy {
    line: LineSystem,
}

impl ParameterHomotopy {
    pub fn new(family: &ParameterizedSystem, start: &[C64], target: &[C64]) -> Result<Self, HomotopyError> {
        if !family.is_square() {
            return Err(HomotopyError::NotSquare {
                equations: family.n_equations(),
                unknowns: family.n_vars(),
            });
        }
        for len in [start.len(), target.len()] {
            if len != family.n_parameters() {
                return Err(PolyError::DimensionMismatch {
                    expected: family.n_parameters(),
                    got: len,
                }
                .into());
            }
        }
        let scales = family.bind(target)?.row_scales();
        let direction: Vec<C64> = start.iter().zip(target).map(|(s, t)| s - t).collect();
        Ok(Self {
            line: family.along_line(target, &direction, &scales),
        })
    }
}

impl Homotopy for ParameterHomotopy {
    fn n_vars(&self) -> usize {
        self.line.n_vars()
    }

    fn value(&self, z: &[C64], t: f64) -> DVector<C64> {
        self.line.value(z, t)
    }

    fn value_and_jacobian(&self, z: &[C64], t: f64) -> (DVector<C64>, DMatrix<C64>) {
        self.line.value_and_jacobian(z, t)
    }

    fn degrees(&self) -> Vec<u32> {
        self.line.degrees()
    }

    fn dt(&self, z: &[C64], t: f64) -> DVector<C64> {
        self.line.ds(z, t)
    }
}

/// A random complex parameter point, each entry drawn at its family scale.
pub fn random_parameter_point<R: Rng + ?Sized>(family: &ParameterizedSystem, rng: &mut R) -> Vec<C64> {
    family
        .parameter_scales()
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * (s * std::f64::consts::FRAC_1_SQRT_2)
        })
        .collect()
}

/// Intermediate parameter points tried when a direct track loses paths.
const DETOURS: usize = 2;
/// A path that stopped above this `t` was lost mid-track.
const MIDWAY_T: f64 = 1e-3;

/// All isolated roots of one generic member of a family. Other members are
/// solved by tracking only these roots.
#[derive(Debug, Clone)]
pub struct ParameterBasis {
    family: ParameterizedSystem,
    parameters: Vec<C64>,
    solutions: Vec<Vec<C64>>,
    detours: Vec<Vec<C64>>,
}

impl ParameterBasis {
    /// Solves the family at a random complex parameter point.
    pub fn compute<R: Rng + ?Sized>(
        family: &ParameterizedSystem,
        config: &TrackerConfig,
        rng: &mut R,
    ) -> Result<Self, HomotopyError> {
        let params = random_parameter_point(family, rng);
        Self::from_parameters(family, params, config, Gamma::random(rng))
    }

    pub fn from_parameters(
        family: &ParameterizedSystem,
        parameters: Vec<C64>,
        config: &TrackerConfig,
        gamma: Gamma,
    ) -> Result<Self, HomotopyError> {
        let system = family.bind(&parameters)?.normalized();
        let result = solve(&system, config, gamma)?;
        // seeded from the basis so tracking stays a pure function of it
        let seed = parameters
            .iter()
            .fold(0u64, |h, c| (h ^ c.re.to_bits()).rotate_left(17) ^ c.im.to_bits());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let detours = (0..DETOURS).map(|_| random_parameter_point(family, &mut rng)).collect();
        Ok(Self {
            family: family.clone(),
            parameters,
            solutions: result.distinct_solutions,
            detours,
        })
    }

    pub fn family(&self) -> &ParameterizedSystem {
        &self.family
    }

    pub fn parameters(&self) -> &[C64] {
        &self.parameters
    }

    pub fn solutions(&self) -> &[Vec<C64>] {
        &self.solutions
    }

    /// Number of isolated roots of a generic member.
    pub fn generic_root_count(&self) -> usize {
        self.solutions.len()
    }

    /// Solves the member at `target` by tracking the basis roots.
    ///
    /// A straight parameter segment can pass close to a member with colliding
    /// roots, where some paths stall. If that happens the roots are also
    /// routed through a random complex point, and the route that finds more
    /// distinct roots wins.
    pub fn track_to(&self, target: &[C64], config: &TrackerConfig) -> Result<SolveResult, HomotopyError> {
        let mut best = self.track_direct(target, config)?;
        for via in &self.detours {
            if !lost_midway(&best) {
                break;
            }
            let first = ParameterHomotopy::new(&self.family, &self.parameters, via)?;
            let midway = solve_from(&first, &self.solutions, config);
            let second = ParameterHomotopy::new(&self.family, via, target)?;
            let routed = solve_from(&second, &midway.distinct_solutions, config);
            if routed.distinct_solutions.len() > best.distinct_solutions.len() {
                best = routed;
            }
        }
        Ok(best)
    }

    /// One straight track from the basis, without detours.
    pub fn track_direct(&self, target: &[C64], config: &TrackerConfig) -> Result<SolveResult, HomotopyError> {
        config.validate()?;
        let h = ParameterHomotopy::new(&self.family, &self.parameters, target)?;
        Ok(solve_from(&h, &self.solutions, config))
    }

    pub fn track_to_real(&self, target: &[f64], config: &TrackerConfig) -> Result<SolveResult, HomotopyError> {
        let p: Vec<C64> = target.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.track_to(&p, config)
    }
}

/// Paths that stopped well before the end. Paths heading to infinity only
/// stall near `t = 0`, and another route would not help them.
fn lost_midway(r: &SolveResult) -> bool {
    r.paths
        .iter()
        .any(|p| matches!(p.status, PathStatus::Stalled | PathStatus::MaxSteps) && p.t_reached > MIDWAY_T)
}

/// Solves `family` once at a random complex point, then tracks those roots to
/// every entry of `targets`.
pub fn parameter_solve<R: Rng + ?Sized>(
    family: &ParameterizedSystem,
    targets: &[Vec<C64>],
    config: &TrackerConfig,
    rng: &mut R,
) -> Result<(ParameterBasis, Vec<SolveResult>), HomotopyError> {
    let basis = ParameterBasis::compute(family, config, rng)?;
    let results = targets
        .iter()
        .map(|t| basis.track_to(t, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((basis, results))
}
