mod common;

use common::{fdoa_scenario, naive_system_eval};
use fdoar::builder::{
    add_altitude_constraint, build, minimum_measurements, AltitudeConstraint, BuildWarning, GeoSystemSpec,
    MeasurementMode,
};
use fdoar::geometry::{fdoa_forward, Emitter, Observation, ReceiverPair, ReceiverState, Scenario, Vec3};
use fdoar::sim::{generate_mode_scenario, BoundsConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [MeasurementMode; 3] = [
    MeasurementMode::TdoaOnly,
    MeasurementMode::FdoaOnly,
    MeasurementMode::TdoaFdoa,
];

/// Every (mode, dimension, altitude) combination with a defined minimum.
fn cells() -> Vec<(MeasurementMode, usize, bool, usize)> {
    let mut out = Vec::new();
    for mode in MODES {
        for dim in [2, 3] {
            for alt in [false, true] {
                if let Some(m) = minimum_measurements(mode, dim, alt) {
                    out.push((mode, dim, alt, m));
                }
            }
        }
    }
    out
}

fn spec_for(mode: MeasurementMode, dim: usize, alt: bool, truth: &Vec3) -> GeoSystemSpec {
    let spec = GeoSystemSpec::new(mode, dim);
    if alt {
        spec.with_altitude(AltitudeConstraint::Flat { altitude: truth.z })
    } else {
        spec
    }
}

#[test]
fn cells_are_square_at_their_minimum() {
    assert_eq!(cells().len(), 9);
    for (k, (mode, dim, alt, m)) in cells().into_iter().enumerate() {
        let sc = generate_mode_scenario(mode, dim, m, &BoundsConfig::default(), k as u64).unwrap();
        let truth = sc.truth.unwrap().position;
        let sys = build(&sc, spec_for(mode, dim, alt, &truth)).unwrap();
        let (eqs, vars) = (sys.family.n_equations(), sys.family.n_vars());
        if (mode, dim, alt) == (MeasurementMode::TdoaFdoa, 3, false) {
            // two pairs give four constraints on three coordinates: one surplus
            assert_eq!(eqs, vars + 1);
        } else {
            assert_eq!(eqs, vars, "{mode:?} {dim}D alt={alt}");
        }
        assert!(!sys
            .warnings
            .iter()
            .any(|w| matches!(w, BuildWarning::BelowMinimum { .. })));
    }
}

#[test]
fn three_epoch_fdoa_has_nine_unknowns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sc = fdoa_scenario(&mut rng, Vec3::new(10.0, 20.0, 30.0), 3);
    let sys = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
    assert_eq!(sys.family.n_vars(), 9);
    assert_eq!(sys.family.n_equations(), 9);
}

#[test]
fn stationary_pair_is_flagged() {
    let rx = |id: &str, p: [f64; 3]| ReceiverState::new(id, 0, Vec3::from(p), Vec3::zeros()).unwrap();
    let pair = ReceiverPair::new(rx("a", [0.0, 0.0, 0.0]), rx("b", [5.0, 1.0, 2.0])).unwrap();
    let obs = vec![Observation {
        pair,
        fdoa: Some(0.0),
        tdoa: None,
    }];
    let sc = Scenario::new(obs, None, 0).unwrap();
    let sys = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
    assert!(sys.warnings.contains(&BuildWarning::StationaryPair {
        index: 0,
        nonzero_value: false
    }));
    // range equations come first; every FDOA term carries a velocity or the value
    let target = sys.concrete().unwrap();
    assert!(target.polynomials().last().unwrap().terms().is_empty());
}

#[test]
fn flat_altitude_keeps_truth_a_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = Vec3::new(33.0, 44.0, 55.0);
    let sc = fdoa_scenario(&mut rng, truth, 2);
    let sys = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
    let with_alt = add_altitude_constraint(&sys, AltitudeConstraint::Flat { altitude: truth.z }).unwrap();
    assert!(with_alt.family.is_square());
    let z = with_alt.layout.lift_complex(&truth);
    let r = naive_system_eval(&with_alt.concrete().unwrap().normalized(), &z);
    assert!(r.iter().all(|v| v.norm() <= 1e-9), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn truth_is_a_root_in_every_mode(
        seed in any::<u64>(),
        cell in 0usize..9,
        extra in 0usize..3,
    ) {
        let (mode, dim, alt, m) = cells()[cell];
        let sc = generate_mode_scenario(mode, dim, m + extra, &BoundsConfig::default(), seed).unwrap();
        let truth = sc.truth.unwrap().position;
        let sys = build(&sc, spec_for(mode, dim, alt, &truth)).unwrap();
        let z = sys.layout.lift_complex(&truth);
        let scaled = sys.concrete().unwrap().normalized();
        let r = naive_system_eval(&scaled, &z);
        let worst = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-9, "{mode:?} {dim}D alt={alt}: residual {worst:e}");
    }

    #[test]
    fn rebuilding_is_bit_identical(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = common::uniform_vec(&mut rng, 0.0, 100.0);
        let sc = fdoa_scenario(&mut rng, truth, 3);
        let a = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
        let b = build(&sc, GeoSystemSpec::fdoa_3d()).unwrap();
        prop_assert_eq!(a.concrete().unwrap(), b.concrete().unwrap());
        prop_assert_eq!(&a.parameters, &b.parameters);
    }

    #[test]
    fn noiseless_values_reproduce(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = common::uniform_vec(&mut rng, 0.0, 100.0);
        let sc = fdoa_scenario(&mut rng, truth, 4);
        for o in &sc.observations {
            prop_assert_eq!(o.fdoa.unwrap(), fdoa_forward(&truth, &o.pair).unwrap());
        }
        prop_assert_eq!(sc.truth, Some(Emitter::new(truth).unwrap()));
    }
}
