mod common;

use std::sync::Arc;

use common::*;
use dirac_spectral::coefficients::{make_radial, RadialSpec};
use dirac_spectral::gauge::{
    gauge_rotate, invariance_harness, kill_potential, normalize_det, normalize_weight, pushforward, rigidity_check,
    transform_from_spec, AngleField, Probes, TransformSpec,
};
use dirac_spectral::weyl::RightData;
use dirac_spectral::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn probes(seed: u64) -> Probes {
    Probes {
        zs: random_upper(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4.0, (0.2, 2.0)),
        window: Some((-8.0, 8.0)),
        c_grid: vec![0.3, 0.7],
        ..Probes::default()
    }
}

#[test]
fn variable_rotation_preserves_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let e = random_problem(&mut rng, 1.0, true);
    let (_, t) = gauge_rotate(&e, AngleField::parse("0.8*sin(3*x)+x^2").unwrap(), 0.0).unwrap();
    let w = regular_weyl(e, 0.2, RightData::Angle(1.0));
    let rep = invariance_harness(&w, &t, &probes(1)).unwrap();
    assert!(rep.max_deviation < 1e-8, "{rep:?}");
}

#[test]
fn normalizations_give_expected_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let e = random_problem(&mut rng, 1.0, false);
    let (img, _) = normalize_weight(&e).unwrap();
    let (a, b) = (img.interval.a, img.interval.b);
    for k in 1..8 {
        let y = a + (b - a) * k as f64 / 8.0;
        let r = img.r_at(y);
        assert!((r - dirac_spectral::coefficients::Mat2::identity()).norm() < 1e-10, "{r}");
    }
    let (img, _) = normalize_det(&e).unwrap();
    for k in 1..8 {
        let y = img.interval.a + (img.interval.b - img.interval.a) * k as f64 / 8.0;
        assert!((img.r_at(y).determinant() - 1.0).abs() < 1e-10);
    }
    let (img, _) = kill_potential(&e, &settings()).unwrap();
    for k in 1..8 {
        assert!(img.q_at(k as f64 / 8.0).norm() < 1e-9);
    }
}

#[test]
fn composition_and_inverse_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let e = random_problem(&mut rng, 1.0, false);
    let (img, t) = normalize_weight(&e).unwrap();
    let back = pushforward(&img, &t.inverse()).unwrap();
    for x in [0.1, 0.45, 0.9] {
        assert!((back.q_at(x) - e.q_at(x)).norm() < 1e-8);
        assert!((back.r_at(x) - e.r_at(x)).norm() < 1e-8);
    }
    let (_, t2) = kill_potential(&img, &settings()).unwrap();
    let both = t.then(&t2).unwrap();
    let w = regular_weyl(e, 0.3, RightData::Angle(0.5));
    let rep = invariance_harness(&w, &both, &probes(2)).unwrap();
    assert!(rep.max_deviation < 1e-8, "{rep:?}");
}

#[test]
fn transforms_from_json() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let e = random_problem(&mut rng, 1.0, false);
    let s = settings();
    let spec: TransformSpec = serde_json::from_str(r#"{"eta": "affine:2,1", "gamma": ["cos(x)", "-sin(x)", "sin(x)", "cos(x)"]}"#).unwrap();
    let t = transform_from_spec(&e, &spec, &s).unwrap();
    assert!((t.eta_value(0.5) - 2.0).abs() < 1e-15);
    let spec: TransformSpec = serde_json::from_str(r#"{"gamma": ["2", "0", "0", "1"]}"#).unwrap();
    assert!(transform_from_spec(&e, &spec, &s).is_err());
    let spec: TransformSpec = serde_json::from_str(r#"{"eta": "-x"}"#).unwrap();
    assert!(transform_from_spec(&e, &spec, &s).is_err());
    let spec: TransformSpec = serde_json::from_str(r#"{"eta": "cumulative:detR", "gamma": "weight-sqrt"}"#).unwrap();
    let t = transform_from_spec(&e, &spec, &s).unwrap();
    let w = regular_weyl(e, 0.0, RightData::Angle(0.0));
    assert!(invariance_harness(&w, &t, &probes(3)).unwrap().max_deviation < 1e-8);
}

#[test]
fn singular_left_end() {
    let e = Arc::new(make_radial(&RadialSpec::pure(1.0, f64::INFINITY)).unwrap());
    assert!(matches!(kill_potential(&e, &settings()), Err(Error::Config(_))));
}

#[test]
fn rigidity_separates_potentials() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let e = random_problem(&mut rng, 1.0, true);
    let w = regular_weyl(e.clone(), 0.0, RightData::Angle(0.0));
    let same = rigidity_check(&w, &w, (-2.0, 2.0), 0.1, 1e-3).unwrap();
    assert!(!same.distinguished && same.discrepancy == 0.0);
    let other = regular_weyl(random_problem(&mut rng, 1.0, true), 0.0, RightData::Angle(0.0));
    let diff = rigidity_check(&w, &other, (-2.0, 2.0), 0.1, 1e-3).unwrap();
    assert!(diff.distinguished, "{diff:?}");
}
