mod common;

use std::f64::consts::PI;

use common::*;
use dirac_spectral::weyl::{
    herglotz_check, interlacing_violations, set_distance, stieltjes_mass, RightData, Truncation, WeylFunction,
};
use dirac_spectral::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn herglotz_and_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w = regular_weyl(random_problem(&mut rng, 1.5, false), 0.3, RightData::Angle(-0.4));
    let zs = random_upper(&mut rng, 12, 6.0, (0.01, 4.0));
    let rep = herglotz_check(&w, &zs).unwrap();
    assert!(rep.ok && rep.min_im > 0.0);
    assert!(rep.reflection_error < 1e-10);
    for z in zs {
        let (a, b) = (w.eval(z).unwrap(), w.eval(z.conj()).unwrap());
        assert!((a.conj() - b).norm() < 1e-10 * a.norm().max(1.0));
    }
}

#[test]
fn stieltjes_mass_of_free_atom() {
    let w = regular_weyl(free(PI), 0.0, RightData::Angle(0.0));
    let m = stieltjes_mass(&w, 0.5, 1.5, &[1e-2, 1e-3, 1e-4]).unwrap();
    assert!((m - 1.0 / PI).abs() < 1e-6, "{m}");
    assert!(matches!(w.eval(c(3.0, 0.0)), Err(Error::AtEigenvalue { .. })));
}

#[test]
fn reference_data_matches_angle() {
    let beta: f64 = 0.9;
    let a = regular_weyl(free(2.0), 0.1, RightData::Angle(beta));
    let b = regular_weyl(free(2.0), 0.1, RightData::Reference([-beta.sin(), beta.cos()]));
    for z in [c(0.3, 1.0), c(-4.0, 0.2)] {
        assert!((a.eval(z).unwrap() - b.eval(z).unwrap()).norm() < 1e-12);
    }
}

#[test]
fn half_line_truncations_agree() {
    let s = settings();
    let frame = dirac_spectral::boundary::fundamental_system(free(f64::INFINITY), &left(0.4), 1.0, &s).unwrap();
    let lp = WeylFunction::new(
        frame,
        RightData::LimitPoint {
            seed: 3.0,
            condition: Truncation::Radiation,
        },
        s,
    )
    .unwrap();
    let (lc, singular) = (radial_weyl(0.3), radial_weyl(1.0));
    for z in [c(1.0, 0.5), c(-2.0, 2.0), c(0.1, 0.05)] {
        let m = lp.eval(z).unwrap();
        assert!((m - c(0.0, 1.0)).norm() < 1e-8, "{z}: {m}");
        assert!(lc.eval(z).unwrap().im > 0.0, "{z}");
        let (a, b) = (singular.eval(z).unwrap(), singular.eval(z.conj()).unwrap());
        assert!((a.conj() - b).norm() < 1e-10 * a.norm());
    }
    let rep = herglotz_check(&singular, &[c(-2.0, 2.0), c(1.0, 1.0)]).unwrap();
    assert!(rep.ok && !rep.positivity_expected && rep.min_im < 0.0);
    assert!(herglotz_check(&lc, &[c(-2.0, 2.0)]).unwrap().positivity_expected);
}

#[test]
fn set_helpers() {
    assert!((set_distance(&[1.0, 2.0], &[1.0, 2.5]) - 0.5).abs() < 1e-15);
    assert_eq!(set_distance(&[1.0], &[1.0, 2.0]), 1.0);
    assert_eq!(set_distance(&[], &[1.0]), f64::INFINITY);
    assert_eq!(interlacing_violations(&[0.0, 2.0, 4.0], &[1.0, 3.0]), 0);
    assert!(interlacing_violations(&[0.0, 1.0, 4.0], &[2.0, 3.0]) > 0);
}
