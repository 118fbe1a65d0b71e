mod common;

use std::f64::consts::PI;

use common::*;
use dirac_spectral::debranges::{
    kernel_integral, kernel_structure, transform_hat, Convention, DeBrangesFunction,
};
use dirac_spectral::ode::{CVec2, QuadSettings};
use dirac_spectral::weyl::RightData;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hermite_biehler_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3 {
        let w = regular_weyl(random_problem(&mut rng, 1.0, false), 0.5, RightData::Angle(0.0));
        let e = DeBrangesFunction::new(&w.frame.phi, 0.8).unwrap();
        assert!(e.auto_selected);
        assert_eq!(e.convention, Convention::Conjugate);
        let rep = e.hermite_biehler(&random_upper(&mut rng, 20, 8.0, (0.01, 3.0))).unwrap();
        assert!(rep.ok && rep.min_log_ratio > 0.0);
    }
}

#[test]
fn structure_kernel_equals_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let w = regular_weyl(random_problem(&mut rng, 1.0, false), 0.2, RightData::Angle(0.0));
    let quad = QuadSettings::default();
    for cc in [0.1, 0.55, 0.95] {
        let e = DeBrangesFunction::new(&w.frame.phi, cc).unwrap();
        for (zeta, z) in [(c(1.0, 0.5), c(-2.0, 1.0)), (c(0.3, 0.0), c(0.3, 0.0)), (c(4.0, -1.0), c(2.0, 2.0))] {
            let a = kernel_integral(&w.frame.phi, zeta, z, cc, &quad).unwrap().value();
            let b = kernel_structure(&e, zeta, z).unwrap().value();
            assert!((a - b).norm() < 1e-9 * a.norm().max(1.0), "c {cc}: {a} vs {b}");
        }
    }
}

#[test]
fn diagonal_kernel_is_positive_and_e_has_no_upper_zeros() {
    let w = radial_weyl(1.0);
    for cc in [0.05, 0.5, 2.0] {
        let e = DeBrangesFunction::new(&w.frame.phi, cc).unwrap();
        for z in [c(0.0, 0.5), c(3.0, 0.1), c(-1.0, 2.0)] {
            let k = kernel_structure(&e, z, z).unwrap().value();
            assert!(k.re > 0.0 && k.im.abs() < 1e-10 * k.re);
            assert!(e.eval(z).unwrap().norm() > 0.0);
        }
    }
}

#[test]
fn transform_of_free_indicator() {
    let w = regular_weyl(free(PI), 0.0, RightData::Angle(0.0));
    let zs = [c(0.5, 0.0), c(1.3, 0.7), c(-2.0, 0.0)];
    let hats = transform_hat(|_| CVec2::new(c(0.0, 0.0), c(1.0, 0.0)), (0.0, PI / 2.0), &w.frame.phi, &zs, &QuadSettings::default()).unwrap();
    for (z, h) in zs.iter().zip(hats) {
        let exact = (z * (PI / 2.0)).sin() / z;
        assert!((h - exact).norm() < 1e-12, "{z}: {h} vs {exact}");
    }
    assert!(transform_hat(|_| CVec2::zeros(), (1.0, 4.0), &w.frame.phi, &zs, &QuadSettings::default()).is_err());
}
