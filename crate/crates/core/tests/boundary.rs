mod common;

use std::sync::Arc;

use common::*;
use dirac_spectral::boundary::{classify_endpoint, fundamental_system, radial_frame, Endpoint, Verdict};
use dirac_spectral::coefficients::{make_radial, RadialSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn endpoint_classes() {
    let s = settings();
    let z = c(0.0, 1.0);
    let v = |e: &dirac_spectral::coefficients::DiracExpression, end| classify_endpoint(e, end, z, &s).unwrap().verdict;
    assert_eq!(v(&free(2.0), Endpoint::Right), Verdict::Regular);
    assert_eq!(v(&free(f64::INFINITY), Endpoint::Right), Verdict::LimitPoint);
    assert_eq!(v(&make_radial(&RadialSpec::pure(0.3, 2.0)).unwrap(), Endpoint::Left), Verdict::LimitCircle);
    assert_eq!(v(&make_radial(&RadialSpec::pure(1.5, 2.0)).unwrap(), Endpoint::Left), Verdict::LimitPoint);
}

#[test]
fn frames_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = random_problem(&mut rng, 2.0, false);
    let frame = fundamental_system(e, &left(0.7), 1.0, &settings()).unwrap();
    for z in [c(0.0, 0.0), c(3.0, 1.0), c(-2.0, -0.5)] {
        for x in [0.0, 0.4, 1.9] {
            let w = frame.cross_wronskian(z, z, x).unwrap();
            assert!((w - c(1.0, 0.0)).norm() < 1e-10, "{z} {x} {w}");
        }
        let f = frame.phi.eval(z, 0.0).unwrap();
        let bc = f[0] * 0.7f64.cos() + f[1] * 0.7f64.sin();
        assert!(bc.norm() < 1e-14);
    }
    let shifted = frame.shifted(0.5).unwrap();
    let z = c(1.0, 0.3);
    let expect = frame.theta.eval(z, 1.2).unwrap() + frame.phi.eval(z, 1.2).unwrap() * c(0.5, 0.0);
    assert!((shifted.theta.eval(z, 1.2).unwrap() - expect).norm() < 1e-13);
}

#[test]
fn radial_frames_are_normalized() {
    for kappa in [0.3, 1.0, 2.5] {
        let frame = radial_frame(&RadialSpec::pure(kappa, f64::INFINITY), 1.0, &settings()).unwrap();
        for z in [c(0.5, 0.0), c(-1.0, 1.0)] {
            for x in [0.05, 1.0, 3.0] {
                let w = frame.cross_wronskian(z, z, x).unwrap();
                assert!((w - c(1.0, 0.0)).norm() < 1e-8, "kappa {kappa} {z} {x} {w}");
            }
        }
    }
}

#[test]
fn entire_in_z() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = random_problem(&mut rng, 1.0, false);
    let frame = fundamental_system(Arc::clone(&e), &left(0.2), 0.5, &settings()).unwrap();
    let z = c(0.7, -0.4);
    let h = 1e-5;
    let fd = (frame.phi.eval(z + h, 0.8).unwrap() - frame.phi.eval(z - h, 0.8).unwrap()) / c(2.0 * h, 0.0);
    let fi = (frame.phi.eval(z + c(0.0, h), 0.8).unwrap() - frame.phi.eval(z - c(0.0, h), 0.8).unwrap()) / c(0.0, 2.0 * h);
    assert!((fd - fi).norm() < 1e-7 * fd.norm(), "Cauchy-Riemann");
    assert!((frame.phi.dz(z, 0.8).unwrap() - fd).norm() < 1e-6 * fd.norm());
}
