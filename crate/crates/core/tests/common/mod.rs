#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use dirac_spectral::boundary::{fundamental_system, radial_frame, BoundaryCondition, Endpoint};
use dirac_spectral::coefficients::{DiracExpression, Interval, MatrixField, RadialSpec};
use dirac_spectral::ode::{PropagationSettings, C64};
use dirac_spectral::weyl::{RightData, Truncation, WeylFunction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn settings() -> PropagationSettings {
    PropagationSettings::default()
}

fn wave(rng: &mut ChaCha8Rng, amp: f64) -> String {
    let a = rng.gen_range(-amp..amp);
    let k = rng.gen_range(0.5..4.0);
    let p = rng.gen_range(0.0..2.0 * PI);
    format!("({a:.17})*sin({k:.17}*x+{p:.17})")
}

/// Smooth symmetric potential with entries of size `amp`.
pub fn random_q(rng: &mut ChaCha8Rng, amp: f64) -> MatrixField {
    let off = format!("{}+{}", wave(rng, amp), wave(rng, amp));
    MatrixField::parse([
        &format!("{}+{}", wave(rng, amp), wave(rng, amp)),
        &off,
        &off,
        &format!("{}+{}", wave(rng, amp), wave(rng, amp)),
    ])
    .unwrap()
}

/// Smooth weight with eigenvalues in `[0.6, 2.4]`.
pub fn random_r(rng: &mut ChaCha8Rng) -> MatrixField {
    let off = wave(rng, 0.4);
    MatrixField::parse([
        &format!("1.5+{}", wave(rng, 0.5)),
        &off,
        &off,
        &format!("1.5+{}", wave(rng, 0.5)),
    ])
    .unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, b: f64, identity_weight: bool) -> Arc<DiracExpression> {
    let q = random_q(rng, 1.0);
    let r = if identity_weight {
        MatrixField::identity()
    } else {
        random_r(rng)
    };
    Arc::new(DiracExpression::new(Interval::new(0.0, b).unwrap(), q, r))
}

pub fn free(b: f64) -> Arc<DiracExpression> {
    Arc::new(DiracExpression::free(Interval::new(0.0, b).unwrap()))
}

pub fn left(alpha: f64) -> BoundaryCondition {
    BoundaryCondition::angle(Endpoint::Left, alpha).unwrap()
}

/// M for a regular problem on a finite interval.
pub fn regular_weyl(expr: Arc<DiracExpression>, alpha: f64, right: RightData) -> WeylFunction {
    let iv = expr.interval;
    let anchor = 0.5 * (iv.a + iv.b);
    let s = settings();
    WeylFunction::new(fundamental_system(expr, &left(alpha), anchor, &s).unwrap(), right, s).unwrap()
}

pub fn free_half_line() -> WeylFunction {
    let s = settings();
    let frame = fundamental_system(free(f64::INFINITY), &left(0.0), 1.0, &s).unwrap();
    WeylFunction::new(
        frame,
        RightData::LimitPoint {
            seed: 2.0,
            condition: Truncation::Radiation,
        },
        s,
    )
    .unwrap()
}

pub fn radial_weyl(kappa: f64) -> WeylFunction {
    let s = settings();
    let frame = radial_frame(&RadialSpec::pure(kappa, f64::INFINITY), 1.0, &s).unwrap();
    WeylFunction::new(
        frame,
        RightData::LimitPoint {
            seed: 4.0,
            condition: Truncation::Radiation,
        },
        s,
    )
    .unwrap()
}

pub fn random_upper(rng: &mut ChaCha8Rng, n: usize, re: f64, im: (f64, f64)) -> Vec<C64> {
    (0..n)
        .map(|_| c(rng.gen_range(-re..re), rng.gen_range(im.0..im.1)))
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub mod props {
    use super::*;
    use dirac_spectral::gauge::TransferGamma;
    use dirac_spectral::ode::{lagrange_residual, propagate, transfer_matrix, wronskian, SolutionState};

    /// Worst `|W(x) − W(0)| / (|f(x)||g(x)|)` over sample points in (0, 1].
    pub fn wronskian_drift(expr: &DiracExpression, z: C64, u: [f64; 2], v: [f64; 2], xs: &[f64]) -> f64 {
        let s = settings();
        let f0 = SolutionState::real(0.0, u[0], u[1]);
        let g0 = SolutionState::real(0.0, v[0], v[1]);
        let w0 = wronskian(&f0.f, &g0.f);
        xs.iter()
            .map(|&x| {
                let f = propagate(expr, z, &f0, x, &s).unwrap().f;
                let g = propagate(expr, z, &g0, x, &s).unwrap().f;
                (wronskian(&f, &g) - w0).norm() / (f.norm() * g.norm())
            })
            .fold(0.0, f64::max)
    }

    /// Lagrange residual on (α, β) relative to `|f||g|` at α.
    pub fn lagrange(expr: &DiracExpression, zeta: C64, z: C64, alpha: f64, beta: f64) -> f64 {
        let s = settings();
        let f = SolutionState::real(0.0, 1.0, 0.3);
        let g = SolutionState::real(0.0, -0.2, 1.0);
        let r = lagrange_residual(expr, zeta, z, &f, &g, alpha, beta, &s).unwrap();
        let fa = propagate(expr, zeta.conj(), &f, alpha, &s).unwrap().f;
        let ga = propagate(expr, z, &g, alpha, &s).unwrap().f;
        r / (fa.norm() * ga.norm())
    }

    /// Worst `|det Γ − 1|` of the potential-killing frame at sample points.
    pub fn det_gamma_deviation(expr: &Arc<DiracExpression>, xs: &[f64]) -> f64 {
        let t = TransferGamma::new(expr.clone(), 0.0, &settings()).unwrap();
        xs.iter()
            .map(|&x| {
                let g = t.at(x);
                (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)] - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `‖T(x₂,x₀) − T(x₂,x₁)T(x₁,x₀)‖ / (‖T(x₂,x₁)‖‖T(x₁,x₀)‖)`.
    pub fn flow_defect(expr: &DiracExpression, z: C64, x0: f64, x1: f64, x2: f64) -> f64 {
        let s = settings();
        let t20 = transfer_matrix(expr, z, x0, x2, &s).unwrap();
        let t21 = transfer_matrix(expr, z, x1, x2, &s).unwrap();
        let t10 = transfer_matrix(expr, z, x0, x1, &s).unwrap();
        (t20 - t21 * t10).norm() / (t21.norm() * t10.norm())
    }
}
