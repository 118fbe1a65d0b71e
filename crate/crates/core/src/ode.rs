//! Solutions of `(τ - z)u = 0`, i.e. `f' = -J(zR - Q)f`, transfer matrices,
//! Wronskians and the Lagrange identity.
//!
//! Steps use a sixth-order Magnus method on three Gauss nodes with an embedded
//! fourth-order estimate. The generator is trace free, so every step is an
//! exact unimodular 2×2 exponential and constant-coefficient segments are
//! integrated exactly.

use std::sync::OnceLock;

use nalgebra::{ComplexField, Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;

use crate::coefficients::{j_matrix, DiracExpression, Mat2};
use crate::error::{Error, Result};
use crate::quadrature::{gl16, gl24};

pub type C64 = Complex64;
pub type CVec2 = Vector2<C64>;
pub type CMat2 = Matrix2<C64>;

/// Scalar type of a propagation: `f64` on the real axis, `Complex64` otherwise.
pub trait Field: ComplexField<RealField = f64> + Copy {
    fn to_complex(self) -> C64;
    /// Back from the complex plane; the real field keeps the real part.
    fn from_complex(c: C64) -> Self;
}

impl Field for f64 {
    #[inline]
    fn to_complex(self) -> C64 {
        C64::new(self, 0.0)
    }
    #[inline]
    fn from_complex(c: C64) -> Self {
        c.re
    }
}

impl Field for C64 {
    #[inline]
    fn to_complex(self) -> C64 {
        self
    }
    #[inline]
    fn from_complex(c: C64) -> Self {
        c
    }
}

/// Something a 2×2 step propagator acts on: a vector or a fundamental matrix.
pub trait StateLike<T: Field>: Clone {
    fn apply(m: &Matrix2<T>, s: &Self) -> Self;
    fn size(&self) -> f64;
    fn scale(&mut self, k: f64);
    fn is_finite(&self) -> bool;
    /// Max-norm of `self - other`.
    fn distance(&self, other: &Self) -> f64;
}

impl<T: Field> StateLike<T> for Vector2<T> {
    #[inline]
    fn apply(m: &Matrix2<T>, s: &Self) -> Self {
        m * s
    }
    #[inline]
    fn size(&self) -> f64 {
        self[0].modulus().max(self[1].modulus())
    }
    fn scale(&mut self, k: f64) {
        *self *= T::from_real(k);
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.modulus().is_finite())
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).size()
    }
}

impl<T: Field> StateLike<T> for Matrix2<T> {
    #[inline]
    fn apply(m: &Matrix2<T>, s: &Self) -> Self {
        m * s
    }
    #[inline]
    fn size(&self) -> f64 {
        self.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
    fn scale(&mut self, k: f64) {
        *self *= T::from_real(k);
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.modulus().is_finite())
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).size()
    }
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagationSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Ratio of the geometric schedule used when approaching singular endpoints.
    pub approach_ratio: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            rtol: 1e-12,
            atol: 1e-14,
            max_step: 0.5,
            max_steps: 2_000_000,
            approach_ratio: 0.5,
        }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.max_step > 0.0) {
            return Err(Error::Config("tolerances and max step must be positive".into()));
        }
        if !(self.approach_ratio > 0.0 && self.approach_ratio < 1.0) {
            return Err(Error::Config("approach ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Same settings with both tolerances multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        PropagationSettings {
            rtol: self.rtol * k,
            atol: self.atol * k,
            ..*self
        }
    }
}

/// A solution value at `x`, optionally with its z-derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionState {
    pub x: f64,
    pub f: CVec2,
    pub df_dz: Option<CVec2>,
}

impl SolutionState {
    pub fn new(x: f64, f: CVec2) -> Self {
        SolutionState { x, f, df_dz: None }
    }

    pub fn real(x: f64, f0: f64, f1: f64) -> Self {
        SolutionState::new(x, CVec2::new(C64::new(f0, 0.0), C64::new(f1, 0.0)))
    }
}

/// A state carried with an exponent: the true value is `s · e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled<S> {
    pub x: f64,
    pub s: S,
    pub log_scale: f64,
}

impl<T: Field> Scaled<Vector2<T>> {
    /// The unscaled value (may overflow to infinity).
    pub fn value(&self) -> Vector2<T> {
        if self.log_scale == 0.0 {
            self.s
        } else {
            self.s * T::from_real(self.log_scale.exp())
        }
    }
}

const RESCALE_ABOVE: f64 = 1e150;
const RESCALE_BY: f64 = 1e-150;

/// The generator `A(x) = -J(zR(x) - Q(x)) = z(-JR) + JQ`.
#[inline]
fn generator<T: Field>(expr: &DiracExpression, z: T, x: f64) -> Matrix2<T> {
    let j = j_matrix();
    let jr: Mat2 = -(j * expr.r_at(x));
    let jq: Mat2 = j * expr.q_at(x);
    Matrix2::new(
        z * T::from_real(jr[(0, 0)]) + T::from_real(jq[(0, 0)]),
        z * T::from_real(jr[(0, 1)]) + T::from_real(jq[(0, 1)]),
        z * T::from_real(jr[(1, 0)]) + T::from_real(jq[(1, 0)]),
        z * T::from_real(jr[(1, 1)]) + T::from_real(jq[(1, 1)]),
    )
}

#[inline]
fn commutator<T: Field>(a: &Matrix2<T>, b: &Matrix2<T>) -> Matrix2<T> {
    a * b - b * a
}

/// `exp(Ω)` for a 2×2 matrix, exact up to rounding after removing the trace:
/// `exp(Ω) = cosh(s) I + sinh(s)/s Ω` with `s² = -det Ω`.
pub fn expm_traceless<T: Field>(omega: &Matrix2<T>) -> (Matrix2<T>, f64) {
    let half_tr = (omega[(0, 0)] + omega[(1, 1)]) * T::from_real(0.5);
    let mut w = *omega;
    w[(0, 0)] -= half_tr;
    w[(1, 1)] -= half_tr;
    let s2 = (-(w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)])).to_complex();
    let (c, sh) = if s2.norm() < 1e-6 {
        let c = 1.0 + s2 * (0.5 + s2 * (1.0 / 24.0 + s2 / 720.0));
        let sh = 1.0 + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 / 5040.0));
        (c, sh)
    } else {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    };
    let growth = s2.sqrt().re.abs();
    let (c, sh) = (T::from_complex(c), T::from_complex(sh));
    let mut e = w * sh;
    e[(0, 0)] += c;
    e[(1, 1)] += c;
    if half_tr.modulus() != 0.0 {
        e *= half_tr.exp();
    }
    (e, growth)
}

fn gauss3() -> &'static [f64; 2] {
    static C: OnceLock<[f64; 2]> = OnceLock::new();
    C.get_or_init(|| [0.5 - 15f64.sqrt() / 10.0, 0.5 + 15f64.sqrt() / 10.0])
}

fn gauss2() -> &'static [f64; 2] {
    static C: OnceLock<[f64; 2]> = OnceLock::new();
    C.get_or_init(|| [0.5 - 3f64.sqrt() / 6.0, 0.5 + 3f64.sqrt() / 6.0])
}

/// One Magnus step from x to x + h: the sixth-order propagator on three Gauss
/// nodes, an independent fourth-order propagator on two Gauss nodes, and the
/// largest real growth exponent of the step.
fn magnus_step<T: Field>(expr: &DiracExpression, z: T, x: f64, h: f64) -> (Matrix2<T>, Matrix2<T>, f64) {
    let c = gauss3();
    let a1 = generator(expr, z, x + c[0] * h);
    let a2 = generator(expr, z, x + 0.5 * h);
    let a3 = generator(expr, z, x + c[1] * h);
    let th = T::from_real(h);
    let alpha1 = a2 * th;
    let alpha2 = (a3 - a1) * T::from_real(15f64.sqrt() * h / 3.0);
    let alpha3 = (a3 - a2 * T::from_real(2.0) + a1) * T::from_real(10.0 * h / 3.0);
    let c1 = commutator(&alpha1, &alpha2);
    let c2 = commutator(&alpha1, &(alpha3 * T::from_real(2.0) + c1)) * T::from_real(-1.0 / 60.0);
    let base = alpha1 + alpha3 * T::from_real(1.0 / 12.0);
    let omega6 = base
        + commutator(
            &(alpha1 * T::from_real(-20.0) - alpha3 + c1),
            &(alpha2 + c2),
        ) * T::from_real(1.0 / 240.0);
    let g = gauss2();
    let b1 = generator(expr, z, x + g[0] * h);
    let b2 = generator(expr, z, x + g[1] * h);
    let omega4 = (b1 + b2) * T::from_real(0.5 * h) + commutator(&b2, &b1) * T::from_real(3f64.sqrt() / 12.0 * h * h);
    let (e6, g6) = expm_traceless(&omega6);
    let (e4, _) = expm_traceless(&omega4);
    (e6, e4, g6)
}

/// Adaptive stepper that keeps its suggested step across several targets.
pub(crate) struct Stepper<'a, T: Field> {
    expr: &'a DiracExpression,
    z: T,
    settings: PropagationSettings,
    h: f64,
    steps: usize,
}

impl<'a, T: Field> Stepper<'a, T> {
    pub(crate) fn new(expr: &'a DiracExpression, z: T, settings: &PropagationSettings) -> Self {
        Stepper {
            expr,
            z,
            settings: *settings,
            h: settings.max_step,
            steps: 0,
        }
    }

    /// Advances `state` to `to`, in either direction.
    pub(crate) fn advance<S: StateLike<T>>(&mut self, state: &mut Scaled<S>, to: f64) -> Result<()> {
        let mut x = state.x;
        if x == to {
            return Ok(());
        }
        let dir = if to > x { 1.0 } else { -1.0 };
        let tiny = 4.0 * f64::EPSILON * x.abs().max(to.abs());
        loop {
            let remaining = (to - x).abs();
            if remaining <= tiny {
                break;
            }
            let mut h = self.h.min(self.settings.max_step).min(remaining);
            let last = h >= remaining;
            loop {
                self.steps += 1;
                if self.steps > self.settings.max_steps {
                    return Err(Error::TooManySteps { x });
                }
                let underflow = (1e-13 * x.abs()).max(1e-290);
                if h < underflow && !last {
                    return Err(Error::StepUnderflow { x });
                }
                let (e6, e4, growth) = magnus_step(self.expr, self.z, x, dir * h);
                if growth > 40.0 {
                    h *= 0.9 * 40.0 / growth;
                    continue;
                }
                let next = S::apply(&e6, &state.s);
                let low = S::apply(&e4, &state.s);
                if !next.is_finite() {
                    if h < underflow {
                        return Err(Error::NotFinite { x });
                    }
                    h *= 0.25;
                    continue;
                }
                let err_abs = next.distance(&low);
                let scale = self.settings.atol + self.settings.rtol * next.size().max(state.s.size());
                let err = err_abs / scale;
                if err <= 1.0 || h < underflow {
                    let step_done = if h >= remaining { to } else { x + dir * h };
                    state.s = next;
                    x = step_done;
                    state.x = x;
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // do not let a short final step shrink the suggestion
                    if !(h >= remaining && factor >= 1.0) || h >= self.h {
                        self.h = (h * factor).min(self.settings.max_step);
                    }
                    break;
                }
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
            }
            let size = state.s.size();
            if size > RESCALE_ABOVE {
                state.s.scale(RESCALE_BY);
                state.log_scale -= RESCALE_BY.ln();
            } else if size < 1.0 / RESCALE_ABOVE && size > 0.0 && state.log_scale > 0.0 {
                state.s.scale(1.0 / RESCALE_BY);
                state.log_scale += RESCALE_BY.ln();
            }
        }
        state.x = to;
        Ok(())
    }
}

/// Propagates an arbitrary state from `from.x` to `to`.
pub fn propagate_scaled<T: Field, S: StateLike<T>>(
    expr: &DiracExpression,
    z: T,
    from: Scaled<S>,
    to: f64,
    settings: &PropagationSettings,
) -> Result<Scaled<S>> {
    check_segment(expr, from.x, to)?;
    let mut state = from;
    Stepper::new(expr, z, settings).advance(&mut state, to)?;
    Ok(state)
}

fn check_segment(expr: &DiracExpression, x0: f64, x1: f64) -> Result<()> {
    let iv = &expr.interval;
    for x in [x0, x1] {
        if !x.is_finite() || !iv.contains_closed(x) {
            return Err(Error::Config(format!(
                "point {x} is outside the interval ({}, {})",
                iv.a, iv.b
            )));
        }
    }
    Ok(())
}

/// Solves `(τ - z)u = 0` from `from` to `to_x`.
pub fn propagate(
    expr: &DiracExpression,
    z: C64,
    from: &SolutionState,
    to_x: f64,
    settings: &PropagationSettings,
) -> Result<SolutionState> {
    let start = Scaled {
        x: from.x,
        s: from.f,
        log_scale: 0.0,
    };
    let end = propagate_scaled(expr, z, start, to_x, settings)?;
    let f = end.value();
    if !f.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Overflow { x: to_x });
    }
    let df_dz = match from.df_dz {
        None => None,
        Some(_) => Some(dz_of(|w| {
            let s = propagate_scaled(
                expr,
                w,
                Scaled {
                    x: from.x,
                    s: from.f,
                    log_scale: 0.0,
                },
                to_x,
                settings,
            )?;
            Ok(s.value())
        }, z, (to_x - from.x).abs())?),
    };
    Ok(SolutionState { x: to_x, f, df_dz })
}

/// Real-axis propagation of a real vector.
pub fn propagate_real(
    expr: &DiracExpression,
    lambda: f64,
    x0: f64,
    f0: Vector2<f64>,
    to_x: f64,
    settings: &PropagationSettings,
) -> Result<Scaled<Vector2<f64>>> {
    propagate_scaled(
        expr,
        lambda,
        Scaled {
            x: x0,
            s: f0,
            log_scale: 0.0,
        },
        to_x,
        settings,
    )
}

/// z-derivative of an entire vector function by the trapezoid rule on a circle.
pub fn dz_of<F>(f: F, z: C64, span: f64) -> Result<CVec2>
where
    F: Fn(C64) -> Result<CVec2>,
{
    const N: usize = 16;
    let r = 0.5 / (1.0 + span);
    let mut acc = CVec2::zeros();
    for k in 0..N {
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / N as f64);
        acc += f(z + w * r)? * (w.conj() / r);
    }
    Ok(acc / C64::new(N as f64, 0.0))
}

/// Transfer matrix mapping `f(x0)` to `f(x1)`.
pub fn transfer_matrix(
    expr: &DiracExpression,
    z: C64,
    x0: f64,
    x1: f64,
    settings: &PropagationSettings,
) -> Result<CMat2> {
    let end = propagate_scaled(
        expr,
        z,
        Scaled {
            x: x0,
            s: CMat2::identity(),
            log_scale: 0.0,
        },
        x1,
        settings,
    )?;
    let m = end.s * C64::new(end.log_scale.exp(), 0.0);
    if !m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Overflow { x: x1 });
    }
    Ok(m)
}

/// Real transfer matrix at real λ.
pub fn transfer_matrix_real(
    expr: &DiracExpression,
    lambda: f64,
    x0: f64,
    x1: f64,
    settings: &PropagationSettings,
) -> Result<Mat2> {
    let end = propagate_scaled(
        expr,
        lambda,
        Scaled {
            x: x0,
            s: Mat2::identity(),
            log_scale: 0.0,
        },
        x1,
        settings,
    )?;
    Ok(end.s * end.log_scale.exp())
}

/// The bilinear Wronskian `f₁g₂ - f₂g₁` (no conjugation).
#[inline]
pub fn wronskian<T: Field>(f: &Vector2<T>, g: &Vector2<T>) -> T {
    f[0] * g[1] - f[1] * g[0]
}

/// Tolerances for integrals along solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_depth: 40,
        }
    }
}

/// A solution entering an integral: spectral parameter and value at the lower limit.
#[derive(Debug, Clone, Copy)]
pub struct Source {
    pub z: C64,
    pub f: CVec2,
}

struct MergedNodes {
    // sorted nodes on [-1, 1] with (rule, index) tags
    t: Vec<f64>,
    tag: Vec<(bool, usize)>,
}

fn merged() -> &'static MergedNodes {
    static M: OnceLock<MergedNodes> = OnceLock::new();
    M.get_or_init(|| {
        let mut all: Vec<(f64, bool, usize)> = Vec::new();
        for (i, t) in gl16().nodes.iter().enumerate() {
            all.push((*t, false, i));
        }
        for (i, t) in gl24().nodes.iter().enumerate() {
            all.push((*t, true, i));
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        MergedNodes {
            t: all.iter().map(|v| v.0).collect(),
            tag: all.iter().map(|v| (v.1, v.2)).collect(),
        }
    })
}

/// Integrates `g(x, [f_1(x), ..., f_m(x)])` over `[lo, hi]` where each `f_k`
/// solves the equation at its own `z_k` with value `sources[k].f` at `lo`.
///
/// Panels compare the 16- and 24-point Gauss rules; the solutions are
/// propagated forward through the nodes and rejected panels are bisected.
/// Returns the integral and the solution values at `hi`.
pub fn integrate_along<G>(
    expr: &DiracExpression,
    sources: &[Source],
    lo: f64,
    hi: f64,
    g: G,
    quad: &QuadSettings,
    settings: &PropagationSettings,
) -> Result<(C64, Vec<CVec2>)>
where
    G: Fn(f64, &[CVec2]) -> C64,
{
    check_segment(expr, lo, hi)?;
    let m = sources.len();
    let mut current: Vec<Scaled<CVec2>> = sources
        .iter()
        .map(|s| Scaled {
            x: lo,
            s: s.f,
            log_scale: 0.0,
        })
        .collect();
    if hi <= lo {
        return Ok((C64::new(0.0, 0.0), sources.iter().map(|s| s.f).collect()));
    }
    let mut steppers: Vec<Stepper<C64>> = sources.iter().map(|s| Stepper::new(expr, s.z, settings)).collect();
    let zmax = sources.iter().map(|s| s.z.norm()).fold(0.0, f64::max);
    let rscale = expr.r_at(0.5 * (lo + hi)).norm().max(1e-3);
    let total = hi - lo;
    let panel = (12.0 / (1.0 + zmax * rscale)).min(total).min(4.0);
    let n0 = (total / panel).ceil().max(1.0) as usize;
    let nodes = merged();
    let (r16, r24) = (gl16(), gl24());
    let mut sum = C64::new(0.0, 0.0);
    let mut worst: f64 = 0.0;
    let mut values = vec![CVec2::zeros(); m];
    let mut row16 = vec![C64::new(0.0, 0.0); 16];
    let mut row24 = vec![C64::new(0.0, 0.0); 24];
    for k in 0..n0 {
        let p0 = lo + total * k as f64 / n0 as f64;
        let p1 = if k + 1 == n0 { hi } else { lo + total * (k + 1) as f64 / n0 as f64 };
        let mut stack = vec![(p0, p1, 0usize)];
        while let Some((u0, u1, depth)) = stack.pop() {
            let half = 0.5 * (u1 - u0);
            let mid = 0.5 * (u0 + u1);
            let mut trial: Vec<Scaled<CVec2>> = current.clone();
            let mut abs16 = 0.0;
            let mut abs24 = 0.0;
            for (t, &(is24, idx)) in nodes.t.iter().zip(&nodes.tag) {
                let x = mid + half * t;
                for (j, st) in trial.iter_mut().enumerate() {
                    steppers[j].advance(st, x)?;
                    values[j] = st.value();
                }
                let v = g(x, &values);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::NotFinite { x });
                }
                if is24 {
                    row24[idx] = v;
                    abs24 += r24.weights[idx] * v.norm();
                } else {
                    row16[idx] = v;
                    abs16 += r16.weights[idx] * v.norm();
                }
            }
            let _ = abs16;
            let s16: C64 = row16.iter().zip(&r16.weights).map(|(v, w)| v * *w).sum::<C64>() * half;
            let s24: C64 = row24.iter().zip(&r24.weights).map(|(v, w)| v * *w).sum::<C64>() * half;
            let diff = (s16 - s24).norm();
            let allowed = (quad.abs_tol * (u1 - u0) / total).max(quad.rel_tol * abs24 * half);
            if diff <= allowed || depth >= quad.max_depth {
                if diff > allowed {
                    worst = worst.max(diff);
                }
                for (j, st) in trial.iter_mut().enumerate() {
                    steppers[j].advance(st, u1)?;
                }
                current = trial;
                sum += s24;
            } else {
                let c = 0.5 * (u0 + u1);
                stack.push((c, u1, depth + 1));
                stack.push((u0, c, depth + 1));
            }
        }
    }
    if worst > 0.0 && worst > quad.abs_tol.max(quad.rel_tol * sum.norm()) * 1e3 {
        return Err(Error::Quadrature(crate::quadrature::QuadratureError::NoConvergence {
            a: lo,
            b: hi,
            estimate: worst,
        }));
    }
    Ok((sum, current.iter().map(|s| s.value()).collect()))
}

/// `|W_β(f,g) - W_α(f,g) - (ζ* - z)∫_α^β fᵀRg dx|` where `f` solves the
/// equation at `ζ*` and `g` at `z`, both given by their values at `from`.
#[allow(clippy::too_many_arguments)]
pub fn lagrange_residual(
    expr: &DiracExpression,
    zeta: C64,
    z: C64,
    f: &SolutionState,
    g: &SolutionState,
    alpha: f64,
    beta: f64,
    settings: &PropagationSettings,
) -> Result<f64> {
    let w = zeta.conj();
    let fa = propagate(expr, w, f, alpha, settings)?;
    let ga = propagate(expr, z, g, alpha, settings)?;
    let (lo, hi, sign) = if alpha <= beta { (alpha, beta, 1.0) } else { (beta, alpha, -1.0) };
    let (fl, gl) = if alpha <= beta {
        (fa.f, ga.f)
    } else {
        (
            propagate(expr, w, &fa, beta, settings)?.f,
            propagate(expr, z, &ga, beta, settings)?.f,
        )
    };
    let sources = [Source { z: w, f: fl }, Source { z, f: gl }];
    let (integral, ends) = integrate_along(
        expr,
        &sources,
        lo,
        hi,
        |x, v| {
            let r = expr.r_at(x);
            bilinear(&v[0], &r, &v[1])
        },
        &QuadSettings::default(),
        settings,
    )?;
    let w_lo = wronskian(&fl, &gl);
    let w_hi = wronskian(&ends[0], &ends[1]);
    let lhs = (w_hi - w_lo) * sign;
    Ok((lhs - (w - z) * integral * sign).norm())
}

/// `fᵀ R g` without conjugation.
#[inline]
pub fn bilinear(f: &CVec2, r: &Mat2, g: &CVec2) -> C64 {
    f[0] * (g[0] * r[(0, 0)] + g[1] * r[(0, 1)]) + f[1] * (g[0] * r[(1, 0)] + g[1] * r[(1, 1)])
}

/// `f*ᵀ R g`.
#[inline]
pub fn sesquilinear(f: &CVec2, r: &Mat2, g: &CVec2) -> C64 {
    bilinear(&f.map(|v| v.conj()), r, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_radial, Interval, MatrixField, RadialSpec};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn free() -> DiracExpression {
        DiracExpression::free(Interval::new(0.0, 10.0).unwrap())
    }

    #[test]
    fn free_solution_closed_form() {
        let e = free();
        let z = c(1.3, 0.4);
        let s = propagate(&e, z, &SolutionState::real(0.0, 0.0, 1.0), 3.0, &Default::default()).unwrap();
        let zx = z * 3.0;
        assert!((s.f[0] - zx.sin()).norm() < 1e-12);
        assert!((s.f[1] - zx.cos()).norm() < 1e-12);
    }

    #[test]
    fn zero_z_zero_q_is_constant() {
        let r = MatrixField::parse(["2+sin(x)", "0.3", "0.3", "1"]).unwrap();
        let e = DiracExpression::new(Interval::new(0.0, 2.0).unwrap(), MatrixField::zero(), r);
        let s = propagate(&e, c(0.0, 0.0), &SolutionState::real(0.1, 0.7, -0.2), 1.9, &Default::default()).unwrap();
        assert!((s.f[0] - 0.7).norm() < 1e-15);
        assert!((s.f[1] + 0.2).norm() < 1e-15);
    }

    #[test]
    fn radial_zero_energy_power_law() {
        let e = make_radial(&RadialSpec::pure(1.0, f64::INFINITY)).unwrap();
        let s = propagate(&e, c(0.0, 0.0), &SolutionState::real(0.01, 0.0, 0.01), 2.5, &Default::default()).unwrap();
        assert!(s.f[0].norm() < 1e-14);
        assert!((s.f[1] - 2.5).norm() < 1e-10, "{}", s.f[1]);
    }

    #[test]
    fn transfer_free_is_rotation() {
        let e = free();
        let z = c(0.7, -0.3);
        let t = transfer_matrix(&e, z, 0.0, 2.0, &Default::default()).unwrap();
        let zx = z * 2.0;
        let expected = CMat2::new(zx.cos(), zx.sin(), -zx.sin(), zx.cos());
        assert!((t - expected).norm() < 1e-12);
        let id = transfer_matrix(&e, z, 1.0, 1.0, &Default::default()).unwrap();
        assert_eq!(id, CMat2::identity());
    }

    #[test]
    fn sixth_order_convergence() {
        // fixed steps on a smooth problem: error ratio ~ 2^6 when halving h
        let q = MatrixField::parse(["sin(x)", "cos(2*x)", "cos(2*x)", "x"]).unwrap();
        let r = MatrixField::parse(["1+x^2", "0.2", "0.2", "exp(x)"]).unwrap();
        let e = DiracExpression::new(Interval::new(0.0, 2.0).unwrap(), q, r);
        let z = 2.0;
        let run = |n: usize| {
            let h = 2.0 / n as f64;
            let mut m = Mat2::identity();
            for k in 0..n {
                let (e6, _, _) = magnus_step(&e, z, k as f64 * h, h);
                m = e6 * m;
            }
            m
        };
        let exact = run(2048);
        let e1 = (run(16) - exact).norm();
        let e2 = (run(32) - exact).norm();
        assert!(e1 / e2 > 40.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn wronskian_examples() {
        let f = CVec2::new(c(1.0, 0.0), c(0.0, 0.0));
        let g = CVec2::new(c(0.0, 0.0), c(1.0, 0.0));
        assert_eq!(wronskian(&f, &g), c(1.0, 0.0));
        assert_eq!(wronskian(&f, &f), c(0.0, 0.0));
        let z = c(0.3, 0.9);
        for x in [0.0, 0.5, 2.0] {
            let zx = z * x;
            let f = CVec2::new(zx.sin(), zx.cos());
            let g = CVec2::new(zx.cos(), -zx.sin());
            assert!((wronskian(&f, &g) + 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn lagrange_free_imaginary() {
        let e = free();
        let i = c(0.0, 1.0);
        let phi = SolutionState::real(0.0, 0.0, 1.0);
        let r = lagrange_residual(&e, i, i, &phi, &phi, 0.0, 2.0, &Default::default()).unwrap();
        assert!(r < 1e-9, "{r}");
        let r = lagrange_residual(&e, c(0.5, 0.0), c(0.5, 0.0), &phi, &phi, 2.0, 0.3, &Default::default()).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn integrate_along_free_kernel() {
        // ∫_0^c |Φ(iy)|² = sinh(2yc)/(2y)
        let e = free();
        let y = 1.5;
        let cc = 1.2;
        let z = c(0.0, y);
        let src = [Source {
            z,
            f: CVec2::new(c(0.0, 0.0), c(1.0, 0.0)),
        }];
        let (v, _) = integrate_along(
            &e,
            &src,
            0.0,
            cc,
            |_, f| C64::from(f[0].norm_squared()),
            &QuadSettings::default(),
            &Default::default(),
        )
        .unwrap();
        let exact = (2.0 * y * cc).sinh() / (2.0 * y);
        assert!((v.re - exact).abs() < 1e-11 * exact, "{v} {exact}");
    }

    #[test]
    fn large_growth_is_rescaled() {
        let e = DiracExpression::free(Interval::new(0.0, f64::INFINITY).unwrap());
        let s = propagate_scaled(
            &e,
            c(0.0, 50.0),
            Scaled {
                x: 0.0,
                s: CVec2::new(c(0.0, 0.0), c(1.0, 0.0)),
                log_scale: 0.0,
            },
            20.0,
            &Default::default(),
        )
        .unwrap();
        // |Φ| ~ e^{1000}/2
        let log_mag = s.s.norm().ln() + s.log_scale;
        assert!((log_mag - (1000.0 - 2f64.ln() + 0.5 * 2f64.ln())).abs() < 1e-8, "{log_mag}");
    }

    #[test]
    fn dz_matches_closed_form() {
        let e = free();
        let z = c(0.4, 0.2);
        let d = dz_of(
            |w| Ok(propagate(&e, w, &SolutionState::real(0.0, 0.0, 1.0), 1.5, &Default::default())?.f),
            z,
            1.5,
        )
        .unwrap();
        let x = 1.5;
        assert!((d[0] - (z * x).cos() * x).norm() < 1e-10);
        assert!((d[1] + (z * x).sin() * x).norm() < 1e-10);
    }
}
