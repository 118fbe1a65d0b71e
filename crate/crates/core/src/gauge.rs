//! Liouville transformations `f(x) = Γ(x) f̃(η(x))`, the normalizations of
//! weight, trace, potential and determinant, the rotation gauge, and an
//! invariance harness comparing spectral data before and after.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{companion_data, frame_from_data, FrameMap, FundamentalSystem, LeftData};
use crate::coefficients::{
    j_matrix, validate_hypotheses, DiracExpression, Interval, Mat2, MatrixField, SamplePlan, ScalarField,
};
use crate::debranges::kernel_integral;
use crate::error::{Error, Result};
use crate::ode::{expm_traceless, propagate_scaled, PropagationSettings, QuadSettings, Scaled, C64};
use crate::quadrature::{adaptive, gauss_legendre};
use crate::weyl::{eigenvalues_of, set_distance, RightData, SpectrumSettings, WeylFunction};

fn det(m: &Mat2) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

fn adj(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

fn inv(m: &Mat2) -> Mat2 {
    adj(m) / det(m)
}

fn rotation(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Square root of a symmetric positive-definite matrix with unit determinant.
pub fn sqrt_unimodular_spd(p: &Mat2) -> Mat2 {
    (p + Mat2::identity()) / (p.trace() + 2.0).sqrt()
}

fn legendre_values(t: f64) -> [f64; 8] {
    let mut p = [0.0; 8];
    p[0] = 1.0;
    p[1] = t;
    for k in 1..7 {
        p[k + 1] = ((2 * k + 1) as f64 * t * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

/// `x ↦ offset + ∫_anchor^x g`, tabulated on a uniform grid of a finite region.
pub struct Cumulative {
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    domain: Interval,
    anchor: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    rates: Vec<f64>,
    // Legendre coefficients of g on each panel, in the panel's [-1, 1] variable
    legendre: Vec<[f64; 8]>,
    increasing: bool,
    // panels where the Hermite inverse is accurate to rounding at the midpoint
    trusted: Vec<bool>,
}

impl fmt::Debug for Cumulative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cumulative(anchor {}, {} nodes)", self.anchor, self.nodes.len())
    }
}

impl Cumulative {
    pub fn new<G>(g: G, domain: Interval, anchor: f64, offset: f64, n: usize) -> Result<Cumulative>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let lo = if domain.left_finite() { domain.a } else { anchor - 16.0 };
        let hi = if domain.right_finite() { domain.b } else { anchor + 16.0 };
        let lo = lo.min(anchor);
        let hi = hi.max(anchor);
        let n = n.max(2);
        let nodes: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        let rule = gauss_legendre(8);
        let legendre: Vec<[f64; 8]> = nodes
            .windows(2)
            .map(|w| {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                let mut c = [0.0; 8];
                for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    let gv = g(mid + half * t);
                    let p = legendre_values(t);
                    for k in 0..8 {
                        c[k] += (2 * k + 1) as f64 * 0.5 * wt * gv * p[k];
                    }
                }
                c
            })
            .collect();
        if let Some(k) = legendre.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::NotFinite { x: nodes[k] });
        }
        let h = (hi - lo) / n as f64;
        let mut values = vec![0.0; n + 1];
        for k in 0..n {
            values[k + 1] = values[k] + h * legendre[k][0];
        }
        let g: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(g);
        let at_anchor = {
            let k = Self::panel_of(&nodes, anchor);
            values[k] + Self::partial(&legendre[k], nodes[k], nodes[k + 1], anchor)
        };
        for v in &mut values {
            *v += offset - at_anchor;
        }
        let rates = nodes.iter().map(|&x| g(x)).collect();
        let mut c = Cumulative {
            g,
            domain,
            anchor,
            nodes,
            values,
            rates,
            legendre,
            increasing: false,
            trusted: Vec::new(),
        };
        c.increasing = c.rates.iter().all(|r| *r > 0.0);
        c.trusted = (0..n)
            .map(|k| {
                if !c.increasing {
                    return false;
                }
                let y = 0.5 * (c.values[k] + c.values[k + 1]);
                let guess = c.hermite(k, y);
                let x = solve_increasing(|x| (c.value(x), c.derivative(x)), y, &c.domain, guess);
                (x - guess).abs() <= 2.0 * f64::EPSILON * x.abs().max(c.nodes[n] - c.nodes[0])
            })
            .collect();
        Ok(c)
    }

    // cubic Hermite in y with slopes 1/g
    fn hermite(&self, k: usize, y: f64) -> f64 {
        let dy = self.values[k + 1] - self.values[k];
        let t = (y - self.values[k]) / dy;
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let (m0, m1) = (dy / self.rates[k], dy / self.rates[k + 1]);
        let (t2, t3) = (t * t, t * t * t);
        let x = (2.0 * t3 - 3.0 * t2 + 1.0) * x0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * x1 + (t3 - t2) * m1;
        if x.is_finite() {
            x.clamp(x0, x1)
        } else {
            x0 + t * (x1 - x0)
        }
    }

    fn panel_of(nodes: &[f64], x: f64) -> usize {
        let n = nodes.len() - 1;
        let h = (nodes[n] - nodes[0]) / n as f64;
        (((x - nodes[0]) / h).floor().max(0.0) as usize).min(n - 1)
    }

    // ∫ from x0 to x of the panel expansion
    fn partial(c: &[f64; 8], x0: f64, x1: f64, x: f64) -> f64 {
        let half = 0.5 * (x1 - x0);
        let s = (x - x0) / half - 1.0;
        let p = legendre_values(s);
        let p8 = (15.0 * s * p[7] - 7.0 * p[6]) / 8.0;
        let mut acc = c[0] * (s + 1.0);
        for k in 1..8 {
            let next = if k == 7 { p8 } else { p[k + 1] };
            acc += c[k] * (next - p[k - 1]) / (2 * k + 1) as f64;
        }
        half * acc
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.nodes.len() - 1;
        if x < self.nodes[0] {
            return self.values[0] - adaptive(&*self.g, x, self.nodes[0], 1e-15, 1e-14).map(|r| r.value).unwrap_or(f64::NAN);
        }
        if x > self.nodes[n] {
            return self.values[n] + adaptive(&*self.g, self.nodes[n], x, 1e-15, 1e-14).map(|r| r.value).unwrap_or(f64::NAN);
        }
        let k = Self::panel_of(&self.nodes, x);
        self.values[k] + Self::partial(&self.legendre[k], self.nodes[k], self.nodes[k + 1], x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    /// Inverse of an increasing cumulative map; NaN when g is not positive.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.nodes.len() - 1;
        if !self.increasing {
            return f64::NAN;
        }
        let guess = if y <= self.values[0] {
            self.nodes[0]
        } else if y >= self.values[n] {
            self.nodes[n]
        } else {
            let k = self.values.partition_point(|v| *v <= y).saturating_sub(1).min(n - 1);
            let x = self.hermite(k, y);
            if self.trusted[k] {
                return x;
            }
            x
        };
        solve_increasing(|x| (self.value(x), self.derivative(x)), y, &self.domain, guess)
    }
}

/// Safeguarded Newton for an increasing map on an interval.
fn solve_increasing<F: Fn(f64) -> (f64, f64)>(f: F, y: f64, domain: &Interval, guess: f64) -> f64 {
    let mut x = guess;
    for _ in 0..4 {
        let (v, d) = f(x);
        let r = v - y;
        if r == 0.0 {
            return x;
        }
        let next = x - r / d;
        if !(next.is_finite() && domain.contains(next)) {
            break;
        }
        // quadratic convergence: a small correction leaves an error of its square
        if (next - x).abs() <= 1e-8 * x.abs().max(1e-3) {
            return next;
        }
        x = next;
    }
    bracketed(f, y, domain, guess)
}

fn bracketed<F: Fn(f64) -> (f64, f64)>(f: F, y: f64, domain: &Interval, guess: f64) -> f64 {
    let inside = |x: f64| domain.contains(x);
    let mut lo = guess;
    let mut hi = guess;
    let mut step = 1e-3 * guess.abs().max(1.0);
    while f(lo).0 > y {
        let next = lo - step;
        lo = if inside(next) { next } else { 0.5 * (lo + domain.a) };
        step *= 2.0;
        if step > 1e300 || (domain.left_finite() && lo - domain.a < 1e-300) {
            break;
        }
    }
    step = 1e-3 * guess.abs().max(1.0);
    while f(hi).0 < y {
        let next = hi + step;
        hi = if inside(next) { next } else { 0.5 * (hi + domain.b) };
        step *= 2.0;
        if step > 1e300 || (domain.right_finite() && domain.b - hi < 1e-300) {
            break;
        }
    }
    let mut x = guess.clamp(lo, hi);
    for _ in 0..100 {
        let (v, d) = f(x);
        let r = v - y;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / d;
        if !(next > lo && next < hi) || !d.is_finite() || d <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// The change of variables η.
#[derive(Clone)]
pub enum Eta {
    Identity,
    /// `η(x) = scale·x + shift`.
    Affine { scale: f64, shift: f64 },
    Cumulative(Arc<Cumulative>),
    Expr { f: ScalarField, df: ScalarField },
    /// `second ∘ first`; `mid` is the domain of `second`.
    Composite { first: Box<Eta>, second: Box<Eta>, mid: Interval },
    /// Inverse of `base` defined on `base_domain`.
    Inverse { base: Box<Eta>, base_domain: Interval },
}

impl fmt::Debug for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

impl Eta {
    pub fn describe(&self) -> String {
        match self {
            Eta::Identity => "identity".into(),
            Eta::Affine { scale, shift } => format!("affine:{scale},{shift}"),
            Eta::Cumulative(c) => format!("cumulative(anchor {})", c.anchor),
            Eta::Expr { f, .. } => f.describe(),
            Eta::Composite { first, second, .. } => format!("({}) after ({})", second.describe(), first.describe()),
            Eta::Inverse { base, .. } => format!("inverse({})", base.describe()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Eta::Identity => x,
            Eta::Affine { scale, shift } => scale * x + shift,
            Eta::Cumulative(c) => c.value(x),
            Eta::Expr { f, .. } => f.eval(x),
            Eta::Composite { first, second, .. } => second.value(first.value(x)),
            Eta::Inverse { base, base_domain } => base.inverse(x, base_domain),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Eta::Identity => 1.0,
            Eta::Affine { scale, .. } => *scale,
            Eta::Cumulative(c) => c.derivative(x),
            Eta::Expr { df, .. } => df.eval(x),
            Eta::Composite { first, second, .. } => second.derivative(first.value(x)) * first.derivative(x),
            Eta::Inverse { base, base_domain } => 1.0 / base.derivative(base.inverse(x, base_domain)),
        }
    }

    /// `η⁻¹(y)` for η defined on `domain`.
    pub fn inverse(&self, y: f64, domain: &Interval) -> f64 {
        match self {
            Eta::Identity => y,
            Eta::Affine { scale, shift } => (y - shift) / scale,
            Eta::Cumulative(c) => c.inverse(y),
            Eta::Expr { .. } => {
                let guess = domain_guess(domain, y);
                solve_increasing(|x| (self.value(x), self.derivative(x)), y, domain, guess)
            }
            Eta::Composite { first, second, mid } => first.inverse(second.inverse(y, mid), domain),
            Eta::Inverse { base, .. } => base.value(y),
        }
    }

    /// Image of an interval; infinite endpoints stay infinite.
    pub fn image(&self, domain: &Interval) -> Result<Interval> {
        let a = if domain.left_finite() { self.value(domain.a) } else { f64::NEG_INFINITY };
        let b = if domain.right_finite() { self.value(domain.b) } else { f64::INFINITY };
        if !(a.is_finite() || a == f64::NEG_INFINITY) || !(b.is_finite() || b == f64::INFINITY) {
            return Err(Error::Transform {
                x: domain.a,
                reason: "η is not finite at a finite endpoint".into(),
            });
        }
        Interval::new(a, b)
    }
}

fn domain_guess(domain: &Interval, y: f64) -> f64 {
    if domain.contains(y) {
        y
    } else {
        domain.interior_point()
    }
}

/// A rotation angle field φ with its derivative.
#[derive(Clone, Debug)]
pub enum AngleField {
    Constant(f64),
    /// `φ(x) = slope·(x − anchor)`.
    Linear { slope: f64, anchor: f64 },
    Expr { f: ScalarField, df: ScalarField },
    Cumulative(Arc<Cumulative>),
}

impl AngleField {
    /// Parses an expression for φ; the derivative is taken symbolically.
    pub fn parse(text: &str) -> Result<AngleField> {
        let f = ScalarField::parse(text)?;
        if let Some(c) = f.is_constant().then(|| f.eval(0.0)) {
            return Ok(AngleField::Constant(c));
        }
        let df = f
            .derivative()
            .ok_or_else(|| Error::Config(format!("no derivative available for φ = {text}")))?;
        Ok(AngleField::Expr { f, df })
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            AngleField::Constant(c) => *c,
            AngleField::Linear { slope, anchor } => slope * (x - anchor),
            AngleField::Expr { f, .. } => f.eval(x),
            AngleField::Cumulative(c) => c.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            AngleField::Constant(_) => 0.0,
            AngleField::Linear { slope, .. } => *slope,
            AngleField::Expr { df, .. } => df.eval(x),
            AngleField::Cumulative(c) => c.derivative(x),
        }
    }
}

/// Γ solving `JΓ′ + QΓ = 0` with `Γ(anchor) = I`, tabulated at checkpoints.
pub struct TransferGamma {
    expr: Arc<DiracExpression>,
    checkpoints: Vec<(f64, Mat2)>,
    spacing: f64,
    settings: PropagationSettings,
}

impl fmt::Debug for TransferGamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TransferGamma({} checkpoints)", self.checkpoints.len())
    }
}

impl TransferGamma {
    pub fn new(expr: Arc<DiracExpression>, anchor: f64, settings: &PropagationSettings) -> Result<TransferGamma> {
        let iv = expr.interval;
        let lo = if iv.left_finite() { iv.a } else { anchor - 16.0 };
        let hi = if iv.right_finite() { iv.b } else { anchor + 16.0 };
        let n = 2048;
        let mut checkpoints = vec![(anchor, Mat2::identity())];
        for (end, sign) in [(hi, 1.0), (lo, -1.0)] {
            let mut state = Scaled {
                x: anchor,
                s: Mat2::identity(),
                log_scale: 0.0,
            };
            let h = (end - anchor).abs() / n as f64;
            if h == 0.0 {
                continue;
            }
            for k in 1..=n {
                let to = if k == n { end } else { anchor + sign * h * k as f64 };
                state = propagate_scaled(&*expr, 0.0f64, state, to, settings)?;
                let m = state.s * state.log_scale.exp();
                checkpoints.push((to, m));
            }
        }
        checkpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spacing = checkpoints.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max);
        Ok(TransferGamma {
            expr,
            checkpoints,
            spacing,
            settings: *settings,
        })
    }

    pub fn at(&self, x: f64) -> Mat2 {
        let k = self.checkpoints.partition_point(|c| c.0 <= x);
        let below = k.saturating_sub(1);
        let pick = if k < self.checkpoints.len() && (self.checkpoints[k].0 - x).abs() < (x - self.checkpoints[below].0).abs() {
            k
        } else {
            below
        };
        let (x0, m0) = self.checkpoints[pick];
        if x0 == x {
            return m0;
        }
        let h = x - x0;
        if h.abs() <= self.spacing {
            // two-point Gauss Magnus step for Γ' = JQΓ
            let d = 0.5 * h / 3f64.sqrt();
            let mid = x0 + 0.5 * h;
            let a1 = j_matrix() * self.expr.q_at(mid - d);
            let a2 = j_matrix() * self.expr.q_at(mid + d);
            let omega = (a1 + a2) * (0.5 * h) + (a2 * a1 - a1 * a2) * (3f64.sqrt() / 12.0 * h * h);
            return expm_traceless(&omega).0 * m0;
        }
        match propagate_scaled(
            &*self.expr,
            0.0f64,
            Scaled {
                x: x0,
                s: m0,
                log_scale: 0.0,
            },
            x,
            &self.settings,
        ) {
            Ok(s) => s.s * s.log_scale.exp(),
            Err(_) => Mat2::from_element(f64::NAN),
        }
    }
}

/// A matrix field with its derivative field, exact when available.
#[derive(Clone, Debug)]
pub struct Differentiable {
    pub f: MatrixField,
    df: Option<MatrixField>,
}

impl Differentiable {
    pub fn new(f: MatrixField) -> Differentiable {
        let df = f.exact_derivative();
        Differentiable { f, df }
    }

    pub fn at(&self, x: f64) -> (Mat2, Mat2) {
        let d = match &self.df {
            Some(d) => d.eval(x),
            None => self.f.derivative_at(x, 1e-3 * x.abs().max(1e-2)),
        };
        (self.f.eval(x), d)
    }
}

/// The frame field Γ with `det Γ = 1`.
#[derive(Clone, Debug)]
pub enum GammaField {
    Identity,
    Constant(Mat2),
    /// `e^{φJ}`.
    Rotation(AngleField),
    /// `√(η′R⁻¹)` with `η′ = √det R`.
    WeightSqrt(Differentiable),
    Transfer(Arc<TransferGamma>),
    Expr(Differentiable),
    /// `Γ₁(x) Γ₂(η₁(x))`.
    Composite { first: Box<GammaField>, second: Box<GammaField>, eta_first: Eta },
    /// `Γ(η⁻¹(y))⁻¹`.
    Inverse { base: Box<GammaField>, base_eta: Eta, base_domain: Interval },
}

impl GammaField {
    pub fn describe(&self) -> String {
        match self {
            GammaField::Identity => "identity".into(),
            GammaField::Constant(m) => format!("constant {:?}", m.as_slice()),
            GammaField::Rotation(_) => "rotation".into(),
            GammaField::WeightSqrt(_) => "weight-sqrt".into(),
            GammaField::Transfer(_) => "transfer".into(),
            GammaField::Expr(m) => m.f.describe(),
            GammaField::Composite { first, second, .. } => format!("{} then {}", first.describe(), second.describe()),
            GammaField::Inverse { base, .. } => format!("inverse({})", base.describe()),
        }
    }

    /// `(Γ(x), Γ′(x))`.
    pub fn at(&self, x: f64) -> (Mat2, Mat2) {
        match self {
            GammaField::Identity => (Mat2::identity(), Mat2::zeros()),
            GammaField::Constant(m) => (*m, Mat2::zeros()),
            GammaField::Rotation(phi) => {
                let g = rotation(phi.value(x));
                (g, phi.derivative(x) * j_matrix() * g)
            }
            GammaField::WeightSqrt(r) => {
                let (rv, dr) = r.at(x);
                let d = det(&rv);
                let sd = d.sqrt();
                let p = adj(&rv) / sd;
                let dd = (adj(&rv) * dr).trace();
                let dp = adj(&dr) / sd - adj(&rv) * (0.5 * dd / (d * sd));
                let s = (p.trace() + 2.0).sqrt();
                let ds = dp.trace() / (2.0 * s);
                let g = (p + Mat2::identity()) / s;
                (g, dp / s - (p + Mat2::identity()) * (ds / (s * s)))
            }
            GammaField::Transfer(t) => {
                let g = t.at(x);
                (g, j_matrix() * t.expr.q_at(x) * g)
            }
            GammaField::Expr(m) => m.at(x),
            GammaField::Composite {
                first,
                second,
                eta_first,
            } => {
                let (g1, d1) = first.at(x);
                let y = eta_first.value(x);
                let (g2, d2) = second.at(y);
                (g1 * g2, d1 * g2 + g1 * d2 * eta_first.derivative(x))
            }
            GammaField::Inverse {
                base,
                base_eta,
                base_domain,
            } => {
                let x0 = base_eta.inverse(x, base_domain);
                let (g, dg) = base.at(x0);
                let gi = inv(&g);
                (gi, -(gi * dg * gi) / base_eta.derivative(x0))
            }
        }
    }
}

/// `f(x) = Γ(x) f̃(η(x))` from `domain` onto `image`.
#[derive(Clone, Debug)]
pub struct LiouvilleTransform {
    pub eta: Eta,
    pub gamma: GammaField,
    pub domain: Interval,
    pub image: Interval,
    pub label: String,
}

impl FrameMap for LiouvilleTransform {
    fn eta(&self, x: f64) -> f64 {
        self.eta.value(x)
    }

    fn eta_inverse(&self, y: f64) -> f64 {
        self.eta.inverse(y, &self.domain)
    }

    fn gamma(&self, x: f64) -> Mat2 {
        self.gamma.at(x).0
    }
}

/// Sample points on the finite part of an interval.
fn samples(iv: &Interval, n: usize) -> Vec<f64> {
    let lo = if iv.left_finite() { iv.a } else { iv.b.min(0.0) - 10.0 };
    let hi = if iv.right_finite() { iv.b } else { iv.a.max(0.0) + 10.0 };
    let (lo, hi) = (lo.max(iv.a), hi.min(iv.b));
    (1..=n).map(|k| lo + (hi - lo) * (k as f64 - 0.5) / n as f64).collect()
}

impl LiouvilleTransform {
    /// Checks monotonicity of η and `det Γ = 1` on samples.
    pub fn new(eta: Eta, gamma: GammaField, domain: Interval, label: &str) -> Result<Self> {
        let image = eta.image(&domain)?;
        for x in samples(&domain, 64) {
            let d = eta.derivative(x);
            if !(d > 0.0) {
                return Err(Error::Transform {
                    x,
                    reason: format!("η′ = {d} is not positive"),
                });
            }
            let g = gamma.at(x).0;
            let dg = det(&g);
            if !((dg - 1.0).abs() <= 1e-10) {
                return Err(Error::Transform {
                    x,
                    reason: format!("det Γ = {dg} differs from 1"),
                });
            }
        }
        Ok(LiouvilleTransform {
            eta,
            gamma,
            domain,
            image,
            label: label.into(),
        })
    }

    pub fn identity(domain: Interval) -> Self {
        LiouvilleTransform {
            eta: Eta::Identity,
            gamma: GammaField::Identity,
            domain,
            image: domain,
            label: "identity".into(),
        }
    }

    pub fn eta_value(&self, x: f64) -> f64 {
        self.eta.value(x)
    }

    pub fn eta_inverse(&self, y: f64) -> f64 {
        self.eta.inverse(y, &self.domain)
    }

    pub fn gamma_at(&self, x: f64) -> Mat2 {
        self.gamma.at(x).0
    }

    /// `Γ(x)⁻¹u`: endpoint or reference data carried to the image side.
    pub fn map_data(&self, x: f64, u: Vector2<f64>) -> Vector2<f64> {
        inv(&self.gamma_at(x)) * u
    }

    pub fn inverse(&self) -> LiouvilleTransform {
        LiouvilleTransform {
            eta: Eta::Inverse {
                base: Box::new(self.eta.clone()),
                base_domain: self.domain,
            },
            gamma: GammaField::Inverse {
                base: Box::new(self.gamma.clone()),
                base_eta: self.eta.clone(),
                base_domain: self.domain,
            },
            domain: self.image,
            image: self.domain,
            label: format!("inverse of {}", self.label),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &LiouvilleTransform) -> Result<LiouvilleTransform> {
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !close(self.image.a, next.domain.a) || !close(self.image.b, next.domain.b) {
            return Err(Error::Config("composed transforms do not chain".into()));
        }
        Ok(LiouvilleTransform {
            eta: Eta::Composite {
                first: Box::new(self.eta.clone()),
                second: Box::new(next.eta.clone()),
                mid: next.domain,
            },
            gamma: GammaField::Composite {
                first: Box::new(self.gamma.clone()),
                second: Box::new(next.gamma.clone()),
                eta_first: self.eta.clone(),
            },
            domain: self.domain,
            image: next.image,
            label: format!("{} then {}", self.label, next.label),
        })
    }

    /// `(Q̃, R̃)` at the image point `y`.
    pub fn coefficients_at(&self, expr: &DiracExpression, y: f64) -> (Mat2, Mat2) {
        let x = self.eta_inverse(y);
        let (g, dg) = self.gamma.at(x);
        let d = self.eta.derivative(x);
        let gt = g.transpose();
        let r = gt * expr.r_at(x) * g / d;
        let q = (gt * expr.q_at(x) * g + gt * j_matrix() * dg) / d;
        let q = 0.5 * (q + q.transpose());
        let r = 0.5 * (r + r.transpose());
        (q, r)
    }
}

type Pushed = Arc<(Arc<DiracExpression>, LiouvilleTransform)>;

thread_local! {
    // Q and R are requested at the same point in turn; share the inversion of η.
    static LAST_PUSHED: Cell<Option<(usize, u64, Mat2, Mat2)>> = const { Cell::new(None) };
}

fn pushed_at(p: &Pushed, y: f64) -> (Mat2, Mat2) {
    let key = Arc::as_ptr(p) as usize;
    if let Some((k, bits, q, r)) = LAST_PUSHED.get() {
        if k == key && bits == y.to_bits() {
            return (q, r);
        }
    }
    let (q, r) = p.1.coefficients_at(&p.0, y);
    LAST_PUSHED.set(Some((key, y.to_bits(), q, r)));
    (q, r)
}

/// The expression on the image interval with `R̃(η) = ΓᵀRΓ/η′` and
/// `Q̃(η) = (ΓᵀQΓ + ΓᵀJΓ′)/η′`, validated on samples.
pub fn pushforward(expr: &Arc<DiracExpression>, t: &LiouvilleTransform) -> Result<Arc<DiracExpression>> {
    let same = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    if !same(expr.interval.a, t.domain.a) || !same(expr.interval.b, t.domain.b) {
        return Err(Error::Config(format!(
            "transform domain ({}, {}) differs from the interval ({}, {})",
            t.domain.a, t.domain.b, expr.interval.a, expr.interval.b
        )));
    }
    let out = if matches!(t.eta, Eta::Identity) && matches!(t.gamma, GammaField::Identity) {
        DiracExpression::new(t.image, expr.q.clone(), expr.r.clone())
    } else if let (Eta::Affine { scale, shift }, GammaField::Constant(g), Some(q), Some(r)) =
        (&t.eta, &t.gamma, expr.q.as_constant(), expr.r.as_constant())
    {
        let _ = shift;
        let gt = g.transpose();
        let qn = gt * q * g / *scale;
        let rn = gt * r * g / *scale;
        DiracExpression::new(
            t.image,
            MatrixField::constant(0.5 * (qn + qn.transpose())),
            MatrixField::constant(0.5 * (rn + rn.transpose())),
        )
    } else {
        let p1 = Arc::new((expr.clone(), t.clone()));
        let p2 = p1.clone();
        DiracExpression::new(
            t.image,
            MatrixField::named(&format!("Q pushed by {}", t.label), move |y| pushed_at(&p1, y).0),
            MatrixField::named(&format!("R pushed by {}", t.label), move |y| pushed_at(&p2, y).1),
        )
    };
    let mut plan = SamplePlan::default_for(&out.interval);
    plan.points_per_compact = 64;
    plan.symmetry_tol = 1e-10;
    match validate_hypotheses(&out, &plan) {
        Ok(_) => Ok(Arc::new(out)),
        Err(Error::NotPositive { x, eigenvalue }) => Err(Error::Transform {
            x,
            reason: format!("pushed weight is not positive definite (eigenvalue {eigenvalue:e})"),
        }),
        Err(e) => Err(e),
    }
}

/// The left endpoint when it is regular, otherwise an interior point.
fn left_anchor(expr: &DiracExpression) -> f64 {
    let iv = expr.interval;
    let inner = iv.interior_point();
    let regular = iv.left_finite() && expr.endpoint_integrability(true, inner, 40).is_ok_and(|p| p.converged);
    if regular {
        iv.a
    } else {
        inner
    }
}

fn weight_eta(expr: &Arc<DiracExpression>) -> Result<Eta> {
    let iv = expr.interval;
    let anchor = left_anchor(expr);
    if let Some(r) = expr.r.as_constant() {
        let scale = det(&r).sqrt();
        if !(scale > 0.0) {
            return Err(Error::NotPositive { x: anchor, eigenvalue: det(&r) });
        }
        return Ok(Eta::Affine {
            scale,
            shift: anchor - scale * anchor,
        });
    }
    let e = expr.clone();
    let g = move |x: f64| det(&e.r_at(x)).sqrt();
    for x in samples(&iv, 64) {
        if !(g(x) > 0.0) {
            return Err(Error::NotPositive { x, eigenvalue: g(x) });
        }
    }
    Ok(Eta::Cumulative(Arc::new(Cumulative::new(g, iv, anchor, anchor, 4096)?)))
}

/// Transform to `R̃ = I`.
pub fn normalize_weight(expr: &Arc<DiracExpression>) -> Result<(Arc<DiracExpression>, LiouvilleTransform)> {
    let eta = weight_eta(expr)?;
    let gamma = match expr.r.as_constant() {
        Some(r) => GammaField::Constant(sqrt_unimodular_spd(&(adj(&r) / det(&r).sqrt()))),
        None => GammaField::WeightSqrt(Differentiable::new(expr.r.clone())),
    };
    let t = LiouvilleTransform::new(eta, gamma, expr.interval, "normalize weight")?;
    Ok((pushforward(expr, &t)?, t))
}

/// Transform to `det R̃ = 1` with Γ = I.
pub fn normalize_det(expr: &Arc<DiracExpression>) -> Result<(Arc<DiracExpression>, LiouvilleTransform)> {
    let t = LiouvilleTransform::new(weight_eta(expr)?, GammaField::Identity, expr.interval, "normalize det")?;
    Ok((pushforward(expr, &t)?, t))
}

fn is_identity_weight(expr: &DiracExpression) -> bool {
    samples(&expr.interval, 16)
        .iter()
        .all(|&x| (expr.r_at(x) - Mat2::identity()).norm() <= 1e-12)
}

/// Transform to `tr Q̃ = 0` by `Γ = e^{φJ}`, `φ′ = tr Q/2`, for `R = I`.
pub fn normalize_trace(expr: &Arc<DiracExpression>) -> Result<(Arc<DiracExpression>, LiouvilleTransform)> {
    if !is_identity_weight(expr) {
        return Err(Error::Config("normalize_trace needs R = I".into()));
    }
    let iv = expr.interval;
    let anchor = left_anchor(expr);
    let phi = match expr.q.as_constant() {
        Some(q) => AngleField::Linear {
            slope: 0.5 * q.trace(),
            anchor,
        },
        None => {
            let e = expr.clone();
            AngleField::Cumulative(Arc::new(Cumulative::new(
                move |x| 0.5 * e.q_at(x).trace(),
                iv,
                anchor,
                0.0,
                4096,
            )?))
        }
    };
    let t = LiouvilleTransform::new(Eta::Identity, GammaField::Rotation(phi), iv, "normalize trace")?;
    Ok((pushforward(expr, &t)?, t))
}

/// Transform to `Q̃ = 0` with Γ solving `JΓ′ + QΓ = 0`, `Γ(anchor) = I`.
pub fn kill_potential(
    expr: &Arc<DiracExpression>,
    settings: &PropagationSettings,
) -> Result<(Arc<DiracExpression>, LiouvilleTransform)> {
    let anchor = left_anchor(expr);
    if expr.interval.left_finite() && anchor != expr.interval.a {
        return Err(Error::Config(
            "kill_potential needs a regular left endpoint: Γ is unbounded at a singular one".into(),
        ));
    }
    let gamma = GammaField::Transfer(Arc::new(TransferGamma::new(expr.clone(), anchor, settings)?));
    let t = LiouvilleTransform::new(Eta::Identity, gamma, expr.interval, "kill potential")?;
    Ok((pushforward(expr, &t)?, t))
}

/// `Q̃(η₀ + x) = e^{−φJ}Q e^{φJ} − φ′I` on the shifted interval, for `R = I`.
pub fn gauge_rotate(
    expr: &Arc<DiracExpression>,
    phi: AngleField,
    eta0: f64,
) -> Result<(Arc<DiracExpression>, LiouvilleTransform)> {
    if !is_identity_weight(expr) {
        return Err(Error::Config("gauge_rotate needs R = I".into()));
    }
    let eta = if eta0 == 0.0 {
        Eta::Identity
    } else {
        Eta::Affine { scale: 1.0, shift: eta0 }
    };
    let t = LiouvilleTransform::new(eta, GammaField::Rotation(phi), expr.interval, "gauge rotation")?;
    Ok((pushforward(expr, &t)?, t))
}

/// Probes for the invariance harness.
#[derive(Debug, Clone, Serialize)]
pub struct Probes {
    #[serde(skip)]
    pub zs: Vec<C64>,
    pub window: Option<(f64, f64)>,
    pub c_grid: Vec<f64>,
    #[serde(skip)]
    pub zeta: C64,
    pub spectrum: SpectrumSettings,
    pub quad: QuadSettings,
}

impl Default for Probes {
    fn default() -> Self {
        Probes {
            zs: vec![C64::new(0.0, 1.0)],
            window: None,
            c_grid: Vec::new(),
            zeta: C64::new(0.0, 1.0),
            spectrum: SpectrumSettings::default(),
            quad: QuadSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub label: String,
    /// "independent" when the image frame is built from mapped boundary data,
    /// "mapped" when it is transported.
    pub frame: String,
    pub eigenvalue_counts: Option<[usize; 2]>,
    pub eigenvalue_distance: Option<f64>,
    /// `(Re z, Im z, |M − M̃|)`.
    pub m_deviations: Vec<[f64; 3]>,
    pub max_m_deviation: f64,
    /// `(c, K, |K − K̃|)`.
    pub kernel_deviations: Vec<[f64; 3]>,
    pub max_kernel_deviation: f64,
    pub max_deviation: f64,
}

/// Right data carried through a transform.
pub fn map_right_data(right: &RightData, t: &LiouvilleTransform) -> Result<RightData> {
    let b = t.domain.b;
    let to_ref = |x: f64, u: Vector2<f64>| {
        let v = t.map_data(x, u);
        [v[0], v[1]]
    };
    Ok(match *right {
        RightData::Angle(beta) => RightData::Reference(to_ref(b, crate::boundary::angle_data(beta))),
        RightData::Reference(u) => RightData::Reference(to_ref(b, Vector2::new(u[0], u[1]))),
        RightData::Truncate { x, u } => RightData::Truncate {
            x: t.eta_value(x),
            u: to_ref(x, Vector2::new(u[0], u[1])),
        },
        RightData::LimitPoint { seed, condition } => RightData::LimitPoint {
            seed: t.eta_value(seed),
            condition,
        },
        RightData::LimitCircle { .. } => {
            return Err(Error::Config("limit-circle right data cannot be carried through a transform".into()))
        }
    })
}

/// Image-side frame: built from mapped endpoint data when the left end is
/// regular, otherwise transported.
pub fn map_frame(
    frame: &FundamentalSystem,
    image: &Arc<DiracExpression>,
    t: &LiouvilleTransform,
    settings: &PropagationSettings,
) -> Result<(FundamentalSystem, bool)> {
    let a = t.domain.a;
    let data = match &frame.left {
        LeftData::Condition(bc) => bc.data().map(|u| (u, companion_data(&u))),
        LeftData::Frame { phi, theta } => Some((Vector2::new(phi[0], phi[1]), Vector2::new(theta[0], theta[1]))),
        _ => None,
    };
    match data {
        Some((u, th)) if a.is_finite() => {
            let fs = frame_from_data(
                image.clone(),
                t.map_data(a, u),
                t.map_data(a, th),
                t.eta_value(frame.anchor),
                settings,
            )?;
            Ok((fs, true))
        }
        _ => Ok((frame.mapped(image.clone(), Arc::new(t.clone())), false)),
    }
}

/// Compares eigenvalues, M and kernels of a problem and its transform.
pub fn invariance_harness(weyl: &WeylFunction, t: &LiouvilleTransform, probes: &Probes) -> Result<InvarianceReport> {
    let expr = weyl.frame.phi.expr_arc().clone();
    let image = pushforward(&expr, t)?;
    let (frame, independent) = map_frame(&weyl.frame, &image, t, &weyl.settings)?;
    let right = map_right_data(&weyl.right, t)?;
    let tilde = WeylFunction::new(frame, right, weyl.settings)?;
    let (counts, dist) = match probes.window {
        Some(w) => {
            let s1 = eigenvalues_of(&weyl.characteristic()?, w, &probes.spectrum)?.eigenvalues;
            let s2 = eigenvalues_of(&tilde.characteristic()?, w, &probes.spectrum)?.eigenvalues;
            (Some([s1.len(), s2.len()]), Some(set_distance(&s1, &s2)))
        }
        None => (None, None),
    };
    let m_deviations: Vec<[f64; 3]> = probes
        .zs
        .par_iter()
        .map(|&z| -> Result<[f64; 3]> {
            let m1 = weyl.eval(z)?;
            let m2 = tilde.eval(z)?;
            Ok([z.re, z.im, (m1 - m2).norm()])
        })
        .collect::<Result<_>>()?;
    let kernel_deviations: Vec<[f64; 3]> = probes
        .c_grid
        .par_iter()
        .map(|&c| -> Result<[f64; 3]> {
            let k1 = kernel_integral(&weyl.frame.phi, probes.zeta, probes.zeta, c, &probes.quad)?.value();
            let k2 = kernel_integral(&tilde.frame.phi, probes.zeta, probes.zeta, t.eta_value(c), &probes.quad)?.value();
            Ok([c, k1.re, (k1 - k2).norm()])
        })
        .collect::<Result<_>>()?;
    let max_m = m_deviations.iter().map(|v| v[2]).fold(0.0, f64::max);
    let max_k = kernel_deviations.iter().map(|v| v[2]).fold(0.0, f64::max);
    Ok(InvarianceReport {
        label: t.label.clone(),
        frame: if independent { "independent" } else { "mapped" }.into(),
        eigenvalue_counts: counts,
        eigenvalue_distance: dist,
        m_deviations,
        max_m_deviation: max_m,
        kernel_deviations,
        max_kernel_deviation: max_k,
        max_deviation: max_m.max(max_k).max(dist.unwrap_or(0.0)),
    })
}

/// Transform description as read from JSON.
#[derive(Debug, Clone, Default, Serialize, serde::Deserialize)]
pub struct TransformSpec {
    /// `"identity"`, `"affine:s,t"`, `"cumulative:detR"` or an expression in x.
    #[serde(default)]
    pub eta: Option<String>,
    #[serde(default)]
    pub gamma: Option<GammaSpec>,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    /// `"identity"`, `"rotation:φ"`, `"weight-sqrt"`, `"kill-potential"`,
    /// `"normalize-trace"`.
    Named(String),
    Entries([String; 4]),
}

/// Builds the transform described by `spec` on the interval of `expr`.
pub fn transform_from_spec(
    expr: &Arc<DiracExpression>,
    spec: &TransformSpec,
    settings: &PropagationSettings,
) -> Result<LiouvilleTransform> {
    let iv = expr.interval;
    let eta = match spec.eta.as_deref().map(str::trim) {
        None | Some("identity") | Some("id") => Eta::Identity,
        Some("cumulative:detR") => weight_eta(expr)?,
        Some(s) if s.starts_with("affine:") => {
            let parts: Vec<f64> = s[7..]
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad affine η {s:?}: {e}")))?;
            match parts[..] {
                [scale, shift] => Eta::Affine { scale, shift },
                _ => return Err(Error::Config(format!("affine η needs two numbers, got {s:?}"))),
            }
        }
        Some(s) => {
            let f = ScalarField::parse(s)?;
            let df = f
                .derivative()
                .ok_or_else(|| Error::Config(format!("no derivative available for η = {s}")))?;
            Eta::Expr { f, df }
        }
    };
    let gamma = match &spec.gamma {
        None => GammaField::Identity,
        Some(GammaSpec::Entries(e)) => GammaField::Expr(Differentiable::new(MatrixField::parse([&e[0], &e[1], &e[2], &e[3]])?)),
        Some(GammaSpec::Named(n)) => match n.trim() {
            "identity" | "id" => GammaField::Identity,
            "weight-sqrt" => match expr.r.as_constant() {
                Some(r) => GammaField::Constant(sqrt_unimodular_spd(&(adj(&r) / det(&r).sqrt()))),
                None => GammaField::WeightSqrt(Differentiable::new(expr.r.clone())),
            },
            "kill-potential" => {
                GammaField::Transfer(Arc::new(TransferGamma::new(expr.clone(), left_anchor(expr), settings)?))
            }
            "normalize-trace" => return Ok(normalize_trace(expr)?.1),
            s if s.starts_with("rotation:") => GammaField::Rotation(AngleField::parse(&s[9..])?),
            s => return Err(Error::Config(format!("unknown Γ {s:?}"))),
        },
    };
    let label = format!(
        "η = {}, Γ = {}",
        spec.eta.as_deref().unwrap_or("identity"),
        gamma.describe()
    );
    LiouvilleTransform::new(eta, gamma, iv, &label)
}

/// `∫ λ Im M(λ + iε)/π dλ` over a window, a smoothed first moment of ρ.
pub fn smoothed_first_moment(weyl: &WeylFunction, window: (f64, f64), eps: f64) -> Result<f64> {
    let n = (((window.1 - window.0) / eps).ceil() as usize).clamp(16, 4096);
    let h = (window.1 - window.0) / n as f64;
    let rule = gauss_legendre(8);
    let parts: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let lo = window.0 + h * k as f64;
            let mut acc = 0.0;
            for (x, w) in rule.mapped(lo, lo + h) {
                acc += w * x * weyl.eval(C64::new(x, eps))?.im;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() / std::f64::consts::PI)
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityReport {
    pub window: (f64, f64),
    pub eps: f64,
    pub moments: [f64; 2],
    pub discrepancy: f64,
    pub threshold: f64,
    pub distinguished: bool,
}

/// Compares smoothed first moments of two spectral measures.
pub fn rigidity_check(
    a: &WeylFunction,
    b: &WeylFunction,
    window: (f64, f64),
    eps: f64,
    threshold: f64,
) -> Result<RigidityReport> {
    let m0 = smoothed_first_moment(a, window, eps)?;
    let m1 = smoothed_first_moment(b, window, eps)?;
    Ok(compare_moments(m0, m1, window, eps, threshold))
}

pub fn compare_moments(m0: f64, m1: f64, window: (f64, f64), eps: f64, threshold: f64) -> RigidityReport {
    let discrepancy = (m0 - m1).abs();
    RigidityReport {
        window,
        eps,
        moments: [m0, m1],
        discrepancy,
        threshold,
        distinguished: discrepancy > threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{fundamental_system, BoundaryCondition, Endpoint};
    use std::f64::consts::PI;

    fn problem(q: [&str; 4], r: [&str; 4], b: f64) -> Arc<DiracExpression> {
        Arc::new(DiracExpression::new(
            Interval::new(0.0, b).unwrap(),
            MatrixField::parse(q).unwrap(),
            MatrixField::parse(r).unwrap(),
        ))
    }

    #[test]
    fn weight_constant_four() {
        let e = problem(["0", "0", "0", "0"], ["4", "0", "0", "4"], 1.0);
        let (img, t) = normalize_weight(&e).unwrap();
        assert!((t.eta.derivative(0.3) - 4.0).abs() < 1e-15);
        assert!((t.gamma_at(0.3) - Mat2::identity()).norm() < 1e-15);
        assert!((img.r_at(1.0) - Mat2::identity()).norm() < 1e-15);
        assert_eq!(img.interval.b, 4.0);
    }

    #[test]
    fn weight_diagonal_and_variable() {
        let e = problem(["0", "0", "0", "0"], ["1", "0", "0", "4"], 1.0);
        let (img, t) = normalize_weight(&e).unwrap();
        let g = t.gamma_at(0.5);
        assert!((g - Mat2::new(2f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt())).norm() < 1e-14);
        assert!((img.r_at(1.0) - Mat2::identity()).norm() < 1e-14);
        let e = problem(["x", "1", "1", "0"], ["2+x^2", "x/2", "x/2", "1+x"], 1.0);
        let (img, _) = normalize_weight(&e).unwrap();
        for y in [0.1, 0.5, 1.0, 1.4] {
            if img.interval.contains(y) {
                assert!((img.r_at(y) - Mat2::identity()).norm() < 1e-9, "{y}");
                assert!((img.q_at(y) - img.q_at(y).transpose()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_and_rotation() {
        let e = problem(["1", "0", "0", "1"], ["1", "0", "0", "1"], 1.0);
        let (img, _) = normalize_trace(&e).unwrap();
        assert!(img.q_at(0.4).trace().abs() < 1e-14);
        let free = problem(["0", "0", "0", "0"], ["1", "0", "0", "1"], 1.0);
        let (img, _) = gauge_rotate(&free, AngleField::parse("x").unwrap(), 0.0).unwrap();
        assert!((img.q_at(0.3) + Mat2::identity()).norm() < 1e-14);
        let (img, _) = gauge_rotate(&free, AngleField::Constant(0.7), 0.0).unwrap();
        assert!(img.q_at(0.3).norm() < 1e-15);
    }

    #[test]
    fn kill_constant_potential() {
        let q = 0.8;
        let e = problem(["0.8", "0", "0", "-0.8"], ["1", "0", "0", "1"], 1.0);
        let (img, t) = kill_potential(&e, &PropagationSettings::default()).unwrap();
        for x in [0.2, 0.5, 0.9] {
            let g = t.gamma_at(x);
            // JQ = [[0, q], [q, 0]]
            let exact = Mat2::new((q * x).cosh(), (q * x).sinh(), (q * x).sinh(), (q * x).cosh());
            assert!((g - exact).norm() < 1e-12, "{x}");
            assert!((det(&g) - 1.0).abs() < 1e-12);
            assert!(img.q_at(x).norm() < 1e-12);
            assert!((img.r_at(x) - g.transpose() * g).norm() < 1e-12);
        }
    }

    #[test]
    fn det_normalization() {
        let e = problem(["0", "0", "0", "0"], ["4", "0", "0", "4"], 1.0);
        let (img, _) = normalize_det(&e).unwrap();
        assert!((det(&img.r_at(2.0)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_and_composition() {
        let e = problem(["x", "1", "1", "0"], ["2+x^2", "x/2", "x/2", "1+x"], 1.0);
        let (img, t) = normalize_weight(&e).unwrap();
        let back = pushforward(&img, &t.inverse()).unwrap();
        for x in [0.2, 0.6] {
            assert!((back.r_at(x) - e.r_at(x)).norm() < 1e-9, "{x}");
            assert!((back.q_at(x) - e.q_at(x)).norm() < 1e-7, "{x}");
        }
        let rot = LiouvilleTransform::new(
            Eta::Identity,
            GammaField::Rotation(AngleField::Constant(0.3)),
            img.interval,
            "rot",
        )
        .unwrap();
        let two = pushforward(&img, &rot).unwrap();
        let comp = pushforward(&e, &t.then(&rot).unwrap()).unwrap();
        for y in [0.3, 1.0] {
            assert!((two.q_at(y) - comp.q_at(y)).norm() < 1e-9);
            assert!((two.r_at(y) - comp.r_at(y)).norm() < 1e-9);
        }
    }

    #[test]
    fn harness_constant_rotation_free() {
        let s = PropagationSettings::default();
        let e = Arc::new(DiracExpression::free(Interval::new(0.0, PI).unwrap()));
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.0).unwrap();
        let w = WeylFunction::new(fundamental_system(e.clone(), &bc, 1.0, &s).unwrap(), RightData::Angle(0.0), s).unwrap();
        let (_, t) = gauge_rotate(&e, AngleField::Constant(0.4), 0.0).unwrap();
        let probes = Probes {
            zs: vec![C64::new(0.3, 1.0), C64::new(-2.0, 0.5)],
            window: Some((-5.5, 5.5)),
            c_grid: vec![0.5, 1.5],
            ..Probes::default()
        };
        let r = invariance_harness(&w, &t, &probes).unwrap();
        assert_eq!(r.frame, "independent");
        assert_eq!(r.eigenvalue_counts, Some([11, 11]));
        assert!(r.max_deviation < 1e-9, "{r:?}");
    }
    #[test]
    fn j_flips_radial_sign() {
        use crate::coefficients::{make_radial, RadialSpec};
        let e = Arc::new(make_radial(&RadialSpec::pure(1.5, 2.0)).unwrap());
        let spec = TransformSpec {
            eta: None,
            gamma: Some(GammaSpec::Entries(["0".into(), "-1".into(), "1".into(), "0".into()])),
        };
        let t = transform_from_spec(&e, &spec, &PropagationSettings::default()).unwrap();
        let img = pushforward(&e, &t).unwrap();
        for x in [0.3, 1.1] {
            let (q, p) = (e.q_at(x), img.q_at(x));
            assert!((p[(0, 1)] + q[(0, 1)]).abs() < 1e-14);
            assert!((p[(0, 0)] - q[(1, 1)]).abs() < 1e-14);
        }
    }

    #[test]
    fn spec_parsing() {
        let e = problem(["0", "0", "0", "0"], ["1", "0", "0", "4"], 1.0);
        let json = r#"{"eta": "cumulative:detR", "gamma": "weight-sqrt"}"#;
        let spec: TransformSpec = serde_json::from_str(json).unwrap();
        let t = transform_from_spec(&e, &spec, &PropagationSettings::default()).unwrap();
        assert!((pushforward(&e, &t).unwrap().r_at(0.5) - Mat2::identity()).norm() < 1e-14);
        let spec: TransformSpec = serde_json::from_str(r#"{"gamma": "rotation:x^2"}"#).unwrap();
        let t = transform_from_spec(&e, &spec, &PropagationSettings::default()).unwrap();
        let (_, d) = t.gamma.at(0.5);
        assert!((d - j_matrix() * rotation(0.25)).norm() < 1e-14);
        assert!(serde_json::from_str::<TransformSpec>(r#"{"gamma": 3}"#).is_err());
    }
}
