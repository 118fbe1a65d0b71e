//! Endpoint classification, boundary conditions and the real entire
//! fundamental system (Θ, Φ), including the singular radial Φ.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::Vector2;
use serde::Serialize;

use crate::coefficients::{DiracExpression, Mat2, RadialSpec};
use crate::error::{Error, Result};
use crate::ode::{
    self, integrate_along, propagate_scaled, sesquilinear, wronskian, CVec2, Field, PropagationSettings, QuadSettings,
    Scaled, Source, C64,
};
use crate::quadrature::{gauss_legendre, ImproperProbe, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    /// `f₁ cos α + f₂ sin α = 0`.
    Angle(f64),
    /// `W(f, u) = 0` for the given endpoint data `u`.
    Reference([f64; 2]),
    LimitPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryCondition {
    pub endpoint: Endpoint,
    pub kind: BcKind,
}

impl BoundaryCondition {
    /// Angle condition, reduced to `[0, π)`.
    pub fn angle(endpoint: Endpoint, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Config(format!("boundary angle {alpha} is not finite")));
        }
        let pi = std::f64::consts::PI;
        let a = alpha.rem_euclid(pi);
        Ok(BoundaryCondition {
            endpoint,
            kind: BcKind::Angle(if a >= pi { 0.0 } else { a }),
        })
    }

    pub fn reference(endpoint: Endpoint, u: [f64; 2]) -> Result<Self> {
        if !(u[0].is_finite() && u[1].is_finite()) || u[0] == 0.0 && u[1] == 0.0 {
            return Err(Error::Config("reference data must be finite and nonzero".into()));
        }
        Ok(BoundaryCondition {
            endpoint,
            kind: BcKind::Reference(u),
        })
    }

    pub fn limit_point(endpoint: Endpoint) -> Self {
        BoundaryCondition {
            endpoint,
            kind: BcKind::LimitPoint,
        }
    }

    /// Endpoint data `u` with `W(f, u) = 0` expressing the condition.
    pub fn data(&self) -> Option<Vector2<f64>> {
        match self.kind {
            BcKind::Angle(a) => Some(angle_data(a)),
            BcKind::Reference(u) => Some(Vector2::new(u[0], u[1])),
            BcKind::LimitPoint => None,
        }
    }
}

/// `(-sin α, cos α)`: the solution data annihilated by the angle-α condition.
pub fn angle_data(alpha: f64) -> Vector2<f64> {
    Vector2::new(-alpha.sin(), alpha.cos())
}

/// Companion data `θ` with `W(θ, u) = 1`.
pub fn companion_data(u: &Vector2<f64>) -> Vector2<f64> {
    let n = u.norm_squared();
    Vector2::new(u[1] / n, -u[0] / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Regular,
    LimitCircle,
    LimitPoint,
    Inconclusive,
}

/// Truncated R-norms of two solutions along one geometric schedule.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleDiagnostic {
    pub ratio: f64,
    pub points: Vec<f64>,
    /// Cumulative ∫‖f‖²_R of the two test solutions up to each point.
    pub norms: [Vec<f64>; 2],
    /// Partial sum plus geometric tail, infinite when divergent.
    pub extrapolated: [f64; 2],
    pub convergent: [bool; 2],
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointClassification {
    pub endpoint: Endpoint,
    pub verdict: Verdict,
    pub coefficient_probe: Option<ImproperProbe>,
    pub schedules: Vec<ScheduleDiagnostic>,
}

/// Classifies an endpoint as regular, limit circle or limit point.
///
/// Regular when ∫(‖Q‖ + ‖R‖) converges up to a finite endpoint. Otherwise the
/// solutions with data (1, 0) and (0, 1) at an interior point are integrated
/// toward the endpoint on two geometric schedules; disagreement between the
/// schedules gives an inconclusive verdict.
pub fn classify_endpoint(
    expr: &DiracExpression,
    endpoint: Endpoint,
    z_test: C64,
    settings: &PropagationSettings,
) -> Result<EndpointClassification> {
    let iv = expr.interval;
    let c = iv.interior_point();
    let left = endpoint == Endpoint::Left;
    let finite = if left { iv.left_finite() } else { iv.right_finite() };
    let mut probe = None;
    if finite {
        let p = expr.endpoint_integrability(left, c, 40)?;
        let regular = p.converged;
        probe = Some(p);
        if regular {
            return Ok(EndpointClassification {
                endpoint,
                verdict: Verdict::Regular,
                coefficient_probe: probe,
                schedules: Vec::new(),
            });
        }
    }
    let mut schedules = Vec::new();
    for (ratio, levels) in [(settings.approach_ratio, 40usize), (settings.approach_ratio.powi(2), 20usize)] {
        schedules.push(schedule_norms(expr, endpoint, c, z_test, ratio, levels, settings)?);
    }
    let verdict = if schedules.iter().all(|s| s.verdict == schedules[0].verdict) {
        schedules[0].verdict
    } else {
        Verdict::Inconclusive
    };
    Ok(EndpointClassification {
        endpoint,
        verdict,
        coefficient_probe: probe,
        schedules,
    })
}

fn schedule_norms(
    expr: &DiracExpression,
    endpoint: Endpoint,
    c: f64,
    z: C64,
    ratio: f64,
    levels: usize,
    settings: &PropagationSettings,
) -> Result<ScheduleDiagnostic> {
    let iv = expr.interval;
    let left = endpoint == Endpoint::Left;
    let end = if left { iv.a } else { iv.b };
    // truncation points approaching the endpoint
    let mut points = Vec::new();
    if end.is_finite() {
        let d = (end - c).abs();
        for k in 1..=levels {
            let t = d * ratio.powi(k as i32);
            points.push(if left { end + t } else { end - t });
        }
    } else {
        let max_levels = levels.min(12);
        for k in 0..max_levels {
            let t = (1.0 / ratio).powi(k as i32);
            points.push(if left { c - t } else { c + t });
        }
    }
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let starts = [CVec2::new(one, zero), CVec2::new(zero, one)];
    let mut norms: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut increments: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut blown = [false, false];
    for (k, start) in starts.iter().enumerate() {
        let mut x = c;
        let mut f = *start;
        let mut total = 0.0;
        for &p in &points {
            let (lo, hi) = if left { (p, x) } else { (x, p) };
            // integrate from the side nearest c; for the left endpoint run backwards
            let res = if left {
                shell_backward(expr, z, f, lo, hi, settings)
            } else {
                integrate_along(
                    expr,
                    &[Source { z, f }],
                    lo,
                    hi,
                    |t, v| sesquilinear(&v[0], &expr.r_at(t), &v[0]),
                    &QuadSettings {
                        abs_tol: 1e-12,
                        rel_tol: 1e-9,
                        max_depth: 30,
                    },
                    settings,
                )
                .map(|(v, ends)| (v.re, ends[0]))
            };
            match res {
                Ok((inc, fend)) if inc.is_finite() && fend.iter().all(|v| v.norm().is_finite()) => {
                    total += inc;
                    norms[k].push(total);
                    increments[k].push(inc);
                    f = fend;
                    x = p;
                    if total > 1e200 {
                        blown[k] = true;
                        break;
                    }
                }
                Ok(_) | Err(Error::Overflow { .. }) | Err(Error::NotFinite { .. }) => {
                    blown[k] = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let mut convergent = [false, false];
    let mut extrapolated = [f64::INFINITY, f64::INFINITY];
    for k in 0..2 {
        if blown[k] {
            continue;
        }
        let inc = &increments[k];
        let n = inc.len();
        let total = *norms[k].last().unwrap_or(&0.0);
        let negligible = n >= 3 && inc[n - 3..].iter().all(|&s| s <= 1e-14 * total.max(1e-300));
        let decaying = n >= 5 && inc[n - 5..].windows(2).all(|w| w[1] <= 0.95 * w[0]);
        if negligible || decaying {
            convergent[k] = true;
            let r = if n >= 2 && inc[n - 2] > 0.0 { inc[n - 1] / inc[n - 2] } else { 0.0 };
            extrapolated[k] = total + if r < 1.0 { inc[n - 1] * r / (1.0 - r) } else { 0.0 };
        }
    }
    let verdict = if convergent[0] && convergent[1] {
        Verdict::LimitCircle
    } else {
        Verdict::LimitPoint
    };
    Ok(ScheduleDiagnostic {
        ratio,
        points,
        norms,
        extrapolated,
        convergent,
        verdict,
    })
}

/// ∫_lo^hi ‖f‖²_R for the solution with value `f_hi` at `hi`; returns the
/// integral and the value at `lo`.
fn shell_backward(
    expr: &DiracExpression,
    z: C64,
    f_hi: CVec2,
    lo: f64,
    hi: f64,
    settings: &PropagationSettings,
) -> Result<(f64, CVec2)> {
    let at_lo = propagate_scaled(
        expr,
        z,
        Scaled {
            x: hi,
            s: f_hi,
            log_scale: 0.0,
        },
        lo,
        settings,
    )?;
    let f_lo = at_lo.value();
    if !f_lo.iter().all(|v| v.norm().is_finite()) {
        return Err(Error::Overflow { x: lo });
    }
    let (v, _) = integrate_along(
        expr,
        &[Source { z, f: f_lo }],
        lo,
        hi,
        |t, v| sesquilinear(&v[0], &expr.r_at(t), &v[0]),
        &QuadSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_depth: 30,
        },
        settings,
    )?;
    Ok((v.re, f_lo))
}

/// A change of variables acting on solution frames, `f(x) = Γ(x) f̃(η(x))`.
pub trait FrameMap: Send + Sync + fmt::Debug {
    fn eta(&self, x: f64) -> f64;
    fn eta_inverse(&self, x_tilde: f64) -> f64;
    fn gamma(&self, x: f64) -> Mat2;
}

/// Which radial solution a Volterra handle produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialBranch {
    /// `Φ₂ = x^κ(1 + o(1))`, `Φ₁ = o(x^κ)`.
    Phi,
    /// `Θ₁ = x^{-κ}(1 + o(1))`, `Θ₂ = o(x^{-κ})`; requires κ < 1/2.
    Theta,
}

#[derive(Clone)]
enum Kind {
    Anchored { x0: f64, data: Vector2<f64> },
    Radial { spec: Arc<RadialSpec>, branch: RadialBranch },
    Companion { phi: Box<EntireSolutionHandle>, c0: f64 },
    Combination { terms: Vec<(f64, EntireSolutionHandle)> },
    Mapped { base: Box<EntireSolutionHandle>, map: Arc<dyn FrameMap> },
}

/// Evaluator `(z, x) ↦ f(z, x)` of a solution family that is entire in z and
/// real for real z, pinned by z-independent data.
#[derive(Clone)]
pub struct EntireSolutionHandle {
    expr: Arc<DiracExpression>,
    kind: Kind,
    settings: PropagationSettings,
}

impl fmt::Debug for EntireSolutionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntireSolutionHandle({})", self.describe())
    }
}

impl EntireSolutionHandle {
    /// Solution with value `data` at `x0` for every z.
    pub fn anchored(expr: Arc<DiracExpression>, x0: f64, data: Vector2<f64>, settings: PropagationSettings) -> Result<Self> {
        if !expr.interval.contains_closed(x0) || !x0.is_finite() {
            return Err(Error::Config(format!("anchor {x0} is outside the interval")));
        }
        Ok(EntireSolutionHandle {
            expr,
            kind: Kind::Anchored { x0, data },
            settings,
        })
    }

    /// Linear combination with z-independent real coefficients.
    pub fn combination(terms: Vec<(f64, EntireSolutionHandle)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Config("empty combination".into()))?;
        Ok(EntireSolutionHandle {
            expr: first.1.expr.clone(),
            settings: first.1.settings,
            kind: Kind::Combination { terms },
        })
    }

    /// The handle transported to the image expression: `f̃(x̃) = Γ(x)⁻¹ f(x)` at `x̃ = η(x)`.
    pub fn mapped(&self, image: Arc<DiracExpression>, map: Arc<dyn FrameMap>) -> Self {
        EntireSolutionHandle {
            expr: image,
            kind: Kind::Mapped {
                base: Box::new(self.clone()),
                map,
            },
            settings: self.settings,
        }
    }

    pub fn expr(&self) -> &DiracExpression {
        &self.expr
    }

    pub fn expr_arc(&self) -> &Arc<DiracExpression> {
        &self.expr
    }

    pub fn settings(&self) -> &PropagationSettings {
        &self.settings
    }

    pub fn with_settings(&self, settings: PropagationSettings) -> Self {
        let mut h = self.clone();
        h.settings = settings;
        h
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Anchored { x0, data } => format!("anchored at {x0} with data ({}, {})", data[0], data[1]),
            Kind::Radial { spec, branch } => format!("radial {branch:?} for kappa = {}", spec.kappa),
            Kind::Companion { c0, .. } => format!("companion of phi at {c0}"),
            Kind::Combination { terms } => terms
                .iter()
                .map(|(c, h)| format!("{c} * [{}]", h.describe()))
                .collect::<Vec<_>>()
                .join(" + "),
            Kind::Mapped { base, .. } => format!("mapped [{}]", base.describe()),
        }
    }

    /// True when the family is entire in z by construction. The companion Θ
    /// used for limit-point radial problems is only meromorphic.
    pub fn is_entire(&self) -> bool {
        match &self.kind {
            Kind::Companion { .. } => false,
            Kind::Combination { terms } => terms.iter().all(|(_, h)| h.is_entire()),
            Kind::Mapped { base, .. } => base.is_entire(),
            _ => true,
        }
    }

    /// True when evaluation near the left endpoint needs shells toward it.
    pub fn singular_left(&self) -> bool {
        match &self.kind {
            Kind::Radial { .. } => true,
            Kind::Combination { terms } => terms.iter().any(|(_, h)| h.singular_left()),
            Kind::Mapped { base, .. } => base.singular_left(),
            Kind::Anchored { .. } | Kind::Companion { .. } => false,
        }
    }

    /// Smallest x at which the handle is evaluated by integrals.
    pub fn left_limit(&self) -> f64 {
        match &self.kind {
            Kind::Anchored { x0, .. } => *x0,
            Kind::Radial { .. } => 0.0,
            Kind::Companion { phi, .. } => phi.left_limit(),
            Kind::Combination { terms } => terms.iter().map(|(_, h)| h.left_limit()).fold(f64::NEG_INFINITY, f64::max),
            Kind::Mapped { base, map } => map.eta(base.left_limit()),
        }
    }

    /// A point and value from which the solution can be propagated.
    pub fn start<T: Field>(&self, z: T) -> Result<Scaled<Vector2<T>>> {
        match &self.kind {
            Kind::Anchored { x0, data } => Ok(Scaled {
                x: *x0,
                s: data.map(T::from_real),
                log_scale: 0.0,
            }),
            Kind::Radial { spec, branch } => {
                let seed = default_seed(spec, z.modulus());
                radial_value(&self.expr, spec, *branch, z, seed)
            }
            Kind::Companion { phi, c0 } => {
                let p = phi.eval_scaled(z, *c0)?;
                let n = p.s[0] * p.s[0] + p.s[1] * p.s[1];
                Ok(Scaled {
                    x: *c0,
                    s: Vector2::new(p.s[1] / n, -p.s[0] / n),
                    log_scale: -p.log_scale,
                })
            }
            Kind::Combination { .. } => {
                let x = self.start_point(z)?;
                self.eval_scaled(z, x)
            }
            Kind::Mapped { base, map } => {
                let s = base.start(z)?;
                Ok(map_state(map.as_ref(), s))
            }
        }
    }

    fn start_point<T: Field>(&self, z: T) -> Result<f64> {
        match &self.kind {
            Kind::Combination { terms } => terms[0].1.start_point(z),
            _ => Ok(self.start(z)?.x),
        }
    }

    /// Value at x with an explicit exponent (no overflow).
    pub fn eval_scaled<T: Field>(&self, z: T, x: f64) -> Result<Scaled<Vector2<T>>> {
        match &self.kind {
            Kind::Radial { spec, branch } => {
                let seed = default_seed(spec, z.modulus());
                if x <= seed {
                    if !(x > 0.0) {
                        return Err(Error::Config(format!("radial solutions are evaluated for x > 0, got {x}")));
                    }
                    return radial_value(&self.expr, spec, *branch, z, x);
                }
                let s = radial_value(&self.expr, spec, *branch, z, seed)?;
                propagate_scaled(&self.expr, z, s, x, &self.settings)
            }
            Kind::Mapped { base, map } => {
                let s = base.eval_scaled(z, map.eta_inverse(x))?;
                let mut m = map_state(map.as_ref(), s);
                m.x = x;
                Ok(m)
            }
            Kind::Combination { terms } => {
                let parts: Vec<Scaled<Vector2<T>>> =
                    terms.iter().map(|(_, h)| h.eval_scaled(z, x)).collect::<Result<_>>()?;
                let top = parts.iter().map(|p| p.log_scale).fold(f64::NEG_INFINITY, f64::max);
                let mut s = Vector2::<T>::zeros();
                for ((c, _), p) in terms.iter().zip(&parts) {
                    s += p.s * T::from_real(c * (p.log_scale - top).exp());
                }
                Ok(Scaled { x, s, log_scale: top })
            }
            _ => {
                let s = self.start(z)?;
                propagate_scaled(&self.expr, z, s, x, &self.settings)
            }
        }
    }

    /// Value at complex z; overflow is an error.
    pub fn eval(&self, z: C64, x: f64) -> Result<CVec2> {
        let s = self.eval_scaled(z, x)?;
        let v = s.value();
        if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Overflow { x })
        }
    }

    /// Value at real λ.
    pub fn eval_real(&self, lambda: f64, x: f64) -> Result<Vector2<f64>> {
        let s = self.eval_scaled(lambda, x)?;
        let v = s.value();
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Overflow { x })
        }
    }

    /// z-derivative by a contour integral.
    pub fn dz(&self, z: C64, x: f64) -> Result<CVec2> {
        let span = (x - self.left_limit()).abs().min(1e6);
        ode::dz_of(|w| self.eval(w, x), z, span)
    }
}

fn map_state<T: Field>(map: &dyn FrameMap, s: Scaled<Vector2<T>>) -> Scaled<Vector2<T>> {
    let g = map.gamma(s.x);
    let inv = Mat2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]);
    let v = Vector2::new(
        s.s[0] * T::from_real(inv[(0, 0)]) + s.s[1] * T::from_real(inv[(0, 1)]),
        s.s[0] * T::from_real(inv[(1, 0)]) + s.s[1] * T::from_real(inv[(1, 1)]),
    );
    Scaled {
        x: map.eta(s.x),
        s: v,
        log_scale: s.log_scale,
    }
}

/// Integrates `g(x, values)` over `[lo, hi]` along several handle solutions
/// sharing one expression. Near a singular left endpoint the range is split
/// into geometric shells, each started from a fresh evaluation.
pub fn integrate_handles<G>(
    sources: &[(&EntireSolutionHandle, C64)],
    lo: f64,
    hi: f64,
    g: G,
    quad: &QuadSettings,
) -> Result<C64>
where
    G: Fn(f64, &[CVec2]) -> C64 + Copy,
{
    let (first, _) = sources
        .first()
        .ok_or_else(|| Error::Config("no solutions to integrate".into()))?;
    let expr = first.expr.clone();
    let settings = first.settings;
    if hi <= lo {
        return Ok(C64::new(0.0, 0.0));
    }
    let left_limit = sources.iter().map(|(h, _)| h.left_limit()).fold(f64::NEG_INFINITY, f64::max);
    let lo = lo.max(left_limit);
    let singular = sources.iter().any(|(h, _)| h.singular_left()) && lo <= expr.interval.a;
    let run = |a: f64, b: f64| -> Result<C64> {
        let starts: Vec<Source> = sources
            .iter()
            .map(|(h, z)| h.eval(*z, a).map(|f| Source { z: *z, f }))
            .collect::<Result<_>>()?;
        Ok(integrate_along(&expr, &starts, a, b, g, quad, &settings)?.0)
    };
    if !singular {
        return run(lo, hi);
    }
    let zmax = sources.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
    let first_shell = (hi - lo).min(0.25 / (1.0 + zmax));
    let mut total = run(lo + first_shell, hi)?;
    let mut upper = lo + first_shell;
    let mut small = 0;
    for _ in 0..80 {
        let lower = lo + 0.5 * (upper - lo);
        let part = run(lower, upper)?;
        total += part;
        upper = lower;
        if part.norm() <= 1e-17 * total.norm().max(1e-300) {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok(total)
}

/// Default Volterra seed length.
pub fn default_seed(spec: &RadialSpec, zabs: f64) -> f64 {
    let s = (0.25f64).min(0.25 / (1.0 + zabs));
    if spec.b.is_finite() {
        s.min(0.5 * spec.b)
    } else {
        s
    }
}

const PANELS: usize = 50;
const NODES: usize = 12;

struct Spectral {
    rule: Rule,
    // S[i][j] = ∫_{-1}^{t_i} ℓ_j(t) dt
    integ: Vec<[f64; NODES]>,
}

fn spectral() -> &'static Spectral {
    static S: OnceLock<Spectral> = OnceLock::new();
    S.get_or_init(|| {
        let rule = gauss_legendre(NODES);
        let t = &rule.nodes;
        let lagrange = |j: usize, s: f64| -> f64 {
            let mut p = 1.0;
            for m in 0..NODES {
                if m != j {
                    p *= (s - t[m]) / (t[j] - t[m]);
                }
            }
            p
        };
        let mut integ = vec![[0.0; NODES]; NODES];
        for i in 0..NODES {
            for j in 0..NODES {
                let mut acc = 0.0;
                for (s, w) in rule.mapped(-1.0, t[i]) {
                    acc += w * lagrange(j, s);
                }
                integ[i][j] = acc;
            }
        }
        Spectral { rule, integ }
    })
}

/// Contraction diagnostics of the Volterra iteration on the seed interval.
#[derive(Debug, Clone, Serialize)]
pub struct VolterraDiagnostics {
    pub seed: f64,
    pub iterations: usize,
    /// Sup-norm difference of successive iterates.
    pub differences: Vec<f64>,
    pub retries: usize,
}

/// Rescaled solution `g` of the radial system on (0, x], iterated to a fixed
/// point: `Φ = x^κ g` (branch Φ) or `Θ = x^{-κ} h` (branch Θ, components swapped).
struct VolterraSolve<T: Field> {
    end: Vector2<T>,
    diagnostics: VolterraDiagnostics,
}

fn volterra<T: Field>(
    expr: &DiracExpression,
    spec: &RadialSpec,
    branch: RadialBranch,
    z: T,
    x_end: f64,
) -> Result<VolterraSolve<T>> {
    let kappa = spec.kappa;
    if branch == RadialBranch::Theta && kappa >= 0.5 {
        return Err(Error::Config("the Volterra Θ branch needs kappa < 1/2".into()));
    }
    let sp = spectral();
    let mut seed = x_end;
    let mut retries = 0;
    // the solution on (0, x_end] is built on the seed and propagated
    loop {
        match volterra_on(spec, branch, z, seed, sp) {
            Ok((end, iterations, differences)) => {
                let diagnostics = VolterraDiagnostics {
                    seed,
                    iterations,
                    differences,
                    retries,
                };
                if seed == x_end {
                    return Ok(VolterraSolve { end, diagnostics });
                }
                let (p, log_scale) = match branch {
                    RadialBranch::Phi => (Vector2::new(end[0], end[1]), kappa * seed.ln()),
                    RadialBranch::Theta => (Vector2::new(end[1], end[0]), -kappa * seed.ln()),
                };
                let out = propagate_scaled(
                    expr,
                    z,
                    Scaled {
                        x: seed,
                        s: p,
                        log_scale,
                    },
                    x_end,
                    &PropagationSettings::default(),
                )?;
                // back to rescaled form at x_end
                let back = match branch {
                    RadialBranch::Phi => out.value() * T::from_real((-kappa * x_end.ln()).exp()),
                    RadialBranch::Theta => {
                        let v = out.value() * T::from_real((kappa * x_end.ln()).exp());
                        Vector2::new(v[1], v[0])
                    }
                };
                return Ok(VolterraSolve { end: back, diagnostics });
            }
            Err(Error::SeedNoContraction { difference, .. }) => {
                retries += 1;
                if retries > 8 {
                    return Err(Error::SeedNoContraction { difference, seed });
                }
                seed *= 0.25;
            }
            Err(e) => return Err(e),
        }
    }
}

#[allow(clippy::type_complexity)]
fn volterra_on<T: Field>(
    spec: &RadialSpec,
    branch: RadialBranch,
    z: T,
    seed: f64,
    sp: &Spectral,
) -> Result<(Vector2<T>, usize, Vec<f64>)> {
    let kappa = spec.kappa;
    let p = match branch {
        RadialBranch::Phi => 2.0 * kappa,
        RadialBranch::Theta => -2.0 * kappa,
    };
    // panels from the innermost outward: [L_k, 2L_k], L_k = seed 2^{-(PANELS - k)}
    let n = PANELS * NODES;
    let mut xs = vec![0.0; n];
    let mut c11 = vec![T::zero(); n];
    let mut c12 = vec![T::zero(); n];
    let mut c21 = vec![T::zero(); n];
    let mut c22 = vec![T::zero(); n];
    for k in 0..PANELS {
        let l = seed * 0.5f64.powi((PANELS - k) as i32);
        for i in 0..NODES {
            let x = l + 0.5 * l * (sp.rule.nodes[i] + 1.0);
            let idx = k * NODES + i;
            xs[idx] = x;
            let qs = spec.q_sc.eval(x);
            let qa = spec.q_am.eval(x);
            if !(qs.is_finite() && qa.is_finite()) {
                return Err(Error::NotFinite { x });
            }
            let (qs, qa) = (T::from_real(qs), T::from_real(qa));
            match branch {
                RadialBranch::Phi => {
                    c12[idx] = z + qs;
                    c11[idx] = qa;
                    c21[idx] = z - qs;
                    c22[idx] = qa;
                }
                RadialBranch::Theta => {
                    c12[idx] = -(z - qs);
                    c11[idx] = -qa;
                    c21[idx] = -(z + qs);
                    c22[idx] = -qa;
                }
            }
        }
    }
    let mut g1 = vec![T::zero(); n];
    let mut g2 = vec![T::one(); n];
    let mut end = Vector2::new(T::zero(), T::one());
    let mut differences = Vec::new();
    for it in 1..=200 {
        let mut n1 = vec![T::zero(); n];
        let mut n2 = vec![T::zero(); n];
        // D = L^{-p} ∫_0^L s^p F1, I2 = ∫_0^L F2
        let mut d = T::zero();
        let mut i2 = T::zero();
        for k in 0..PANELS {
            let l = seed * 0.5f64.powi((PANELS - k) as i32);
            let half = 0.5 * l;
            let mut f1 = [T::zero(); NODES];
            let mut f2 = [T::zero(); NODES];
            for i in 0..NODES {
                let idx = k * NODES + i;
                let w = (xs[idx] / l).powf(p);
                f1[i] = (c12[idx] * g2[idx] - c11[idx] * g1[idx]) * T::from_real(w);
                f2[i] = -c21[idx] * g1[idx] + c22[idx] * g2[idx];
            }
            for i in 0..NODES {
                let idx = k * NODES + i;
                let mut a1 = T::zero();
                let mut a2 = T::zero();
                for j in 0..NODES {
                    let s = T::from_real(sp.integ[i][j] * half);
                    a1 += f1[j] * s;
                    a2 += f2[j] * s;
                }
                let r = (l / xs[idx]).powf(p);
                n1[idx] = (d + a1) * T::from_real(r);
                n2[idx] = T::one() + i2 + a2;
            }
            let mut full1 = T::zero();
            let mut full2 = T::zero();
            for j in 0..NODES {
                let w = T::from_real(sp.rule.weights[j] * half);
                full1 += f1[j] * w;
                full2 += f2[j] * w;
            }
            // advance to the next panel edge 2L
            d = (d + full1) * T::from_real(0.5f64.powf(p));
            i2 += full2;
        }
        let new_end = Vector2::new(d, T::one() + i2);
        let mut diff: f64 = 0.0;
        for idx in 0..n {
            diff = diff.max((n1[idx] - g1[idx]).modulus()).max((n2[idx] - g2[idx]).modulus());
        }
        diff = diff.max((new_end - end).iter().map(|v| v.modulus()).fold(0.0, f64::max));
        g1 = n1;
        g2 = n2;
        end = new_end;
        differences.push(diff);
        if !diff.is_finite() {
            return Err(Error::SeedNoContraction { difference: diff, seed });
        }
        if diff < 1e-13 {
            return Ok((end, it, differences));
        }
        let m = differences.len();
        if m >= 4 && differences[m - 1] > 0.9 * differences[m - 4] {
            return Err(Error::SeedNoContraction { difference: diff, seed });
        }
    }
    Err(Error::SeedNoContraction {
        difference: *differences.last().unwrap_or(&f64::NAN),
        seed,
    })
}

fn radial_value<T: Field>(
    expr: &DiracExpression,
    spec: &RadialSpec,
    branch: RadialBranch,
    z: T,
    x: f64,
) -> Result<Scaled<Vector2<T>>> {
    let seed = default_seed(spec, z.modulus()).min(x);
    let sol = volterra(expr, spec, branch, z, seed)?;
    let (s, log_scale) = match branch {
        RadialBranch::Phi => (sol.end, spec.kappa * seed.ln()),
        RadialBranch::Theta => (Vector2::new(sol.end[1], sol.end[0]), -spec.kappa * seed.ln()),
    };
    let start = Scaled { x: seed, s, log_scale };
    if seed == x {
        return Ok(start);
    }
    propagate_scaled(expr, z, start, x, &PropagationSettings::default())
}

/// Volterra contraction diagnostics for the radial Φ at z.
pub fn volterra_diagnostics(spec: &RadialSpec, z: C64) -> Result<VolterraDiagnostics> {
    let seed = default_seed(spec, z.norm());
    let expr = crate::coefficients::make_radial(spec)?;
    Ok(volterra(&expr, spec, RadialBranch::Phi, z, seed)?.diagnostics)
}

/// The radial solution Φ with `Φ₂ = x^κ(1 + o(1))`, `Φ₁ = o(x^κ)` at 0.
pub fn singular_phi(spec: &RadialSpec, settings: &PropagationSettings) -> Result<EntireSolutionHandle> {
    let expr = Arc::new(crate::coefficients::make_radial(spec)?);
    Ok(EntireSolutionHandle {
        expr,
        kind: Kind::Radial {
            spec: Arc::new(spec.clone()),
            branch: RadialBranch::Phi,
        },
        settings: *settings,
    })
}

/// Pair (Θ, Φ) with `W(Θ, Φ) = 1`.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    pub theta: EntireSolutionHandle,
    pub phi: EntireSolutionHandle,
    /// Interior point used for matching and normalization.
    pub anchor: f64,
    pub left: LeftData,
}

/// How the left end of a frame is pinned.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftData {
    /// Regular endpoint with a boundary condition.
    Condition(BoundaryCondition),
    /// Regular endpoint with explicit data, `W(θ, φ) = 1`.
    Frame { phi: [f64; 2], theta: [f64; 2] },
    /// Limit-circle endpoint regularized at `a + δ`.
    LimitCircle { condition: BoundaryCondition, delta: f64, differences: Vec<f64> },
    /// The radial family with Volterra data at 0.
    Radial { kappa: f64 },
    /// Transported from another frame.
    Mapped,
}

impl FundamentalSystem {
    pub fn expr(&self) -> &DiracExpression {
        self.phi.expr()
    }

    /// Frame for the transformed expression, `Φ̃(z, η(x)) = Γ(x)⁻¹Φ(z, x)`.
    pub fn mapped(&self, image: Arc<DiracExpression>, map: Arc<dyn FrameMap>) -> FundamentalSystem {
        let anchor = map.eta(self.anchor);
        FundamentalSystem {
            theta: self.theta.mapped(image.clone(), map.clone()),
            phi: self.phi.mapped(image, map),
            anchor,
            left: LeftData::Mapped,
        }
    }

    /// `Θ → Θ + hΦ`.
    pub fn shifted(&self, h: f64) -> Result<FundamentalSystem> {
        Ok(FundamentalSystem {
            theta: EntireSolutionHandle::combination(vec![(1.0, self.theta.clone()), (h, self.phi.clone())])?,
            phi: self.phi.clone(),
            anchor: self.anchor,
            left: self.left.clone(),
        })
    }

    /// `W(Θ(z₁), Φ(z₂))` at x.
    pub fn cross_wronskian(&self, z1: C64, z2: C64, x: f64) -> Result<C64> {
        Ok(wronskian(&self.theta.eval(z1, x)?, &self.phi.eval(z2, x)?))
    }
}

/// Frame pinned by explicit data at a regular left endpoint.
pub fn frame_from_data(
    expr: Arc<DiracExpression>,
    phi: Vector2<f64>,
    theta: Vector2<f64>,
    anchor: f64,
    settings: &PropagationSettings,
) -> Result<FundamentalSystem> {
    let w = theta[0] * phi[1] - theta[1] * phi[0];
    if (w - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("frame data must satisfy W(theta, phi) = 1, got {w}")));
    }
    let a = expr.interval.a;
    Ok(FundamentalSystem {
        theta: EntireSolutionHandle::anchored(expr.clone(), a, theta, *settings)?,
        phi: EntireSolutionHandle::anchored(expr, a, phi, *settings)?,
        anchor,
        left: LeftData::Frame {
            phi: [phi[0], phi[1]],
            theta: [theta[0], theta[1]],
        },
    })
}

/// Real entire fundamental system for a regular or limit-circle left endpoint.
///
/// Regular: z-independent data at a. Limit circle: data at `a + δ`,
/// normalized at z = 0 and refined in δ until the frame at the anchor
/// stabilizes. Limit point: refused.
pub fn fundamental_system(
    expr: Arc<DiracExpression>,
    bc: &BoundaryCondition,
    anchor: f64,
    settings: &PropagationSettings,
) -> Result<FundamentalSystem> {
    if bc.endpoint != Endpoint::Left {
        return Err(Error::Config("fundamental_system needs a left boundary condition".into()));
    }
    let u = bc
        .data()
        .ok_or_else(|| Error::Endpoint("limit-point left endpoint: use the radial singular Φ instead".into()))?;
    if !expr.interval.contains(anchor) {
        return Err(Error::Config(format!("anchor {anchor} is not interior")));
    }
    let a = expr.interval.a;
    let regular = a.is_finite() && expr.endpoint_integrability(true, anchor, 40)?.converged;
    if regular {
        let mut fs = frame_from_data(expr, u, companion_data(&u), anchor, settings)?;
        fs.left = LeftData::Condition(*bc);
        return Ok(fs);
    }
    let class = classify_endpoint(&expr, Endpoint::Left, C64::new(0.0, 1.0), settings)?;
    match class.verdict {
        Verdict::LimitCircle => limit_circle_frame(expr, bc, u, anchor, settings),
        Verdict::LimitPoint => Err(Error::Endpoint(
            "limit-point left endpoint: use the radial singular Φ instead".into(),
        )),
        _ => Err(Error::Endpoint(
            "left endpoint classification is inconclusive; pass an explicit frame".into(),
        )),
    }
}

/// δ-regularized frame at a limit-circle left endpoint, without classification.
///
/// Only Φ is refined: Θ taken at the final δ is real, entire and satisfies
/// `W(Θ, Φ) = 1`, which fixes M up to a real entire summand.
pub fn limit_circle_frame(
    expr: Arc<DiracExpression>,
    bc: &BoundaryCondition,
    u: Vector2<f64>,
    anchor: f64,
    settings: &PropagationSettings,
) -> Result<FundamentalSystem> {
    let a = expr.interval.a;
    if !a.is_finite() {
        return Err(Error::Endpoint("limit-circle frames need a finite endpoint".into()));
    }
    let theta_data = companion_data(&u);
    let probe = C64::new(0.0, 1.0);
    let mut delta = 0.05 * (anchor - a);
    let mut prev: Option<CVec2> = None;
    let mut differences = Vec::new();
    for _ in 0..60 {
        let x0 = a + delta;
        let phi_d = EntireSolutionHandle::anchored(expr.clone(), x0, u, *settings)?;
        let theta_d = EntireSolutionHandle::anchored(expr.clone(), x0, theta_data, *settings)?;
        let p0 = phi_d.eval_real(0.0, anchor)?;
        let t0 = theta_d.eval_real(0.0, anchor)?;
        let s = p0.norm();
        let c = (s * t0).dot(&(p0 / s)) / (p0 / s).norm_squared();
        let phi = EntireSolutionHandle::combination(vec![(1.0 / s, phi_d.clone())])?;
        let theta = EntireSolutionHandle::combination(vec![(s, theta_d), (-c / s, phi_d)])?;
        let pv = phi.eval(probe, anchor)?;
        if let Some(pp) = prev {
            let d = (pv - pp).norm() / pv.norm();
            differences.push(d);
            if d < 1e-10 {
                return Ok(FundamentalSystem {
                    theta,
                    phi,
                    anchor,
                    left: LeftData::LimitCircle {
                        condition: *bc,
                        delta,
                        differences,
                    },
                });
            }
        }
        prev = Some(pv);
        delta *= settings.approach_ratio;
    }
    Err(Error::Endpoint(format!(
        "limit-circle frame did not stabilize; differences {differences:?}"
    )))
}

/// Frame of the radial family: Φ from the Volterra seed; Θ from the Volterra
/// seed when κ < 1/2, otherwise the companion with `W(Θ, Φ) = 1` at the anchor.
pub fn radial_frame(spec: &RadialSpec, anchor: f64, settings: &PropagationSettings) -> Result<FundamentalSystem> {
    let phi = singular_phi(spec, settings)?;
    if !phi.expr().interval.contains(anchor) {
        return Err(Error::Config(format!("anchor {anchor} is not interior")));
    }
    let theta = if spec.kappa < 0.5 {
        EntireSolutionHandle {
            expr: phi.expr.clone(),
            kind: Kind::Radial {
                spec: Arc::new(spec.clone()),
                branch: RadialBranch::Theta,
            },
            settings: *settings,
        }
    } else {
        EntireSolutionHandle {
            expr: phi.expr.clone(),
            kind: Kind::Companion {
                phi: Box::new(phi.clone()),
                c0: anchor,
            },
            settings: *settings,
        }
    };
    Ok(FundamentalSystem {
        theta,
        phi,
        anchor,
        left: LeftData::Radial { kappa: spec.kappa },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_radial, Interval};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn free(b: f64) -> Arc<DiracExpression> {
        Arc::new(DiracExpression::free(Interval::new(0.0, b).unwrap()))
    }

    #[test]
    fn angle_reduction() {
        let bc = BoundaryCondition::angle(Endpoint::Left, 3.5 * std::f64::consts::PI).unwrap();
        match bc.kind {
            BcKind::Angle(a) => assert!((a - 0.5 * std::f64::consts::PI).abs() < 1e-12),
            _ => unreachable!(),
        }
        assert!(BoundaryCondition::angle(Endpoint::Left, f64::NAN).is_err());
    }

    #[test]
    fn classify_free() {
        let s = PropagationSettings::default();
        let half = DiracExpression::free(Interval::new(0.0, f64::INFINITY).unwrap());
        let r = classify_endpoint(&half, Endpoint::Right, c(0.0, 1.0), &s).unwrap();
        assert_eq!(r.verdict, Verdict::LimitPoint);
        let l = classify_endpoint(&half, Endpoint::Left, c(0.0, 1.0), &s).unwrap();
        assert_eq!(l.verdict, Verdict::Regular);
        let unit = DiracExpression::free(Interval::new(0.0, 1.0).unwrap());
        assert_eq!(classify_endpoint(&unit, Endpoint::Right, c(0.0, 1.0), &s).unwrap().verdict, Verdict::Regular);
    }

    #[test]
    fn classify_radial() {
        let s = PropagationSettings::default();
        let k1 = make_radial(&RadialSpec::pure(1.0, 2.0)).unwrap();
        assert_eq!(classify_endpoint(&k1, Endpoint::Left, c(0.0, 1.0), &s).unwrap().verdict, Verdict::LimitPoint);
        let k03 = make_radial(&RadialSpec::pure(0.3, 2.0)).unwrap();
        assert_eq!(
            classify_endpoint(&k03, Endpoint::Left, c(0.0, 1.0), &s).unwrap().verdict,
            Verdict::LimitCircle
        );
    }

    #[test]
    fn free_frame_closed_form() {
        let s = PropagationSettings::default();
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.0).unwrap();
        let fs = fundamental_system(free(5.0), &bc, 1.0, &s).unwrap();
        let z = c(0.8, 0.3);
        let x = 2.2;
        let zx = z * x;
        assert!((fs.phi.eval(z, x).unwrap() - CVec2::new(zx.sin(), zx.cos())).norm() < 1e-12);
        assert!((fs.theta.eval(z, x).unwrap() - CVec2::new(zx.cos(), -zx.sin())).norm() < 1e-12);
        let w = fs.cross_wronskian(c(0.3, 1.0), c(-2.0, 0.5), 0.0).unwrap();
        assert!((w - 1.0).norm() < 1e-15);
        assert_eq!(fs.cross_wronskian(c(0.0, 0.0), c(0.0, 0.0), 3.0).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn radial_zero_energy_exact() {
        let s = PropagationSettings::default();
        for kappa in [0.3, 1.0, 2.0] {
            let phi = singular_phi(&RadialSpec::pure(kappa, f64::INFINITY), &s).unwrap();
            for x in [1e-3, 0.1, 0.7, 3.0] {
                let v = phi.eval(c(0.0, 0.0), x).unwrap();
                assert!(v[0].norm() < 1e-14 * x.powf(kappa), "kappa {kappa} x {x}: {v}");
                assert!((v[1].re / x.powf(kappa) - 1.0).abs() < 1e-11, "kappa {kappa} x {x}: {v}");
            }
        }
    }

    #[test]
    fn radial_kappa_zero_is_free() {
        let s = PropagationSettings::default();
        let phi = singular_phi(&RadialSpec::pure(0.0, f64::INFINITY), &s).unwrap();
        let z = c(1.7, -0.4);
        for x in [0.01, 0.2, 2.0] {
            let v = phi.eval(z, x).unwrap();
            let zx = z * x;
            assert!((v - CVec2::new(zx.sin(), zx.cos())).norm() < 1e-11, "{x}");
        }
    }

    #[test]
    fn radial_theta_wronskian() {
        let s = PropagationSettings::default();
        let spec = RadialSpec::pure(0.3, f64::INFINITY);
        let fs = radial_frame(&spec, 1.0, &s).unwrap();
        for z in [c(0.0, 0.0), c(1.0, 1.0), c(-2.0, 0.5)] {
            for x in [1e-3, 0.5, 1.0] {
                let w = fs.cross_wronskian(z, z, x).unwrap();
                assert!((w - 1.0).norm() < 1e-10, "{z} {x} {w}");
            }
        }
    }

    #[test]
    fn limit_circle_frame_matches_volterra() {
        let s = PropagationSettings::default();
        let spec = RadialSpec::pure(0.3, 2.0);
        let expr = Arc::new(make_radial(&spec).unwrap());
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.0).unwrap();
        let lc = fundamental_system(expr, &bc, 1.0, &s).unwrap();
        assert!(matches!(lc.left, LeftData::LimitCircle { .. }));
        let vol = singular_phi(&spec, &s).unwrap();
        let z = c(0.5, 0.7);
        let a = lc.phi.eval(z, 1.5).unwrap();
        let b = vol.eval(z, 1.5).unwrap();
        // same solution up to a z-independent factor fixed at z = 0
        let norm0 = vol.eval(c(0.0, 0.0), 1.0).unwrap().norm();
        let b = b.map(|v| v / norm0);
        assert!((a - b).norm() < 1e-7 * a.norm(), "{a} {b}");
    }
}
