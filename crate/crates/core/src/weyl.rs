//! Weyl solution and Weyl function, eigenvalues, spectral measure and the
//! two-spectra diagnostic.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{angle_data, EntireSolutionHandle, FundamentalSystem, LeftData};
use crate::coefficients::{j_matrix, DiracExpression};
use crate::error::{Error, Result};
use crate::ode::{propagate_scaled, wronskian, CVec2, PropagationSettings, QuadSettings, Scaled, C64};
use crate::quadrature::{adaptive, richardson_to_zero};

/// Condition imposed at a truncation point of a limit-point end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Decaying eigenvector of the frozen generator at the truncation point.
    Radiation,
    Angle(f64),
}

/// How the solution at the right end is selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RightData {
    /// Regular endpoint b with `f₁ cos β + f₂ sin β = 0`.
    Angle(f64),
    /// Regular endpoint b with `W(f, u) = 0`.
    Reference([f64; 2]),
    /// Limit-circle endpoint b, regularized at `b - δ` with an angle.
    LimitCircle { angle: f64 },
    /// Limit-point end: truncation points `x_k` from `seed` toward the end.
    LimitPoint { seed: f64, condition: Truncation },
    /// Replace the right end by a regular endpoint at x with `W(f, u) = 0`.
    Truncate { x: f64, u: [f64; 2] },
}

impl RightData {
    pub fn truncate_angle(x: f64, angle: f64) -> RightData {
        let u = angle_data(angle);
        RightData::Truncate { x, u: [u[0], u[1]] }
    }

    /// True when the problem with this right data has discrete spectrum by construction.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, RightData::LimitPoint { .. })
    }
}

/// ψ(z) at the matching point with the truncation history.
#[derive(Debug, Clone, Serialize)]
pub struct WeylSolution {
    pub x: f64,
    #[serde(skip)]
    pub psi: CVec2,
    pub truncation: Option<f64>,
    pub differences: Vec<f64>,
}

const LP_LEVELS: usize = 14;
const LP_TOL: f64 = 1e-11;
const LC_TOL: f64 = 1e-11;

fn unit(v: CVec2) -> CVec2 {
    let n = v.norm();
    v.map(|c| c / n)
}

fn projective_distance(a: &CVec2, b: &CVec2) -> f64 {
    wronskian(a, b).norm() / (a.norm() * b.norm())
}

/// Decaying eigenvector of the generator frozen at x.
pub fn radiation_data(expr: &DiracExpression, z: C64, x: f64) -> Result<CVec2> {
    let frozen = |z: C64| -> (C64, [C64; 4]) {
        let jr = -(j_matrix() * expr.r_at(x));
        let jq = j_matrix() * expr.q_at(x);
        let a = [
            z * jr[(0, 0)] + jq[(0, 0)],
            z * jr[(0, 1)] + jq[(0, 1)],
            z * jr[(1, 0)] + jq[(1, 0)],
            z * jr[(1, 1)] + jq[(1, 1)],
        ];
        let det = a[0] * a[3] - a[1] * a[2];
        let half = (a[0] + a[3]) * 0.5;
        (half * half - det, a)
    };
    let (disc, a) = frozen(z);
    let half = (a[0] + a[3]) * 0.5;
    let mut mu = disc.sqrt();
    if mu.re.abs() < 1e-12 * mu.norm().max(1e-300) {
        // on the continuum take the limit from the upper half-plane
        let (d2, _) = frozen(z + C64::new(0.0, 1e-6 * (1.0 + z.norm())));
        let m2 = d2.sqrt();
        let m2 = if m2.re > 0.0 { -m2 } else { m2 };
        if (mu - m2).norm() > (mu + m2).norm() {
            mu = -mu;
        }
    } else if mu.re > 0.0 {
        mu = -mu;
    }
    let eig = half + mu;
    let v1 = CVec2::new(a[1], eig - a[0]);
    let v2 = CVec2::new(eig - a[3], a[2]);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    if v.norm() == 0.0 || !v.norm().is_finite() {
        return Err(Error::Config(format!("frozen generator at {x} has no decaying direction")));
    }
    Ok(unit(v))
}

fn real_data(u: Vector2<f64>) -> CVec2 {
    u.map(|v| C64::new(v, 0.0))
}

fn from_point(
    expr: &DiracExpression,
    z: C64,
    x0: f64,
    data: CVec2,
    to: f64,
    settings: &PropagationSettings,
) -> Result<CVec2> {
    let s = propagate_scaled(
        expr,
        z,
        Scaled {
            x: x0,
            s: data,
            log_scale: 0.0,
        },
        to,
        settings,
    )?;
    Ok(unit(s.s))
}

/// The solution selected by the right data, at the matching point.
pub fn weyl_solution(
    expr: &DiracExpression,
    z: C64,
    right: &RightData,
    match_x: f64,
    settings: &PropagationSettings,
) -> Result<WeylSolution> {
    let b = expr.interval.b;
    let regular_at = |x: f64, u: Vector2<f64>| -> Result<WeylSolution> {
        if !x.is_finite() || x <= match_x {
            return Err(Error::Config(format!("right condition point {x} must be finite and beyond {match_x}")));
        }
        Ok(WeylSolution {
            x: match_x,
            psi: from_point(expr, z, x, real_data(u), match_x, settings)?,
            truncation: None,
            differences: Vec::new(),
        })
    };
    match *right {
        RightData::Angle(beta) => regular_at(b, angle_data(beta)),
        RightData::Reference(u) => regular_at(b, Vector2::new(u[0], u[1])),
        RightData::Truncate { x, u } => regular_at(x, Vector2::new(u[0], u[1])),
        RightData::LimitCircle { angle } => {
            let delta = limit_circle_delta(expr, z, angle, match_x, settings)?;
            let mut w = regular_at(b - delta.0, angle_data(angle))?;
            w.truncation = Some(b - delta.0);
            w.differences = delta.1;
            Ok(w)
        }
        RightData::LimitPoint { seed, condition } => {
            let x0 = if seed > match_x { seed } else { match_x + seed.abs().max(1.0) };
            if b.is_finite() && x0 >= b {
                return Err(Error::Config(format!("truncation seed {x0} lies beyond the endpoint {b}")));
            }
            let mut prev: Option<CVec2> = None;
            let mut differences = Vec::new();
            for k in 0..LP_LEVELS {
                let xk = if b.is_finite() {
                    b - (b - x0) * 0.5f64.powi(k as i32)
                } else {
                    match_x + (x0 - match_x) * 2f64.powi(k as i32)
                };
                let data = match condition {
                    Truncation::Radiation => radiation_data(expr, z, xk)?,
                    Truncation::Angle(beta) => real_data(angle_data(beta)),
                };
                let psi = from_point(expr, z, xk, data, match_x, settings)?;
                if let Some(p) = prev {
                    let d = projective_distance(&p, &psi);
                    differences.push(d);
                    if d < LP_TOL {
                        return Ok(WeylSolution {
                            x: match_x,
                            psi,
                            truncation: Some(xk),
                            differences,
                        });
                    }
                }
                prev = Some(psi);
            }
            Err(Error::WeylNoConvergence { differences })
        }
    }
}

/// δ for a limit-circle right end at which ψ(z) at the match point has settled.
fn limit_circle_delta(
    expr: &DiracExpression,
    z: C64,
    angle: f64,
    match_x: f64,
    settings: &PropagationSettings,
) -> Result<(f64, Vec<f64>)> {
    let b = expr.interval.b;
    if !b.is_finite() {
        return Err(Error::Config("limit-circle right data needs a finite endpoint".into()));
    }
    let mut delta = 0.05 * (b - match_x);
    let mut prev: Option<CVec2> = None;
    let mut differences = Vec::new();
    for _ in 0..60 {
        let psi = from_point(expr, z, b - delta, real_data(angle_data(angle)), match_x, settings)?;
        if let Some(p) = prev {
            let d = projective_distance(&p, &psi);
            differences.push(d);
            if d < LC_TOL {
                return Ok((delta, differences));
            }
        }
        prev = Some(psi);
        delta *= settings.approach_ratio;
    }
    Err(Error::WeylNoConvergence { differences })
}

/// `M(z) = -W(Θ, ψ)/W(Φ, ψ)` for a fundamental system and right data.
#[derive(Debug, Clone)]
pub struct WeylFunction {
    pub frame: FundamentalSystem,
    pub right: RightData,
    pub match_x: f64,
    pub settings: PropagationSettings,
}

/// One evaluation of M with diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct WeylValue {
    pub re: f64,
    pub im: f64,
    pub m_re: f64,
    pub m_im: f64,
    pub truncation: Option<f64>,
    pub differences: Vec<f64>,
}

impl WeylFunction {
    pub fn new(frame: FundamentalSystem, right: RightData, settings: PropagationSettings) -> Result<Self> {
        settings.validate()?;
        let match_x = frame.anchor;
        Ok(WeylFunction {
            frame,
            right,
            match_x,
            settings,
        })
    }

    pub fn with_match(mut self, x: f64) -> Result<Self> {
        if !self.frame.expr().interval.contains(x) {
            return Err(Error::Config(format!("matching point {x} is not interior")));
        }
        self.match_x = x;
        Ok(self)
    }

    pub fn expr(&self) -> &DiracExpression {
        self.frame.expr()
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.eval_detailed(z)?.0)
    }

    pub fn eval_detailed(&self, z: C64) -> Result<(C64, WeylSolution)> {
        let ws = weyl_solution(self.expr(), z, &self.right, self.match_x, &self.settings)?;
        let th = self.frame.theta.eval_scaled(z, self.match_x)?;
        let ph = self.frame.phi.eval_scaled(z, self.match_x)?;
        let wp = wronskian(&ph.s, &ws.psi);
        let wt = wronskian(&th.s, &ws.psi);
        if wp.norm() <= 1e-13 * ph.s.norm() * ws.psi.norm() {
            return Err(Error::AtEigenvalue {
                re: z.re,
                im: z.im,
                wronskian: wp.norm() / ph.s.norm(),
            });
        }
        let m = -wt / wp * (th.log_scale - ph.log_scale).exp();
        Ok((m, ws))
    }

    pub fn value(&self, z: C64) -> Result<WeylValue> {
        let (m, ws) = self.eval_detailed(z)?;
        Ok(WeylValue {
            re: z.re,
            im: z.im,
            m_re: m.re,
            m_im: m.im,
            truncation: ws.truncation,
            differences: ws.differences,
        })
    }

    /// Parallel evaluation at several points.
    pub fn eval_many(&self, zs: &[C64]) -> Vec<Result<C64>> {
        zs.par_iter().map(|z| self.eval(*z)).collect()
    }

    /// Real characteristic function whose zeros are the eigenvalues, scaled
    /// to be bounded: `W(Φ, u)/|Φ|` at the right condition point.
    pub fn characteristic(&self) -> Result<Characteristic> {
        Characteristic::new(&self.frame.phi, &self.right, self.match_x)
    }
}

/// Real λ ↦ `W(Φ(λ), u)/(|Φ||u|)`, zero exactly at eigenvalues.
#[derive(Debug, Clone)]
pub struct Characteristic {
    phi: EntireSolutionHandle,
    at: f64,
    data: Vector2<f64>,
}

impl Characteristic {
    pub fn new(phi: &EntireSolutionHandle, right: &RightData, match_x: f64) -> Result<Self> {
        let expr = phi.expr();
        let b = expr.interval.b;
        let (at, data) = match *right {
            RightData::Angle(beta) => (b, angle_data(beta)),
            RightData::Reference(u) => (b, Vector2::new(u[0], u[1])),
            RightData::Truncate { x, u } => (x, Vector2::new(u[0], u[1])),
            RightData::LimitCircle { angle } => {
                let (delta, _) = limit_circle_delta(expr, C64::new(0.0, 1.0), angle, match_x, phi.settings())?;
                (b - delta, angle_data(angle))
            }
            RightData::LimitPoint { .. } => {
                return Err(Error::Config(
                    "eigenvalues of a limit-point problem need a truncation override".into(),
                ))
            }
        };
        if !at.is_finite() {
            return Err(Error::Config("the right condition point must be finite".into()));
        }
        Ok(Characteristic {
            phi: phi.clone(),
            at,
            data: data / data.norm(),
        })
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        let s = self.phi.eval_scaled(lambda, self.at)?;
        let w = s.s[0] * self.data[1] - s.s[1] * self.data[0];
        Ok(w / s.s.norm())
    }
}

/// Brent's method on a sign-changing bracket.
pub fn brent<F>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Config("root bracket without a sign change".into()));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b)?;
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSettings {
    pub points_per_unit: f64,
    /// Absolute root tolerance relative to `max(1, |λ|)`.
    pub xtol: f64,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings {
            points_per_unit: 64.0,
            xtol: 1e-14,
        }
    }
}

/// Eigenvalues in a window.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub window: [f64; 2],
    pub eigenvalues: Vec<f64>,
    /// `|W(Φ, u)|/|Φ|` at each eigenvalue.
    pub residuals: Vec<f64>,
    /// Local minima of the characteristic function without a sign change.
    pub suspected_double: Vec<[f64; 2]>,
    pub grid_points: usize,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,lambda,residual\n");
        for (k, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            out.push_str(&format!("{k},{l:.16e},{r:.16e}\n"));
        }
        out
    }
}

/// Eigenvalues of the problem `(Φ, right)` in `[lo, hi]`.
pub fn eigenvalues(
    phi: &EntireSolutionHandle,
    right: &RightData,
    window: (f64, f64),
    settings: &SpectrumSettings,
) -> Result<Spectrum> {
    let ch = Characteristic::new(phi, right, phi.expr().interval.interior_point())?;
    eigenvalues_of(&ch, window, settings)
}

pub fn eigenvalues_of(ch: &Characteristic, window: (f64, f64), settings: &SpectrumSettings) -> Result<Spectrum> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("bad window [{lo}, {hi}]")));
    }
    if !(settings.points_per_unit > 0.0) {
        return Err(Error::Config("points per unit must be positive".into()));
    }
    let h = 1.0 / settings.points_per_unit;
    let n = ((hi - lo) / h).ceil() as usize + 3;
    let grid: Vec<f64> = (0..n).map(|j| lo + (j as f64 - 1.0 + 0.37) * h).collect();
    let values: Vec<f64> = grid.par_iter().map(|&l| ch.eval(l)).collect::<Result<_>>()?;
    let f = |l: f64| ch.eval(l);
    let xtol = |l: f64| settings.xtol * l.abs().max(1.0);
    let mut roots = Vec::new();
    let mut suspected = Vec::new();
    for j in 0..n - 1 {
        let (a, b, fa, fb) = (grid[j], grid[j + 1], values[j], values[j + 1]);
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(brent(f, a, b, fa, fb, xtol(a))?);
        }
        if j >= 1 {
            let (fl, fm, fr) = (values[j - 1], fa, fb);
            let same = fl.signum() == fm.signum() && fm.signum() == fr.signum() && fm != 0.0;
            if same && fm.abs() < fl.abs() && fm.abs() < fr.abs() && fm.abs() < 0.1 * fl.abs().max(fr.abs()) {
                let (lm, vm) = golden_min(|l| Ok(f(l)?.abs()), grid[j - 1], grid[j + 1])?;
                let sm = f(lm)?;
                if sm != 0.0 && sm.signum() != fm.signum() {
                    roots.push(brent(f, grid[j - 1], lm, fl, sm, xtol(lm))?);
                    roots.push(brent(f, lm, grid[j + 1], sm, fr, xtol(lm))?);
                } else if vm < 1e-6 {
                    suspected.push([lm, vm]);
                }
            }
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 4.0 * xtol(*a));
    roots.retain(|l| *l >= lo && *l <= hi);
    let residuals = roots.iter().map(|&l| ch.eval(l).map(f64::abs)).collect::<Result<_>>()?;
    suspected.retain(|s| s[0] >= lo && s[0] <= hi);
    Ok(Spectrum {
        window: [lo, hi],
        eigenvalues: roots,
        residuals,
        suspected_double: suspected,
        grid_points: n,
    })
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..60 {
        if (b - a).abs() < 1e-13 * a.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSettings {
    /// Offsets ε of `M(λ + iε)`, extrapolated to 0.
    pub eps: Vec<f64>,
    /// Density samples across the window (0 disables).
    pub density_points: usize,
    /// Compare each atom with `1/∫ΦᵀRΦ`.
    pub norming_check: bool,
    /// Heights y for `m_c = lim M(iy)/(iy)`.
    pub mc_heights: Vec<f64>,
    pub spectrum: SpectrumSettings,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        MeasureSettings {
            eps: vec![1e-2, 1e-3, 1e-4],
            density_points: 101,
            norming_check: true,
            mc_heights: vec![1e2, 1e3, 1e4],
            spectrum: SpectrumSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Atom {
    pub lambda: f64,
    pub weight: f64,
    /// `1/∫ΦᵀRΦ` when computed.
    pub norming_weight: Option<f64>,
    /// Spread of the ε-samples `ε Im M(λ + iε)`.
    pub samples: Vec<f64>,
    /// Set when the norming cross-check disagrees by more than 1%.
    pub flagged: bool,
}

/// Atoms, density samples and the linear coefficient of a spectral measure.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    pub window: [f64; 2],
    pub atoms: Vec<Atom>,
    /// `(λ, dρ_ac/dλ)`.
    pub density: Vec<[f64; 2]>,
    /// Most negative density sample before clamping.
    pub density_floor: f64,
    pub m_c: Option<f64>,
    pub eps: Vec<f64>,
    pub notes: Vec<String>,
}

impl SpectralMeasure {
    pub fn atoms_csv(&self) -> String {
        let mut out = String::from("lambda,weight,norming_weight,flagged\n");
        for a in &self.atoms {
            let nw = a.norming_weight.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!("{:.16e},{:.16e},{nw},{}\n", a.lambda, a.weight, a.flagged));
        }
        out
    }

    pub fn density_csv(&self) -> String {
        let mut out = String::from("lambda,density\n");
        for d in &self.density {
            out.push_str(&format!("{:.16e},{:.16e}\n", d[0], d[1]));
        }
        out
    }

    /// Total atom mass in `[lo, hi]`.
    pub fn atom_mass(&self, lo: f64, hi: f64) -> f64 {
        self.atoms.iter().filter(|a| a.lambda >= lo && a.lambda <= hi).map(|a| a.weight).sum()
    }
}

fn atom_weight(weyl: &WeylFunction, lambda: f64, eps: &[f64]) -> Result<(f64, Vec<f64>)> {
    let samples: Vec<f64> = eps
        .iter()
        .map(|&e| weyl.eval(C64::new(lambda, e)).map(|m| e * m.im))
        .collect::<Result<_>>()?;
    Ok((richardson_to_zero(eps, &samples), samples))
}

/// `1/∫ΦᵀRΦ` at an eigenvalue.
pub fn norming_weight(weyl: &WeylFunction, lambda: f64) -> Result<f64> {
    let phi = &weyl.frame.phi;
    let expr = weyl.expr();
    let a = expr.interval.a;
    let z = C64::new(lambda, 0.0);
    let quad = QuadSettings::default();
    let g = |x: f64, v: &[CVec2]| crate::ode::bilinear(&v[0], &expr.r_at(x), &v[0]);
    let end = match weyl.right {
        RightData::Angle(_) | RightData::Reference(_) => Some(expr.interval.b),
        RightData::Truncate { x, .. } => Some(x),
        RightData::LimitCircle { angle } => {
            let (delta, _) = limit_circle_delta(expr, C64::new(0.0, 1.0), angle, weyl.match_x, &weyl.settings)?;
            Some(expr.interval.b - delta)
        }
        RightData::LimitPoint { .. } => None,
    };
    let total = match end {
        Some(b) => crate::boundary::integrate_handles(&[(phi, z)], a, b, g, &quad)?.re,
        None => {
            let b = expr.interval.b;
            let mut lower = weyl.match_x;
            let mut total = crate::boundary::integrate_handles(&[(phi, z)], a, lower, g, &quad)?.re;
            let mut step = 1.0;
            for _ in 0..40 {
                let upper = if b.is_finite() { b - 0.5 * (b - lower) } else { lower + step };
                let part = crate::boundary::integrate_handles(&[(phi, z)], lower, upper, g, &quad)?.re;
                total += part;
                lower = upper;
                step *= 2.0;
                if part.abs() < 1e-13 * total {
                    break;
                }
            }
            total
        }
    };
    Ok(1.0 / total)
}

/// The spectral measure of a Weyl function in a window.
pub fn spectral_measure(weyl: &WeylFunction, window: (f64, f64), settings: &MeasureSettings) -> Result<SpectralMeasure> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Config(format!("bad window [{lo}, {hi}]")));
    }
    if settings.eps.is_empty() || settings.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("eps schedule must be positive and nonempty".into()));
    }
    let mut notes = Vec::new();
    let lambdas: Vec<f64> = if weyl.right.is_discrete() {
        let ch = weyl.characteristic()?;
        eigenvalues_of(&ch, window, &settings.spectrum)?.eigenvalues
    } else {
        detect_atoms(weyl, window, settings)?
    };
    let atoms: Vec<Atom> = lambdas
        .par_iter()
        .map(|&l| -> Result<Atom> {
            let (weight, samples) = atom_weight(weyl, l, &settings.eps)?;
            let norming = if settings.norming_check {
                Some(norming_weight(weyl, l)?)
            } else {
                None
            };
            let flagged = norming.is_some_and(|n| (n - weight).abs() > 0.01 * n.abs());
            Ok(Atom {
                lambda: l,
                weight,
                norming_weight: norming,
                samples,
                flagged,
            })
        })
        .collect::<Result<_>>()?;
    if atoms.iter().any(|a| a.flagged) {
        notes.push("some atoms disagree with their norming constants by more than 1%".into());
    }
    let mut density = Vec::new();
    let mut floor = 0.0f64;
    if settings.density_points > 0 {
        let n = settings.density_points;
        let h = (hi - lo) / (n.max(2) - 1) as f64;
        let pts: Vec<f64> = (0..n)
            .map(|k| {
                let mut l = lo + k as f64 * h;
                if atoms.iter().any(|a| (a.lambda - l).abs() < 1e-3 * h.max(1e-12)) {
                    l += 0.25 * h;
                }
                l
            })
            .collect();
        let vals: Vec<Result<f64>> = pts
            .par_iter()
            .map(|&l| {
                let samples: Vec<f64> = settings
                    .eps
                    .iter()
                    .map(|&e| -> Result<f64> {
                        let m = weyl.eval(C64::new(l, e))?;
                        let lorentz: f64 = atoms
                            .iter()
                            .map(|a| a.weight * e / ((l - a.lambda).powi(2) + e * e))
                            .sum();
                        Ok((m.im - lorentz) / std::f64::consts::PI)
                    })
                    .collect::<Result<_>>()?;
                Ok(richardson_to_zero(&settings.eps, &samples))
            })
            .collect();
        for (l, v) in pts.into_iter().zip(vals) {
            match v {
                Ok(v) => {
                    floor = floor.min(v);
                    density.push([l, v.max(0.0)]);
                }
                Err(Error::AtEigenvalue { .. }) => notes.push(format!("density sample at {l} hit an eigenvalue")),
                Err(e) => return Err(e),
            }
        }
    }
    let m_c = linear_coefficient(weyl, &settings.mc_heights);
    if m_c.is_none() {
        notes.push("m_c could not be estimated".into());
    }
    Ok(SpectralMeasure {
        window: [lo, hi],
        atoms,
        density,
        density_floor: floor,
        m_c,
        eps: settings.eps.clone(),
        notes,
    })
}

/// `lim M(iy)/(iy)` by extrapolation in 1/y.
pub fn linear_coefficient(weyl: &WeylFunction, heights: &[f64]) -> Option<f64> {
    if heights.is_empty() {
        return None;
    }
    let mut h = Vec::new();
    let mut v = Vec::new();
    for &y in heights {
        let m = weyl.eval(C64::new(0.0, y)).ok()?;
        h.push(1.0 / y);
        v.push((m / C64::new(0.0, y)).re);
    }
    let est = richardson_to_zero(&h, &v);
    if !est.is_finite() {
        return None;
    }
    Some(if est.abs() < 1e-6 { 0.0 } else { est })
}

/// Atom candidates for a limit-point right end: peaks of `h Im M(λ + ih)` on a
/// grid of spacing h, located by `Re(1/M) = 0` and confirmed by the 1/ε law.
fn detect_atoms(weyl: &WeylFunction, window: (f64, f64), settings: &MeasureSettings) -> Result<Vec<f64>> {
    let (lo, hi) = window;
    let h = 1.0 / settings.spectrum.points_per_unit;
    let n = ((hi - lo) / h).ceil() as usize + 5;
    let grid: Vec<f64> = (0..n).map(|j| lo + (j as f64 - 2.0) * h).collect();
    let v: Vec<f64> = grid
        .par_iter()
        .map(|&l| weyl.eval(C64::new(l, h)).map(|m| h * m.im))
        .collect::<Result<_>>()?;
    let mut cands = Vec::new();
    for j in 2..n - 2 {
        if v[j] >= v[j - 1] && v[j] >= v[j + 1] && v[j] > 3.0 * v[j - 2].max(v[j + 2]) {
            cands.push(grid[j]);
        }
    }
    let eps_small = *settings.eps.iter().min_by(|a, b| a.total_cmp(b)).unwrap();
    let mut atoms = Vec::new();
    for c in cands {
        let g = |l: f64| weyl.eval(C64::new(l, eps_small)).map(|m| (1.0 / m).re);
        let (a, b) = (c - h, c + h);
        let (fa, fb) = (g(a)?, g(b)?);
        let l = if fa.signum() != fb.signum() {
            brent(g, a, b, fa, fb, 1e-12 * c.abs().max(1.0))?
        } else {
            c
        };
        let (w, samples) = atom_weight(weyl, l, &settings.eps)?;
        let spread = samples
            .iter()
            .map(|s| (s - w).abs())
            .fold(0.0, f64::max);
        if w > 1e-10 && spread < 0.1 * w && l >= lo && l <= hi {
            atoms.push(l);
        }
    }
    atoms.dedup_by(|a, b| (*a - *b).abs() < 2.0 * h);
    Ok(atoms)
}

/// `(1/π)∫ Im M(λ + iε) dλ` over `[lo, hi]`, extrapolated in ε.
pub fn stieltjes_mass(weyl: &WeylFunction, lo: f64, hi: f64, eps: &[f64]) -> Result<f64> {
    let mut vals = Vec::new();
    for &e in eps {
        let failure = std::cell::Cell::new(None);
        let r = adaptive(
            |l| match weyl.eval(C64::new(l, e)) {
                Ok(m) => m.im / std::f64::consts::PI,
                Err(err) => {
                    failure.set(Some(err));
                    0.0
                }
            },
            lo,
            hi,
            1e-10,
            1e-9,
        )?;
        if let Some(err) = failure.take() {
            return Err(err);
        }
        vals.push(r.value);
    }
    Ok(richardson_to_zero(eps, &vals))
}

#[derive(Debug, Clone, Serialize)]
pub struct HerglotzReport {
    pub samples: Vec<[f64; 4]>,
    pub min_im: f64,
    pub reflection_error: f64,
    /// Whether the frame guarantees `Im M > 0`: regular or limit-circle left
    /// ends and radial κ < 1/2. Otherwise only the reflection is checked.
    pub positivity_expected: bool,
    pub ok: bool,
}

/// `Im M > 0` on the upper half-plane and `M(z̄) = conj M(z)`.
pub fn herglotz_check(weyl: &WeylFunction, zs: &[C64]) -> Result<HerglotzReport> {
    let mut samples = Vec::new();
    let mut min_im = f64::INFINITY;
    let mut refl: f64 = 0.0;
    for &z in zs {
        let z = if z.im < 0.0 { z.conj() } else { z };
        let m = weyl.eval(z)?;
        let mc = weyl.eval(z.conj())?;
        refl = refl.max((mc - m.conj()).norm() / m.norm().max(1e-300));
        min_im = min_im.min(m.im);
        samples.push([z.re, z.im, m.re, m.im]);
    }
    let positivity_expected = match weyl.frame.left {
        LeftData::Condition(_) | LeftData::Frame { .. } | LeftData::LimitCircle { .. } => true,
        LeftData::Radial { kappa } => kappa < 0.5,
        LeftData::Mapped => false,
    };
    Ok(HerglotzReport {
        samples,
        min_im,
        reflection_error: refl,
        positivity_expected,
        ok: (min_im > 0.0 || !positivity_expected) && refl < 1e-8,
    })
}

/// Two problems sharing an expression class and right data, with left
/// conditions S (the frame's Φ) and T.
#[derive(Debug, Clone)]
pub struct TwoSpectraSetup {
    pub weyl: WeylFunction,
    /// Solution satisfying the T condition at the left end.
    pub phi_t: EntireSolutionHandle,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoSpectraSide {
    pub sigma_s: Vec<f64>,
    pub sigma_t: Vec<f64>,
    /// `h = M(λ)` on σ(T), constant when T corresponds to `Θ + hΦ`.
    pub h: Option<f64>,
    pub h_spread: f64,
    /// Eigenvalues of the shifted frame `Θ + hΦ` compared with σ(T).
    pub shifted_distance: f64,
    pub interlacing_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoSpectraReport {
    pub window: [f64; 2],
    pub a: TwoSpectraSide,
    pub b: TwoSpectraSide,
    /// Set distance between σ(S_a) and σ(S_b) (Hausdorff when counts differ).
    pub distance_s: f64,
    pub distance_t: f64,
    pub agree: bool,
}

/// Distance between two sorted point sets.
pub fn set_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    }
    let one = |p: &[f64], q: &[f64]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

/// Number of adjacent pairs from the same set in the merged order.
pub fn interlacing_violations(s: &[f64], t: &[f64]) -> usize {
    let mut all: Vec<(f64, bool)> = s.iter().map(|&x| (x, true)).chain(t.iter().map(|&x| (x, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.windows(2).filter(|w| w[0].1 == w[1].1).count()
}

fn two_spectra_side(setup: &TwoSpectraSetup, window: (f64, f64), settings: &SpectrumSettings) -> Result<TwoSpectraSide> {
    let w = &setup.weyl;
    let sigma_s = eigenvalues_of(&w.characteristic()?, window, settings)?.eigenvalues;
    let ch_t = Characteristic::new(&setup.phi_t, &w.right, w.match_x)?;
    let sigma_t = eigenvalues_of(&ch_t, window, settings)?.eigenvalues;
    let hs: Vec<f64> = sigma_t
        .iter()
        .filter_map(|&l| w.eval(C64::new(l, 0.0)).ok().map(|m| m.re))
        .collect();
    let (h, spread) = if hs.is_empty() {
        (None, f64::NAN)
    } else {
        let h0 = hs[0];
        (Some(h0), hs.iter().map(|v| (v - h0).abs()).fold(0.0, f64::max))
    };
    let shifted_distance = match h {
        Some(h0) => {
            let shifted = w.frame.shifted(h0)?;
            let ch = Characteristic::new(&shifted.theta, &w.right, w.match_x)?;
            let zeros = eigenvalues_of(&ch, window, settings)?.eigenvalues;
            set_distance(&zeros, &sigma_t)
        }
        None => f64::NAN,
    };
    let interlacing = interlacing_violations(&sigma_s, &sigma_t);
    Ok(TwoSpectraSide {
        sigma_s,
        sigma_t,
        h,
        h_spread: spread,
        shifted_distance,
        interlacing_violations: interlacing,
    })
}

/// Compares the two spectra of two problems.
pub fn two_spectra_report(
    a: &TwoSpectraSetup,
    b: &TwoSpectraSetup,
    window: (f64, f64),
    settings: &SpectrumSettings,
    tol: f64,
) -> Result<TwoSpectraReport> {
    let sa = two_spectra_side(a, window, settings)?;
    let sb = two_spectra_side(b, window, settings)?;
    let distance_s = set_distance(&sa.sigma_s, &sb.sigma_s);
    let distance_t = set_distance(&sa.sigma_t, &sb.sigma_t);
    Ok(TwoSpectraReport {
        window: [window.0, window.1],
        agree: distance_s <= tol && distance_t <= tol,
        a: sa,
        b: sb,
        distance_s,
        distance_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{fundamental_system, BoundaryCondition, Endpoint};
    use crate::coefficients::{Interval, MatrixField};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn free_weyl(b: f64, right: RightData) -> WeylFunction {
        let s = PropagationSettings::default();
        let expr = Arc::new(DiracExpression::free(Interval::new(0.0, b).unwrap()));
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.0).unwrap();
        let anchor = if b.is_finite() { 0.5 * b } else { 1.0 };
        WeylFunction::new(fundamental_system(expr, &bc, anchor, &s).unwrap(), right, s).unwrap()
    }

    #[test]
    fn free_half_line_is_i() {
        let w = free_weyl(
            f64::INFINITY,
            RightData::LimitPoint {
                seed: 2.0,
                condition: Truncation::Radiation,
            },
        );
        for z in [c(0.3, 1.0), c(-5.0, 0.01), c(40.0, 2.0)] {
            let m = w.eval(z).unwrap();
            assert!((m - c(0.0, 1.0)).norm() < 1e-10, "{z} {m}");
        }
    }

    #[test]
    fn free_interval_cotangent() {
        let w = free_weyl(PI, RightData::Angle(0.0));
        for z in [c(0.3, 1.0), c(2.5, 0.1), c(-7.2, 0.5)] {
            let m = w.eval(z).unwrap();
            let exact = -(z * PI).cos() / (z * PI).sin();
            assert!((m - exact).norm() < 1e-10 * exact.norm().max(1.0), "{z} {m} {exact}");
        }
        assert!(matches!(w.eval(c(2.0, 0.0)), Err(Error::AtEigenvalue { .. })));
    }

    #[test]
    fn free_interval_eigenvalues() {
        let w = free_weyl(PI, RightData::Angle(0.0));
        let sp = eigenvalues(&w.frame.phi, &w.right, (-10.5, 10.5), &SpectrumSettings::default()).unwrap();
        let expect: Vec<f64> = (-10..=10).map(|n| n as f64).collect();
        assert_eq!(sp.eigenvalues.len(), expect.len());
        for (l, e) in sp.eigenvalues.iter().zip(&expect) {
            assert!((l - e).abs() < 1e-12, "{l} {e}");
        }
    }

    #[test]
    fn free_interval_measure() {
        let w = free_weyl(PI, RightData::Angle(0.0));
        let m = spectral_measure(
            &w,
            (-3.5, 3.5),
            &MeasureSettings {
                density_points: 11,
                ..MeasureSettings::default()
            },
        )
        .unwrap();
        assert_eq!(m.atoms.len(), 7);
        for a in &m.atoms {
            assert!((a.weight - 1.0 / PI).abs() < 1e-8, "{a:?}");
            assert!(!a.flagged);
        }
        assert!(m.density.iter().all(|d| d[1] < 1e-6), "{:?}", m.density);
    }

    #[test]
    fn free_half_line_density() {
        let w = free_weyl(
            f64::INFINITY,
            RightData::LimitPoint {
                seed: 2.0,
                condition: Truncation::Radiation,
            },
        );
        let m = spectral_measure(
            &w,
            (-2.0, 2.0),
            &MeasureSettings {
                density_points: 9,
                ..MeasureSettings::default()
            },
        )
        .unwrap();
        assert!(m.atoms.is_empty());
        for d in &m.density {
            assert!((d[1] - 1.0 / PI).abs() < 1e-8, "{d:?}");
        }
        assert_eq!(m.m_c, Some(0.0));
    }

    #[test]
    fn herglotz_on_potential() {
        let s = PropagationSettings::default();
        let q = MatrixField::parse(["sin(x)", "0.3", "0.3", "x^2/4"]).unwrap();
        let expr = Arc::new(DiracExpression::new(Interval::new(0.0, 2.0).unwrap(), q, MatrixField::identity()));
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.4).unwrap();
        let w = WeylFunction::new(fundamental_system(expr, &bc, 1.0, &s).unwrap(), RightData::Angle(1.1), s).unwrap();
        let zs: Vec<C64> = (0..20).map(|k| c(-10.0 + k as f64, 0.05 + 0.1 * k as f64)).collect();
        let r = herglotz_check(&w, &zs).unwrap();
        assert!(r.ok, "{r:?}");
    }

    #[test]
    fn set_tools() {
        assert_eq!(interlacing_violations(&[1.0, 3.0], &[2.0, 4.0]), 0);
        assert_eq!(interlacing_violations(&[1.0, 2.0], &[3.0]), 1);
        assert_eq!(set_distance(&[1.0, 2.0], &[1.5]), 0.5);
    }
}
