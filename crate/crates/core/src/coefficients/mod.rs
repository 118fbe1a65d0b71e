//! Dirac differential expressions `τf = R⁻¹(Jf' + Qf)` on an interval (a, b).
//!
//! Coefficients are 2×2 real matrix fields. A field is either a matrix of
//! scalar fields (closed-form expressions, tabulated grids, constants or
//! Rust closures) or a named family evaluated by a closure. The variable `x`
//! is treated as dimensionless throughout.

pub mod expr;
pub mod grid;

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{self, ImproperProbe};
use expr::{EvalError, Expr};
use grid::Grid;

pub type Mat2 = Matrix2<f64>;

/// The symplectic matrix J = [[0, -1], [1, 0]].
pub fn j_matrix() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// Open interval (a, b); either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Interval> {
        if a.is_nan() || b.is_nan() || !(a < b) {
            return Err(Error::Config(format!("interval needs a < b, got ({a}, {b})")));
        }
        Ok(Interval { a, b })
    }

    pub fn left_finite(&self) -> bool {
        self.a.is_finite()
    }

    pub fn right_finite(&self) -> bool {
        self.b.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// Closed-interval membership, used for regular endpoints.
    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    /// A convenient interior point: the midpoint for bounded intervals.
    pub fn interior_point(&self) -> f64 {
        match (self.left_finite(), self.right_finite()) {
            (true, true) => 0.5 * (self.a + self.b),
            (true, false) => self.a + 1.0,
            (false, true) => self.b - 1.0,
            (false, false) => 0.0,
        }
    }
}

/// Real scalar coefficient field.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Expr(Arc<Expr>),
    Grid(Arc<Grid>),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(v) => write!(f, "Constant({v})"),
            ScalarField::Expr(e) => write!(f, "Expr({e})"),
            ScalarField::Grid(g) => write!(f, "Grid({} nodes, {:?})", g.nodes().len(), g.order()),
            ScalarField::Function(_) => write!(f, "Function"),
        }
    }
}

impl ScalarField {
    /// Parses a coefficient expression.
    pub fn parse(text: &str) -> Result<ScalarField> {
        let e = Expr::parse(text)?;
        if e.is_constant() {
            Ok(ScalarField::Constant(e.eval(0.0)))
        } else {
            Ok(ScalarField::Expr(Arc::new(e)))
        }
    }

    pub fn function<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> ScalarField {
        ScalarField::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::Expr(e) => e.eval(x),
            ScalarField::Grid(g) => g.eval(x),
            ScalarField::Function(f) => f(x),
        }
    }

    /// Evaluation that reports domain problems with the offending `x`.
    pub fn try_eval(&self, x: f64) -> std::result::Result<f64, EvalError> {
        match self {
            ScalarField::Expr(e) => e.try_eval(x),
            other => {
                let v = other.eval(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError {
                        x,
                        what: format!("{other:?}"),
                    })
                }
            }
        }
    }

    /// Exact derivative when the representation carries one.
    pub fn derivative(&self) -> Option<ScalarField> {
        match self {
            ScalarField::Constant(_) => Some(ScalarField::Constant(0.0)),
            ScalarField::Expr(e) => {
                let d = e.derivative();
                Some(if d.is_constant() {
                    ScalarField::Constant(d.eval(0.0))
                } else {
                    ScalarField::Expr(Arc::new(d))
                })
            }
            ScalarField::Grid(g) => {
                let g = g.clone();
                Some(ScalarField::function(move |x| g.derivative(x)))
            }
            ScalarField::Function(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarField::Constant(_))
    }

    /// Pretty form for reports; closures and grids are summarized.
    pub fn describe(&self) -> String {
        match self {
            ScalarField::Constant(v) => format!("{v:?}"),
            ScalarField::Expr(e) => e.to_string(),
            ScalarField::Grid(g) => format!("grid[{}]", g.nodes().len()),
            ScalarField::Function(_) => "<function>".into(),
        }
    }
}

/// Fourth-order centered difference with step `h`.
pub(crate) fn central_difference<F: Fn(f64) -> Mat2>(f: F, x: f64, h: f64) -> Mat2 {
    (f(x - 2.0 * h) - f(x + 2.0 * h) + 8.0 * (f(x + h) - f(x - h))) / (12.0 * h)
}

type MatFn = Arc<dyn Fn(f64) -> Mat2 + Send + Sync>;

/// 2×2 real matrix field.
#[derive(Clone)]
pub enum MatrixField {
    /// Row-major entries `[m11, m12, m21, m22]`.
    Entries(Box<[ScalarField; 4]>),
    /// A named family evaluated by a closure, with an optional exact derivative.
    Named {
        name: Arc<str>,
        eval: MatFn,
        derivative: Option<MatFn>,
    },
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Entries(e) => f.debug_tuple("Entries").field(e).finish(),
            MatrixField::Named { name, .. } => write!(f, "Named({name})"),
        }
    }
}

impl MatrixField {
    pub fn constant(m: Mat2) -> MatrixField {
        MatrixField::Entries(Box::new([
            ScalarField::Constant(m[(0, 0)]),
            ScalarField::Constant(m[(0, 1)]),
            ScalarField::Constant(m[(1, 0)]),
            ScalarField::Constant(m[(1, 1)]),
        ]))
    }

    pub fn zero() -> MatrixField {
        MatrixField::constant(Mat2::zeros())
    }

    pub fn identity() -> MatrixField {
        MatrixField::constant(Mat2::identity())
    }

    pub fn from_entries(entries: [ScalarField; 4]) -> MatrixField {
        MatrixField::Entries(Box::new(entries))
    }

    /// Parses four row-major expression strings.
    pub fn parse(entries: [&str; 4]) -> Result<MatrixField> {
        Ok(MatrixField::from_entries([
            ScalarField::parse(entries[0])?,
            ScalarField::parse(entries[1])?,
            ScalarField::parse(entries[2])?,
            ScalarField::parse(entries[3])?,
        ]))
    }

    /// Symmetric field from its three independent entries.
    pub fn symmetric(m11: ScalarField, m12: ScalarField, m22: ScalarField) -> MatrixField {
        MatrixField::from_entries([m11, m12.clone(), m12, m22])
    }

    pub fn named<F>(name: &str, f: F) -> MatrixField
    where
        F: Fn(f64) -> Mat2 + Send + Sync + 'static,
    {
        MatrixField::Named {
            name: name.into(),
            eval: Arc::new(f),
            derivative: None,
        }
    }

    pub fn named_with_derivative<F, D>(name: &str, f: F, d: D) -> MatrixField
    where
        F: Fn(f64) -> Mat2 + Send + Sync + 'static,
        D: Fn(f64) -> Mat2 + Send + Sync + 'static,
    {
        MatrixField::Named {
            name: name.into(),
            eval: Arc::new(f),
            derivative: Some(Arc::new(d)),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> Mat2 {
        match self {
            MatrixField::Entries(e) => Mat2::new(e[0].eval(x), e[1].eval(x), e[2].eval(x), e[3].eval(x)),
            MatrixField::Named { eval, .. } => eval(x),
        }
    }

    /// Evaluation that reports the first non-finite entry.
    pub fn try_eval(&self, x: f64) -> Result<Mat2> {
        match self {
            MatrixField::Entries(e) => Ok(Mat2::new(
                e[0].try_eval(x)?,
                e[1].try_eval(x)?,
                e[2].try_eval(x)?,
                e[3].try_eval(x)?,
            )),
            MatrixField::Named { eval, .. } => {
                let m = eval(x);
                if m.iter().all(|v| v.is_finite()) {
                    Ok(m)
                } else {
                    Err(Error::NotFinite { x })
                }
            }
        }
    }

    /// Exact derivative field if every entry carries one.
    pub fn exact_derivative(&self) -> Option<MatrixField> {
        match self {
            MatrixField::Entries(e) => Some(MatrixField::from_entries([
                e[0].derivative()?,
                e[1].derivative()?,
                e[2].derivative()?,
                e[3].derivative()?,
            ])),
            MatrixField::Named {
                name, derivative, ..
            } => derivative.as_ref().map(|d| MatrixField::Named {
                name: format!("d/dx {name}").into(),
                eval: d.clone(),
                derivative: None,
            }),
        }
    }

    /// Derivative at `x`: exact when available, otherwise a fourth-order
    /// centered difference on the scale `h`.
    pub fn derivative_at(&self, x: f64, h: f64) -> Mat2 {
        match self.exact_derivative() {
            Some(d) => d.eval(x),
            None => central_difference(|t| self.eval(t), x, h),
        }
    }

    /// True for closed-form representations (constant or expression entries).
    pub fn is_closed_form(&self) -> bool {
        match self {
            MatrixField::Entries(e) => e
                .iter()
                .all(|s| matches!(s, ScalarField::Constant(_) | ScalarField::Expr(_))),
            MatrixField::Named { .. } => false,
        }
    }

    pub fn as_constant(&self) -> Option<Mat2> {
        match self {
            MatrixField::Entries(e) if e.iter().all(ScalarField::is_constant) => Some(self.eval(0.0)),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MatrixField::Entries(e) => format!(
                "[[{}, {}], [{}, {}]]",
                e[0].describe(),
                e[1].describe(),
                e[2].describe(),
                e[3].describe()
            ),
            MatrixField::Named { name, .. } => format!("named:{name}"),
        }
    }
}

/// The differential expression τ with potential Q and weight R.
#[derive(Debug, Clone)]
pub struct DiracExpression {
    pub interval: Interval,
    pub q: MatrixField,
    pub r: MatrixField,
}

impl DiracExpression {
    pub fn new(interval: Interval, q: MatrixField, r: MatrixField) -> DiracExpression {
        DiracExpression { interval, q, r }
    }

    /// Q = 0, R = I on the given interval.
    pub fn free(interval: Interval) -> DiracExpression {
        DiracExpression::new(interval, MatrixField::zero(), MatrixField::identity())
    }

    #[inline]
    pub fn q_at(&self, x: f64) -> Mat2 {
        self.q.eval(x)
    }

    #[inline]
    pub fn r_at(&self, x: f64) -> Mat2 {
        self.r.eval(x)
    }

    /// Probes ∫(‖Q‖ + ‖R‖) toward the left (`true`) or right endpoint from
    /// the interior point `c`, along shells halving the distance each level.
    pub fn endpoint_integrability(&self, left: bool, c: f64, cap: usize) -> Result<ImproperProbe> {
        let g = |x: f64| self.q_at(x).norm() + self.r_at(x).norm();
        let probe = if left {
            if !self.interval.left_finite() {
                return Ok(unbounded_probe());
            }
            quadrature::probe_left_endpoint(g, self.interval.a, c, cap)?
        } else {
            if !self.interval.right_finite() {
                return Ok(unbounded_probe());
            }
            quadrature::probe_right_endpoint(g, c, self.interval.b, cap)?
        };
        Ok(probe)
    }
}

fn unbounded_probe() -> ImproperProbe {
    ImproperProbe {
        converged: false,
        value: f64::INFINITY,
        increments: Vec::new(),
        ratio: f64::NAN,
    }
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn min_eigenvalue_sym(m: &Mat2) -> f64 {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    mean - rad
}

/// Sampling plan for the almost-everywhere hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    /// Compact subintervals [lo, hi] of the open interval.
    pub compacts: Vec<(f64, f64)>,
    pub points_per_compact: usize,
    /// Allowed |Q - Qᵀ| for tabulated fields; closed forms must be exact.
    pub symmetry_tol: f64,
}

impl SamplePlan {
    pub fn new(compacts: Vec<(f64, f64)>) -> SamplePlan {
        SamplePlan {
            compacts,
            points_per_compact: 1024,
            symmetry_tol: 1e-12,
        }
    }

    /// One compact covering `[a + δ, b - δ]` (finite parts) of the interval.
    pub fn default_for(interval: &Interval) -> SamplePlan {
        let lo = if interval.left_finite() { interval.a } else { interval.b.min(0.0) - 10.0 };
        let hi = if interval.right_finite() { interval.b } else { interval.a.max(0.0) + 10.0 };
        let delta = 1e-3 * (hi - lo);
        SamplePlan::new(vec![(lo.max(interval.a) + delta, hi.min(interval.b) - delta)])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompactReport {
    pub lo: f64,
    pub hi: f64,
    pub q_norm_integral: f64,
    pub r_norm_integral: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub max_symmetry_residual: f64,
    pub min_r_eigenvalue: f64,
    pub min_r_eigenvalue_at: f64,
    pub compacts: Vec<CompactReport>,
}

/// Samples the symmetry of Q and positivity of R on each compact and integrates
/// ‖Q‖, ‖R‖ (Frobenius norms) over it.
pub fn validate_hypotheses(expr: &DiracExpression, plan: &SamplePlan) -> Result<ValidationReport> {
    if plan.compacts.is_empty() {
        return Err(Error::Config("sample plan has no compact subinterval".into()));
    }
    let n = plan.points_per_compact.max(2);
    let sym_tol = if expr.q.is_closed_form() { 0.0 } else { plan.symmetry_tol };
    let mut report = ValidationReport {
        max_symmetry_residual: 0.0,
        min_r_eigenvalue: f64::INFINITY,
        min_r_eigenvalue_at: f64::NAN,
        compacts: Vec::new(),
    };
    for &(lo, hi) in &plan.compacts {
        if !(lo < hi) || !expr.interval.contains_closed(lo) || !expr.interval.contains_closed(hi) {
            return Err(Error::Config(format!("compact [{lo}, {hi}] is not inside the interval")));
        }
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let q = expr.q.try_eval(x)?;
            let r = expr.r.try_eval(x)?;
            let residual = (q[(0, 1)] - q[(1, 0)]).abs();
            if residual > sym_tol {
                return Err(Error::NotSymmetric { x, residual });
            }
            report.max_symmetry_residual = report.max_symmetry_residual.max(residual);
            let r_sym = (r[(0, 1)] - r[(1, 0)]).abs();
            let lam = min_eigenvalue_sym(&r);
            if lam <= 0.0 || r_sym > 1e-12 * r.norm().max(1.0) {
                return Err(Error::NotPositive { x, eigenvalue: lam });
            }
            if lam < report.min_r_eigenvalue {
                report.min_r_eigenvalue = lam;
                report.min_r_eigenvalue_at = x;
            }
        }
        let q_int = quadrature::adaptive(|x| expr.q_at(x).norm(), lo, hi, 1e-12, 1e-10)?.value;
        let r_int = quadrature::adaptive(|x| expr.r_at(x).norm(), lo, hi, 1e-12, 1e-10)?.value;
        report.compacts.push(CompactReport {
            lo,
            hi,
            q_norm_integral: q_int,
            r_norm_integral: r_int,
        });
    }
    Ok(report)
}

/// Data of the radial family
/// `Q(x) = [[q_sc, κ/x + q_am], [κ/x + q_am, -q_sc]]`, `R = I` on (0, b).
#[derive(Debug, Clone)]
pub struct RadialSpec {
    pub kappa: f64,
    pub q_sc: ScalarField,
    pub q_am: ScalarField,
    pub b: f64,
}

impl RadialSpec {
    pub fn new(kappa: f64, q_sc: ScalarField, q_am: ScalarField, b: f64) -> RadialSpec {
        RadialSpec { kappa, q_sc, q_am, b }
    }

    /// κ with vanishing scalar potential and anomalous moment.
    pub fn pure(kappa: f64, b: f64) -> RadialSpec {
        RadialSpec::new(kappa, ScalarField::Constant(0.0), ScalarField::Constant(0.0), b)
    }

    /// Test compact (0, c] for the κ = 1/2 logarithmic condition.
    pub fn log_test_point(&self) -> f64 {
        if self.b.is_finite() {
            (0.5 * self.b).min(1.0)
        } else {
            1.0
        }
    }

    /// Checks `∫_0^c (|q_sc| + |q_am|)|log x| dx < ∞` by nested quadrature.
    pub fn log_integrability(&self) -> Result<ImproperProbe> {
        let c = self.log_test_point();
        let probe = quadrature::probe_left_endpoint(
            |x| (self.q_sc.eval(x).abs() + self.q_am.eval(x).abs()) * x.ln().abs(),
            0.0,
            c,
            40,
        )?;
        Ok(probe)
    }
}

/// Builds the radial expression of a [`RadialSpec`].
pub fn make_radial(spec: &RadialSpec) -> Result<DiracExpression> {
    if !(spec.kappa >= 0.0) {
        return Err(Error::Config(format!(
            "kappa must be nonnegative (got {}); apply the Γ = J transform to flip its sign",
            spec.kappa
        )));
    }
    let interval = Interval::new(0.0, spec.b)?;
    if spec.kappa == 0.5 {
        let probe = spec.log_integrability()?;
        if !probe.converged {
            return Err(Error::NotIntegrable {
                what: "(|q_sc| + |q_am|)|log x|".into(),
                endpoint: 0.0,
            });
        }
    }
    let kappa = spec.kappa;
    let off = match &spec.q_am {
        ScalarField::Constant(c) if *c == 0.0 => {
            if kappa == 0.0 {
                ScalarField::Constant(0.0)
            } else {
                ScalarField::Expr(Arc::new(Expr::Div(Box::new(Expr::Num(kappa)), Box::new(Expr::X))))
            }
        }
        ScalarField::Expr(e) => ScalarField::Expr(Arc::new(Expr::Add(
            Box::new(Expr::Div(Box::new(Expr::Num(kappa)), Box::new(Expr::X))),
            Box::new((**e).clone()),
        ))),
        other => {
            let q = other.clone();
            ScalarField::function(move |x| kappa / x + q.eval(x))
        }
    };
    let minus_sc = match &spec.q_sc {
        ScalarField::Constant(c) => ScalarField::Constant(-c),
        ScalarField::Expr(e) => ScalarField::Expr(Arc::new(Expr::Neg(Box::new((**e).clone())))),
        other => {
            let q = other.clone();
            ScalarField::function(move |x| -q.eval(x))
        }
    };
    let q = MatrixField::from_entries([spec.q_sc.clone(), off.clone(), off, minus_sc]);
    Ok(DiracExpression::new(interval, q, MatrixField::identity()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_radial_is_zero() {
        let e = make_radial(&RadialSpec::pure(0.0, f64::INFINITY)).unwrap();
        assert_eq!(e.q_at(0.7), Mat2::zeros());
        assert_eq!(e.r_at(0.7), Mat2::identity());
        assert_eq!(e.interval.a, 0.0);
        assert!(e.interval.b.is_infinite());
    }

    #[test]
    fn radial_kappa_one_entries() {
        let e = make_radial(&RadialSpec::pure(1.0, f64::INFINITY)).unwrap();
        for &x in &[0.1, 1.0, 3.5] {
            let q = e.q_at(x);
            assert_eq!(q, Mat2::new(0.0, 1.0 / x, 1.0 / x, 0.0));
        }
    }

    #[test]
    fn radial_with_potentials_reproduces_entries() {
        let spec = RadialSpec::new(
            2.0,
            ScalarField::parse("exp(-x)").unwrap(),
            ScalarField::parse("sin(x)").unwrap(),
            10.0,
        );
        let e = make_radial(&spec).unwrap();
        for &x in &[0.2, 1.1, 7.0] {
            let q = e.q_at(x);
            assert_eq!(q[(0, 0)], (-x).exp());
            assert_eq!(q[(1, 1)], -(-x).exp());
            assert_eq!(q[(0, 1)], 2.0 / x + x.sin());
            assert_eq!(q[(0, 1)], q[(1, 0)]);
        }
    }

    #[test]
    fn negative_kappa_rejected() {
        assert!(make_radial(&RadialSpec::pure(-1.0, 1.0)).is_err());
    }

    #[test]
    fn half_kappa_log_condition() {
        // ∫_0^1 x^{-1/2}|log x| dx = 4 < ∞
        let ok = RadialSpec::new(
            0.5,
            ScalarField::parse("x^(-0.5)").unwrap(),
            ScalarField::Constant(0.0),
            f64::INFINITY,
        );
        let probe = ok.log_integrability().unwrap();
        assert!(probe.converged);
        assert!((probe.value - 4.0).abs() < 1e-3);
        assert!(make_radial(&ok).is_ok());

        let bad = RadialSpec::new(
            0.5,
            ScalarField::parse("1/x").unwrap(),
            ScalarField::Constant(0.0),
            f64::INFINITY,
        );
        assert!(matches!(make_radial(&bad), Err(Error::NotIntegrable { .. })));
    }

    #[test]
    fn validate_free() {
        let e = DiracExpression::free(Interval::new(0.0, 1.0).unwrap());
        let r = validate_hypotheses(&e, &SamplePlan::new(vec![(0.0, 1.0)])).unwrap();
        assert_eq!(r.max_symmetry_residual, 0.0);
        assert_eq!(r.min_r_eigenvalue, 1.0);
        assert_eq!(r.compacts[0].q_norm_integral, 0.0);
        assert!((r.compacts[0].r_norm_integral - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn validate_constant_weight_eigenvalue() {
        let e = DiracExpression::new(
            Interval::new(0.0, 1.0).unwrap(),
            MatrixField::zero(),
            MatrixField::constant(Mat2::new(1.0, 0.5, 0.5, 1.0)),
        );
        let r = validate_hypotheses(&e, &SamplePlan::new(vec![(0.1, 0.9)])).unwrap();
        assert!((r.min_r_eigenvalue - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validate_reports_asymmetry_location() {
        let q = MatrixField::parse(["0", "x", "0", "0"]).unwrap();
        let e = DiracExpression::new(Interval::new(0.0, 1.0).unwrap(), q, MatrixField::identity());
        let mut plan = SamplePlan::new(vec![(0.5, 1.0)]);
        plan.points_per_compact = 3;
        match validate_hypotheses(&e, &plan) {
            Err(Error::NotSymmetric { x, residual }) => {
                assert_eq!(x, 0.5);
                assert_eq!(residual, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_indefinite_weight() {
        let r = MatrixField::parse(["1", "0", "0", "x-0.5"]).unwrap();
        let e = DiracExpression::new(Interval::new(0.0, 1.0).unwrap(), MatrixField::zero(), r);
        assert!(matches!(
            validate_hypotheses(&e, &SamplePlan::new(vec![(0.0, 1.0)])),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn grid_outside_span_is_reported() {
        let g = Grid::sample(|x| x, 0.0, 0.5, 10, grid::Interpolation::Linear).unwrap();
        let q = MatrixField::from_entries([
            ScalarField::Grid(Arc::new(g)),
            ScalarField::Constant(0.0),
            ScalarField::Constant(0.0),
            ScalarField::Constant(0.0),
        ]);
        let e = DiracExpression::new(Interval::new(0.0, 1.0).unwrap(), q, MatrixField::identity());
        assert!(validate_hypotheses(&e, &SamplePlan::new(vec![(0.1, 0.9)])).is_err());
    }

    #[test]
    fn integrability_probe_distinguishes_endpoints() {
        let e = make_radial(&RadialSpec::pure(1.0, 1.0)).unwrap();
        assert!(!e.endpoint_integrability(true, 0.5, 40).unwrap().converged);
        assert!(e.endpoint_integrability(false, 0.5, 40).unwrap().converged);
    }
}
