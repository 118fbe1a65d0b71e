//! Gauss–Legendre rules, adaptive quadrature and improper-integral probes.

use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("integrand is not finite at x = {x}")]
    NotFinite { x: f64 },
    #[error("adaptive quadrature on [{a}, {b}] did not reach tolerance (error estimate {estimate:e})")]
    NoConvergence { a: f64, b: f64, estimate: f64 },
}

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Maps the rule onto [a, b], returning (x, w) pairs.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(t, w)| (mid + half * t, half * w))
    }
}

/// n-point Gauss–Legendre rule via Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = -t;
        nodes[n - 1 - i] = t;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// P_n(t) and P_n'(t).
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// Cached 16-point rule.
pub fn gl16() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Cached 24-point rule.
pub fn gl24() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive bisection comparing the 16- and 24-point Gauss rules on each panel.
///
/// A panel is accepted when the two rules agree to `max(abs_tol * len / (b - a),
/// rel_tol * ∫|f|)` on that panel.
pub fn adaptive<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    if a == b {
        return Ok(out);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let total = hi - lo;
    let mut stack = vec![(lo, hi, 0usize)];
    let mut worst = 0.0f64;
    while let Some((p0, p1, depth)) = stack.pop() {
        let mut s16 = 0.0;
        for (x, w) in gl16().mapped(p0, p1) {
            let v = f(x);
            if !v.is_finite() {
                return Err(QuadratureError::NotFinite { x });
            }
            s16 += w * v;
        }
        let mut s24 = 0.0;
        let mut s24_abs = 0.0;
        for (x, w) in gl24().mapped(p0, p1) {
            let v = f(x);
            if !v.is_finite() {
                return Err(QuadratureError::NotFinite { x });
            }
            s24 += w * v;
            s24_abs += w * v.abs();
        }
        out.evaluations += 40;
        let diff = (s16 - s24).abs();
        let allowed = (abs_tol * (p1 - p0) / total).max(rel_tol * s24_abs);
        if diff <= allowed || depth >= 48 {
            if diff > allowed {
                worst = worst.max(diff);
            }
            out.value += s24;
            out.error += diff;
        } else {
            let mid = 0.5 * (p0 + p1);
            stack.push((mid, p1, depth + 1));
            stack.push((p0, mid, depth + 1));
        }
    }
    if worst > 0.0 && worst > abs_tol.max(rel_tol * out.value.abs()) {
        return Err(QuadratureError::NoConvergence {
            a: lo,
            b: hi,
            estimate: worst,
        });
    }
    out.value *= sign;
    Ok(out)
}

/// Outcome of probing an integral toward a possibly singular endpoint.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ImproperProbe {
    /// Whether the nested integrals converge.
    pub converged: bool,
    /// Limit estimate (partial sum plus geometric tail) when convergent.
    pub value: f64,
    /// ∫ over the shell between consecutive truncation points, k = 0, 1, ...
    pub increments: Vec<f64>,
    /// Ratio of the last two increments.
    pub ratio: f64,
}

/// Nested quadrature of a nonnegative integrand on `[a + 2^{-k}(c - a), c]`
/// for k up to `cap`, testing whether the integral converges as k → ∞.
///
/// The shells are integrated separately; convergence is declared when the
/// shell contributions decay geometrically (ratio < 0.95 over the last few
/// levels) or become negligible, divergence when they stop decaying.
pub fn probe_left_endpoint<F>(f: F, a: f64, c: f64, cap: usize) -> Result<ImproperProbe, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    probe_endpoint(|t| f(a + t), c - a, cap)
}

/// Mirror of [`probe_left_endpoint`] for a right endpoint `b`, shells on `[c, b - 2^{-k}(b - c)]`.
pub fn probe_right_endpoint<F>(f: F, c: f64, b: f64, cap: usize) -> Result<ImproperProbe, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    probe_endpoint(|t| f(b - t), b - c, cap)
}

fn probe_endpoint<F>(g: F, len: f64, cap: usize) -> Result<ImproperProbe, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let mut increments = Vec::with_capacity(cap + 1);
    let mut total = 0.0;
    let mut upper = len;
    for _ in 0..=cap {
        let lower = 0.5 * upper;
        let shell = adaptive(&g, lower, upper, 1e-300, 1e-12)?.value.abs();
        increments.push(shell);
        total += shell;
        upper = lower;
        let n = increments.len();
        if n >= 6 {
            let negligible = increments[n - 3..].iter().all(|&s| s <= 1e-15 * total.max(1e-300));
            if negligible {
                return Ok(ImproperProbe {
                    converged: true,
                    value: total,
                    ratio: ratio_of(&increments),
                    increments,
                });
            }
        }
    }
    let ratio = ratio_of(&increments);
    let n = increments.len();
    // geometric decay over the last few shells
    let decaying = n >= 5
        && increments[n - 5..]
            .windows(2)
            .all(|w| w[0] == 0.0 || w[1] <= 0.95 * w[0]);
    if decaying {
        let tail = increments[n - 1] * ratio / (1.0 - ratio);
        Ok(ImproperProbe {
            converged: true,
            value: total + tail,
            increments,
            ratio,
        })
    } else {
        Ok(ImproperProbe {
            converged: false,
            value: f64::INFINITY,
            increments,
            ratio,
        })
    }
}

fn ratio_of(increments: &[f64]) -> f64 {
    let n = increments.len();
    if n < 2 || increments[n - 2] == 0.0 {
        0.0
    } else {
        increments[n - 1] / increments[n - 2]
    }
}

/// Polynomial extrapolation to h = 0 (Neville) from samples (h_k, v_k).
pub fn richardson_to_zero(h: &[f64], v: &[f64]) -> f64 {
    assert_eq!(h.len(), v.len());
    let mut p = v.to_vec();
    let n = h.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (h[i + m] * p[i] - h[i] * p[i + 1]) / (h[i + m] - h[i]);
        }
    }
    p[0]
}
