//! de Branges functions, reproducing kernels, the spectral transform and
//! Cartwright-class diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{integrate_handles, EntireSolutionHandle};
use crate::error::{Error, Result};
use crate::ode::{sesquilinear, CVec2, QuadSettings, C64};
use crate::quadrature::adaptive;
use crate::weyl::SpectralMeasure;

/// Which combination of Φ components forms E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `E = Φ₁ − iΦ₂`.
    Standard,
    /// `E = Φ₁ + iΦ₂`.
    Conjugate,
}

impl Convention {
    fn sign(self) -> f64 {
        match self {
            Convention::Standard => -1.0,
            Convention::Conjugate => 1.0,
        }
    }
}

/// `E(z, c)` built from a real entire Φ at a fixed point c.
#[derive(Debug, Clone)]
pub struct DeBrangesFunction {
    phi: EntireSolutionHandle,
    pub c: f64,
    pub convention: Convention,
    /// True when the convention was chosen by the kernel-positivity test.
    pub auto_selected: bool,
}

impl DeBrangesFunction {
    /// Picks the convention for which the structure quotient at `ζ = z = i` is positive.
    pub fn new(phi: &EntireSolutionHandle, c: f64) -> Result<Self> {
        let mut e = Self::with_convention(phi, c, Convention::Standard)?;
        let i = C64::new(0.0, 1.0);
        let q = e.structure_kernel(i, i)?;
        if q.re < 0.0 {
            e.convention = Convention::Conjugate;
        }
        e.auto_selected = true;
        Ok(e)
    }

    pub fn with_convention(phi: &EntireSolutionHandle, c: f64, convention: Convention) -> Result<Self> {
        if !phi.expr().interval.contains(c) {
            return Err(Error::Config(format!("c = {c} is not an interior point")));
        }
        Ok(DeBrangesFunction {
            phi: phi.clone(),
            c,
            convention,
            auto_selected: false,
        })
    }

    pub fn phi(&self) -> &EntireSolutionHandle {
        &self.phi
    }

    fn combine(&self, v: &CVec2) -> C64 {
        v[0] + C64::new(0.0, self.convention.sign()) * v[1]
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.combine(&self.phi.eval(z, self.c)?))
    }

    /// `(log|E(z)|, arg E(z))` without overflow.
    pub fn eval_log(&self, z: C64) -> Result<(f64, f64)> {
        let s = self.phi.eval_scaled(z, self.c)?;
        let e = self.combine(&s.s);
        Ok((e.norm().ln() + s.log_scale, e.arg()))
    }

    /// `E#(z) = conj E(z̄)`.
    pub fn sharp(&self, z: C64) -> Result<C64> {
        Ok(self.eval(z.conj())?.conj())
    }

    pub fn derivative(&self, z: C64) -> Result<C64> {
        Ok(self.combine(&self.phi.dz(z, self.c)?))
    }

    /// `[E(z)E(ζ)* − E(ζ*)E(z*)*] / (2i(ζ* − z))`, with the derivative limit
    /// when `|ζ* − z| < 1e-6`.
    pub fn structure_kernel(&self, zeta: C64, z: C64) -> Result<C64> {
        let w = zeta.conj();
        let two_i = C64::new(0.0, 2.0);
        if (w - z).norm() < 1e-6 {
            let ez = self.eval(z)?;
            let esz = self.sharp(z)?;
            let dez = self.derivative(z)?;
            let desz = self.derivative(z.conj())?.conj();
            return Ok((ez * desz - dez * esz) / two_i);
        }
        let n = self.eval(z)? * self.eval(zeta)?.conj() - self.eval(w)? * self.eval(z.conj())?.conj();
        Ok(n / (two_i * (w - z)))
    }

    /// Samples `|E(z)| − |E(z̄)|` on the upper half-plane in log form.
    pub fn hermite_biehler(&self, zs: &[C64]) -> Result<HermiteBiehlerReport> {
        let mut worst = f64::INFINITY;
        let mut worst_z = [f64::NAN, f64::NAN];
        for &z in zs {
            if z.im <= 0.0 {
                return Err(Error::Config(format!("sample {z} is not in the upper half-plane")));
            }
            let (lu, _) = self.eval_log(z)?;
            let (ll, _) = self.eval_log(z.conj())?;
            if lu - ll < worst {
                worst = lu - ll;
                worst_z = [z.re, z.im];
            }
        }
        Ok(HermiteBiehlerReport {
            convention: self.convention,
            min_log_ratio: worst,
            worst_z,
            ok: worst > 0.0,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HermiteBiehlerReport {
    pub convention: Convention,
    /// Minimum of `log|E(z)| − log|E(z̄)|` over the samples.
    pub min_log_ratio: f64,
    pub worst_z: [f64; 2],
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMethod {
    Integral,
    StructureIdentity,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelValue {
    pub zeta: [f64; 2],
    pub z: [f64; 2],
    pub c: f64,
    pub value: [f64; 2],
    pub method: KernelMethod,
}

impl KernelValue {
    pub fn value(&self) -> C64 {
        C64::new(self.value[0], self.value[1])
    }
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// `K(ζ, z, c) = ∫_a^c Φ(ζ)*ᵀ R Φ(z)`.
pub fn kernel_integral(phi: &EntireSolutionHandle, zeta: C64, z: C64, c: f64, quad: &QuadSettings) -> Result<KernelValue> {
    let a = phi.expr().interval.a;
    let v = kernel_between(phi, zeta, z, a, c, quad)?;
    Ok(KernelValue {
        zeta: pair(zeta),
        z: pair(z),
        c,
        value: pair(v),
        method: KernelMethod::Integral,
    })
}

fn kernel_between(phi: &EntireSolutionHandle, zeta: C64, z: C64, lo: f64, hi: f64, quad: &QuadSettings) -> Result<C64> {
    let expr = phi.expr();
    integrate_handles(
        &[(phi, zeta), (phi, z)],
        lo,
        hi,
        |x, v| sesquilinear(&v[0], &expr.r_at(x), &v[1]),
        quad,
    )
}

/// Kernel from E alone.
pub fn kernel_structure(e: &DeBrangesFunction, zeta: C64, z: C64) -> Result<KernelValue> {
    Ok(KernelValue {
        zeta: pair(zeta),
        z: pair(z),
        c: e.c,
        value: pair(e.structure_kernel(zeta, z)?),
        method: KernelMethod::StructureIdentity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub zeta: [f64; 2],
    pub z: [f64; 2],
    pub c: f64,
    pub quotient: [f64; 2],
    pub integral: [f64; 2],
    pub absolute: f64,
    /// Absolute residual over `√(K(ζ,ζ)K(z,z))`.
    pub relative: f64,
}

/// Compares the structure quotient of E with the kernel integral.
pub fn rep_identity_residual(e: &DeBrangesFunction, zeta: C64, z: C64, quad: &QuadSettings) -> Result<IdentityResidual> {
    let q = e.structure_kernel(zeta, z)?;
    let k = kernel_integral(e.phi(), zeta, z, e.c, quad)?.value();
    let kzz = e.structure_kernel(zeta, zeta)?.re.abs();
    let kz = e.structure_kernel(z, z)?.re.abs();
    let scale = (kzz * kz).sqrt().max(f64::MIN_POSITIVE);
    let absolute = (q - k).norm();
    Ok(IdentityResidual {
        zeta: pair(zeta),
        z: pair(z),
        c: e.c,
        quotient: pair(q),
        integral: pair(k),
        absolute,
        relative: absolute / scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NestingReport {
    pub zeta: [f64; 2],
    pub c: Vec<f64>,
    /// `K(ζ, ζ, c)` accumulated along the grid.
    pub k: Vec<f64>,
    pub increments: Vec<f64>,
    /// Indices where an increment is not positive.
    pub violations: Vec<usize>,
    pub strictly_increasing: bool,
    /// Largest relative gap between the accumulated kernel and the structure identity.
    pub continuity_error: f64,
    pub smallest: f64,
}

/// `K(ζ, ζ, ·)` on an increasing grid of c values.
pub fn nesting_check(
    phi: &EntireSolutionHandle,
    zeta: C64,
    c_grid: &[f64],
    quad: &QuadSettings,
) -> Result<NestingReport> {
    if c_grid.is_empty() || c_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("c grid must be nonempty and strictly increasing".into()));
    }
    let a = phi.expr().interval.a;
    let mut edges = vec![a];
    edges.extend_from_slice(c_grid);
    let increments: Vec<f64> = edges
        .par_windows(2)
        .map(|w| kernel_between(phi, zeta, zeta, w[0], w[1], quad).map(|v| v.re))
        .collect::<Result<_>>()?;
    let mut k = Vec::with_capacity(c_grid.len());
    let mut acc = 0.0;
    for inc in &increments {
        acc += inc;
        k.push(acc);
    }
    let violations: Vec<usize> = increments
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v <= 0.0)
        .map(|(i, _)| i)
        .collect();
    let continuity_error = c_grid
        .par_iter()
        .zip(k.par_iter())
        .map(|(&c, &kv)| -> Result<f64> {
            let e = DeBrangesFunction::new(phi, c)?;
            let s = e.structure_kernel(zeta, zeta)?.re;
            Ok((s - kv).abs() / s.abs().max(kv.abs()).max(f64::MIN_POSITIVE))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(NestingReport {
        zeta: pair(zeta),
        c: c_grid.to_vec(),
        smallest: k[0],
        k,
        increments,
        strictly_increasing: violations.is_empty(),
        violations,
        continuity_error,
    })
}

/// `f̂(z) = ∫ f*ᵀ R Φ(z)` for f supported in `[lo, hi]`.
pub fn transform_hat<F>(
    f: F,
    support: (f64, f64),
    phi: &EntireSolutionHandle,
    zs: &[C64],
    quad: &QuadSettings,
) -> Result<Vec<C64>>
where
    F: Fn(f64) -> CVec2 + Sync + Copy,
{
    let (lo, hi) = support;
    let iv = phi.expr().interval;
    if !(lo < hi) || lo < iv.a || hi > iv.b {
        return Err(Error::Config(format!("support [{lo}, {hi}] is not inside the interval")));
    }
    let expr = phi.expr();
    zs.par_iter()
        .map(|&z| {
            integrate_handles(
                &[(phi, z)],
                lo,
                hi,
                |x, v| sesquilinear(&f(x), &expr.r_at(x), &v[0]),
                quad,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ParsevalReport {
    /// `∫|f̂|² dρ` over the measure's window.
    pub spectral_side: f64,
    /// `∫ f*ᵀRf`.
    pub norm_squared: f64,
    pub residual: f64,
    pub atoms_used: usize,
    pub warning: Option<String>,
}

/// `|∫|f̂|²dρ − ‖f‖²| / ‖f‖²` for a measure on a window.
pub fn parseval_residual<F>(
    f: F,
    support: (f64, f64),
    phi: &EntireSolutionHandle,
    measure: &SpectralMeasure,
    quad: &QuadSettings,
) -> Result<ParsevalReport>
where
    F: Fn(f64) -> CVec2 + Sync + Copy,
{
    let expr = phi.expr();
    let (lo, hi) = support;
    let norm = adaptive(|x| sesquilinear(&f(x), &expr.r_at(x), &f(x)).re, lo, hi, 1e-14, 1e-12)?.value;
    if norm == 0.0 {
        return Ok(ParsevalReport {
            spectral_side: 0.0,
            norm_squared: 0.0,
            residual: 0.0,
            atoms_used: 0,
            warning: None,
        });
    }
    let zs: Vec<C64> = measure.atoms.iter().map(|a| C64::new(a.lambda, 0.0)).collect();
    let hats = transform_hat(f, support, phi, &zs, quad)?;
    let mut spectral = 0.0;
    let mut edge = 0.0f64;
    let n = measure.atoms.len();
    for (k, (a, h)) in measure.atoms.iter().zip(&hats).enumerate() {
        let v = a.weight * h.norm_sqr();
        spectral += v;
        if k < 3 || k + 3 >= n {
            edge = edge.max(v);
        }
    }
    let dens = &measure.density;
    if dens.len() >= 2 {
        let zs: Vec<C64> = dens.iter().map(|d| C64::new(d[0], 0.0)).collect();
        let hats = transform_hat(f, support, phi, &zs, quad)?;
        for k in 0..dens.len() - 1 {
            let w = dens[k + 1][0] - dens[k][0];
            spectral += 0.5 * w * (dens[k][1] * hats[k].norm_sqr() + dens[k + 1][1] * hats[k + 1].norm_sqr());
        }
    }
    let residual = (spectral - norm).abs() / norm;
    let warning = if edge > 1e-3 * norm {
        Some(format!("window may be too small: edge contributions reach {edge:e}"))
    } else {
        None
    };
    Ok(ParsevalReport {
        spectral_side: spectral,
        norm_squared: norm,
        residual,
        atoms_used: n,
        warning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CartwrightReport {
    pub c: f64,
    /// `(y, log|E(iy)|/y)`.
    pub type_samples: Vec<[f64; 2]>,
    pub type_estimate: f64,
    pub window: [f64; 2],
    /// `∫ log⁺|E(λ)|/(1+λ²)` over the window.
    pub log_integral: f64,
    /// Polynomial growth exponent of `|E(λ)|` fitted at the window edges.
    pub growth_exponent: f64,
    pub tail_bound: f64,
}

/// Exponential type along the imaginary axis and the logarithmic integral on a window.
pub fn cartwright_diagnostics(e: &DeBrangesFunction, ys: &[f64], window: (f64, f64)) -> Result<CartwrightReport> {
    let type_samples: Vec<[f64; 2]> = ys
        .par_iter()
        .map(|&y| -> Result<[f64; 2]> {
            let (lu, _) = e.eval_log(C64::new(0.0, y))?;
            let (ll, _) = e.eval_log(C64::new(0.0, -y))?;
            Ok([y, lu.max(ll) / y])
        })
        .collect::<Result<_>>()?;
    let type_estimate = type_samples.iter().map(|s| s[1]).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window;
    let logp = |l: f64| -> f64 { e.eval_log(C64::new(l, 0.0)).map(|v| v.0.max(0.0)).unwrap_or(f64::NAN) };
    let log_integral = adaptive(|l| logp(l) / (1.0 + l * l), lo, hi, 1e-10, 1e-8)?.value;
    let w = lo.abs().min(hi.abs());
    let mut growth = 0.0f64;
    let mut level = 0.0f64;
    if w > 2.0 {
        for edge in [lo, hi] {
            let s = edge.signum();
            let far = logp(s * w);
            let near = logp(s * 0.5 * w);
            growth = growth.max((far - near) / 2f64.ln());
            level = level.max(far);
        }
    }
    let growth = growth.max(0.0);
    let tail_bound = if w > 1.0 {
        2.0 * (growth * (w.ln() + 1.0) + (level - growth * w.ln()).max(0.0)) / w
    } else {
        f64::INFINITY
    };
    Ok(CartwrightReport {
        c: e.c,
        type_samples,
        type_estimate,
        window: [lo, hi],
        log_integral,
        growth_exponent: growth,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{fundamental_system, singular_phi, BoundaryCondition, Endpoint};
    use crate::coefficients::{DiracExpression, Interval, RadialSpec};
    use crate::ode::PropagationSettings;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn free_phi() -> EntireSolutionHandle {
        let s = PropagationSettings::default();
        let expr = Arc::new(DiracExpression::free(Interval::new(0.0, f64::INFINITY).unwrap()));
        let bc = BoundaryCondition::angle(Endpoint::Left, 0.0).unwrap();
        fundamental_system(expr, &bc, 1.0, &s).unwrap().phi
    }

    #[test]
    fn free_e_and_convention() {
        let phi = free_phi();
        let e = DeBrangesFunction::new(&phi, 1.3).unwrap();
        assert_eq!(e.convention, Convention::Conjugate);
        let z = c(0.7, 0.4);
        let exact = c(0.0, 1.0) * (c(0.0, -1.0) * z * 1.3).exp();
        assert!((e.eval(z).unwrap() - exact).norm() < 1e-12);
        let hb = e.hermite_biehler(&[c(0.0, 1.0), c(3.0, 0.1)]).unwrap();
        assert!(hb.ok);
        let std = DeBrangesFunction::with_convention(&phi, 1.3, Convention::Standard).unwrap();
        let q = std.structure_kernel(c(0.0, 1.0), c(0.0, 1.0)).unwrap();
        assert!(q.re < 0.0);
    }

    #[test]
    fn free_kernel_closed_form() {
        let phi = free_phi();
        let q = QuadSettings::default();
        let (y, cc) = (1.5, 0.8);
        let k = kernel_integral(&phi, c(0.0, y), c(0.0, y), cc, &q).unwrap().value();
        let exact = (2.0 * y * cc).sinh() / (2.0 * y);
        assert!((k - exact).norm() < 1e-12 * exact);
        let k0 = kernel_integral(&phi, c(0.0, 0.0), c(0.0, 0.0), cc, &q).unwrap().value();
        assert!((k0 - cc).norm() < 1e-13);
        let e = DeBrangesFunction::new(&phi, cc).unwrap();
        let r = rep_identity_residual(&e, c(0.0, y), c(0.0, y), &q).unwrap();
        assert!(r.relative < 1e-10, "{r:?}");
        let r = rep_identity_residual(&e, c(1.0, 2.0), c(-0.5, 0.3), &q).unwrap();
        assert!(r.relative < 1e-9, "{r:?}");
        let r = rep_identity_residual(&e, c(1.0, 2.0), c(1.0, -2.0), &q).unwrap();
        assert!(r.relative < 1e-8, "{r:?}");
    }

    #[test]
    fn radial_kernel_power() {
        let s = PropagationSettings::default();
        let phi = singular_phi(&RadialSpec::pure(1.0, f64::INFINITY), &s).unwrap();
        let q = QuadSettings::default();
        let k = kernel_integral(&phi, c(0.0, 0.0), c(0.0, 0.0), 1.2, &q).unwrap().value();
        assert!((k.re - 1.2f64.powi(3) / 3.0).abs() < 1e-11, "{k}");
        let e = DeBrangesFunction::new(&phi, 1.2).unwrap();
        let e0 = e.eval(c(0.0, 0.0)).unwrap();
        assert!((e0.norm() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn nesting_free() {
        let phi = free_phi();
        let grid: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
        let r = nesting_check(&phi, c(0.0, 1.0), &grid, &QuadSettings::default()).unwrap();
        assert!(r.strictly_increasing);
        for (cv, kv) in r.c.iter().zip(&r.k) {
            assert!((kv - (2.0 * cv).sinh() / 2.0).abs() < 1e-12);
        }
        assert!(r.continuity_error < 1e-10);
    }

    #[test]
    fn transform_free_indicator() {
        let phi = free_phi();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let zs = [c(0.5, 0.0), c(2.0, 1.0)];
        let h = transform_hat(|_| CVec2::new(zero, one), (0.0, 1.1), &phi, &zs, &QuadSettings::default()).unwrap();
        for (z, v) in zs.iter().zip(&h) {
            let exact = (z * 1.1).sin() / z;
            assert!((v - exact).norm() < 1e-12, "{z}");
        }
    }

    #[test]
    fn cartwright_free() {
        let phi = free_phi();
        let e = DeBrangesFunction::new(&phi, 0.9).unwrap();
        let r = cartwright_diagnostics(&e, &[10.0, 50.0, 100.0], (-50.0, 50.0)).unwrap();
        assert!((r.type_estimate - 0.9).abs() < 1e-9, "{r:?}");
        assert!(r.log_integral.abs() < 1e-9);
    }
}
