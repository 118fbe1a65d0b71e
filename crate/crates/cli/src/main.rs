mod output;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dirac_spectral::boundary::{classify_endpoint, volterra_diagnostics, Endpoint};
use dirac_spectral::debranges::{cartwright_diagnostics, nesting_check, rep_identity_residual, DeBrangesFunction};
use dirac_spectral::gauge::{
    gauge_rotate, invariance_harness, kill_potential, map_frame, map_right_data, normalize_det, normalize_trace,
    normalize_weight, pushforward, smoothed_first_moment, compare_moments, transform_from_spec, AngleField, LiouvilleTransform, Probes, TransformSpec,
};
use dirac_spectral::ode::{QuadSettings, C64};
use dirac_spectral::weyl::{
    eigenvalues_of, herglotz_check, spectral_measure, two_spectra_report, MeasureSettings, SpectrumSettings,
    TwoSpectraSetup, WeylFunction,
};
use dirac_spectral::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use output::{csv, Output};
use problem::Problem;

#[derive(Parser, Debug)]
#[command(name = "dirac", version, about = "Spectral computations for one-dimensional Dirac operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues in a window.
    Spectrum(Common),
    /// M(z) at the given points.
    Weyl(Common),
    /// Spectral measure: atoms, density and linear coefficient.
    Measure(Common),
    /// Kernel nesting, structure identity, Hermite-Biehler and Cartwright diagnostics.
    KernelCheck(Common),
    /// Invariance of spectral data under a Liouville transformation.
    Gauge(GaugeArgs),
    /// Endpoint classification and small-x asymptotics of the radial family.
    Radial(Common),
    /// Two spectra of a problem and of its transform.
    TwoSpectra(GaugeArgs),
    /// Randomized self-checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    /// Complex sample such as 0.5+1i (repeatable).
    #[arg(long = "z", value_parser = parse_z, allow_hyphen_values = true)]
    z: Vec<C64>,
    /// Comma-separated ε schedule.
    #[arg(long, value_parser = parse_list)]
    eps: Option<List>,
    /// LO:HI:N or a comma-separated list.
    #[arg(long = "c-grid", value_parser = parse_grid)]
    c_grid: Option<List>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Normalization {
    Weight,
    Trace,
    Potential,
    Det,
}

#[derive(Args, Debug, Clone)]
struct GaugeArgs {
    #[command(flatten)]
    common: Common,
    /// JSON transform spec; overrides the problem's transform.
    #[arg(long)]
    transform: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "transform")]
    normalize: Option<Normalization>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Gauge,
    Herglotz,
    Kernel,
    Rigidity,
    All,
}

#[derive(Args, Debug, Clone)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
struct List(Vec<f64>);

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_z(s: &str) -> std::result::Result<C64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return Ok(C64::new(parse_f64(&t)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => parse_f64(v)?,
    };
    Ok(C64::new(parse_f64(re)?, im))
}

fn parse_list(s: &str) -> std::result::Result<List, String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<std::result::Result<_, _>>()?;
    Ok(List(v))
}

fn parse_grid(s: &str) -> std::result::Result<List, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts[..] {
        [lo, hi, n] => {
            let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
            let n: usize = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
            if n < 2 || !(hi > lo) {
                return Err("grid needs LO < HI and N ≥ 2".into());
            }
            Ok(List((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()))
        }
        [_] => parse_list(s),
        _ => Err(format!("bad grid {s:?}")),
    }
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn window(c: &Common) -> Result<Option<(f64, f64)>> {
    match c.window.as_deref() {
        None => Ok(None),
        Some([lo, hi]) if lo < hi && lo.is_finite() && hi.is_finite() => Ok(Some((*lo, *hi))),
        Some(w) => Err(config(format!("window {w:?} is empty"))),
    }
}

fn require_window(c: &Common) -> Result<(f64, f64)> {
    window(c)?.ok_or_else(|| config("this command needs --window LO HI"))
}

fn tol(c: &Common, default: f64) -> Result<f64> {
    match c.tol {
        Some(t) if t > 0.0 => Ok(t),
        Some(t) => Err(config(format!("tolerance {t} is not positive"))),
        None => Ok(default),
    }
}

fn zs_or(c: &Common, default: &[C64]) -> Vec<C64> {
    if c.z.is_empty() {
        default.to_vec()
    } else {
        c.z.clone()
    }
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn provenance(c: &Common, p: &Problem, extra: Value) -> Value {
    json!({
        "problem_file": c.problem,
        "problem": p.source,
        "propagation": p.settings,
        "quadrature": QuadSettings::default(),
        "spectrum": SpectrumSettings::default(),
        "anchor": p.anchor,
        "window": c.window,
        "z": c.z.iter().map(|z| pair(*z)).collect::<Vec<_>>(),
        "eps": c.eps,
        "c_grid": c.c_grid,
        "seed": c.seed,
        "tol": c.tol,
        "extra": extra,
    })
}

fn report(command: &str, c: &Common, p: &Problem, extra: Value, result: Value, pass: Option<bool>) -> Value {
    json!({
        "command": command,
        "status": match pass { Some(false) => "fail", _ => "ok" },
        "pass": pass,
        "settings": provenance(c, p, extra),
        "result": result,
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn cmd_spectrum(c: &Common) -> Result<(Output, bool)> {
    let p = Problem::load(&c.problem)?;
    let win = require_window(c)?;
    let w = p.weyl()?;
    if !w.right.is_discrete() {
        return Err(config("spectrum needs a regular, limit-circle or truncated right end"));
    }
    let settings = SpectrumSettings::default();
    let sp = eigenvalues_of(&w.characteristic()?, win, &settings)?;
    let out = Output::new(report("spectrum", c, &p, Value::Null, to_value(&sp), None)).table("spectrum.csv", sp.to_csv());
    Ok((out, true))
}

fn cmd_weyl(c: &Common) -> Result<(Output, bool)> {
    let p = Problem::load(&c.problem)?;
    let w = p.weyl()?;
    let zs = zs_or(c, &[C64::new(0.0, 1.0)]);
    let values = zs.par_iter().map(|&z| w.value(z)).collect::<Result<Vec<_>>>()?;
    let upper: Vec<C64> = zs.iter().copied().filter(|z| z.im > 0.0).collect();
    let herglotz = if upper.is_empty() {
        None
    } else {
        Some(herglotz_check(&w, &upper)?)
    };
    let table = csv("re,im,m_re,m_im", values.iter().map(|v| [v.re, v.im, v.m_re, v.m_im]));
    let result = json!({ "values": values, "herglotz": herglotz, "match": w.match_x });
    let out = Output::new(report("weyl", c, &p, Value::Null, result, None)).table("weyl.csv", table);
    Ok((out, true))
}

fn cmd_measure(c: &Common) -> Result<(Output, bool)> {
    let p = Problem::load(&c.problem)?;
    let win = require_window(c)?;
    let w = p.weyl()?;
    let mut settings = MeasureSettings::default();
    if let Some(e) = &c.eps {
        if e.0.iter().any(|v| !(*v > 0.0)) {
            return Err(config("ε values must be positive"));
        }
        settings.eps = e.0.clone();
    }
    let m = spectral_measure(&w, win, &settings)?;
    let pass = !m.atoms.iter().any(|a| a.flagged);
    let out = Output::new(report("measure", c, &p, to_value(&settings), to_value(&m), Some(pass)))
        .table("atoms.csv", m.atoms_csv())
        .table("density.csv", m.density_csv());
    Ok((out, pass))
}

fn default_c_grid(p: &Problem, n: usize) -> Vec<f64> {
    let iv = p.expr.interval;
    let lo = if iv.left_finite() { iv.a } else { p.anchor - 5.0 };
    let hi = if iv.right_finite() { iv.b } else { p.anchor + 5.0 };
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}

fn random_upper(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(0.05..radius)))
        .collect()
}

fn kernel_suite(w: &WeylFunction, c: f64, rng: &mut ChaCha8Rng, tol: f64) -> Result<(Value, bool)> {
    let quad = QuadSettings::default();
    let e = DeBrangesFunction::new(&w.frame.phi, c)?;
    let mut pairs: Vec<(C64, C64)> = (0..8)
        .map(|_| {
            let mut pick = || C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            (pick(), pick())
        })
        .collect();
    pairs.push((C64::new(0.0, 1.0), C64::new(0.0, 1.0)));
    let residuals = pairs
        .par_iter()
        .map(|&(zeta, z)| rep_identity_residual(&e, zeta, z, &quad))
        .collect::<Result<Vec<_>>>()?;
    let worst = residuals.iter().map(|r| r.relative).fold(0.0, f64::max);
    let hb = e.hermite_biehler(&random_upper(rng, 16, 5.0))?;
    let pass = worst < tol && hb.ok;
    Ok((
        json!({ "c": c, "convention": e.convention, "auto_selected": e.auto_selected,
                "max_relative_residual": worst, "residuals": residuals, "hermite_biehler": hb, "pass": pass }),
        pass,
    ))
}

fn cmd_kernel_check(c: &Common) -> Result<(Output, bool)> {
    let p = Problem::load(&c.problem)?;
    let w = p.weyl()?;
    let zeta = c.z.first().copied().unwrap_or(C64::new(0.0, 1.0));
    let grid = c.c_grid.clone().map(|g| g.0).unwrap_or_else(|| default_c_grid(&p, 20));
    if grid.iter().any(|&x| !p.expr.interval.contains_closed(x)) {
        return Err(config("c grid leaves the interval"));
    }
    let quad = QuadSettings::default();
    let nesting = nesting_check(&w.frame.phi, zeta, &grid, &quad)?;
    let c_last = *grid.last().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let (identity, id_pass) = kernel_suite(&w, c_last, &mut rng, tol(c, 1e-8)?)?;
    let e = DeBrangesFunction::new(&w.frame.phi, c_last)?;
    let cart = cartwright_diagnostics(&e, &[5.0, 10.0, 20.0], window(c)?.unwrap_or((-20.0, 20.0)))?;
    let pass = id_pass && nesting.strictly_increasing;
    let table = csv(
        "c,k,increment",
        nesting.c.iter().zip(&nesting.k).zip(&nesting.increments).map(|((a, b), d)| [*a, *b, *d]),
    );
    let result = json!({ "nesting": nesting, "identity": identity, "cartwright": cart });
    let out = Output::new(report("kernel-check", c, &p, Value::Null, result, Some(pass))).table("kernel.csv", table);
    Ok((out, pass))
}

fn chosen_transform(g: &GaugeArgs, p: &Problem) -> Result<LiouvilleTransform> {
    if let Some(n) = g.normalize {
        let t = match n {
            Normalization::Weight => normalize_weight(&p.expr)?.1,
            Normalization::Trace => normalize_trace(&p.expr)?.1,
            Normalization::Potential => kill_potential(&p.expr, &p.settings)?.1,
            Normalization::Det => normalize_det(&p.expr)?.1,
        };
        return Ok(t);
    }
    let spec = match &g.transform {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<TransformSpec>(&text).map_err(|e| config(format!("transform file: {e}")))?
        }
        None => p.file.transform.clone().unwrap_or_default(),
    };
    transform_from_spec(&p.expr, &spec, &p.settings)
}

fn default_probes(c: &Common, p: &Problem, w: &WeylFunction) -> Result<Probes> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let zs = if c.z.is_empty() { random_upper(&mut rng, 10, 4.0) } else { c.z.clone() };
    let window = if w.right.is_discrete() { window(c)? } else { None };
    Ok(Probes {
        zs,
        window,
        c_grid: c.c_grid.clone().map(|g| g.0).unwrap_or_else(|| default_c_grid(p, 3)),
        ..Probes::default()
    })
}

fn cmd_gauge(g: &GaugeArgs) -> Result<(Output, bool)> {
    let c = &g.common;
    let p = Problem::load(&c.problem)?;
    let w = p.weyl()?;
    let t = chosen_transform(g, &p)?;
    let probes = default_probes(c, &p, &w)?;
    let r = invariance_harness(&w, &t, &probes)?;
    let pass = r.max_deviation < tol(c, 1e-6)?;
    let table = csv("re,im,deviation", r.m_deviations.iter().copied());
    let extra = json!({ "transform": t.label, "probes": probes });
    let out = Output::new(report("gauge", c, &p, extra, to_value(&r), Some(pass))).table("gauge.csv", table);
    Ok((out, pass))
}

fn cmd_radial(c: &Common) -> Result<(Output, bool)> {
    let p = Problem::load(&c.problem)?;
    let spec = p.radial.clone().ok_or_else(|| config("radial needs a radial block in the problem file"))?;
    let classification = classify_endpoint(&p.expr, Endpoint::Left, C64::new(0.0, 1.0), &p.settings)?;
    let frame = p.frame()?;
    let zs = zs_or(c, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(1.0, 1.0)]);
    let xs = [1e-2, 1e-3, 1e-4];
    let kappa = spec.kappa;
    let rows = zs
        .par_iter()
        .flat_map_iter(|&z| xs.iter().map(move |&x| (z, x)))
        .map(|(z, x)| -> Result<[f64; 6]> {
            let f = frame.phi.eval(z, x)?;
            let r2 = f[1] * x.powf(-kappa);
            let r1 = f[0] * x.powf(kappa);
            Ok([z.re, z.im, x, r2.re, r2.im, r1.norm()])
        })
        .collect::<Result<Vec<_>>>()?;
    let volterra = zs
        .iter()
        .map(|&z| volterra_diagnostics(&spec, z))
        .collect::<Result<Vec<_>>>()?;
    let smallest = xs[xs.len() - 1];
    let (dev2, dev1) = rows
        .iter()
        .filter(|r| r[2] == smallest && r[0].hypot(r[1]) <= 2.0)
        .fold((0.0f64, 0.0f64), |(a, b), r| (a.max((r[3] - 1.0).hypot(r[4])), b.max(r[5])));
    let t = tol(c, 1e-6)?;
    let pass = dev2 < t && dev1 < t;
    let result = json!({
        "kappa": kappa,
        "classification": classification,
        "volterra": volterra,
        "max_phi2_deviation": dev2,
        "max_phi1_scaled": dev1,
        "at_x": smallest,
    });
    let out = Output::new(report("radial", c, &p, Value::Null, result, Some(pass)))
        .table("radial.csv", csv("re,im,x,phi2_scaled_re,phi2_scaled_im,phi1_scaled_abs", rows));
    Ok((out, pass))
}

fn cmd_two_spectra(g: &GaugeArgs) -> Result<(Output, bool)> {
    let c = &g.common;
    let p = Problem::load(&c.problem)?;
    let win = require_window(c)?;
    let w = p.weyl()?;
    if !w.right.is_discrete() {
        return Err(config("two-spectra needs discrete right data"));
    }
    let t_frame = p.t_frame()?;
    let t = chosen_transform(g, &p)?;
    let image = pushforward(&p.expr, &t)?;
    let (frame_b, _) = map_frame(&w.frame, &image, &t, &p.settings)?;
    let (t_frame_b, _) = map_frame(&t_frame, &image, &t, &p.settings)?;
    let wb = WeylFunction::new(frame_b, map_right_data(&w.right, &t)?, p.settings)?;
    let a = TwoSpectraSetup {
        weyl: w,
        phi_t: t_frame.phi,
    };
    let b = TwoSpectraSetup {
        weyl: wb,
        phi_t: t_frame_b.phi,
    };
    let tl = tol(c, 1e-6)?;
    let r = two_spectra_report(&a, &b, win, &SpectrumSettings::default(), tl)?;
    let shifted_ok = [&r.a, &r.b]
        .iter()
        .all(|s| s.sigma_t.is_empty() || s.shifted_distance <= tl);
    let pass = r.agree && shifted_ok;
    let mut rows = Vec::new();
    for (k, l) in r.a.sigma_s.iter().enumerate() {
        rows.push([0.0, k as f64, *l]);
    }
    for (k, l) in r.a.sigma_t.iter().enumerate() {
        rows.push([1.0, k as f64, *l]);
    }
    let extra = json!({ "transform": t.label });
    let out = Output::new(report("two-spectra", c, &p, extra, to_value(&r), Some(pass)))
        .table("two_spectra.csv", csv("set,index,lambda", rows));
    Ok((out, pass))
}

/// Transforms applicable to a problem, with the reason for each one skipped.
fn generated_transforms(p: &Problem, rng: &mut ChaCha8Rng) -> Vec<(String, Result<LiouvilleTransform>)> {
    let phi0 = rng.gen_range(-1.5..1.5);
    let slope = rng.gen_range(-1.0..1.0);
    let shift = rng.gen_range(-1.0..1.0);
    let anchor = p.anchor;
    let e = &p.expr;
    vec![
        (
            format!("constant rotation {phi0}"),
            gauge_rotate(e, AngleField::Constant(phi0), 0.0).map(|r| r.1),
        ),
        (
            format!("rotation with slope {slope}, shift {shift}"),
            gauge_rotate(e, AngleField::Linear { slope, anchor }, shift).map(|r| r.1),
        ),
        ("normalize weight".into(), normalize_weight(e).map(|r| r.1)),
        ("normalize trace".into(), normalize_trace(e).map(|r| r.1)),
        ("normalize det".into(), normalize_det(e).map(|r| r.1)),
        ("kill potential".into(), kill_potential(e, &p.settings).map(|r| r.1)),
    ]
}

/// Same radial family with equal and with perturbed scalar potential.
fn rigidity_suite(p: &Problem, w: &WeylFunction, c: &Common) -> Result<Option<(Value, bool)>> {
    let Some(block) = &p.file.radial else {
        return Ok(None);
    };
    let window = window(c)?.unwrap_or((-2.0, 2.0));
    let eps = 0.1;
    let threshold = tol(c, 1e-3)?;
    let same = p.weyl()?;
    let mut file = p.file.clone();
    let perturbation = "0.2/(1+x^2)";
    file.radial = Some(problem::RadialBlock {
        q_sc: format!("({})+{perturbation}", block.q_sc),
        ..block.clone()
    });
    let text = serde_json::to_string(&file).expect("problem serializes");
    let other = Problem::from_json(&text)?.weyl()?;
    let m = smoothed_first_moment(w, window, eps)?;
    let equal = compare_moments(m, smoothed_first_moment(&same, window, eps)?, window, eps, threshold);
    let perturbed = compare_moments(m, smoothed_first_moment(&other, window, eps)?, window, eps, threshold);
    let ok = !equal.distinguished && equal.discrepancy == 0.0 && perturbed.distinguished;
    Ok(Some((
        json!({ "perturbation": perturbation, "equal": equal, "perturbed": perturbed, "pass": ok }),
        ok,
    )))
}

fn cmd_verify(v: &VerifyArgs) -> Result<(Output, bool)> {
    let c = &v.common;
    let p = Problem::load(&c.problem)?;
    let w = p.weyl()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut suites = serde_json::Map::new();
    let mut pass = true;
    let want = |s: Suite| v.suite == s || v.suite == Suite::All;
    if want(Suite::Herglotz) {
        let h = herglotz_check(&w, &random_upper(&mut rng, 10, 5.0))?;
        pass &= h.ok;
        suites.insert("herglotz".into(), to_value(&h));
    }
    if want(Suite::Kernel) {
        let (r, ok) = kernel_suite(&w, p.anchor, &mut rng, tol(c, 1e-8)?)?;
        pass &= ok;
        suites.insert("kernel".into(), r);
    }
    if want(Suite::Gauge) {
        let t = tol(c, 1e-6)?;
        let probes = Probes {
            zs: random_upper(&mut rng, 5, 3.0),
            window: if w.right.is_discrete() { window(c)? } else { None },
            c_grid: vec![p.anchor],
            ..Probes::default()
        };
        let mut entries = Vec::new();
        for (name, built) in generated_transforms(&p, &mut rng) {
            let entry = match built.and_then(|tr| invariance_harness(&w, &tr, &probes)) {
                Ok(r) => {
                    let ok = r.max_deviation < t;
                    pass &= ok;
                    json!({ "transform": name, "pass": ok, "report": r })
                }
                Err(Error::Config(why)) => json!({ "transform": name, "skipped": why }),
                Err(err) => {
                    pass = false;
                    json!({ "transform": name, "pass": false, "error": err.to_string() })
                }
            };
            entries.push(entry);
        }
        suites.insert("gauge".into(), Value::Array(entries));
    }
    if want(Suite::Rigidity) {
        match rigidity_suite(&p, &w, c)? {
            Some((r, ok)) => {
                pass &= ok;
                suites.insert("rigidity".into(), r);
            }
            None if v.suite == Suite::Rigidity => return Err(config("the rigidity suite needs a radial problem")),
            None => {}
        }
    }
    let extra = json!({ "suite": format!("{:?}", v.suite).to_lowercase() });
    Ok((Output::new(report("verify", c, &p, extra, Value::Object(suites), Some(pass))), pass))
}

fn out_dir(cmd: &Command) -> Option<&Path> {
    let c = match cmd {
        Command::Spectrum(c) | Command::Weyl(c) | Command::Measure(c) | Command::KernelCheck(c) | Command::Radial(c) => c,
        Command::Gauge(g) | Command::TwoSpectra(g) => &g.common,
        Command::Verify(v) => &v.common,
    };
    c.out.as_deref()
}

fn run(cli: &Cli) -> Result<(Output, bool)> {
    match &cli.command {
        Command::Spectrum(c) => cmd_spectrum(c),
        Command::Weyl(c) => cmd_weyl(c),
        Command::Measure(c) => cmd_measure(c),
        Command::KernelCheck(c) => cmd_kernel_check(c),
        Command::Gauge(g) => cmd_gauge(g),
        Command::Radial(c) => cmd_radial(c),
        Command::TwoSpectra(g) => cmd_two_spectra(g),
        Command::Verify(v) => cmd_verify(v),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = out_dir(&cli.command).map(Path::to_path_buf);
    match run(&cli) {
        Ok((output, pass)) => {
            if let Err(e) = output.emit(out.as_deref()) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(if pass { 0 } else { 1 })
        }
        Err(e @ (Error::Config(_) | Error::Parse(_) | Error::NotSymmetric { .. } | Error::NotPositive { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let diag = Output::new(json!({ "status": "error", "error": e.to_string(), "detail": format!("{e:?}") }));
            if let Err(io) = diag.emit(out.as_deref()) {
                eprintln!("error: cannot write diagnostics: {io}");
            }
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_flags() {
        assert_eq!(parse_z("0+1i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_z("-2.5-0.5i").unwrap(), C64::new(-2.5, -0.5));
        assert_eq!(parse_z("1e-3+2e+1i").unwrap(), C64::new(1e-3, 20.0));
        assert_eq!(parse_z("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_z("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_z("3").unwrap(), C64::new(3.0, 0.0));
        assert!(parse_z("1+xi").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:3").unwrap().0, vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.1,0.2").unwrap().0, vec![0.1, 0.2]);
        assert!(parse_grid("1:0:3").is_err());
        assert_eq!(parse_list("1e-2,1e-3").unwrap().0, vec![1e-2, 1e-3]);
        assert!(parse_list("").is_err());
    }

    #[test]
    fn clap_definition() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
