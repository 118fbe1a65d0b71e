//! Problem files.
//!
//! ```json
//! {
//!   "interval": [0, "inf"],
//!   "q": ["0", "0", "0", "0"],
//!   "r": ["1", "0", "0", "1"],
//!   "left": {"angle": 0},
//!   "right": {"limit_point": {"seed": 2}},
//!   "anchor": 1
//! }
//! ```
//!
//! `q` and `r` take four entry expressions in x (row-major) or a grid
//! `{"x": [...], "entries": [[q11...], [q12...], [q21...], [q22...]], "order": "cubic"}`.
//! A `"radial": {"kappa": 1, "q_sc": "0", "q_am": "0", "b": "inf"}` block
//! replaces interval, q, r and left.

use std::path::Path;
use std::sync::Arc;

use dirac_spectral::boundary::{fundamental_system, radial_frame, BoundaryCondition, Endpoint, FundamentalSystem};
use dirac_spectral::coefficients::grid::{Grid, Interpolation};
use dirac_spectral::coefficients::{
    make_radial, validate_hypotheses, DiracExpression, Interval, MatrixField, RadialSpec, SamplePlan, ScalarField,
};
use dirac_spectral::gauge::TransformSpec;
use dirac_spectral::ode::PropagationSettings;
use dirac_spectral::weyl::{RightData, Truncation, WeylFunction};
use dirac_spectral::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A number or one of the strings "inf", "-inf".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InfText {
    #[serde(rename = "inf", alias = "+inf", alias = "Infinity")]
    Inf,
    #[serde(rename = "-inf", alias = "-Infinity")]
    NegInf,
}

impl Num {
    pub fn get(self) -> f64 {
        match self {
            Num::Value(v) => v,
            Num::Text(InfText::Inf) => f64::INFINITY,
            Num::Text(InfText::NegInf) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Entries([String; 4]),
    Grid {
        x: Vec<f64>,
        entries: [Vec<f64>; 4],
        #[serde(default)]
        order: Interpolation,
    },
}

impl MatrixSpec {
    fn build(&self) -> Result<MatrixField> {
        match self {
            MatrixSpec::Entries(e) => MatrixField::parse([&e[0], &e[1], &e[2], &e[3]]),
            MatrixSpec::Grid { x, entries, order } => {
                let f = |k: usize| -> Result<ScalarField> {
                    Ok(ScalarField::Grid(Arc::new(Grid::new(x.clone(), entries[k].clone(), *order)?)))
                };
                Ok(MatrixField::from_entries([f(0)?, f(1)?, f(2)?, f(3)?]))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialBlock {
    pub kappa: f64,
    #[serde(default = "zero_text")]
    pub q_sc: String,
    #[serde(default = "zero_text")]
    pub q_am: String,
    #[serde(default = "inf")]
    pub b: Num,
}

fn zero_text() -> String {
    "0".into()
}

fn inf() -> Num {
    Num::Text(InfText::Inf)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LeftSpec {
    Angle(f64),
    Reference([f64; 2]),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RightSpec {
    Angle(f64),
    Reference([f64; 2]),
    LimitCircle {
        #[serde(default)]
        angle: f64,
    },
    LimitPoint {
        seed: f64,
        /// Truncation angle; radiation data when absent.
        #[serde(default)]
        angle: Option<f64>,
    },
    Truncate {
        x: f64,
        #[serde(default)]
        angle: f64,
    },
}

impl RightSpec {
    fn build(self) -> RightData {
        match self {
            RightSpec::Angle(b) => RightData::Angle(b),
            RightSpec::Reference(u) => RightData::Reference(u),
            RightSpec::LimitCircle { angle } => RightData::LimitCircle { angle },
            RightSpec::LimitPoint { seed, angle } => RightData::LimitPoint {
                seed,
                condition: angle.map_or(Truncation::Radiation, Truncation::Angle),
            },
            RightSpec::Truncate { x, angle } => RightData::truncate_angle(x, angle),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsSpec {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_step: Option<f64>,
    pub approach_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub interval: Option<[Num; 2]>,
    #[serde(default)]
    pub q: Option<MatrixSpec>,
    #[serde(default)]
    pub r: Option<MatrixSpec>,
    #[serde(default)]
    pub radial: Option<RadialBlock>,
    #[serde(default)]
    pub left: Option<LeftSpec>,
    /// Second left condition for two-spectra runs.
    #[serde(default)]
    pub t_left: Option<LeftSpec>,
    pub right: RightSpec,
    #[serde(default)]
    pub anchor: Option<f64>,
    #[serde(rename = "match", default)]
    pub match_x: Option<f64>,
    /// Transform used by the gauge, two-spectra and verify commands.
    #[serde(default)]
    pub transform: Option<TransformSpec>,
    #[serde(default)]
    pub settings: SettingsSpec,
}

/// A loaded problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub source: Value,
    pub expr: Arc<DiracExpression>,
    pub radial: Option<RadialSpec>,
    pub settings: PropagationSettings,
    pub anchor: f64,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        Problem::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Problem> {
        let source: Value = serde_json::from_str(text).map_err(|e| config(format!("problem file: {e}")))?;
        let file: ProblemFile = serde_json::from_value(source.clone()).map_err(|e| config(format!("problem file: {e}")))?;
        let mut settings = PropagationSettings::default();
        let s = &file.settings;
        settings.rtol = s.rtol.unwrap_or(settings.rtol);
        settings.atol = s.atol.unwrap_or(settings.atol);
        settings.max_step = s.max_step.unwrap_or(settings.max_step);
        settings.approach_ratio = s.approach_ratio.unwrap_or(settings.approach_ratio);
        settings.validate()?;
        let (expr, radial) = match &file.radial {
            Some(rb) => {
                if file.interval.is_some() || file.q.is_some() || file.r.is_some() || file.left.is_some() {
                    return Err(config("a radial problem takes no interval, q, r or left"));
                }
                let spec = RadialSpec::new(
                    rb.kappa,
                    ScalarField::parse(&rb.q_sc)?,
                    ScalarField::parse(&rb.q_am)?,
                    rb.b.get(),
                );
                (make_radial(&spec)?, Some(spec))
            }
            None => {
                let iv = file.interval.ok_or_else(|| config("missing interval"))?;
                let interval = Interval::new(iv[0].get(), iv[1].get())?;
                let q = file.q.as_ref().map_or(Ok(MatrixField::zero()), MatrixSpec::build)?;
                let r = file.r.as_ref().map_or(Ok(MatrixField::identity()), MatrixSpec::build)?;
                let expr = DiracExpression::new(interval, q, r);
                validate_hypotheses(&expr, &SamplePlan::default_for(&expr.interval))?;
                (expr, None)
            }
        };
        let anchor = match file.anchor {
            Some(a) => a,
            None => default_anchor(&expr.interval),
        };
        if !expr.interval.contains(anchor) {
            return Err(config(format!("anchor {anchor} is not interior")));
        }
        Ok(Problem {
            file,
            source,
            expr: Arc::new(expr),
            radial,
            settings,
            anchor,
        })
    }

    pub fn right(&self) -> RightData {
        self.file.right.build()
    }

    fn condition(spec: LeftSpec) -> Result<BoundaryCondition> {
        match spec {
            LeftSpec::Angle(a) => BoundaryCondition::angle(Endpoint::Left, a),
            LeftSpec::Reference(u) => BoundaryCondition::reference(Endpoint::Left, u),
        }
    }

    pub fn frame(&self) -> Result<FundamentalSystem> {
        match &self.radial {
            Some(spec) => radial_frame(spec, self.anchor, &self.settings),
            None => {
                let left = self.file.left.ok_or_else(|| config("missing left condition"))?;
                fundamental_system(self.expr.clone(), &Problem::condition(left)?, self.anchor, &self.settings)
            }
        }
    }

    /// Frame for the second left condition.
    pub fn t_frame(&self) -> Result<FundamentalSystem> {
        let t = self.file.t_left.ok_or_else(|| config("two-spectra runs need t_left"))?;
        if self.radial.is_some() {
            return Err(config("two-spectra runs need a regular left endpoint"));
        }
        fundamental_system(self.expr.clone(), &Problem::condition(t)?, self.anchor, &self.settings)
    }

    pub fn weyl(&self) -> Result<WeylFunction> {
        let w = WeylFunction::new(self.frame()?, self.right(), self.settings)?;
        match self.file.match_x {
            Some(x) => w.with_match(x),
            None => Ok(w),
        }
    }
}

fn default_anchor(iv: &Interval) -> f64 {
    match (iv.left_finite(), iv.right_finite()) {
        (true, true) => 0.5 * (iv.a + iv.b),
        (true, false) => iv.a + 1.0,
        (false, true) => iv.b - 1.0,
        (false, false) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_endpoint() {
        let p = Problem::from_json(
            r#"{"interval": [0, "inf"], "left": {"angle": 0}, "right": {"limit_point": {"seed": 2}}}"#,
        )
        .unwrap();
        assert_eq!(p.expr.interval.b, f64::INFINITY);
        assert_eq!(p.anchor, 1.0);
    }

    #[test]
    fn grid_coefficients() {
        let p = Problem::from_json(
            r#"{"interval": [0, 1], "q": {"x": [0, 0.5, 1], "entries": [[0, 1, 2], [0, 0, 0], [0, 0, 0], [0, 0, 0]], "order": "linear"},
                "left": {"angle": 0}, "right": {"angle": 0}}"#,
        )
        .unwrap();
        assert!((p.expr.q_at(0.25)[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Problem::from_json(r#"{"interval": [0, 1], "right": {"angle": 0}, "bogus": 1}"#).is_err());
        assert!(Problem::from_json(r#"{"interval": [1, 0], "right": {"angle": 0}}"#).is_err());
        assert!(Problem::from_json(r#"{"interval": [0, 1], "r": ["-1", "0", "0", "1"], "right": {"angle": 0}}"#).is_err());
    }
}
