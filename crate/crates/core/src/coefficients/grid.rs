//! Tabulated scalar fields with linear or natural-cubic interpolation.

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

/// Samples `values[i] = f(nodes[i])` on strictly increasing nodes.
#[derive(Debug, Clone)]
pub struct Grid {
    nodes: Vec<f64>,
    values: Vec<f64>,
    order: Interpolation,
    // second derivatives of the natural spline at the nodes
    second: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, order: Interpolation) -> Result<Grid, Error> {
        if nodes.len() != values.len() {
            return Err(Error::Config(format!(
                "grid has {} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.len() < 2 {
            return Err(Error::Config("grid needs at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("grid nodes must be strictly increasing".into()));
        }
        if values.iter().chain(&nodes).any(|v| !v.is_finite()) {
            return Err(Error::Config("grid contains non-finite entries".into()));
        }
        let second = match order {
            Interpolation::Linear => vec![0.0; nodes.len()],
            Interpolation::Cubic => natural_spline(&nodes, &values),
        };
        Ok(Grid {
            nodes,
            values,
            order,
            second,
        })
    }

    /// Uniform sampling of `f` on [lo, hi] with `n` nodes.
    pub fn sample<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize, order: Interpolation) -> Result<Grid, Error> {
        let nodes: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Grid::new(nodes, values, order)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn order(&self) -> Interpolation {
        self.order
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.span();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = self.nodes.partition_point(|&n| n <= x);
        Some(i.clamp(1, self.nodes.len() - 1) - 1)
    }

    /// Interpolated value; NaN outside the sampled span.
    pub fn eval(&self, x: f64) -> f64 {
        let Some(i) = self.locate(x) else {
            return f64::NAN;
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        match self.order {
            Interpolation::Linear => y0 + t * (y1 - y0),
            Interpolation::Cubic => {
                let a = 1.0 - t;
                let (m0, m1) = (self.second[i], self.second[i + 1]);
                a * y0 + t * y1 + ((a * a * a - a) * m0 + (t * t * t - t) * m1) * h * h / 6.0
            }
        }
    }

    /// Derivative of the interpolant; NaN outside the sampled span.
    pub fn derivative(&self, x: f64) -> f64 {
        let Some(i) = self.locate(x) else {
            return f64::NAN;
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        match self.order {
            Interpolation::Linear => (y1 - y0) / h,
            Interpolation::Cubic => {
                let a = 1.0 - t;
                let (m0, m1) = (self.second[i], self.second[i + 1]);
                (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * t * t - 1.0) * m1) * h / 6.0
            }
        }
    }
}

/// Second derivatives of the natural cubic spline (tridiagonal solve).
fn natural_spline(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    // forward elimination over interior rows 1..n-1
    for i in 2..n - 1 {
        let lower = (x[i] - x[i - 1]) / 6.0;
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
        m[i] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}
