//! Piecewise-linear paths in `R^d` starting at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};
use crate::kernel::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPath {
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseLinearPath {
    pub fn new(knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return contract("knots and values must be nonempty and of equal length");
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) || *knots.last().unwrap() > 1.0 {
            return domain("knots must start at 0, increase strictly and stay within [0, 1]");
        }
        let d = values[0].len();
        if d == 0 || values.iter().any(|v| v.len() != d) {
            return contract("all knot values must share one dimension d >= 1");
        }
        if values[0].iter().any(|&x| x != 0.0) {
            return domain("a path must start at the origin");
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return domain("path values must be finite");
        }
        Ok(Self { knots, values })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            knots: vec![0.0, 1.0],
            values: vec![vec![0.0; d]; 2],
        }
    }

    /// `phi(t) = t v`.
    pub fn straight(v: &Point) -> Self {
        Self {
            knots: vec![0.0, 1.0],
            values: vec![vec![0.0; v.dim()], v.coords().to_vec()],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Value at `t`, constant after the last knot.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.knots.len();
        if t >= self.knots[n - 1] {
            return self.values[n - 1].clone();
        }
        if t <= 0.0 {
            return self.values[0].clone();
        }
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let s = (t - a) / (b - a);
        self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(x, y)| x + s * (y - x))
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v.iter().map(|x| s * x).collect()).collect(),
        }
    }
}
