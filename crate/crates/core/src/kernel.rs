//! Gaussian heat kernels and probabilists' Hermite polynomials, evaluated in log form.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{contract, domain, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest Hermite order accepted by default.
pub const DEFAULT_N_MAX: usize = 5000;

/// Orders up to this value are evaluated with the plain (unnormalised) recurrence.
const DIRECT_MAX: usize = 64;

/// A point of the state space R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return contract("a point needs at least one coordinate");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("point coordinates must be finite");
        }
        Ok(Self(coords))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// Unit vector along the first axis.
    pub fn e1(d: usize) -> Self {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Argument and variance of a heat-kernel evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub z: Point,
    pub eps: f64,
}

/// `log p_eps^d(z)` for the centred Gaussian density with covariance `eps * I_d`.
pub fn log_heat_kernel(q: &KernelQuery, d: usize) -> Result<f64> {
    if !(q.eps > 0.0) || !q.eps.is_finite() {
        return domain(format!("heat kernel variance must be positive, got {}", q.eps));
    }
    if q.z.dim() != d {
        return contract(format!(
            "kernel argument has dimension {}, expected {d}",
            q.z.dim()
        ));
    }
    Ok(log_heat_kernel_norm_sq(q.z.norm_sq(), q.eps, d))
}

/// Unchecked kernel evaluation from `||z||^2`; the hot-loop form of [`log_heat_kernel`].
#[inline]
pub fn log_heat_kernel_norm_sq(norm_sq: f64, eps: f64, d: usize) -> f64 {
    -0.5 * d as f64 * (LN_2PI + eps.ln()) - norm_sq / (2.0 * eps)
}

/// A real number stored as sign and log-magnitude. `log_abs = -inf` encodes an exact zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub log_abs: f64,
}

impl SignedLog {
    pub fn is_zero(&self) -> bool {
        self.log_abs == f64::NEG_INFINITY
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }
}

/// Capacity settings for Hermite evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteLimits {
    pub n_max: usize,
}

impl Default for HermiteLimits {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl HermiteLimits {
    fn check(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            Err(Error::Capacity {
                requested: n,
                limit: self.n_max,
            })
        } else {
            Ok(())
        }
    }
}

/// Normalised recurrence h_n = H_n / sqrt(n!) with a running log scale.
///
/// `h_{n+1} = (x h_n - sqrt(n) h_{n-1}) / sqrt(n+1)`; the pair `(prev, cur)` is rescaled
/// whenever it leaves [1e-150, 1e150] so that no order overflows.
struct NormalisedHermite {
    x: f64,
    n: usize,
    prev: f64,
    cur: f64,
    log_scale: f64,
}

impl NormalisedHermite {
    fn new(x: f64) -> Self {
        Self {
            x,
            n: 0,
            prev: 0.0,
            cur: 1.0,
            log_scale: 0.0,
        }
    }

    fn current(&self) -> SignedLog {
        if self.cur == 0.0 {
            SignedLog {
                sign: 1.0,
                log_abs: f64::NEG_INFINITY,
            }
        } else {
            SignedLog {
                sign: self.cur.signum(),
                log_abs: self.cur.abs().ln() + self.log_scale,
            }
        }
    }

    fn step(&mut self) {
        let n = self.n as f64;
        let next = (self.x * self.cur - n.sqrt() * self.prev) / (n + 1.0).sqrt();
        self.prev = self.cur;
        self.cur = next;
        self.n += 1;
        let big = self.prev.abs().max(self.cur.abs());
        if big > 1e150 || (big < 1e-150 && big > 0.0) {
            self.prev /= big;
            self.cur /= big;
            self.log_scale += big.ln();
        }
    }
}

/// `H_n(x)` (probabilists' convention, `H_{n+1} = x H_n - n H_{n-1}`).
///
/// Orders above 64 go through the log-magnitude recurrence and may return `±inf` when the
/// value itself exceeds the f64 range; use [`hermite_log_abs`] there.
pub fn hermite_eval(n: usize, x: f64) -> Result<f64> {
    hermite_eval_with(n, x, HermiteLimits::default())
}

pub fn hermite_eval_with(n: usize, x: f64, limits: HermiteLimits) -> Result<f64> {
    limits.check(n)?;
    if n <= DIRECT_MAX {
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 0..n {
            let next = x * cur - k as f64 * prev;
            prev = cur;
            cur = next;
        }
        return Ok(cur);
    }
    let s = hermite_log_abs_with(n, x, limits)?;
    if s.is_zero() {
        Ok(0.0)
    } else {
        Ok(s.sign * (s.log_abs).exp())
    }
}

/// Sign and `log |H_n(x)|`.
pub fn hermite_log_abs(n: usize, x: f64) -> Result<SignedLog> {
    hermite_log_abs_with(n, x, HermiteLimits::default())
}

pub fn hermite_log_abs_with(n: usize, x: f64, limits: HermiteLimits) -> Result<SignedLog> {
    limits.check(n)?;
    let mut rec = NormalisedHermite::new(x);
    for _ in 0..n {
        rec.step();
    }
    let mut s = rec.current();
    if !s.is_zero() {
        s.log_abs += 0.5 * ln_factorial(n as u64);
    }
    Ok(s)
}

/// `log(H_n(x)^2 / n!)`, with exact zeros reported as `-inf`.
pub fn log_hermite_sq_over_fact(n: usize, x: f64) -> Result<f64> {
    HermiteLimits::default().check(n)?;
    let mut rec = NormalisedHermite::new(x);
    for _ in 0..n {
        rec.step();
    }
    Ok(2.0 * rec.current().log_abs)
}

/// `log(H_n(x)^2 / n!)` for every `n = 0..=n_max` in one O(n_max) pass.
pub fn log_hermite_sq_over_fact_table(n_max: usize, x: f64, limits: HermiteLimits) -> Result<Vec<f64>> {
    limits.check(n_max)?;
    let mut rec = NormalisedHermite::new(x);
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    for _ in 0..n_max {
        rec.step();
        out.push(2.0 * rec.current().log_abs);
    }
    Ok(out)
}
