//! Chaos spectra, weighted Sobolev norms, the chaos spectrum of a delta-increment
//! `delta_u(w(t) - w(s))`, and the spectrum of a Wick product of independent factors.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::kernel::{log_hermite_sq_over_fact_table, log_heat_kernel_norm_sq, HermiteLimits, Point};
use crate::quad::log_sum_exp;

/// Squared norms `a_k = E[I_k^2]` of the chaos levels `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ChaosSpectrum {
    levels: Vec<f64>,
    tail_bound: Option<f64>,
}

impl ChaosSpectrum {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return contract("a chaos spectrum needs at least level 0");
        }
        if let Some((k, v)) = levels.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return domain(format!("chaos level {k} must be finite and nonnegative, got {v}"));
        }
        Ok(Self {
            levels,
            tail_bound: None,
        })
    }

    /// The constant functional 1.
    pub fn unit() -> Self {
        Self {
            levels: vec![1.0],
            tail_bound: None,
        }
    }

    pub fn with_tail_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) {
            return domain("tail bound must be nonnegative");
        }
        self.tail_bound = Some(bound);
        Ok(self)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn truncation_k(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }
}

impl TryFrom<Vec<f64>> for ChaosSpectrum {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ChaosSpectrum> for Vec<f64> {
    fn from(s: ChaosSpectrum) -> Self {
        s.levels
    }
}

/// Differentiability index of the Sobolev space; negative values give generalised functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex {
    pub gamma: f64,
}

/// `delta_u(w(t) - w(s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSpec {
    pub u: Point,
    pub s: f64,
    pub t: f64,
}

impl IncrementSpec {
    pub fn new(u: Point, s: f64, t: f64) -> Result<Self> {
        if !(0.0 <= s && s < t && t <= 1.0) {
            return domain(format!("increment times must satisfy 0 <= s < t <= 1, got s={s}, t={t}"));
        }
        Ok(Self { u, s, t })
    }

    pub fn dt(&self) -> f64 {
        self.t - self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevNorm {
    /// `sum_k (k+1)^gamma a_k` over the stored levels.
    pub norm_sq: f64,
    /// Magnitude of the final weighted term, a convergence diagnostic.
    pub last_term: f64,
}

pub fn sobolev_norm_sq(sp: &ChaosSpectrum, idx: SobolevIndex) -> SobolevNorm {
    let mut sum = 0.0;
    let mut last = 0.0;
    for (k, a) in sp.levels.iter().enumerate() {
        last = ((k + 1) as f64).powf(idx.gamma) * a;
        sum += last;
    }
    SobolevNorm {
        norm_sq: sum,
        last_term: last.abs(),
    }
}

/// Partial sums `S_K = sum_{k<=K} (k+1)^gamma a_k` for every `K`.
pub fn weighted_partial_sums(sp: &ChaosSpectrum, idx: SobolevIndex) -> Vec<f64> {
    let mut acc = 0.0;
    sp.levels
        .iter()
        .enumerate()
        .map(|(k, a)| {
            acc += ((k + 1) as f64).powf(idx.gamma) * a;
            acc
        })
        .collect()
}

/// Truncated log-domain convolution `c_k = log sum_{i+j=k} e^{a_i + b_j}` for `k <= k_max`.
fn log_convolve(a: &[f64], b: &[f64], k_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    let mut terms = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        terms.clear();
        let lo = k.saturating_sub(b.len() - 1);
        let hi = k.min(a.len() - 1);
        for i in lo..=hi {
            terms.push(a[i] + b[k - i]);
        }
        out.push(if terms.is_empty() {
            f64::NEG_INFINITY
        } else {
            log_sum_exp(terms.iter().copied())
        });
    }
    out
}

/// Log-levels `log a_k` of the chaos spectrum of `delta_u(w(t) - w(s))`.
///
/// `a_k = p_{t-s}^d(u)^2 * sum_{n_1+..+n_d=k} prod_j H_{n_j}^2(u_j / sqrt(t-s)) / n_j!`,
/// evaluated as a d-fold convolution of the one-dimensional sequences.
pub fn delta_increment_log_spectrum(spec: &IncrementSpec, d: usize, k_max: usize) -> Result<Vec<f64>> {
    delta_increment_log_spectrum_with(spec, d, k_max, HermiteLimits::default())
}

pub fn delta_increment_log_spectrum_with(
    spec: &IncrementSpec,
    d: usize,
    k_max: usize,
    limits: HermiteLimits,
) -> Result<Vec<f64>> {
    if spec.u.dim() != d {
        return contract(format!("u has dimension {}, expected {d}", spec.u.dim()));
    }
    if spec.u.is_zero() {
        return domain("the delta-increment spectrum requires u != 0");
    }
    let dt = spec.dt();
    let sq = dt.sqrt();
    let mut acc: Option<Vec<f64>> = None;
    for &uj in spec.u.coords() {
        let b = log_hermite_sq_over_fact_table(k_max, uj / sq, limits)?;
        acc = Some(match acc {
            None => b,
            Some(a) => log_convolve(&a, &b, k_max),
        });
    }
    let log_p = log_heat_kernel_norm_sq(spec.u.norm_sq(), dt, d);
    Ok(acc
        .expect("d >= 1")
        .into_iter()
        .map(|l| l + 2.0 * log_p)
        .collect())
}

pub fn delta_increment_spectrum(spec: &IncrementSpec, d: usize, k_max: usize) -> Result<ChaosSpectrum> {
    let logs = delta_increment_log_spectrum(spec, d, k_max)?;
    Ok(ChaosSpectrum {
        levels: logs.into_iter().map(f64::exp).collect(),
        tail_bound: None,
    })
}

/// Spectrum of the Wick product of two factors measurable w.r.t. independent noise.
pub fn wick_convolve(a: &ChaosSpectrum, b: &ChaosSpectrum) -> ChaosSpectrum {
    let n = a.levels.len() + b.levels.len() - 1;
    let mut c = vec![0.0; n];
    for (i, x) in a.levels.iter().enumerate() {
        for (j, y) in b.levels.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    ChaosSpectrum {
        levels: c,
        tail_bound: None,
    }
}

/// Default `alpha` in `(1/4, 1/2)`, giving `c = sqrt(1 - 2 alpha) = sqrt(0.1)`.
pub const DEFAULT_ALPHA: f64 = 0.45;

/// Truncation order used when fitting the norm-bound constant.
pub const BOUND_FIT_K: usize = 500;

/// Fitted constant `C` in `||delta_u(w(t)-w(s))||_{2,gamma} <= C p_{t-s}^d(c u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBoundFit {
    pub d: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub constant: f64,
    /// The `(u, t - s)` pairs the constant was maximised over.
    pub grid: Vec<(Point, f64)>,
}

fn check_bound_args(d: usize, idx: SobolevIndex, alpha: f64) -> Result<()> {
    if !(idx.gamma < -(d as f64) / 2.0) {
        return domain(format!(
            "norm bound needs gamma < -d/2 = {}, got {} (the chaos series diverges)",
            -(d as f64) / 2.0,
            idx.gamma
        ));
    }
    if !(alpha > 0.25 && alpha < 0.5) {
        return domain(format!("alpha must lie in (1/4, 1/2), got {alpha}"));
    }
    Ok(())
}

fn truncated_norm(u: &Point, dt: f64, d: usize, idx: SobolevIndex, k_max: usize) -> Result<f64> {
    let spec = IncrementSpec::new(u.clone(), 0.0, dt)?;
    let sp = delta_increment_spectrum(&spec, d, k_max)?;
    Ok(sobolev_norm_sq(&sp, idx).norm_sq.sqrt())
}

impl NormBoundFit {
    /// Maximise `truncated_norm / p_{dt}^d(c u)` over `grid`.
    pub fn fit(d: usize, idx: SobolevIndex, alpha: f64, grid: Vec<(Point, f64)>, k_max: usize) -> Result<Self> {
        check_bound_args(d, idx, alpha)?;
        if grid.is_empty() {
            return contract("norm-bound fit grid is empty");
        }
        let c = (1.0 - 2.0 * alpha).sqrt();
        let mut best: f64 = 0.0;
        for (u, dt) in &grid {
            let norm = truncated_norm(u, *dt, d, idx, k_max)?;
            let log_p = log_heat_kernel_norm_sq(c * c * u.norm_sq(), *dt, d);
            best = best.max((norm.ln() - log_p).exp());
        }
        Ok(Self {
            d,
            gamma: idx.gamma,
            alpha,
            constant: best,
            grid,
        })
    }

    /// Standard grid: `||u|| in {0.25, 0.5, 1, 2}` along the first axis, `t-s in {0.1, 0.3, 0.5, 1}`.
    pub fn default_grid(d: usize) -> Vec<(Point, f64)> {
        let mut g = Vec::new();
        for &r in &[0.25, 0.5, 1.0, 2.0] {
            for &dt in &[0.1, 0.3, 0.5, 1.0] {
                g.push((Point::e1(d).scaled(r), dt));
            }
        }
        g
    }

    pub fn bound(&self, spec: &IncrementSpec) -> Result<f64> {
        if spec.u.dim() != self.d {
            return contract("dimension mismatch in norm bound");
        }
        let c = (1.0 - 2.0 * self.alpha).sqrt();
        Ok(self.constant * log_heat_kernel_norm_sq(c * c * spec.u.norm_sq(), spec.dt(), self.d).exp())
    }
}

/// `C p_{t-s}^d(c u)` with `C` fitted on the default grid together with the queried point.
pub fn norm_bound_delta(spec: &IncrementSpec, d: usize, idx: SobolevIndex, alpha: f64) -> Result<f64> {
    check_bound_args(d, idx, alpha)?;
    if spec.u.is_zero() {
        return domain("the delta-increment norm bound requires u != 0");
    }
    let mut grid = NormBoundFit::default_grid(d);
    grid.push((spec.u.clone(), spec.dt()));
    NormBoundFit::fit(d, idx, alpha, grid, BOUND_FIT_K)?.bound(spec)
}
