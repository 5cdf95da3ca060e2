//! Integrals of heat-kernel products over the ordered simplex
//! `0 <= t_1 <= .. <= t_k <= 1`, reduced to the gaps `g_j = t_{j+1} - t_j`.
//!
//! `int_{Delta_k} prod_j p_{t_{j+1}-t_j+eps}(s u_j) dt = int_{g >= 0, sum g <= 1} (1 - sum g) prod_j p_{g_j+eps}(s u_j) dg`
//! is evaluated as the nested recursion `R_j(L) = int_0^L p_j(g) R_{j+1}(L - g) dg`, `R_{k-1}(L) = L`,
//! each level by adaptive Gauss-Kronrod in `y = ln g`.

use std::cell::Cell;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{contract, domain, Result};
use crate::kernel::{log_heat_kernel_norm_sq, Point};
use crate::par::{sample_stats, Rng, StreamKey};
use crate::quad::{integrate_log, log_sum_exp, LogQuadConfig};

/// Width in `ln g` below the current slack that the gap integrals cover.
const LOG_WINDOW: f64 = 70.0;

/// Largest simplex dimension handled by the nested deterministic rule.
pub const TENSOR_MAX_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexIntegrand {
    pub d: usize,
    pub u_list: Vec<Point>,
    pub eps_shift: f64,
    pub scale_t: f64,
}

impl SimplexIntegrand {
    pub fn new(d: usize, u_list: Vec<Point>, eps_shift: f64, scale_t: f64) -> Result<Self> {
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        if u_list.is_empty() {
            return contract("a simplex integrand needs k >= 2, i.e. at least one increment target");
        }
        if let Some(j) = u_list.iter().position(|u| u.dim() != d) {
            return contract(format!("target u_{} has dimension {}, expected {d}", j + 1, u_list[j].dim()));
        }
        if !(eps_shift >= 0.0 && eps_shift.is_finite()) {
            return domain(format!("eps_shift must be finite and >= 0, got {eps_shift}"));
        }
        if !(scale_t > 0.0 && scale_t.is_finite()) {
            return domain(format!("scale_t must be positive, got {scale_t}"));
        }
        if eps_shift == 0.0 && d >= 2 {
            if let Some(j) = u_list.iter().position(Point::is_zero) {
                return domain(format!(
                    "u_{} = 0 with eps_shift = 0 is not integrable in d = {d} (the kernel blows up as the gap closes)",
                    j + 1
                ));
            }
        }
        Ok(Self {
            d,
            u_list,
            eps_shift,
            scale_t,
        })
    }

    /// `m(u, d)`: one target, no shift, unit scale.
    pub fn mass(u: Point, d: usize) -> Result<Self> {
        Self::new(d, vec![u], 0.0, 1.0)
    }

    /// Number of ordered times `k`.
    pub fn k(&self) -> usize {
        self.u_list.len() + 1
    }

    pub fn gaps(&self) -> usize {
        self.u_list.len()
    }

    fn scaled_norm_sq(&self, j: usize) -> f64 {
        self.scale_t * self.scale_t * self.u_list[j].norm_sq()
    }

    /// `log p^d_{g + eps}(scale * u_j)`.
    pub fn log_kernel(&self, j: usize, g: f64) -> f64 {
        log_heat_kernel_norm_sq(self.scaled_norm_sq(j), g + self.eps_shift, self.d)
    }

    /// `sum_j log p^d_{g_j + eps}(scale * u_j)` for a gap vector.
    pub fn log_kernel_product(&self, gaps: &[f64]) -> f64 {
        gaps.iter().enumerate().map(|(j, &g)| self.log_kernel(j, g)).sum()
    }

    fn breaks(&self, j: usize, l: f64) -> Vec<f64> {
        let ll = l.ln();
        let mut b = vec![ll - 2f64.ln()];
        for i in 1..=4 {
            b.push(ll + (-(10f64.powi(-i))).ln_1p());
        }
        let mode = self.scaled_norm_sq(j) / self.d as f64 - self.eps_shift;
        if mode > 0.0 && mode < l {
            let lm = mode.ln();
            b.extend([lm - 2.0, lm, lm + 1.0]);
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMethod {
    /// Nested adaptive Gauss-Kronrod in log-gap coordinates.
    TensorGauss,
    /// Uniform ordered times with the `1/k!` volume factor.
    DirichletMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub method: QuadMethod,
    /// Panel cap per nested level, or the sample count in MC mode.
    pub nodes_or_samples: usize,
    pub target_rel_err: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadMethod::TensorGauss,
            nodes_or_samples: 400,
            target_rel_err: 1e-11,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn tensor(target_rel_err: f64) -> Self {
        Self {
            target_rel_err,
            ..Self::default()
        }
    }

    pub fn dirichlet(samples: usize, target_rel_err: f64, seed: u64) -> Self {
        Self {
            method: QuadMethod::DirichletMc,
            nodes_or_samples: samples,
            target_rel_err,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes_or_samples < 2 {
            return contract("nodes_or_samples must be at least 2");
        }
        if !(self.target_rel_err > 0.0) {
            return domain("target_rel_err must be positive");
        }
        Ok(())
    }

    fn log_cfg(&self) -> LogQuadConfig {
        LogQuadConfig {
            rel_tol: self.target_rel_err,
            max_panels: self.nodes_or_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadOutcome {
    pub log_value: f64,
    /// Estimated relative error (quadrature error or MC standard error over the value).
    pub rel_err: f64,
    pub evals: usize,
    pub warnings: Vec<String>,
}

impl QuadOutcome {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

struct Nested<'a> {
    ig: &'a SimplexIntegrand,
    inner_cfg: LogQuadConfig,
    outer_cfg: LogQuadConfig,
    worst_inner: Cell<f64>,
    evals: Cell<usize>,
    unconverged: Cell<bool>,
}

impl Nested<'_> {
    fn cfg(&self, j: usize) -> LogQuadConfig {
        if j == 0 {
            self.outer_cfg
        } else {
            self.inner_cfg
        }
    }

    fn integrand(&self, j: usize, l: f64, y: f64) -> f64 {
        let g = y.exp();
        let rest = l - g;
        if !(rest > 0.0) {
            return f64::NEG_INFINITY;
        }
        let lp = self.ig.log_kernel(j, g);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        y + lp + self.log_r(j + 1, rest)
    }

    fn log_r(&self, j: usize, l: f64) -> f64 {
        if j == self.ig.gaps() {
            return l.ln();
        }
        let ll = l.ln();
        let r = integrate_log(|y| self.integrand(j, l, y), ll - LOG_WINDOW, ll, &self.ig.breaks(j, l), self.cfg(j));
        self.evals.set(self.evals.get() + r.evals);
        if !r.converged {
            self.unconverged.set(true);
        }
        if j > 0 {
            self.worst_inner.set(self.worst_inner.get().max(r.rel_err()));
        }
        r.log_value
    }
}

fn nested<'a>(ig: &'a SimplexIntegrand, q: &QuadratureSpec) -> Nested<'a> {
    let outer_cfg = q.log_cfg();
    Nested {
        ig,
        inner_cfg: LogQuadConfig {
            rel_tol: outer_cfg.rel_tol * 0.1,
            ..outer_cfg
        },
        outer_cfg,
        worst_inner: Cell::new(0.0),
        evals: Cell::new(0),
        unconverged: Cell::new(false),
    }
}

fn tensor_integral(ig: &SimplexIntegrand, q: &QuadratureSpec) -> Result<QuadOutcome> {
    if ig.k() > TENSOR_MAX_K {
        return contract(format!(
            "nested quadrature supports k <= {TENSOR_MAX_K}; use dirichlet_mc for k = {}",
            ig.k()
        ));
    }
    let n = nested(ig, q);
    let ll = 0.0;
    let r = integrate_log(|y| n.integrand(0, 1.0, y), ll - LOG_WINDOW, ll, &ig.breaks(0, 1.0), n.outer_cfg);
    let mut warnings = Vec::new();
    if !r.converged || n.unconverged.get() {
        warnings.push(format!(
            "adaptive quadrature hit the panel cap ({}) before reaching rel_err {:e}",
            q.nodes_or_samples, q.target_rel_err
        ));
    }
    Ok(QuadOutcome {
        log_value: r.log_value,
        rel_err: r.rel_err() + n.worst_inner.get(),
        evals: r.evals + n.evals.get(),
        warnings,
    })
}

/// Uniform ordered times on the simplex, drawn by sorting iid uniforms.
pub fn sample_ordered_times(rng: &mut Rng, k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..k).map(|_| rng.random::<f64>()));
    out.sort_by(f64::total_cmp);
}

fn log_factorial(k: usize) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

fn dirichlet_integral(ig: &SimplexIntegrand, q: &QuadratureSpec) -> Result<QuadOutcome> {
    let k = ig.k();
    let key = StreamKey::with_lane(q.seed, 0x5349_4d50);
    let stats = sample_stats(&key, q.nodes_or_samples, |rng, _| {
        let mut t = Vec::with_capacity(k);
        sample_ordered_times(rng, k, &mut t);
        let lp: f64 = (0..k - 1).map(|j| ig.log_kernel(j, t[j + 1] - t[j])).sum();
        lp.exp()
    });
    let mean = stats.mean();
    let rel_err = if mean > 0.0 { stats.stderr() / mean } else { f64::INFINITY };
    let mut warnings = Vec::new();
    if rel_err > q.target_rel_err {
        warnings.push(format!(
            "Monte Carlo relative error {rel_err:.3e} exceeds the target {:.3e}",
            q.target_rel_err
        ));
    }
    Ok(QuadOutcome {
        log_value: mean.ln() - log_factorial(k),
        rel_err,
        evals: q.nodes_or_samples,
        warnings,
    })
}

/// `log int_{Delta_k} prod_j p^d_{t_{j+1}-t_j+eps}(scale u_j) dt` with an error estimate.
pub fn gap_reduced_integral(ig: &SimplexIntegrand, q: &QuadratureSpec) -> Result<QuadOutcome> {
    q.validate()?;
    match q.method {
        QuadMethod::TensorGauss => tensor_integral(ig, q),
        QuadMethod::DirichletMc => dirichlet_integral(ig, q),
    }
}

/// `m(u, d) = int_{Delta_2} p^d_{t-s}(u) ds dt`.
pub fn mass_m(u: &Point, d: usize, q: &QuadratureSpec) -> Result<f64> {
    if u.is_zero() && d >= 2 {
        return domain("m(u, d) requires u != 0 for d >= 2");
    }
    let ig = SimplexIntegrand::mass(u.clone(), d)?;
    Ok(gap_reduced_integral(&ig, q)?.value())
}

/// `log int_0^t p^d_r(u) dr`, in closed form through the upper incomplete gamma function for `d >= 3`.
fn log_kernel_time_integral(a: f64, t: f64, d: usize, rel_tol: f64) -> f64 {
    if d >= 3 && a > 0.0 {
        // substitute v = a / (2r): (2 pi)^{-d/2} (a/2)^{1 - d/2} Gamma(d/2 - 1, a / 2t)
        let s = d as f64 / 2.0 - 1.0;
        let x = a / (2.0 * t);
        let q = gamma_ur(s, x);
        if q > 0.0 {
            return -(d as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln() + (1.0 - d as f64 / 2.0) * (a / 2.0).ln()
                + ln_gamma(s)
                + q.ln();
        }
    }
    let lt = t.ln();
    integrate_log(
        |y| y + log_heat_kernel_norm_sq(a, y.exp(), d),
        lt - LOG_WINDOW,
        lt,
        &[],
        LogQuadConfig {
            rel_tol: rel_tol * 0.1,
            max_panels: 400,
        },
    )
    .log_value
}

/// `m(u, d)` as the iterated integral `int_0^1 dt int_0^t p^d_{t-s}(u) ds` over the two original
/// time variables: the inner integral in closed form, the outer by adaptive Gauss-Kronrod in `t`.
pub fn mass_two_variable(u: &Point, d: usize, rel_tol: f64) -> Result<f64> {
    if u.is_zero() && d >= 2 {
        return domain("m(u, d) requires u != 0 for d >= 2");
    }
    let a = u.norm_sq();
    let mode = a / d as f64;
    let breaks: Vec<f64> = [0.5, 0.9, 0.99, mode / 4.0, mode, 4.0 * mode].to_vec();
    let r = integrate_log(
        |t| {
            if t <= 0.0 {
                f64::NEG_INFINITY
            } else {
                log_kernel_time_integral(a, t, d, rel_tol)
            }
        },
        0.0,
        1.0,
        &breaks,
        LogQuadConfig {
            rel_tol,
            max_panels: 400,
        },
    );
    Ok(r.log_value.exp())
}

/// `(t, -(1/t^2) log int_{Delta_k} prod p^d(t u_j))` for every `t` in the grid.
pub fn ldp_mass_curve(u_list: &[Point], d: usize, t_grid: &[f64], q: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return contract("t_grid must be strictly increasing");
    }
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 1.0) {
                return domain(format!("LDP scaling factors must be >= 1, got {t}"));
            }
            let ig = SimplexIntegrand::new(d, u_list.to_vec(), 0.0, t)?;
            let out = gap_reduced_integral(&ig, q)?;
            Ok((t, -out.log_value / (t * t)))
        })
        .collect()
}

/// `int_{Delta_2} p^d_{t_2-t_1}(u) M(t_2 - t_1) dt_1 dt_2` where `M(g) = E f(N(0, g))`.
///
/// Returns `+inf` when the moment is infinite or undefined at any node.
pub fn eta_mass_integral(u: &Point, d: usize, f_moment: &dyn Fn(f64) -> f64, q: &QuadratureSpec) -> Result<f64> {
    q.validate()?;
    let ig = SimplexIntegrand::mass(u.clone(), d)?;
    let diverged = Cell::new(false);
    let r = integrate_log(
        |y| {
            let g = y.exp();
            if !(g < 1.0) {
                return f64::NEG_INFINITY;
            }
            let m = f_moment(g);
            if !m.is_finite() || m < 0.0 {
                diverged.set(true);
                return f64::NEG_INFINITY;
            }
            y + ig.log_kernel(0, g) + m.ln() + (-g).ln_1p()
        },
        -LOG_WINDOW,
        0.0,
        &ig.breaks(0, 1.0),
        q.log_cfg(),
    );
    if diverged.get() {
        return Ok(f64::INFINITY);
    }
    Ok(r.log_value.exp())
}

/// A weighted gap configuration: `log_weight` already includes the kernel product and the
/// slack length over which `t_1` ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct GapNode {
    pub gaps: Vec<f64>,
    pub slack: f64,
    pub log_weight: f64,
}

/// Positive quadrature rule for the outer simplex integral, usable as a sampling distribution.
#[derive(Debug, Clone)]
pub struct GapRule {
    pub nodes: Vec<GapNode>,
    pub log_total: f64,
    index: WeightedIndex<f64>,
}

impl GapRule {
    fn from_nodes(mut nodes: Vec<GapNode>, prune_rel: f64) -> Result<Self> {
        let log_total = log_sum_exp(nodes.iter().map(|n| n.log_weight));
        if !log_total.is_finite() {
            return domain("the simplex integrand vanishes numerically; no positive rule exists");
        }
        let cut = log_total + prune_rel.ln();
        nodes.retain(|n| n.log_weight > cut);
        let index = WeightedIndex::new(nodes.iter().map(|n| (n.log_weight - log_total).exp()))
            .map_err(|e| crate::Error::Domain(format!("invalid gap rule weights: {e}")))?;
        Ok(Self {
            nodes,
            log_total,
            index,
        })
    }

    pub fn total(&self) -> f64 {
        self.log_total.exp()
    }

    /// Draw a node with probability proportional to its weight, then `t_1 ~ U[0, slack]`;
    /// returns the ordered times.
    pub fn sample_times(&self, rng: &mut Rng) -> Vec<f64> {
        let n = &self.nodes[self.index.sample(rng)];
        let mut t = Vec::with_capacity(n.gaps.len() + 1);
        let mut cur = rng.random::<f64>() * n.slack;
        t.push(cur);
        for g in &n.gaps {
            cur += g;
            t.push(cur.min(1.0));
        }
        t
    }
}

impl Nested<'_> {
    fn collect(&self, j: usize, l: f64, prefix: &mut Vec<f64>, log_w: f64, out: &mut Vec<GapNode>) {
        if j == self.ig.gaps() {
            out.push(GapNode {
                gaps: prefix.clone(),
                slack: l,
                log_weight: log_w + l.ln(),
            });
            return;
        }
        let ll = l.ln();
        let r = integrate_log(|y| self.integrand(j, l, y), ll - LOG_WINDOW, ll, &self.ig.breaks(j, l), self.cfg(j));
        for p in &r.panels {
            if p.log_value == f64::NEG_INFINITY {
                continue;
            }
            for (y, lw) in p.kronrod_nodes() {
                let g = y.exp();
                if !(g < l) {
                    continue;
                }
                let w = log_w + lw + y + self.ig.log_kernel(j, g);
                if w == f64::NEG_INFINITY {
                    continue;
                }
                prefix.push(g);
                self.collect(j + 1, l - g, prefix, w, out);
                prefix.pop();
            }
        }
    }
}

/// Node rule of the nested quadrature. Nodes carrying less than `1e-14` of the total are dropped.
pub fn gap_node_rule(ig: &SimplexIntegrand, q: &QuadratureSpec) -> Result<GapRule> {
    q.validate()?;
    if ig.k() > 3 {
        return contract("explicit node rules are built for k <= 3; sample ordered times for larger k");
    }
    let n = nested(ig, q);
    let mut out = Vec::new();
    n.collect(0, 1.0, &mut Vec::new(), 0.0, &mut out);
    GapRule::from_nodes(out, 1e-14)
}
