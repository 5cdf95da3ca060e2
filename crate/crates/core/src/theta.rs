//! Estimators for the measures `theta_{u_1..u_{k-1}}` and `theta_{u,f}` on Wiener space:
//! dual pairings with cylinder functionals by bridge conditioning and by epsilon-approximation,
//! cylinder-set masses, correlated pairings, mass scans and a support check.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::error::{contract, domain, Result};
use crate::kernel::{log_heat_kernel_norm_sq, Point};
use crate::par::{sample_stats, Rng, RunningStats, StreamKey};
use crate::sampler::{
    sample_bm_with, ConditionedSampler, GaussianConditioner, IncrementConstraintSet, LinearFunctional, PathGrid,
    TimeGrid,
};
use crate::simplex::{
    eta_mass_integral, gap_node_rule, gap_reduced_integral, sample_ordered_times, GapRule, QuadMethod,
    QuadratureSpec, SimplexIntegrand,
};

/// Bounded payoffs `R^{n x d} -> R` on the values at the evaluation times, flattened time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    Constant {
        value: f64,
    },
    /// `exp(-||x - c||^2 / (2 width^2))`; an empty centre means the origin, a centre of
    /// length `d` is repeated at every evaluation time.
    GaussianBump {
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
    },
    /// 1 when every evaluated point lies in the box `[lo, hi]`.
    IndicatorBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `clamp(sum_i c_i s^i, -clip, clip)` with `s` the sum of first coordinates.
    PolynomialClipped {
        coeffs: Vec<f64>,
        clip: f64,
    },
    /// `sum_i a_i F_i`.
    Combination {
        terms: Vec<(f64, Payoff)>,
    },
}

impl Payoff {
    pub fn one() -> Self {
        Payoff::Constant { value: 1.0 }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Payoff::Constant { value } if !value.is_finite() => domain("constant payoff must be finite"),
            Payoff::GaussianBump { width, .. } if !(*width > 0.0) => domain("bump width must be positive"),
            Payoff::IndicatorBox { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return contract(format!("box bounds need {d} coordinates"));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return domain("box must be nondegenerate (lo < hi in every coordinate)");
                }
                Ok(())
            }
            Payoff::PolynomialClipped { clip, .. } if !(*clip > 0.0 && clip.is_finite()) => {
                domain("clip level must be positive and finite")
            }
            Payoff::Combination { terms } => terms.iter().try_for_each(|(_, p)| p.validate(d)),
            _ => Ok(()),
        }
    }

    /// Whether the payoff is nonnegative everywhere.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Payoff::Constant { value } => *value >= 0.0,
            Payoff::GaussianBump { .. } | Payoff::IndicatorBox { .. } => true,
            Payoff::PolynomialClipped { .. } => false,
            Payoff::Combination { terms } => terms.iter().all(|(a, p)| *a >= 0.0 && p.is_nonnegative()),
        }
    }

    pub fn eval(&self, x: &[f64], d: usize) -> f64 {
        match self {
            Payoff::Constant { value } => *value,
            Payoff::GaussianBump { center, width } => {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let c = if center.is_empty() { 0.0 } else { center[i % center.len()] };
                        (v - c) * (v - c)
                    })
                    .sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            Payoff::IndicatorBox { lo, hi } => {
                let inside = x
                    .chunks(d)
                    .all(|p| p.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| a <= v && v <= b));
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::PolynomialClipped { coeffs, clip } => {
                let s: f64 = x.chunks(d).map(|p| p[0]).sum();
                let v = coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c);
                v.clamp(-clip, *clip)
            }
            Payoff::Combination { terms } => terms.iter().map(|(a, p)| a * p.eval(x, d)).sum(),
        }
    }
}

/// `F(w) = payoff(w(s_1), .., w(s_n))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderFunctional {
    pub eval_times: Vec<f64>,
    pub payoff: Payoff,
}

impl CylinderFunctional {
    pub fn new(eval_times: Vec<f64>, payoff: Payoff) -> Result<Self> {
        if eval_times.is_empty() {
            return contract("a cylinder functional needs at least one evaluation time");
        }
        if let Some(t) = eval_times.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
            return domain(format!("evaluation time {t} outside [0, 1]"));
        }
        Ok(Self { eval_times, payoff })
    }

    /// The constant 1, evaluated at `t = 1`.
    pub fn one() -> Self {
        Self {
            eval_times: vec![1.0],
            payoff: Payoff::one(),
        }
    }

    pub fn eval(&self, path: &PathGrid) -> Result<f64> {
        let d = path.dim();
        let mut x = Vec::with_capacity(self.eval_times.len() * d);
        for &t in &self.eval_times {
            let row = path
                .at(t)
                .ok_or_else(|| crate::Error::Contract(format!("evaluation time {t} missing from the path grid")))?;
            x.extend_from_slice(row);
        }
        Ok(self.payoff.eval(&x, d))
    }
}

/// Weight `f` applied to the one-dimensional increment `beta(t_2) - beta(t_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFunction {
    One,
    IndicatorPos,
    AbsPower { p: f64 },
    ExpAbs { a: f64 },
}

impl WeightFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::AbsPower { p } if !(*p >= 0.0) => domain("abs_power needs p >= 0"),
            WeightFunction::ExpAbs { a } if !a.is_finite() => domain("exp_abs needs a finite rate"),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightFunction::One => 1.0,
            WeightFunction::IndicatorPos => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            WeightFunction::AbsPower { p } => x.abs().powf(p),
            WeightFunction::ExpAbs { a } => (a * x.abs()).exp(),
        }
    }

    /// `E f(X)` for `X ~ N(0, var)`.
    pub fn moment(&self, var: f64) -> f64 {
        match *self {
            WeightFunction::One => 1.0,
            WeightFunction::IndicatorPos => 0.5,
            WeightFunction::AbsPower { p } => {
                (2.0 * var).powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
            }
            WeightFunction::ExpAbs { a } => {
                let s = var.sqrt();
                2.0 * (a * a * var / 2.0).exp() * Normal::standard().cdf(a * s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateWithError {
    /// `|a - b| <= k sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.stderr.hypot(other.stderr)
    }

    /// `|value - x| <= k * stderr`.
    pub fn agrees_with_value(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.stderr
    }
}

/// Outer samples times inner paths per outer sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBudget {
    pub outer: usize,
    pub inner: usize,
    /// Relative standard error above which the estimate carries a warning.
    #[serde(default)]
    pub target_rel_err: Option<f64>,
}

impl McBudget {
    pub fn new(outer: usize, inner: usize) -> Self {
        Self {
            outer,
            inner,
            target_rel_err: None,
        }
    }

    /// `sqrt(total)` outer samples with `sqrt(total)` inner paths each.
    pub fn split(total: usize) -> Self {
        let s = ((total as f64).sqrt().round() as usize).max(1);
        Self::new(s, s)
    }

    pub fn total(&self) -> usize {
        self.outer * self.inner
    }

    fn validate(&self) -> Result<()> {
        if self.outer < 2 || self.inner < 1 {
            return contract("Monte Carlo budget needs at least 2 outer samples and 1 inner path");
        }
        Ok(())
    }
}

fn finish(stats: &RunningStats, bias_sd: f64, n: u64, method: &str, mut warnings: Vec<String>, mc: Option<&McBudget>) -> EstimateWithError {
    let value = stats.mean();
    let stderr = stats.stderr().hypot(bias_sd);
    if let Some(t) = mc.and_then(|m| m.target_rel_err) {
        if stderr > t * value.abs() {
            warnings.push(format!(
                "relative standard error {:.3e} exceeds the target {t:.3e}; increase the budget",
                stderr / value.abs()
            ));
        }
    }
    EstimateWithError {
        value,
        stderr,
        n_samples: n,
        method: method.to_string(),
        warnings,
    }
}

fn check_targets(u_list: &[Point], d: usize, warnings: &mut Vec<String>) -> Result<()> {
    if u_list.is_empty() {
        return contract("at least one increment target is required (k >= 2)");
    }
    if let Some(j) = u_list.iter().position(Point::is_zero) {
        return domain(format!("u_{} = 0; the pairing requires nonzero targets", j + 1));
    }
    if d < 4 {
        warnings.push(format!(
            "d = {d} < 4: intersection local times are only positive generalised functionals for d >= 4"
        ));
    }
    Ok(())
}

/// Distribution of ordered times for the outer simplex integral.
enum OuterRule {
    /// Node drawn with probability proportional to its weight; every draw carries the total.
    Nodes(GapRule),
    /// Uniform ordered times, weight `prod p / k!`.
    Uniform { ig: SimplexIntegrand, log_vol: f64 },
}

impl OuterRule {
    fn new(ig: SimplexIntegrand, quad: &QuadratureSpec) -> Result<(Self, f64)> {
        if quad.method == QuadMethod::TensorGauss && ig.k() <= 3 {
            let rule = gap_node_rule(&ig, quad)?;
            let direct = gap_reduced_integral(&ig, quad)?;
            return Ok((OuterRule::Nodes(rule), direct.rel_err));
        }
        let k = ig.k();
        let log_vol = -(1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        Ok((OuterRule::Uniform { ig, log_vol }, 0.0))
    }

    fn draw(&self, rng: &mut Rng) -> (Vec<f64>, f64) {
        match self {
            OuterRule::Nodes(rule) => (rule.sample_times(rng), rule.total()),
            OuterRule::Uniform { ig, log_vol } => {
                let mut t = Vec::new();
                sample_ordered_times(rng, ig.k(), &mut t);
                let gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
                let w = (ig.log_kernel_product(&gaps) + log_vol).exp();
                (t, w)
            }
        }
    }

    fn total_hint(&self) -> f64 {
        match self {
            OuterRule::Nodes(r) => r.total(),
            OuterRule::Uniform { .. } => 0.0,
        }
    }
}

fn method_tag(base: &str, quad: &QuadratureSpec) -> String {
    match quad.method {
        QuadMethod::TensorGauss => format!("{base}/gauss"),
        QuadMethod::DirichletMc => format!("{base}/dirichlet"),
    }
}

/// Mean of `F` over `n` paths conditioned on the chain `w(t_{j+1}) - w(t_j) = u_j`.
fn conditional_mean(f: &CylinderFunctional, times: &[f64], u_list: &[Point], d: usize, n: usize, rng: &mut Rng) -> Result<f64> {
    if let Payoff::Constant { value } = f.payoff {
        return Ok(value);
    }
    let set = IncrementConstraintSet::chain(times, u_list)?;
    let grid = TimeGrid::through(&f.eval_times)?;
    let sampler = ConditionedSampler::new(&grid, &set, d)?;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += f.eval(&sampler.sample_with(rng)?)?;
    }
    Ok(acc / n as f64)
}

/// Run `f` on every outer index and collect statistics; the first error aborts.
fn outer_stats<F>(key: &StreamKey, n: usize, f: F) -> Result<RunningStats>
where
    F: Fn(&mut Rng) -> Result<f64> + Sync + Send,
{
    let failure = std::sync::Mutex::new(None);
    let stats = sample_stats(key, n, |rng, _| match f(rng) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().expect("poisoned").get_or_insert(e);
            0.0
        }
    });
    match failure.into_inner().expect("poisoned") {
        Some(e) => Err(e),
        None => Ok(stats),
    }
}

const LANE_BRIDGE: u64 = 0xb41d;
const LANE_EPS: u64 = 0xe550;
const LANE_ETA: u64 = 0xe7a0;
const LANE_ETA_CORR: u64 = 0xe7a1;

/// `int F d theta_{u_1..u_{k-1}} = int_{Delta_k} E[F | w(t_{j+1}) - w(t_j) = u_j] prod p^d(u_j) dt`,
/// with the outer integral from the gap quadrature and the inner expectation from bridge paths.
pub fn pairing_bridge(
    f: &CylinderFunctional,
    u_list: &[Point],
    d: usize,
    quad: &QuadratureSpec,
    mc: &McBudget,
    seed: u64,
) -> Result<EstimateWithError> {
    let mut warnings = Vec::new();
    check_targets(u_list, d, &mut warnings)?;
    f.payoff.validate(d)?;
    mc.validate()?;
    let ig = SimplexIntegrand::new(d, u_list.to_vec(), 0.0, 1.0)?;
    let (outer, quad_rel) = OuterRule::new(ig, quad)?;
    let key = StreamKey::with_lane(seed, LANE_BRIDGE);
    let stats = outer_stats(&key, mc.outer, |rng| {
        let (times, w) = outer.draw(rng);
        Ok(w * conditional_mean(f, &times, u_list, d, mc.inner, rng)?)
    })?;
    let bias = quad_rel * outer.total_hint() * stats.mean().abs() / outer.total_hint().max(f64::MIN_POSITIVE);
    Ok(finish(&stats, bias, mc.total() as u64, &method_tag("bridge", quad), warnings, Some(mc)))
}

/// Intercept of the least-squares line through `(eps_i, y_i)` and its standard error
/// `sqrt(sum c_i^2 se_i^2)`.
pub fn richardson_linear(points: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return contract("extrapolation needs at least two ladder rungs");
    }
    let mean_e = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_e).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(crate::Error::DegenerateFit("all epsilon values coincide".into()));
    }
    let coef = |e: f64| 1.0 / n - mean_e * (e - mean_e) / sxx;
    let value = points.iter().map(|p| coef(p.0) * p.1).sum();
    let var: f64 = points.iter().map(|p| (coef(p.0) * p.2).powi(2)).sum();
    Ok((value, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub extrapolated: EstimateWithError,
    pub per_eps: Vec<(f64, EstimateWithError)>,
}

/// Default ladder for the epsilon route.
pub const DEFAULT_EPS_LADDER: [f64; 3] = [0.04, 0.02, 0.01];

/// `E int_{Delta_k} F(w) prod p^d_eps(w(t_{j+1}) - w(t_j) - u_j) dt` for each `eps` on the ladder,
/// by joint Monte Carlo over free paths and uniform ordered times, then linear extrapolation to 0.
pub fn pairing_epsilon(
    f: &CylinderFunctional,
    u_list: &[Point],
    d: usize,
    eps_ladder: &[f64],
    samples_per_eps: usize,
    seed: u64,
) -> Result<EpsilonEstimate> {
    let mut warnings = Vec::new();
    check_targets(u_list, d, &mut warnings)?;
    f.payoff.validate(d)?;
    if eps_ladder.len() < 2 {
        return contract("the epsilon ladder needs at least two rungs");
    }
    if eps_ladder.iter().any(|e| !(*e > 0.0)) || eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return contract("the epsilon ladder must be positive and strictly decreasing");
    }
    if samples_per_eps < 2 {
        return contract("at least two samples per rung are required");
    }
    let k = u_list.len() + 1;
    let log_vol = -(1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let mut per_eps = Vec::new();
    for (rung, &eps) in eps_ladder.iter().enumerate() {
        let key = StreamKey::with_lane(seed, LANE_EPS + rung as u64);
        let stats = outer_stats(&key, samples_per_eps, |rng| {
            let mut t = Vec::with_capacity(k);
            sample_ordered_times(rng, k, &mut t);
            let grid = TimeGrid::through(&f.eval_times)?.with_times(&t)?;
            let w = sample_bm_with(&grid, d, rng);
            let mut lp = log_vol;
            for (j, u) in u_list.iter().enumerate() {
                let a = grid.index_of(t[j]).expect("inserted");
                let b = grid.index_of(t[j + 1]).expect("inserted");
                let r2: f64 = w.increment(a, b).iter().zip(u.coords()).map(|(x, u)| (x - u) * (x - u)).sum();
                lp += log_heat_kernel_norm_sq(r2, eps, d);
            }
            Ok(f.eval(&w)? * lp.exp())
        })?;
        per_eps.push((eps, finish(&stats, 0.0, samples_per_eps as u64, "epsilon", Vec::new(), None)));
    }
    let pts: Vec<(f64, f64, f64)> = per_eps.iter().map(|(e, est)| (*e, est.value, est.stderr)).collect();
    let (value, stderr) = richardson_linear(&pts)?;
    Ok(EpsilonEstimate {
        extrapolated: EstimateWithError {
            value,
            stderr,
            n_samples: (samples_per_eps * eps_ladder.len()) as u64,
            method: "epsilon/richardson".into(),
            warnings,
        },
        per_eps,
    })
}

/// Axis-aligned box in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn whole(d: usize) -> Self {
        Self {
            lo: vec![f64::MIN; d],
            hi: vec![f64::MAX; d],
        }
    }

    pub fn centered(d: usize, radius: f64) -> Self {
        Self {
            lo: vec![-radius; d],
            hi: vec![radius; d],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a >= b) && self.hi.iter().zip(&other.hi).all(|(a, b)| a <= b)
    }
}

/// `theta(C_{T,A})` for `C_{T,A} = {w : w(t) in A for all t in T}`.
pub fn cylinder_mass(
    times: &[f64],
    a: &BoxSet,
    u_list: &[Point],
    d: usize,
    quad: &QuadratureSpec,
    mc: &McBudget,
    seed: u64,
) -> Result<EstimateWithError> {
    if times.is_empty() {
        return contract("the cylinder time set T is empty");
    }
    let f = CylinderFunctional::new(
        times.to_vec(),
        Payoff::IndicatorBox {
            lo: a.lo.clone(),
            hi: a.hi.clone(),
        },
    )?;
    let mut est = pairing_bridge(&f, u_list, d, quad, mc, seed)?;
    est.method = method_tag("cylinder", quad);
    Ok(est)
}

fn beta_factor(f2: &CylinderFunctional, weight: &WeightFunction, t1: f64, t2: f64, n: usize, rng: &mut Rng) -> Result<f64> {
    if let Payoff::Constant { value } = f2.payoff {
        if matches!(weight, WeightFunction::One) {
            return Ok(value);
        }
    }
    let grid = TimeGrid::through(&f2.eval_times)?.with_times(&[t1, t2])?;
    let (a, b) = (grid.index_of(t1).expect("inserted"), grid.index_of(t2).expect("inserted"));
    let mut acc = 0.0;
    for _ in 0..n {
        let beta = sample_bm_with(&grid, 1, rng);
        acc += f2.eval(&beta)? * weight.eval(beta.increment(a, b)[0]);
    }
    Ok(acc / n as f64)
}

/// `(eta, F_1 F_2)` for `eta = delta_u(w(t_2) - w(t_1)) f(beta(t_2) - beta(t_1))` integrated over
/// `Delta_2`, with `beta` a one-dimensional Brownian motion independent of `w`.
#[allow(clippy::too_many_arguments)]
pub fn eta_pairing_independent(
    f1: &CylinderFunctional,
    f2: &CylinderFunctional,
    weight: &WeightFunction,
    u: &Point,
    d: usize,
    quad: &QuadratureSpec,
    mc: &McBudget,
    seed: u64,
) -> Result<EstimateWithError> {
    let mut warnings = Vec::new();
    let u_list = std::slice::from_ref(u);
    check_targets(u_list, d, &mut warnings)?;
    f1.payoff.validate(d)?;
    f2.payoff.validate(1)?;
    weight.validate()?;
    mc.validate()?;
    let (outer, quad_rel) = OuterRule::new(SimplexIntegrand::mass(u.clone(), d)?, quad)?;
    let key = StreamKey::with_lane(seed, LANE_ETA);
    let stats = outer_stats(&key, mc.outer, |rng| {
        let (t, w) = outer.draw(rng);
        let first = conditional_mean(f1, &t, u_list, d, mc.inner, rng)?;
        let second = beta_factor(f2, weight, t[0], t[1], mc.inner, rng)?;
        Ok(w * first * second)
    })?;
    let bias = quad_rel * stats.mean().abs();
    Ok(finish(&stats, bias, mc.total() as u64, &method_tag("eta-independent", quad), warnings, Some(mc)))
}

/// Inputs of the correlated pairing: `F_1` of `w(s_2) - w(s_1)` and `F_2` of the independent
/// component `z` of `beta = r w_1 + sqrt(1 - r^2) z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatedPairing {
    pub s: (f64, f64),
    pub f1: Payoff,
    pub f2: CylinderFunctional,
    pub weight: WeightFunction,
    pub r: f64,
}

impl CorrelatedPairing {
    fn validate(&self, d: usize) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return domain(format!("correlation r must lie in (0, 1), got {}", self.r));
        }
        if !(0.0 <= self.s.0 && self.s.0 < self.s.1 && self.s.1 <= 1.0) {
            return domain("the window s must satisfy 0 <= s_1 < s_2 <= 1");
        }
        self.f1.validate(d)?;
        self.f2.payoff.validate(1)?;
        self.weight.validate()
    }

    /// `E[F_1(alpha u + X)] E[F_2(z) f(r u_1 + sqrt(1 - r^2)(z(t_2) - z(t_1)))]` at fixed `(t_1, t_2)`.
    fn inner(&self, u: &Point, d: usize, t1: f64, t2: f64, n: usize, rng: &mut Rng) -> Result<f64> {
        let cond = GaussianConditioner::new(vec![LinearFunctional::increment(t1, t2)], vec![u.clone()])?;
        let (mean, var) = cond.condition(&LinearFunctional::increment(self.s.0, self.s.1));
        let sd = var.sqrt();
        let mut x = vec![0.0; d];
        let mut first = 0.0;
        for _ in 0..n {
            for (xi, m) in x.iter_mut().zip(mean.coords()) {
                let z: f64 = StandardNormal.sample(rng);
                *xi = m + sd * z;
            }
            first += self.f1.eval(&x, d);
        }
        first /= n as f64;
        let grid = TimeGrid::through(&self.f2.eval_times)?.with_times(&[t1, t2])?;
        let (a, b) = (grid.index_of(t1).expect("inserted"), grid.index_of(t2).expect("inserted"));
        let c = (1.0 - self.r * self.r).sqrt();
        let mut second = 0.0;
        for _ in 0..n {
            let z = sample_bm_with(&grid, 1, rng);
            second += self.f2.eval(&z)? * self.weight.eval(self.r * u.coords()[0] + c * z.increment(a, b)[0]);
        }
        Ok(first * second / n as f64)
    }

    /// The pointwise integrand at fixed `(t_1, t_2)`, without the kernel factor.
    pub fn pointwise(&self, u: &Point, d: usize, t1: f64, t2: f64, n: usize, seed: u64) -> Result<EstimateWithError> {
        self.validate(d)?;
        if !(0.0 <= t1 && t1 < t2 && t2 <= 1.0) {
            return domain("need 0 <= t_1 < t_2 <= 1");
        }
        let key = StreamKey::with_lane(seed, LANE_ETA_CORR + 1);
        let stats = outer_stats(&key, n, |rng| self.inner(u, d, t1, t2, 1, rng))?;
        Ok(finish(&stats, 0.0, n as u64, "eta-correlated/pointwise", Vec::new(), None))
    }
}

/// Limit formula for `(eta, F_1(w(s_2) - w(s_1)) F_2(z))` with `beta = r w_1 + sqrt(1 - r^2) z`.
pub fn eta_pairing_correlated(
    spec: &CorrelatedPairing,
    u: &Point,
    d: usize,
    quad: &QuadratureSpec,
    mc: &McBudget,
    seed: u64,
) -> Result<EstimateWithError> {
    let mut warnings = Vec::new();
    check_targets(std::slice::from_ref(u), d, &mut warnings)?;
    spec.validate(d)?;
    mc.validate()?;
    let (outer, quad_rel) = OuterRule::new(SimplexIntegrand::mass(u.clone(), d)?, quad)?;
    let key = StreamKey::with_lane(seed, LANE_ETA_CORR);
    let stats = outer_stats(&key, mc.outer, |rng| {
        let (t, w) = outer.draw(rng);
        Ok(w * spec.inner(u, d, t[0], t[1], mc.inner, rng)?)
    })?;
    let bias = quad_rel * stats.mean().abs();
    Ok(finish(&stats, bias, mc.total() as u64, &method_tag("eta-correlated", quad), warnings, Some(mc)))
}

/// The pre-limit correlated pairing at a fixed `eps`:
/// `E int_{Delta_2} F_1(w(s_2)-w(s_1)) F_2(z) p^d_eps(w(t_2)-w(t_1)-u) f(beta(t_2)-beta(t_1)) dt`
/// by joint Monte Carlo over paths and uniform ordered times.
pub fn eta_correlated_epsilon(
    spec: &CorrelatedPairing,
    u: &Point,
    d: usize,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    spec.validate(d)?;
    if !(eps > 0.0) {
        return domain("eps must be positive");
    }
    if u.dim() != d {
        return contract("u has the wrong dimension");
    }
    let key = StreamKey::with_lane(seed, LANE_ETA_CORR + 2);
    let c = (1.0 - spec.r * spec.r).sqrt();
    let stats = outer_stats(&key, samples, |rng| {
        let (t1, t2) = {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            (a.min(b), a.max(b))
        };
        let grid = TimeGrid::through(&spec.f2.eval_times)?.with_times(&[spec.s.0, spec.s.1, t1, t2])?;
        let w = sample_bm_with(&grid, d, rng);
        let z = sample_bm_with(&grid, 1, rng);
        let ix = |t: f64| grid.index_of(t).expect("inserted");
        let (a, b) = (ix(t1), ix(t2));
        let dw = w.increment(a, b);
        let r2: f64 = dw.iter().zip(u.coords()).map(|(x, u)| (x - u) * (x - u)).sum();
        let kern = (log_heat_kernel_norm_sq(r2, eps, d) + 0.5f64.ln()).exp();
        let dbeta = spec.r * dw[0] + c * z.increment(a, b)[0];
        let f1 = spec.f1.eval(&w.increment(ix(spec.s.0), ix(spec.s.1)), d);
        Ok(f1 * spec.f2.eval(&z)? * kern * spec.weight.eval(dbeta))
    })?;
    Ok(finish(&stats, 0.0, samples as u64, "eta-correlated/epsilon", Vec::new(), None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaScan {
    /// `(||u||, mass)` pairs in scan order.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log mass` against `log ||u||`.
    pub slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return Err(crate::Error::DegenerateFit("a slope needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(crate::Error::DegenerateFit("all abscissae coincide".into()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}

/// `theta_{u,f}(W)` along `u = ||u|| e_1` for each norm in the scan, with the fitted log-log slope.
pub fn eta_mass_scan(weight: &WeightFunction, d: usize, u_norms: &[f64], quad: &QuadratureSpec) -> Result<EtaScan> {
    weight.validate()?;
    if u_norms.windows(2).any(|w| !(w[1] < w[0])) || u_norms.iter().any(|r| !(*r > 0.0)) {
        return contract("u_norms must be positive and strictly decreasing");
    }
    let moment = |g: f64| weight.moment(g);
    let points = u_norms
        .iter()
        .map(|&r| Ok((r, eta_mass_integral(&Point::e1(d).scaled(r), d, &moment, quad)?)))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(EtaScan {
        slope: ols_slope(&lx, &ly)?,
        points,
    })
}

/// First ordered tuple of grid times `s_0 < s_1 < .. < s_{k-1}` with
/// `||w(s_{j+1}) - w(s_j) - u_j|| <= tol` for every `j`, found by depth-first search.
pub fn support_check(path: &PathGrid, u_list: &[Point], tol: f64) -> Result<Option<Vec<f64>>> {
    if let Some(u) = u_list.iter().find(|u| u.dim() != path.dim()) {
        return contract(format!("target dimension {} differs from path dimension {}", u.dim(), path.dim()));
    }
    fn search(path: &PathGrid, u_list: &[Point], tol: f64, j: usize, from: usize, acc: &mut Vec<usize>) -> bool {
        if j == u_list.len() {
            return true;
        }
        let n = path.grid().len();
        for next in from + 1..n {
            let r2: f64 = path
                .increment(from, next)
                .iter()
                .zip(u_list[j].coords())
                .map(|(x, u)| (x - u) * (x - u))
                .sum();
            if r2.sqrt() <= tol {
                acc.push(next);
                if search(path, u_list, tol, j + 1, next, acc) {
                    return true;
                }
                acc.pop();
            }
        }
        false
    }
    let n = path.grid().len();
    for start in 0..n {
        let mut acc = vec![start];
        if search(path, u_list, tol, 0, start, &mut acc) {
            return Ok(Some(acc.iter().map(|&i| path.grid().times()[i]).collect()));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_log, LogQuadConfig};
    use crate::sampler::sample_conditioned_bm;
    use crate::simplex::mass_m;
    use approx::assert_relative_eq;

    fn bump(width: f64) -> CylinderFunctional {
        CylinderFunctional::new(vec![1.0], Payoff::GaussianBump { center: vec![], width }).unwrap()
    }

    #[test]
    fn payoff_catalogue() {
        let b = Payoff::GaussianBump { center: vec![1.0, 0.0], width: 1.0 };
        assert_relative_eq!(b.eval(&[1.0, 0.0, 1.0, 1.0], 2), (-0.5f64).exp());
        let bx = Payoff::IndicatorBox { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        assert_eq!(bx.eval(&[0.5, 0.5, 0.9, -0.9], 2), 1.0);
        assert_eq!(bx.eval(&[0.5, 0.5, 1.1, 0.0], 2), 0.0);
        let p = Payoff::PolynomialClipped { coeffs: vec![1.0, 0.0, 1.0], clip: 3.0 };
        assert_eq!(p.eval(&[1.0, 9.0], 2), 2.0);
        assert_eq!(p.eval(&[2.0, 0.0], 2), 3.0);
        let c = Payoff::Combination { terms: vec![(2.0, Payoff::one()), (-1.0, p)] };
        assert_eq!(c.eval(&[1.0, 0.0], 2), 0.0);
        assert!(bx.validate(3).is_err());
        assert!(Payoff::IndicatorBox { lo: vec![0.0], hi: vec![0.0] }.validate(1).is_err());
    }

    #[test]
    fn payoff_json_round_trip() {
        let p = Payoff::Combination {
            terms: vec![(0.5, Payoff::GaussianBump { center: vec![], width: 0.7 }), (1.0, Payoff::one())],
        };
        let j = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Payoff>(&j).unwrap(), p);
    }

    #[test]
    fn weight_moments() {
        let n = Normal::new(0.0, 0.3f64.sqrt()).unwrap();
        for w in [
            WeightFunction::One,
            WeightFunction::IndicatorPos,
            WeightFunction::AbsPower { p: 1.0 },
            WeightFunction::AbsPower { p: 0.5 },
            WeightFunction::ExpAbs { a: 1.5 },
        ] {
            let r = integrate_log(
                |x| {
                    let v = w.eval(x);
                    if v <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        v.ln() + statrs::distribution::Continuous::ln_pdf(&n, x)
                    }
                },
                -12.0,
                12.0,
                &[0.0],
                LogQuadConfig::default(),
            );
            assert_relative_eq!(r.log_value.exp(), w.moment(0.3), max_relative = 1e-9);
        }
        assert_relative_eq!(WeightFunction::AbsPower { p: 1.0 }.moment(0.5), (2.0 * 0.5 / std::f64::consts::PI).sqrt());
    }

    #[test]
    fn bridge_unit_payoff_is_mass() {
        let u = Point::e1(4);
        let m = mass_m(&u, 4, &QuadratureSpec::default()).unwrap();
        let est = pairing_bridge(&CylinderFunctional::one(), &[u], 4, &QuadratureSpec::tensor(1e-9), &McBudget::new(200, 1), 1)
            .unwrap();
        assert!((est.value - m).abs() <= 3.0 * est.stderr + 1e-9 * m, "{est:?} vs {m}");
    }

    #[test]
    fn bridge_bump_matches_gaussian_oracle() {
        // given w(t_2) - w(t_1) = u, w(1) ~ N(u, (1 - (t_2 - t_1)) I)
        let (d, width, u) = (4, 0.8, Point(vec![0.7, 0.3, 0.0, 0.0]));
        let oracle = integrate_log(
            |y| {
                let g = y.exp();
                if g >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let v = width * width + 1.0 - g;
                y + (-g).ln_1p()
                    + log_heat_kernel_norm_sq(u.norm_sq(), g, d)
                    + (d as f64 / 2.0) * (width * width / v).ln()
                    - u.norm_sq() / (2.0 * v)
            },
            -70.0,
            0.0,
            &[-1.0, -0.1],
            LogQuadConfig::default(),
        )
        .log_value
        .exp();
        let est = pairing_bridge(&bump(width), &[u], d, &QuadratureSpec::tensor(1e-8), &McBudget::new(400, 400), 9).unwrap();
        assert!(est.agrees_with_value(oracle, 3.0), "{est:?} vs {oracle}");
        assert!(est.stderr < 0.05 * oracle);
    }

    #[test]
    fn epsilon_rung_matches_shifted_quadrature() {
        let u = Point::e1(4);
        let eps = 0.05;
        let est = pairing_epsilon(&CylinderFunctional::one(), std::slice::from_ref(&u), 4, &[eps, 0.04], 200_000, 4).unwrap();
        let ig = SimplexIntegrand::new(4, vec![u], eps, 1.0).unwrap();
        let exact = gap_reduced_integral(&ig, &QuadratureSpec::default()).unwrap().value();
        assert!(est.per_eps[0].1.agrees_with_value(exact, 3.0), "{:?} vs {exact}", est.per_eps[0]);
    }

    #[test]
    fn richardson_is_exact_on_lines() {
        let (v, se) = richardson_linear(&[(0.04, 1.0 + 0.4, 0.1), (0.02, 1.2, 0.1), (0.01, 1.1, 0.1)]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        assert!(se > 0.1);
        assert!(richardson_linear(&[(0.1, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn ladder_validation() {
        let u = [Point::e1(4)];
        let f = CylinderFunctional::one();
        assert!(pairing_epsilon(&f, &u, 4, &[0.01, 0.02], 10, 0).is_err());
        assert!(pairing_epsilon(&f, &u, 4, &[0.01], 10, 0).is_err());
        assert!(pairing_bridge(&f, &[Point::zeros(4)], 4, &QuadratureSpec::default(), &McBudget::new(4, 4), 0).is_err());
    }

    #[test]
    fn low_dimension_warns() {
        let est = pairing_bridge(
            &CylinderFunctional::one(),
            &[Point::e1(2)],
            2,
            &QuadratureSpec::tensor(1e-8),
            &McBudget::new(10, 1),
            0,
        )
        .unwrap();
        assert_eq!(est.warnings.len(), 1);
    }

    #[test]
    fn cylinder_mass_whole_space_and_empty_intersection() {
        let u = Point::e1(4).scaled(2.0);
        let q = QuadratureSpec::tensor(1e-8);
        let mc = McBudget::new(300, 30);
        let total = mass_m(&u, 4, &q).unwrap();
        let whole = cylinder_mass(&[0.3, 0.9], &BoxSet::whole(4), std::slice::from_ref(&u), 4, &q, &mc, 2).unwrap();
        assert!((whole.value - total).abs() <= 3.0 * whole.stderr + 1e-7 * total);
        // every constraint interval lies inside [0, 1], so w(1) must cancel an increment of norm 2
        let tiny = cylinder_mass(&[0.0, 1.0], &BoxSet::centered(4, 0.01), std::slice::from_ref(&u), 4, &q, &mc, 3).unwrap();
        assert!(tiny.value.abs() <= 3.0 * tiny.stderr + 1e-12, "{tiny:?}");
        assert!(cylinder_mass(&[], &BoxSet::whole(4), &[u], 4, &q, &mc, 0).is_err());
    }

    #[test]
    fn eta_reductions() {
        let u = Point::e1(4);
        let q = QuadratureSpec::tensor(1e-9);
        let m = mass_m(&u, 4, &QuadratureSpec::default()).unwrap();
        let one = CylinderFunctional::one();
        let mc = McBudget::new(400, 50);
        let e1 = eta_pairing_independent(&one, &one, &WeightFunction::One, &u, 4, &q, &mc, 1).unwrap();
        assert!((e1.value - m).abs() <= 3.0 * e1.stderr + 1e-8 * m);
        let e2 = eta_pairing_independent(&one, &one, &WeightFunction::IndicatorPos, &u, 4, &q, &mc, 2).unwrap();
        assert!(e2.agrees_with_value(m / 2.0, 3.0), "{e2:?}");
        let abs1 = WeightFunction::AbsPower { p: 1.0 };
        let e3 = eta_pairing_independent(&one, &one, &abs1, &u, 4, &q, &mc, 3).unwrap();
        let want = eta_mass_integral(&u, 4, &|g| abs1.moment(g), &QuadratureSpec::default()).unwrap();
        assert!(e3.agrees_with_value(want, 3.0), "{e3:?} vs {want}");
    }

    #[test]
    fn correlated_collapses_to_mass() {
        let u = Point::e1(4);
        let spec = CorrelatedPairing {
            s: (0.2, 0.6),
            f1: Payoff::one(),
            f2: CylinderFunctional::one(),
            weight: WeightFunction::One,
            r: 0.6,
        };
        let m = mass_m(&u, 4, &QuadratureSpec::default()).unwrap();
        let est = eta_pairing_correlated(&spec, &u, 4, &QuadratureSpec::tensor(1e-9), &McBudget::new(50, 2), 0).unwrap();
        assert!((est.value - m).abs() <= 1e-8 * m, "{est:?}");
        let mut bad = spec.clone();
        bad.r = 1.0;
        assert!(eta_pairing_correlated(&bad, &u, 4, &QuadratureSpec::default(), &McBudget::new(4, 1), 0).is_err());
    }

    #[test]
    fn disjoint_windows_ignore_the_constraint() {
        // with s disjoint from t, alpha = 0 and the first factor is E F_1(X) with X ~ N(0, s_2 - s_1)
        let spec = CorrelatedPairing {
            s: (0.0, 0.2),
            f1: Payoff::GaussianBump { center: vec![], width: 0.5 },
            f2: CylinderFunctional::one(),
            weight: WeightFunction::One,
            r: 0.5,
        };
        let u = Point::e1(4);
        let est = spec.pointwise(&u, 4, 0.5, 0.9, 100_000, 7).unwrap();
        let want = (0.25f64 / (0.25 + 0.2)).powi(2);
        assert!(est.agrees_with_value(want, 3.0), "{est:?} vs {want}");
    }

    #[test]
    fn eta_scan_shape() {
        let norms: Vec<f64> = (0..=8).map(|m| 2f64.powi(-m)).collect();
        let scan = eta_mass_scan(&WeightFunction::One, 4, &norms, &QuadratureSpec::tensor(1e-10)).unwrap();
        assert!(scan.points.windows(2).all(|w| w[1].1 > w[0].1));
        assert!(scan.slope >= -2.6);
        let m = mass_m(&Point::e1(4).scaled(0.5), 4, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(scan.points[1].1, m, max_relative = 1e-9);
        assert!(eta_mass_scan(&WeightFunction::One, 4, &[0.5, 1.0], &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn support_of_conditioned_paths() {
        let u = [Point(vec![0.4, -0.2]), Point(vec![0.1, 0.3])];
        let set = IncrementConstraintSet::chain(&[0.25, 0.5, 0.875], &u).unwrap();
        let p = sample_conditioned_bm(&TimeGrid::uniform(8), &set, 3).unwrap();
        let w = support_check(&p, &u, 1e-9).unwrap();
        assert_eq!(w, Some(vec![0.25, 0.5, 0.875]));
    }

    #[test]
    fn straight_line_has_no_large_increment() {
        let v = Point(vec![0.05, 0.02]);
        let grid = TimeGrid::uniform(20);
        let rows: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![t * 0.05, t * 0.02]).collect();
        let p = PathGrid::from_rows(grid, &rows).unwrap();
        assert_eq!(support_check(&p, &[v.scaled(2.0)], 1e-3).unwrap(), None);
    }

    #[test]
    fn steep_segment_is_found() {
        let grid = TimeGrid::uniform(10);
        let rows: Vec<Vec<f64>> = grid
            .times()
            .iter()
            .map(|&t| vec![if t < 0.45 { 0.01 * t } else { 1.0 + 0.01 * t }])
            .collect();
        let p = PathGrid::from_rows(grid, &rows).unwrap();
        let w = support_check(&p, &[Point(vec![1.001])], 1e-9).unwrap().unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[0] - 0.4).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }
}
