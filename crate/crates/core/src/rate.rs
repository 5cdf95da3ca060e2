//! The Schilder energy `I(phi) = 1/2 int |phi'|^2` on piecewise-linear paths, its minimisation
//! over paths with prescribed consecutive increments and box constraints, asymptotic slope
//! fitting, and importance-sampled Wiener probabilities of scaled sets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::kernel::Point;
use crate::par::{map_indices, sample_stats, StreamKey};
use crate::path::PiecewiseLinearPath;
use crate::qp::{solve_qp, QpProblem};
use crate::sampler::{cameron_martin_weight, sample_bm_with, TimeGrid, TIME_TOL};

/// `1/2 sum |dphi|^2 / dt` over the cells.
pub fn path_energy(phi: &PiecewiseLinearPath) -> f64 {
    let (k, v) = (phi.knots(), phi.values());
    (1..k.len())
        .map(|i| {
            let dt = k[i] - k[i - 1];
            v[i].iter().zip(&v[i - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / dt
        })
        .sum::<f64>()
        * 0.5
}

/// Gradient of [`path_energy`] with respect to the knot values `phi(t_1), .., phi(t_n)`.
pub fn path_energy_gradient(phi: &PiecewiseLinearPath) -> Vec<Vec<f64>> {
    let (k, v) = (phi.knots(), phi.values());
    let n = k.len();
    (1..n)
        .map(|i| {
            (0..phi.dim())
                .map(|c| {
                    let left = (v[i][c] - v[i - 1][c]) / (k[i] - k[i - 1]);
                    let right = if i + 1 < n {
                        (v[i + 1][c] - v[i][c]) / (k[i + 1] - k[i])
                    } else {
                        0.0
                    };
                    left - right
                })
                .collect()
        })
        .collect()
}

/// `inf { I(phi) : phi has consecutive increments u_1, .., u_{k-1} } = 1/2 (sum |u_j|)^2`.
pub fn closed_form_inf(u_list: &[Point]) -> f64 {
    let s: f64 = u_list.iter().map(Point::norm).sum();
    0.5 * s * s
}

/// `phi(t) in [lo, hi]` coordinatewise; infinite bounds are allowed, `lo == hi` pins a coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBox {
    pub t: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Paths `phi` with `phi(t_{j+1}) - phi(t_j) = u_j` for ordered chain times `t_1 <= .. <= t_k`
/// (free, or fixed when `times` is given) and `phi(t) in A` for every box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintProgram {
    pub d: usize,
    pub targets: Vec<Point>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub boxes: Vec<TimeBox>,
}

impl ConstraintProgram {
    pub fn unconstrained(targets: Vec<Point>) -> Result<Self> {
        let d = targets.first().map(Point::dim).ok_or_else(|| Error::Contract("no targets".into()))?;
        Self::new(d, targets, None, Vec::new())
    }

    pub fn new(d: usize, targets: Vec<Point>, times: Option<Vec<f64>>, boxes: Vec<TimeBox>) -> Result<Self> {
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        if targets.iter().any(|u| u.dim() != d) {
            return contract("every target must have dimension d");
        }
        if let Some(t) = &times {
            if t.len() != targets.len() + 1 {
                return contract("fixed chain times need one more entry than targets");
            }
            if t.first().is_some_and(|&x| x < 0.0) || t.last().is_some_and(|&x| x > 1.0) {
                return domain("chain times must lie in [0, 1]");
            }
            if t.windows(2).any(|w| !(w[1] >= w[0])) {
                return domain("chain times must be nondecreasing");
            }
        }
        for (i, b) in boxes.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.t) {
                return domain(format!("box {i}: time outside [0, 1]"));
            }
            if b.lo.len() != d || b.hi.len() != d {
                return contract(format!("box {i}: bounds need {d} coordinates"));
            }
            if let Some(c) = (0..d).find(|&c| !(b.lo[c] <= b.hi[c])) {
                return Err(Error::Infeasible(format!("box {i} is empty in coordinate {c}")));
            }
        }
        Ok(Self {
            d,
            targets,
            times,
            boxes,
        })
    }

    pub fn k(&self) -> usize {
        self.targets.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub restarts: usize,
    pub best_restart: usize,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMinimum {
    pub path: PiecewiseLinearPath,
    pub value: f64,
    pub chain_times: Vec<f64>,
    pub diagnostics: EnergyDiagnostics,
}

/// Restarts of the outer coordinate search.
pub const RESTARTS: usize = 5;
const MAX_SWEEPS: usize = 400;

struct Inner {
    value: f64,
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
    iterations: usize,
}

fn merge_knots(mut ts: Vec<f64>) -> Vec<f64> {
    ts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(ts.len());
    for t in ts {
        if out.last().is_none_or(|&l| t - l > TIME_TOL) {
            out.push(t);
        }
    }
    out
}

fn knot_index(knots: &[f64], t: f64) -> usize {
    knots
        .iter()
        .position(|&k| (k - t).abs() <= TIME_TOL)
        .expect("time was inserted as a knot")
}

/// Minimal energy for fixed chain times; `Ok(None)` means this choice of times is infeasible or
/// forces an infinite energy. Errors carry an infeasibility certificate.
fn inner_problem(prog: &ConstraintProgram, chain: &[f64], extra: usize) -> Result<Option<Inner>> {
    let mut ts: Vec<f64> = vec![0.0];
    ts.extend_from_slice(chain);
    ts.extend(prog.boxes.iter().map(|b| b.t));
    ts.extend((1..=extra).map(|i| i as f64 / (extra + 1) as f64));
    ts.push(1.0);
    let knots = merge_knots(ts);
    let n = knots.len();
    let chain_ix: Vec<usize> = chain.iter().map(|&t| knot_index(&knots, t)).collect();
    for (j, w) in chain_ix.windows(2).enumerate() {
        if w[0] == w[1] && !prog.targets[j].is_zero() {
            return Ok(None);
        }
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let w = 1.0 / (knots[i] - knots[i - 1]);
        h[(i, i)] += w;
        h[(i - 1, i - 1)] += w;
        h[(i, i - 1)] -= w;
        h[(i - 1, i)] -= w;
    }
    let m = prog.targets.len();
    let mut eq_a = DMatrix::<f64>::zeros(m, n);
    for (j, w) in chain_ix.windows(2).enumerate() {
        eq_a[(j, w[1])] += 1.0;
        eq_a[(j, w[0])] -= 1.0;
    }
    let mut values = vec![vec![0.0; prog.d]; n];
    let mut value = 0.0;
    let mut iterations = 0;
    for c in 0..prog.d {
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        lo[0] = 0.0;
        hi[0] = 0.0;
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (bi, b) in prog.boxes.iter().enumerate() {
            let i = knot_index(&knots, b.t);
            lo[i] = lo[i].max(b.lo[c]);
            hi[i] = hi[i].min(b.hi[c]);
            if lo[i] > hi[i] {
                return Err(Error::Infeasible(match owner[i] {
                    Some(o) => format!("boxes {o} and {bi} at t = {} are disjoint in coordinate {c}", b.t),
                    None => format!("box {bi} at t = 0 excludes the origin in coordinate {c}"),
                }));
            }
            owner[i] = Some(bi);
        }
        // chain knots carry s + U_j with s = phi(t_1); intersect the admissible ranges of s
        let mut partial = vec![0.0];
        for u in &prog.targets {
            partial.push(partial.last().unwrap() + u.coords()[c]);
        }
        let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut lo_src, mut hi_src) = (None, None);
        for (j, &i) in chain_ix.iter().enumerate() {
            if lo[i] - partial[j] > s_lo {
                s_lo = lo[i] - partial[j];
                lo_src = Some((j, i));
            }
            if hi[i] - partial[j] < s_hi {
                s_hi = hi[i] - partial[j];
                hi_src = Some((j, i));
            }
        }
        if s_lo > s_hi + 1e-12 {
            if prog.times.is_none() {
                return Ok(None);
            }
            let describe = |src: Option<(usize, usize)>| match src {
                Some((j, 0)) => format!("chain time t_{} at the origin", j + 1),
                Some((j, i)) => format!("box at t = {} on chain time t_{}", knots[i], j + 1),
                None => "unconstrained".to_string(),
            };
            return Err(Error::Infeasible(format!(
                "coordinate {c}: {} and {} force disjoint values of phi(t_1) given the increments",
                describe(lo_src),
                describe(hi_src)
            )));
        }
        let s = 0.0f64.clamp(s_lo, s_hi.max(s_lo));
        let mut x0 = DVector::<f64>::zeros(n);
        for i in 0..n {
            x0[i] = 0.0f64.clamp(lo[i], hi[i]);
        }
        for (j, &i) in chain_ix.iter().enumerate() {
            x0[i] = s + partial[j];
        }
        let eq_b = DVector::from_iterator(m, prog.targets.iter().map(|u| u.coords()[c]));
        let qp = QpProblem {
            h: h.clone(),
            g: DVector::zeros(n),
            eq_a: eq_a.clone(),
            eq_b,
            lo,
            hi,
        };
        let sol = solve_qp(&qp, x0)?;
        iterations += sol.iterations;
        for i in 0..n {
            values[i][c] = sol.x[i];
        }
        // cellwise, since x'Hx cancels badly when a cell is tiny
        value += (1..n).map(|i| (sol.x[i] - sol.x[i - 1]).powi(2) / (knots[i] - knots[i - 1])).sum::<f64>() * 0.5;
    }
    Ok(Some(Inner {
        value,
        knots,
        values,
        iterations,
    }))
}

fn eval_times(prog: &ConstraintProgram, chain: &[f64]) -> f64 {
    match inner_problem(prog, chain, 0) {
        Ok(Some(i)) => i.value,
        _ => f64::INFINITY,
    }
}

/// Minimise a unimodal-looking function on `[a, b]`, also comparing the endpoints.
fn golden_section(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let (a0, b0) = (a, b);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [a0, b0] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

fn coordinate_descent(prog: &ConstraintProgram, mut t: Vec<f64>, tol: f64) -> (Vec<f64>, f64, usize, bool) {
    let k = t.len();
    let mut value = eval_times(prog, &t);
    for sweep in 1..=MAX_SWEEPS {
        let before = value;
        for j in 0..k {
            let lo = if j == 0 { 0.0 } else { t[j - 1] };
            let hi = if j + 1 == k { 1.0 } else { t[j + 1] };
            let mut probe = t.clone();
            let (x, fx) = golden_section(
                &mut |x| {
                    probe[j] = x;
                    eval_times(prog, &probe)
                },
                lo,
                hi,
                1e-11,
            );
            if fx < value {
                t[j] = x;
                value = fx;
            }
        }
        if !(before - value > tol * 1e-3 * (1.0 + value.abs())) && value.is_finite() {
            return (t, value, sweep, true);
        }
    }
    (t, value, MAX_SWEEPS, false)
}

fn feasibility_probe(prog: &ConstraintProgram) -> Result<()> {
    // a box at t = 0 must contain the origin whatever the chain times are
    for (bi, b) in prog.boxes.iter().enumerate() {
        if b.t <= TIME_TOL {
            if let Some(c) = (0..prog.d).find(|&c| !(b.lo[c] <= 0.0 && 0.0 <= b.hi[c])) {
                return Err(Error::Infeasible(format!(
                    "box {bi} at t = 0 excludes the origin in coordinate {c}, but every path starts at 0"
                )));
            }
        }
    }
    Ok(())
}

/// `inf I(phi)` over the program, with the minimising piecewise-linear path.
///
/// Fixed chain times give a single convex QP per coordinate. Free chain times are searched by
/// coordinate descent with golden-section line searches from [`RESTARTS`] random feasible starts.
pub fn minimize_energy(prog: &ConstraintProgram, n_extra_knots: usize, tol: f64) -> Result<EnergyMinimum> {
    minimize_energy_seeded(prog, n_extra_knots, tol, 0)
}

pub fn minimize_energy_seeded(prog: &ConstraintProgram, n_extra_knots: usize, tol: f64, seed: u64) -> Result<EnergyMinimum> {
    if !(tol > 0.0) {
        return domain("tol must be positive");
    }
    feasibility_probe(prog)?;
    let k = prog.k();
    let (chain, diagnostics) = match (&prog.times, prog.targets.is_empty()) {
        (_, true) => (Vec::new(), EnergyDiagnostics { sweeps: 0, converged: true, restarts: 0, best_restart: 0, qp_iterations: 0 }),
        (Some(t), false) => (t.clone(), EnergyDiagnostics { sweeps: 0, converged: true, restarts: 0, best_restart: 0, qp_iterations: 0 }),
        (None, false) => {
            let key = StreamKey::with_lane(seed, 0x4a7e);
            let runs = map_indices(RESTARTS, |r| {
                let mut rng = key.rng(r as u64);
                let mut t: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
                t.sort_by(f64::total_cmp);
                coordinate_descent(prog, t, tol)
            });
            let (best, run) = runs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .expect("at least one restart");
            if !run.1.is_finite() {
                return Err(Error::Infeasible("no restart found chain times with finite energy".into()));
            }
            (
                run.0.clone(),
                EnergyDiagnostics {
                    sweeps: runs.iter().map(|r| r.2).sum(),
                    converged: runs[best].3,
                    restarts: RESTARTS,
                    best_restart: best,
                    qp_iterations: 0,
                },
            )
        }
    };
    let inner = inner_problem(prog, &chain, n_extra_knots)?
        .ok_or_else(|| Error::Infeasible("the chain times force a zero-length interval with a nonzero increment".into()))?;
    let mut knots = inner.knots;
    let mut values = inner.values;
    if knots.len() == 1 {
        knots.push(1.0);
        values.push(values[0].clone());
    }
    Ok(EnergyMinimum {
        path: PiecewiseLinearPath::new(knots, values)?,
        value: inner.value,
        chain_times: chain,
        diagnostics: EnergyDiagnostics {
            qp_iterations: inner.iterations,
            ..diagnostics
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub limit: f64,
    /// Coefficients of `[1, ln t / t^2, 1 / t^2, 1 / t^4]` (the last omitted with three points).
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    pub max_abs_residual: f64,
}

/// Fit `y(t) = L + a ln(t)/t^2 + b/t^2 + c/t^4` by least squares and return `L`.
///
/// Three points drop the `1/t^4` column. The logarithmic term is the one the Laplace expansion of
/// the scaled masses actually produces.
pub fn ldp_slope_fit(curve: &[(f64, f64)]) -> Result<SlopeFit> {
    if curve.len() < 3 {
        return contract("a slope fit needs at least three points");
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) || curve[0].0 <= 0.0 {
        return contract("curve abscissae must be positive and increasing");
    }
    let cols = if curve.len() >= 4 { 4 } else { 3 };
    let basis = |t: f64| -> [f64; 4] {
        let t2 = t * t;
        [1.0, t.ln() / t2, 1.0 / t2, 1.0 / (t2 * t2)]
    };
    let mut a = DMatrix::<f64>::zeros(curve.len(), cols);
    for (i, &(t, _)) in curve.iter().enumerate() {
        let b = basis(t);
        for j in 0..cols {
            a[(i, j)] = b[j];
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    if norms.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::DegenerateFit("a basis column vanishes on the grid".into()));
    }
    for j in 0..cols {
        let nj = norms[j];
        a.column_mut(j).scale_mut(1.0 / nj);
    }
    let y = DVector::from_iterator(curve.len(), curve.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::DegenerateFit(format!(
            "fit matrix is numerically singular (condition {:.3e})",
            smax / smin
        )));
    }
    let z = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let resid = &a * &z - &y;
    let coefficients: Vec<f64> = (0..cols).map(|j| z[j] / norms[j]).collect();
    Ok(SlopeFit {
        limit: coefficients[0],
        coefficients,
        residual_rms: (resid.norm_squared() / curve.len() as f64).sqrt(),
        max_abs_residual: resid.amax(),
    })
}

/// Sets whose scaled Wiener probabilities are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchilderSet {
    /// `{w : w(1)_coord >= a}`.
    Halfspace { d: usize, coord: usize, a: f64 },
    /// `{w : w(time) in [lo, hi]}`.
    Box { time: f64, lo: Vec<f64>, hi: Vec<f64> },
    Full { d: usize },
}

impl SchilderSet {
    pub fn dim(&self) -> usize {
        match self {
            SchilderSet::Halfspace { d, .. } | SchilderSet::Full { d } => *d,
            SchilderSet::Box { lo, .. } => lo.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SchilderSet::Halfspace { d, coord, a } => {
                if *coord >= *d {
                    return contract("halfspace coordinate out of range");
                }
                if !a.is_finite() {
                    return domain("halfspace level must be finite");
                }
            }
            SchilderSet::Box { time, lo, hi } => {
                if !(*time > 0.0 && *time <= 1.0) {
                    return domain("box time must lie in (0, 1]");
                }
                if lo.len() != hi.len() || lo.is_empty() {
                    return contract("box bounds must be nonempty and of equal length");
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return domain("the box needs a nonempty interior");
                }
            }
            SchilderSet::Full { d } if *d == 0 => return domain("dimension must be at least 1"),
            SchilderSet::Full { .. } => {}
        }
        Ok(())
    }

    fn eval_time(&self) -> f64 {
        match self {
            SchilderSet::Box { time, .. } => *time,
            _ => 1.0,
        }
    }

    /// Whether `x = w(eval_time)` lies in `scale * set`.
    fn contains_scaled(&self, x: &[f64], scale: f64) -> bool {
        match self {
            SchilderSet::Halfspace { coord, a, .. } => x[*coord] >= scale * a,
            SchilderSet::Box { lo, hi, .. } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| scale * l <= *v && *v <= scale * h)
            }
            SchilderSet::Full { .. } => true,
        }
    }

    /// The energy-minimising entry path of the set, as a constraint program.
    fn program(&self) -> Result<ConstraintProgram> {
        let d = self.dim();
        let boxes = match self {
            SchilderSet::Halfspace { coord, a, .. } => {
                let mut lo = vec![f64::NEG_INFINITY; d];
                lo[*coord] = *a;
                vec![TimeBox {
                    t: 1.0,
                    lo,
                    hi: vec![f64::INFINITY; d],
                }]
            }
            SchilderSet::Box { time, lo, hi } => vec![TimeBox {
                t: *time,
                lo: lo.clone(),
                hi: hi.clone(),
            }],
            SchilderSet::Full { .. } => Vec::new(),
        };
        ConstraintProgram::new(d, Vec::new(), None, boxes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchilderPoint {
    pub t: f64,
    pub probability: f64,
    pub stderr: f64,
    /// `-(1/t^2) log P(w in t A)`.
    pub slope: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchilderCurve {
    pub points: Vec<SchilderPoint>,
    pub rate: f64,
    pub warnings: Vec<String>,
}

/// Effective sample size below which a curve point is flagged.
pub const MIN_ESS: f64 = 1000.0;

/// `-(1/t^2) log mu(t A)` along `t_grid`, each probability estimated by importance sampling with
/// the Cameron-Martin shift `t phi*`, where `phi*` minimises the energy over `A`.
pub fn schilder_empirical_slope(set: &SchilderSet, t_grid: &[f64], samples: usize, seed: u64) -> Result<SchilderCurve> {
    set.validate()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return contract("t_grid must be nonempty and positive");
    }
    if samples < 2 {
        return contract("at least two samples are required");
    }
    let minimum = minimize_energy(&set.program()?, 0, 1e-10)?;
    let phi = minimum.path;
    let time = set.eval_time();
    let grid = TimeGrid::through(&[phi.knots(), &[time]].concat())?;
    let ix = grid.index_of(time).expect("inserted");
    let d = set.dim();
    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for (lane, &t) in t_grid.iter().enumerate() {
        let shift = phi.scaled(t);
        let key = StreamKey::with_lane(seed, 0x5c41 + lane as u64);
        let weight = |rng: &mut crate::par::Rng, _i: u64| -> f64 {
            let w = sample_bm_with(&grid, d, rng);
            let (shifted, lw) = cameron_martin_weight(&w, &shift).expect("dimensions agree");
            if set.contains_scaled(shifted.row(ix), t) {
                lw.exp()
            } else {
                0.0
            }
        };
        let stats = sample_stats(&key, samples, weight);
        let sq = sample_stats(&key, samples, |rng, i| weight(rng, i).powi(2));
        let (p, se) = (stats.mean(), stats.stderr());
        let ess = if sq.mean() > 0.0 {
            samples as f64 * p * p / sq.mean()
        } else {
            0.0
        };
        if ess < MIN_ESS {
            warnings.push(format!("t = {t}: effective sample size {ess:.0} below {MIN_ESS}"));
        }
        points.push(SchilderPoint {
            t,
            probability: p,
            stderr: se,
            slope: -p.ln() / (t * t),
            ess,
        });
    }
    Ok(SchilderCurve {
        points,
        rate: minimum.value,
        warnings,
    })
}
