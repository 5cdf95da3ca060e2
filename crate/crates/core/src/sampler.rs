//! Brownian paths on finite time grids, exact conditioning on increment constraints,
//! Cameron-Martin tilting and correlated `(w, beta)` pairs.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::kernel::Point;
use crate::par::{Rng, StreamKey};
use crate::path::PiecewiseLinearPath;

/// Two times closer than this are treated as the same grid point.
pub const TIME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return domain("a time grid starts at 0");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("grid times must increase strictly");
        }
        if *times.last().unwrap() > 1.0 {
            return domain("grid times must lie in [0, 1]");
        }
        Ok(Self { times })
    }

    /// `n` equal cells on `[0, 1]`.
    pub fn uniform(n: usize) -> Self {
        let n = n.max(1);
        Self {
            times: (0..=n).map(|i| i as f64 / n as f64).collect(),
        }
    }

    /// The grid through `0` and the given times, which may be unsorted or repeated.
    pub fn through(times: &[f64]) -> Result<Self> {
        Self { times: vec![0.0] }.with_times(times)
    }

    /// A copy with `extra` inserted; times within [`TIME_TOL`] of an existing point are merged.
    pub fn with_times(&self, extra: &[f64]) -> Result<Self> {
        if let Some(t) = extra.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
            return domain(format!("time {t} lies outside [0, 1]"));
        }
        let mut all: Vec<f64> = self.times.iter().chain(extra).copied().collect();
        all.sort_by(f64::total_cmp);
        let mut times: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match times.last() {
                Some(&last) if t - last <= TIME_TOL => {}
                _ => times.push(t),
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - TIME_TOL);
        (i < self.times.len() && (self.times[i] - t).abs() <= TIME_TOL).then_some(i)
    }

    fn require_index(&self, t: f64) -> Result<usize> {
        self.index_of(t)
            .ok_or_else(|| Error::Contract(format!("time {t} is not a grid point")))
    }
}

/// Path values on a grid, row-major with `d` columns; row 0 is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    grid: TimeGrid,
    d: usize,
    values: Vec<f64>,
}

impl PathGrid {
    pub fn zeros(grid: TimeGrid, d: usize) -> Self {
        let n = grid.len();
        Self {
            grid,
            d,
            values: vec![0.0; n * d],
        }
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.len() || rows.is_empty() {
            return contract("one row per grid time is required");
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return contract("rows must share one dimension");
        }
        if rows[0].iter().any(|&x| x != 0.0) {
            return domain("a Wiener path starts at the origin");
        }
        Ok(Self {
            grid,
            d,
            values: rows.concat(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.grid.index_of(t).map(|i| self.row(i))
    }

    /// `w(t_j) - w(t_i)` by grid indices.
    pub fn increment(&self, i: usize, j: usize) -> Vec<f64> {
        self.row(j).iter().zip(self.row(i)).map(|(b, a)| b - a).collect()
    }

    /// Debug dump with columns `time,x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.d).map(|j| format!("x_{j}")).collect();
        writeln!(out, "time,{}", header.join(","))?;
        for (i, t) in self.grid.times().iter().enumerate() {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{t:e},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Brownian motion on `grid` from an explicit generator.
pub fn sample_bm_with(grid: &TimeGrid, d: usize, rng: &mut Rng) -> PathGrid {
    let mut p = PathGrid::zeros(grid.clone(), d);
    for i in 1..grid.len() {
        let sd = (grid.times[i] - grid.times[i - 1]).sqrt();
        for c in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            p.values[i * d + c] = p.values[(i - 1) * d + c] + sd * z;
        }
    }
    p
}

pub fn sample_bm(grid: &TimeGrid, d: usize, seed: u64) -> PathGrid {
    sample_bm_with(grid, d, &mut StreamKey::new(seed).rng(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintOrdering {
    NestedDisjoint,
    General,
}

/// `w(t_hi) - w(t_lo) = u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementConstraint {
    pub t_lo: f64,
    pub t_hi: f64,
    pub u: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementConstraintSet {
    items: Vec<IncrementConstraint>,
    ordering: ConstraintOrdering,
}

impl IncrementConstraintSet {
    pub fn new(mut items: Vec<IncrementConstraint>, ordering: ConstraintOrdering) -> Result<Self> {
        let Some(first) = items.first() else {
            return Ok(Self { items, ordering });
        };
        let d = first.u.dim();
        for (i, c) in items.iter().enumerate() {
            if !(0.0 <= c.t_lo && c.t_lo < c.t_hi && c.t_hi <= 1.0) {
                return domain(format!("constraint {i}: need 0 <= t_lo < t_hi <= 1"));
            }
            if c.u.dim() != d {
                return contract(format!("constraint {i}: target dimension {} != {d}", c.u.dim()));
            }
        }
        if ordering == ConstraintOrdering::NestedDisjoint {
            items.sort_by(|a, b| a.t_lo.total_cmp(&b.t_lo));
            if let Some(i) = items.windows(2).position(|w| w[1].t_lo < w[0].t_hi - TIME_TOL) {
                return contract(format!(
                    "constraints [{}, {}] and [{}, {}] overlap; use general ordering",
                    items[i].t_lo,
                    items[i].t_hi,
                    items[i + 1].t_lo,
                    items[i + 1].t_hi
                ));
            }
        }
        Ok(Self { items, ordering })
    }

    /// Consecutive increments `w(t_{j+1}) - w(t_j) = u_j` along ordered times.
    pub fn chain(times: &[f64], u_list: &[Point]) -> Result<Self> {
        if times.len() != u_list.len() + 1 {
            return contract("a chain of k times carries k - 1 targets");
        }
        let items = times
            .windows(2)
            .zip(u_list)
            .map(|(w, u)| IncrementConstraint {
                t_lo: w[0],
                t_hi: w[1],
                u: u.clone(),
            })
            .collect();
        Self::new(items, ConstraintOrdering::NestedDisjoint)
    }

    pub fn items(&self) -> &[IncrementConstraint] {
        &self.items
    }

    pub fn ordering(&self) -> ConstraintOrdering {
        self.ordering
    }

    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|c| c.u.dim())
    }

    pub fn endpoints(&self) -> Vec<f64> {
        self.items.iter().flat_map(|c| [c.t_lo, c.t_hi]).collect()
    }

    /// Largest `||(w(t_hi) - w(t_lo)) - u||` over the constraints.
    pub fn max_residual(&self, path: &PathGrid) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for c in &self.items {
            let a = path.grid.require_index(c.t_lo)?;
            let b = path.grid.require_index(c.t_hi)?;
            let r: f64 = path
                .increment(a, b)
                .iter()
                .zip(c.u.coords())
                .map(|(x, u)| (x - u) * (x - u))
                .sum();
            worst = worst.max(r.sqrt());
        }
        Ok(worst)
    }
}

/// `sum_i c_i w(t_i)`, applied coordinatewise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub terms: Vec<(f64, f64)>,
}

impl LinearFunctional {
    pub fn point(t: f64) -> Self {
        Self { terms: vec![(t, 1.0)] }
    }

    pub fn increment(t_lo: f64, t_hi: f64) -> Self {
        Self {
            terms: vec![(t_hi, 1.0), (t_lo, -1.0)],
        }
    }

    /// Per-coordinate covariance `sum a_i b_j min(t_i, s_j)` under Brownian motion.
    pub fn cov(&self, other: &Self) -> f64 {
        self.terms
            .iter()
            .flat_map(|(t, a)| other.terms.iter().map(move |(s, b)| a * b * t.min(*s)))
            .sum()
    }

    pub fn apply(&self, path: &PathGrid) -> Result<Vec<f64>> {
        let mut out = vec![0.0; path.d];
        for (t, c) in &self.terms {
            let i = path.grid.require_index(*t)?;
            for (o, x) in out.iter_mut().zip(path.row(i)) {
                *o += c * x;
            }
        }
        Ok(out)
    }
}

/// Exact Gaussian conditioning of Brownian motion on linear constraints `L_i(w) = u_i`.
#[derive(Debug, Clone)]
pub struct GaussianConditioner {
    constraints: Vec<LinearFunctional>,
    targets: Vec<Point>,
    chol: DMatrix<f64>,
}

/// Relative pivot below which a constraint counts as linearly dependent on earlier ones.
const PIVOT_TOL: f64 = 1e-10;

impl GaussianConditioner {
    pub fn new(constraints: Vec<LinearFunctional>, targets: Vec<Point>) -> Result<Self> {
        let m = constraints.len();
        if targets.len() != m {
            return contract("one target per constraint is required");
        }
        if let Some(d) = targets.first().map(Point::dim) {
            if targets.iter().any(|t| t.dim() != d) {
                return contract("constraint targets must share one dimension");
            }
        }
        // Cholesky with a per-row pivot check so the first dependent constraint can be named.
        let mut l = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let cii = constraints[i].cov(&constraints[i]);
            for j in 0..=i {
                let mut s = constraints[i].cov(&constraints[j]);
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if j < i {
                    l[(i, j)] = s / l[(j, j)];
                } else {
                    if !(s > PIVOT_TOL * cii.max(f64::MIN_POSITIVE)) {
                        return Err(Error::DegenerateConstraint {
                            index: i,
                            reason: if cii <= 0.0 {
                                "the constraint has zero variance".into()
                            } else {
                                "the constraint is a linear combination of earlier constraints".into()
                            },
                        });
                    }
                    l[(i, i)] = s.sqrt();
                }
            }
        }
        Ok(Self {
            constraints,
            targets,
            chol: l,
        })
    }

    pub fn from_set(set: &IncrementConstraintSet) -> Result<Self> {
        let (f, t) = set
            .items()
            .iter()
            .map(|c| (LinearFunctional::increment(c.t_lo, c.t_hi), c.u.clone()))
            .unzip();
        Self::new(f, t)
    }

    fn solve(&self, rhs: DVector<f64>) -> DVector<f64> {
        let y = self.chol.solve_lower_triangular(&rhs).expect("nonsingular factor");
        self.chol.tr_solve_lower_triangular(&y).expect("nonsingular factor")
    }

    /// `C^{-1} k` for the cross-covariances of `f` with the constraints.
    pub fn regression(&self, f: &LinearFunctional) -> Vec<f64> {
        let k = DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.cov(f)));
        self.solve(k).iter().copied().collect()
    }

    /// Conditional mean (in `R^d`) and per-coordinate conditional variance of `f(w)`.
    pub fn condition(&self, f: &LinearFunctional) -> (Point, f64) {
        let beta = self.regression(f);
        let d = self.targets.first().map_or(0, Point::dim);
        let mut mean = vec![0.0; d];
        for (b, u) in beta.iter().zip(&self.targets) {
            for (m, x) in mean.iter_mut().zip(u.coords()) {
                *m += b * x;
            }
        }
        let explained: f64 = beta.iter().zip(&self.constraints).map(|(b, c)| b * c.cov(f)).sum();
        (Point(mean), (f.cov(f) - explained).max(0.0))
    }

    /// Conditioned path on `grid` by residual correction of a free path:
    /// `w + Cov(w, L) C^{-1} (u - L(w))`. The constraint times must be grid points.
    pub fn sample_with(&self, grid: &TimeGrid, rng: &mut Rng) -> Result<PathGrid> {
        let d = self.targets.first().map_or(1, Point::dim);
        let mut p = sample_bm_with(grid, d, rng);
        let m = self.constraints.len();
        let mut coef = DMatrix::<f64>::zeros(m, d);
        for (i, (c, u)) in self.constraints.iter().zip(&self.targets).enumerate() {
            let v = c.apply(&p)?;
            for j in 0..d {
                coef[(i, j)] = u.coords()[j] - v[j];
            }
        }
        for j in 0..d {
            let col = self.solve(coef.column(j).into_owned());
            coef.set_column(j, &col);
        }
        for (gi, &t) in grid.times().iter().enumerate() {
            let pt = LinearFunctional::point(t);
            let k: Vec<f64> = self.constraints.iter().map(|c| c.cov(&pt)).collect();
            let row = p.row_mut(gi);
            for j in 0..d {
                row[j] += (0..m).map(|i| k[i] * coef[(i, j)]).sum::<f64>();
            }
        }
        Ok(p)
    }
}

/// Samples Brownian motion conditioned on an increment constraint set.
#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    grid: TimeGrid,
    d: usize,
    mode: Mode,
}

#[derive(Debug, Clone)]
enum Mode {
    Bridge(Vec<(usize, usize, Point)>),
    General(GaussianConditioner),
}

impl ConditionedSampler {
    /// Constraint endpoints are inserted into `grid`. `d` is used only when the set is empty.
    pub fn new(grid: &TimeGrid, set: &IncrementConstraintSet, d: usize) -> Result<Self> {
        let grid = grid.with_times(&set.endpoints())?;
        let d = set.dim().unwrap_or(d);
        let mode = match set.ordering() {
            ConstraintOrdering::NestedDisjoint => Mode::Bridge(
                set.items()
                    .iter()
                    .map(|c| Ok((grid.require_index(c.t_lo)?, grid.require_index(c.t_hi)?, c.u.clone())))
                    .collect::<Result<_>>()?,
            ),
            ConstraintOrdering::General => Mode::General(GaussianConditioner::from_set(set)?),
        };
        Ok(Self { grid, d, mode })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample_with(&self, rng: &mut Rng) -> Result<PathGrid> {
        match &self.mode {
            Mode::General(c) => c.sample_with(&self.grid, rng),
            Mode::Bridge(items) => {
                let mut p = sample_bm_with(&self.grid, self.d, rng);
                let t = self.grid.times();
                let n = t.len();
                for (a, b, u) in items {
                    let (a, b) = (*a, *b);
                    let delta: Vec<f64> = p.increment(a, b).iter().zip(u.coords()).map(|(x, u)| u - x).collect();
                    let span = t[b] - t[a];
                    for i in a + 1..n {
                        let s = if i < b { (t[i] - t[a]) / span } else { 1.0 };
                        let row = p.row_mut(i);
                        for (x, dl) in row.iter_mut().zip(&delta) {
                            *x += s * dl;
                        }
                    }
                    // pin the endpoint exactly
                    let base = p.row(a).to_vec();
                    let row = p.row_mut(b);
                    for ((x, w0), uu) in row.iter_mut().zip(&base).zip(u.coords()) {
                        *x = w0 + uu;
                    }
                }
                Ok(p)
            }
        }
    }
}

/// Brownian motion conditioned on `set`, on `grid` augmented by the constraint endpoints.
pub fn sample_conditioned_bm(grid: &TimeGrid, set: &IncrementConstraintSet, seed: u64) -> Result<PathGrid> {
    if set.ordering() != ConstraintOrdering::NestedDisjoint {
        return contract("sample_conditioned_bm expects nested-disjoint constraints; use GaussianConditioner");
    }
    ConditionedSampler::new(grid, set, 1)?.sample_with(&mut StreamKey::new(seed).rng(0))
}

/// Shift `path` by `shift` and return the log of the density ratio that makes expectations
/// of functionals of the shifted path unbiased for the unshifted law:
/// `-sum <dphi, dw>/dt - (1/2) sum |dphi|^2/dt`.
pub fn cameron_martin_weight(path: &PathGrid, shift: &PiecewiseLinearPath) -> Result<(PathGrid, f64)> {
    if shift.dim() != path.d {
        return contract("shift and path dimensions differ");
    }
    let t = path.grid.times();
    let phi: Vec<Vec<f64>> = t.iter().map(|&s| shift.eval(s)).collect();
    let mut out = path.clone();
    let mut logw = 0.0;
    for i in 1..t.len() {
        let dt = t[i] - t[i - 1];
        for c in 0..path.d {
            let dphi = phi[i][c] - phi[i - 1][c];
            let dw = path.row(i)[c] - path.row(i - 1)[c];
            logw -= dphi * dw / dt + 0.5 * dphi * dphi / dt;
        }
        for (x, p) in out.row_mut(i).iter_mut().zip(&phi[i]) {
            *x += p;
        }
    }
    Ok((out, logw))
}

/// `(w, beta)` with `beta = r w_1 + sqrt(1 - r^2) z`, `z` an independent Brownian motion.
pub fn sample_correlated_pair_with(grid: &TimeGrid, d: usize, r: f64, rng: &mut Rng) -> Result<(PathGrid, PathGrid)> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("correlation r must lie in (0, 1), got {r}"));
    }
    if d == 0 {
        return domain("dimension must be at least 1");
    }
    let w = sample_bm_with(grid, d, rng);
    let z = sample_bm_with(grid, 1, rng);
    let s = (1.0 - r * r).sqrt();
    let mut beta = PathGrid::zeros(grid.clone(), 1);
    for i in 0..grid.len() {
        beta.values[i] = r * w.row(i)[0] + s * z.values[i];
    }
    Ok((w, beta))
}

pub fn sample_correlated_pair(grid: &TimeGrid, d: usize, r: f64, seed: u64) -> Result<(PathGrid, PathGrid)> {
    sample_correlated_pair_with(grid, d, r, &mut StreamKey::new(seed).rng(0))
}
