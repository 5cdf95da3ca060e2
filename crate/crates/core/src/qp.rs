//! Primal active-set solver for small convex quadratic programs
//! `min 1/2 x'Hx + g'x  s.t.  A x = b,  lo <= x <= hi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
    /// Per-variable bounds; infinite entries mean unbounded. `lo == hi` pins the variable.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Variables held at a bound at the optimum: `(index, at_upper)`.
    pub active: Vec<(usize, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
}

const FEAS_TOL: f64 = 1e-10;

impl QpProblem {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        if self.h.ncols() != n || self.g.len() != n || self.lo.len() != n || self.hi.len() != n {
            return contract("QP dimensions are inconsistent");
        }
        if self.eq_a.ncols() != n || self.eq_a.nrows() != self.eq_b.len() {
            return contract("QP equality block has the wrong shape");
        }
        if let Some(i) = (0..n).find(|&i| !(self.lo[i] <= self.hi[i])) {
            return Err(Error::Infeasible(format!("bounds on variable {i} are empty")));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        let r = &self.eq_a * x - &self.eq_b;
        r.iter().all(|v| v.abs() <= FEAS_TOL * (1.0 + x.amax()))
            && (0..self.n()).all(|i| x[i] >= self.lo[i] - FEAS_TOL && x[i] <= self.hi[i] + FEAS_TOL)
    }
}

/// Solve from a feasible starting point.
///
/// Pinned variables are substituted out first, and equality rows left without free variables are
/// checked and dropped, so redundant pins never make the KKT system singular.
pub fn solve_qp(p: &QpProblem, x0: DVector<f64>) -> Result<QpSolution> {
    p.check()?;
    if !p.is_feasible(&x0) {
        return contract("the active-set start point is not feasible");
    }
    let n = p.n();
    let free: Vec<usize> = (0..n).filter(|&i| p.lo[i] != p.hi[i]).collect();
    let mut full = DVector::from_iterator(n, (0..n).map(|i| if p.lo[i] == p.hi[i] { p.lo[i] } else { 0.0 }));
    let nf = free.len();
    let rows: Vec<usize> = (0..p.eq_a.nrows())
        .filter(|&r| free.iter().any(|&j| p.eq_a[(r, j)] != 0.0))
        .collect();
    let r = &p.eq_a * &full - &p.eq_b;
    let scale = 1.0 + full.amax() + p.eq_b.amax();
    if let Some(bad) = (0..p.eq_a.nrows()).find(|i| !rows.contains(i) && r[*i].abs() > FEAS_TOL * scale) {
        return Err(Error::Infeasible(format!("equality {bad} conflicts with pinned variables")));
    }
    let hf = DMatrix::from_fn(nf, nf, |a, b| p.h[(free[a], free[b])]);
    let hx = &p.h * &full;
    let reduced = QpProblem {
        h: hf,
        g: DVector::from_fn(nf, |a, _| p.g[free[a]] + hx[free[a]]),
        eq_a: DMatrix::from_fn(rows.len(), nf, |a, b| p.eq_a[(rows[a], free[b])]),
        eq_b: DVector::from_fn(rows.len(), |a, _| -r[rows[a]]),
        lo: free.iter().map(|&i| p.lo[i]).collect(),
        hi: free.iter().map(|&i| p.hi[i]).collect(),
    };
    let sol = active_set(&reduced, DVector::from_fn(nf, |a, _| x0[free[a]]))?;
    for (a, &i) in free.iter().enumerate() {
        full[i] = sol.x[a];
    }
    Ok(QpSolution {
        value: p.objective(&full),
        x: full,
        iterations: sol.iterations,
        active: sol.active.iter().map(|&(a, up)| (free[a], up)).collect(),
    })
}

fn active_set(p: &QpProblem, x0: DVector<f64>) -> Result<QpSolution> {
    let n = p.n();
    let mut working: Vec<(usize, Side)> = Vec::new();
    let mut x = x0;
    let max_iter = 50 * (n + p.eq_a.nrows() + 1);
    for iter in 0..max_iter {
        let m_eq = p.eq_a.nrows();
        let m = m_eq + working.len();
        let mut k = DMatrix::<f64>::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&p.h);
        let mut put = |row: usize, coeffs: &dyn Fn(usize) -> f64| {
            for j in 0..n {
                let c = coeffs(j);
                k[(n + row, j)] = c;
                k[(j, n + row)] = c;
            }
        };
        for r in 0..p.eq_a.nrows() {
            put(r, &|j| p.eq_a[(r, j)]);
        }
        for (r, &(i, side)) in working.iter().enumerate() {
            let s = if side == Side::Lower { 1.0 } else { -1.0 };
            put(m_eq + r, &|j| if j == i { s } else { 0.0 });
        }
        let grad = &p.h * &x + &p.g;
        let mut rhs = DVector::<f64>::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Contract("singular KKT system (dependent active constraints)".into()))?;
        let step = sol.rows(0, n).into_owned();
        let scale = 1.0 + x.amax();
        if step.amax() <= 1e-12 * scale {
            // multipliers of the working bounds: lambda = -mu
            let mut worst: Option<(usize, f64)> = None;
            for (r, _) in working.iter().enumerate() {
                let lambda = -sol[n + m_eq + r];
                if lambda < -1e-12 && worst.is_none_or(|(_, w)| lambda < w) {
                    worst = Some((r, lambda));
                }
            }
            match worst {
                None => {
                    let active = working.iter().map(|&(i, s)| (i, s == Side::Upper)).collect();
                    return Ok(QpSolution {
                        value: p.objective(&x),
                        x,
                        iterations: iter + 1,
                        active,
                    });
                }
                Some((r, _)) => {
                    working.remove(r);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut block = None;
        for i in 0..n {
            if working.iter().any(|&(j, _)| j == i) {
                continue;
            }
            let (pi, xi) = (step[i], x[i]);
            if pi < -1e-15 * scale && p.lo[i].is_finite() {
                let a = ((p.lo[i] - xi) / pi).max(0.0);
                if a < alpha {
                    alpha = a;
                    block = Some((i, Side::Lower));
                }
            } else if pi > 1e-15 * scale && p.hi[i].is_finite() {
                let a = ((p.hi[i] - xi) / pi).max(0.0);
                if a < alpha {
                    alpha = a;
                    block = Some((i, Side::Upper));
                }
            }
        }
        x += alpha * step;
        if let Some((i, side)) = block {
            x[i] = if side == Side::Lower { p.lo[i] } else { p.hi[i] };
            working.push((i, side));
        }
    }
    contract("active-set iteration cap reached")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag_problem(target: &[f64], lo: Vec<f64>, hi: Vec<f64>) -> QpProblem {
        let n = target.len();
        QpProblem {
            h: DMatrix::identity(n, n),
            g: -DVector::from_column_slice(target),
            eq_a: DMatrix::zeros(0, n),
            eq_b: DVector::zeros(0),
            lo,
            hi,
        }
    }

    #[test]
    fn projection_onto_box() {
        let p = diag_problem(&[2.0, -3.0, 0.5], vec![-1.0; 3], vec![1.0; 3]);
        let s = solve_qp(&p, DVector::zeros(3)).unwrap();
        assert_relative_eq!(s.x, DVector::from_column_slice(&[1.0, -1.0, 0.5]), epsilon = 1e-12);
        assert_eq!(s.active.len(), 2);
    }

    #[test]
    fn equality_and_bounds() {
        // min |x|^2 / 2 s.t. x_0 + x_1 = 2, x_1 <= 0.5
        let mut p = diag_problem(&[0.0, 0.0], vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY, 0.5]);
        p.eq_a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        p.eq_b = DVector::from_column_slice(&[2.0]);
        let s = solve_qp(&p, DVector::from_column_slice(&[2.0, 0.0])).unwrap();
        assert_relative_eq!(s.x, DVector::from_column_slice(&[1.5, 0.5]), epsilon = 1e-12);
    }

    #[test]
    fn leaves_bound_when_multiplier_negative() {
        let p = diag_problem(&[0.3], vec![0.0], vec![1.0]);
        let s = solve_qp(&p, DVector::from_column_slice(&[0.0])).unwrap();
        assert_relative_eq!(s.x[0], 0.3, epsilon = 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn pinned_and_infeasible_start() {
        let p = diag_problem(&[1.0, 1.0], vec![0.2, -1.0], vec![0.2, 1.0]);
        let s = solve_qp(&p, DVector::from_column_slice(&[0.2, 0.0])).unwrap();
        assert_relative_eq!(s.x[0], 0.2);
        assert_relative_eq!(s.x[1], 1.0);
        assert!(solve_qp(&p, DVector::from_column_slice(&[0.0, 0.0])).is_err());
    }
}
