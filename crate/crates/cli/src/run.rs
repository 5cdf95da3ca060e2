//! Execution of a validated configuration into a table of results.

use iltlab_core::chaos::{
    delta_increment_spectrum, norm_bound_delta, sobolev_norm_sq, weighted_partial_sums, IncrementSpec, SobolevIndex,
    DEFAULT_ALPHA,
};
use iltlab_core::rate::{
    closed_form_inf, ldp_slope_fit, minimize_energy_seeded, schilder_empirical_slope, ConstraintProgram,
};
use iltlab_core::simplex::{gap_reduced_integral, ldp_mass_curve, mass_two_variable, QuadratureSpec, SimplexIntegrand};
use iltlab_core::theta::{
    eta_mass_scan, eta_pairing_correlated, eta_pairing_independent, pairing_bridge, pairing_epsilon, CorrelatedPairing,
    CylinderFunctional, EstimateWithError,
};
use serde_json::{json, Map, Value};

use crate::config::{Command, ExperimentConfig, Route};
use crate::error::CliError;
use crate::selfcheck;

/// A result table with command-specific metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub meta: Map<String, Value>,
    pub warnings: Vec<String>,
    /// Name of the first failed selfcheck invariant.
    pub failed_check: Option<String>,
}

impl Report {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta: Map::new(),
            warnings: Vec::new(),
            failed_check: None,
        }
    }

    fn meta(&mut self, key: &str, v: impl Into<Value>) {
        self.meta.insert(key.into(), v.into());
    }

    fn estimate_row(&mut self, e: &EstimateWithError) {
        self.rows.push(vec![json!(e.method), json!(e.value), json!(e.stderr), json!(e.n_samples)]);
        self.warnings.extend(e.warnings.iter().cloned());
    }
}

fn quad(q: Option<QuadratureSpec>, seed: Option<u64>) -> QuadratureSpec {
    let mut q = q.unwrap_or_default();
    if let Some(s) = seed {
        q.seed = s;
    }
    q
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let seed = cfg.seed;
    let mc_seed = seed.unwrap_or(0);
    match &cfg.command {
        Command::Mass(p) => {
            let q = quad(p.quad, seed);
            let out = gap_reduced_integral(&SimplexIntegrand::mass(p.u.clone(), p.d)?, &q)?;
            let mut r = Report::new(&["d", "u_norm", "mass", "rel_err", "mass_two_variable", "rel_diff"]);
            let (second, diff) = if p.d >= 3 {
                let m2 = mass_two_variable(&p.u, p.d, 1e-11)?;
                (json!(m2), finite((out.value() - m2).abs() / m2))
            } else {
                (Value::Null, Value::Null)
            };
            r.rows.push(vec![json!(p.d), json!(p.u.norm()), json!(out.value()), json!(out.rel_err), second, diff]);
            r.warnings = out.warnings;
            Ok(r)
        }
        Command::LdpSlope(p) => {
            let curve = ldp_mass_curve(&p.u_list, p.d, &p.t_grid, &quad(p.quad, seed))?;
            let mut r = Report::new(&["t", "neg_log_mass_over_t2"]);
            for &(t, y) in &curve {
                r.rows.push(vec![json!(t), finite(y)]);
            }
            r.meta("closed_form_inf", closed_form_inf(&p.u_list));
            if curve.len() >= 3 {
                let fit = ldp_slope_fit(&curve)?;
                r.meta("fit_limit", fit.limit);
                r.meta("fit_coefficients", fit.coefficients);
                r.meta("fit_residual_rms", fit.residual_rms);
            } else {
                r.warnings.push("fewer than three grid points; no limit fitted".into());
            }
            Ok(r)
        }
        Command::Pairing(p) => {
            let f = CylinderFunctional::new(p.eval_times.clone(), p.payoff.clone())?;
            let q = quad(p.quad, seed);
            let mut r = Report::new(&["method", "value", "stderr", "n_samples"]);
            let bridge = if matches!(p.route, Route::Bridge | Route::Both) {
                let e = pairing_bridge(&f, &p.u_list, p.d, &q, &p.budget, mc_seed)?;
                r.estimate_row(&e);
                Some(e)
            } else {
                None
            };
            if matches!(p.route, Route::Epsilon | Route::Both) {
                let e = pairing_epsilon(&f, &p.u_list, p.d, &p.eps_ladder, p.samples_per_eps, mc_seed)?;
                for (eps, rung) in &e.per_eps {
                    let mut rung = rung.clone();
                    rung.method = format!("epsilon@{eps}");
                    r.estimate_row(&rung);
                }
                r.estimate_row(&e.extrapolated);
                if let Some(b) = bridge {
                    let z = (b.value - e.extrapolated.value).abs() / b.stderr.hypot(e.extrapolated.stderr);
                    r.meta("route_z", finite(z));
                }
            }
            Ok(r)
        }
        Command::Eta(p) => {
            let q = quad(p.quad, seed);
            let mut r = Report::new(&["method", "value", "stderr", "n_samples"]);
            let e = match p.correlated {
                Some(c) => {
                    let spec = CorrelatedPairing {
                        s: c.s,
                        f1: p.f1.clone(),
                        f2: p.f2.clone(),
                        weight: p.weight,
                        r: c.r,
                    };
                    eta_pairing_correlated(&spec, &p.u, p.d, &q, &p.budget, mc_seed)?
                }
                None => {
                    let times = p.f1_times.clone().unwrap_or_else(|| vec![1.0]);
                    let f1 = CylinderFunctional::new(times, p.f1.clone())?;
                    eta_pairing_independent(&f1, &p.f2, &p.weight, &p.u, p.d, &q, &p.budget, mc_seed)?
                }
            };
            r.estimate_row(&e);
            Ok(r)
        }
        Command::ChaosNorm(p) => {
            let spec = IncrementSpec::new(p.u.clone(), p.s, p.t)?;
            let sp = delta_increment_spectrum(&spec, p.d, p.k_max)?;
            let idx = SobolevIndex { gamma: p.gamma };
            let partial = weighted_partial_sums(&sp, idx);
            let mut r = Report::new(&["k", "a_k", "partial_sum"]);
            for (k, (a, s)) in sp.levels().iter().zip(&partial).enumerate() {
                r.rows.push(vec![json!(k), json!(a), json!(s)]);
            }
            let norm = sobolev_norm_sq(&sp, idx);
            let divergent = cfg.divergence_mode();
            r.meta("divergence_mode", divergent);
            r.meta("norm_sq_truncated", norm.norm_sq);
            r.meta("last_term", norm.last_term);
            if !divergent && !p.u.is_zero() {
                r.meta("norm_bound", norm_bound_delta(&spec, p.d, idx, DEFAULT_ALPHA)?);
            }
            Ok(r)
        }
        Command::RateMin(p) => {
            let prog = ConstraintProgram::new(p.d, p.targets.clone(), p.times.clone(), p.boxes.clone())?;
            let m = minimize_energy_seeded(&prog, p.n_extra_knots, p.tol, mc_seed)?;
            let mut cols = vec!["time".to_string()];
            cols.extend((1..=p.d).map(|c| format!("x_{c}")));
            let mut r = Report::new(&[]);
            r.columns = cols;
            for (t, v) in m.path.knots().iter().zip(m.path.values()) {
                let mut row = vec![json!(t)];
                row.extend(v.iter().map(|x| json!(x)));
                r.rows.push(row);
            }
            r.meta("value", m.value);
            r.meta("closed_form_inf", closed_form_inf(&p.targets));
            r.meta("chain_times", m.chain_times.clone());
            r.meta("diagnostics", serde_json::to_value(&m.diagnostics).expect("diagnostics serialise"));
            if !m.diagnostics.converged {
                r.warnings.push("outer time search hit its sweep cap; best value found is reported".into());
            }
            Ok(r)
        }
        Command::AsymptoticScan(p) => {
            let scan = eta_mass_scan(&p.weight, p.d, &p.u_norms, &quad(p.quad, seed))?;
            let mut r = Report::new(&["u_norm", "mass"]);
            for &(u, m) in &scan.points {
                r.rows.push(vec![json!(u), json!(m)]);
            }
            let threshold = -(p.d as f64 - 1.5) - 0.1;
            r.meta("slope", scan.slope);
            r.meta("slope_threshold", threshold);
            r.meta("slope_ok", scan.slope >= threshold);
            Ok(r)
        }
        Command::Schilder(p) => {
            let c = schilder_empirical_slope(&p.set, &p.t_grid, p.samples, mc_seed)?;
            let mut r = Report::new(&["t", "probability", "stderr", "slope", "ess"]);
            for pt in &c.points {
                r.rows.push(vec![json!(pt.t), json!(pt.probability), json!(pt.stderr), finite(pt.slope), json!(pt.ess)]);
            }
            r.meta("rate", c.rate);
            let curve: Vec<(f64, f64)> = c.points.iter().filter(|p| p.slope.is_finite()).map(|p| (p.t, p.slope)).collect();
            if curve.len() >= 3 {
                if let Ok(fit) = ldp_slope_fit(&curve) {
                    r.meta("fit_limit", fit.limit);
                }
            }
            r.warnings = c.warnings;
            Ok(r)
        }
        Command::Selfcheck(p) => {
            let results = selfcheck::run(p.tier, p.fault);
            let mut r = Report::new(&["check", "status", "detail"]);
            for c in &results {
                r.rows.push(vec![json!(c.name), json!(if c.pass { "pass" } else { "fail" }), json!(c.detail)]);
            }
            r.failed_check = results.iter().find(|c| !c.pass).map(|c| c.name.to_string());
            r.meta("tier", serde_json::to_value(p.tier).expect("tier serialises"));
            Ok(r)
        }
    }
}
