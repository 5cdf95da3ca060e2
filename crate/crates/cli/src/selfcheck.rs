//! Invariant suites of every module at a small budget. The heat kernel and the Wick convolution
//! are taken from a [`Fixture`] so that deliberate faults can be injected and must be caught.

use iltlab_core::chaos::{
    delta_increment_spectrum, norm_bound_delta, sobolev_norm_sq, weighted_partial_sums, wick_convolve, ChaosSpectrum,
    IncrementSpec, SobolevIndex, DEFAULT_ALPHA,
};
use iltlab_core::kernel::log_heat_kernel_norm_sq;
use iltlab_core::par::{sample_stats, Rng, StreamKey};
use iltlab_core::path::PiecewiseLinearPath;
use iltlab_core::quad::{integrate_log, LogQuadConfig};
use iltlab_core::rate::{
    closed_form_inf, ldp_slope_fit, minimize_energy_seeded, path_energy, path_energy_gradient, schilder_empirical_slope,
    ConstraintProgram, SchilderSet,
};
use iltlab_core::sampler::{sample_bm_with, ConditionedSampler, IncrementConstraintSet, TimeGrid};
use iltlab_core::simplex::{ldp_mass_curve, mass_m, mass_two_variable, QuadratureSpec};
use iltlab_core::theta::{pairing_bridge, pairing_epsilon, CylinderFunctional, McBudget, Payoff, DEFAULT_EPS_LADDER};
use iltlab_core::Point;
use rand::{Rng as _, SeedableRng};

use crate::config::{Fault, Tier};

type LogKernel = fn(f64, f64, usize) -> f64;
type Wick = fn(&ChaosSpectrum, &ChaosSpectrum) -> ChaosSpectrum;

/// The primitives the checks are built on.
#[derive(Clone, Copy)]
pub struct Fixture {
    pub log_kernel: LogKernel,
    pub wick: Wick,
}

fn kernel_two_pi(norm_sq: f64, eps: f64, d: usize) -> f64 {
    log_heat_kernel_norm_sq(norm_sq, eps, d) - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn wick_shifted(a: &ChaosSpectrum, b: &ChaosSpectrum) -> ChaosSpectrum {
    let (x, y) = (a.levels(), b.levels());
    let mut c = vec![0.0; x.len() + y.len()];
    for (i, ai) in x.iter().enumerate() {
        for (j, bj) in y.iter().enumerate() {
            c[i + j + 1] += ai * bj;
        }
    }
    ChaosSpectrum::new(c).expect("nonnegative levels")
}

impl Fixture {
    pub fn correct() -> Self {
        Self {
            log_kernel: log_heat_kernel_norm_sq,
            wick: wick_convolve,
        }
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        let mut f = Self::correct();
        match fault {
            Some(Fault::HeatKernel2Pi) => f.log_kernel = kernel_two_pi,
            Some(Fault::WickOffByOne) => f.wick = wick_shifted,
            None => {}
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Budget {
    full: bool,
}

impl Budget {
    fn pick(&self, quick: usize, full: usize) -> usize {
        if self.full {
            full
        } else {
            quick
        }
    }
}

type Check = fn(&Fixture, &Budget) -> (bool, String);

/// `m(u, 4)` by integrating the fixture kernel against `1 - g` versus the closed-form inner
/// integral route, and the library's gap route against the same.
fn mass_dual_route(fx: &Fixture, _: &Budget) -> (bool, String) {
    let d = 4;
    let mut worst: f64 = 0.0;
    for r in [0.5, 1.0, 2.0, 4.0] {
        let u = Point::e1(d).scaled(r);
        let a2 = u.norm_sq();
        let res = integrate_log(
            |y: f64| {
                let g = y.exp();
                if g >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    y + (-g).ln_1p() + (fx.log_kernel)(a2, g, d)
                }
            },
            -70.0,
            0.0,
            &[(a2 / d as f64).ln(), -1e-3],
            LogQuadConfig::default(),
        );
        let direct = res.log_value.exp();
        let closed = mass_two_variable(&u, d, 1e-11).unwrap_or(f64::NAN);
        let lib = mass_m(&u, d, &QuadratureSpec::tensor(1e-11)).unwrap_or(f64::NAN);
        worst = worst.max((direct - closed).abs() / closed).max((lib - closed).abs() / closed);
    }
    (worst <= 1e-8, format!("max rel diff {worst:.2e} over |u| in {{0.5, 1, 2, 4}}"))
}

fn sample_spectrum(rng: &mut Rng) -> ChaosSpectrum {
    let n = rng.random_range(1..=40);
    ChaosSpectrum::new((0..n).map(|_| rng.random_range(0.0..=10.0)).collect()).expect("nonnegative")
}

fn wick_identity(fx: &Fixture, _: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(21);
    for _ in 0..20 {
        let b = sample_spectrum(&mut rng);
        let c = (fx.wick)(&ChaosSpectrum::unit(), &b);
        if c.levels() != b.levels() {
            return (false, format!("e_0 * b != b for b of length {}", b.levels().len()));
        }
    }
    (true, "e_0 is the identity on 20 spectra".into())
}

fn wick_commutative(fx: &Fixture, _: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (a, b) = (sample_spectrum(&mut rng), sample_spectrum(&mut rng));
        let (ab, ba) = ((fx.wick)(&a, &b), (fx.wick)(&b, &a));
        let ok = ab.levels().len() == ba.levels().len()
            && ab.levels().iter().zip(ba.levels()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
        if !ok {
            return (false, "a * b != b * a".into());
        }
    }
    (true, "50 pairs".into())
}

fn wick_inequality(fx: &Fixture, b: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(23);
    let n = b.pick(200, 1000);
    let mut bad = 0;
    for _ in 0..n {
        let (x, y) = (sample_spectrum(&mut rng), sample_spectrum(&mut rng));
        let (g1, g2) = (rng.random_range(-3.0..=-0.1), rng.random_range(-3.0..=-0.1));
        let lhs = sobolev_norm_sq(&(fx.wick)(&x, &y), SobolevIndex { gamma: g1 + g2 }).norm_sq;
        let rhs = sobolev_norm_sq(&x, SobolevIndex { gamma: g1 }).norm_sq * sobolev_norm_sq(&y, SobolevIndex { gamma: g2 }).norm_sq;
        if lhs > rhs * (1.0 + 1e-12) {
            bad += 1;
        }
    }
    (bad == 0, format!("{bad} violations in {n} pairs"))
}

fn chaos_dichotomy(_: &Fixture, b: &Budget) -> (bool, String) {
    let k = b.pick(500, 2000);
    let spec = IncrementSpec::new(Point::e1(4), 0.0, 0.3).expect("valid");
    let Ok(sp) = delta_increment_spectrum(&spec, 4, k) else {
        return (false, "spectrum failed".into());
    };
    // gamma = -2.5: dyadic block sums shrink; gamma = -1.5: S_2K - S_K > 0.01 S_K
    let conv = weighted_partial_sums(&sp, SobolevIndex { gamma: -2.5 });
    let blocks = [(k / 8, k / 4), (k / 4, k / 2), (k / 2, k)].map(|(a, b)| conv[b] - conv[a]);
    let shrinking = blocks[2] < blocks[1] && blocks[1] < blocks[0];
    let div = weighted_partial_sums(&sp, SobolevIndex { gamma: -1.5 });
    let growth = [k / 16, k / 8, k / 4, k / 2].map(|m| (div[2 * m] - div[m]) / div[m]);
    let min_growth = growth.iter().copied().fold(f64::INFINITY, f64::min);
    (
        shrinking && min_growth > 0.01,
        format!("gamma=-2.5 last block {:.2e}; gamma=-1.5 min relative growth {min_growth:.3}", blocks[2]),
    )
}

fn norm_bound(_: &Fixture, _: &Budget) -> (bool, String) {
    let idx = SobolevIndex { gamma: -2.5 };
    for (r, dt) in [(0.3, 0.2), (1.0, 0.5), (1.5, 1.0)] {
        let spec = IncrementSpec::new(Point::e1(4).scaled(r), 0.0, dt).expect("valid");
        let norm = delta_increment_spectrum(&spec, 4, 300).map(|sp| sobolev_norm_sq(&sp, idx).norm_sq.sqrt());
        let bound = norm_bound_delta(&spec, 4, idx, DEFAULT_ALPHA);
        match (norm, bound) {
            (Ok(n), Ok(b)) if n <= b * (1.0 + 1e-12) => {}
            (n, b) => return (false, format!("|u|={r}, dt={dt}: norm {n:?} vs bound {b:?}")),
        }
    }
    (true, "bound dominates the truncated norm at 3 points".into())
}

fn semigroup(fx: &Fixture, b: &Budget) -> (bool, String) {
    let (t1, t2, eps, d) = (0.2, 0.7, 0.02, 4);
    let grid = TimeGrid::through(&[t1, t2]).expect("valid");
    let (i, j) = (grid.index_of(t1).expect("knot"), grid.index_of(t2).expect("knot"));
    let n = b.pick(20_000, 100_000);
    let k = fx.log_kernel;
    let s = sample_stats(&StreamKey::new(24), n, |rng, _| {
        let w = sample_bm_with(&grid, d, rng);
        let r2: f64 = w.increment(i, j).iter().enumerate().map(|(c, x)| (x - if c == 0 { 1.0 } else { 0.0 }).powi(2)).sum();
        k(r2, eps, d).exp()
    });
    let exact = log_heat_kernel_norm_sq(1.0, t2 - t1 + eps, d).exp();
    let z = (s.mean() - exact).abs() / s.stderr();
    (z <= 4.0, format!("mc {:.4e} vs {exact:.4e}, |z| = {z:.2}", s.mean()))
}

fn conditioned_support(_: &Fixture, b: &Budget) -> (bool, String) {
    let u = [Point(vec![0.4, -0.2, 0.1]), Point(vec![-0.3, 0.5, 0.2])];
    let set = IncrementConstraintSet::chain(&[0.15, 0.55, 0.8], &u).expect("valid chain");
    let sampler = ConditionedSampler::new(&TimeGrid::uniform(64), &set, 3).expect("valid sampler");
    let key = StreamKey::new(25);
    let n = b.pick(1000, 10_000);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        match sampler.sample_with(&mut key.rng(i as u64)).and_then(|p| set.max_residual(&p)) {
            Ok(r) => worst = worst.max(r),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 1e-12, format!("max residual {worst:.2e} over {n} paths"))
}

fn random_path(rng: &mut Rng) -> PiecewiseLinearPath {
    let n = rng.random_range(2..8);
    let mut knots: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let values = (0..knots.len())
        .map(|i| if i == 0 { vec![0.0, 0.0] } else { vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5] })
        .collect();
    PiecewiseLinearPath::new(knots, values).expect("valid path")
}

fn energy_gradient(_: &Fixture, b: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(26);
    let n = b.pick(20, 100);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let p = random_path(&mut rng);
        let g = path_energy_gradient(&p);
        for i in 1..p.knots().len() {
            for c in 0..2 {
                let shift = |h: f64| {
                    let mut v = p.values().to_vec();
                    v[i][c] += h;
                    path_energy(&PiecewiseLinearPath::new(p.knots().to_vec(), v).expect("valid"))
                };
                let fd = (shift(1e-6) - shift(-1e-6)) / 2e-6;
                worst = worst.max((fd - g[i - 1][c]).abs() / fd.abs().max(1.0));
            }
        }
    }
    (worst <= 1e-6, format!("max rel diff {worst:.2e} over {n} paths"))
}

fn energy_scaling(_: &Fixture, _: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(27);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_path(&mut rng);
        let t = rng.random_range(0.1..10.0);
        let (a, b) = (path_energy(&p.scaled(t)), t * t * path_energy(&p));
        worst = worst.max((a - b).abs() / b.max(1e-300));
    }
    (worst <= 1e-13, format!("max rel diff {worst:.2e}"))
}

fn energy_closed_form(_: &Fixture, b: &Budget) -> (bool, String) {
    let mut rng = Rng::seed_from_u64(28);
    let n = b.pick(5, 50);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let k = rng.random_range(2..=5);
        let targets: Vec<Point> = (1..k).map(|_| Point((0..3).map(|_| rng.random_range(-1.5..1.5)).collect())).collect();
        let Ok(prog) = ConstraintProgram::unconstrained(targets.clone()) else {
            return (false, "program rejected".into());
        };
        match minimize_energy_seeded(&prog, 0, 1e-9, i as u64) {
            Ok(m) => worst = worst.max((m.value - closed_form_inf(&targets)).abs()),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 1e-6, format!("max abs diff {worst:.2e} over {n} programs"))
}

fn ldp_slope(_: &Fixture, _: &Budget) -> (bool, String) {
    let curve = ldp_mass_curve(&[Point::e1(4)], 4, &[4.0, 8.0, 12.0, 16.0, 20.0], &QuadratureSpec::tensor(1e-10));
    match curve.and_then(|c| ldp_slope_fit(&c)) {
        Ok(fit) => ((fit.limit - 0.5).abs() <= 0.01, format!("k=2 limit {:.5}", fit.limit)),
        Err(e) => (false, e.to_string()),
    }
}

fn pairing_positivity(_: &Fixture, b: &Budget) -> (bool, String) {
    let mc = McBudget::new(b.pick(100, 400), b.pick(10, 20));
    let f = CylinderFunctional::new(vec![0.5, 1.0], Payoff::IndicatorBox { lo: vec![-0.5; 4], hi: vec![0.5; 4] }).expect("valid");
    match pairing_bridge(&f, &[Point::e1(4)], 4, &QuadratureSpec::tensor(1e-9), &mc, 29) {
        Ok(e) => (e.value >= -3.0 * e.stderr, format!("{:.3e} +- {:.1e}", e.value, e.stderr)),
        Err(e) => (false, e.to_string()),
    }
}

fn route_duality(_: &Fixture, _: &Budget) -> (bool, String) {
    let f = CylinderFunctional::new(vec![1.0], Payoff::GaussianBump { center: vec![], width: 0.8 }).expect("valid");
    let u = [Point::e1(4).scaled(0.5)];
    let bridge = pairing_bridge(&f, &u, 4, &QuadratureSpec::tensor(1e-9), &McBudget::new(1000, 50), 30);
    let eps = pairing_epsilon(&f, &u, 4, &DEFAULT_EPS_LADDER, 100_000, 31);
    match (bridge, eps) {
        (Ok(b), Ok(e)) => {
            let e = e.extrapolated;
            let z = (b.value - e.value).abs() / b.stderr.hypot(e.stderr);
            (z <= 4.0, format!("bridge {:.4e}, epsilon {:.4e}, |z| = {z:.2}", b.value, e.value))
        }
        (b, e) => (false, format!("{:?} / {:?}", b.err(), e.err())),
    }
}

fn schilder(_: &Fixture, _: &Budget) -> (bool, String) {
    let set = SchilderSet::Halfspace { d: 1, coord: 0, a: 1.0 };
    let ts = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let c = match schilder_empirical_slope(&set, &ts, 20_000, 32) {
        Ok(c) => c,
        Err(e) => return (false, e.to_string()),
    };
    let curve: Vec<(f64, f64)> = c.points.iter().map(|p| (p.t, p.slope)).collect();
    match ldp_slope_fit(&curve) {
        Ok(fit) => ((fit.limit - 0.5).abs() <= 0.025 && c.warnings.is_empty(), format!("fitted limit {:.4}", fit.limit)),
        Err(e) => (false, e.to_string()),
    }
}

const QUICK: [(&str, Check); 13] = [
    ("mass dual-route identity", mass_dual_route),
    ("wick identity element", wick_identity),
    ("wick commutativity", wick_commutative),
    ("wick norm inequality", wick_inequality),
    ("chaos dichotomy", chaos_dichotomy),
    ("norm bound domination", norm_bound),
    ("heat kernel semigroup", semigroup),
    ("conditioned path support", conditioned_support),
    ("energy gradient", energy_gradient),
    ("energy scaling", energy_scaling),
    ("energy closed form", energy_closed_form),
    ("ldp slope", ldp_slope),
    ("pairing positivity", pairing_positivity),
];

const FULL_ONLY: [(&str, Check); 2] = [("bridge and epsilon routes agree", route_duality), ("schilder halfspace slope", schilder)];

/// Run the suites in order, stopping at the first violated invariant.
pub fn run(tier: Tier, fault: Option<Fault>) -> Vec<CheckResult> {
    let fx = Fixture::with_fault(fault);
    let budget = Budget { full: tier == Tier::Full };
    let extra: &[(&str, Check)] = if budget.full { &FULL_ONLY } else { &[] };
    let mut out = Vec::new();
    for (name, check) in QUICK.iter().chain(extra) {
        let (pass, detail) = check(&fx, &budget);
        out.push(CheckResult { name, pass, detail });
        if !pass {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_tier_passes() {
        let r = run(Tier::Quick, None);
        assert!(r.iter().all(|c| c.pass), "{r:?}");
        assert_eq!(r.len(), QUICK.len());
    }

    #[test]
    fn kernel_fault_fails_mass_identity_first() {
        let r = run(Tier::Quick, Some(Fault::HeatKernel2Pi));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].name, "mass dual-route identity");
        assert!(!r[0].pass);
    }

    #[test]
    fn wick_fault_fails_identity_element() {
        let r = run(Tier::Quick, Some(Fault::WickOffByOne));
        let last = r.last().unwrap();
        assert_eq!(last.name, "wick identity element");
        assert!(!last.pass);
    }
}
