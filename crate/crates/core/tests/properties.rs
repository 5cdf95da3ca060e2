//! Cross-module properties: simplex masses, theta pairings and the variational problem.

use iltlab_core::par::Rng;
use iltlab_core::rate::{closed_form_inf, minimize_energy_seeded, ConstraintProgram, TimeBox};
use iltlab_core::sampler::{sample_conditioned_bm, IncrementConstraintSet, TimeGrid};
use iltlab_core::simplex::{ldp_mass_curve, mass_m, QuadratureSpec};
use iltlab_core::theta::{
    cylinder_mass, pairing_bridge, pairing_epsilon, BoxSet, CylinderFunctional, McBudget, Payoff, DEFAULT_EPS_LADDER,
};
use iltlab_core::Point;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};

fn unit_dir(d: usize, rng: &mut Rng) -> Point {
    let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Point(v.iter().map(|x| x / n).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masses_are_positive(r in 0.05f64..6.0, d in 3usize..7) {
        let m = mass_m(&Point::e1(d).scaled(r), d, &QuadratureSpec::tensor(1e-9)).unwrap();
        prop_assert!(m > 0.0 && m.is_finite());
    }

    #[test]
    fn laplace_curves_settle_onto_the_rate(seed in 0u64..1000, k in 2usize..4) {
        let mut rng = Rng::seed_from_u64(seed);
        let u_list: Vec<Point> = (1..k).map(|_| unit_dir(4, &mut rng).scaled(rng.random_range(0.3..1.5))).collect();
        let ts = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0];
        let curve = ldp_mass_curve(&u_list, 4, &ts, &QuadratureSpec::tensor(1e-9)).unwrap();
        let cap = closed_form_inf(&u_list);
        // the polynomial prefactor makes the curve approach the rate from above
        for w in curve[1..].windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-9, "{curve:?}");
        }
        for &(_, y) in &curve {
            prop_assert!(y >= cap - 1e-9, "{y} < {cap}");
        }
        let gap = |i: usize| (curve[i].1 - cap) * curve[i].0.powi(2) / curve[i].0.ln();
        prop_assert!(gap(5) <= 1.5 * gap(3), "excess does not decay like ln t / t^2: {curve:?}");
    }
}

fn catalogue() -> Vec<CylinderFunctional> {
    vec![
        CylinderFunctional::one(),
        CylinderFunctional::new(vec![1.0], Payoff::GaussianBump { center: vec![], width: 0.8 }).unwrap(),
        CylinderFunctional::new(vec![0.5], Payoff::GaussianBump { center: vec![0.3], width: 0.5 }).unwrap(),
        CylinderFunctional::new(vec![1.0], Payoff::PolynomialClipped { coeffs: vec![1.0, 0.5, -0.25], clip: 2.0 }).unwrap(),
        CylinderFunctional::new(
            vec![0.5, 1.0],
            Payoff::Combination {
                terms: vec![
                    (0.5, Payoff::Constant { value: 1.0 }),
                    (1.0, Payoff::GaussianBump { center: vec![], width: 1.0 }),
                ],
            },
        )
        .unwrap(),
    ]
}

#[test]
fn bridge_and_epsilon_routes_agree_on_the_catalogue() {
    let q = QuadratureSpec::tensor(1e-9);
    for d in [4, 5] {
        for k in [2, 3] {
            let u_list: Vec<Point> = (1..k).map(|j| Point::e1(d).scaled(if j == 1 { 0.5 } else { -0.4 })).collect();
            for (i, f) in catalogue().into_iter().enumerate() {
                let seed = (100 * d + 10 * k + i) as u64;
                let b = pairing_bridge(&f, &u_list, d, &q, &McBudget::new(600, 20), seed).unwrap();
                let (ladder, n_eps) = if k == 2 { (DEFAULT_EPS_LADDER, 60_000) } else { ([0.06, 0.03, 0.015], 400_000) };
                let e = pairing_epsilon(&f, &u_list, d, &ladder, n_eps, seed).unwrap().extrapolated;
                let z = (b.value - e.value).abs() / b.stderr.hypot(e.stderr);
                assert!(z <= 3.0, "d={d} k={k} payoff {i}: bridge {b:?} vs epsilon {e:?}");
            }
        }
    }
}

#[test]
fn pairing_is_linear_in_the_payoff() {
    let (d, q, mc) = (4, QuadratureSpec::tensor(1e-9), McBudget::new(300, 10));
    let u = [Point::e1(d).scaled(0.7)];
    let f = Payoff::GaussianBump { center: vec![], width: 0.6 };
    let g = Payoff::IndicatorBox { lo: vec![-0.5; 4], hi: vec![1.0; 4] };
    let (a, b) = (2.5, -0.75);
    let fun = |p: Payoff| CylinderFunctional::new(vec![0.6, 1.0], p).unwrap();
    let combo = Payoff::Combination { terms: vec![(a, f.clone()), (b, g.clone())] };
    // one seed, so all three share their random draws
    let lhs = pairing_bridge(&fun(combo), &u, d, &q, &mc, 5).unwrap();
    let pf = pairing_bridge(&fun(f), &u, d, &q, &mc, 5).unwrap();
    let pg = pairing_bridge(&fun(g), &u, d, &q, &mc, 5).unwrap();
    let rhs = a * pf.value + b * pg.value;
    assert!((lhs.value - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300), "{} vs {rhs}", lhs.value);
    assert!((lhs.value - rhs).abs() <= 3.0 * lhs.stderr);
}

#[test]
fn null_cylinders_have_zero_mass() {
    let d = 4;
    let (q, mc) = (QuadratureSpec::tensor(1e-9), McBudget::new(300, 20));
    let away = BoxSet { lo: vec![0.5; d], hi: vec![1.0; d] };
    for t in [0.0, 1e-6] {
        let m = cylinder_mass(&[t], &away, &[Point::e1(d)], d, &q, &mc, 8).unwrap();
        assert!(m.value.abs() <= 3.0 * m.stderr + 1e-300, "t = {t}: {m:?}");
        assert!(m.value.abs() < 1e-12);
    }
}

#[test]
fn masses_are_continuous_in_u() {
    let d = 4;
    let q = QuadratureSpec::tensor(1e-11);
    let path = |l: f64| Point(vec![1.0 + l, 0.5 * l.sin(), 0.0, 0.2 * l]);
    let lambdas: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let m: Vec<f64> = lambdas.iter().map(|&l| mass_m(&path(l), d, &q).unwrap()).collect();
    let coarse = m.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let fine: Vec<f64> = lambdas.iter().map(|&l| mass_m(&path(l + 1.0 / 80.0), d, &q).unwrap()).collect();
    let half = m.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // Lipschitz along the path: halving the step halves the largest jump
    assert!(half <= 0.6 * coarse, "{half} vs {coarse}");
    let f = CylinderFunctional::new(vec![1.0], Payoff::GaussianBump { center: vec![], width: 0.7 }).unwrap();
    let mc = McBudget::new(400, 10);
    let p0 = pairing_bridge(&f, &[path(0.5)], d, &QuadratureSpec::tensor(1e-9), &mc, 3).unwrap();
    let p1 = pairing_bridge(&f, &[path(0.5 + 1e-4)], d, &QuadratureSpec::tensor(1e-9), &mc, 3).unwrap();
    assert!((p0.value - p1.value).abs() <= 3.0 * p0.stderr.hypot(p1.stderr) + 1e-3 * p0.value.abs());
}

#[test]
fn conditioned_sampling_is_reproducible() {
    let u = [Point(vec![0.3, 0.1]), Point(vec![-0.2, 0.4])];
    let set = IncrementConstraintSet::chain(&[0.1, 0.4, 0.9], &u).unwrap();
    let grid = TimeGrid::uniform(40);
    let a = sample_conditioned_bm(&grid, &set, 77).unwrap();
    let b = sample_conditioned_bm(&grid, &set, 77).unwrap();
    let c = sample_conditioned_bm(&grid, &set, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn feasible_box_programs_attain_finite_minima() {
    let mut rng = Rng::seed_from_u64(12);
    for i in 0..20 {
        let d = rng.random_range(1..=3);
        let k = rng.random_range(2..=4);
        let targets: Vec<Point> = (1..k).map(|_| Point((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let boxes = (0..rng.random_range(1..=3))
            .map(|_| {
                let c: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
                TimeBox {
                    t: rng.random_range(0.05..1.0),
                    lo: c.iter().map(|x| x - 0.3).collect(),
                    hi: c.iter().map(|x| x + 0.3).collect(),
                }
            })
            .collect();
        let prog = ConstraintProgram::new(d, targets.clone(), None, boxes).unwrap();
        let m = minimize_energy_seeded(&prog, 2, 1e-8, i).unwrap();
        assert!(m.value.is_finite());
        assert!(m.value >= closed_form_inf(&targets) - 1e-8);
        assert!((iltlab_core::rate::path_energy(&m.path) - m.value).abs() <= 1e-9 * m.value.max(1.0));
    }
}
