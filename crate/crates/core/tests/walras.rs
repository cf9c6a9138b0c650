use kakutani_core::bodies::BodySpec;
use kakutani_core::json::J;
use kakutani_core::numerics::rational::rat;
use kakutani_core::numerics::Polynomial;
use kakutani_core::walras::*;
use kakutani_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.05;

fn inside(b: &BodySpec, x: &[f64]) -> bool {
    b.strong_sep(x).unwrap().is_inside()
}

/// Demand of `Σ a_k ln(σ + x_k) − γ‖x‖²` on the two-good budget line, by
/// bisection on the derivative along the line.
fn oracle_demand(a: [f64; 2], gamma: f64, p: f64, wealth: f64) -> [f64; 2] {
    let slope = p / (1.0 - p);
    let x2 = |t: f64| (wealth - p * t) / (1.0 - p);
    let du = |t: f64| {
        let y = x2(t);
        a[0] / (SIGMA + t) - a[1] * slope / (SIGMA + y) - 2.0 * gamma * (t - slope * y)
    };
    let (mut lo, mut hi) = (0.0, wealth / p);
    if du(lo) <= 0.0 {
        return [0.0, x2(0.0)];
    }
    if du(hi) >= 0.0 {
        return [hi, 0.0];
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if du(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let t = 0.5 * (lo + hi);
    [t, x2(t)]
}

/// Equilibrium price of good 1 for a two-good shifted-log economy, by
/// bisection on the excess demand for good 1.
fn oracle_price(agents: &[([f64; 2], [f64; 2])], xi: f64) -> f64 {
    let excess = |p: f64| -> f64 {
        agents
            .iter()
            .map(|(a, e)| oracle_demand(*a, 0.0, p, p * e[0] + (1.0 - p) * e[1])[0] - e[0])
            .sum()
    };
    let (mut lo, mut hi) = (xi, 1.0 - xi);
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if excess(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

fn log_utility(a: [f64; 2], x: &[f64]) -> f64 {
    a[0] * (SIGMA + x[0]).ln() + a[1] * (SIGMA + x[1]).ln()
}

fn random_price(rng: &mut ChaCha8Rng, d: usize, xi: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().ln()).collect();
    let s: f64 = w.iter().sum();
    let mass = 1.0 - d as f64 * xi;
    w.iter().map(|t| xi + mass * t / s).collect()
}

#[test]
fn budget_triangle() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let b = budget_body(&econ, 0, &[0.5, 0.5], 0.0).unwrap();
    for x in [[2.0, 0.0], [0.0, 2.0], [0.0, 0.0], [1.0, 1.0]] {
        assert!(inside(&b.body, &x), "{x:?}");
    }
    for x in [[1.01, 1.0], [2.01, 0.0], [-0.01, 1.0]] {
        assert!(!inside(&b.body, &x), "{x:?}");
    }
    assert!(b.big_r <= econ.box_bound(0));
    assert!(inside(&b.body, &b.outer_center()));
}

#[test]
fn budget_members_respect_the_norm_bound() {
    let econ = ExchangeEconomy::asymmetric(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let p = random_price(&mut rng, 2, econ.xi);
        for i in 0..2 {
            let b = budget_body(&econ, i, &p, 0.0).unwrap();
            let bound = econ.box_bound(i);
            for _ in 0..50 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() * b.big_r).collect();
                if inside(&b.body, &x) {
                    assert!(kakutani_core::numerics::linalg::norm2(&x) <= bound);
                }
            }
        }
    }
}

#[test]
fn shift_equal_to_wealth_empties_the_budget() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let p = [0.5, 0.5];
    let alpha = econ.n() as f64 * 1.0;
    assert!(matches!(budget_body(&econ, 0, &p, alpha), Err(Error::EmptyBudget { .. })));
    assert!(matches!(demand_body(&econ, 0, &p, alpha), Err(Error::EmptyBudget { .. })));
    assert!(budget_body(&econ, 0, &p, 0.99 * alpha).is_ok());
}

#[test]
fn prices_off_the_simplex_are_rejected() {
    let econ = ExchangeEconomy::symmetric(0.05);
    assert!(budget_body(&econ, 0, &[0.6, 0.6], 0.0).is_err());
    assert!(budget_body(&econ, 0, &[1.0, 0.0], 0.0).is_err());
}

#[test]
fn demand_matches_the_regularized_oracle() {
    let econ = ExchangeEconomy::asymmetric(0.05);
    // ũ(x_sol) ≥ max ũ − ε/4 and 2γ-strong concavity.
    let radius = (econ.eps / 4.0 / econ.gamma).sqrt();
    for (i, p) in [(0, 0.5), (1, 0.4), (0, 0.7)] {
        let e = &econ.endowments[i];
        let want = oracle_demand([0.5, 0.5], econ.gamma, p, p * e[0] + (1.0 - p) * e[1]);
        let db = demand_body(&econ, i, &[p, 1.0 - p], 0.0).unwrap();
        let top = regularized_utility(&econ, i, &want).unwrap().0;
        let got = regularized_utility(&econ, i, &db.sol).unwrap().0;
        assert!(got >= top - econ.eps / 4.0 && got <= top + 1e-9, "agent {i} at p={p}: {got} vs {top}");
        let gap = ((db.sol[0] - want[0]).powi(2) + (db.sol[1] - want[1]).powi(2)).sqrt();
        assert!(gap <= radius, "agent {i} at p={p}: {:?} vs {want:?}", db.sol);
    }
}

#[test]
fn linear_utility_demands_the_corner() {
    let u = MarketUtility::Polynomial(Polynomial::var(2, 0));
    let econ = ExchangeEconomy::new(vec![vec![1.0, 1.0]], vec![u], 0.0025, 0.05, None).unwrap();
    let db = demand_body(&econ, 0, &[0.5, 0.5], 0.0).unwrap();
    assert!((db.sol[0] - 2.0).abs() < 0.05 && db.sol[1].abs() < 0.05, "{:?}", db.sol);
}

#[test]
fn demand_members_replay_the_level_and_concentrate() {
    let econ = ExchangeEconomy::asymmetric(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let radius = 2.0 * (econ.eps / econ.gamma).sqrt();
    for p in [0.3, 0.5, 0.65] {
        let db = demand_body(&econ, 0, &[p, 1.0 - p], 0.0).unwrap();
        assert!(inside(&db.body.body, &db.sol));
        let mut members = vec![db.sol.clone()];
        for _ in 0..2000 {
            let x: Vec<f64> = db.sol.iter().map(|c| c + 0.6 * (rng.gen::<f64>() - 0.5)).collect();
            if inside(&db.body.body, &x) {
                let (v, _) = regularized_utility(&econ, 0, &x).unwrap();
                assert!(v >= db.level - 1e-12);
                members.push(x);
            }
        }
        assert!(members.len() > 10);
        for a in &members {
            for b in &members {
                assert!(kakutani_core::numerics::linalg::dist(a, b) <= radius);
            }
        }
    }
}

#[test]
fn aggregate_contains_the_endowments_at_the_symmetric_price() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let agg = aggregate_demand_body(&econ, &[0.5, 0.5], 0.0, econ.eps).unwrap();
    let point = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
    assert!(inside(&agg, &point));
    // Below Q^{ε′}.
    assert!(!inside(&agg, &[0.9, 0.9, 0.9, 0.9, 1.8, 1.8]));
    // Coupling broken.
    assert!(!inside(&agg, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.1]));
    // One block outside its demand set.
    assert!(!inside(&agg, &[1.6, 0.4, 1.0, 1.0, 2.6, 1.4]));
}

#[test]
fn price_body_follows_the_excess_demand() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let total = econ.total_endowment();
    let pb = price_body(&econ, &total).unwrap();
    let p = lift_price(&pb.sol);
    assert!((p[0] - 0.5).abs() < 0.05, "{p:?}");

    let pb = price_body(&econ, &[total[0] + 1.0, total[1]]).unwrap();
    let p = lift_price(&pb.sol);
    assert!(p[0] > 1.0 - econ.xi - 0.02, "{p:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x_sum = [2.3, 1.9];
    let pb = price_body(&econ, &x_sum).unwrap();
    let mut seen = 0;
    for _ in 0..500 {
        let q = [econ.xi + rng.gen::<f64>() * (1.0 - 2.0 * econ.xi)];
        if inside(&pb.body.body, &q) {
            seen += 1;
            assert!(price_objective(&econ, &x_sum, &lift_price(&q)).0 >= pb.level - 1e-12);
        }
    }
    assert!(seen > 0);
}

#[test]
fn hoffman_constant_matches_direction_search() {
    let brute = |p: &[f64]| -> f64 {
        // min over unit v ≥ 0 of p·v, on a fine grid of the quarter circle.
        let m = (0..=20000)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 * k as f64 / 20000.0;
                p[0] * t.cos() + p[1] * t.sin()
            })
            .fold(f64::INFINITY, f64::min);
        1.0 / m
    };
    let xi = 0.05;
    let (h, bound) = hoffman_bound(&[0.5, 0.5], xi);
    assert!((h - 2.0).abs() < 1e-12 && (h - brute(&[0.5, 0.5])).abs() < 1e-6);
    assert!(h <= bound && (bound - 2f64.sqrt() / xi).abs() < 1e-12);
    let (h3, _) = hoffman_bound(&[1.0 / 3.0; 3], xi);
    assert!((h3 - 3.0).abs() < 1e-12);
    let p = [0.3, 0.7];
    assert!((hoffman_bound(&p, xi).0 - brute(&p)).abs() < 1e-6);
}

#[test]
fn check_walras_at_endowments() {
    let econ = ExchangeEconomy::asymmetric(0.05);
    let p = 0.6;
    let out = check_walras(&econ, &[p, 1.0 - p], &econ.endowments, econ.eps).unwrap();
    assert!(out.clearance_residual.iter().all(|t| t.abs() < 1e-15));
    assert!(out.almost_clear && out.feasible.iter().all(|f| *f));
    for (i, e) in econ.endowments.iter().enumerate() {
        let best = oracle_demand([0.5, 0.5], 0.0, p, p * e[0] + (1.0 - p) * e[1]);
        let gain = log_utility([0.5, 0.5], &best) - log_utility([0.5, 0.5], e);
        assert!(out.per_agent_regret[i] >= 0.0);
        assert!((out.per_agent_regret[i] - gain).abs() < 1e-4, "{} vs {gain}", out.per_agent_regret[i]);
    }
}

#[test]
fn over_allocation_is_flagged() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let out = check_walras(&econ, &[0.5, 0.5], &[vec![1.5, 1.5], vec![1.0, 1.0]], econ.eps).unwrap();
    assert_eq!(out.feasible, vec![false, true]);
    assert!(!out.passes() && !out.almost_clear);
}

#[test]
fn test_vectors_lie_in_the_simplex() {
    for d in 2..5 {
        for v in test_vectors(d, 0.01) {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|t| *t >= 0.01 / (d - 1) as f64 - 1e-15));
        }
    }
}

#[test]
fn alpha_follows_the_lipschitz_constants() {
    let econ = ExchangeEconomy::symmetric(0.05);
    let d = 2f64;
    let lu = econ.regularized_lipschitz();
    let lw = econ.price_lipschitz();
    assert!((econ.default_alpha() - econ.eps / (lu * (d.sqrt() / econ.xi + 1.0)).max(lw)).abs() < 1e-18);
    assert!(econ.gamma_window_ok());
    assert_eq!(econ.xi, 0.05 * 0.05);
}

#[test]
fn economy_validation() {
    let u = MarketUtility::shifted_log(vec![0.5, 0.5]);
    let mk = |e: Vec<Vec<f64>>, xi: f64| ExchangeEconomy::new(e, vec![u.clone()], xi, 0.05, None);
    assert!(mk(vec![vec![1.0, 0.0]], 0.01).is_err());
    assert!(mk(vec![vec![1.0, 1.0]], 0.5).is_err());
    assert!(mk(vec![vec![1.0, 1.0, 1.0]], 0.01).is_err());
    assert!(mk(vec![vec![1.0, 1.0]], 0.01).is_ok());
}

#[test]
fn economy_json_round_trip() {
    let econ = ExchangeEconomy::asymmetric(0.05);
    let v = econ.to_json();
    let back = ExchangeEconomy::from_json(&J::root(&v)).unwrap();
    assert_eq!(back.endowments, econ.endowments);
    assert_eq!(back.xi, econ.xi);
    assert_eq!(back.gamma, econ.gamma);
    assert_eq!(back.to_json(), v);

    let poly = ExchangeEconomy::new(
        vec![vec![1.0, 2.0]],
        vec![MarketUtility::Polynomial(Polynomial::new(2, vec![(rat(1, 2), vec![1, 0]), (rat(1, 1), vec![0, 1])]).unwrap())],
        0.01,
        0.1,
        Some(0.2),
    )
    .unwrap();
    let back = ExchangeEconomy::from_json(&J::root(&poly.to_json())).unwrap();
    assert_eq!(back.to_json(), poly.to_json());
}

#[test]
fn economy_json_defaults_and_errors() {
    let v = serde_json::json!({
        "n": 1, "d": 2, "endowments": [["1", "1"]],
        "utility": {"family": "shifted_log", "params": [["0.5", "0.5"]]},
        "epsilon": "0.1"
    });
    let econ = ExchangeEconomy::from_json(&J::root(&v)).unwrap();
    assert!((econ.xi - 0.01).abs() < 1e-15 && econ.gamma == 0.1);

    let mut bad = v.clone();
    bad["utility"]["family"] = "cobb_douglas".into();
    match ExchangeEconomy::from_json(&J::root(&bad)) {
        Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/utility/family"),
        other => panic!("{other:?}"),
    }
    let mut bad = v.clone();
    bad["endowments"] = serde_json::json!([["1"]]);
    match ExchangeEconomy::from_json(&J::root(&bad)) {
        Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/endowments"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn oracle_prices_for_the_fixtures() {
    let sym = oracle_price(&[([0.5, 0.5], [1.0, 1.0]), ([0.5, 0.5], [1.0, 1.0])], 0.0025);
    assert!((sym - 0.5).abs() < 1e-9);
    // Swapping goods and agents maps the asymmetric fixture to itself.
    let asym = oracle_price(&[([0.5, 0.5], [2.0, 0.5]), ([0.5, 0.5], [0.5, 2.0])], 0.0025);
    assert!((asym - 0.5).abs() < 1e-9);
    let tilted = oracle_price(&[([1.0, 0.0], [1.0, 1.0]), ([0.5, 0.5], [1.0, 1.0])], 0.0025);
    assert!(tilted > 0.6, "{tilted}");
}

fn solved(econ: &ExchangeEconomy) -> WalrasOutcome {
    let (res, info) = solve_walras(econ, &WalrasSolveOptions::default()).unwrap();
    let WalrasResult::Equilibrium(out) = res else { panic!("certificate: {}", info.kakutani_outcome) };
    assert!(out.passes(), "{out:?}");
    let replay = check_walras(econ, &out.p, &out.allocations, econ.eps).unwrap();
    assert!(replay.passes());
    out
}

fn assert_solves(econ: &ExchangeEconomy, agents: &[([f64; 2], [f64; 2])]) -> WalrasOutcome {
    let out = solved(econ);
    let want = oracle_price(agents, econ.xi);
    assert!((out.p[0] - want).abs() <= 0.05, "p = {:?}, oracle {want}", out.p);
    out
}

#[test]
fn symmetric_economy_clears_at_even_prices() {
    let out = assert_solves(&ExchangeEconomy::symmetric(0.05), &[([0.5, 0.5], [1.0, 1.0]); 2]);
    for x in &out.allocations {
        assert!((x[0] - 1.0).abs() < 0.15 && (x[1] - 1.0).abs() < 0.15, "{x:?}");
    }
}

#[test]
fn asymmetric_economy_matches_the_bisection_price() {
    assert_solves(&ExchangeEconomy::asymmetric(0.05), &[([0.5, 0.5], [2.0, 0.5]), ([0.5, 0.5], [0.5, 2.0])]);
}

#[test]
fn agent_valuing_one_good_raises_its_price() {
    let econ = ExchangeEconomy::new(
        vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        vec![MarketUtility::shifted_log(vec![1.0, 0.0]), MarketUtility::shifted_log(vec![0.5, 0.5])],
        0.0025,
        0.05,
        None,
    )
    .unwrap();
    // The regularizer moves this equilibrium noticeably, so only the
    // direction is compared with the oracle.
    let out = solved(&econ);
    assert!(out.p[0] > out.p[1], "{:?}", out.p);
    assert!(oracle_price(&[([1.0, 0.0], [1.0, 1.0]), ([0.5, 0.5], [1.0, 1.0])], econ.xi) > 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hoffman_bound_dominates(w in prop::collection::vec(0.01f64..1.0, 2..5), xi in 0.001f64..0.1) {
        let d = w.len();
        prop_assume!(xi * (d as f64) < 1.0);
        let s: f64 = w.iter().sum();
        let mass = 1.0 - d as f64 * xi;
        let p: Vec<f64> = w.iter().map(|t| xi + mass * t / s).collect();
        let (h, bound) = hoffman_bound(&p, xi);
        prop_assert!(h <= bound * (1.0 + 1e-12));
        prop_assert!(h >= 1.0);
    }

    #[test]
    fn budget_sets_are_hausdorff_lipschitz(a in 0.0f64..1.0, b in 0.0f64..1.0, agent in 0usize..2) {
        let econ = ExchangeEconomy::asymmetric(0.1);
        let lift = |t: f64| { let p = econ.xi + t * (1.0 - 2.0 * econ.xi); vec![p, 1.0 - p] };
        let (h, bound) = budget_hausdorff(&econ, agent, &lift(a), &lift(b)).unwrap();
        prop_assert!(h <= bound + 1e-9, "{} > {}", h, bound);
    }
}
