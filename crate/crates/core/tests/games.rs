#![allow(clippy::single_range_in_vec_init)]

use kakutani_core::bodies::{BodySpec, WellBounded};
use kakutani_core::games::*;
use kakutani_core::json::J;
use kakutani_core::numerics::rational::rat;
use kakutani_core::numerics::Polynomial;
use proptest::prelude::*;

fn poly(dim: usize, terms: &[(i64, i64, &[u32])]) -> Polynomial {
    Polynomial::new(dim, terms.iter().map(|(n, d, e)| (rat(*n, *d), e.to_vec())).collect()).unwrap()
}

fn cube(k: usize) -> WellBounded {
    WellBounded::new(BodySpec::cube(k, -1.0, 1.0), 1.0, (k as f64).sqrt()).with_center(vec![0.0; k])
}

/// u1 = −(x1 − ½)², u2 = −(x2 − x1)².
fn quadratic(eps: f64) -> ConcaveGame {
    let u1 = poly(2, &[(-1, 1, &[2, 0]), (1, 1, &[1, 0]), (-1, 4, &[0, 0])]);
    let u2 = poly(2, &[(-1, 1, &[0, 2]), (2, 1, &[1, 1]), (-1, 1, &[2, 0])]);
    ConcaveGame::new(vec![0..1, 1..2], vec![Utility::Poly(u1), Utility::Poly(u2)], cube(2), 4.0, eps, 0.001).unwrap()
}

/// One player with u(y) = −(y − ½)².
fn single(eps: f64) -> ConcaveGame {
    let u = poly(1, &[(-1, 1, &[2]), (1, 1, &[1]), (-1, 4, &[0])]);
    ConcaveGame::new(vec![0..1], vec![Utility::Poly(u)], cube(1), 2.0, eps, 0.001).unwrap()
}

fn one_player(u: Polynomial, mu: Option<f64>) -> ConcaveGame {
    let k = u.dim();
    let mut g = ConcaveGame::new(vec![0..k], vec![Utility::Poly(u)], cube(k), 10.0, 0.01, 0.001).unwrap();
    g.mu = mu;
    g
}

fn inside(b: &WellBounded, y: &[f64]) -> bool {
    b.body.weak_sep(y, 1e-9).unwrap().is_inside()
}

fn equilibrium(out: GameOutcome) -> EquilibriumReport {
    match out {
        GameOutcome::Equilibrium(r) => r,
        GameOutcome::Certificate(c) => panic!("unexpected certificate {}", c.to_json()),
    }
}

#[test]
fn phi_without_regularization_peaks_at_half() {
    let g = single(0.1);
    let (v, grad) = phi(&g, 0.0, &[0.0], &[0.5]).unwrap();
    assert!(v.abs() < 1e-12);
    assert!(grad[0].abs() < 1e-12);
    let (v, _) = phi(&g, 0.0, &[0.3], &[0.0]).unwrap();
    assert!((v + 0.25).abs() < 1e-12);
}

#[test]
fn regularization_moves_the_peak_to_half_over_one_plus_gamma() {
    let g = single(0.1);
    for gamma in [0.1, 0.5, 1.0] {
        // Grid search oracle.
        let best = (0..=20_000)
            .map(|i| -1.0 + 2.0 * i as f64 / 20_000.0)
            .max_by(|a, b| phi(&g, gamma, &[0.0], &[*a]).unwrap().0.total_cmp(&phi(&g, gamma, &[0.0], &[*b]).unwrap().0))
            .unwrap();
        assert!((best - 0.5 / (1.0 + gamma)).abs() < 2e-4, "γ={gamma}: grid argmax {best}");
        let (_, grad) = phi(&g, gamma, &[0.0], &[0.5 / (1.0 + gamma)]).unwrap();
        assert!(grad[0].abs() < 1e-12);
    }
}

#[test]
fn phi_at_zero_sums_utilities() {
    let g = quadratic(0.02);
    let x = [0.3, -0.7];
    let (v, _) = phi(&g, 0.4, &x, &[0.0, 0.0]).unwrap();
    let u1 = g.utilities[0].value(&[0.0, -0.7]).unwrap();
    let u2 = g.utilities[1].value(&[0.3, 0.0]).unwrap();
    assert!((v - u1 - u2).abs() < 1e-12);
}

#[test]
fn phi_rejects_wrong_dimensions() {
    let g = quadratic(0.02);
    assert!(phi(&g, 0.1, &[0.0], &[0.0, 0.0]).is_err());
}

#[test]
fn best_response_is_an_interval_around_the_peak() {
    let eps = 0.1;
    let g = single(eps);
    let BestResponse::Body(b) = best_response_body(&g, 0.0, &[0.0]).unwrap() else { panic!("empty") };
    // φ(y_sol) − ε/2 ≥ φ* − ε/2 − δ: the set is the interval of half-width ≈ √(ε/2).
    let h = (eps / 2.0).sqrt();
    assert!(inside(&b, &[0.5 + 0.95 * h]));
    assert!(inside(&b, &[0.5 - 0.95 * h]));
    assert!(!inside(&b, &[0.5 + 1.05 * eps.sqrt()]));
    assert!(!inside(&b, &[0.5 - 1.05 * eps.sqrt()]));
}

#[test]
fn best_response_keeps_the_inner_ball() {
    let g = quadratic(0.02);
    let gamma = 0.01;
    let x = [0.2, -0.4];
    let BestResponse::Body(b) = best_response_body(&g, gamma, &x).unwrap() else { panic!("empty") };
    let expected = (g.eta / 2.0).min(g.eps / (2.0 * g.phi_lipschitz(gamma)));
    assert!((b.r - expected).abs() < 1e-15);
    // Maximizer of φ(x, ·): y1 = ½/(1+γ), y2 = x1/(1+γ).
    let c = [0.5 / (1.0 + gamma), 0.2 / (1.0 + gamma)];
    for k in 0..16 {
        let t = k as f64 * std::f64::consts::TAU / 16.0;
        assert!(inside(&b, &[c[0] + 0.99 * b.r * t.cos(), c[1] + 0.99 * b.r * t.sin()]));
    }
}

#[test]
fn best_response_members_are_near_optimal() {
    let g = quadratic(0.05);
    let gamma = 0.025;
    let x = [-0.3, 0.6];
    let BestResponse::Body(b) = best_response_body(&g, gamma, &x).unwrap() else { panic!("empty") };
    let top = (0..=200)
        .flat_map(|i| (0..=200).map(move |j| [-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64]))
        .map(|y| phi(&g, gamma, &x, &y).unwrap().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut members = 0;
    for i in 0..=60 {
        for j in 0..=60 {
            let y = [-1.0 + i as f64 / 30.0, -1.0 + j as f64 / 30.0];
            if inside(&b, &y) {
                members += 1;
                assert!(phi(&g, gamma, &x, &y).unwrap().0 >= top - g.eps - 1e-9);
            }
        }
    }
    assert!(members > 0);
}

#[test]
fn quadratic_game_reaches_the_middle() {
    let eps = 0.02;
    let g = quadratic(eps);
    let (out, info) = solve_equilibrium(&g, &GameSolveOptions::default()).unwrap();
    let rep = equilibrium(out);
    assert!((info.gamma - eps / 2.0).abs() < 1e-15);
    assert!(rep.feasible);
    assert!((rep.x[0] - 0.5).abs() < 0.1 && (rep.x[1] - 0.5).abs() < 0.1, "{:?}", rep.x);
    for r in &rep.per_player_regret {
        assert!(*r <= 3.0 * eps && *r >= -1e-6, "{r}");
    }
}

#[test]
fn coordination_game_lands_on_the_diagonal() {
    let eps = 0.02;
    let u = poly(2, &[(-1, 1, &[2, 0]), (2, 1, &[1, 1]), (-1, 1, &[0, 2])]);
    let g = ConcaveGame::new(vec![0..1, 1..2], vec![Utility::Poly(u.clone()), Utility::Poly(u)], cube(2), 8.0, eps, 0.001)
        .unwrap();
    let rep = equilibrium(solve_equilibrium(&g, &GameSolveOptions::default()).unwrap().0);
    assert!(rep.max_regret() <= 3.0 * eps);
    assert!((rep.x[0] - rep.x[1]).abs() <= (3.0 * eps).sqrt() + 1e-9);
}

#[test]
fn regret_at_the_origin_is_a_quarter() {
    let g = quadratic(0.02);
    let rep = check_equilibrium(&g, &[0.0, 0.0], g.eps, g.eta).unwrap();
    assert!(rep.feasible);
    assert!((rep.per_player_regret[0] - 0.25).abs() < 1e-5, "{:?}", rep.per_player_regret);
    assert!(rep.per_player_regret[1].abs() < 1e-5);
}

#[test]
fn exact_equilibrium_has_no_regret() {
    let g = quadratic(0.02);
    let rep = check_equilibrium(&g, &[0.5, 0.5], g.eps, g.eta).unwrap();
    assert!(rep.max_regret() < 1e-5);
}

#[test]
fn infeasible_points_are_flagged() {
    let g = quadratic(0.02);
    let rep = check_equilibrium(&g, &[1.5, 0.0], g.eps, g.eta).unwrap();
    assert!(!rep.feasible);
}

#[test]
fn empty_slices_give_zero_regret() {
    // x2 = 1 lies outside S_{−η}, so no deviation of player 1 is admissible.
    let g = quadratic(0.02);
    let rep = check_equilibrium(&g, &[0.0, 1.0], g.eps, g.eta).unwrap();
    assert!(rep.empty_slice[0]);
    assert_eq!(rep.per_player_regret[0], 0.0);
}

#[test]
fn convex_utility_is_caught() {
    let g = one_player(poly(1, &[(1, 1, &[2])]), None);
    let cert = detect_concavity_violation(&g, 100, 7).unwrap().expect("violation");
    assert_eq!(cert.tag(), "concavity_violation");
    assert!(cert.replay(&g).unwrap());
}

#[test]
fn honest_strong_concavity_passes() {
    let g = one_player(poly(1, &[(-1, 1, &[2])]), Some(2.0));
    assert!(detect_concavity_violation(&g, 500, 7).unwrap().is_none());
}

#[test]
fn overstated_strong_concavity_is_caught() {
    let g = one_player(poly(1, &[(-1, 1, &[2])]), Some(10.0));
    let cert = detect_concavity_violation(&g, 100, 7).unwrap().expect("violation");
    assert_eq!(cert.tag(), "strong_concavity_violation");
    assert!(cert.replay(&g).unwrap());
    // Symbolically: −(λa+(1−λ)b)² − [−λa² − (1−λ)b²] = λ(1−λ)(a−b)² < 5λ(1−λ)(a−b)².
    let GameCertificate::StrongConcavityViolation { lhs, rhs, .. } = cert else { unreachable!() };
    assert!(lhs < rhs);
}

#[test]
fn certificates_round_trip_through_json() {
    let g = one_player(poly(1, &[(1, 1, &[2])]), None);
    let cert = detect_concavity_violation(&g, 100, 3).unwrap().unwrap();
    let v = cert.to_json();
    let back = GameCertificate::from_json(&J::root(&v)).unwrap();
    assert_eq!(back.to_json(), v);
    assert!(back.replay(&g).unwrap());
}

#[test]
fn steep_utility_breaks_the_claimed_lipschitz_bound() {
    let mut g = one_player(poly(1, &[(5, 1, &[1])]), None);
    g.l = 1.0;
    let cert = detect_lipschitz_violation(&g, 10, 1).unwrap().expect("violation");
    assert!(cert.replay(&g).unwrap());
    g.l = 5.0 + 1e-9;
    assert!(detect_lipschitz_violation(&g, 200, 1).unwrap().is_none());
}

#[test]
fn lifting_uses_the_cube_and_small_eta() {
    let u1 = poly(2, &[(-1, 1, &[2, 0]), (1, 1, &[1, 0]), (-1, 4, &[0, 0])]);
    let u2 = poly(2, &[(-1, 1, &[0, 2]), (2, 1, &[1, 1]), (-1, 1, &[2, 0])]);
    let sg = StronglyConcaveGame::new(vec![0..1, 1..2], vec![Utility::Poly(u1), Utility::Poly(u2)], 2.0, 4.0, 0.02).unwrap();
    let g = lift_strongly_concave(&sg);
    assert!((g.eta - 0.02 / (4.0 * 2.0 * 4.0)).abs() < 1e-15);
    assert_eq!(g.mu, Some(2.0));
    assert!(inside(&g.constraint, &[0.99, -0.99]));
    assert!(!inside(&g.constraint, &[1.01, 0.0]));
    // The lifted and the hand-built game agree up to 2ε.
    let a = equilibrium(solve_equilibrium(&g, &GameSolveOptions::default()).unwrap().0);
    let b = equilibrium(solve_equilibrium(&quadratic(0.02), &GameSolveOptions::default()).unwrap().0);
    for (p, q) in a.x.iter().zip(&b.x) {
        assert!((p - q).abs() <= 2.0 * 0.02 + 0.1, "{:?} vs {:?}", a.x, b.x);
    }
    assert!(a.max_regret() <= 0.06);
}

#[test]
fn games_round_trip_through_json() {
    let g = quadratic(0.02);
    let v = g.to_json();
    let back = ConcaveGame::from_json(&J::root(&v)).unwrap();
    assert_eq!(back.to_json(), v);
    let u1 = poly(1, &[(-1, 1, &[2])]);
    let sg = StronglyConcaveGame::new(vec![0..1], vec![Utility::Poly(u1)], 2.0, 2.0, 0.1).unwrap();
    let lifted = ConcaveGame::from_json(&J::root(&sg.to_json())).unwrap();
    assert_eq!(lifted.to_json(), lift_strongly_concave(&sg).to_json());
}

#[test]
fn game_json_errors_carry_a_pointer() {
    let mut v = quadratic(0.02).to_json();
    v["utilities"][1] = serde_json::json!({"bogus": 1});
    let err = ConcaveGame::from_json(&J::root(&v)).unwrap_err().to_string();
    assert!(err.contains("/utilities/1"), "{err}");
}

#[test]
fn partitions_must_tile_the_coordinates() {
    let u = Utility::Poly(poly(2, &[(1, 1, &[0, 0])]));
    assert!(ConcaveGame::new(vec![0..1, 2..2], vec![u.clone(), u.clone()], cube(2), 1.0, 0.1, 0.01).is_err());
    let shifted = WellBounded::new(BodySpec::cube(2, 0.5, 1.0), 0.25, 1.0);
    assert!(ConcaveGame::new(vec![0..1, 1..2], vec![u.clone(), u], shifted, 1.0, 0.1, 0.01).is_err());
}

#[test]
fn tracking_targets_cannot_read_their_own_block() {
    let u = Utility::Tracking { c: rat(1, 1), own: vec![0], targets: vec![Target::Var(0)] };
    assert!(StronglyConcaveGame::new(vec![0..1], vec![u], 2.0, 1.0, 0.1).is_err());
}

#[test]
fn tracking_expands_to_the_same_polynomial() {
    let u = Utility::Tracking { c: rat(2, 1), own: vec![1], targets: vec![Target::Var(0)] };
    let p = u.expand(2, 64).unwrap();
    assert_eq!(p.degree(), 2);
    for x in [[0.1, 0.7], [-0.5, 0.2], [1.0, -1.0]] {
        assert!((p.eval(&x).unwrap() - u.value(&x).unwrap()).abs() < 1e-12);
        assert!((p.eval(&x).unwrap() - (2.0 - (x[1] - x[0]).powi(2))).abs() < 1e-12);
    }
}

/// `max_{S_η} φ` on a box by grid search.
fn box_max(g: &ConcaveGame, gamma: f64, x: &[f64], eta: f64) -> f64 {
    let h = 1.0 + eta;
    let n = 400;
    (0..=n)
        .flat_map(|i| (0..=n).map(move |j| [-h + 2.0 * h * i as f64 / n as f64, -h + 2.0 * h * j as f64 / n as f64]))
        .map(|y| phi(g, gamma, x, &y).unwrap().0)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn dilated_maxima_are_lipschitz_in_eta() {
    // Put the peak outside the cube so that the dilation matters.
    let u1 = poly(2, &[(-1, 1, &[2, 0]), (3, 1, &[1, 0])]);
    let u2 = poly(2, &[(-1, 1, &[0, 2]), (-3, 1, &[0, 1])]);
    let g = ConcaveGame::new(vec![0..1, 1..2], vec![Utility::Poly(u1), Utility::Poly(u2)], cube(2), 8.0, 0.02, 0.001)
        .unwrap();
    let gamma = 0.01;
    let c = g.phi_lipschitz(gamma) * (1.0 + g.constraint.big_r / g.constraint.r);
    let etas = [-0.2, -0.1, 0.0, 0.05, 0.1];
    let maxes: Vec<f64> = etas.iter().map(|e| box_max(&g, gamma, &[0.0, 0.0], *e)).collect();
    for i in 0..etas.len() {
        for j in 0..etas.len() {
            assert!((maxes[i] - maxes[j]).abs() <= c * (etas[i] - etas[j]).abs() + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regrets_are_nonnegative(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = quadratic(0.02);
        let rep = check_equilibrium(&g, &[a * 0.99, b * 0.99], g.eps, g.eta).unwrap();
        for r in rep.per_player_regret {
            prop_assert!(r >= -1e-6);
        }
    }

    #[test]
    fn phi_gradient_matches_differences(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
        let g = quadratic(0.02);
        let x = [a, b];
        let y = [c, d];
        let (v, grad) = phi(&g, 0.3, &x, &y).unwrap();
        for k in 0..2 {
            let mut yh = y;
            yh[k] += 1e-6;
            let fd = (phi(&g, 0.3, &x, &yh).unwrap().0 - v) / 1e-6;
            prop_assert!((fd - grad[k]).abs() < 1e-4);
        }
    }
}
