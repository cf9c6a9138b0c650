use kakutani_core::bodies::{exact_project, BodySpec, SeparationResult, WellBounded};
use kakutani_core::ellipsoid::{
    c_hat, feasibility, feasibility_body, log_ball_volume, minimize_over, scco, strong_project, wcco, wcco_traced,
    weak_project, Bounds, CutKind, EllipsoidState, Feasibility, OptimizeResult, Options, ProjectResult,
};
use kakutani_core::numerics::linalg::{dist, dot, norm2, sub};
use kakutani_core::numerics::Matrix;
use proptest::prelude::*;
use std::time::Instant;

fn minimizer(r: OptimizeResult) -> (Vec<f64>, f64) {
    match r {
        OptimizeResult::Minimizer { z, value } => (z, value),
        OptimizeResult::Empty { .. } => panic!("unexpected emptiness certificate"),
    }
}

fn point(r: ProjectResult) -> Vec<f64> {
    r.point().expect("projection reported empty")
}

fn empty_strip() -> BodySpec {
    BodySpec::Intersection(vec![
        BodySpec::cube(2, 0.0, 1.0),
        BodySpec::Polytope { a: Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]), b: vec![0.0, -1.0] },
    ])
}

#[test]
fn feasibility_examples() {
    let ball = BodySpec::ball(vec![0.0, 0.0], 0.5);
    let delta = 1e-6;
    match feasibility(&|z: &[f64]| ball.weak_sep(z, delta), &Bounds::origin(2, 2.0), 0.01).unwrap() {
        Feasibility::Point(z) => assert!(norm2(&z) <= 0.5 + delta),
        Feasibility::Empty(_) => panic!(),
    }
    let body = empty_strip();
    let start = Instant::now();
    match feasibility(&|z: &[f64]| body.strong_sep(z), &Bounds::cube(2, 0.0, 1.0), 0.01).unwrap() {
        Feasibility::Empty(cert) => {
            assert!(cert.holds());
            assert!(cert.volume() < cert.volume_bound());
            assert!(!cert.cut_history.is_empty());
        }
        Feasibility::Point(z) => panic!("found {z:?}"),
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let cube = WellBounded::new(BodySpec::cube(3, 0.4, 0.6), 0.1, 2.0).with_center(vec![0.5; 3]);
    match feasibility_body(&cube, 0.05, 0.0).unwrap() {
        Feasibility::Point(z) => assert!(z.iter().all(|x| (0.4..=0.6).contains(x))),
        Feasibility::Empty(_) => panic!(),
    }
}

#[test]
fn wcco_examples() {
    let cube = BodySpec::cube(2, 0.0, 1.0);
    let wso = |z: &[f64]| cube.weak_sep(z, 1e-3);
    let (z, _) = minimizer(wcco(&|x: &[f64]| (x[0], vec![1.0, 0.0]), &wso, &Bounds::cube(2, 0.0, 1.0), 1e-3, 1e-3).unwrap());
    assert!(z[0] <= 1e-3);

    let ball = BodySpec::ball(vec![0.0, 0.0], 1.0);
    let wso = |z: &[f64]| ball.weak_sep(z, 1e-4);
    let f = |x: &[f64]| {
        let r = sub(x, &[2.0, 2.0]);
        (dot(&r, &r), vec![2.0 * r[0], 2.0 * r[1]])
    };
    let (z, v) = minimizer(wcco(&f, &wso, &Bounds::origin(2, 1.0), 1e-3, 1e-4).unwrap());
    let s = 0.5f64.sqrt();
    assert!(dist(&z, &[s, s]) < 1e-2);
    assert!((v - (2.0 * 2f64.sqrt() - 1.0).powi(2)).abs() < 1e-2);

    let (z, v) = minimizer(wcco(&|_x: &[f64]| (0.0, vec![0.0, 0.0]), &wso, &Bounds::origin(2, 1.0), 1e-3, 1e-4).unwrap());
    assert_eq!(v, 0.0);
    assert!(ball.weak_sep(&z, 1e-4).unwrap().is_inside());
}

#[test]
fn scco_examples() {
    let simplex = WellBounded::new(BodySpec::SimplexXi { dim: 2, xi: 0.1 }, 0.1, 1.0);
    let (z, v) = minimizer(minimize_over(&|x: &[f64]| (x[0] + x[1], vec![1.0, 1.0]), &simplex, true, 0.0, 1e-3, 1e-4).unwrap());
    assert!((v - 1.0).abs() < 1e-9);
    assert!(z.iter().all(|p| *p >= 0.1 - 1e-12));

    let bx = BodySpec::cube(2, 1.0, 2.0);
    let so = |z: &[f64]| bx.strong_sep(z);
    let (z, _) = minimizer(scco(&|x: &[f64]| (dot(x, x), vec![2.0 * x[0], 2.0 * x[1]]), &so, &Bounds::cube(2, 1.0, 2.0), 1e-3, 1e-5).unwrap());
    assert!(dist(&z, &[1.0, 1.0]) < 1e-2);
    assert!(bx.strong_sep(&z).unwrap().is_inside());

    let tri = BodySpec::Polytope {
        a: Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]),
        b: vec![1.0, 0.0, 0.0],
    };
    let so = |z: &[f64]| tri.strong_sep(z);
    let (z, v) = minimizer(scco(&|x: &[f64]| (-x[0], vec![-1.0, 0.0]), &so, &Bounds::cube(2, 0.0, 1.0), 1e-3, 1e-5).unwrap());
    assert!(dist(&z, &[1.0, 0.0]) < 1e-2);
    assert!((v + 1.0).abs() < 1e-2);
}

#[test]
fn projection_examples() {
    let ball = WellBounded::new(BodySpec::ball(vec![0.0, 0.0], 1.0), 1.0, 1.0);
    let cube = WellBounded::new(BodySpec::cube(2, 0.0, 1.0), 0.5, 1.0).with_center(vec![0.5, 0.5]);
    for strong in [false, true] {
        let proj = |b: &WellBounded, x: &[f64]| {
            if strong {
                point(strong_project(b, x, 1e-4, 1e-3).unwrap())
            } else {
                point(weak_project(b, x, 1e-4, 1e-3).unwrap())
            }
        };
        let z = proj(&ball, &[2.0, 0.0]);
        assert!(dist(&z, &[1.0, 0.0]) < 1e-2);
        let z = proj(&ball, &[0.2, 0.1]);
        assert!(dist(&z, &[0.2, 0.1]) <= 1e-4 + 1e-2);
        let z = proj(&cube, &[2.0, -1.0]);
        assert!(dist(&z, &[1.0, 0.0]) < 1e-2);
        if strong {
            assert!(cube.body.strong_sep(&z).unwrap().is_inside());
        }
    }
}

#[test]
fn projection_on_empty_body_returns_certificate() {
    let wb = WellBounded::new(empty_strip(), 0.5, 1.0).with_center(vec![0.5, 0.5]);
    match weak_project(&wb, &[0.3, 0.3], 1e-3, 1e-2).unwrap() {
        ProjectResult::Empty(cert) => assert!(cert.holds()),
        ProjectResult::Point(z) => panic!("{z:?}"),
    }
}

#[test]
fn volume_shrinks_by_the_central_cut_ratio() {
    let ball = BodySpec::ball(vec![0.3, -0.2, 0.1], 0.2);
    let wso = |z: &[f64]| ball.weak_sep(z, 1e-6);
    let f = |x: &[f64]| (x[0] + 2.0 * x[1] - x[2], vec![1.0, 2.0, -1.0]);
    let opts = Options { trace: true, ..Options::default() };
    let (_, trace) = wcco_traced(&f, &wso, &Bounds::origin(3, 2.0), 1e-3, 1e-6, &opts).unwrap();
    assert!(trace.len() > 10);
    let bound = -1.0 / (2.0 * 4.0);
    let mut prev = log_ball_volume(3, 2.0);
    for rec in &trace {
        assert!(rec.log_volume - prev <= bound + 1e-9, "iteration {}", rec.iteration);
        prev = rec.log_volume;
    }
    assert!(trace.iter().any(|r| r.cut == CutKind::Objective));
    assert!(trace.iter().any(|r| r.cut == CutKind::Separation));
}

#[test]
fn cut_keeps_shape_symmetric_positive_definite() {
    let mut e = EllipsoidState::ball(vec![0.0; 4], 3.0);
    let dirs = [[1.0, 0.2, -0.3, 0.0], [0.0, 1.0, 1.0, -1.0], [-1.0, 0.5, 0.0, 0.25]];
    for k in 0..300 {
        assert!(e.cut(&dirs[k % 3]));
        assert!(e.shape.max_asymmetry() <= 1e-9);
        assert!(e.shape.cholesky().is_some());
    }
}

#[test]
fn projection_consistency_for_balls() {
    let eta = 0.5;
    for (c, r) in [(vec![0.0, 0.0], 1.0), (vec![0.4, -0.3], 0.6)] {
        let body = BodySpec::ball(c.clone(), r);
        let wb = WellBounded::new(body.clone(), r, r).with_center(c);
        for x in [[2.0, 1.0], [-1.5, 0.3], [0.1, 0.1]] {
            for eps in [1e-2, 1e-3] {
                let z = point(weak_project(&wb, &x, eps, eta).unwrap());
                let y = exact_project(&body.parallel_body(eps).unwrap(), &x).unwrap();
                assert!(dist(&z, &y) <= c_hat(2, eta) * eps);
            }
        }
    }
}

fn arb_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn weak_project_is_nearly_non_expansive(x1 in arb_point(), x2 in arb_point(), use_box in any::<bool>()) {
        let (eps, eta) = (1e-3, 0.25);
        let wb = if use_box {
            WellBounded::new(BodySpec::cube(2, 0.0, 1.0), 0.5, 1.0).with_center(vec![0.5, 0.5])
        } else {
            WellBounded::new(BodySpec::ball(vec![0.0, 0.0], 1.0), 1.0, 1.0)
        };
        let z1 = point(weak_project(&wb, &x1, eps, eta).unwrap());
        let z2 = point(weak_project(&wb, &x2, eps, eta).unwrap());
        prop_assert!(dist(&z1, &z2) <= dist(&x1, &x2) + 2.0 * c_hat(2, eta) * eps);
    }

    #[test]
    fn minimizers_pass_their_own_oracle(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, t0 in -3.0f64..3.0, t1 in -3.0f64..3.0) {
        let delta = 1e-3;
        let ball = BodySpec::ball(vec![c0, c1], 0.5);
        let wso = |z: &[f64]| ball.weak_sep(z, delta);
        let f = |x: &[f64]| {
            let r = sub(x, &[t0, t1]);
            (dot(&r, &r), vec![2.0 * r[0], 2.0 * r[1]])
        };
        let (z, v) = minimizer(wcco(&f, &wso, &Bounds::origin(2, 3.0), 1e-2, delta).unwrap());
        prop_assert!(matches!(ball.weak_sep(&z, delta).unwrap(), SeparationResult::Inside));
        // optimum over the inner body
        let inner = exact_project(&ball.parallel_body(-delta).unwrap(), &[t0, t1]).unwrap();
        let best = dist(&inner, &[t0, t1]).powi(2);
        prop_assert!(v <= best + delta);
    }
}
