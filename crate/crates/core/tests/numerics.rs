use kakutani_core::json::J;
use kakutani_core::numerics::rational::{rat, rat_int};
use kakutani_core::numerics::{integrate_poly_1d, CircuitBuilder, LinCircuit, Polynomial, Rational};
use kakutani_core::Error;
use proptest::prelude::*;

fn poly(dim: usize, terms: &[(i64, i64, &[u32])]) -> Polynomial {
    Polynomial::new(dim, terms.iter().map(|(n, d, e)| (rat(*n, *d), e.to_vec())).collect()).unwrap()
}

#[test]
fn circuit_examples() {
    let mut b = CircuitBuilder::new(2);
    let x0 = b.input(0);
    let x1 = b.input(1);
    let id = b.build(vec![x0, x1]).unwrap();
    assert_eq!(id.eval(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);

    let mut b = CircuitBuilder::new(1);
    let x = b.input(0);
    let h = b.scale(x, rat(1, 2));
    let q = b.constant(rat(1, 4));
    let o = b.add(h, q);
    let affine = b.build(vec![o]).unwrap();
    assert_eq!(affine.eval(&[0.5]).unwrap(), vec![0.5]);
    for x in [-3.0, 0.0, 0.2, 7.5] {
        assert_eq!(affine.subgradient(&[x]).unwrap()[(0, 0)], 0.5);
    }
}

#[test]
fn circuit_dimension_mismatch() {
    let mut b = CircuitBuilder::new(2);
    let x = b.input(0);
    let c = b.build(vec![x]).unwrap();
    assert_eq!(c.eval(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 }));
}

#[test]
fn circuit_json_schema_errors_have_pointers() {
    let v = serde_json::json!({"inputs": 1, "gates": [{"op": "input", "args": [0]}, {"op": "mul", "args": [0, 0]}], "outputs": [1]});
    match LinCircuit::from_json(&J::root(&v)) {
        Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/gates/1/op"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn poly_examples() {
    // 2 − (x1 − x2)² = 2 − x1² + 2 x1 x2 − x2²
    let p = poly(2, &[(2, 1, &[0, 0]), (-1, 1, &[2, 0]), (2, 1, &[1, 1]), (-1, 1, &[0, 2])]);
    assert_eq!(p.eval(&[0.5, 0.5]).unwrap(), 2.0);
    assert_eq!(p.grad(&[0.5, 0.5]).unwrap(), vec![0.0, 0.0]);
    let q = poly(2, &[(1, 1, &[1, 1])]);
    assert_eq!(q.eval(&[2.0, 3.0]).unwrap(), 6.0);
    assert_eq!(q.grad(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    let n = poly(2, &[(1, 1, &[2, 0]), (1, 1, &[0, 2])]);
    assert_eq!(n.eval(&[1.0, 1.0]).unwrap(), 2.0);
    assert_eq!(n.grad(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
    assert!(matches!(n.eval(&[1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn poly_json_round_trip() {
    let p = poly(2, &[(3, 4, &[1, 0]), (-1, 3, &[0, 2])]);
    let back = Polynomial::from_json(&J::root(&p.to_json())).unwrap();
    assert_eq!(back, p);
}

#[test]
fn integration_examples() {
    let one_minus_x2 = Polynomial::univariate(&[rat_int(1), rat_int(0), rat_int(-1)]);
    let area = integrate_poly_1d(&one_minus_x2, &rat_int(-1), &rat_int(1)).unwrap();
    assert_eq!(area, rat(4, 3));
    assert_eq!(Rational::from_integer(1.into()) / area, rat(3, 4));
    let one = Polynomial::univariate(&[rat_int(1)]);
    assert_eq!(integrate_poly_1d(&one, &rat_int(0), &rat_int(1)).unwrap(), rat_int(1));
    let x = Polynomial::univariate(&[rat_int(0), rat_int(1)]);
    assert_eq!(integrate_poly_1d(&x, &rat_int(-1), &rat_int(1)).unwrap(), rat_int(0));
}

fn arb_poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((-5i64..=5, 1i64..=4, prop::collection::vec(0u32..=3, 2)), 1..6)
        .prop_map(|ts| Polynomial::new(2, ts.into_iter().map(|(n, d, e)| (rat(n, d), e)).collect()).unwrap())
}

/// Random circuits over {+, −, ×ζ, const} built from two inputs.
fn arb_affine_circuit() -> impl Strategy<Value = LinCircuit> {
    prop::collection::vec((0u8..4, any::<prop::sample::Index>(), any::<prop::sample::Index>(), -4i64..=4), 1..12).prop_map(
        |ops| {
            let mut b = CircuitBuilder::new(2);
            let mut ids = vec![b.input(0), b.input(1)];
            for (op, i, j, c) in ops {
                let a = ids[i.index(ids.len())];
                let bb = ids[j.index(ids.len())];
                let g = match op {
                    0 => b.add(a, bb),
                    1 => b.sub(a, bb),
                    2 => b.scale(a, rat(c, 3)),
                    _ => b.constant(rat(c, 2)),
                };
                ids.push(g);
            }
            let last = *ids.last().unwrap();
            b.build(vec![last]).unwrap()
        },
    )
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn grad_poly_matches_finite_differences(p in arb_poly(), x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
        let g = p.grad(&[x0, x1]).unwrap();
        let h = 1e-6;
        let fd0 = (p.eval(&[x0 + h, x1]).unwrap() - p.eval(&[x0 - h, x1]).unwrap()) / (2.0 * h);
        let fd1 = (p.eval(&[x0, x1 + h]).unwrap() - p.eval(&[x0, x1 - h]).unwrap()) / (2.0 * h);
        prop_assert!(rel_close(g[0], fd0, 1e-6), "{} vs {}", g[0], fd0);
        prop_assert!(rel_close(g[1], fd1, 1e-6), "{} vs {}", g[1], fd1);
    }

    #[test]
    fn circuit_subgradient_matches_finite_differences(c in arb_affine_circuit(), x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
        let g = c.subgradient(&[x0, x1]).unwrap();
        let h = 1e-4;
        for k in 0..2 {
            let mut xp = vec![x0, x1];
            let mut xm = vec![x0, x1];
            xp[k] += h;
            xm[k] -= h;
            let fd = (c.eval(&xp).unwrap()[0] - c.eval(&xm).unwrap()[0]) / (2.0 * h);
            prop_assert!(rel_close(g[(0, k)], fd, 1e-6));
        }
    }

    #[test]
    fn integration_is_additive(coeffs in prop::collection::vec(-6i64..=6, 1..6), a in -8i64..8, b in -8i64..8, c in -8i64..8) {
        let p = Polynomial::univariate(&coeffs.iter().map(|&k| rat_int(k)).collect::<Vec<_>>());
        let (a, b, c) = (rat(a, 3), rat(b, 5), rat(c, 7));
        let lhs = integrate_poly_1d(&p, &a, &b).unwrap() + integrate_poly_1d(&p, &b, &c).unwrap();
        prop_assert_eq!(lhs, integrate_poly_1d(&p, &a, &c).unwrap());
    }

    #[test]
    fn small_scale_circuits_are_lipschitz(ops in prop::collection::vec((0u8..5, any::<prop::sample::Index>(), any::<prop::sample::Index>(), -3i64..=3), 1..10),
                                          x in prop::collection::vec(-1.0f64..1.0, 2), y in prop::collection::vec(-1.0f64..1.0, 2)) {
        let mut b = CircuitBuilder::new(2);
        let mut ids = vec![b.input(0), b.input(1)];
        for (op, i, j, c) in ops {
            let a = ids[i.index(ids.len())];
            let bb = ids[j.index(ids.len())];
            let g = match op {
                0 => b.add(a, bb),
                1 => b.sub(a, bb),
                2 => b.min(a, bb),
                3 => b.max(a, bb),
                _ => b.scale(a, rat(c, 3)),
            };
            ids.push(g);
        }
        let last = *ids.last().unwrap();
        let circ = b.build(vec![last]).unwrap();
        let size = circ.size() as i32;
        let dx = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let diff = (circ.eval(&x).unwrap()[0] - circ.eval(&y).unwrap()[0]).abs();
        prop_assert!(diff <= 2f64.powi(size) * dx + 1e-12);
    }
}
