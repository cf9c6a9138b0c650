use kakutani_core::sperner::{
    count_panchromatic, find_panchromatic, find_panchromatic_par, simplices_of_cubelet, validate_color, Coloring, Face,
    GridSpec, KuhnSimplex, SpernerOutcome,
};
use kakutani_core::Error;
use proptest::prelude::*;
use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

fn allowed(grid: &GridSpec, v: &[usize]) -> Vec<usize> {
    (0..=grid.d).filter(|&c| validate_color(grid, v, c).is_none()).collect()
}

/// A valid Sperner coloring picked pseudo-randomly per vertex.
fn random_valid(grid: GridSpec, seed: u64) -> Coloring<'static> {
    Coloring::new(move |v: &[usize]| {
        let mut h = DefaultHasher::new();
        (seed, v).hash(&mut h);
        let a = allowed(&grid, v);
        Ok(a[(h.finish() % a.len() as u64) as usize])
    })
}

/// Color rule of the vector field `G(v) = c − v` written independently of
/// the solver: 0 when `G ≥ 0`, else the first nonpositive coordinate.
fn field_coloring(grid: GridSpec, c: Vec<f64>) -> Coloring<'static> {
    Coloring::new(move |v: &[usize]| {
        let x = grid.coord(v);
        let g: Vec<f64> = c.iter().zip(&x).map(|(a, b)| a - b).collect();
        Ok(if g.iter().all(|&t| t >= 0.0) { 0 } else { 1 + g.iter().position(|&t| t <= 0.0).unwrap() })
    })
}

#[test]
fn cubelet_simplex_counts() {
    let g2 = GridSpec::new(2, 2).unwrap();
    assert_eq!(simplices_of_cubelet(&g2, &[0, 0]).unwrap().len(), 2);
    let g3 = GridSpec::new(3, 2).unwrap();
    let simplices = simplices_of_cubelet(&g3, &[1, 0, 2]).unwrap();
    assert_eq!(simplices.len(), 6);
    let corners: HashSet<Vec<usize>> = simplices.iter().flat_map(|s| s.vertices()).collect();
    assert_eq!(corners.len(), 8);
    for k in 0..8usize {
        let v = vec![1 + (k & 1), (k >> 1) & 1, 2 + ((k >> 2) & 1)];
        assert!(corners.contains(&v));
    }
    assert!(matches!(simplices_of_cubelet(&g3, &[3, 0, 0]), Err(Error::InvalidInput(_))));
}

#[test]
fn adjacent_simplices_share_a_facet() {
    let g = GridSpec::new(3, 1).unwrap();
    let s = simplices_of_cubelet(&g, &[0, 0, 0]).unwrap();
    for a in &s {
        for b in &s {
            if a == b {
                continue;
            }
            let va: HashSet<_> = a.vertices().into_iter().collect();
            let shared = b.vertices().into_iter().filter(|v| va.contains(v)).count();
            // two Kuhn simplices of a cubelet share at least the diagonal
            assert!((2..=3).contains(&shared));
        }
    }
}

#[test]
fn triangulation_partitions_the_cubelet() {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for d in 2..=4 {
        let g = GridSpec::new(d, 1).unwrap();
        let s = simplices_of_cubelet(&g, &vec![0; d]).unwrap();
        for _ in 0..500 {
            let t: Vec<f64> = (0..d).map(|_| next()).collect();
            let inside: Vec<&KuhnSimplex> = s.iter().filter(|k| k.contains_local(&t, 0.0)).collect();
            // generic points lie in exactly one simplex
            assert_eq!(inside.len(), 1);
        }
    }
}

#[test]
fn boundary_rule_examples() {
    let g = GridSpec::new(2, 2).unwrap();
    assert_eq!(
        validate_color(&g, &[0, 2], 1),
        Some(SpernerOutcome::BoundaryViolation { vertex: vec![0, 2], axis: 1, face: Face::Zero, color: 1 })
    );
    assert_eq!(
        validate_color(&g, &[1, 3], 0),
        Some(SpernerOutcome::BoundaryViolation { vertex: vec![1, 3], axis: 2, face: Face::One, color: 0 })
    );
    for c in 0..=2 {
        assert_eq!(validate_color(&g, &[1, 2], c), None);
    }
}

#[test]
fn one_dimensional_threshold_coloring() {
    let g = GridSpec::new(1, 2).unwrap();
    let col = Coloring::new(|v: &[usize]| Ok(if (v[0] as f64) / 3.0 < 0.5 { 0 } else { 1 }));
    match find_panchromatic(&g, &col).unwrap() {
        SpernerOutcome::Panchromatic { vertices, .. } => {
            assert_eq!(vertices, vec![vec![1], vec![2]]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn field_coloring_locates_the_target() {
    let g = GridSpec::new(2, 5).unwrap();
    let c = vec![0.3, 0.7];
    let col = field_coloring(g, c.clone());
    let out = find_panchromatic(&g, &col).unwrap();
    let SpernerOutcome::Panchromatic { vertices, simplex } = out else { panic!() };
    let h = 1.0 / 31.0;
    for v in &vertices {
        let x = g.coord(v);
        assert!((x[0] - c[0]).abs() <= h + 1e-12 && (x[1] - c[1]).abs() <= h + 1e-12, "{x:?}");
    }
    // brute force: every panchromatic simplex of the grid is near c, and the
    // returned one is the lexicographically first
    let mut first = None;
    for b0 in 0..31 {
        for b1 in 0..31 {
            for s in simplices_of_cubelet(&g, &[b0, b1]).unwrap() {
                let cs: HashSet<usize> = s.vertices().iter().map(|v| col.color(v).unwrap()).collect();
                if cs.len() == 3 {
                    first.get_or_insert(s.clone());
                    for v in s.vertices() {
                        let x = g.coord(&v);
                        assert!((x[0] - c[0]).abs() <= h + 1e-12 && (x[1] - c[1]).abs() <= h + 1e-12);
                    }
                }
            }
        }
    }
    assert_eq!(first.unwrap(), simplex);
}

#[test]
fn violating_coloring_is_reported() {
    let g = GridSpec::new(2, 3).unwrap();
    let col = Coloring::new(|v: &[usize]| Ok(if v[0] == 0 && v[1] == 3 { 1 } else { 0 }));
    match find_panchromatic(&g, &col).unwrap() {
        SpernerOutcome::BoundaryViolation { axis, face, .. } => {
            assert!(axis == 1 && face == Face::Zero || face == Face::One);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn colors_are_computed_once_per_vertex() {
    let g = GridSpec::new(3, 3).unwrap();
    let seen = Mutex::new(HashMap::<Vec<usize>, usize>::new());
    let col = Coloring::new(|v: &[usize]| {
        *seen.lock().unwrap().entry(v.to_vec()).or_default() += 1;
        let a = allowed(&g, v);
        Ok(a[(v.iter().sum::<usize>()) % a.len()])
    });
    count_panchromatic(&g, &col).unwrap();
    find_panchromatic(&g, &col).unwrap();
    assert!(seen.lock().unwrap().values().all(|&k| k == 1));
    assert_eq!(col.calls(), 8usize.pow(3));
}

#[test]
fn parallel_search_matches_sequential() {
    let g = GridSpec::new(2, 4).unwrap();
    let a = find_panchromatic(&g, &field_coloring(g, vec![0.61, 0.22])).unwrap();
    let b = find_panchromatic_par(&g, &field_coloring(g, vec![0.61, 0.22]), 4).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn valid_colorings_have_an_odd_number_of_panchromatic_simplices(seed in any::<u64>(), d in 1usize..=3, ell in 1u32..=5) {
        let ell = if d == 3 { ell.min(4) } else { ell };
        let g = GridSpec::new(d, ell).unwrap();
        let col = random_valid(g, seed);
        let count = count_panchromatic(&g, &col).unwrap().expect("coloring is valid");
        prop_assert_eq!(count % 2, 1);
        let found = matches!(find_panchromatic(&g, &col).unwrap(), SpernerOutcome::Panchromatic { .. });
        prop_assert!(found);
    }
}
