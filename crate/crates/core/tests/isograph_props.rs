use std::f64::consts::{FRAC_PI_2, PI};

use isosand_core::isograph::{
    bilipschitz_constants, build_multigrid_tiling, build_square_lattice, lift_coordinates, project_int,
    IsoradialGraph, GEOM_TOL,
};
use isosand_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OFFSETS: [f64; 5] = [0.11, 0.23, 0.37, 0.41, 0.17];

/// Signed step counts accumulated along a diamond path from its first vertex.
fn counts_along(g: &IsoradialGraph, path: &[usize]) -> Vec<i32> {
    let mut n = vec![0; g.d()];
    for pair in path.windows(2) {
        let step = g.diamond_step(pair[0], pair[1]).expect("consecutive diamond vertices");
        n[step.direction] += step.sign as i32;
    }
    n
}

#[test]
fn lift_agrees_with_random_paths() {
    let g = build_multigrid_tiling(5, &OFFSETS, 14.0).unwrap();
    let lift = lift_coordinates(&g).unwrap();
    let o = g.origin();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let y = rng.gen_range(0..g.num_diamond_vertices());
        for _ in 0..10 {
            let path = g
                .diamond_path_with(o, y, |_, steps| {
                    let mut s = steps.to_vec();
                    s.shuffle(&mut rng);
                    s
                })
                .unwrap();
            assert_eq!(counts_along(&g, &path), lift.coords(y));
            assert_eq!(path.len() - 1, lift.norm1(y) as usize, "minimal paths are monotone");
        }
    }
    // Long random walks close up with zero holonomy.
    for _ in 0..20 {
        let mut path = vec![o];
        for _ in 0..500 {
            let steps = g.diamond_neighbors(*path.last().unwrap());
            path.push(steps.choose(&mut rng).unwrap().to);
        }
        assert_eq!(counts_along(&g, &path), lift.coords(*path.last().unwrap()));
    }
}

#[test]
fn projection_of_lift_is_the_embedding() {
    for g in [build_square_lattice(12).unwrap(), build_multigrid_tiling(7, &[0.1, 0.5, 0.3, 0.7, 0.2, 0.9, 0.4], 10.0).unwrap()] {
        let lift = lift_coordinates(&g).unwrap();
        let o = g.diamond_position(g.origin());
        assert!(lift.coords(g.origin()).iter().all(|&c| c == 0));
        for v in 0..g.num_diamond_vertices() {
            let z = project_int(lift.coords(v), g.palette());
            assert!((z - (g.diamond_position(v) - o)).norm() < 1e-9);
            assert!(z.norm() <= lift.norm1(v) as f64 + GEOM_TOL);
        }
    }
}

#[test]
fn rhombi_match_stored_half_angles() {
    let g = build_multigrid_tiling(5, &OFFSETS, 12.0).unwrap();
    let n = g.num_vertices();
    for e in g.edges() {
        let (a, b) = (g.position(e.a), g.position(e.b));
        let around_a: Vec<usize> = g.diamond_neighbors(e.a).iter().map(|s| s.to).collect();
        let faces: Vec<usize> = g
            .diamond_neighbors(e.b)
            .iter()
            .map(|s| s.to)
            .filter(|c| around_a.contains(c))
            .collect();
        assert!(!faces.is_empty() && faces.len() <= 2);
        for c in faces {
            assert!(c >= n, "faces are dual vertices");
            let c = g.diamond_position(c);
            assert!(((c - a).norm() - 1.0).abs() < 1e-9 && ((c - b).norm() - 1.0).abs() < 1e-9);
            let angle = ((c - a) / (b - a)).arg().abs();
            assert!((angle - e.theta_bar).abs() < 1e-9, "{angle} vs {}", e.theta_bar);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_multigrids_are_valid(
        d in 3usize..=8,
        raw in proptest::collection::vec(0.0f64..1.0, 8),
        radius in 5.0f64..9.0,
    ) {
        let offsets = &raw[..d];
        let g = match build_multigrid_tiling(d, offsets, radius) {
            Err(Error::Construction(_)) => return Err(TestCaseError::reject("degenerate offsets")),
            r => r.unwrap(),
        };
        prop_assert_eq!(g.palette().len(), d);
        prop_assert!(g.check_geometry().is_ok());
        let eps = g.epsilon();
        for e in g.edges() {
            prop_assert!(e.theta_bar >= eps - 1e-12 && e.theta_bar <= FRAC_PI_2 - eps + 1e-12);
            // Rhombus angles are multiples of π/d, so half-angles of π/(2d).
            let units = e.theta_bar * 2.0 * d as f64 / PI;
            prop_assert!((units - units.round()).abs() < 1e-9, "θ̄ = {}", e.theta_bar);
        }
        let lift = lift_coordinates(&g).unwrap();
        let report = bilipschitz_constants(&g, &lift).unwrap();
        prop_assert!(report.lower > 0.0 && report.min_ratio >= report.lower - 1e-12);
    }
}
