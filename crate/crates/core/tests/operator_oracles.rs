//! Weighted operators against dense matrices assembled independently from
//! the edge list.

use std::sync::Arc;

use isosand_core::elliptic::sc;
use isosand_core::green::{potential_column_sums, solve_potential, Region, SolveMethod, SolveOptions};
use isosand_core::isograph::{build_multigrid_tiling, build_square_lattice, IsoradialGraph};
use isosand_core::weights::{compute_model_bounds, WeightedGraph};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_patches() -> Vec<(&'static str, IsoradialGraph)> {
    let sq = build_square_lattice(3).unwrap();
    let mg = build_multigrid_tiling(5, &[0.11, 0.23, 0.37, 0.41, 0.17], 1.6).unwrap();
    assert!(sq.num_vertices() <= 30 && mg.num_vertices() <= 30, "{}", mg.num_vertices());
    assert!(mg.num_vertices() >= 8);
    vec![("square", sq), ("multigrid", mg)]
}

/// `Δ^m` from the edge list: `D = Σρ + m²` on the diagonal, `−ρ` off it.
fn dense_laplacian(w: &WeightedGraph) -> DMatrix<f64> {
    let g = w.graph();
    let n = g.num_vertices();
    let mut l = DMatrix::zeros(n, n);
    for (e, r) in g.edges().iter().zip(w.rho()) {
        l[(e.a, e.b)] -= r;
        l[(e.b, e.a)] -= r;
        l[(e.a, e.a)] += r;
        l[(e.b, e.b)] += r;
    }
    for x in 0..n {
        l[(x, x)] += w.mass2()[x];
    }
    l
}

fn potentials(w: &WeightedGraph) -> DMatrix<f64> {
    let n = w.num_vertices();
    let mut u = DMatrix::zeros(n, n);
    for x in 0..n {
        let f = solve_potential(
            w,
            x,
            Region::whole(w.graph()),
            SolveMethod::ConjugateGradient,
            SolveOptions::default(),
        )
        .unwrap();
        for y in 0..n {
            u[(x, y)] = f.u(y);
        }
    }
    u
}

#[test]
fn laplacian_is_symmetric_and_positive() {
    for (name, g) in small_patches() {
        let g = Arc::new(g);
        for k in [0.3, 0.5, 0.8] {
            let w = WeightedGraph::new(g.clone(), k).unwrap();
            let l = dense_laplacian(&w);
            assert!((&l - l.transpose()).amax() < 1e-13, "{name}");
            let diag = DVector::from_column_slice(w.diag());
            assert!((l.diagonal() - diag).amax() < 1e-13, "{name}: D(x)");
            let min = l.clone().symmetric_eigen().eigenvalues.min();
            assert!(min > 0.0, "{name} k={k}: λ_min = {min}");
        }
    }
}

#[test]
fn operators_agree_with_dense_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, g) in small_patches() {
        let w = WeightedGraph::new(Arc::new(g), 0.5).unwrap();
        let n = w.num_vertices();
        let l = dense_laplacian(&w);
        let dinv = DMatrix::from_diagonal(&DVector::from_iterator(n, w.diag().iter().map(|d| 1.0 / d)));
        let t = -(&l * &dinv);
        for _ in 0..5 {
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fv = DVector::from_column_slice(&f);
            let lf = DVector::from_vec(w.laplacian_apply(&f));
            let tf = DVector::from_vec(w.operator_t_apply(&f));
            assert!((lf - &l * &fv).amax() < 1e-12, "{name}");
            assert!((tf - &t * &fv).amax() < 1e-12, "{name}");
        }
    }
}

#[test]
fn potential_is_the_inverse_kernel() {
    for (name, g) in small_patches() {
        let w = WeightedGraph::new(Arc::new(g), 0.5).unwrap();
        let n = w.num_vertices();
        let l = dense_laplacian(&w);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(w.diag()));
        let dinv = d.clone().try_inverse().unwrap();
        let gr_dense = l.clone().try_inverse().unwrap();
        let u = potentials(&w);
        // Gr = U D⁻¹ reproduces the dense inverse and is symmetric.
        let gr = &u * &dinv;
        let scale = gr_dense.amax();
        assert!((&gr - &gr_dense).amax() < 1e-10 * scale, "{name}: {} of {scale}", (&gr - &gr_dense).amax());
        assert!((&gr - gr.transpose()).amax() < 1e-10, "{name}");
        // T U⊺ = U⊺ T = −Id.
        let t = -(&l * &dinv);
        let id = DMatrix::<f64>::identity(n, n);
        assert!((&t * u.transpose() + &id).amax() < 1e-8, "{name}");
        assert!((u.transpose() * &t + &id).amax() < 1e-8, "{name}");
        // c·Gr ≤ U ≤ c′·Gr.
        let b = compute_model_bounds(&w, f64::INFINITY);
        for x in 0..n {
            for y in 0..n {
                let (uv, gv) = (u[(x, y)], gr[(x, y)]);
                assert!(b.c * gv <= uv * (1.0 + 1e-12) && uv <= b.c_prime * gv * (1.0 + 1e-12));
            }
        }
        // Row sums are bounded by the killing rate, column sums are measured.
        let delta = b.delta;
        for x in 0..n {
            assert!(u.row(x).sum() <= (1.0 + 1e-12) / delta, "{name}: row {x} {} vs {}", u.row(x).sum(), 1.0 / delta);
        }
        let cols = potential_column_sums(&w, &Region::whole(w.graph())).unwrap();
        for (x, c) in cols.iter().enumerate() {
            assert!((c - u.column(x).sum()).abs() < 1e-9 * c, "{name}: column {x}");
        }
        let a = cols.iter().copied().fold(0.0, f64::max);
        let measured = compute_model_bounds(&w, a);
        assert!(measured.a <= measured.a_geometric);
    }
}

#[test]
fn conductances_respect_the_angle_bound() {
    for (name, g) in small_patches() {
        let eps = g.epsilon();
        let g = Arc::new(g);
        for k in [0.0, 0.3, 0.8] {
            let w = WeightedGraph::new(g.clone(), k).unwrap();
            let p = w.params();
            let e = p.angle_scale() * eps;
            let (lo, hi) = (sc(e, p), sc(p.big_k - e, p));
            for r in w.rho() {
                assert!(*r >= lo * (1.0 - 1e-12) && *r <= hi * (1.0 + 1e-12), "{name} k={k}: {r}");
            }
        }
    }
}
