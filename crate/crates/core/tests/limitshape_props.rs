use std::f64::consts::PI;

use isosand_core::elliptic::{jacobi_sn_cn_dn, ElliptParams};
use isosand_core::isograph::{build_multigrid_tiling, build_square_lattice, lift_coordinates, project};
use isosand_core::limitshape::{
    canonical_orientation, direction_profile, f_s_eval, predicted_plane_shape, saddle_point_u, theta_vector,
    theta_zero_radius, u_s_zero, Normalization,
};
use num_complex::Complex64;
use proptest::prelude::*;

const OFFSETS: [f64; 5] = [0.11, 0.23, 0.37, 0.41, 0.17];

/// Reduced lift vectors of a d = 5 patch: directions realized by the surface.
fn realized_directions() -> (Vec<f64>, Vec<Vec<f64>>) {
    let g = build_multigrid_tiling(5, &OFFSETS, 12.0).unwrap();
    let lift = lift_coordinates(&g).unwrap();
    let dirs = (0..g.num_vertices())
        .filter(|&v| lift.norm1(v) >= 6)
        .map(|v| lift.reduced(v).unwrap())
        .collect();
    (g.palette().to_vec(), dirs)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn profiles_are_well_formed(i in any::<prop::sample::Index>(), k in 0.01f64..0.95) {
        let (palette, dirs) = realized_directions();
        let s = i.get(&dirs);
        let p = ElliptParams::new(k).unwrap();
        let prof = direction_profile(s, &palette, &p).unwrap();
        prop_assert!((prof.s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(prof.s.iter().all(|&x| x >= 0.0));
        // Unused directions may sit exactly on ±π/2, where no flip helps.
        for (sj, a) in prof.s.iter().zip(&prof.angles) {
            prop_assert!(a.abs() < PI / 2.0 || (*sj == 0.0 && a.abs() <= PI / 2.0), "ᾱ′ = {a}");
        }
        prop_assert!(prof.residual < 1e-12);
        prop_assert!(prof.radius > 0.0 && prof.radius.is_finite());
        prop_assert!(prof.chi2 > 0.0);
        // Sign certificate of the k = 0 root.
        let u0 = u_s_zero(&prof.s, &prof.angles);
        let slope: f64 = prof.s.iter().zip(&prof.angles).map(|(sj, a)| sj * (u0 - a).cos()).sum();
        prop_assert!(slope >= 1e-8, "slope {slope}");
    }

    #[test]
    fn radius_does_not_depend_on_the_frame(
        i in any::<prop::sample::Index>(),
        k in 0.05f64..0.9,
        flip in 0usize..5,
        turn in -1.0f64..1.0,
    ) {
        let (palette, dirs) = realized_directions();
        let s = i.get(&dirs);
        let p = ElliptParams::new(k).unwrap();
        let base = direction_profile(s, &palette, &p).unwrap();
        // The same geometric direction with coordinate `flip` counted backwards.
        let mut s2 = s.clone();
        let mut pal2 = palette.clone();
        s2[flip] = -s2[flip];
        pal2[flip] += PI;
        let flipped = direction_profile(&s2, &pal2, &p).unwrap();
        prop_assert!((flipped.radius - base.radius).abs() < 1e-10 * base.radius);
        // A rigid rotation of the whole palette.
        let rotated: Vec<f64> = palette.iter().map(|a| a + turn).collect();
        let turned = direction_profile(s, &rotated, &p).unwrap();
        prop_assert!((turned.radius - base.radius).abs() < 1e-10 * base.radius);
        // χ from the profile against −θ(u_s)·s evaluated in the original frame.
        let o = canonical_orientation(s, &palette).unwrap();
        let chi: f64 = -theta_vector(base.u_s, &o.angles, &p).iter().zip(&o.s).map(|(t, x)| t * x).sum::<f64>();
        prop_assert!((chi - base.chi).abs() < 1e-14);
    }

    #[test]
    fn k_zero_root_and_circle(i in any::<prop::sample::Index>()) {
        let (palette, dirs) = realized_directions();
        let o = canonical_orientation(i.get(&dirs), &palette).unwrap();
        let u0 = u_s_zero(&o.s, &o.angles);
        let f0 = |u: f64| 0.5 * o.s.iter().zip(&o.angles).map(|(sj, a)| sj * (u - a).sin()).sum::<f64>();
        let root = bisect(f0, -PI / 2.0, PI / 2.0);
        prop_assert!((root - u0).abs() < 1e-12);
        let z0 = ElliptParams::new(0.0).unwrap();
        prop_assert!((saddle_point_u(&o.s, &o.angles, &z0).unwrap() - u0).abs() < 1e-10);
        let r = theta_zero_radius(&o.s, &o.angles);
        let x: Vec<f64> = o.s.iter().map(|sj| r * sj).collect();
        let z = project(&x, &o.angles);
        prop_assert!((z.re - u0.cos()).abs() < 1e-12 && (z.im - u0.sin()).abs() < 1e-12);
    }
}

#[test]
fn f_s_matches_jacobi_terms() {
    let (palette, dirs) = realized_directions();
    let p = ElliptParams::new(0.5).unwrap();
    for s in dirs.iter().step_by(17) {
        let o = canonical_orientation(s, &palette).unwrap();
        for i in 0..50 {
            let u = -2.0 * p.big_k + 4.0 * p.big_k * i as f64 / 49.0;
            let want: f64 = o
                .s
                .iter()
                .zip(&o.angles)
                .map(|(sj, a)| {
                    let j = jacobi_sn_cn_dn(0.5 * (u - p.angle_scale() * a), &p);
                    sj * j.sn * j.cn / j.dn
                })
                .sum();
            assert!((f_s_eval(u, &o.s, &o.angles, &p) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn small_modulus_expansion() {
    let (palette, dirs) = realized_directions();
    for s in dirs.iter().step_by(11) {
        let o = canonical_orientation(s, &palette).unwrap();
        let u0 = u_s_zero(&o.s, &o.angles);
        let drift: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .map(|m: f64| {
                let p = ElliptParams::new(m.sqrt()).unwrap();
                // Elliptic units, as in the expansion; in natural radians the
                // first-order term cancels and the drift is O(m²).
                (saddle_point_u(&o.s, &o.angles, &p).unwrap() - u0).abs()
            })
            .to_vec();
        for w in drift.windows(2) {
            // O(m): each tenfold decrease of m cuts the drift about tenfold.
            if w[0] > 1e-13 {
                let r = w[1] / w[0];
                assert!(r > 0.05 && r < 0.2, "{drift:?}");
            }
        }
        let m: f64 = 1e-4;
        let p = ElliptParams::new(m.sqrt()).unwrap();
        let prof = direction_profile(s, &palette, &p).unwrap();
        for (t, a) in prof.theta_us.iter().zip(&prof.angles) {
            let want = (u0 - a).cos();
            assert!((t * 4.0 / m - want).abs() < 1e-2 * want.abs().max(1e-2), "{} vs {want}", t * 4.0 / m);
        }
        let scaled = prof.radius * m / 4.0;
        let limit = theta_zero_radius(&o.s, &o.angles);
        assert!((scaled / limit - 1.0).abs() < 1e-3);
    }
}

#[test]
fn square_curve_has_fourfold_symmetry() {
    let g = build_square_lattice(40).unwrap();
    let lift = lift_coordinates(&g).unwrap();
    let p = ElliptParams::new(0.5).unwrap();
    let curve = predicted_plane_shape(&g, &lift, &p, 32, (15.0, 25.0), Normalization::LogN).unwrap();
    assert!(curve.missing.is_empty());
    assert_eq!(curve.samples.len(), 32);
    for (i, s) in curve.samples.iter().enumerate() {
        let q = &curve.samples[(i + 8) % 32];
        assert!((s.radius_plane - q.radius_plane).abs() < 1e-9 * s.radius_plane);
        assert!(s.radius_plane > 0.0);
    }
    assert!(curve.max_jump < 0.1, "jump {}", curve.max_jump);
    let z: Complex64 = project(&curve.samples[0].n_hat, g.palette());
    assert!(z.norm() > 0.0);
}
