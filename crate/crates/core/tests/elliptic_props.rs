//! Elliptic kernel against quadrature oracles that never call the Jacobi
//! functions: `u = F(φ)` is integrated directly, so `sn(u) = sin φ`,
//! `cn(u) = cos φ`, `dn(u) = √(1 − m sin²φ)`, and
//! `Dc(F(φ)) = ∫₀^φ √(1 − m sin²ψ)/cos²ψ dψ`.

use std::f64::consts::{FRAC_PI_2, PI};

use isosand_core::elliptic::{
    func_a, integral_dc, jacobi_ratio, jacobi_sn_cn_dn, sc, ElliptParams,
};
use proptest::prelude::*;

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(40);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        s += rule.iter().map(|(x, w)| w * f(c + r * x)).sum::<f64>() * r;
    }
    s
}

fn incomplete_f(phi: f64, m: f64) -> f64 {
    integrate(|t| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, phi, 16)
}

#[test]
fn complete_integrals_match_quadrature() {
    for k in [0.1, 0.3, 0.5, 0.8, 0.95] {
        let p = ElliptParams::new(k).unwrap();
        let m = k * k;
        let kk = incomplete_f(FRAC_PI_2, m);
        let ee = integrate(|t| (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, FRAC_PI_2, 16);
        assert!((p.big_k - kk).abs() < 1e-13 * kk, "K({k})");
        assert!((p.big_e - ee).abs() < 1e-13 * ee, "E({k})");
        let mp = 1.0 - m;
        let kkp = incomplete_f(FRAC_PI_2, mp);
        assert!((p.big_k_prime - kkp).abs() < 1e-12 * kkp, "K'({k})");
    }
}

#[test]
fn jacobi_functions_invert_the_amplitude_integral() {
    for k in [0.2, 0.5, 0.9] {
        let p = ElliptParams::new(k).unwrap();
        let m = k * k;
        for i in 1..40 {
            let phi = -1.4 + 2.8 * i as f64 / 40.0;
            let u = incomplete_f(phi.abs(), m).copysign(phi);
            let j = jacobi_sn_cn_dn(u, &p);
            assert!((j.sn - phi.sin()).abs() < 1e-13);
            assert!((j.cn - phi.cos()).abs() < 1e-13);
            assert!((j.dn - (1.0 - m * phi.sin().powi(2)).sqrt()).abs() < 1e-13);
        }
    }
}

#[test]
fn dc_integral_matches_amplitude_form() {
    for k in [0.3, 0.7] {
        let p = ElliptParams::new(k).unwrap();
        let m = k * k;
        for phi in [0.1, 0.5, 1.0, 1.3] {
            let u = incomplete_f(phi, m);
            let want = integrate(|t| (1.0 - m * t.sin().powi(2)).sqrt() / t.cos().powi(2), 0.0, phi, 32);
            let got = integral_dc(u, &p).unwrap();
            assert!((got - want).abs() < 1e-11 * want.max(1.0), "k={k} φ={phi}: {got} vs {want}");
        }
    }
}

#[test]
fn legendre_relation() {
    for k in [0.05, 0.3, 0.5, 0.8, 0.99] {
        let p = ElliptParams::new(k).unwrap();
        let lhs = p.big_e * p.big_k_prime + p.big_e_prime * p.big_k - p.big_k * p.big_k_prime;
        assert!((lhs - FRAC_PI_2).abs() < 1e-12, "k = {k}: {lhs}");
    }
}

#[test]
fn critical_ratios_are_trigonometric() {
    let p = ElliptParams::new(0.0).unwrap();
    for i in 0..200 {
        let u = -3.0 + 6.0 * i as f64 / 199.0 + 1e-3;
        let (s, c) = u.sin_cos();
        for (code, want) in [
            ("sn", s),
            ("cn", c),
            ("dn", 1.0),
            ("sc", s / c),
            ("cs", c / s),
            ("nd", 1.0),
            ("dc", 1.0 / c),
            ("ns", 1.0 / s),
            ("nc", 1.0 / c),
            ("sd", s),
            ("cd", c),
            ("ds", 1.0 / s),
        ] {
            let got = jacobi_ratio(code, u, &p).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{code}({u})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pythagorean_identities(u in -40.0f64..40.0, k in 0.0f64..0.999) {
        let p = ElliptParams::new(k).unwrap();
        let j = jacobi_sn_cn_dn(u, &p);
        prop_assert!((j.sn * j.sn + j.cn * j.cn - 1.0).abs() < 1e-12);
        prop_assert!((j.dn * j.dn + p.m * j.sn * j.sn - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dc_is_odd_and_increasing(k in 0.01f64..0.95, a in 0.0f64..0.98, b in 0.0f64..0.98) {
        let p = ElliptParams::new(k).unwrap();
        let (a, b) = (a.min(b) * p.big_k, a.max(b) * p.big_k);
        let da = integral_dc(a, &p).unwrap();
        let db = integral_dc(b, &p).unwrap();
        prop_assert_eq!(integral_dc(-a, &p).unwrap(), -da);
        if b - a > 1e-9 {
            prop_assert!(db > da);
        }
    }

    #[test]
    fn mass_contribution_is_concave(k in 0.05f64..0.95, a in 0.02f64..0.98, b in 0.02f64..0.98) {
        let p = ElliptParams::new(k).unwrap();
        let f = |t: f64| func_a(t, &p).unwrap() - sc(t, &p);
        let (a, b) = (a * p.big_k, b * p.big_k);
        prop_assume!((a - b).abs() > 1e-3 * p.big_k);
        let mid = f(0.5 * (a + b));
        prop_assert!(mid > 0.5 * (f(a) + f(b)), "f({}) = {mid}", 0.5 * (a + b));
    }

    #[test]
    fn mass_contribution_is_positive_inside(k in 0.05f64..0.95, t in 0.0f64..1.0) {
        let p = ElliptParams::new(k).unwrap();
        let eps = 0.1;
        let lo = p.angle_scale() * eps;
        let u = lo + t * (p.big_k - 2.0 * lo);
        prop_assert!(func_a(u, &p).unwrap() - sc(u, &p) > 0.0);
    }
}

#[test]
fn mass_contribution_vanishes_at_the_ends() {
    let p = ElliptParams::new(0.6).unwrap();
    let f = |t: f64| func_a(t, &p).unwrap() - sc(t, &p);
    assert!(f(1e-8).abs() < 1e-9);
    // f(K⁻) → 0 slowly: the two poles cancel.
    let near = [1e-2, 1e-3, 1e-4].map(|d| f(p.big_k * (1.0 - d)).abs());
    assert!(near[2] < near[1] && near[1] < near[0] && near[2] < 1e-3, "{near:?}");
}
