//! Complete elliptic integrals, Jacobi elliptic functions and the auxiliary
//! functions `Dc` and `A` that enter the conductances and masses.
//!
//! Everything here works with real arguments only. The modulus `k` lives in
//! `[0, 1)`; `k = 0` is an exact trigonometric branch rather than a limit.
//! Angles handed to the weight formulas are natural radians and are rescaled
//! with [`elliptic_angle`] at the call site.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Relative distance (in units of `K`) below which an argument counts as a pole.
pub const POLE_GUARD: f64 = 1e-9;

const AGM_MAX_ITER: usize = 40;

/// Modulus bundle shared by all elliptic evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElliptParams {
    pub k: f64,
    /// Parameter `m = k²`.
    pub m: f64,
    pub k_prime: f64,
    /// Complete integral of the first kind `K(k)`.
    pub big_k: f64,
    /// `K(k')`; `+∞` at `k = 0`.
    pub big_k_prime: f64,
    /// Complete integral of the second kind `E(k)`.
    pub big_e: f64,
    /// `E(k')`; equal to 1 at `k = 0`.
    pub big_e_prime: f64,
}

/// Returns `(K, E)` for modulus `k` and complementary modulus `kp` by the
/// arithmetic–geometric mean.
fn agm_k_e(k: f64, kp: f64) -> (f64, f64) {
    if k == 0.0 {
        return (FRAC_PI_2, FRAC_PI_2);
    }
    if kp == 0.0 {
        return (f64::INFINITY, 1.0);
    }
    let mut a = 1.0f64;
    let mut b = kp;
    let mut weight = 0.5;
    let mut sum = 0.5 * k * k;
    for _ in 0..AGM_MAX_ITER {
        let c = 0.5 * (a - b);
        let a_next = 0.5 * (a + b);
        let b_next = (a * b).sqrt();
        weight *= 2.0;
        sum += weight * c * c;
        a = a_next;
        b = b_next;
        if c.abs() <= 1e-17 * a {
            break;
        }
    }
    let big_k = PI / (2.0 * a);
    (big_k, big_k * (1.0 - sum))
}

/// Complete integrals and moduli for `0 ≤ k < 1`.
pub fn complete_integrals(k: f64) -> Result<ElliptParams> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::Domain(format!("elliptic modulus k = {k} outside [0, 1)")));
    }
    let k_prime = ((1.0 - k) * (1.0 + k)).sqrt();
    let (big_k, big_e) = agm_k_e(k, k_prime);
    let (big_k_prime, big_e_prime) = if k == 0.0 {
        (f64::INFINITY, 1.0)
    } else {
        agm_k_e(k_prime, k)
    };
    Ok(ElliptParams {
        k,
        m: k * k,
        k_prime,
        big_k,
        big_k_prime,
        big_e,
        big_e_prime,
    })
}

impl ElliptParams {
    /// Shorthand for [`complete_integrals`].
    pub fn new(k: f64) -> Result<Self> {
        complete_integrals(k)
    }

    /// True when the trigonometric (critical) branch applies.
    pub fn is_critical(&self) -> bool {
        self.k == 0.0
    }

    /// Scale factor `2K/π` from natural to elliptic angles.
    pub fn angle_scale(&self) -> f64 {
        2.0 * self.big_k / PI
    }
}

/// The three primary Jacobi functions at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobi {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// `sn`, `cn`, `dn` at `(u | m)` by descending Landen (AGM) recursion.
pub fn jacobi_sn_cn_dn(u: f64, p: &ElliptParams) -> Jacobi {
    if p.m == 0.0 {
        let (sn, cn) = u.sin_cos();
        return Jacobi { sn, cn, dn: 1.0 };
    }
    let mut a = [0.0f64; AGM_MAX_ITER + 1];
    let mut c = [0.0f64; AGM_MAX_ITER + 1];
    a[0] = 1.0;
    let mut b = p.k_prime;
    c[0] = p.k;
    let mut n = 0;
    while n < AGM_MAX_ITER {
        let an = a[n];
        a[n + 1] = 0.5 * (an + b);
        c[n + 1] = 0.5 * (an - b);
        b = (an * b).sqrt();
        n += 1;
        if c[n].abs() <= 1e-16 * a[n] {
            break;
        }
    }
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for j in (1..=n).rev() {
        let ratio = (c[j] / a[j] * phi.sin()).clamp(-1.0, 1.0);
        phi = 0.5 * (phi + ratio.asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (1.0 - p.m * sn * sn).sqrt();
    Jacobi { sn, cn, dn }
}

/// Glaisher letters: `s`, `c`, `d`, `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Letter {
    S,
    C,
    D,
    N,
}

impl Letter {
    fn value(self, j: &Jacobi) -> f64 {
        match self {
            Letter::S => j.sn,
            Letter::C => j.cn,
            Letter::D => j.dn,
            Letter::N => 1.0,
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            's' => Some(Letter::S),
            'c' => Some(Letter::C),
            'd' => Some(Letter::D),
            'n' => Some(Letter::N),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Letter::S => 's',
            Letter::C => 'c',
            Letter::D => 'd',
            Letter::N => 'n',
        }
    }
}

/// A two-letter Jacobi function name `pq = pn / qn` (e.g. `sc`, `nd`, `dc`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JacobiRatio {
    num: Letter,
    den: Letter,
}

impl FromStr for JacobiRatio {
    type Err = Error;

    fn from_str(code: &str) -> Result<Self> {
        let mut chars = code.chars();
        let parsed = match (chars.next(), chars.next(), chars.next()) {
            (Some(p), Some(q), None) => Letter::from_char(p).zip(Letter::from_char(q)),
            _ => None,
        };
        match parsed {
            Some((num, den)) if num != den => Ok(JacobiRatio { num, den }),
            _ => Err(Error::Domain(format!("unknown Jacobi function name {code:?}"))),
        }
    }
}

impl fmt::Display for JacobiRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.num.as_char(), self.den.as_char())
    }
}

/// Distance from `u` to the nearest point of `offset + period·Z`.
fn lattice_distance(u: f64, offset: f64, period: f64) -> f64 {
    let r = (u - offset).rem_euclid(period);
    r.min(period - r)
}

impl JacobiRatio {
    /// Distance to the nearest real pole, `None` when the ratio has none.
    fn pole_distance(&self, u: f64, p: &ElliptParams) -> Option<f64> {
        match self.den {
            Letter::S => Some(lattice_distance(u, 0.0, 2.0 * p.big_k)),
            Letter::C => Some(lattice_distance(u, p.big_k, 2.0 * p.big_k)),
            Letter::D | Letter::N => None,
        }
    }

    pub fn eval(&self, u: f64, p: &ElliptParams) -> Result<f64> {
        if let Some(dist) = self.pole_distance(u, p) {
            if dist < POLE_GUARD * p.big_k {
                return Err(Error::Pole(format!("{self}({u} | k = {}) is at a pole", p.k)));
            }
        }
        let j = jacobi_sn_cn_dn(u, p);
        Ok(self.num.value(&j) / self.den.value(&j))
    }
}

/// Evaluates the named ratio, e.g. `jacobi_ratio("sc", u, &p)`.
pub fn jacobi_ratio(code: &str, u: f64, p: &ElliptParams) -> Result<f64> {
    code.parse::<JacobiRatio>()?.eval(u, p)
}

/// `sc(u | k)` without pole checking; callers keep `u` inside `(-K, K)`.
#[inline]
pub fn sc(u: f64, p: &ElliptParams) -> f64 {
    let j = jacobi_sn_cn_dn(u, p);
    j.sn / j.cn
}

/// `nd(u | k)`; finite on the whole real line.
#[inline]
pub fn nd(u: f64, p: &ElliptParams) -> f64 {
    1.0 / jacobi_sn_cn_dn(u, p).dn
}

/// `sn·cn/dn (u | k)`; finite on the whole real line.
#[inline]
pub fn sn_cn_over_dn(u: f64, p: &ElliptParams) -> f64 {
    let j = jacobi_sn_cn_dn(u, p);
    j.sn * j.cn / j.dn
}

/// `log nd(u | k)` evaluated without cancellation for small `m`.
#[inline]
pub fn log_nd(u: f64, p: &ElliptParams) -> f64 {
    if p.m == 0.0 {
        return 0.0;
    }
    let sn = jacobi_sn_cn_dn(u, p).sn;
    -0.5 * (-p.m * sn * sn).ln_1p()
}

/// `Dc(u | k) = ∫₀ᵘ dc²(v | k) dv` for `|u| < K`.
pub fn integral_dc(u: f64, p: &ElliptParams) -> Result<f64> {
    if u.abs() >= p.big_k * (1.0 - POLE_GUARD) {
        return Err(Error::Pole(format!(
            "Dc({u} | k = {}) integrates through the pole at K = {}",
            p.k, p.big_k
        )));
    }
    if p.is_critical() {
        return Ok(u.tan());
    }
    let dc2 = |v: f64| {
        let j = jacobi_sn_cn_dn(v, p);
        let r = j.dn / j.cn;
        r * r
    };
    let value = quad::integrate(dc2, 0.0, u.abs(), 1e-14 * u.abs().max(1.0));
    Ok(value.copysign(u))
}

/// `A(u | k) = (Dc(u | k) + (E − K)/K · u) / k'`.
pub fn func_a(u: f64, p: &ElliptParams) -> Result<f64> {
    let dc = integral_dc(u, p)?;
    if p.is_critical() {
        return Ok(dc);
    }
    Ok((dc + (p.big_e - p.big_k) / p.big_k * u) / p.k_prime)
}

/// Natural-to-elliptic angle rescaling `θ = (2K/π)·θ̄`.
#[inline]
pub fn elliptic_angle(theta_bar: f64, p: &ElliptParams) -> f64 {
    p.angle_scale() * theta_bar
}
