//! Predicted limit shapes: the saddle point `u_s`, the decay vector `θ(u)`,
//! the radius `1/(θ(u_s)·s)` in `R^d` and its projection to the plane.
//!
//! Angles are passed in natural radians and converted to elliptic units
//! (`α = 2K/π · ᾱ`) where they are used; `u` is always in elliptic units.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elliptic::{log_nd, sn_cn_over_dn, ElliptParams};
use crate::error::{Error, Result};
use crate::isograph::{bin_center, binned_directions, IsoradialGraph, SurfaceLift};
use crate::sandpile::{boundary_radii, SandpileState};

/// Number of grid points used to bracket the saddle point over one period.
pub const ROOT_SCAN_POINTS: usize = 256;
/// Residual required of a located saddle point.
pub const ROOT_TOL: f64 = 1e-12;

/// Sign flips and rotation applied by [`canonical_orientation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    /// `flips[j]`: coordinate `j` was negated and its angle shifted by `π`.
    pub flips: Vec<bool>,
    /// Angle subtracted from every (flipped) direction.
    pub rotation: f64,
}

impl Orientation {
    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && !self.flips.iter().any(|&f| f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oriented {
    /// Nonnegative coordinates `s′`.
    pub s: Vec<f64>,
    /// Reoriented angles `ᾱ′_j ∈ (−π/2, π/2)`.
    pub angles: Vec<f64>,
    pub orientation: Orientation,
}

fn wrap_pi(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Flips negative coordinates and rotates the palette so that the support
/// directions of `s` sit inside `(−π/2, π/2)`.
pub fn canonical_orientation(s: &[f64], palette: &[f64]) -> Result<Oriented> {
    if s.len() != palette.len() {
        return Err(Error::Domain(format!(
            "direction has {} coordinates, palette has {}",
            s.len(),
            palette.len()
        )));
    }
    if s.iter().any(|x| !x.is_finite()) || s.iter().all(|&x| x == 0.0) {
        return Err(Error::NotAdmissible("zero or non-finite direction".into()));
    }
    let mut flips: Vec<bool> = s.iter().map(|&x| x < 0.0).collect();
    let abs: Vec<f64> = s.iter().map(|x| x.abs()).collect();
    let raw: Vec<f64> = palette
        .iter()
        .zip(&flips)
        .map(|(&a, &f)| if f { a + PI } else { a })
        .collect();
    let support: Vec<usize> = (0..s.len()).filter(|&j| abs[j] > 0.0).collect();
    let inside = |a: f64| a > -FRAC_PI_2 && a < FRAC_PI_2;

    let rotation = if support.iter().all(|&j| inside(wrap_pi(raw[j]))) {
        0.0
    } else {
        let mut on_circle: Vec<f64> = support.iter().map(|&j| raw[j].rem_euclid(TAU)).collect();
        on_circle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = on_circle.len();
        let (mut gap, mut after) = (0.0, 0);
        for i in 0..n {
            let next = if i + 1 < n { on_circle[i + 1] } else { on_circle[0] + TAU };
            if next - on_circle[i] > gap {
                gap = next - on_circle[i];
                after = (i + 1) % n;
            }
        }
        if gap <= PI + 1e-12 {
            return Err(Error::NotAdmissible(format!(
                "support directions do not fit in an open half-plane (largest gap {gap})"
            )));
        }
        on_circle[after] + 0.5 * (TAU - gap)
    };

    let mut angles = Vec::with_capacity(s.len());
    for j in 0..s.len() {
        let mut a = wrap_pi(raw[j] - rotation);
        if abs[j] == 0.0 && !inside(a) {
            flips[j] = !flips[j];
            a = wrap_pi(a + PI);
        }
        angles.push(a);
    }
    let lead: f64 = abs.iter().zip(&angles).map(|(x, a)| x * a.cos()).sum();
    if lead <= 0.0 {
        return Err(Error::NotAdmissible(format!("Σ s_j cos ᾱ′_j = {lead} ≤ 0")));
    }
    Ok(Oriented {
        s: abs,
        angles,
        orientation: Orientation { flips, rotation },
    })
}

/// `f_s(u, m) = Σ_j s_j (sn·cn/dn)((u − α_j)/2)`.
pub fn f_s_eval(u: f64, s: &[f64], angles: &[f64], p: &ElliptParams) -> f64 {
    let scale = p.angle_scale();
    s.iter()
        .zip(angles)
        .filter(|(sj, _)| **sj != 0.0)
        .map(|(sj, a)| sj * sn_cn_over_dn(0.5 * (u - scale * a), p))
        .sum()
}

/// The `k = 0` saddle point `arctan(Σ s_j sin ᾱ_j / Σ s_j cos ᾱ_j)`.
pub fn u_s_zero(s: &[f64], angles: &[f64]) -> f64 {
    let (num, den) = s
        .iter()
        .zip(angles)
        .fold((0.0, 0.0), |(n, d), (sj, a)| (n + sj * a.sin(), d + sj * a.cos()));
    (num / den).atan()
}

/// Root of `f_s(·, m)` continued from the `k = 0` closed form: the up-crossing
/// nearest `(2K/π)·u_s(0)` on a 256-point scan of one period, refined by
/// bisection.
pub fn saddle_point_u(s: &[f64], angles: &[f64], p: &ElliptParams) -> Result<f64> {
    let center = p.angle_scale() * u_s_zero(s, angles);
    let period = 4.0 * p.big_k;
    let h = period / ROOT_SCAN_POINTS as f64;
    let f = |u: f64| f_s_eval(u, s, angles, p);
    let grid: Vec<(f64, f64)> = (0..=ROOT_SCAN_POINTS)
        .map(|i| {
            let u = center - 0.5 * period + i as f64 * h;
            (u, f(u))
        })
        .collect();
    let bracket = grid
        .windows(2)
        .filter(|w| w[0].1 <= 0.0 && w[1].1 > 0.0)
        .min_by(|a, b| {
            let da = (0.5 * (a[0].0 + a[1].0) - center).abs();
            let db = (0.5 * (b[0].0 + b[1].0) - center).abs();
            da.partial_cmp(&db).unwrap()
        })
        .ok_or_else(|| {
            let samples: Vec<String> = grid.iter().step_by(32).map(|(_, v)| format!("{v:.3e}")).collect();
            Error::RootNotFound(format!("f_s has no sign change; samples [{}]", samples.join(", ")))
        })?;
    let (mut lo, mut hi) = (bracket[0].0, bracket[1].0);
    let (mut flo, mut fhi) = (bracket[0].1, bracket[1].1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm <= 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let (root, residual) = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
    if residual.abs() >= ROOT_TOL {
        return Err(Error::RootNotFound(format!(
            "bisection stalled at u = {root} with |f_s| = {:e}",
            residual.abs()
        )));
    }
    Ok(root)
}

/// `θ(u)_j = −log(√k′ · nd((u − α_j)/2 | k))`.
pub fn theta_vector(u: f64, angles: &[f64], p: &ElliptParams) -> Vec<f64> {
    if p.is_critical() {
        return vec![0.0; angles.len()];
    }
    let scale = p.angle_scale();
    // −½ log k′ = −¼ log(1 − m)
    let shift = -0.25 * (-p.m).ln_1p();
    angles
        .iter()
        .map(|a| shift - log_nd(0.5 * (u - scale * a), p))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1_normalized(s: &[f64]) -> Result<Vec<f64>> {
    let n: f64 = s.iter().map(|x| x.abs()).sum();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NotAdmissible("direction has zero ℓ¹ norm".into()));
    }
    Ok(s.iter().map(|x| x / n).collect())
}

/// Everything the limit-shape formulas attach to one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionProfile {
    /// Reoriented, ℓ¹-normalized direction.
    pub s: Vec<f64>,
    /// Reoriented angles, natural radians.
    pub angles: Vec<f64>,
    pub u_s: f64,
    pub theta_us: Vec<f64>,
    /// `χ(u_s) = −θ(u_s)·s`.
    pub chi: f64,
    /// `χ″(u_s)` by central differences with step `10⁻⁴·K`.
    pub chi2: f64,
    /// `1/(θ(u_s)·s)`.
    pub radius: f64,
    /// `|f_s(u_s)|`.
    pub residual: f64,
    pub orientation: Orientation,
}

impl DirectionProfile {
    /// `|π(radius · s)|`, the plane distance of the predicted boundary point.
    pub fn plane_radius(&self) -> f64 {
        let z: Complex64 = self
            .s
            .iter()
            .zip(&self.angles)
            .map(|(sj, a)| Complex64::from_polar(*sj, *a))
            .sum();
        self.radius * z.norm()
    }
}

/// Builds the profile of direction `s` (any sign pattern, any scale).
pub fn direction_profile(s: &[f64], palette: &[f64], p: &ElliptParams) -> Result<DirectionProfile> {
    if p.is_critical() {
        return Err(Error::Refused("limit-shape radii need k > 0".into()));
    }
    let s = l1_normalized(s)?;
    let o = canonical_orientation(&s, palette)?;
    let u_s = saddle_point_u(&o.s, &o.angles, p)?;
    let theta_us = theta_vector(u_s, &o.angles, p);
    let rate = dot(&theta_us, &o.s);
    if !(rate > 0.0) {
        return Err(Error::Invariant(format!("θ(u_s)·s = {rate} is not positive")));
    }
    let chi = |u: f64| -dot(&theta_vector(u, &o.angles, p), &o.s);
    let h = 1e-4 * p.big_k;
    let chi2 = (chi(u_s + h) - 2.0 * chi(u_s) + chi(u_s - h)) / (h * h);
    Ok(DirectionProfile {
        residual: f_s_eval(u_s, &o.s, &o.angles, p).abs(),
        s: o.s,
        angles: o.angles,
        u_s,
        theta_us,
        chi: -rate,
        chi2,
        radius: 1.0 / rate,
        orientation: o.orientation,
    })
}

/// `1/(θ(u_s)·s)` for `s` in the original frame.
pub fn predicted_radius(s: &[f64], palette: &[f64], p: &ElliptParams) -> Result<f64> {
    direction_profile(s, palette, p).map(|prof| prof.radius)
}

/// `1/(Σ_j s_j cos(u_s(0) − ᾱ_j))` for a reoriented direction.
pub fn theta_zero_radius(s: &[f64], angles: &[f64]) -> f64 {
    let u0 = u_s_zero(s, angles);
    1.0 / s.iter().zip(angles).map(|(sj, a)| sj * (u0 - a).cos()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Radii as they come: the shape scaled by `1/log N`.
    LogN,
    /// Radii multiplied by `m/4`, the `k → 0` scaling.
    FourOverM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSample {
    /// Plane direction `v̂` as an angle.
    pub angle: f64,
    /// Estimated `n(v̂)`, ℓ¹-normalized, original frame.
    pub n_hat: Vec<f64>,
    pub radius_rd: f64,
    pub radius_plane: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCurve {
    pub k: f64,
    pub normalization: Normalization,
    pub samples: Vec<ShapeSample>,
    /// Direction bins with no lifted vertex in the annulus.
    pub missing: Vec<f64>,
    /// Largest relative jump of the plane radius between neighbouring samples.
    pub max_jump: f64,
}

impl ShapeCurve {
    /// Largest `|radius_plane − 1|`.
    pub fn max_unit_deviation(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.radius_plane - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Samples the predicted plane shape over `n_samples` direction bins, with
/// `n(v̂)` estimated from the lifted vertices whose plane modulus lies in
/// `annulus`.
pub fn predicted_plane_shape(
    g: &IsoradialGraph,
    lift: &SurfaceLift,
    p: &ElliptParams,
    n_samples: usize,
    annulus: (f64, f64),
    normalization: Normalization,
) -> Result<ShapeCurve> {
    if p.is_critical() {
        return Err(Error::Refused("the predicted shape needs k > 0".into()));
    }
    let factor = match normalization {
        Normalization::LogN => 1.0,
        Normalization::FourOverM => 0.25 * p.m,
    };
    let bins = binned_directions(g, lift, n_samples, annulus.0, annulus.1);
    let mut samples = Vec::new();
    let mut missing = Vec::new();
    for (b, entry) in bins.into_iter().enumerate() {
        let angle = bin_center(b, n_samples);
        let Some((mean, _)) = entry else {
            missing.push(angle);
            continue;
        };
        let n_hat = l1_normalized(&mean)?;
        let prof = direction_profile(&n_hat, g.palette(), p)?;
        samples.push(ShapeSample {
            angle,
            n_hat,
            radius_rd: prof.radius * factor,
            radius_plane: prof.plane_radius() * factor,
        });
    }
    let mut max_jump = 0.0f64;
    for i in 0..samples.len() {
        let a = samples[i].radius_plane;
        let b = samples[(i + 1) % samples.len()].radius_plane;
        max_jump = max_jump.max((a - b).abs() / a.max(b));
    }
    Ok(ShapeCurve {
        k: p.k,
        normalization,
        samples,
        missing,
        max_jump,
    })
}

/// Measured against predicted radius in one plane-angle bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub angle: f64,
    /// Outermost shape-boundary vertex of the bin (largest `‖n‖₁`).
    pub vertex: usize,
    /// `‖n(vertex)‖₁ / log N`.
    pub measured: f64,
    /// `1/(θ(u_s)·s)` for `s = n(vertex)/‖n(vertex)‖₁`.
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeComparison {
    pub n_grains: f64,
    pub bins: Vec<BinComparison>,
    pub max_error: f64,
}

/// Per-bin relative error between the scaled shape boundary and the
/// predicted radius, in lift `ℓ¹` units.
pub fn compare_shape(
    g: &IsoradialGraph,
    lift: &SurfaceLift,
    state: &SandpileState,
    p: &ElliptParams,
    bins: usize,
) -> Result<ShapeComparison> {
    if state.n_grains <= 1.0 {
        return Err(Error::Domain("the comparison needs N > 1".into()));
    }
    let radii = boundary_radii(g, state, lift, bins, 1);
    let log_n = state.n_grains.ln();
    let base = lift.coords(state.x0).to_vec();
    let mut out = Vec::new();
    for b in radii.plane_bins.into_iter().flatten() {
        let s: Vec<f64> = lift
            .coords(b.outer_vertex)
            .iter()
            .zip(&base)
            .map(|(&c, &c0)| (c - c0) as f64)
            .collect();
        let l1: f64 = s.iter().map(|x| x.abs()).sum();
        let predicted = predicted_radius(&s, g.palette(), p)?;
        let measured = l1 / log_n;
        out.push(BinComparison {
            angle: b.angle,
            vertex: b.outer_vertex,
            measured,
            predicted,
            relative_error: (measured / predicted - 1.0).abs(),
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("the shape has no boundary vertices".into()));
    }
    let max_error = out.iter().map(|b| b.relative_error).fold(0.0, f64::max);
    Ok(ShapeComparison {
        n_grains: state.n_grains,
        bins: out,
        max_error,
    })
}
