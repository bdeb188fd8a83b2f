//! Finite-scale geometric diagnostics of a lifted patch.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{project_int, IsoradialGraph, SurfaceLift, GEOM_TOL};
use crate::error::{Error, Result};
use crate::limitshape::canonical_orientation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilipschitzReport {
    /// Certified lower constant `δ`.
    pub lower: f64,
    pub upper: f64,
    /// Vertex realizing `δ` (diamond id).
    pub worst_vertex: usize,
    /// `min |π(n(y))| / ‖n(y)‖₁` over the patch, always `≥ lower`.
    pub min_ratio: f64,
}

/// Checks `δ‖n(y)‖₁ ≤ |π(n(y))| ≤ ‖n(y)‖₁` on every diamond vertex, with `δ`
/// the smallest `cos ᾱ′_j` over the support of the reoriented `n(y)`.
pub fn bilipschitz_constants(g: &IsoradialGraph, lift: &SurfaceLift) -> Result<BilipschitzReport> {
    let mut lower = 1.0f64;
    let mut worst_vertex = g.origin();
    let mut min_ratio = f64::INFINITY;
    for v in 0..lift.len() {
        let norm = lift.norm1(v) as f64;
        let plane = project_int(lift.coords(v), g.palette()).norm();
        if plane > norm + GEOM_TOL * norm.max(1.0) {
            return Err(Error::Invariant(format!(
                "vertex {v}: |π(n)| = {plane} exceeds ‖n‖₁ = {norm}"
            )));
        }
        if norm == 0.0 {
            continue;
        }
        let x: Vec<f64> = lift.coords(v).iter().map(|&c| c as f64).collect();
        let o = canonical_orientation(&x, g.palette())
            .map_err(|e| Error::Invariant(format!("vertex {v}: {e}")))?;
        let delta_v = o
            .s
            .iter()
            .zip(&o.angles)
            .filter(|(s, _)| **s > 0.0)
            .map(|(_, a)| a.cos())
            .fold(f64::INFINITY, f64::min);
        if plane < delta_v * norm - GEOM_TOL * norm {
            return Err(Error::Invariant(format!(
                "vertex {v}: |π(n)| = {plane} below δ‖n‖₁ = {}",
                delta_v * norm
            )));
        }
        if delta_v < lower {
            lower = delta_v;
            worst_vertex = v;
        }
        min_ratio = min_ratio.min(plane / norm);
    }
    Ok(BilipschitzReport {
        lower,
        upper: 1.0,
        worst_vertex,
        min_ratio,
    })
}

/// Reduced coordinates of the diamond vertices with `r1 ≤ ‖n‖₁ ≤ r2`,
/// deduplicated so that kept vectors are more than `tol` apart in ℓ¹.
pub fn admissible_directions_estimate(
    lift: &SurfaceLift,
    r1: f64,
    r2: f64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut found: Vec<Vec<f64>> = (0..lift.len())
        .filter(|&v| {
            let n = lift.norm1(v) as f64;
            n > 0.0 && n >= r1 && n <= r2
        })
        .filter_map(|v| lift.reduced(v))
        .collect();
    if found.is_empty() {
        return Err(Error::Empty(format!("no lifted vertex with ‖n‖₁ in [{r1}, {r2}]")));
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for s in found {
        if kept.iter().all(|k| l1(k, &s) > tol) {
            kept.push(s);
        }
    }
    Ok(kept)
}

/// Hausdorff distance (ℓ¹) between two finite direction sets.
pub fn direction_set_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one_sided = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| l1(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Index of the plane-angle bin containing `angle`; bin `b` is centered at
/// `2πb/bins`.
pub fn angle_bin(angle: f64, bins: usize) -> usize {
    let w = 2.0 * PI / bins as f64;
    ((angle / w).round() as i64).rem_euclid(bins as i64) as usize
}

pub fn bin_center(b: usize, bins: usize) -> f64 {
    let c = 2.0 * PI * b as f64 / bins as f64;
    if c > PI {
        c - 2.0 * PI
    } else {
        c
    }
}

/// Mean reduced lift coordinates per plane-angle bin over the diamond
/// vertices whose plane modulus lies in `[r1, r2]`, with sample counts.
pub fn binned_directions(
    g: &IsoradialGraph,
    lift: &SurfaceLift,
    bins: usize,
    r1: f64,
    r2: f64,
) -> Vec<Option<(Vec<f64>, usize)>> {
    let d = lift.d();
    let mut sums = vec![vec![0.0; d]; bins];
    let mut counts = vec![0usize; bins];
    for v in 0..lift.len() {
        let z = g.diamond_position(v);
        let r = z.norm();
        if r < r1 || r > r2 || lift.norm1(v) == 0 {
            continue;
        }
        let b = angle_bin(z.arg(), bins);
        let n = lift.norm1(v) as f64;
        for (acc, c) in sums[b].iter_mut().zip(lift.coords(v)) {
            *acc += *c as f64 / n;
        }
        counts[b] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| (s.iter().map(|x| x / c as f64).collect(), c)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessBin {
    /// Bin center `v̂` as an angle.
    pub angle: f64,
    /// Largest ℓ¹ distance between the per-annulus mean reduced coordinates.
    pub spread: f64,
    /// Estimate of `n(v̂)` from the outermost annulus that hit the bin.
    pub n_hat: Option<Vec<f64>>,
    /// Samples per annulus.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub bins: Vec<FlatnessBin>,
    pub max_spread: f64,
}

/// Spread of reduced coordinates across plane annuli, per direction bin.
pub fn check_asymptotic_flatness(
    g: &IsoradialGraph,
    lift: &SurfaceLift,
    bins: usize,
    annuli: &[(f64, f64)],
) -> Result<FlatnessReport> {
    if annuli.len() < 2 || bins == 0 {
        return Err(Error::Empty("flatness needs at least two annuli and one bin".into()));
    }
    let per_annulus: Vec<_> = annuli
        .iter()
        .map(|&(r1, r2)| binned_directions(g, lift, bins, r1, r2))
        .collect();
    let mut out = Vec::with_capacity(bins);
    let mut max_spread = 0.0f64;
    for b in 0..bins {
        let means: Vec<&Vec<f64>> = per_annulus
            .iter()
            .filter_map(|a| a[b].as_ref().map(|(m, _)| m))
            .collect();
        let mut spread = 0.0f64;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                spread = spread.max(l1(means[i], means[j]));
            }
        }
        max_spread = max_spread.max(spread);
        out.push(FlatnessBin {
            angle: bin_center(b, bins),
            spread,
            n_hat: means.last().map(|m| (*m).clone()),
            counts: per_annulus
                .iter()
                .map(|a| a[b].as_ref().map_or(0, |(_, c)| *c))
                .collect(),
        });
    }
    Ok(FlatnessReport {
        bins: out,
        max_spread,
    })
}
