//! Potential `U` and Green function `Gr = U D⁻¹` of the killed random walk on
//! a finite region with Dirichlet-zero boundary, the asymptotic formula, and
//! the discrete exponential.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{jacobi_ratio, nd, ElliptParams};
use crate::error::{Error, Result};
use crate::isograph::{IsoradialGraph, SurfaceLift};
use crate::limitshape::DirectionProfile;
use crate::weights::WeightedGraph;

/// A set of primal vertices on which the walk lives; it is killed on leaving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    vertices: Vec<usize>,
    local: Vec<u32>,
    /// Local vertices whose whole neighborhood (in the infinite graph) lies
    /// in the region.
    interior: Vec<bool>,
}

const OUTSIDE: u32 = u32::MAX;

impl Region {
    fn from_mask(g: &IsoradialGraph, mask: &[bool]) -> Region {
        let vertices: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
        let mut local = vec![OUTSIDE; mask.len()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i as u32;
        }
        let interior = vertices
            .iter()
            .map(|&v| g.is_interior(v) && g.neighbors(v).all(|(w, _)| mask[w]))
            .collect();
        Region {
            vertices,
            local,
            interior,
        }
    }

    pub fn whole(g: &IsoradialGraph) -> Region {
        Region::from_mask(g, &vec![true; g.num_vertices()])
    }

    /// The interior vertices of the patch. Their `D` and `m²` are the values
    /// of the infinite graph, so the walk restricted to them is the true walk
    /// killed on reaching the patch edge. `whole` instead keeps the edge
    /// vertices with their truncated conductance sums, which reflects.
    pub fn interior(g: &IsoradialGraph) -> Region {
        let mask: Vec<bool> = (0..g.num_vertices()).map(|v| g.is_interior(v)).collect();
        Region::from_mask(g, &mask)
    }

    /// Vertices within primal graph distance `radius` of `center`.
    pub fn ball(g: &IsoradialGraph, center: usize, radius: u32) -> Region {
        let dist = g.graph_distances(center);
        let mask: Vec<bool> = dist.iter().map(|&d| d <= radius).collect();
        Region::from_mask(g, &mask)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Global ids, increasing.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn local(&self, v: usize) -> Option<usize> {
        match self.local.get(v) {
            Some(&i) if i != OUTSIDE => Some(i as usize),
            _ => None,
        }
    }

    pub fn contains(&self, v: usize) -> bool {
        self.local(v).is_some()
    }

    pub fn is_interior_local(&self, i: usize) -> bool {
        self.interior[i]
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.local(v).is_some_and(|i| self.interior[i])
    }
}

/// `Δ^m` restricted to a region, in local indices.
struct RegionOperator {
    diag: Vec<f64>,
    offsets: Vec<usize>,
    nbr: Vec<u32>,
    rho: Vec<f64>,
}

impl RegionOperator {
    fn new(w: &WeightedGraph, region: &Region) -> Self {
        let mut offsets = Vec::with_capacity(region.len() + 1);
        let mut nbr = Vec::new();
        let mut rho = Vec::new();
        offsets.push(0);
        for &v in region.vertices() {
            let (ns, rs) = w.weighted_neighbors(v);
            for (&y, &r) in ns.iter().zip(rs) {
                if let Some(j) = region.local(y as usize) {
                    nbr.push(j as u32);
                    rho.push(r);
                }
            }
            offsets.push(nbr.len());
        }
        let diag = region.vertices().iter().map(|&v| w.diag()[v]).collect();
        RegionOperator {
            diag,
            offsets,
            nbr,
            rho,
        }
    }

    fn apply(&self, f: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let r = self.offsets[i]..self.offsets[i + 1];
            let s: f64 = self.nbr[r.clone()]
                .iter()
                .zip(&self.rho[r])
                .map(|(&j, w)| w * f[j as usize])
                .sum();
            *o = self.diag[i] * f[i] - s;
        });
    }

    /// `(vP)(j) = Σ_i v(i) ρ(ij)/D(i)`; the graph is symmetric so this is a
    /// gather over the neighbors of `j`.
    fn transpose_step(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let r = self.offsets[j]..self.offsets[j + 1];
            *o = self.nbr[r.clone()]
                .iter()
                .zip(&self.rho[r])
                .map(|(&i, w)| w * v[i as usize] / self.diag[i as usize])
                .sum();
        });
    }

    fn conjugate_gradient(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut rr = dot(&r, &r);
        for it in 0..max_iter {
            if rr.sqrt() <= tol * bnorm {
                return Ok((x, it));
            }
            self.apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p.par_iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        }
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, max_iter));
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: rr.sqrt() / bnorm,
        })
    }
}

/// Fixed-size chunks summed in order, so the result does not depend on how
/// rayon schedules the work.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Conjugate gradient on `Δ^m Gr = δ`, then `U = Gr·D`.
    ConjugateGradient,
    /// Partial sums of `Σ_n P^n(x₀, ·)`.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative stopping tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-14,
            max_iter: 200_000,
        }
    }
}

/// `U(x₀, ·)` and `Gr(x₀, ·)` on a region, in the region's local order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenField {
    pub origin: usize,
    pub region: Region,
    pub values_u: Vec<f64>,
    pub values_gr: Vec<f64>,
    pub truncation_radius: Option<u32>,
    /// `max |Δ^m Gr − δ_{x₀}|` over the interior of the region.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl GreenField {
    pub fn gr(&self, v: usize) -> f64 {
        self.region.local(v).map_or(0.0, |i| self.values_gr[i])
    }

    pub fn u(&self, v: usize) -> f64 {
        self.region.local(v).map_or(0.0, |i| self.values_u[i])
    }

    /// `Gr(x₀, ·)` on all `n` vertices of the graph, zero off the region.
    pub fn gr_global(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &v) in self.region.vertices().iter().enumerate() {
            out[v] = self.values_gr[i];
        }
        out
    }

    pub fn u_global(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &v) in self.region.vertices().iter().enumerate() {
            out[v] = self.values_u[i];
        }
        out
    }
}

/// `√k′·nd(ε_ell/2 | k)`: the slowest decay of `Gr` per diamond step. It is
/// attained along the axes of the square lattice, so it is sharp.
pub fn decay_factor(p: &ElliptParams, epsilon: f64) -> f64 {
    let eps_ell = p.angle_scale() * epsilon;
    p.k_prime.sqrt() * nd(0.5 * eps_ell, p)
}

/// `k′·nd(ε_ell/2 | k)`, the rate usually quoted for the decay per diamond
/// step. It is smaller than the observed decay allows, so it is reported but
/// not used to size regions.
pub fn quoted_decay_factor(p: &ElliptParams, epsilon: f64) -> f64 {
    let eps_ell = p.angle_scale() * epsilon;
    p.k_prime * nd(0.5 * eps_ell, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRadius {
    pub radius: u32,
    /// `k = 0`: no exponential bound, `radius` is the supplied cap.
    pub capped: bool,
}

/// Smallest `R` with `decay_factor^R < tol`. The diamond distance between two
/// primal vertices is at least their graph distance, so `R` is a safe graph
/// radius.
pub fn truncation_radius(p: &ElliptParams, epsilon: f64, tol: f64, cap: u32) -> TruncationRadius {
    if tol >= 1.0 {
        return TruncationRadius {
            radius: 0,
            capped: false,
        };
    }
    if p.is_critical() {
        log::warn!("k = 0 has no exponential decay; truncation radius capped at {cap}");
        return TruncationRadius {
            radius: cap,
            capped: true,
        };
    }
    let q = decay_factor(p, epsilon);
    let r = (tol.ln() / q.ln()).floor() as u32 + 1;
    TruncationRadius {
        radius: r,
        capped: false,
    }
}

fn finish(
    w: &WeightedGraph,
    x0: usize,
    region: Region,
    op: &RegionOperator,
    gr: Vec<f64>,
    iterations: usize,
    method: SolveMethod,
) -> GreenField {
    let mut lap = vec![0.0; gr.len()];
    op.apply(&gr, &mut lap);
    let i0 = region.local(x0).unwrap();
    let residual = lap
        .iter()
        .enumerate()
        .filter(|(i, _)| region.is_interior_local(*i))
        .map(|(i, v)| (v - if i == i0 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let values_u = region
        .vertices()
        .iter()
        .zip(&gr)
        .map(|(&v, g)| g * w.diag()[v])
        .collect();
    GreenField {
        origin: x0,
        region,
        values_u,
        values_gr: gr,
        truncation_radius: None,
        residual,
        iterations,
        method,
    }
}

/// `U(x₀, ·)` and `Gr(x₀, ·)` with Dirichlet-zero data off `region`.
pub fn solve_potential(
    w: &WeightedGraph,
    x0: usize,
    region: Region,
    method: SolveMethod,
    opts: SolveOptions,
) -> Result<GreenField> {
    let i0 = region
        .local(x0)
        .ok_or_else(|| Error::Domain(format!("origin {x0} is not in the region")))?;
    let op = RegionOperator::new(w, &region);
    let n = region.len();
    match method {
        SolveMethod::ConjugateGradient => {
            let mut b = vec![0.0; n];
            b[i0] = 1.0;
            let (gr, it) = op.conjugate_gradient(&b, opts.tol, opts.max_iter)?;
            Ok(finish(w, x0, region, &op, gr, it, method))
        }
        SolveMethod::Neumann => {
            let kill = region
                .vertices()
                .iter()
                .map(|&v| w.mass2()[v] / w.diag()[v])
                .fold(f64::INFINITY, f64::min);
            if !(kill > 0.0) {
                return Err(Error::Refused(
                    "the Neumann series stopping rule needs positive masses".into(),
                ));
            }
            let mut term = vec![0.0; n];
            term[i0] = 1.0;
            let mut sum = term.clone();
            let mut next = vec![0.0; n];
            let mut it = 0;
            loop {
                if it >= opts.max_iter {
                    let rel = term.iter().sum::<f64>() / kill / max_abs(&sum);
                    return Err(Error::NoConvergence {
                        iterations: it,
                        residual: rel,
                    });
                }
                op.transpose_step(&term, &mut next);
                std::mem::swap(&mut term, &mut next);
                sum.par_iter_mut().zip(&term).for_each(|(s, t)| *s += t);
                it += 1;
                // The ℓ¹ mass of the remaining tail is at most ‖term‖₁/δ.
                let tail = term.iter().sum::<f64>() / kill;
                if tail <= opts.tol * max_abs(&sum) {
                    break;
                }
            }
            let gr = region
                .vertices()
                .iter()
                .zip(&sum)
                .map(|(&v, u)| u / w.diag()[v])
                .collect();
            Ok(finish(w, x0, region, &op, gr, it, method))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `max |U_cg − U_neumann| / max |U_cg|` over the interior.
    pub relative_difference: f64,
    pub cg_residual: f64,
    pub neumann_residual: f64,
    pub cg_iterations: usize,
    pub neumann_iterations: usize,
}

/// Runs both solvers on the same region and compares them on its interior.
pub fn cross_validate(w: &WeightedGraph, x0: usize, region: &Region) -> Result<CrossValidation> {
    let cg = solve_potential(w, x0, region.clone(), SolveMethod::ConjugateGradient, SolveOptions::default())?;
    let nm = solve_potential(
        w,
        x0,
        region.clone(),
        SolveMethod::Neumann,
        SolveOptions {
            tol: 1e-13,
            ..SolveOptions::default()
        },
    )?;
    let scale = max_abs(&cg.values_u);
    let diff = (0..region.len())
        .filter(|&i| region.is_interior_local(i))
        .map(|i| (cg.values_u[i] - nm.values_u[i]).abs())
        .fold(0.0, f64::max);
    Ok(CrossValidation {
        relative_difference: diff / scale,
        cg_residual: cg.residual,
        neumann_residual: nm.residual,
        cg_iterations: cg.iterations,
        neumann_iterations: nm.iterations,
    })
}

/// `Σ_y U(y, x) = D(x)·(Gr 1)(x)` for every `x` of the region (local order).
pub fn potential_column_sums(w: &WeightedGraph, region: &Region) -> Result<Vec<f64>> {
    let op = RegionOperator::new(w, region);
    let ones = vec![1.0; region.len()];
    let opts = SolveOptions::default();
    let (h, _) = op.conjugate_gradient(&ones, opts.tol, opts.max_iter)?;
    Ok(region
        .vertices()
        .iter()
        .zip(h)
        .map(|(&v, hv)| hv * w.diag()[v])
        .collect())
}

/// Parameters of the saddle-point asymptotics in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticGreenParams {
    pub direction: Vec<f64>,
    pub u0: f64,
    pub chi_u0: f64,
    pub chi2_u0: f64,
}

impl From<&DirectionProfile> for AsymptoticGreenParams {
    fn from(p: &DirectionProfile) -> Self {
        AsymptoticGreenParams {
            direction: p.s.clone(),
            u0: p.u_s,
            chi_u0: p.chi,
            chi2_u0: p.chi2,
        }
    }
}

/// `k′ e^{−n·θ(u₀)} / (2 √(2π ‖n‖₁ χ″(u₀)))` for a lift vector `n` whose
/// direction is the one of `profile` (in the original frame).
pub fn asymptotic_green(p: &ElliptParams, n: &[i32], profile: &DirectionProfile) -> Result<f64> {
    let norm: f64 = n.iter().map(|x| x.unsigned_abs() as f64).sum();
    if norm < 1.0 {
        return Err(Error::Domain("asymptotic formula needs ‖n‖₁ ≥ 1".into()));
    }
    let exponent: f64 = n
        .iter()
        .zip(&profile.orientation.flips)
        .zip(&profile.theta_us)
        .map(|((&nj, &flip), t)| if flip { -nj as f64 } else { nj as f64 } * t)
        .sum();
    Ok(p.k_prime * (-exponent).exp()
        / (2.0 * (2.0 * std::f64::consts::PI * norm * profile.chi2).sqrt()))
}

/// `i√k′ sc((u − α)/2)` for a step along `+e^{iᾱ}`; a step along
/// `−e^{iᾱ}` has `α + 2K` and gives the reciprocal.
fn exponential_factor(u: f64, alpha_bar: f64, sign: i8, p: &ElliptParams) -> Result<Complex64> {
    let v = 0.5 * (u - p.angle_scale() * alpha_bar);
    let i_sqrt_kp = Complex64::new(0.0, p.k_prime.sqrt());
    if sign > 0 {
        Ok(i_sqrt_kp * jacobi_ratio("sc", v, p)?)
    } else {
        Ok(1.0 / (i_sqrt_kp * jacobi_ratio("sc", v, p)?))
    }
}

/// `e_(x,y)(u)` along an explicit diamond path.
pub fn discrete_exponential_along(w: &WeightedGraph, path: &[usize], u: f64) -> Result<Complex64> {
    let g = w.graph();
    let p = w.params();
    let mut acc = Complex64::new(1.0, 0.0);
    for pair in path.windows(2) {
        let step = g
            .diamond_step(pair[0], pair[1])
            .ok_or_else(|| Error::Domain(format!("{} and {} are not diamond neighbors", pair[0], pair[1])))?;
        acc *= exponential_factor(u, g.palette()[step.direction], step.sign, p)?;
    }
    Ok(acc)
}

/// `e_(x,y)(u)` along one minimal diamond path between diamond vertices.
pub fn discrete_exponential(w: &WeightedGraph, x: usize, y: usize, u: f64) -> Result<Complex64> {
    let path = w
        .graph()
        .diamond_path(x, y)
        .ok_or_else(|| Error::Domain(format!("no diamond path from {x} to {y}")))?;
    discrete_exponential_along(w, &path, u)
}

/// `e_(x,y)(u)` from the lift alone: `Π_j f_j^{n_j(y) − n_j(x)}`.
pub fn discrete_exponential_lift(
    w: &WeightedGraph,
    lift: &SurfaceLift,
    x: usize,
    y: usize,
    u: f64,
) -> Result<Complex64> {
    let p = w.params();
    let mut acc = Complex64::new(1.0, 0.0);
    for (j, (a, b)) in lift.coords(x).iter().zip(lift.coords(y)).enumerate() {
        let n = b - a;
        if n != 0 {
            let f = exponential_factor(u, w.graph().palette()[j], 1, p)?;
            acc *= f.powi(n);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isograph::build_square_lattice;
    use std::sync::Arc;

    fn square(r: u32, k: f64) -> WeightedGraph {
        WeightedGraph::new(Arc::new(build_square_lattice(r).unwrap()), k).unwrap()
    }

    #[test]
    fn single_vertex_region() {
        let w = square(3, 0.5);
        let o = w.graph().origin();
        let region = Region::ball(w.graph(), o, 0);
        assert_eq!(region.len(), 1);
        for m in [SolveMethod::ConjugateGradient, SolveMethod::Neumann] {
            let f = solve_potential(&w, o, region.clone(), m, SolveOptions::default()).unwrap();
            assert!((f.u(o) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn solvers_agree_on_small_patch() {
        let w = square(12, 0.5);
        let o = w.graph().origin();
        let cv = cross_validate(&w, o, &Region::whole(w.graph())).unwrap();
        assert!(cv.relative_difference < 1e-9, "{cv:?}");
        assert!(cv.cg_residual < 1e-9);
    }

    #[test]
    fn truncation_radius_edge_cases() {
        let p = ElliptParams::new(0.5).unwrap();
        assert_eq!(truncation_radius(&p, 0.7, 1.0, 50).radius, 0);
        let r = truncation_radius(&p, std::f64::consts::FRAC_PI_4, 1e-12, 50).radius;
        let q = decay_factor(&p, std::f64::consts::FRAC_PI_4);
        assert!(q.powi(r as i32) < 1e-12 && q.powi(r as i32 - 1) >= 1e-12);
        let z = ElliptParams::new(0.0).unwrap();
        let t = truncation_radius(&z, 0.7, 1e-12, 50);
        assert!(t.capped && t.radius == 50);
    }

    #[test]
    fn discrete_exponential_basics() {
        let w = square(4, 0.5);
        let o = w.graph().origin();
        assert_eq!(discrete_exponential(&w, o, o, 0.3).unwrap(), Complex64::new(1.0, 0.0));
        let step = w.graph().diamond_neighbors(o)[0];
        let got = discrete_exponential(&w, o, step.to, 0.3).unwrap();
        let p = w.params();
        let alpha = p.angle_scale() * w.graph().palette()[step.direction];
        let sc = jacobi_ratio("sc", 0.5 * (0.3 - alpha), p).unwrap();
        let one = Complex64::new(0.0, p.k_prime.sqrt() * sc);
        let want = if step.sign > 0 { one } else { 1.0 / one };
        assert!((got - want).norm() < 1e-14);
    }
}
