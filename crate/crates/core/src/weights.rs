//! Elliptic conductances and masses, the massive Laplacian `Δ^m`, the
//! operator `T = −Δ^m D⁻¹` and the killed random walk.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{elliptic_angle, func_a, sc, ElliptParams};
use crate::error::{Error, Result};
use crate::isograph::IsoradialGraph;

/// `ρ = sc(θ | k)` with `θ = (2K/π)·θ̄`.
pub fn conductance(theta_bar: f64, p: &ElliptParams) -> f64 {
    if p.is_critical() {
        return theta_bar.tan();
    }
    sc(elliptic_angle(theta_bar, p), p)
}

/// Contribution `A(θ | k) − sc(θ | k)` of one incident edge to the mass.
pub fn mass_term(theta_bar: f64, p: &ElliptParams) -> Result<f64> {
    if p.is_critical() {
        return Ok(0.0);
    }
    let theta = elliptic_angle(theta_bar, p);
    Ok(func_a(theta, p)? - sc(theta, p))
}

/// `m²(x)` summed over the edges of `g` incident to `v`.
pub fn vertex_mass_squared(g: &IsoradialGraph, v: usize, p: &ElliptParams) -> Result<f64> {
    g.neighbors(v)
        .map(|(_, e)| mass_term(g.edges()[e].theta_bar, p))
        .sum()
}

/// A patch equipped with the weights of modulus `k`.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    graph: Arc<IsoradialGraph>,
    params: ElliptParams,
    rho: Vec<f64>,
    mass2: Vec<f64>,
    diag: Vec<f64>,
    offsets: Vec<usize>,
    nbr: Vec<u32>,
    nbr_rho: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(graph: Arc<IsoradialGraph>, k: f64) -> Result<Self> {
        let params = ElliptParams::new(k)?;
        // Few distinct half-angles: evaluate each once.
        let mut cache: Vec<(f64, f64, f64)> = Vec::new();
        let mut lookup = |t: f64| -> Result<(f64, f64)> {
            if let Some(&(_, r, m)) = cache.iter().find(|c| c.0 == t) {
                return Ok((r, m));
            }
            let r = conductance(t, &params);
            let m = mass_term(t, &params)?;
            cache.push((t, r, m));
            Ok((r, m))
        };
        let n = graph.num_vertices();
        let mut rho = Vec::with_capacity(graph.edges().len());
        let mut mass2 = vec![0.0; n];
        for e in graph.edges() {
            let (r, m) = lookup(e.theta_bar)?;
            rho.push(r);
            mass2[e.a] += m;
            mass2[e.b] += m;
        }
        let (offsets, adj) = graph.adjacency();
        let offsets = offsets.to_vec();
        let nbr: Vec<u32> = adj.iter().map(|&(w, _)| w).collect();
        let nbr_rho: Vec<f64> = adj.iter().map(|&(_, e)| rho[e as usize]).collect();
        let diag = (0..n)
            .map(|v| nbr_rho[offsets[v]..offsets[v + 1]].iter().sum::<f64>() + mass2[v])
            .collect();
        Ok(WeightedGraph {
            graph,
            params,
            rho,
            mass2,
            diag,
            offsets,
            nbr,
            nbr_rho,
        })
    }

    pub fn graph(&self) -> &IsoradialGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<IsoradialGraph> {
        &self.graph
    }

    pub fn params(&self) -> &ElliptParams {
        &self.params
    }

    pub fn k(&self) -> f64 {
        self.params.k
    }

    pub fn num_vertices(&self) -> usize {
        self.diag.len()
    }

    /// Conductance per primal edge id.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mass2(&self) -> &[f64] {
        &self.mass2
    }

    /// `D(x) = Σ_z ρ(xz) + m²(x)` over the edges present in the patch.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Neighbors of `v` with the conductance of the joining edge.
    #[inline]
    pub fn weighted_neighbors(&self, v: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[v]..self.offsets[v + 1];
        (&self.nbr[r.clone()], &self.nbr_rho[r])
    }

    /// `(Δ^m f)(x) = D(x) f(x) − Σ_y ρ(xy) f(y)`.
    pub fn laplacian_apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.laplacian_apply_into(f, &mut out);
        out
    }

    pub fn laplacian_apply_into(&self, f: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(x, o)| {
            let (nbr, rho) = self.weighted_neighbors(x);
            let s: f64 = nbr.iter().zip(rho).map(|(&y, r)| r * f[y as usize]).sum();
            *o = self.diag[x] * f[x] - s;
        });
    }

    /// `(Tf)(x) = Σ_y ρ(xy) f(y)/D(y) − f(x)`.
    pub fn operator_t_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len())
            .into_par_iter()
            .map(|x| {
                let (nbr, rho) = self.weighted_neighbors(x);
                let s: f64 = nbr
                    .iter()
                    .zip(rho)
                    .map(|(&y, r)| r * f[y as usize] / self.diag[y as usize])
                    .sum();
                s - f[x]
            })
            .collect()
    }

    /// One-step law of the killed walk from `x`.
    pub fn transition_kernel(&self, x: usize) -> TransitionKernel {
        let d = self.diag[x];
        let (nbr, rho) = self.weighted_neighbors(x);
        TransitionKernel {
            steps: nbr.iter().zip(rho).map(|(&y, r)| (y as usize, r / d)).collect(),
            kill: self.mass2[x] / d,
        }
    }

    /// `ε` of the underlying graph in elliptic units.
    pub fn epsilon_elliptic(&self) -> f64 {
        elliptic_angle(self.graph.epsilon(), &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    pub steps: Vec<(usize, f64)>,
    pub kill: f64,
}

impl TransitionKernel {
    pub fn total(&self) -> f64 {
        self.steps.iter().map(|(_, p)| p).sum::<f64>() + self.kill
    }
}

/// Constants entering the threshold sandwich, measured on the patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    pub epsilon: f64,
    pub c: f64,
    pub c_prime: f64,
    pub delta: f64,
    /// Bound on `Σ_y U(y, x)` actually used (the smaller of the two below).
    pub a: f64,
    pub a_measured: f64,
    /// `c′/(c δ)`, the geometric-series bound.
    pub a_geometric: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `k = 0`: no killing, the threshold theory does not apply.
    pub degenerate: bool,
}

/// Model constants from the weights and the measured potential column sums
/// `max_x Σ_y U(y, x)`.
pub fn compute_model_bounds(w: &WeightedGraph, a_measured: f64) -> ModelBounds {
    let c = w.diag.iter().copied().fold(f64::INFINITY, f64::min);
    let c_prime = w.diag.iter().copied().fold(0.0, f64::max);
    let delta = w
        .mass2
        .iter()
        .zip(&w.diag)
        .map(|(m, d)| m / d)
        .fold(f64::INFINITY, f64::min);
    let degenerate = w.params.is_critical() || delta <= 0.0;
    let a_geometric = if degenerate {
        f64::INFINITY
    } else {
        c_prime / (c * delta)
    };
    let a = a_measured.min(a_geometric);
    ModelBounds {
        epsilon: w.graph.epsilon(),
        c,
        c_prime,
        delta,
        a,
        a_measured,
        a_geometric,
        alpha: c_prime * a,
        beta: c,
        degenerate,
    }
}

impl ModelBounds {
    pub fn require_massive(&self) -> Result<()> {
        if self.degenerate {
            return Err(Error::Refused("threshold bounds need k > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isograph::build_square_lattice;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    fn square(r: u32, k: f64) -> WeightedGraph {
        WeightedGraph::new(Arc::new(build_square_lattice(r).unwrap()), k).unwrap()
    }

    #[test]
    fn critical_weights_are_tangents() {
        let p = ElliptParams::new(0.0).unwrap();
        assert!((conductance(FRAC_PI_4, &p) - 1.0).abs() < 1e-15);
        assert!((conductance(FRAC_PI_6, &p) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let w = square(3, 0.0);
        assert!(w.mass2().iter().all(|&m| m == 0.0));
        assert_eq!(w.transition_kernel(w.graph().origin()).kill, 0.0);
    }

    #[test]
    fn square_lattice_weights_at_k_half() {
        let w = square(4, 0.5);
        let p = w.params().clone();
        let rho = conductance(FRAC_PI_4, &p);
        assert!((rho - 1.0 / p.k_prime.sqrt()).abs() < 1e-13);
        let o = w.graph().origin();
        let want = 4.0 * mass_term(FRAC_PI_4, &p).unwrap();
        assert!((w.mass2()[o] - want).abs() < 1e-14);
        assert!(w.mass2().iter().all(|&m| m > 0.0));
        let t = w.transition_kernel(o);
        assert!((t.total() - 1.0).abs() < 1e-14);
        assert!(t.steps.iter().all(|(_, q)| (q - t.steps[0].1).abs() < 1e-15));
    }

    #[test]
    fn laplacian_of_constant_is_mass() {
        let w = square(4, 0.3);
        let f = vec![2.5; w.num_vertices()];
        let lf = w.laplacian_apply(&f);
        for (x, v) in lf.iter().enumerate() {
            assert!((v - 2.5 * w.mass2()[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_flag_critical_case() {
        let w = square(3, 0.0);
        let b = compute_model_bounds(&w, 10.0);
        assert!(b.degenerate);
        assert!(b.require_massive().is_err());
        let w = square(3, 0.5);
        let b = compute_model_bounds(&w, 1e9);
        assert!(!b.degenerate && b.delta > 0.0);
        assert_eq!(b.a, b.a_geometric);
        assert_eq!(b.beta, b.c);
    }
}
