//! Quasicrystalline isoradial graphs stored as finite patches.
//!
//! A patch keeps the primal graph `G` (the vertices that carry sand), the
//! dual vertices (face circumcenters) and the diamond graph `G◇` whose unit
//! rhombi have the primal edges as one diagonal. Diamond edges point in one
//! of `d` palette directions `ᾱ_j ∈ [0, π)` with a sign.
//!
//! Diamond vertex ids: primal vertex `v` is diamond vertex `v`; dual vertex
//! `f` is diamond vertex `num_vertices() + f`.

mod build;
mod diagnostics;
mod lift;

pub use build::{build_multigrid_tiling, build_square_lattice, Rhombus};
pub use diagnostics::{
    admissible_directions_estimate, angle_bin, bilipschitz_constants, bin_center,
    binned_directions, check_asymptotic_flatness, direction_set_hausdorff, BilipschitzReport, FlatnessBin, FlatnessReport,
};
pub use lift::{lift_coordinates, project, project_int, SurfaceLift};

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric tolerance used by the construction checks.
pub const GEOM_TOL: f64 = 1e-9;

/// A primal edge: the primal diagonal of one diamond rhombus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalEdge {
    pub a: usize,
    pub b: usize,
    /// Rhombus half-angle at the primal endpoints.
    pub theta_bar: f64,
    /// Direction of the rhombus side leaving `a` clockwise from the edge.
    pub alpha_bar: f64,
}

/// A diamond edge between a primal and a dual vertex:
/// `pos(dual) − pos(primal) = sign · e^{i ᾱ_direction}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiamondEdge {
    pub primal: usize,
    pub dual: usize,
    pub direction: usize,
    pub sign: i8,
}

/// Neighbor entry of the diamond adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiamondStep {
    pub to: usize,
    pub direction: usize,
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct IsoradialGraph {
    vertices: Vec<[f64; 2]>,
    dual_vertices: Vec<[f64; 2]>,
    edges: Vec<PrimalEdge>,
    diamond_edges: Vec<DiamondEdge>,
    palette: Vec<f64>,
    epsilon: f64,
    origin: usize,

    adj_offsets: Vec<usize>,
    adj: Vec<(u32, u32)>,
    diamond_offsets: Vec<usize>,
    diamond_adj: Vec<DiamondStep>,
    interior: Vec<bool>,
    depth: Vec<u32>,
}

impl IsoradialGraph {
    /// Assembles a graph from raw parts and derives adjacency, interior flags
    /// and boundary depths. Runs the structural checks.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        dual_vertices: Vec<[f64; 2]>,
        edges: Vec<PrimalEdge>,
        diamond_edges: Vec<DiamondEdge>,
        palette: Vec<f64>,
        origin: usize,
    ) -> Result<Self> {
        let n = vertices.len();
        if origin >= n {
            return Err(Error::Construction(format!("origin {origin} out of range")));
        }
        if palette.is_empty() {
            return Err(Error::Construction("empty direction palette".into()));
        }
        let epsilon = edges
            .iter()
            .map(|e| e.theta_bar.min(FRAC_PI_2 - e.theta_bar))
            .fold(f64::INFINITY, f64::min);

        let mut degree = vec![0usize; n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::Construction(format!("bad edge {}-{}", e.a, e.b)));
            }
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let adj_offsets = prefix_offsets(&degree);
        let mut fill = adj_offsets.clone();
        let mut adj = vec![(0u32, 0u32); adj_offsets[n]];
        for (id, e) in edges.iter().enumerate() {
            adj[fill[e.a]] = (e.b as u32, id as u32);
            fill[e.a] += 1;
            adj[fill[e.b]] = (e.a as u32, id as u32);
            fill[e.b] += 1;
        }

        let total = n + dual_vertices.len();
        let mut ddeg = vec![0usize; total];
        for de in &diamond_edges {
            if de.primal >= n || de.dual >= dual_vertices.len() || de.direction >= palette.len() {
                return Err(Error::Construction("diamond edge out of range".into()));
            }
            ddeg[de.primal] += 1;
            ddeg[n + de.dual] += 1;
        }
        let diamond_offsets = prefix_offsets(&ddeg);
        let mut dfill = diamond_offsets.clone();
        let mut diamond_adj = vec![
            DiamondStep {
                to: 0,
                direction: 0,
                sign: 1
            };
            diamond_offsets[total]
        ];
        for de in &diamond_edges {
            let d = n + de.dual;
            diamond_adj[dfill[de.primal]] = DiamondStep {
                to: d,
                direction: de.direction,
                sign: de.sign,
            };
            dfill[de.primal] += 1;
            diamond_adj[dfill[d]] = DiamondStep {
                to: de.primal,
                direction: de.direction,
                sign: -de.sign,
            };
            dfill[d] += 1;
        }

        let mut angle_sum = vec![0.0f64; n];
        for e in &edges {
            angle_sum[e.a] += 2.0 * e.theta_bar;
            angle_sum[e.b] += 2.0 * e.theta_bar;
        }
        let interior: Vec<bool> = angle_sum
            .iter()
            .map(|s| (s - 2.0 * PI).abs() < 1e-7)
            .collect();

        let mut g = IsoradialGraph {
            vertices,
            dual_vertices,
            edges,
            diamond_edges,
            palette,
            epsilon,
            origin,
            adj_offsets,
            adj,
            diamond_offsets,
            diamond_adj,
            interior,
            depth: Vec::new(),
        };
        g.depth = g.boundary_depths();
        g.check_geometry()?;
        Ok(g)
    }

    fn boundary_depths(&self) -> Vec<u32> {
        let n = self.vertices.len();
        let mut depth = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for v in 0..n {
            if !self.interior[v] {
                depth[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for (w, _) in self.neighbors(v) {
                if depth[w] == u32::MAX {
                    depth[w] = depth[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        depth
    }

    /// Unit rhombi, unit circumradius and the angle bound.
    pub fn check_geometry(&self) -> Result<()> {
        for de in &self.diamond_edges {
            let p = self.vertices[de.primal];
            let q = self.dual_vertices[de.dual];
            let alpha = self.palette[de.direction];
            let s = de.sign as f64;
            let dx = q[0] - p[0] - s * alpha.cos();
            let dy = q[1] - p[1] - s * alpha.sin();
            if dx.hypot(dy) > GEOM_TOL {
                return Err(Error::Structural(format!(
                    "diamond edge {}->{} is not the unit step of direction {}",
                    de.primal, de.dual, de.direction
                )));
            }
        }
        for (id, e) in self.edges.iter().enumerate() {
            if !(e.theta_bar > 0.0 && e.theta_bar < FRAC_PI_2) {
                return Err(Error::Structural(format!("edge {id}: half-angle {}", e.theta_bar)));
            }
            let len = dist(self.vertices[e.a], self.vertices[e.b]);
            if (len - 2.0 * e.theta_bar.cos()).abs() > GEOM_TOL {
                return Err(Error::Structural(format!(
                    "edge {id}: length {len} does not match rhombus half-angle {}",
                    e.theta_bar
                )));
            }
            if e.theta_bar < self.epsilon - 1e-12 || e.theta_bar > FRAC_PI_2 - self.epsilon + 1e-12 {
                return Err(Error::Structural(format!("edge {id} violates the angle bound")));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_dual_vertices(&self) -> usize {
        self.dual_vertices.len()
    }

    pub fn num_diamond_vertices(&self) -> usize {
        self.vertices.len() + self.dual_vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn dual_vertices(&self) -> &[[f64; 2]] {
        &self.dual_vertices
    }

    pub fn edges(&self) -> &[PrimalEdge] {
        &self.edges
    }

    pub fn diamond_edges(&self) -> &[DiamondEdge] {
        &self.diamond_edges
    }

    /// Diamond directions `ᾱ_1..ᾱ_d`, each in `[0, π)`.
    pub fn palette(&self) -> &[f64] {
        &self.palette
    }

    pub fn d(&self) -> usize {
        self.palette.len()
    }

    /// Angle-bound constant: every `θ̄_e ∈ [ε, π/2 − ε]`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn position(&self, v: usize) -> Complex64 {
        let p = self.vertices[v];
        Complex64::new(p[0], p[1])
    }

    /// Plane position of a diamond vertex (primal or dual).
    pub fn diamond_position(&self, v: usize) -> Complex64 {
        let n = self.vertices.len();
        let p = if v < n {
            self.vertices[v]
        } else {
            self.dual_vertices[v - n]
        };
        Complex64::new(p[0], p[1])
    }

    /// Primal neighbors of `v` as `(neighbor, edge id)`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]]
            .iter()
            .map(|&(w, e)| (w as usize, e as usize))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_offsets[v + 1] - self.adj_offsets[v]
    }

    pub(crate) fn adjacency(&self) -> (&[usize], &[(u32, u32)]) {
        (&self.adj_offsets, &self.adj)
    }

    pub fn diamond_neighbors(&self, v: usize) -> &[DiamondStep] {
        &self.diamond_adj[self.diamond_offsets[v]..self.diamond_offsets[v + 1]]
    }

    /// A primal vertex is interior when its rhombi close up around it.
    pub fn is_interior(&self, v: usize) -> bool {
        self.interior[v]
    }

    /// Primal graph distance to the nearest non-interior vertex.
    pub fn boundary_depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    /// Breadth-first primal graph distances from `src`; `u32::MAX` if unreachable.
    pub fn graph_distances(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.vertices.len()];
        let mut queue = VecDeque::from([src]);
        dist[src] = 0;
        while let Some(v) = queue.pop_front() {
            for (w, _) in self.neighbors(v) {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// A shortest diamond path from `from` to `to`, endpoints included.
    pub fn diamond_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        self.diamond_path_with(from, to, |_, steps| steps.to_vec())
    }

    /// Shortest diamond path where `reorder` may permute each neighbor list;
    /// different permutations produce different minimal paths.
    pub fn diamond_path_with<F>(&self, from: usize, to: usize, mut reorder: F) -> Option<Vec<usize>>
    where
        F: FnMut(usize, &[DiamondStep]) -> Vec<DiamondStep>,
    {
        let total = self.num_diamond_vertices();
        let mut parent = vec![usize::MAX; total];
        parent[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for step in reorder(v, self.diamond_neighbors(v)) {
                if parent[step.to] == usize::MAX {
                    parent[step.to] = v;
                    queue.push_back(step.to);
                }
            }
        }
        if parent[to] == usize::MAX {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// The diamond step joining two adjacent diamond vertices.
    pub fn diamond_step(&self, from: usize, to: usize) -> Option<DiamondStep> {
        self.diamond_neighbors(from).iter().copied().find(|s| s.to == to)
    }

    /// Number of distinct half-angles, up to `tol`.
    pub fn distinct_half_angles(&self, tol: f64) -> Vec<f64> {
        let mut angles: Vec<f64> = self.edges.iter().map(|e| e.theta_bar).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < tol);
        angles
    }
}

fn prefix_offsets(counts: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(counts.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for c in counts {
        acc += c;
        offsets.push(acc);
    }
    offsets
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Which builder produced a graph, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum GraphSpec {
    Square { radius: u32 },
    Multigrid { d: usize, offsets: Vec<f64>, radius: f64 },
}

impl GraphSpec {
    pub fn build(&self) -> Result<IsoradialGraph> {
        match self {
            GraphSpec::Square { radius } => build_square_lattice(*radius),
            GraphSpec::Multigrid { d, offsets, radius } => {
                build_multigrid_tiling(*d, offsets, *radius)
            }
        }
    }

    /// Same builder at a larger size.
    pub fn grown(&self, factor: f64) -> GraphSpec {
        match self {
            GraphSpec::Square { radius } => GraphSpec::Square {
                radius: ((*radius as f64) * factor).ceil() as u32,
            },
            GraphSpec::Multigrid { d, offsets, radius } => GraphSpec::Multigrid {
                d: *d,
                offsets: offsets.clone(),
                radius: radius * factor,
            },
        }
    }

    /// Inradius of the patch in plane units.
    pub fn plane_radius(&self) -> f64 {
        match self {
            GraphSpec::Square { radius } => *radius as f64,
            GraphSpec::Multigrid { radius, .. } => *radius,
        }
    }

    pub fn with_plane_radius(&self, r: f64) -> GraphSpec {
        match self {
            GraphSpec::Square { .. } => GraphSpec::Square {
                radius: r.ceil() as u32,
            },
            GraphSpec::Multigrid { d, offsets, .. } => GraphSpec::Multigrid {
                d: *d,
                offsets: offsets.clone(),
                radius: r,
            },
        }
    }
}
