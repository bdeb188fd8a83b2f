//! Patch builders. Both go through a common rhombus-list assembly: a tiling
//! vertex is an integer vector `K ∈ Z^d` placed at `Σ K_j e^{iᾱ_j}`, and the
//! tiling is 2-colored by the parity of `Σ K_j`. The class of the origin is
//! declared primal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::{FRAC_PI_4, PI};

use super::{DiamondEdge, IsoradialGraph, PrimalEdge};
use crate::error::{Error, Result};

/// One rhombus of a rhombic tiling: corners `base`, `base + e_j`,
/// `base + e_l`, `base + e_j + e_l` with `j < l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rhombus {
    pub base: Vec<i32>,
    pub j: usize,
    pub l: usize,
}

fn parity(k: &[i32]) -> i32 {
    k.iter().sum::<i32>().rem_euclid(2)
}

fn with_step(k: &[i32], j: usize) -> Vec<i32> {
    let mut out = k.to_vec();
    out[j] += 1;
    out
}

fn position(k: &[i32], palette: &[f64]) -> [f64; 2] {
    let mut p = [0.0, 0.0];
    for (kj, a) in k.iter().zip(palette) {
        p[0] += *kj as f64 * a.cos();
        p[1] += *kj as f64 * a.sin();
    }
    p
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Assembles an isoradial graph from the rhombi of a tiling patch.
///
/// `palette` must be sorted increasingly inside `[0, π)`. Rhombi not
/// connected (through primal edges) to the tiling vertex `origin` are dropped.
pub fn assemble_from_rhombi(
    palette: Vec<f64>,
    rhombi: &[Rhombus],
    origin: &[i32],
) -> Result<IsoradialGraph> {
    let d = palette.len();
    if palette.windows(2).any(|w| w[0] >= w[1]) || palette.iter().any(|a| !(0.0..PI).contains(a)) {
        return Err(Error::Construction("palette must be increasing inside [0, π)".into()));
    }
    let primal_parity = parity(origin);

    // Primal corners of each rhombus.
    let primal_pair = |r: &Rhombus| -> (Vec<i32>, Vec<i32>, bool) {
        if parity(&r.base) == primal_parity {
            (r.base.clone(), with_step(&with_step(&r.base, r.j), r.l), true)
        } else {
            (with_step(&r.base, r.j), with_step(&r.base, r.l), false)
        }
    };

    let mut primal_ids: BTreeMap<Vec<i32>, usize> = BTreeMap::new();
    for r in rhombi {
        if r.base.len() != d || r.j >= r.l || r.l >= d {
            return Err(Error::Construction("malformed rhombus".into()));
        }
        let (a, b, _) = primal_pair(r);
        primal_ids.entry(a).or_insert(0);
        primal_ids.entry(b).or_insert(0);
    }
    for (i, v) in primal_ids.values_mut().enumerate() {
        *v = i;
    }
    let origin_id = *primal_ids
        .get(origin)
        .ok_or_else(|| Error::Construction("origin is not a vertex of the patch".into()))?;

    let mut uf = UnionFind::new(primal_ids.len());
    for r in rhombi {
        let (a, b, _) = primal_pair(r);
        uf.union(primal_ids[&a], primal_ids[&b]);
    }
    let root = uf.find(origin_id);
    let kept: Vec<&Rhombus> = rhombi
        .iter()
        .filter(|r| {
            let (a, _, _) = primal_pair(r);
            uf.find(primal_ids[&a]) == root
        })
        .collect();

    // Renumber primal vertices of the kept component, and dual vertices.
    let mut primal: BTreeMap<Vec<i32>, usize> = BTreeMap::new();
    let mut dual: BTreeMap<Vec<i32>, usize> = BTreeMap::new();
    for r in &kept {
        let (a, b, base_primal) = primal_pair(r);
        primal.insert(a, 0);
        primal.insert(b, 0);
        let (c, e) = if base_primal {
            (with_step(&r.base, r.j), with_step(&r.base, r.l))
        } else {
            (r.base.clone(), with_step(&with_step(&r.base, r.j), r.l))
        };
        dual.insert(c, 0);
        dual.insert(e, 0);
    }
    for (i, v) in primal.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in dual.values_mut().enumerate() {
        *v = i;
    }
    // Translate so that the origin sits at the plane origin.
    let shift = position(origin, &palette);
    let place = |k: &Vec<i32>| {
        let p = position(k, &palette);
        [p[0] - shift[0], p[1] - shift[1]]
    };
    let vertices: Vec<[f64; 2]> = primal.keys().map(place).collect();
    let dual_vertices: Vec<[f64; 2]> = dual.keys().map(place).collect();

    let mut edges = Vec::with_capacity(kept.len());
    let mut diamond: HashSet<(usize, usize)> = HashSet::new();
    let mut diamond_edges = Vec::new();
    let mut push_diamond = |p: &Vec<i32>, q: &Vec<i32>, dir: usize, sign: i8| {
        let (pi, qi) = (primal[p], dual[q]);
        if diamond.insert((pi, qi)) {
            diamond_edges.push(DiamondEdge {
                primal: pi,
                dual: qi,
                direction: dir,
                sign,
            });
        }
    };
    for r in &kept {
        let phi = palette[r.l] - palette[r.j];
        let c00 = r.base.clone();
        let c10 = with_step(&c00, r.j);
        let c01 = with_step(&c00, r.l);
        let c11 = with_step(&c10, r.l);
        if parity(&c00) == primal_parity {
            edges.push(PrimalEdge {
                a: primal[&c00],
                b: primal[&c11],
                theta_bar: 0.5 * phi,
                alpha_bar: palette[r.j],
            });
            push_diamond(&c00, &c10, r.j, 1);
            push_diamond(&c00, &c01, r.l, 1);
            push_diamond(&c11, &c10, r.l, -1);
            push_diamond(&c11, &c01, r.j, -1);
        } else {
            edges.push(PrimalEdge {
                a: primal[&c10],
                b: primal[&c01],
                theta_bar: 0.5 * (PI - phi),
                alpha_bar: palette[r.l],
            });
            push_diamond(&c10, &c00, r.j, -1);
            push_diamond(&c10, &c11, r.l, 1);
            push_diamond(&c01, &c00, r.l, -1);
            push_diamond(&c01, &c11, r.j, 1);
        }
    }
    let origin_id = primal[origin];
    IsoradialGraph::from_parts(vertices, dual_vertices, edges, diamond_edges, palette, origin_id)
}

/// `Z²` as an isoradial graph: all primal vertices within graph distance
/// `radius` of the origin, circumradius 1 (lattice spacing `√2`).
pub fn build_square_lattice(radius: u32) -> Result<IsoradialGraph> {
    if radius < 1 {
        return Err(Error::Construction("square lattice radius must be ≥ 1".into()));
    }
    let r = radius as i32;
    let palette = vec![FRAC_PI_4, 3.0 * FRAC_PI_4];
    // Primal (a, b) sits at K = (a + b, b − a).
    let key = |a: i32, b: i32| vec![a + b, b - a];
    let inside = |a: i32, b: i32| a.abs() + b.abs() <= r;
    let mut rhombi = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if !inside(a, b) {
                continue;
            }
            let k = key(a, b);
            if inside(a + 1, b) {
                rhombi.push(Rhombus {
                    base: vec![k[0], k[1] - 1],
                    j: 0,
                    l: 1,
                });
            }
            if inside(a, b + 1) {
                rhombi.push(Rhombus { base: k, j: 0, l: 1 });
            }
        }
    }
    assemble_from_rhombi(palette, &rhombi, &[0, 0])
}

/// De Bruijn multigrid tiling with grid normals `e^{iπj/d}`, `j = 0..d`.
///
/// Every intersection of two grid lines gives one rhombus; rhombi whose
/// center lies within `radius` of the plane origin are kept. A third grid
/// line passing within `1e-9` of an intersection is rejected.
pub fn build_multigrid_tiling(d: usize, offsets: &[f64], radius: f64) -> Result<IsoradialGraph> {
    if d < 2 {
        return Err(Error::Construction(format!("multigrid needs d ≥ 2, got {d}")));
    }
    if offsets.len() != d {
        return Err(Error::Construction(format!(
            "expected {d} offsets, got {}",
            offsets.len()
        )));
    }
    if !(radius > 0.0) || offsets.iter().any(|o| !o.is_finite()) {
        return Err(Error::Construction("radius and offsets must be finite, radius > 0".into()));
    }
    let palette: Vec<f64> = (0..d).map(|j| PI * j as f64 / d as f64).collect();
    let normals: Vec<(f64, f64)> = palette.iter().map(|a| (a.cos(), a.sin())).collect();

    let grid_radius = 2.0 * radius / d as f64 + 3.0;
    let lines = grid_radius.ceil() as i32 + 1;
    let mut rhombi = Vec::new();
    let mut nearest: Option<(f64, Vec<i32>)> = None;

    for j in 0..d {
        for l in (j + 1)..d {
            let (a1, b1) = normals[j];
            let (a2, b2) = normals[l];
            let det = a1 * b2 - a2 * b1;
            for kj in -lines..=lines {
                for kl in -lines..=lines {
                    let cj = kj as f64 + offsets[j];
                    let cl = kl as f64 + offsets[l];
                    let x = (cj * b2 - cl * b1) / det;
                    let y = (a1 * cl - a2 * cj) / det;
                    if x.hypot(y) > grid_radius {
                        continue;
                    }
                    let mut base = vec![0i32; d];
                    for i in 0..d {
                        if i == j {
                            base[i] = kj;
                        } else if i == l {
                            base[i] = kl;
                        } else {
                            let t = x * normals[i].0 + y * normals[i].1 - offsets[i];
                            if (t - t.round()).abs() < 1e-9 {
                                return Err(Error::Construction(format!(
                                    "degenerate offsets: grids {j}, {l} and {i} meet near ({x:.6}, {y:.6})"
                                )));
                            }
                            base[i] = t.ceil() as i32;
                        }
                    }
                    let p = position(&base, &palette);
                    let cx = p[0] + 0.5 * (normals[j].0 + normals[l].0);
                    let cy = p[1] + 0.5 * (normals[j].1 + normals[l].1);
                    if cx.hypot(cy) > radius {
                        continue;
                    }
                    let r0 = p[0].hypot(p[1]);
                    if nearest.as_ref().map_or(true, |(best, _)| r0 < *best) {
                        nearest = Some((r0, base.clone()));
                    }
                    rhombi.push(Rhombus { base, j, l });
                }
            }
        }
    }
    let (_, origin) =
        nearest.ok_or_else(|| Error::Construction("patch radius too small for any rhombus".into()))?;

    // Pick the origin among interior tiling vertices if the nearest one is not.
    let g = assemble_from_rhombi(palette.clone(), &rhombi, &origin)?;
    if g.is_interior(g.origin()) {
        return Ok(g);
    }
    let mut counts: HashMap<Vec<i32>, usize> = HashMap::new();
    for r in &rhombi {
        for c in [
            r.base.clone(),
            with_step(&r.base, r.j),
            with_step(&r.base, r.l),
            with_step(&with_step(&r.base, r.j), r.l),
        ] {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut candidates: Vec<(f64, Vec<i32>)> = counts
        .keys()
        .map(|k| {
            let p = position(k, &palette);
            (p[0].hypot(p[1]), k.clone())
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    for (_, k) in candidates.into_iter().take(16) {
        let g = assemble_from_rhombi(palette.clone(), &rhombi, &k)?;
        if g.is_interior(g.origin()) {
            return Ok(g);
        }
    }
    Err(Error::Construction("no interior vertex near the patch center".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_vertex_counts() {
        // |a| + |b| ≤ R has 2R² + 2R + 1 points.
        for r in 1..6u32 {
            let g = build_square_lattice(r).unwrap();
            assert_eq!(g.num_vertices() as u32, 2 * r * r + 2 * r + 1);
        }
        assert!(build_square_lattice(0).is_err());
    }

    #[test]
    fn square_positions_are_scaled_integers() {
        let g = build_square_lattice(3).unwrap();
        let o = g.vertices()[g.origin()];
        assert_eq!(o, [0.0, 0.0]);
        for p in g.vertices() {
            let a = p[0] / 2f64.sqrt();
            let b = p[1] / 2f64.sqrt();
            assert!((a - a.round()).abs() < 1e-12 && (b - b.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn multigrid_d2_is_square() {
        let g = build_multigrid_tiling(2, &[0.3, 0.6], 10.0).unwrap();
        for e in g.edges() {
            assert!((e.theta_bar - FRAC_PI_4).abs() < 1e-12);
        }
        assert!((g.epsilon() - FRAC_PI_4).abs() < 1e-12);
        let interior = (0..g.num_vertices()).filter(|&v| g.is_interior(v));
        for v in interior {
            assert_eq!(g.degree(v), 4);
        }
    }

    #[test]
    fn multigrid_rejects_triple_points() {
        // all offsets zero: every grid passes through the plane origin
        let err = build_multigrid_tiling(5, &[0.0; 5], 6.0).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
        assert!(build_multigrid_tiling(5, &[0.1, 0.2], 6.0).is_err());
    }

    #[test]
    fn multigrid_d5_half_angles() {
        let g = build_multigrid_tiling(5, &[0.11, 0.23, 0.37, 0.41, 0.17], 12.0).unwrap();
        let angles = g.distinct_half_angles(1e-9);
        let allowed = [PI / 10.0, PI / 5.0, 3.0 * PI / 10.0, 2.0 * PI / 5.0];
        for a in &angles {
            assert!(allowed.iter().any(|b| (a - b).abs() < 1e-9), "unexpected angle {a}");
        }
        assert!((g.epsilon() - PI / 10.0).abs() < 1e-9);
        assert!(g.is_interior(g.origin()));
    }
}
