use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::IsoradialGraph;
use crate::error::{Error, Result};

/// Coordinates of every diamond vertex on the monotone surface `S ⊂ Z^d`,
/// relative to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceLift {
    d: usize,
    coords: Vec<i32>,
    norm1: Vec<u32>,
}

impl SurfaceLift {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.norm1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm1.is_empty()
    }

    /// `n(v)` for a diamond vertex id (primal ids are diamond ids).
    pub fn coords(&self, v: usize) -> &[i32] {
        &self.coords[v * self.d..(v + 1) * self.d]
    }

    /// `‖n(v)‖₁`.
    pub fn norm1(&self, v: usize) -> u32 {
        self.norm1[v]
    }

    /// Reduced coordinates `n(v)/‖n(v)‖₁`; `None` at the origin.
    pub fn reduced(&self, v: usize) -> Option<Vec<f64>> {
        let n = self.norm1[v];
        (n > 0).then(|| self.coords(v).iter().map(|&c| c as f64 / n as f64).collect())
    }
}

/// Breadth-first lift of the diamond graph from the origin, checking that
/// every cycle closes (zero holonomy).
pub fn lift_coordinates(g: &IsoradialGraph) -> Result<SurfaceLift> {
    let d = g.d();
    let total = g.num_diamond_vertices();
    let mut coords = vec![0i32; total * d];
    let mut seen = vec![false; total];
    let origin = g.origin();
    seen[origin] = true;
    let mut queue = VecDeque::from([origin]);
    while let Some(v) = queue.pop_front() {
        for step in g.diamond_neighbors(v) {
            let w = step.to;
            let mut next: Vec<i32> = coords[v * d..(v + 1) * d].to_vec();
            next[step.direction] += step.sign as i32;
            if seen[w] {
                if coords[w * d..(w + 1) * d] != next[..] {
                    return Err(Error::Structural(format!(
                        "non-zero holonomy between diamond vertices {v} and {w}"
                    )));
                }
            } else {
                seen[w] = true;
                coords[w * d..(w + 1) * d].copy_from_slice(&next);
                queue.push_back(w);
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::Structural(format!("diamond vertex {v} unreachable from origin")));
    }
    let norm1 = coords
        .chunks(d)
        .map(|c| c.iter().map(|x| x.unsigned_abs()).sum())
        .collect();
    Ok(SurfaceLift { d, coords, norm1 })
}

/// `π(x) = Σ_j x_j e^{iᾱ_j}`.
pub fn project(x: &[f64], palette: &[f64]) -> Complex64 {
    x.iter()
        .zip(palette)
        .map(|(xj, a)| Complex64::from_polar(*xj, *a))
        .sum()
}

/// [`project`] for integer lift vectors.
pub fn project_int(x: &[i32], palette: &[f64]) -> Complex64 {
    x.iter()
        .zip(palette)
        .map(|(xj, a)| Complex64::from_polar(*xj as f64, *a))
        .sum()
}
