//! The leaky abelian sandpile: `N` grains at `x₀`, a site with at least
//! `D(x)` grains topples by sending `ρ(xy)` to each neighbor and losing
//! `m²(x)`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{potential_column_sums, solve_potential, GreenField, Region, SolveMethod, SolveOptions};
use crate::isograph::{angle_bin, bin_center, GraphSpec, IsoradialGraph, SurfaceLift};
use crate::weights::{compute_model_bounds, ModelBounds, WeightedGraph};

/// Vertices closer than this (in graph distance) to the patch boundary may
/// not topple.
pub const DEFAULT_MARGIN: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandpileState {
    pub n_grains: f64,
    pub x0: usize,
    pub amounts: Vec<f64>,
    /// `u(x) = topples(x)·D(x)`.
    pub odometer: Vec<f64>,
    pub topples: Vec<u64>,
}

impl SandpileState {
    pub fn total_topples(&self) -> u64 {
        self.topples.iter().sum()
    }

    /// `|Σ amounts − (N − Σ topples·m²)|`.
    pub fn mass_balance_error(&self, w: &WeightedGraph) -> f64 {
        let sand: f64 = self.amounts.iter().sum();
        let lost: f64 = self
            .topples
            .iter()
            .zip(w.mass2())
            .map(|(&t, m)| t as f64 * m)
            .sum();
        (sand - (self.n_grains - lost)).abs()
    }

    /// First vertex with `amounts(x) ≥ D(x)`, if any.
    pub fn first_unstable(&self, w: &WeightedGraph) -> Option<usize> {
        self.amounts.iter().zip(w.diag()).position(|(s, d)| s >= d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizeOptions {
    pub margin: u32,
    /// Topple `⌊s/D⌋` times per pop instead of once.
    pub batched: bool,
}

impl Default for StabilizeOptions {
    fn default() -> Self {
        StabilizeOptions {
            margin: DEFAULT_MARGIN,
            batched: false,
        }
    }
}

fn check_inputs(w: &WeightedGraph, n: f64, x0: usize) -> Result<u64> {
    if w.params().is_critical() {
        return Err(Error::Refused("the sandpile needs k > 0 to terminate".into()));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("grain count {n} must be finite and ≥ 0")));
    }
    if x0 >= w.num_vertices() {
        return Err(Error::Domain(format!("origin {x0} out of range")));
    }
    let min_mass = w.mass2().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_mass > 0.0) {
        return Err(Error::Refused("a vertex has zero mass".into()));
    }
    Ok((n / min_mass).floor() as u64 + 1)
}

fn finish(w: &WeightedGraph, n: f64, x0: usize, amounts: Vec<f64>, topples: Vec<u64>) -> SandpileState {
    let odometer = topples
        .iter()
        .zip(w.diag())
        .map(|(&t, d)| t as f64 * d)
        .collect();
    SandpileState {
        n_grains: n,
        x0,
        amounts,
        odometer,
        topples,
    }
}

/// Number of topples that brings `s` below `d`.
#[inline]
fn batch_count(s: f64, d: f64) -> u64 {
    let mut t = (s / d).floor() as u64;
    if s - t as f64 * d < 0.0 {
        t -= 1;
    }
    if s - t as f64 * d >= d {
        t += 1;
    }
    t
}

/// Sequential stabilization with a FIFO queue of unstable sites.
pub fn stabilize(w: &WeightedGraph, n: f64, x0: usize, opts: StabilizeOptions) -> Result<SandpileState> {
    let cap = check_inputs(w, n, x0)?;
    let nv = w.num_vertices();
    let mut amounts = vec![0.0; nv];
    let mut topples = vec![0u64; nv];
    amounts[x0] = n;
    let mut total = 0;
    fifo(w, &mut amounts, &mut topples, &[x0], opts, cap, &mut total)?;
    settle(w, n, x0, opts.margin, cap, topples, total)
}

fn fifo(
    w: &WeightedGraph,
    amounts: &mut [f64],
    topples: &mut [u64],
    start: &[usize],
    opts: StabilizeOptions,
    cap: u64,
    total: &mut u64,
) -> Result<()> {
    let g = w.graph();
    let diag = w.diag();
    let mut queued = vec![false; amounts.len()];
    let mut queue = VecDeque::new();
    for &x in start {
        if amounts[x] >= diag[x] && !queued[x] {
            queued[x] = true;
            queue.push_back(x);
        }
    }
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        if amounts[v] < diag[v] {
            continue;
        }
        if g.boundary_depth(v) < opts.margin {
            return Err(Error::RegionTooSmall {
                vertex: v,
                depth: g.boundary_depth(v),
            });
        }
        let t = if opts.batched { batch_count(amounts[v], diag[v]) } else { 1 };
        amounts[v] -= t as f64 * diag[v];
        topples[v] += t;
        *total += t;
        if *total > cap {
            return Err(Error::NoConvergence {
                iterations: *total as usize,
                residual: amounts[v],
            });
        }
        let (nbr, rho) = w.weighted_neighbors(v);
        for (&y, r) in nbr.iter().zip(rho) {
            let y = y as usize;
            amounts[y] += t as f64 * r;
            if !queued[y] && amounts[y] >= diag[y] {
                queued[y] = true;
                queue.push_back(y);
            }
        }
        if !queued[v] && amounts[v] >= diag[v] {
            queued[v] = true;
            queue.push_back(v);
        }
    }
    Ok(())
}

/// `N δ_{x₀}(x) + Σ_y t(y) ρ(xy) − t(x) D(x)`, summed in a fixed order.
fn canonical_amounts(w: &WeightedGraph, n: f64, x0: usize, topples: &[u64]) -> Vec<f64> {
    let diag = w.diag();
    (0..topples.len())
        .into_par_iter()
        .map(|x| {
            let (nbr, rho) = w.weighted_neighbors(x);
            let gain: f64 = nbr
                .iter()
                .zip(rho)
                .map(|(&y, r)| topples[y as usize] as f64 * r)
                .sum();
            let s0 = if x == x0 { n } else { 0.0 };
            (s0 - topples[x] as f64 * diag[x]) + gain
        })
        .collect()
}

/// Replaces the running amounts by `canonical_amounts`, so the final state is
/// a function of the topple counts alone and not of the order in which the
/// rounding errors of the running sums piled up. Sites the recomputation
/// leaves unstable (ties at `D(x)`) are toppled further.
fn settle(
    w: &WeightedGraph,
    n: f64,
    x0: usize,
    margin: u32,
    cap: u64,
    mut topples: Vec<u64>,
    mut total: u64,
) -> Result<SandpileState> {
    loop {
        let mut amounts = canonical_amounts(w, n, x0, &topples);
        let unstable: Vec<usize> = (0..amounts.len())
            .filter(|&x| amounts[x] >= w.diag()[x])
            .collect();
        if unstable.is_empty() {
            return Ok(finish(w, n, x0, amounts, topples));
        }
        let opts = StabilizeOptions {
            margin,
            batched: true,
        };
        fifo(w, &mut amounts, &mut topples, &unstable, opts, cap, &mut total)?;
    }
}

/// Round-based stabilization: every unstable site topples `⌊s/D⌋` times per
/// round, and the new amounts are gathered in parallel. The gather order is
/// fixed, so the result does not depend on `workers`.
pub fn stabilize_parallel(
    w: &WeightedGraph,
    n: f64,
    x0: usize,
    workers: usize,
    margin: u32,
) -> Result<SandpileState> {
    let cap = check_inputs(w, n, x0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let (topples, total) = pool.install(|| rounds(w, n, x0, margin, cap))?;
    settle(w, n, x0, margin, cap, topples, total)
}

fn rounds(w: &WeightedGraph, n: f64, x0: usize, margin: u32, cap: u64) -> Result<(Vec<u64>, u64)> {
    let g = w.graph();
    let diag = w.diag();
    let nv = w.num_vertices();
    let mut amounts = vec![0.0; nv];
    let mut topples = vec![0u64; nv];
    let mut fire = vec![0u64; nv];
    let mut stamp = vec![u32::MAX; nv];
    amounts[x0] = n;
    let mut unstable: Vec<usize> = if n >= diag[x0] { vec![x0] } else { Vec::new() };
    let mut total = 0u64;
    let mut round = 0u32;
    while !unstable.is_empty() {
        for &v in &unstable {
            if g.boundary_depth(v) < margin {
                return Err(Error::RegionTooSmall {
                    vertex: v,
                    depth: g.boundary_depth(v),
                });
            }
        }
        let counts: Vec<u64> = unstable
            .par_iter()
            .map(|&v| batch_count(amounts[v], diag[v]))
            .collect();
        let mut affected = Vec::with_capacity(unstable.len() * 5);
        for (&v, &t) in unstable.iter().zip(&counts) {
            fire[v] = t;
            topples[v] += t;
            total += t;
            for y in std::iter::once(v).chain(w.weighted_neighbors(v).0.iter().map(|&y| y as usize)) {
                if stamp[y] != round {
                    stamp[y] = round;
                    affected.push(y);
                }
            }
        }
        if total > cap {
            return Err(Error::NoConvergence {
                iterations: total as usize,
                residual: 0.0,
            });
        }
        let updated: Vec<f64> = affected
            .par_iter()
            .map(|&y| {
                let (nbr, rho) = w.weighted_neighbors(y);
                let gain: f64 = nbr
                    .iter()
                    .zip(rho)
                    .map(|(&x, r)| fire[x as usize] as f64 * r)
                    .sum();
                amounts[y] - fire[y] as f64 * diag[y] + gain
            })
            .collect();
        for &v in &unstable {
            fire[v] = 0;
        }
        unstable.clear();
        for (&y, s) in affected.iter().zip(updated) {
            amounts[y] = s;
            if s >= diag[y] {
                unstable.push(y);
            }
        }
        unstable.sort_unstable();
        round = round.wrapping_add(1);
    }
    Ok((topples, total))
}

/// Topples one uniformly chosen unstable site at a time, with the order
/// drawn from a seeded generator. Slow; meant as an order-independence oracle.
pub fn stabilize_random_order(
    w: &WeightedGraph,
    n: f64,
    x0: usize,
    seed: u64,
    margin: u32,
) -> Result<SandpileState> {
    let cap = check_inputs(w, n, x0)?;
    let g = w.graph();
    let diag = w.diag();
    let nv = w.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amounts = vec![0.0; nv];
    let mut topples = vec![0u64; nv];
    // Unstable sites with their slots, for O(1) removal.
    let mut pool: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; nv];
    amounts[x0] = n;
    if n >= diag[x0] {
        slot[x0] = 0;
        pool.push(x0);
    }
    let mut total = 0u64;
    while !pool.is_empty() {
        let v = pool[rng.gen_range(0..pool.len())];
        if g.boundary_depth(v) < margin {
            return Err(Error::RegionTooSmall {
                vertex: v,
                depth: g.boundary_depth(v),
            });
        }
        amounts[v] -= diag[v];
        topples[v] += 1;
        total += 1;
        if total > cap {
            return Err(Error::NoConvergence {
                iterations: total as usize,
                residual: amounts[v],
            });
        }
        let (nbr, rho) = w.weighted_neighbors(v);
        for (&y, r) in nbr.iter().zip(rho) {
            let y = y as usize;
            amounts[y] += r;
            if slot[y] == usize::MAX && amounts[y] >= diag[y] {
                slot[y] = pool.len();
                pool.push(y);
            }
        }
        if amounts[v] < diag[v] {
            let i = slot[v];
            pool.swap_remove(i);
            if i < pool.len() {
                slot[pool[i]] = i;
            }
            slot[v] = usize::MAX;
        }
    }
    settle(w, n, x0, margin, cap, topples, total)
}

/// `{x : u(x) > 0}`, increasing.
pub fn shape(state: &SandpileState) -> Vec<usize> {
    (0..state.odometer.len())
        .filter(|&x| state.odometer[x] > 0.0)
        .collect()
}

/// `max |T u − (f − N δ_{x₀})|` over interior vertices.
pub fn verify_odometer_identity(w: &WeightedGraph, state: &SandpileState) -> f64 {
    let tu = w.operator_t_apply(&state.odometer);
    let g = w.graph();
    (0..tu.len())
        .filter(|&x| g.is_interior(x))
        .map(|x| {
            let s0 = if x == state.x0 { state.n_grains } else { 0.0 };
            (tu[x] - (state.amounts[x] - s0)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub threshold: f64,
    pub checked: usize,
    pub violations: Vec<usize>,
}

impl ThresholdCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The sandwich `0 ≥ u/N − U ≥ −α/N` and the two threshold implications.
/// The implications are checked on `U` with `α`, `β` (the form in which they
/// are proved) and on `Gr` with `α/c` and `β/c′`, which follow from
/// `c·Gr ≤ U ≤ c′·Gr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub alpha: f64,
    pub beta: f64,
    /// Largest `u/N − U` (must be ≤ 0).
    pub sandwich_upper: f64,
    /// Smallest `u/N − U + α/N` (must be ≥ 0).
    pub sandwich_lower: f64,
    pub sandwich_violations: Vec<usize>,
    /// `U > α/N ⇒ in shape`.
    pub inner: ThresholdCheck,
    /// `U < β/N ⇒ not in shape`.
    pub outer: ThresholdCheck,
    /// `Gr > α/(cN) ⇒ in shape`.
    pub inner_gr: ThresholdCheck,
    /// `Gr < β/(c′N) ⇒ not in shape`.
    pub outer_gr: ThresholdCheck,
    /// Vertices violating the literal `Gr < β/N ⇒ not in shape`.
    pub outer_gr_unscaled: Vec<usize>,
}

impl ThresholdReport {
    pub fn passed(&self) -> bool {
        self.sandwich_violations.is_empty()
            && self.inner.passed()
            && self.outer.passed()
            && self.inner_gr.passed()
            && self.outer_gr.passed()
    }
}

/// Rounding slack on quantities of order one.
const SANDWICH_SLACK: f64 = 1e-10;

pub fn verify_threshold(
    w: &WeightedGraph,
    state: &SandpileState,
    green: &GreenField,
    bounds: &ModelBounds,
) -> Result<ThresholdReport> {
    bounds.require_massive()?;
    if state.amounts.len() != w.num_vertices() {
        return Err(Error::Domain("state and weighted graph differ in size".into()));
    }
    if green.origin != state.x0 {
        return Err(Error::Domain("Green field and sandpile use different origins".into()));
    }
    let n = state.n_grains;
    let (alpha, beta) = (bounds.alpha, bounds.beta);
    let region = &green.region;
    let mut rep = ThresholdReport {
        alpha,
        beta,
        sandwich_upper: f64::NEG_INFINITY,
        sandwich_lower: f64::INFINITY,
        sandwich_violations: Vec::new(),
        inner: ThresholdCheck {
            threshold: alpha / n,
            checked: 0,
            violations: Vec::new(),
        },
        outer: ThresholdCheck {
            threshold: beta / n,
            checked: 0,
            violations: Vec::new(),
        },
        inner_gr: ThresholdCheck {
            threshold: alpha / (bounds.c * n),
            checked: 0,
            violations: Vec::new(),
        },
        outer_gr: ThresholdCheck {
            threshold: beta / (bounds.c_prime * n),
            checked: 0,
            violations: Vec::new(),
        },
        outer_gr_unscaled: Vec::new(),
    };
    for (i, &x) in region.vertices().iter().enumerate() {
        if !region.is_interior_local(i) {
            continue;
        }
        let u = green.values_u[i];
        let gr = green.values_gr[i];
        let in_shape = state.odometer[x] > 0.0;
        let gap = state.odometer[x] / n - u;
        rep.sandwich_upper = rep.sandwich_upper.max(gap);
        rep.sandwich_lower = rep.sandwich_lower.min(gap + alpha / n);
        if gap > SANDWICH_SLACK || gap + alpha / n < -SANDWICH_SLACK {
            rep.sandwich_violations.push(x);
        }
        for (chk, value, inner) in [
            (&mut rep.inner, u, true),
            (&mut rep.outer, u, false),
            (&mut rep.inner_gr, gr, true),
            (&mut rep.outer_gr, gr, false),
        ] {
            if inner && value > chk.threshold {
                chk.checked += 1;
                if !in_shape {
                    chk.violations.push(x);
                }
            }
            if !inner && value < chk.threshold {
                chk.checked += 1;
                if in_shape {
                    chk.violations.push(x);
                }
            }
        }
        if gr < beta / n && in_shape {
            rep.outer_gr_unscaled.push(x);
        }
    }
    Ok(rep)
}

/// Everything needed to check the threshold sandwich of one stabilized pile.
#[derive(Debug, Clone)]
pub struct ThresholdRun {
    pub bounds: ModelBounds,
    pub green: GreenField,
    pub report: ThresholdReport,
}

/// Solves `U(x₀, ·)` on the whole patch, measures `a = max_x Σ_y U(y, x)`
/// and runs `verify_threshold` with `α = c′a`, `β = c`.
pub fn threshold_run(w: &WeightedGraph, state: &SandpileState) -> Result<ThresholdRun> {
    let region = Region::whole(w.graph());
    let sums = potential_column_sums(w, &region)?;
    let a = sums.iter().copied().fold(0.0, f64::max);
    let bounds = compute_model_bounds(w, a);
    bounds.require_massive()?;
    let green = solve_potential(
        w,
        state.x0,
        region,
        SolveMethod::ConjugateGradient,
        SolveOptions::default(),
    )?;
    let report = verify_threshold(w, state, &green, &bounds)?;
    Ok(ThresholdRun {
        bounds,
        green,
        report,
    })
}

/// Extremal shape radii in one direction bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusBin {
    /// Bin center (plane angle).
    pub angle: f64,
    pub count: usize,
    pub min_l1: u32,
    pub max_l1: u32,
    pub min_plane: f64,
    pub max_plane: f64,
    /// Shape vertex realizing `max_l1`.
    pub outer_vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRadii {
    /// Shape vertices on the boundary of the shape, binned by plane angle.
    pub plane_bins: Vec<Option<RadiusBin>>,
    /// The same vertices grouped by reduced lift direction, quantized to a
    /// grid of step `1/resolution`; key is the quantized vector.
    pub lift_bins: BTreeMap<Vec<i32>, RadiusBin>,
}

/// Shape vertices with a neighbor outside the shape.
pub fn shape_boundary(g: &IsoradialGraph, state: &SandpileState) -> Vec<usize> {
    shape(state)
        .into_iter()
        .filter(|&x| g.neighbors(x).any(|(y, _)| state.odometer[y] <= 0.0))
        .collect()
}

fn update_bin(slot: &mut Option<RadiusBin>, angle: f64, v: usize, l1: u32, plane: f64) {
    match slot {
        None => {
            *slot = Some(RadiusBin {
                angle,
                count: 1,
                min_l1: l1,
                max_l1: l1,
                min_plane: plane,
                max_plane: plane,
                outer_vertex: v,
            })
        }
        Some(b) => {
            b.count += 1;
            b.min_l1 = b.min_l1.min(l1);
            if l1 > b.max_l1 {
                b.max_l1 = l1;
                b.outer_vertex = v;
            }
            b.min_plane = b.min_plane.min(plane);
            b.max_plane = b.max_plane.max(plane);
        }
    }
}

/// Per-direction radii of the shape boundary, in lift `ℓ¹` norm and plane
/// modulus.
pub fn boundary_radii(
    g: &IsoradialGraph,
    state: &SandpileState,
    lift: &SurfaceLift,
    bins: usize,
    resolution: u32,
) -> BoundaryRadii {
    let mut plane_bins: Vec<Option<RadiusBin>> = vec![None; bins];
    let mut lift_bins: BTreeMap<Vec<i32>, Option<RadiusBin>> = BTreeMap::new();
    let origin = g.position(state.x0);
    for v in shape_boundary(g, state) {
        let z = g.position(v) - origin;
        let l1 = lift.norm1(v);
        if l1 == 0 {
            continue;
        }
        let b = angle_bin(z.arg(), bins);
        update_bin(&mut plane_bins[b], bin_center(b, bins), v, l1, z.norm());
        let key: Vec<i32> = lift
            .coords(v)
            .iter()
            .map(|&c| (c as f64 / l1 as f64 * resolution as f64).round() as i32)
            .collect();
        update_bin(lift_bins.entry(key).or_default(), z.arg(), v, l1, z.norm());
    }
    BoundaryRadii {
        plane_bins,
        lift_bins: lift_bins.into_iter().filter_map(|(k, v)| v.map(|b| (k, b))).collect(),
    }
}

/// A stabilized pile together with the patch that held it.
#[derive(Debug, Clone)]
pub struct SizedRun {
    pub spec: GraphSpec,
    pub weighted: WeightedGraph,
    pub state: SandpileState,
    pub growths: u32,
}

/// Initial patch radius `log N / |log(k′·nd(ε_ell/2))| + margin`.
pub fn initial_radius(n: f64, k: f64, epsilon: f64, margin: u32) -> Result<f64> {
    let p = crate::elliptic::ElliptParams::new(k)?;
    if p.is_critical() {
        return Err(Error::Refused("auto-sizing needs k > 0".into()));
    }
    let q = crate::green::quoted_decay_factor(&p, epsilon);
    Ok(n.max(std::f64::consts::E).ln() / q.ln().abs() + margin as f64)
}

/// Stabilizes on `spec`, growing the patch by 1.5 on region-too-small errors
/// up to `max_growths` times.
pub fn stabilize_auto(
    spec: &GraphSpec,
    k: f64,
    n: f64,
    opts: StabilizeOptions,
    workers: Option<usize>,
    max_growths: u32,
) -> Result<SizedRun> {
    let mut spec = spec.clone();
    let mut growths = 0;
    loop {
        let g = Arc::new(spec.build()?);
        let w = WeightedGraph::new(g.clone(), k)?;
        let x0 = g.origin();
        let result = match workers {
            Some(t) => stabilize_parallel(&w, n, x0, t, opts.margin),
            None => stabilize(&w, n, x0, opts),
        };
        match result {
            Ok(state) => {
                return Ok(SizedRun {
                    spec,
                    weighted: w,
                    state,
                    growths,
                })
            }
            Err(Error::RegionTooSmall { .. }) if growths < max_growths => {
                log::info!("patch {spec:?} too small for N = {n}; growing");
                spec = spec.grown(1.5);
                growths += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
