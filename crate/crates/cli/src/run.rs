//! The subcommands. Each writes its artifacts under the configured output
//! directory and returns an error carrying the exit class.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use isosand_core::elliptic::ElliptParams;
use isosand_core::export::{
    empirical_outline, fmt_f64, k_key, predicted_outline, write_green_csv, write_shape_curve_csv,
    write_state_csv, write_svg, write_table_csv, GraphDiagnostics, GraphDocument, Heatmap,
};
use isosand_core::green::{
    cross_validate, solve_potential, truncation_radius, Region, SolveMethod, SolveOptions,
};
use isosand_core::isograph::{
    bilipschitz_constants, check_asymptotic_flatness, lift_coordinates, GraphSpec,
    IsoradialGraph, SurfaceLift,
};
use isosand_core::limitshape::{compare_shape, predicted_plane_shape, Normalization, ShapeCurve};
use isosand_core::sandpile::{
    initial_radius, shape, stabilize, stabilize_auto, stabilize_parallel, stabilize_random_order,
    threshold_run, verify_odometer_identity, SandpileState, SizedRun, StabilizeOptions,
    ThresholdReport,
};
use isosand_core::weights::{compute_model_bounds, ModelBounds, WeightedGraph};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Growths allowed after a region-too-small error.
const MAX_GROWTHS: u32 = 3;

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| {
        CliError::Usage(format!("cannot create {}: {e}", cfg.output.display()))
    })?;
    Ok(cfg.output.clone())
}

fn n_label(n: f64) -> String {
    if n.fract() == 0.0 && n < 1e15 {
        format!("{}", n as u64)
    } else {
        format!("{n}")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(isosand_core::Error::from)?;
    std::fs::write(path, text + "\n").map_err(isosand_core::Error::from)?;
    Ok(())
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

/// Annulus (plane units) well inside a patch, used to estimate `n(v̂)`.
fn lift_annulus(spec: &GraphSpec) -> (f64, f64) {
    let r = spec.plane_radius();
    (0.4 * r, 0.65 * r)
}

struct Patch {
    spec: GraphSpec,
    graph: Arc<IsoradialGraph>,
    lift: SurfaceLift,
}

fn build_patch(spec: &GraphSpec) -> Result<Patch, CliError> {
    let graph = Arc::new(spec.build()?);
    let lift = lift_coordinates(&graph)?;
    Ok(Patch {
        spec: spec.clone(),
        graph,
        lift,
    })
}

/// One named pass/fail line of a report.
#[derive(Debug, Clone, Serialize)]
struct Check {
    name: String,
    value: f64,
    limit: f64,
    passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Check {
        Check {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            limit: 0.0,
            passed: ok,
        }
    }

    fn print(&self) {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {:e} (limit {:e})", self.name, self.value, self.limit);
    }
}

fn fail_on(checks: &[Check]) -> Result<(), CliError> {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failed.join(", ")))
    }
}

pub fn build_graph(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let patch = build_patch(&cfg.graph)?;
    let g = &patch.graph;
    let bilipschitz = match bilipschitz_constants(g, &patch.lift) {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("bi-Lipschitz check: {e}");
            None
        }
    };
    let r = cfg.graph.plane_radius();
    let flatness = match check_asymptotic_flatness(
        g,
        &patch.lift,
        16,
        &[(0.2 * r, 0.4 * r), (0.4 * r, 0.65 * r)],
    ) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("flatness check: {e}");
            None
        }
    };
    let mut doc = GraphDocument::new(g, &patch.lift, Some(cfg.graph.clone()));
    doc.diagnostics = Some(GraphDiagnostics {
        bilipschitz: bilipschitz.clone(),
        flatness: flatness.clone(),
        half_angles: g.distinct_half_angles(1e-12),
    });
    for &k in &cfg.k {
        doc.add_weights(&WeightedGraph::new(g.clone(), k)?);
    }
    doc.write(&dir.join("graph.json"))?;
    println!(
        "graph: {} vertices, {} dual vertices, {} edges, d = {}, epsilon = {}",
        g.num_vertices(),
        g.num_dual_vertices(),
        g.edges().len(),
        g.d(),
        g.epsilon()
    );
    if let Some(b) = &bilipschitz {
        println!("bi-Lipschitz: delta = {} (min ratio {})", b.lower, b.min_ratio);
    }
    if let Some(fl) = &flatness {
        println!("flatness: max spread {}", fl.max_spread);
    }
    println!("wrote {}", dir.join("graph.json").display());
    Ok(())
}

#[derive(Serialize)]
struct WeightSummary {
    k: f64,
    rho_min: f64,
    rho_max: f64,
    mass2_min: f64,
    mass2_max: f64,
    bounds: ModelBounds,
}

pub fn weights(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.require_k()?;
    let dir = out_dir(cfg)?;
    let patch = build_patch(&cfg.graph)?;
    let g = &patch.graph;
    let mut checks = Vec::new();
    let mut summaries = Vec::new();
    for &k in &cfg.k {
        let w = WeightedGraph::new(g.clone(), k)?;
        let key = k_key(k);
        if cfg.emit.csv {
            let rows: Vec<Vec<String>> = g
                .edges()
                .iter()
                .zip(w.rho())
                .enumerate()
                .map(|(i, (e, r))| vec![i.to_string(), e.a.to_string(), e.b.to_string(), f(e.theta_bar), f(*r)])
                .collect();
            write_table_csv(
                &dir.join(format!("weights_k{key}_edges.csv")),
                &["edge", "a", "b", "theta_bar", "rho"],
                &rows,
            )?;
            let rows: Vec<Vec<String>> = (0..g.num_vertices())
                .map(|v| {
                    let p = g.position(v);
                    vec![v.to_string(), f(p.re), f(p.im), g.degree(v).to_string(), f(w.mass2()[v]), f(w.diag()[v])]
                })
                .collect();
            write_table_csv(
                &dir.join(format!("weights_k{key}_vertices.csv")),
                &["vertex", "x", "y", "degree", "mass2", "diag"],
                &rows,
            )?;
        }
        let mass_min = w.mass2().iter().copied().fold(f64::INFINITY, f64::min);
        let mass_max = w.mass2().iter().copied().fold(0.0, f64::max);
        if k == 0.0 {
            let tan_err = g
                .edges()
                .iter()
                .zip(w.rho())
                .map(|(e, r)| (r - e.theta_bar.tan()).abs())
                .fold(0.0, f64::max);
            checks.push(Check::at_most("k=0 conductance = tan", tan_err, 1e-12));
            checks.push(Check::at_most("k=0 masses vanish", mass_max, 0.0));
        } else {
            checks.push(Check::flag(format!("k={key} masses positive"), mass_min > 0.0));
        }
        summaries.push(WeightSummary {
            k,
            rho_min: w.rho().iter().copied().fold(f64::INFINITY, f64::min),
            rho_max: w.rho().iter().copied().fold(0.0, f64::max),
            mass2_min: mass_min,
            mass2_max: mass_max,
            bounds: compute_model_bounds(&w, f64::INFINITY),
        });
        println!("k = {key}: rho in [{}, {}], m^2 in [{mass_min}, {mass_max}]", summaries.last().unwrap().rho_min, summaries.last().unwrap().rho_max);
    }
    for c in &checks {
        c.print();
    }
    if cfg.emit.json {
        write_json(&dir.join("weights.json"), &summaries)?;
    }
    fail_on(&checks)
}

#[derive(Serialize)]
struct GreenSummary {
    k: f64,
    region_vertices: usize,
    truncation_radius: Option<u32>,
    iterations: usize,
    residual: f64,
    gr_origin: f64,
    cross_validation: Option<isosand_core::green::CrossValidation>,
}

pub fn green(cfg: &ExperimentConfig, cross: bool, whole: bool) -> Result<(), CliError> {
    cfg.require_k()?;
    let dir = out_dir(cfg)?;
    let patch = build_patch(&cfg.graph)?;
    let g = &patch.graph;
    let x0 = g.origin();
    let mut checks = Vec::new();
    let mut summaries = Vec::new();
    for &k in &cfg.k {
        let w = WeightedGraph::new(g.clone(), k)?;
        let cap = g.boundary_depth(x0).saturating_sub(1);
        let (region, radius) = if whole {
            (Region::interior(g), None)
        } else {
            let t = truncation_radius(w.params(), g.epsilon(), 1e-12, cap);
            if !t.capped && t.radius > cap {
                log::warn!("truncation radius {} exceeds the patch; using {cap}", t.radius);
            }
            let r = t.radius.min(cap);
            (Region::ball(g, x0, r), Some(r))
        };
        let opts = SolveOptions {
            tol: cfg.tolerances.solver,
            ..SolveOptions::default()
        };
        let mut field = solve_potential(&w, x0, region.clone(), SolveMethod::ConjugateGradient, opts)?;
        field.truncation_radius = radius;
        let key = k_key(k);
        checks.push(Check::at_most(format!("k={key} residual"), field.residual, cfg.tolerances.residual));
        let cv = if cross && k == 0.0 {
            log::warn!("k = 0: no killing, the Neumann cross-check is skipped");
            None
        } else if cross {
            let cv = cross_validate(&w, x0, &region)?;
            checks.push(Check::at_most(
                format!("k={key} CG vs Neumann"),
                cv.relative_difference,
                cfg.tolerances.cross_validation,
            ));
            Some(cv)
        } else {
            None
        };
        if cfg.emit.csv {
            write_green_csv(&dir.join(format!("green_k{key}.csv")), g, &patch.lift, &field)?;
        }
        println!(
            "k = {key}: {} vertices, {} CG iterations, Gr(x0, x0) = {}",
            region.len(),
            field.iterations,
            field.gr(x0)
        );
        summaries.push(GreenSummary {
            k,
            region_vertices: region.len(),
            truncation_radius: radius,
            iterations: field.iterations,
            residual: field.residual,
            gr_origin: field.gr(x0),
            cross_validation: cv,
        });
    }
    for c in &checks {
        c.print();
    }
    if cfg.emit.json {
        write_json(&dir.join("green.json"), &summaries)?;
    }
    fail_on(&checks)
}

/// The configured patch, enlarged to the auto-sizing estimate when smaller.
fn sized_spec(cfg: &ExperimentConfig, epsilon: f64, k: f64, n: f64) -> Result<GraphSpec, CliError> {
    let est = initial_radius(n, k, epsilon, cfg.margin)?;
    Ok(if est > cfg.graph.plane_radius() {
        log::info!("auto-sizing: radius {} -> {est:.1} for N = {n}", cfg.graph.plane_radius());
        cfg.graph.with_plane_radius(est)
    } else {
        cfg.graph.clone()
    })
}

fn run_pile(cfg: &ExperimentConfig, epsilon: f64, k: f64, n: f64) -> Result<SizedRun, CliError> {
    let spec = sized_spec(cfg, epsilon, k, n)?;
    let opts = StabilizeOptions {
        margin: cfg.margin,
        batched: true,
    };
    let t = Instant::now();
    let run = stabilize_auto(&spec, k, n, opts, cfg.workers, MAX_GROWTHS)?;
    log::info!(
        "k = {k}, N = {n}: {} topples on {} vertices in {:.2?}",
        run.state.total_topples(),
        run.weighted.num_vertices(),
        t.elapsed()
    );
    Ok(run)
}

fn state_checks(cfg: &ExperimentConfig, w: &WeightedGraph, state: &SandpileState, label: &str) -> Vec<Check> {
    let n = state.n_grains;
    vec![
        Check::flag(format!("{label} stable"), state.first_unstable(w).is_none()),
        Check::at_most(
            format!("{label} mass balance"),
            state.mass_balance_error(w),
            cfg.tolerances.mass_balance * n,
        ),
        Check::at_most(
            format!("{label} odometer identity"),
            verify_odometer_identity(w, state),
            cfg.tolerances.identity * n,
        ),
    ]
}

fn threshold_checks(report: &ThresholdReport, label: &str) -> Vec<Check> {
    let count = |v: &Vec<usize>| v.len() as f64;
    vec![
        Check::at_most(format!("{label} sandwich violations"), count(&report.sandwich_violations), 0.0),
        Check::at_most(format!("{label} U > alpha/N outside shape"), count(&report.inner.violations), 0.0),
        Check::at_most(format!("{label} U < beta/N inside shape"), count(&report.outer.violations), 0.0),
        Check::at_most(format!("{label} Gr > alpha/(cN) outside shape"), count(&report.inner_gr.violations), 0.0),
        Check::at_most(format!("{label} Gr < beta/(c'N) inside shape"), count(&report.outer_gr.violations), 0.0),
    ]
}

fn overlay_svgs(
    dir: &Path,
    tag: &str,
    g: &IsoradialGraph,
    state: &SandpileState,
    predicted: Option<&ShapeCurve>,
    bins: usize,
) -> Result<(), CliError> {
    let empirical = empirical_outline(g, state, bins);
    let predicted = predicted.map(|c| predicted_outline(c, state.n_grains.ln()));
    let amounts = &state.amounts;
    let odometer = &state.odometer;
    for (name, values) in [("amount", amounts), ("odometer", odometer)] {
        write_svg(
            &dir.join(format!("{name}_{tag}.svg")),
            g,
            &Heatmap {
                title: &format!("{name} {tag}"),
                values,
                empirical: Some(&empirical),
                predicted: predicted.as_ref(),
            },
        )?;
    }
    Ok(())
}

fn predicted_curve(patch: &Patch, k: f64, normalization: Normalization, samples: usize) -> Result<ShapeCurve, CliError> {
    let p = ElliptParams::new(k)?;
    Ok(predicted_plane_shape(
        &patch.graph,
        &patch.lift,
        &p,
        samples,
        lift_annulus(&patch.spec),
        normalization,
    )?)
}

#[derive(Serialize)]
struct SimulateRecord {
    k: f64,
    n: f64,
    spec: GraphSpec,
    growths: u32,
    vertices: usize,
    topples: u64,
    shape_size: usize,
    checks: Vec<Check>,
    threshold: Option<ThresholdSummary>,
}

#[derive(Serialize)]
struct ThresholdSummary {
    bounds: ModelBounds,
    report: ThresholdReport,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.require_massive()?;
    cfg.require_grains()?;
    let dir = out_dir(cfg)?;
    let base = build_patch(&cfg.graph)?;
    let epsilon = base.graph.epsilon();
    let mut all_checks = Vec::new();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &k in &cfg.k {
        let curve = if cfg.emit.svg {
            predicted_curve(&base, k, Normalization::LogN, 4 * cfg.bins).ok()
        } else {
            None
        };
        for &n in &cfg.n {
            let run = run_pile(cfg, epsilon, k, n)?;
            let w = &run.weighted;
            let g = w.graph();
            let lift = lift_coordinates(g)?;
            let tag = format!("k{}_n{}", k_key(k), n_label(n));
            let mut checks = state_checks(cfg, w, &run.state, &tag);
            let threshold = if cfg.green {
                let t = threshold_run(w, &run.state)?;
                checks.extend(threshold_checks(&t.report, &tag));
                Some(ThresholdSummary {
                    bounds: t.bounds,
                    report: t.report,
                })
            } else {
                None
            };
            if cfg.emit.csv {
                write_state_csv(&dir.join(format!("state_{tag}.csv")), g, &lift, &run.state)?;
            }
            if cfg.emit.svg {
                overlay_svgs(&dir, &tag, g, &run.state, curve.as_ref(), 4 * cfg.bins)?;
            }
            let shape_size = shape(&run.state).len();
            println!(
                "{tag}: {} vertices, {} topples, shape of {shape_size} sites, {} growths",
                g.num_vertices(),
                run.state.total_topples(),
                run.growths
            );
            for c in &checks {
                c.print();
            }
            rows.push(vec![
                f(k),
                f(n),
                f(run.spec.plane_radius()),
                g.num_vertices().to_string(),
                run.growths.to_string(),
                run.state.total_topples().to_string(),
                shape_size.to_string(),
                f(checks[1].value),
                f(checks[2].value),
                threshold.as_ref().map_or("".into(), |t| t.report.passed().to_string()),
            ]);
            all_checks.extend(checks.iter().cloned());
            records.push(SimulateRecord {
                k,
                n,
                spec: run.spec.clone(),
                growths: run.growths,
                vertices: g.num_vertices(),
                topples: run.state.total_topples(),
                shape_size,
                checks,
                threshold,
            });
        }
    }
    if cfg.emit.csv {
        write_table_csv(
            &dir.join("summary.csv"),
            &[
                "k",
                "N",
                "radius",
                "vertices",
                "growths",
                "topples",
                "shape_size",
                "mass_balance_error",
                "identity_residual",
                "threshold_passed",
            ],
            &rows,
        )?;
    }
    if cfg.emit.json {
        write_json(&dir.join("report.json"), &records)?;
    }
    fail_on(&all_checks)
}

/// `true` when every entry is smaller than the one before it.
fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn limit_shape(cfg: &ExperimentConfig, soft_fail: bool) -> Result<(), CliError> {
    cfg.require_massive()?;
    let dir = out_dir(cfg)?;
    let base = build_patch(&cfg.graph)?;
    let epsilon = base.graph.epsilon();
    let mut trend_failures = Vec::new();
    let mut conv_rows = Vec::new();
    for &k in &cfg.k {
        let key = k_key(k);
        let p = ElliptParams::new(k)?;
        let curve = predicted_curve(&base, k, Normalization::LogN, 4 * cfg.bins)?;
        if cfg.emit.csv {
            write_shape_curve_csv(&dir.join(format!("shape_curve_k{key}.csv")), &curve)?;
        }
        let mut errors = Vec::new();
        for &n in &cfg.n {
            let run = run_pile(cfg, epsilon, k, n)?;
            let g = run.weighted.graph();
            let lift = lift_coordinates(g)?;
            let cmp = compare_shape(g, &lift, &run.state, &p, cfg.bins)?;
            let tag = format!("k{key}_n{}", n_label(n));
            if cfg.emit.csv {
                let rows: Vec<Vec<String>> = cmp
                    .bins
                    .iter()
                    .map(|b| vec![f(b.angle), b.vertex.to_string(), f(b.measured), f(b.predicted), f(b.relative_error)])
                    .collect();
                write_table_csv(
                    &dir.join(format!("shape_bins_{tag}.csv")),
                    &["angle", "vertex", "measured", "predicted", "relative_error"],
                    &rows,
                )?;
            }
            if cfg.emit.svg {
                overlay_svgs(&dir, &tag, g, &run.state, Some(&curve), 4 * cfg.bins)?;
            }
            let mean = cmp.bins.iter().map(|b| b.relative_error).sum::<f64>() / cmp.bins.len() as f64;
            println!(
                "{tag}: max relative error {:.4}, mean {:.4} over {} bins ({} vertices)",
                cmp.max_error,
                mean,
                cmp.bins.len(),
                g.num_vertices()
            );
            conv_rows.push(vec![
                f(k),
                f(n),
                f(run.spec.plane_radius()),
                g.num_vertices().to_string(),
                run.state.total_topples().to_string(),
                cmp.bins.len().to_string(),
                f(cmp.max_error),
                f(mean),
            ]);
            errors.push(cmp.max_error);
        }
        if errors.len() >= 2 && !strictly_decreasing(&errors) {
            trend_failures.push(format!("k = {key}: errors {errors:?} do not decrease"));
        }
    }
    if cfg.emit.csv && !conv_rows.is_empty() {
        write_table_csv(
            &dir.join("convergence.csv"),
            &["k", "N", "radius", "vertices", "topples", "bins", "max_error", "mean_error"],
            &conv_rows,
        )?;
    }
    if cfg.k.len() >= 2 {
        let mut ks = cfg.k.clone();
        ks.sort_by(|a, b| b.total_cmp(a));
        let mut rows = Vec::new();
        let mut devs: Vec<f64> = Vec::new();
        for (i, &k) in ks.iter().enumerate() {
            let c = predicted_curve(&base, k, Normalization::FourOverM, 4 * cfg.bins)?;
            let dev = c.max_unit_deviation();
            let (ratio, k2) = if i > 0 {
                (f(dev / devs[i - 1]), f((k / ks[i - 1]).powi(2)))
            } else {
                (String::new(), String::new())
            };
            println!("k = {k}: 4/m-normalized curve deviates from the unit circle by {dev:.3e}");
            rows.push(vec![f(k), f(dev), ratio, k2]);
            devs.push(dev);
        }
        if cfg.emit.csv {
            write_table_csv(
                &dir.join("circle.csv"),
                &["k", "max_unit_deviation", "ratio", "k2_ratio"],
                &rows,
            )?;
        }
        if !strictly_decreasing(&devs) {
            trend_failures.push(format!("circle deviations {devs:?} do not decrease with k"));
        }
    }
    for msg in &trend_failures {
        log::warn!("{msg}");
        println!("WARN {msg}");
    }
    if trend_failures.is_empty() || soft_fail {
        Ok(())
    } else {
        Err(CliError::Invariant(trend_failures.join("; ")))
    }
}

pub fn verify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let patch = build_patch(&cfg.graph)?;
    let g = &patch.graph;
    let mut checks = Vec::new();
    checks.push(Check::flag("lift holonomy", true));
    checks.push(Check::flag(
        "bi-Lipschitz bounds",
        bilipschitz_constants(g, &patch.lift).is_ok(),
    ));
    let w0 = WeightedGraph::new(g.clone(), 0.0)?;
    let tan_err = g
        .edges()
        .iter()
        .zip(w0.rho())
        .map(|(e, r)| (r - e.theta_bar.tan()).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("k=0 conductance = tan", tan_err, 1e-12));
    let x0 = g.origin();
    for &k in cfg.k.iter().filter(|&&k| k > 0.0) {
        let key = k_key(k);
        let w = WeightedGraph::new(g.clone(), k)?;
        let mass_min = w.mass2().iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::flag(format!("k={key} masses positive"), mass_min > 0.0));
        let cap = g.boundary_depth(x0).saturating_sub(1);
        let r = truncation_radius(w.params(), g.epsilon(), 1e-12, cap).radius.min(cap);
        let cv = cross_validate(&w, x0, &Region::ball(g, x0, r))?;
        checks.push(Check::at_most(
            format!("k={key} CG vs Neumann"),
            cv.relative_difference,
            cfg.tolerances.cross_validation,
        ));
        checks.push(Check::at_most(
            format!("k={key} Green residual"),
            cv.cg_residual.max(cv.neumann_residual),
            cfg.tolerances.residual,
        ));
    }
    if !cfg.n.is_empty() {
        cfg.require_massive()?;
        for &k in &cfg.k {
            for &n in &cfg.n {
                let run = run_pile(cfg, g.epsilon(), k, n)?;
                let w = &run.weighted;
                let x = w.graph().origin();
                let tag = format!("k{}_n{}", k_key(k), n_label(n));
                let fifo = stabilize(w, n, x, StabilizeOptions {
                    margin: cfg.margin,
                    batched: false,
                })?;
                let par = stabilize_parallel(w, n, x, cfg.workers.unwrap_or(4), cfg.margin)?;
                let rnd = stabilize_random_order(w, n, x, cfg.seed, cfg.margin)?;
                let gap = |a: &SandpileState, b: &SandpileState| {
                    a.odometer
                        .iter()
                        .zip(&b.odometer)
                        .chain(a.amounts.iter().zip(&b.amounts))
                        .map(|(p, q)| (p - q).abs())
                        .fold(0.0, f64::max)
                };
                checks.push(Check::at_most(format!("{tag} parallel = sequential"), gap(&fifo, &par), cfg.tolerances.order));
                checks.push(Check::at_most(format!("{tag} random order = FIFO"), gap(&fifo, &rnd), cfg.tolerances.order));
                checks.extend(state_checks(cfg, w, &fifo, &tag));
                if cfg.green {
                    let t = threshold_run(w, &fifo)?;
                    checks.extend(threshold_checks(&t.report, &tag));
                }
            }
        }
    }
    for c in &checks {
        c.print();
    }
    if cfg.emit.json {
        write_json(&dir.join("verify.json"), &checks)?;
    }
    fail_on(&checks)
}
