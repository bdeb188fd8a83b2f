//! Graph JSON documents, CSV tables and SVG figures.
//!
//! CSV floats use Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::GreenField;
use crate::isograph::{
    BilipschitzReport, DiamondEdge, FlatnessReport, GraphSpec, IsoradialGraph, PrimalEdge,
    SurfaceLift,
};
use crate::limitshape::ShapeCurve;
use crate::sandpile::SandpileState;
use crate::weights::WeightedGraph;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSection {
    pub k: f64,
    pub rho: Vec<f64>,
    pub mass2: Vec<f64>,
    pub diag: Vec<f64>,
}

impl From<&WeightedGraph> for WeightsSection {
    fn from(w: &WeightedGraph) -> Self {
        WeightsSection {
            k: w.k(),
            rho: w.rho().to_vec(),
            mass2: w.mass2().to_vec(),
            diag: w.diag().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub bilipschitz: Option<BilipschitzReport>,
    pub flatness: Option<FlatnessReport>,
    pub half_angles: Vec<f64>,
}

/// Versioned on-disk form of a patch with its lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema_version: u32,
    pub spec: Option<GraphSpec>,
    pub d: usize,
    pub palette: Vec<f64>,
    pub epsilon: f64,
    pub origin: usize,
    pub vertices: Vec<[f64; 2]>,
    pub dual_vertices: Vec<[f64; 2]>,
    pub edges: Vec<PrimalEdge>,
    pub diamond_edges: Vec<DiamondEdge>,
    /// `n(v)` per diamond vertex.
    pub lift: Vec<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<GraphDiagnostics>,
    /// Weight sets keyed by the modulus, formatted as in `k_key`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, WeightsSection>,
}

/// Key of a weight set: the modulus in shortest round-trip form.
pub fn k_key(k: f64) -> String {
    format!("{k}")
}

impl GraphDocument {
    pub fn new(g: &IsoradialGraph, lift: &SurfaceLift, spec: Option<GraphSpec>) -> Self {
        GraphDocument {
            schema_version: SCHEMA_VERSION,
            spec,
            d: g.d(),
            palette: g.palette().to_vec(),
            epsilon: g.epsilon(),
            origin: g.origin(),
            vertices: g.vertices().to_vec(),
            dual_vertices: g.dual_vertices().to_vec(),
            edges: g.edges().to_vec(),
            diamond_edges: g.diamond_edges().to_vec(),
            lift: (0..lift.len()).map(|v| lift.coords(v).to_vec()).collect(),
            diagnostics: None,
            weights: BTreeMap::new(),
        }
    }

    pub fn add_weights(&mut self, w: &WeightedGraph) {
        self.weights.insert(k_key(w.k()), WeightsSection::from(w));
    }

    /// Rebuilds the graph (re-running the structural checks).
    pub fn to_graph(&self) -> Result<IsoradialGraph> {
        IsoradialGraph::from_parts(
            self.vertices.clone(),
            self.dual_vertices.clone(),
            self.edges.clone(),
            self.diamond_edges.clone(),
            self.palette.clone(),
            self.origin,
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let doc: GraphDocument = serde_json::from_reader(std::io::BufReader::new(file))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Domain(format!(
                "unsupported graph schema version {}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

/// Shortest round-trip text of `x`; scientific notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn lift_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("n_{j}")).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

/// `vertex, x, y, n_1..n_d, U, Gr` over the region of the field.
pub fn write_green_csv(path: &Path, g: &IsoradialGraph, lift: &SurfaceLift, field: &GreenField) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["vertex".to_string(), "x".into(), "y".into()];
    header.extend(lift_header(g.d()));
    header.extend(["U".to_string(), "Gr".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for (i, &v) in field.region.vertices().iter().enumerate() {
        let p = g.position(v);
        let mut row = vec![v.to_string(), fmt_f64(p.re), fmt_f64(p.im)];
        row.extend(lift.coords(v).iter().map(|c| c.to_string()));
        row.push(fmt_f64(field.values_u[i]));
        row.push(fmt_f64(field.values_gr[i]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `vertex, x, y, n_1..n_d, amount, odometer, topples` for every vertex
/// that holds sand or toppled.
pub fn write_state_csv(path: &Path, g: &IsoradialGraph, lift: &SurfaceLift, state: &SandpileState) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["vertex".to_string(), "x".into(), "y".into()];
    header.extend(lift_header(g.d()));
    header.extend(["amount".to_string(), "odometer".into(), "topples".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for v in 0..state.amounts.len() {
        if state.amounts[v] == 0.0 && state.topples[v] == 0 {
            continue;
        }
        let p = g.position(v);
        let mut row = vec![v.to_string(), fmt_f64(p.re), fmt_f64(p.im)];
        row.extend(lift.coords(v).iter().map(|c| c.to_string()));
        row.push(fmt_f64(state.amounts[v]));
        row.push(fmt_f64(state.odometer[v]));
        row.push(state.topples[v].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `angle, n_1..n_d, radius_rd, radius_plane`.
pub fn write_shape_curve_csv(path: &Path, curve: &ShapeCurve) -> Result<()> {
    let mut w = writer(path)?;
    let d = curve.samples.first().map_or(0, |s| s.n_hat.len());
    let mut header = vec!["angle".to_string()];
    header.extend(lift_header(d));
    header.extend(["radius_rd".to_string(), "radius_plane".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for s in &curve.samples {
        let mut row = vec![fmt_f64(s.angle)];
        row.extend(s.n_hat.iter().map(|&x| fmt_f64(x)));
        row.push(fmt_f64(s.radius_rd));
        row.push(fmt_f64(s.radius_plane));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows under a header; every row must have the header's width.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A closed curve in plane coordinates for an SVG overlay.
pub type Polyline = Vec<(f64, f64)>;

/// Values per primal vertex drawn as colored dots, with optional overlay
/// curves in the layers `empirical` and `predicted`.
pub struct Heatmap<'a> {
    pub title: &'a str,
    pub values: &'a [f64],
    pub empirical: Option<&'a Polyline>,
    pub predicted: Option<&'a Polyline>,
}

fn color(t: f64) -> String {
    // Dark blue to yellow through red.
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.5 * t).min(1.0)) as u8;
    let g = (255.0 * (2.0 * t - 1.0).clamp(0.0, 1.0)) as u8;
    let b = (160.0 * (1.0 - 2.0 * t).max(0.0) + 40.0) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn polyline_path(line: &Polyline, scale: f64, cx: f64, cy: f64) -> String {
    let mut d = String::new();
    for (i, (x, y)) in line.iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2},{:.2} ",
            if i == 0 { "M" } else { "L" },
            cx + x * scale,
            cy - y * scale
        );
    }
    d.push('Z');
    d
}

pub fn render_svg(g: &IsoradialGraph, map: &Heatmap) -> String {
    let size = 800.0;
    let support: Vec<usize> = (0..g.num_vertices()).filter(|&v| map.values[v] > 0.0).collect();
    let mut extent = support
        .iter()
        .map(|&v| g.position(v).norm())
        .fold(1.0f64, f64::max);
    for line in [map.empirical, map.predicted].into_iter().flatten() {
        for (x, y) in line {
            extent = extent.max(x.hypot(*y));
        }
    }
    let scale = 0.45 * size / extent;
    let (cx, cy) = (size / 2.0, size / 2.0);
    let vmax = support.iter().map(|&v| map.values[v]).fold(0.0, f64::max);
    let dot = (0.5 * scale).clamp(0.5, 6.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, map.title);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g id="heatmap" inkscape:label="heatmap" xmlns:inkscape="http://www.inkscape.org/namespaces/inkscape">"#);
    for &v in &support {
        let p = g.position(v);
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{dot:.2}" fill="{}"/>"#,
            cx + p.re * scale,
            cy - p.im * scale,
            color(map.values[v] / vmax)
        );
    }
    let _ = writeln!(s, "</g>");
    for (id, line, stroke) in [
        ("empirical", map.empirical, "#000000"),
        ("predicted", map.predicted, "#1f9e3a"),
    ] {
        let _ = writeln!(s, r#"<g id="{id}" class="layer">"#);
        if let Some(line) = line {
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
                polyline_path(line, scale, cx, cy)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

/// Outer boundary of the shape per plane-angle bin, as a polyline.
pub fn empirical_outline(g: &IsoradialGraph, state: &SandpileState, bins: usize) -> Polyline {
    let mut best: Vec<Option<(f64, f64)>> = vec![None; bins];
    for v in 0..state.odometer.len() {
        if state.odometer[v] <= 0.0 {
            continue;
        }
        let z = g.position(v) - g.position(state.x0);
        let b = crate::isograph::angle_bin(z.arg(), bins);
        if best[b].is_none_or(|(r, _)| z.norm() > r) {
            best[b] = Some((z.norm(), z.arg()));
        }
    }
    let mut pts: Vec<(f64, f64)> = best.into_iter().flatten().collect();
    pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    pts.into_iter().map(|(r, a)| (r * a.cos(), r * a.sin())).collect()
}

/// Predicted plane curve scaled by `factor` (e.g. `log N`).
pub fn predicted_outline(curve: &ShapeCurve, factor: f64) -> Polyline {
    let mut pts: Vec<(f64, f64)> = curve
        .samples
        .iter()
        .map(|s| (s.radius_plane * factor, s.angle))
        .collect();
    pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    pts.into_iter().map(|(r, a)| (r * a.cos(), r * a.sin())).collect()
}

/// Unit circle polyline, used as the `k → 0` reference.
pub fn unit_circle(samples: usize) -> Polyline {
    (0..samples)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / samples as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

pub fn write_svg(path: &Path, g: &IsoradialGraph, map: &Heatmap) -> Result<()> {
    std::fs::write(path, render_svg(g, map))?;
    Ok(())
}
