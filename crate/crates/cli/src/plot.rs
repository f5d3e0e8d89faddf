//! Plot data: regression-space and coordinate-space scatter files, sampled
//! fitted lines, and an optional SVG rendering of both panels.

use std::fmt::Write;

use srmr_core::{FitResult, SpatialDataset};

pub const LINE_SAMPLES: usize = 51;
const PANEL: f64 = 400.0;
const MARGIN: f64 = 30.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
];
const OUTLIER_COLOUR: &str = "#d62728";

fn outlier_type(fit: &FitResult, i: usize) -> &'static str {
    let a = &fit.assignment;
    if a.type1.binary_search(&i).is_ok() {
        "type1"
    } else if a.type2.binary_search(&i).is_ok() {
        "type2"
    } else {
        "none"
    }
}

/// `(x, beta0 + beta1 * x)` samples of each fitted line across the observed
/// predictor range; empty unless there is exactly one predictor.
pub fn line_samples(ds: &SpatialDataset, fit: &FitResult) -> Vec<(usize, f64, f64)> {
    if ds.p() != 1 {
        return Vec::new();
    }
    let xs: Vec<f64> = (0..ds.n()).map(|i| ds.x()[(i, 1)]).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    for (c, comp) in fit.model.components.iter().enumerate() {
        for s in 0..LINE_SAMPLES {
            let x = lo + (hi - lo) * s as f64 / (LINE_SAMPLES - 1) as f64;
            out.push((c + 1, x, comp.beta[0] + comp.beta[1] * x));
        }
    }
    out
}

/// File name and contents of every plot output.
pub fn plot_files(ds: &SpatialDataset, fit: &FitResult, svg: bool) -> Vec<(String, String)> {
    let labels = &fit.assignment.labels;
    let p = ds.p();

    let mut reg = String::new();
    let xs: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    writeln!(reg, "{},y,label,outlier_type", xs.join(",")).unwrap();
    for i in 0..ds.n() {
        for j in 1..=p {
            write!(reg, "{},", ds.x()[(i, j)]).unwrap();
        }
        writeln!(reg, "{},{},{}", ds.y()[i], labels[i], outlier_type(fit, i)).unwrap();
    }

    let mut spa = String::from("sx,sy,label,outlier_type\n");
    for (i, s) in ds.coords().iter().enumerate() {
        writeln!(spa, "{},{},{},{}", s[0], s[1], labels[i], outlier_type(fit, i)).unwrap();
    }

    let samples = line_samples(ds, fit);
    let mut lines = String::from("component,x,y\n");
    for (c, x, y) in &samples {
        writeln!(lines, "{c},{x},{y}").unwrap();
    }

    let mut files = vec![
        ("regression.csv".to_string(), reg),
        ("spatial.csv".to_string(), spa),
        ("lines.csv".to_string(), lines),
    ];
    if svg {
        files.push(("scatter.svg".to_string(), render_svg(ds, fit, &samples)));
    }
    files
}

struct Scale {
    lo: [f64; 2],
    hi: [f64; 2],
    offset: f64,
}

impl Scale {
    fn new(points: impl Iterator<Item = (f64, f64)>, offset: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (x, y) in points {
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
        for a in 0..2 {
            if !(hi[a] > lo[a]) {
                lo[a] -= 1.0;
                hi[a] += 1.0;
            }
        }
        Self { lo, hi, offset }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let w = PANEL - 2.0 * MARGIN;
        let px = self.offset + MARGIN + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * w;
        let py = MARGIN + (1.0 - (y - self.lo[1]) / (self.hi[1] - self.lo[1])) * w;
        (px, py)
    }
}

fn colour(label: usize) -> &'static str {
    if label == 0 {
        OUTLIER_COLOUR
    } else {
        PALETTE[(label - 1) % PALETTE.len()]
    }
}

fn render_svg(ds: &SpatialDataset, fit: &FitResult, samples: &[(usize, f64, f64)]) -> String {
    let labels = &fit.assignment.labels;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = 2.0 * PANEL,
        h = PANEL
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();

    if ds.p() == 1 {
        let pts = (0..ds.n()).map(|i| (ds.x()[(i, 1)], ds.y()[i]));
        let scale = Scale::new(pts, 0.0);
        writeln!(out, r#"<g id="regression"><text x="{MARGIN}" y="20" font-size="12">x vs y</text>"#).unwrap();
        for i in 0..ds.n() {
            let (px, py) = scale.map(ds.x()[(i, 1)], ds.y()[i]);
            writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{}"/>"#, colour(labels[i])).unwrap();
        }
        for c in 1..=fit.k() {
            let pts: Vec<String> = samples
                .iter()
                .filter(|s| s.0 == c)
                .map(|&(_, x, y)| {
                    let (px, py) = scale.map(x, y);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                colour(c)
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }

    let scale = Scale::new(ds.coords().iter().map(|s| (s[0], s[1])), PANEL);
    writeln!(
        out,
        r#"<g id="spatial"><text x="{}" y="20" font-size="12">coordinates</text>"#,
        PANEL + MARGIN
    )
    .unwrap();
    for (i, s) in ds.coords().iter().enumerate() {
        let (px, py) = scale.map(s[0], s[1]);
        writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{}"/>"#, colour(labels[i])).unwrap();
    }
    writeln!(out, "</g>\n</svg>").unwrap();
    out
}
