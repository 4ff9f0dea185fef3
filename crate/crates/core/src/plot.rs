//! Minimal SVG line plots: estimate ± 95% interval against mesh on a log-x axis.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotPoint {
    pub mesh: f64,
    pub estimate: f64,
    /// Half-width of the error bar.
    pub ci95: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<PlotPoint>,
}

/// Horizontal dashed reference line.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub name: String,
    pub value: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

pub fn render_svg(title: &str, y_label: &str, series: &[Series], references: &[Reference]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.mesh)).filter(|m| *m > 0.0).map(f64::log10);
    let (mut x_lo, mut x_hi) = bounds(xs).unwrap_or((-1.0, 0.0));
    if x_hi - x_lo < 1e-9 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let pad_x = 0.05 * (x_hi - x_lo);
    let (x_lo, x_hi) = (x_lo - pad_x, x_hi + pad_x);
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().flat_map(|p| [p.estimate - p.ci95, p.estimate + p.ci95]))
        .chain(references.iter().map(|r| r.value));
    let (mut y_lo, mut y_hi) = bounds(ys).unwrap_or((0.0, 1.0));
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad_y = 0.08 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad_y, y_hi + pad_y);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |mesh: f64| MARGIN_LEFT + (mesh.log10() - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| MARGIN_Y + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for e in (x_lo.ceil() as i32)..=(x_hi.floor() as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{MARGIN_Y}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, MARGIN_Y + plot_h);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, MARGIN_Y + plot_h + 14.0);
    }
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/>"##, MARGIN_LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, MARGIN_LEFT - 4.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mesh</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 6.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        MARGIN_Y + plot_h / 2.0,
        MARGIN_Y + plot_h / 2.0,
        escape(y_label)
    );

    let mut legend_y = MARGIN_Y + 10.0;
    let legend_x = MARGIN_LEFT + plot_w + 12.0;
    for r in references {
        let y = sy(r.value);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#555" stroke-dasharray="5,4"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r##"<line x1="{legend_x}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="#555" stroke-dasharray="5,4"/>"##,
            legend_x + 18.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, legend_x + 22.0, legend_y + 4.0, escape(&r.name));
        legend_y += 16.0;
    }
    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<&PlotPoint> = series.points.iter().filter(|p| p.mesh > 0.0 && p.estimate.is_finite()).collect();
        pts.sort_by(|a, b| a.mesh.total_cmp(&b.mesh));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.mesh), sy(p.estimate))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for p in pts {
            let (x, y) = (sx(p.mesh), sy(p.estimate));
            let (lo, hi) = (sy(p.estimate - p.ci95), sy(p.estimate + p.ci95));
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="{color}"/>"#);
            for yy in [lo, hi] {
                let _ = writeln!(s, r#"<line x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{color}"/>"#, x - 3.0, x + 3.0);
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<line x1="{legend_x}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/>"#,
            legend_x + 18.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, legend_x + 22.0, legend_y + 4.0, escape(&series.name));
        legend_y += 16.0;
    }
    s.push_str("</svg>\n");
    s
}
