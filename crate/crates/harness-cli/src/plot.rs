use std::fmt::Write;

use crate::artifacts::DiagramRow;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates onto the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let x = range(&mut xs.clone());
        let log_x = x.0 > 0.0 && x.1 / x.0 > 100.0;
        let x = if log_x { (x.0.log10(), x.1.log10()) } else { x };
        Frame { x, y: range(&mut ys.clone()), log_x }
    }

    fn px(&self, x: f64) -> f64 {
        let x = if self.log_x { x.log10() } else { x };
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(svg, r#"<line class="axis" x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<line class="axis" x1="{l}" y1="{b}" x2="{l}" y2="{t}" stroke="black"/>"#);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let xv = if self.log_x { 10f64.powf(xv) } else { xv };
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(svg, r#"<text x="{xp:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, b + 16.0, tick(xv));
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{yp:.1}" font-size="11" text-anchor="end">{}</text>"#, l - 6.0, tick(yv));
        }
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(x_label));
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn polyline(svg: &mut String, class: &str, name: &str, colour: &str, pts: &[(f64, f64)]) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        svg,
        r#"<polyline class="{class}" data-name="{}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
        escape(name),
        coords.join(" ")
    );
}

fn legend(svg: &mut String, k: usize, name: &str, colour: &str) {
    let y = MARGIN + 16.0 * k as f64;
    let x = WIDTH - MARGIN - 150.0;
    let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"/>"#, x + 20.0);
    let _ = writeln!(svg, r#"<text class="legend" x="{}" y="{}" font-size="12">{}</text>"#, x + 26.0, y + 4.0, escape(name));
}

/// Cost against episode, one polyline per named series.
pub fn learning_curve_svg(series: &[(String, Vec<f64>)]) -> String {
    let frame = Frame::new(
        series.iter().flat_map(|(_, v)| (0..v.len()).map(|i| i as f64)),
        series.iter().flat_map(|(_, v)| v.iter().copied()),
    );
    let mut svg = open();
    frame.axes(&mut svg, "episode", "smoothed total cost");
    for (k, (name, values)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (frame.px(i as f64), frame.py(v))).collect();
        polyline(&mut svg, "series", name, colour, &pts);
        legend(&mut svg, k, name, colour);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Step path through `(theta, groups)` points sorted by theta: each change
/// in the group count is drawn as a vertical jump at the new theta.
pub fn staircase(points: &[(f64, usize)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(theta, groups) in points {
        if let Some(&(_, prev)) = out.last() {
            if prev != groups as f64 {
                out.push((theta, prev));
            }
        }
        out.push((theta, groups as f64));
    }
    out
}

/// State-group count against theta, one staircase per branch.
pub fn bifurcation_svg(rows: &[DiagramRow]) -> String {
    let frame = Frame::new(rows.iter().map(|r| r.theta), rows.iter().map(|r| r.n_state_groups as f64));
    let mut svg = open();
    frame.axes(&mut svg, "theta", "state groups");
    let mut branches: Vec<usize> = rows.iter().map(|r| r.branch_id).collect();
    branches.sort_unstable();
    branches.dedup();
    for (k, id) in branches.iter().enumerate() {
        let mut pts: Vec<(f64, usize)> = rows.iter().filter(|r| r.branch_id == *id).map(|r| (r.theta, r.n_state_groups)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let colour = PALETTE[k % PALETTE.len()];
        let mapped: Vec<(f64, f64)> = staircase(&pts).into_iter().map(|(x, y)| (frame.px(x), frame.py(y))).collect();
        let name = format!("branch {id}");
        polyline(&mut svg, "branch", &name, colour, &mapped);
        legend(&mut svg, k, &name, colour);
    }
    svg.push_str("</svg>\n");
    svg
}
