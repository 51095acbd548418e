//! Static SVG line plots and terminal sparklines.

use std::fmt::Write;

use crate::pac_bounds::BoundCurve;

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 56.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 1.0 };
            return Self { lo: lo - pad, hi: hi + pad };
        }
        Self { lo, hi }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

fn panel(svg: &mut String, x0: f64, title: &str, xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) {
    let (ax, ay) = (Axis::fit(xs), Axis::fit(ys));
    let (left, right) = (x0 + MARGIN, x0 + PANEL_W - 16.0);
    let (top, bottom) = (36.0, PANEL_H - MARGIN);
    let _ = writeln!(svg, r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#888"/>"##, right - left, bottom - top);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, (left + right) / 2.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#, (left + right) / 2.0, PANEL_H - 14.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 {} {})">{y_label}</text>"#,
        x0 + 14.0,
        (top + bottom) / 2.0,
        x0 + 14.0,
        (top + bottom) / 2.0
    );
    for (v, anchor, x) in [(ax.lo, "start", left), (ax.hi, "end", right)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="{anchor}" font-size="10">{}</text>"#, bottom + 14.0, tick(v));
    }
    for (v, y) in [(ay.lo, bottom), (ay.hi, top + 8.0)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{}</text>"#, left - 4.0, tick(v));
    }
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| format!("{:.2},{:.2}", ax.map(*x, left, right), ay.map(*y, bottom, top)))
        .collect();
    let _ = writeln!(svg, r##"<polyline fill="none" stroke="#1f5fbf" stroke-width="1.8" points="{}"/>"##, points.join(" "));
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Two panels: the bound against `N` on linear axes, and on log-log axes
/// (log `N` against the bound itself when it is not strictly positive).
pub fn render_svg(curve: &BoundCurve) -> String {
    let ns: Vec<f64> = curve.points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| p.bound.value).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{PANEL_H}" font-family="sans-serif">"#,
        2.0 * PANEL_W
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let label = format!("{} bound (lambda = {}, tau = {})", curve.kind, curve.lambda_rule, curve.tau);
    panel(&mut svg, 0.0, &label, &ns, &ys, "N", "bound");
    let log_ns: Vec<f64> = ns.iter().map(|n| n.log10()).collect();
    if ys.iter().all(|y| *y > 0.0) {
        let log_ys: Vec<f64> = ys.iter().map(|y| y.log10()).collect();
        panel(&mut svg, PANEL_W, "log-log", &log_ns, &log_ys, "log10 N", "log10 bound");
    } else {
        panel(&mut svg, PANEL_W, "log N", &log_ns, &ys, "log10 N", "bound");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Unicode block sparkline of `values`; non-finite entries become spaces.
pub fn sparkline(values: &[f64]) -> String {
    const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            if !v.is_finite() {
                ' '
            } else if hi > lo {
                BARS[(((v - lo) / (hi - lo)) * 7.0).round() as usize]
            } else {
                BARS[0]
            }
        })
        .collect()
}
