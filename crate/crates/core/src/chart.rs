//! Minimal SVG line and bar charts for stage reports.
//!
//! Output is plain text with fixed number formatting so reruns produce
//! identical files.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Shaded region between two curves sharing x coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Scatter markers drawn on top of lines.
    pub markers: Vec<Series>,
    pub hlines: Vec<f64>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let finite = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (mut x0, mut x1) = finite(&mut xs.clone());
        let (mut y0, mut y1) = finite(&mut ys.clone());
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        let pad = ((y1 - y0) * 0.05).max(1e-9);
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r##"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="#333" fill="none"/>"##);
    for i in 0..=4 {
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let (py, px) = (f.py(fy), f.px(fx));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, py + 4.0, tick(fy));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px, b + 14.0, tick(fx));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 8.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e6) {
        format!("{v:.2e}")
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn path(f: &Frame, pts: impl Iterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, f.px(x), f.py(y));
    }
    d.trim_end().to_string()
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let xs = self
            .series
            .iter()
            .chain(&self.markers)
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .chain(self.bands.iter().flat_map(|b| b.x.iter().copied()))
            .collect::<Vec<_>>();
        let ys = self
            .series
            .iter()
            .chain(&self.markers)
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.bands.iter().flat_map(|b| b.lower.iter().chain(&b.upper).copied()))
            .chain(self.hlines.iter().copied())
            .collect::<Vec<_>>();
        let f = Frame::fit(xs.iter().copied(), ys.iter().copied());
        let mut out = String::new();
        header(&mut out, &self.title);
        for (i, b) in self.bands.iter().enumerate() {
            let upper = b.x.iter().copied().zip(b.upper.iter().copied());
            let lower: Vec<(f64, f64)> = b.x.iter().copied().zip(b.lower.iter().copied()).collect();
            let mut d = path(&f, upper);
            for (x, y) in lower.iter().rev().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = write!(d, " L{:.2} {:.2}", f.px(*x), f.py(*y));
            }
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(out, r#"<path d="{d} Z" fill="{color}" fill-opacity="0.18" stroke="none"><title>{}</title></path>"#, esc(&b.name));
        }
        for &h in &self.hlines {
            let y = f.py(h);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#777" stroke-dasharray="4 3"/>"##,
                W - RIGHT
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></path>"#,
                path(&f, s.points.iter().copied()),
                esc(&s.name)
            );
        }
        for (i, s) in self.markers.iter().enumerate() {
            let color = PALETTE[(i + self.series.len()) % PALETTE.len()];
            for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
            }
        }
        axes(&mut out, &f, &self.x_label, &self.y_label);
        legend(&mut out, self.series.iter().chain(&self.markers).map(|s| s.name.as_str()));
        out.push_str("</svg>\n");
        out
    }
}

fn legend<'a>(out: &mut String, names: impl Iterator<Item = &'a str>) {
    for (i, name) in names.enumerate() {
        let y = TOP + 4.0 + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{color}"/>"#, W - RIGHT - 150.0, y);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT - 136.0, y + 4.0, esc(name));
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub bars: Vec<(String, f64)>,
    /// Optional reference line (e.g. a criterion threshold).
    pub threshold: Option<f64>,
}

impl BarChart {
    pub fn to_svg(&self) -> String {
        let ys = self.bars.iter().map(|b| b.1).chain(self.threshold).chain([0.0]).collect::<Vec<_>>();
        let mut f = Frame::fit([0.0, self.bars.len().max(1) as f64].into_iter(), ys.iter().copied());
        if ys.iter().all(|v| !v.is_finite() || *v >= 0.0) {
            f.y0 = 0.0;
        }
        let mut out = String::new();
        header(&mut out, &self.title);
        let slot = (W - LEFT - RIGHT) / self.bars.len().max(1) as f64;
        let zero = f.py(0.0);
        for (i, (label, v)) in self.bars.iter().enumerate() {
            let x = LEFT + slot * i as f64 + slot * 0.15;
            let y = f.py(*v);
            let (top, h) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{color}"><title>{}: {}</title></rect>"#,
                slot * 0.7,
                esc(label),
                tick(*v)
            );
            let (lx, ly) = (x + slot * 0.35, H - BOTTOM + 12.0);
            let _ = writeln!(
                out,
                r#"<text x="{lx:.2}" y="{ly:.1}" text-anchor="end" font-size="9" transform="rotate(-20 {lx:.2} {ly:.1})">{}</text>"#,
                esc(label)
            );
        }
        if let Some(t) = self.threshold {
            let y = f.py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
                W - RIGHT
            );
        }
        let (l, b) = (LEFT, H - BOTTOM);
        let _ = writeln!(out, r##"<path d="M{l} {TOP} L{l} {b} L{:.1} {b}" stroke="#333" fill="none"/>"##, W - RIGHT);
        for i in 0..=4 {
            let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, f.py(fy) + 4.0, tick(fy));
        }
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            (TOP + b) / 2.0,
            (TOP + b) / 2.0,
            esc(&self.y_label)
        );
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed() {
        let c = LineChart {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![Series { name: "est".into(), points: vec![(1.0, 0.5), (2.0, f64::NAN), (3.0, 0.1)] }],
            bands: vec![Band { name: "cs".into(), x: vec![1.0, 3.0], lower: vec![0.0, 0.0], upper: vec![1.0, 0.2] }],
            markers: vec![],
            hlines: vec![0.0],
        };
        let svg = c.to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN"));
        assert_eq!(svg, c.to_svg());
    }

    #[test]
    fn bar_chart_handles_negative_and_empty() {
        let c = BarChart { title: "w".into(), y_label: "width".into(), bars: vec![("x".into(), -0.2), ("y".into(), 0.4)], threshold: Some(0.05) };
        let svg = c.to_svg();
        assert_eq!(svg.matches("<rect x=").count(), 2);
        let empty = BarChart::default().to_svg();
        assert!(empty.ends_with("</svg>\n"));
    }
}
