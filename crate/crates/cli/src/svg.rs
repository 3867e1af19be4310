//! Minimal line-plot SVG writer. Output depends only on the input data.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 64.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

pub struct RefLine {
    pub label: String,
    pub y: f64,
    pub dashed: bool,
}

#[derive(Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub ref_lines: Vec<RefLine>,
    /// Category names placed at integer x positions instead of numeric ticks.
    pub x_categories: Vec<String>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    /// Linear tick spacing.
    step: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = if log { (1.0, 10.0) } else { (0.0, 1.0) };
        }
        if log {
            let (lo, hi) = (lo.log10().floor(), hi.log10().ceil());
            Axis { lo, hi: if hi > lo { hi } else { lo + 1.0 }, log, step: 1.0 }
        } else {
            let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.5 };
            let lo = if lo >= 0.0 && lo - pad < 0.0 { 0.0 } else { lo - pad };
            let hi = hi + pad;
            let step = nice_step((hi - lo) / 5.0);
            Axis { lo: (lo / step).floor() * step, hi: (hi / step).ceil() * step, log, step }
        }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            (self.lo as i32..=self.hi as i32).map(|e| 10f64.powi(e)).collect()
        } else {
            let n = ((self.hi - self.lo) / self.step).round() as usize;
            (0..=n).map(|i| self.lo + self.step * i as f64).collect()
        }
    }
}

/// 1, 2 or 5 times a power of ten, at least `raw`.
fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|&s| s >= raw * (1.0 - 1e-9)).unwrap()
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn render(&self) -> String {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.ref_lines.iter().map(|r| r.y));
        let xa = Axis::fit(xs, self.log_x);
        let ya = Axis::fit(ys, self.log_y);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |x: f64| LEFT + xa.unit(x) * pw;
        let py = |y: f64| TOP + (1.0 - ya.unit(y)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );

        for t in ya.ticks() {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t));
        }
        if self.x_categories.is_empty() {
            for t in xa.ticks() {
                let x = px(t);
                let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, fmt_tick(t));
            }
        } else {
            for (i, name) in self.x_categories.iter().enumerate() {
                let x = px(i as f64);
                let _ = writeln!(
                    s,
                    r#"<text x="{x:.2}" y="{:.1}" text-anchor="end" font-size="8" transform="rotate(-60 {x:.2} {:.1})">{}</text>"#,
                    TOP + ph + 10.0,
                    TOP + ph + 10.0,
                    escape(name)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = 0;
        let mut legend_entry = |s: &mut String, name: &str, color: &str, dashed: bool| {
            let y = TOP + 12.0 + 18.0 * legend as f64;
            let x = LEFT + pw + 12.0;
            let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 22.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 28.0, y + 4.0, escape(name));
            legend += 1;
        };

        for (i, r) in self.ref_lines.iter().enumerate() {
            let color = if i == 0 { "#1f3fbf" } else { PALETTE[(i + 3) % PALETTE.len()] };
            let y = py(r.y);
            let dash = if r.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                LEFT + pw
            );
            legend_entry(&mut s, &r.label, color, r.dashed);
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            if series.markers {
                for p in &pts {
                    let (x, y) = p.split_once(',').unwrap();
                    let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
                }
            }
            legend_entry(&mut s, &series.name, color, false);
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_reference() {
        let plot = LinePlot {
            title: "t <1>".into(),
            series: vec![Series { name: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)], markers: true }],
            ref_lines: vec![RefLine { label: "ref".into(), y: 1.0, dashed: true }],
            ..Default::default()
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg, plot.render());
    }

    #[test]
    fn log_axis_ticks_are_decades() {
        let a = Axis::fit([0.1, 1000.0].into_iter(), true);
        assert_eq!(a.ticks().len(), 5);
        assert_eq!(fmt_tick(0.1), "0.1");
        assert_eq!(fmt_tick(1000.0), "1000");
        let lin = Axis::fit([0.26, 0.35].into_iter(), false);
        assert_eq!(lin.ticks().iter().map(|&t| fmt_tick(t)).collect::<Vec<_>>(), ["0.24", "0.26", "0.28", "0.3", "0.32", "0.34", "0.36"]);
    }
}
