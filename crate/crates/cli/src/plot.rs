//! `plot`: metric against p, one curve with a CI band per series, as SVG.

use std::fmt::Write as _;

use crate::results::{Rep, ResultRow};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub p: f64,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

fn label(row: &ResultRow) -> String {
    match row.phi {
        Some(phi) => format!("{} ({phi})", row.design),
        None => row.design.clone(),
    }
}

/// One series per `(design, phi)` in order of first appearance. Aggregate
/// rows are used when a series has them; otherwise replications are
/// averaged per `p`.
pub fn collect_series(rows: &[ResultRow], metric: &str) -> Vec<Series> {
    let mut labels: Vec<String> = Vec::new();
    for row in rows.iter().filter(|r| r.metric == metric) {
        let l = label(row);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == metric && label(r) == l).collect();
            let has_all = mine.iter().any(|r| r.rep == Rep::All);
            let mut ps: Vec<f64> = mine.iter().map(|r| r.p).collect();
            ps.sort_by(f64::total_cmp);
            ps.dedup();
            let points = ps
                .into_iter()
                .map(|p| {
                    let at: Vec<&&ResultRow> = mine
                        .iter()
                        .filter(|r| r.p == p && (r.rep == Rep::All) == has_all)
                        .collect();
                    let k = at.len() as f64;
                    Point {
                        p,
                        value: at.iter().map(|r| r.value).sum::<f64>() / k,
                        lo: at.iter().map(|r| r.ci_lo).fold(f64::INFINITY, f64::min),
                        hi: at.iter().map(|r| r.ci_hi).fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect();
            Series { label: l, points }
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, allow_log: bool) -> Axis {
        let finite: Vec<f64> = values.filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Axis { lo: 0.0, hi: 1.0, log: false };
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if allow_log && lo > 0.0 && hi / lo > 100.0 {
            return Axis {
                lo: lo.log10().floor(),
                hi: hi.log10().ceil(),
                log: true,
            };
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * hi.abs().max(1.0) };
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            log: false,
        }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1e-300).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            return (self.lo as i32..=self.hi as i32)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect();
        }
        (0..=5)
            .map(|k| {
                let v = self.lo + (self.hi - self.lo) * k as f64 / 5.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

pub fn render_svg(series: &[Series], metric: &str) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let x = Axis::fit(pts().map(|p| p.p), false);
    let y = Axis::fit(pts().flat_map(|p| [p.value, p.lo, p.hi]), true);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + x.unit(v) * plot_w;
    let sy = |v: f64| TOP + (1.0 - y.unit(v)) * plot_h;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).ok();
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).ok();
    writeln!(w, r#"<g class="axes" stroke="black">"#).ok();
    writeln!(w, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/>"#, TOP + plot_h, LEFT + plot_w, TOP + plot_h).ok();
    writeln!(w, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/>"#, TOP + plot_h).ok();
    for (v, text) in x.ticks() {
        let px = sx(v);
        writeln!(w, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}"/>"#, TOP + plot_h, TOP + plot_h + 5.0).ok();
        writeln!(w, r#"<text x="{px:.2}" y="{}" text-anchor="middle" stroke="none">{text}</text>"#, TOP + plot_h + 18.0).ok();
    }
    for (v, text) in y.ticks() {
        let py = sy(v);
        writeln!(w, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}"/>"#, LEFT - 5.0).ok();
        writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end" stroke="none">{text}</text>"#, LEFT - 8.0, py + 4.0).ok();
    }
    writeln!(w, "</g>").ok();
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">p</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0).ok();
    writeln!(w, r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0, escape(metric)).ok();

    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        writeln!(w, r#"<g class="series" data-label="{}">"#, escape(&series.label)).ok();
        let finite: Vec<&Point> = series.points.iter().filter(|p| p.lo.is_finite() && p.hi.is_finite()).collect();
        if finite.len() > 1 {
            let upper = finite.iter().map(|p| format!("{:.2},{:.2}", sx(p.p), sy(p.hi)));
            let lower = finite.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.p), sy(p.lo)));
            let band: Vec<String> = upper.chain(lower).collect();
            writeln!(w, r#"<polygon class="ci" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" ")).ok();
        }
        let line: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.value.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.p), sy(p.value)))
            .collect();
        writeln!(w, r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).ok();
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(w, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).ok();
        writeln!(w, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.label)).ok();
        writeln!(w, "</g>").ok();
    }
    writeln!(w, "</svg>").ok();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(design: &str, p: f64, value: f64, rep: Rep) -> ResultRow {
        ResultRow {
            design: design.into(),
            p,
            phi: None,
            metric: "m".into(),
            value,
            ci_lo: value - 0.1,
            ci_hi: value + 0.1,
            rep,
        }
    }

    #[test]
    fn series_prefer_aggregates() {
        let rows = vec![
            row("a", 0.5, 1.0, Rep::Index(0)),
            row("a", 0.5, 3.0, Rep::Index(1)),
            row("a", 0.5, 2.5, Rep::All),
            row("b", 0.7, 1.0, Rep::Index(0)),
            row("b", 0.5, 3.0, Rep::Index(0)),
            row("b", 0.5, 5.0, Rep::Index(1)),
        ];
        let s = collect_series(&rows, "m");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].points, vec![Point { p: 0.5, value: 2.5, lo: 2.4, hi: 2.6 }]);
        assert_eq!(s[1].points[0].value, 4.0);
        assert_eq!(s[1].points[1].p, 0.7);
        assert!(collect_series(&rows, "other").is_empty());
    }

    #[test]
    fn empty_plot_has_axes_only() {
        let svg = render_svg(&[], "m");
        assert!(svg.contains(r#"class="axes""#));
        assert!(!svg.contains(r#"class="series""#));
    }
}
