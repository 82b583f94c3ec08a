//! Self-contained SVG charts.

use fanet_core::engine::FinalSummary;
use fanet_core::Point;
use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
}

/// Pads a degenerate range so the axis still has extent.
fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e5) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

impl LineChart<'_> {
    pub fn render(&self) -> String {
        let mut out = String::new();
        header(&mut out, WIDTH, HEIGHT);
        let (x0, y0) = (MARGIN_L, MARGIN_T);
        let (pw, ph) = (WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B);
        writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, x0 + pw / 2.0, escape(self.title)).unwrap();

        let all: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().copied()).collect();
        let (xmin, xmax) = span(all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min), all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
        let (ymin, ymax) = span(all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min), all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
        let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * pw;
        let sy = |y: f64| y0 + ph - (y - ymin) / (ymax - ymin) * ph;

        writeln!(out, r#"<g class="axes" stroke="black" fill="none">"#).unwrap();
        writeln!(out, r#"<line x1="{x0}" y1="{}" x2="{}" y2="{}"/>"#, y0 + ph, x0 + pw, y0 + ph).unwrap();
        writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{}"/>"#, y0 + ph).unwrap();
        writeln!(out, "</g>").unwrap();
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (xmin + f * (xmax - xmin), ymin + f * (ymax - ymin));
            let (px, py) = (sx(xv), sy(yv));
            writeln!(out, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + ph, y0 + ph + 5.0).unwrap();
            writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + ph + 18.0, tick_label(xv)).unwrap();
            writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0).unwrap();
            writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick_label(yv)).unwrap();
        }
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x0 + pw / 2.0, HEIGHT - 10.0, escape(self.x_label)).unwrap();
        writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            y0 + ph / 2.0,
            y0 + ph / 2.0,
            escape(self.y_label)
        )
        .unwrap();

        if all.is_empty() {
            writeln!(out, r#"<text class="no-data" x="{}" y="{}" text-anchor="middle" font-size="18" fill="gray">no data</text>"#, x0 + pw / 2.0, y0 + ph / 2.0).unwrap();
        }
        writeln!(out, r#"<g class="legend">"#).unwrap();
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let ly = y0 + 10.0 + 20.0 * i as f64;
            let lx = x0 + pw + 15.0;
            writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
            writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label)).unwrap();
        }
        writeln!(out, "</g>").unwrap();
        for (i, s) in self.series.iter().enumerate() {
            if s.points.is_empty() {
                continue;
            }
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(
                out,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                escape(&s.label),
                PALETTE[i % PALETTE.len()],
                pts.join(" ")
            )
            .unwrap();
        }
        out.push_str("</svg>\n");
        out
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull, counter-clockwise, by monotone chain.
pub fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Hull of the member positions grown by `pad` in every direction.
pub fn padded_hull(members: &[Point], pad: f64) -> Vec<Point> {
    let ring = 16;
    let pts = members
        .iter()
        .flat_map(|p| {
            (0..ring).map(move |k| {
                let t = std::f64::consts::TAU * k as f64 / ring as f64;
                Point::new(p.x + pad * t.cos(), p.y + pad * t.sin())
            })
        })
        .collect();
    convex_hull(pts)
}

pub fn layout(summary: &FinalSummary, title: &str) -> String {
    let area = summary.area;
    let side = 560.0;
    let scale = side / area.width().max(area.height());
    let (w, h) = (area.width() * scale + 80.0, area.height() * scale + 80.0);
    let px = |p: Point| ((p.x - area.min_x) * scale + 40.0, (area.max_y - p.y) * scale + 50.0);
    let mut out = String::new();
    header(&mut out, w, h + 10.0);
    writeln!(out, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title)).unwrap();
    let (ax, ay) = px(Point::new(area.min_x, area.max_y));
    writeln!(
        out,
        r#"<rect class="area" x="{ax:.2}" y="{ay:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        area.width() * scale,
        area.height() * scale
    )
    .unwrap();
    if summary.uavs.is_empty() {
        writeln!(out, r#"<text class="no-data" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18" fill="gray">no data</text>"#, w / 2.0, h / 2.0).unwrap();
    }
    let pos = |id| {
        let u = summary.uavs.iter().find(|u| u.id == id).expect("coalition member has a snapshot");
        Point::new(u.x, u.y)
    };
    for u in &summary.uavs {
        let (x, y) = px(Point::new(u.x, u.y));
        writeln!(
            out,
            r##"<circle class="coverage" cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="#1f77b4" fill-opacity="0.08" stroke="#1f77b4" stroke-opacity="0.3"/>"##,
            u.coverage_radius_m * scale
        )
        .unwrap();
    }
    let pad = 0.02 * area.width().max(area.height());
    for (i, c) in summary.coalitions.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let members: Vec<Point> = c.members.iter().map(|&m| pos(m)).collect();
        let pts: Vec<String> = padded_hull(&members, pad)
            .into_iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            r#"<polygon class="hull" data-coalition="{}" points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}"/>"#,
            c.id,
            pts.join(" ")
        )
        .unwrap();
    }
    for u in &summary.uavs {
        let (x, y) = px(Point::new(u.x, u.y));
        writeln!(out, r#"<circle class="uav" data-uav="{}" cx="{x:.2}" cy="{y:.2}" r="3" fill="black"/>"#, u.id).unwrap();
    }
    for c in &summary.coalitions {
        let (x, y) = px(pos(c.ground_leader));
        writeln!(out, r#"<rect class="ground-leader" x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="black" stroke-width="1.5"/>"#, x - 5.0, y - 5.0).unwrap();
        let (x, y) = px(pos(c.task_leader));
        writeln!(
            out,
            r#"<polygon class="task-leader" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="red" stroke-width="1.5"/>"#,
            x,
            y - 8.0,
            x - 7.0,
            y + 5.0,
            x + 7.0,
            y + 5.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="40" y="{:.2}">square: ground-connecting leader, triangle: task leader, {} coalitions</text>"#,
        h + 2.0,
        summary.coalitions.len()
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
            Point::new(0.5, 0.0),
        ];
        let h = convex_hull(pts);
        assert_eq!(h.len(), 4);
        assert!(!h.contains(&Point::new(0.5, 0.5)));
    }

    #[test]
    fn padded_hull_of_one_point_surrounds_it() {
        let h = padded_hull(&[Point::new(10.0, 10.0)], 2.0);
        assert_eq!(h.len(), 16);
        assert!(h.iter().all(|p| (p.distance(Point::new(10.0, 10.0)) - 2.0).abs() < 1e-9));
    }

    #[test]
    fn empty_chart_says_so() {
        let svg = LineChart { title: "t", x_label: "x", y_label: "y", series: vec![] }.render();
        assert!(svg.contains("no data"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"class="axes""#));
    }

    #[test]
    fn one_polyline_per_series() {
        let s = |l: &str| Series { label: l.into(), points: vec![(0.0, 1.0), (1.0, 2.0)] };
        let svg = LineChart { title: "t", x_label: "x", y_label: "y", series: vec![s("a"), s("b<"), s("c")] }.render();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("b&lt;"));
        assert!(!svg.contains("no data"));
    }
}
