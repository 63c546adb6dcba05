//! Bird's-eye SVG of one accumulated scene: detections colored by their
//! prediction outcome, ground-truth boxes on top. The sensor looks up the
//! page (x forward, y to the left).

use std::fmt::Write as _;

use radar_xconv::pointcloud::{Label, PointCloud};
use radar_xconv::synth::BoundingBox;

const PX_PER_M: f64 = 10.0;
const MARGIN_M: f64 = 3.0;
const BACKGROUND: &str = "#1e1e1e";

/// Outcome of one detection against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Moving object, right class.
    TruePositive,
    /// Static, predicted static.
    TrueNegative,
    /// Moving object missed or given the other moving class.
    FalseNegative,
    /// Static, predicted moving.
    FalsePositive,
}

impl Outcome {
    pub fn of(truth: Label, pred: Label) -> Outcome {
        match (truth, pred) {
            (Label::Static, Label::Static) => Outcome::TrueNegative,
            (Label::Static, _) => Outcome::FalsePositive,
            (t, p) if t == p => Outcome::TruePositive,
            _ => Outcome::FalseNegative,
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            Outcome::TruePositive => "#2f7fff",
            Outcome::TrueNegative => "#ffffff",
            Outcome::FalseNegative => "#ffd21f",
            Outcome::FalsePositive => "#ff3b30",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::TruePositive => "TP",
            Outcome::TrueNegative => "TN",
            Outcome::FalseNegative => "FN",
            Outcome::FalsePositive => "FP",
        }
    }
}

/// Color of a predicted class when no ground truth exists.
fn prediction_color(label: Label) -> &'static str {
    match label {
        Label::Static => "#9a9a9a",
        Label::Vehicle => "#2f7fff",
        Label::Pedestrian => "#e040fb",
    }
}

fn bounds(pc: &PointCloud, boxes: &[BoundingBox]) -> (f64, f64, f64, f64) {
    let mut b = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let points = pc.points.iter().map(|p| (p.x as f64, p.y as f64));
    let corners = boxes.iter().flat_map(|bx| bx.corners()).map(|c| (c[0], c[1]));
    for (x, y) in points.chain(corners) {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    (b.0 - MARGIN_M, b.1 + MARGIN_M, b.2 - MARGIN_M, b.3 + MARGIN_M)
}

/// Renders the scene. `truth` switches between outcome coloring and plain
/// prediction coloring.
pub fn render(pc: &PointCloud, pred: &[Label], truth: Option<&[Label]>, boxes: &[BoundingBox], title: &str) -> String {
    let (min_x, max_x, min_y, max_y) = bounds(pc, boxes);
    let (w, h) = ((max_y - min_y) * PX_PER_M, (max_x - min_x) * PX_PER_M);
    // Forward (x) points up the page, left (y) points left.
    let map = |x: f64, y: f64| ((max_y - y) * PX_PER_M, (max_x - x) * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="{BACKGROUND}"/>"#);

    let _ = writeln!(s, r#"<g id="boxes" fill="none" stroke-width="1.5">"#);
    for b in boxes {
        let stroke = if b.dynamic { "#3ddc84" } else { "#ffffff" };
        let opacity = 1.0 - 0.2 * b.frame_age as f64;
        let pts: Vec<String> = b
            .corners()
            .iter()
            .map(|c| {
                let (px, py) = map(c[0], c[1]);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" stroke="{stroke}" stroke-opacity="{opacity:.2}" data-kind="{:?}" data-age="{}"/>"#,
            pts.join(" "),
            b.kind,
            b.frame_age
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="detections">"#);
    for (i, p) in pc.points.iter().enumerate() {
        let (px, py) = map(p.x as f64, p.y as f64);
        let (color, class) = match truth {
            Some(t) => {
                let o = Outcome::of(t[i], pred[i]);
                (o.color(), o.name())
            }
            None => (prediction_color(pred[i]), pred[i].name()),
        };
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2" fill="{color}" class="{class}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    let (sx, sy) = map(0.0, 0.0);
    let _ = writeln!(s, r##"<path d="M {sx:.2} {sy:.2} l -5 9 l 10 0 z" fill="#ff8c00" id="sensor"/>"##);
    let legend: Vec<(&str, &str)> = match truth {
        Some(_) => [Outcome::TruePositive, Outcome::TrueNegative, Outcome::FalseNegative, Outcome::FalsePositive]
            .iter()
            .map(|o| (o.name(), o.color()))
            .collect(),
        None => Label::ALL.iter().map(|&l| (l.name(), prediction_color(l))).collect(),
    };
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="11">"#);
    for (k, (name, color)) in legend.iter().enumerate() {
        let y = 14.0 + 14.0 * k as f64;
        let _ = writeln!(s, r#"<circle cx="10" cy="{:.1}" r="4" fill="{color}"/>"#, y - 4.0);
        let _ = writeln!(s, r##"<text x="18" y="{y:.1}" fill="#dddddd">{name}</text>"##);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
