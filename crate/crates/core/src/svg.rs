//! Tiny SVG writer for quick-look figures (mesh overlays, traces, fields).
//! Coordinates are given in model space; the builder flips the y axis and
//! fits everything into a fixed-width canvas.

use std::fmt::Write as _;

pub struct SvgCanvas {
    min: (f64, f64),
    scale: f64,
    width: f64,
    height: f64,
    body: String,
}

impl SvgCanvas {
    /// Canvas fitted to the model-space bounding box, `px_width` pixels wide.
    pub fn new(bbox: (f64, f64, f64, f64), px_width: f64) -> SvgCanvas {
        let (x0, y0, x1, y1) = bbox;
        let margin = 0.03 * (x1 - x0).max(y1 - y0);
        let (x0, y0, x1, y1) = (x0 - margin, y0 - margin, x1 + margin, y1 + margin);
        let scale = px_width / (x1 - x0);
        SvgCanvas {
            min: (x0, y0),
            scale,
            width: px_width,
            height: (y1 - y0) * scale,
            body: String::new(),
        }
    }

    fn tx(&self, p: (f64, f64)) -> (f64, f64) {
        (
            (p.0 - self.min.0) * self.scale,
            self.height - (p.1 - self.min.1) * self.scale,
        )
    }

    fn pts_attr(&self, pts: &[(f64, f64)]) -> String {
        let mut s = String::with_capacity(pts.len() * 12);
        for &p in pts {
            let (x, y) = self.tx(p);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.pop();
        s
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            self.pts_attr(pts)
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="0.5"/>"#,
            self.pts_attr(pts)
        );
    }

    pub fn circle(&mut self, c: (f64, f64), r_px: f64, fill: &str) {
        let (x, y) = self.tx(c);
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r_px}" fill="{fill}"/>"#
        );
    }

    pub fn text(&mut self, at: (f64, f64), size_px: f64, s: &str) {
        let (x, y) = self.tx(at);
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size_px}" font-family="monospace">{s}</text>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.2} {:.2}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.body
        )
    }
}

/// Diverging blue-white-red map for `t` in [-1, 1].
pub fn diverging_color(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let u = 1.0 + t; // 0 at -1, 1 at 0
        (59.0 + 196.0 * u, 76.0 + 179.0 * u, 192.0 + 63.0 * u)
    } else {
        let u = 1.0 - t;
        (180.0 + 75.0 * u, 4.0 + 251.0 * u, 38.0 + 217.0 * u)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}
