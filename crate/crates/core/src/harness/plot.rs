//! Metric-versus-acceleration line charts as text-free PNG and labeled SVG.

use std::fmt::Write as _;

use crate::error::Result;
use crate::io::encode_png_raw;

/// One curve: a name and `(x, y)` points with `y ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

const MARGIN: f64 = 40.0;

fn x_range(series: &[Series]) -> (f64, f64) {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

struct Frame {
    w: f64,
    h: f64,
    x0: f64,
    x1: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2.0 * MARGIN);
        let py = self.h - MARGIN - y.clamp(0.0, 1.0) * (self.h - 2.0 * MARGIN);
        (px, py)
    }
}

struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    fn dot(&mut self, x: f64, y: f64, c: [u8; 3], r: i64) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0 && py >= 0 && (px as usize) < self.w && (py as usize) < self.h {
                    let i = 3 * (py as usize * self.w + px as usize);
                    self.rgb[i..i + 3].copy_from_slice(&c);
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: [u8; 3], r: i64) {
        let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            self.dot(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), c, r);
        }
    }
}

/// RGB PNG with axes, light grid lines at y = 0.25, 0.5, 0.75 and one colored
/// polyline per series (colors follow the SVG legend).
pub fn line_plot_png(series: &[Series], width: usize, height: usize) -> Result<Vec<u8>> {
    let mut cv = Canvas {
        w: width,
        h: height,
        rgb: vec![255; width * height * 3],
    };
    let (x0, x1) = x_range(series);
    let f = Frame {
        w: width as f64,
        h: height as f64,
        x0,
        x1,
    };
    for g in [0.25, 0.5, 0.75, 1.0] {
        cv.line(f.map(x0, g), f.map(x1, g), [225, 225, 225], 0);
    }
    cv.line(f.map(x0, 0.0), f.map(x1, 0.0), [0, 0, 0], 0);
    cv.line(f.map(x0, 0.0), f.map(x0, 1.0), [0, 0, 0], 0);
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        for pair in s.points.windows(2) {
            cv.line(f.map(pair[0].0, pair[0].1), f.map(pair[1].0, pair[1].1), c, 1);
        }
        for &(x, y) in &s.points {
            cv.dot(f.map(x, y).0, f.map(x, y).1, c, 3);
        }
    }
    encode_png_raw(width, height, png::ColorType::Rgb, png::BitDepth::Eight, &cv.rgb)
}

/// Same chart as SVG with title, axis labels, ticks and legend.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], width: usize, height: usize) -> String {
    let (x0, x1) = x_range(series);
    let f = Frame {
        w: width as f64,
        h: height as f64,
        x0,
        x1,
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#, width / 2, escape(title));
    for g in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (a, y) = f.map(x0, g);
        let (b, _) = f.map(x1, g);
        let stroke = if g == 0.0 { "black" } else { "#e1e1e1" };
        let _ = writeln!(s, r#"<line x1="{a:.1}" y1="{y:.1}" x2="{b:.1}" y2="{y:.1}" stroke="{stroke}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{g}</text>"#, a - 4.0, y + 4.0);
    }
    let (ax, ay0) = f.map(x0, 0.0);
    let (_, ay1) = f.map(x0, 1.0);
    let _ = writeln!(s, r#"<line x1="{ax:.1}" y1="{ay0:.1}" x2="{ax:.1}" y2="{ay1:.1}" stroke="black"/>"#);
    let mut ticks: Vec<f64> = series.iter().flat_map(|t| t.points.iter().map(|p| p.0)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let (x, y) = f.map(t, 0.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, y + 14.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        width / 2,
        height - 6,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
        height / 2,
        height / 2,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let [r, g, b] = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = f.map(x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="rgb({r},{g},{b})" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = 30 + 14 * k;
        let lx = width as f64 - MARGIN - 90.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{}" width="10" height="10" fill="rgb({r},{g},{b})"/><text x="{:.1}" y="{}">{}</text>"#,
            ly - 9,
            lx + 14.0,
            ly,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> Vec<Series> {
        vec![
            Series {
                name: "a".into(),
                points: vec![(4.0, 0.9), (8.0, 0.5), (12.0, 0.3)],
            },
            Series {
                name: "b<c".into(),
                points: vec![(4.0, 1.0), (8.0, 0.7)],
            },
        ]
    }

    #[test]
    fn png_is_decodable_rgb() {
        let bytes = line_plot_png(&series(), 200, 120).unwrap();
        let mut r = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
        let mut buf = vec![0; r.output_buffer_size().unwrap()];
        let info = r.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height, info.color_type), (200, 120, png::ColorType::Rgb));
        assert!(buf.chunks(3).any(|p| p == PALETTE[0]));
    }

    #[test]
    fn svg_has_legend_and_escapes() {
        let svg = line_plot_svg("t", "x", "y", &series(), 300, 200);
        assert!(svg.contains("b&lt;c"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
