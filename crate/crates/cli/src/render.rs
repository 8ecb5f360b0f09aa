//! SVG renderings of tarmac frames and Grad-CAM overlays. Row 0 of the grid is the
//! southernmost latitude bin, so rows are flipped to draw north up.

use std::fmt::Write as _;

use taxiout::nn::CamMap;
use taxiout::rasterize::{FrameTensor, ARR_OCCUPANCY, ARR_TAXI, DEP_OCCUPANCY, DEP_TAXI};

const CELL: f64 = 16.0;

fn header(s: &mut String, h: usize, w: usize, title: &str) {
    let (width, height) = (w as f64 * CELL, h as f64 * CELL + 20.0);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="0" y="20" width="{width}" height="{}" fill="none" stroke="gray"/>"#,
        h as f64 * CELL
    );
    let _ = writeln!(s, r#"<text x="4" y="14" font-size="12">{}</text>"#, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn cell_xy(h: usize, i: usize, j: usize) -> (f64, f64) {
    (j as f64 * CELL, 20.0 + (h - 1 - i) as f64 * CELL)
}

/// Occupied cells: arrivals blue, departures red, shaded by cumulative taxi time.
pub fn frame_svg(frame: &FrameTensor, title: &str) -> String {
    let (h, w) = (frame.h(), frame.w());
    let mut s = String::new();
    header(&mut s, h, w, title);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = cell_xy(h, i, j);
            for (occ, taxi, color, dx) in [
                (ARR_OCCUPANCY, ARR_TAXI, "blue", 0.0),
                (DEP_OCCUPANCY, DEP_TAXI, "red", CELL / 2.0),
            ] {
                if frame.get(i, j, occ) > 0.0 {
                    let opacity = 0.4 + 0.6 * f64::from(frame.get(i, j, taxi)).min(1.0);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{CELL}" fill="{color}" fill-opacity="{opacity:.3}"/>"#,
                        x + dx,
                        CELL / 2.0
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn heat_color(v: f64) -> String {
    // White-yellow-red ramp.
    let v = v.clamp(0.0, 1.0);
    let g = (255.0 * (1.0 - v)).round() as u8;
    let b = (255.0 * (1.0 - v).powi(3)).round() as u8;
    format!("rgb(255,{g},{b})")
}

/// Min and max over every slice of a map, for a shared heat scale.
pub fn cam_range(cam: &CamMap) -> (f64, f64) {
    cam.values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// One CamMap slice as a heat layer min-max scaled over `range`, with the frame's
/// aircraft outlined on top. A spatially constant map draws no heat cells.
pub fn cam_svg(cam: &CamMap, t: usize, range: (f64, f64), frame: &FrameTensor, title: &str) -> String {
    let (h, w) = (cam.h, cam.w);
    let mut s = String::new();
    header(&mut s, h, w, title);
    let slice = cam.slice(t);
    let (lo, hi) = range;
    if hi > lo {
        for i in 0..h {
            for j in 0..w {
                let v = (slice[i * w + j] - lo) / (hi - lo);
                if v <= 0.0 {
                    continue;
                }
                let (x, y) = cell_xy(h, i, j);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{CELL}" height="{CELL}" fill="{}" fill-opacity="0.85"/>"#,
                    heat_color(v)
                );
            }
        }
    }
    for i in 0..frame.h().min(h) {
        for j in 0..frame.w().min(w) {
            let (x, y) = cell_xy(h, i, j);
            for (occ, color) in [(ARR_OCCUPANCY, "blue"), (DEP_OCCUPANCY, "red")] {
                if frame.get(i, j, occ) > 0.0 {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="none" stroke="{color}"/>"#,
                        x + CELL / 2.0,
                        y + CELL / 2.0
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_map_has_no_heat_cells() {
        let cam = CamMap {
            t: 1,
            h: 2,
            w: 3,
            values: vec![0.0; 6],
        };
        let svg = cam_svg(&cam, 0, cam_range(&cam), &FrameTensor::zeros(2, 3), "x");
        assert!(!svg.contains("rgb("));
        let flat = CamMap {
            values: vec![0.4; 6],
            ..cam
        };
        assert!(!cam_svg(&flat, 0, cam_range(&flat), &FrameTensor::zeros(2, 3), "x").contains("rgb("));
    }

    #[test]
    fn frame_colors() {
        let mut f = FrameTensor::zeros(2, 2);
        f.set(0, 0, ARR_OCCUPANCY, 1.0);
        f.set(1, 1, DEP_OCCUPANCY, 1.0);
        let svg = frame_svg(&f, "t");
        assert!(svg.contains(r#"fill="blue""#) && svg.contains(r#"fill="red""#));
    }
}
