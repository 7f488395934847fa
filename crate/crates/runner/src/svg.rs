//! Static side-by-side heatmaps of two signed fields on a planar lattice.

use std::fmt::Write;

use abwalk_core::Lattice64;

const CELL: f64 = 8.0;
const GAP: f64 = 24.0;
const TITLE: f64 = 20.0;

/// Diverging blue-white-red colour for `v` in `[-scale, scale]`.
pub fn signed_color(v: f64, scale: f64) -> String {
    let s = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 * (1.0 - s.abs()) + c * s.abs()).round() as u8;
    let (r, g, b) = if s >= 0.0 { (fade(178.0), fade(24.0), fade(43.0)) } else { (fade(33.0), fade(102.0), fade(172.0)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Two panels sharing one colour scale, symmetric about zero at the largest
/// magnitude in either field. `None` for lattices that are not planar.
pub fn heatmap_pair(lattice: &Lattice64, left: (&str, &[f64]), right: (&str, &[f64]), caption: &str) -> Option<String> {
    if lattice.dim() != 2 {
        return None;
    }
    let (lo, hi) = lattice.coord_bounds();
    let (nx, ny) = ((hi[0] - lo[0] + 1) as f64, (hi[1] - lo[1] + 1) as f64);
    let panel_w = nx * CELL;
    let width = 2.0 * panel_w + GAP;
    let height = ny * CELL + 2.0 * TITLE;
    let scale = left.1.iter().chain(right.1).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (panel, (title, values)) in [left, right].into_iter().enumerate() {
        let x0 = panel as f64 * (panel_w + GAP);
        let _ = writeln!(s, r#"<text x="{}" y="14" font-family="sans-serif" font-size="12">{}</text>"#, x0, escape(title));
        let _ = writeln!(s, "<g>");
        for (x, &v) in values.iter().enumerate().take(lattice.len()) {
            let k = lattice.coords(x);
            // row 0 at the bottom
            let cx = x0 + (k[0] - lo[0]) as f64 * CELL;
            let cy = TITLE + (hi[1] - k[1]) as f64 * CELL;
            let _ = writeln!(
                s,
                r#"<rect x="{cx}" y="{cy}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                signed_color(v, scale)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r#"<text x="0" y="{}" font-family="sans-serif" font-size="11">{} (color scale +-{:.4e})</text>"#,
        height - 5.0,
        escape(caption),
        scale
    );
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
