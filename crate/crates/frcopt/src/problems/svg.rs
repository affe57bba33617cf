//! SVG plot of the traced streamlines with the structural outline.

use std::path::Path;

use super::vtk::write_atomic;

/// Writes streamline polylines (one `<path>` element each) and interface
/// segments over the domain box.
pub fn write_streamline_svg(
    path: &Path,
    lo: [f64; 2],
    hi: [f64; 2],
    streamlines: &[Vec<[f64; 2]>],
    outline: &[([f64; 2], [f64; 2])],
) -> Result<(), std::io::Error> {
    let width = 800.0;
    let scale = width / (hi[0] - lo[0]);
    let height = (hi[1] - lo[1]) * scale;
    // SVG y grows downward; flip
    let tx = |p: &[f64; 2]| ((p[0] - lo[0]) * scale, height - (p[1] - lo[1]) * scale);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\" stroke=\"#999\"/>\n"
    ));
    for line in streamlines {
        if line.len() < 2 {
            continue;
        }
        let mut d = String::new();
        for (i, p) in line.iter().enumerate() {
            let (x, y) = tx(p);
            if i == 0 {
                d.push_str(&format!("M {x:.2} {y:.2}"));
            } else {
                d.push_str(&format!(" L {x:.2} {y:.2}"));
            }
        }
        s.push_str(&format!("<path d=\"{d}\" fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"1\"/>\n"));
    }
    for (a, b) in outline {
        let (x1, y1) = tx(a);
        let (x2, y2) = tx(b);
        s.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"black\" stroke-width=\"1.5\"/>\n"
        ));
    }
    s.push_str("</svg>\n");
    write_atomic(path, &s)
}
