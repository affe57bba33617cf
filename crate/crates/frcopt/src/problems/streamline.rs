//! Streamline tracing of the fiber tangent field: fixed-step fourth-order
//! integration of the unit tangent, seeded on a uniform grid, traced in both
//! directions, terminating at the domain boundary, in masked (void) regions
//! or at a length cap.

use crate::fiber::{tangent, Orientation};

#[derive(Debug, Clone, Copy)]
pub struct StreamlineOptions {
    pub seed_spacing: f64,
    pub step: f64,
    pub max_length: f64,
}

impl Default for StreamlineOptions {
    fn default() -> Self {
        Self { seed_spacing: 0.1, step: 1e-2, max_length: 20.0 }
    }
}

/// Unit tangent direction at a 2D point, if inside the field's domain and
/// the mask.
fn direction(
    field: &dyn Orientation,
    mask: Option<&dyn Fn(&[f64; 2]) -> bool>,
    x: &[f64; 2],
) -> Option<[f64; 2]> {
    if let Some(m) = mask {
        if !m(x) {
            return None;
        }
    }
    let s = field.sample(&[x[0], x[1], 0.0])?;
    let t = tangent(s.theta_xy, 0.0);
    Some([t.x, t.y])
}

/// Classical fourth-order step of the direction field; `sign` selects the
/// forward or backward branch.
fn rk4_step(
    field: &dyn Orientation,
    mask: Option<&dyn Fn(&[f64; 2]) -> bool>,
    x: &[f64; 2],
    h: f64,
    sign: f64,
) -> Option<[f64; 2]> {
    let f = |p: &[f64; 2]| direction(field, mask, p).map(|d| [sign * d[0], sign * d[1]]);
    let k1 = f(x)?;
    let k2 = f(&[x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]])?;
    let k3 = f(&[x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]])?;
    let k4 = f(&[x[0] + h * k3[0], x[1] + h * k3[1]])?;
    Some([
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Traces streamlines of a 2D orientation field over `[lo, hi]`.
///
/// Seeds on a uniform grid with `seed_spacing`; each polyline integrates in
/// both directions from its seed and stops at the domain boundary, where the
/// mask turns false (one step beyond at most), or at `max_length`.
pub fn trace_streamlines(
    field: &dyn Orientation,
    lo: [f64; 2],
    hi: [f64; 2],
    mask: Option<&dyn Fn(&[f64; 2]) -> bool>,
    opts: &StreamlineOptions,
) -> Vec<Vec<[f64; 2]>> {
    let mut lines = Vec::new();
    let nx = ((hi[0] - lo[0]) / opts.seed_spacing).round() as usize;
    let ny = ((hi[1] - lo[1]) / opts.seed_spacing).round() as usize;
    let inside = |p: &[f64; 2]| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1];
    let max_steps = (opts.max_length / opts.step).ceil() as usize;
    for i in 0..=nx {
        for j in 0..=ny {
            let seed = [
                lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / (nx as f64 + 1.0),
                lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / (ny as f64 + 1.0),
            ];
            if !inside(&seed) || direction(field, mask, &seed).is_none() {
                continue;
            }
            // integrate both branches, then join them through the seed
            let mut branches: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
            for (b, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                let mut x = seed;
                for _ in 0..max_steps / 2 {
                    let Some(next) = rk4_step(field, mask, &x, opts.step, sign) else { break };
                    if !inside(&next) {
                        break;
                    }
                    branches[b].push(next);
                    x = next;
                    if mask.map_or(false, |m| !m(&next)) {
                        break; // at most one step into the void
                    }
                }
            }
            let mut line: Vec<[f64; 2]> = branches[1].iter().rev().copied().collect();
            line.push(seed);
            line.extend_from_slice(&branches[0]);
            if line.len() > 2 {
                lines.push(line);
            }
        }
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::AnalyticOrientation;
    use nalgebra::Vector3;

    type V3 = Vector3<f64>;

    #[test]
    fn constant_field_gives_horizontal_lines() {
        let field = AnalyticOrientation {
            dim: 2,
            theta_xy: |_: &crate::bspline::Point| (0.0, V3::zeros()),
            theta_z: None::<fn(&crate::bspline::Point) -> (f64, V3)>,
        };
        let opts = StreamlineOptions { seed_spacing: 0.25, step: 1e-2, max_length: 4.0 };
        let lines = trace_streamlines(&field, [0.0, 0.0], [1.0, 1.0], None, &opts);
        assert!(!lines.is_empty());
        for line in &lines {
            let y0 = line[0][1];
            for p in line {
                assert!((p[1] - y0).abs() < 1e-9, "streamline not horizontal");
            }
        }
    }

    #[test]
    fn circumferential_field_closes_circles() {
        let field = AnalyticOrientation {
            dim: 2,
            theta_xy: |x: &crate::bspline::Point| {
                let th = x[1].atan2(x[0]) + std::f64::consts::FRAC_PI_2;
                let r2 = x[0] * x[0] + x[1] * x[1];
                (th, V3::new(-x[1] / r2, x[0] / r2, 0.0))
            },
            theta_z: None::<fn(&crate::bspline::Point) -> (f64, V3)>,
        };
        // trace one revolution from (r, 0) and measure the closure gap
        let r = 0.5f64;
        let mut x = [r, 0.0];
        let step = 1e-3;
        let n = (2.0 * std::f64::consts::PI * r / step).round() as usize;
        for _ in 0..n {
            x = rk4_step(&field, None, &x, step, 1.0).unwrap();
        }
        let gap = ((x[0] - r).powi(2) + x[1].powi(2)).sqrt();
        assert!(gap < 1e-3, "closure gap {gap}");
    }

    #[test]
    fn masked_region_terminates_lines() {
        let field = AnalyticOrientation {
            dim: 2,
            theta_xy: |_: &crate::bspline::Point| (0.0, V3::zeros()),
            theta_z: None::<fn(&crate::bspline::Point) -> (f64, V3)>,
        };
        // void for x > 0.5
        let mask = |x: &[f64; 2]| x[0] <= 0.5;
        let opts = StreamlineOptions { seed_spacing: 0.5, step: 1e-2, max_length: 4.0 };
        let lines = trace_streamlines(&field, [0.0, 0.0], [1.0, 1.0], Some(&mask), &opts);
        for line in &lines {
            for p in line {
                assert!(p[0] <= 0.5 + 1.5 * opts.step, "entered void: {p:?}");
            }
        }
    }
}
