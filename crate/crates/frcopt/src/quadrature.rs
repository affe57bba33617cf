//! Gauss quadrature rules shared by the penalty integrals and the mechanics
//! assembly.

use crate::bspline::{Point, TensorBsplineSpace};

/// 1D Gauss-Legendre nodes and weights on `[-1, 1]` for `n <= 4` points.
pub fn gauss_1d(n: usize) -> (&'static [f64], &'static [f64]) {
    const P1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    const A2: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
    const P2: [f64; 2] = [-A2, A2];
    const W2: [f64; 2] = [1.0, 1.0];
    const A3: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
    const P3: [f64; 3] = [-A3, 0.0, A3];
    const W3: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    const A4A: f64 = 0.339_981_043_584_856_3;
    const A4B: f64 = 0.861_136_311_594_052_6;
    const P4: [f64; 4] = [-A4B, -A4A, A4A, A4B];
    const W4A: f64 = 0.652_145_154_862_546_2;
    const W4B: f64 = 0.347_854_845_137_453_9;
    const W4: [f64; 4] = [W4B, W4A, W4A, W4B];
    match n {
        1 => (&P1, &W1),
        2 => (&P2, &W2),
        3 => (&P3, &W3),
        4 => (&P4, &W4),
        _ => panic!("unsupported Gauss rule order {n}"),
    }
}

/// Tensor-product Gauss rule over an axis-aligned box `[lo, hi]` subdivided
/// into `cells` per dimension, with `npts` Gauss points per direction per
/// cell. Returns physical points and weights (summing to the box measure).
pub fn tensor_rule(
    dim: usize,
    lo: &[f64],
    hi: &[f64],
    cells: &[usize],
    npts: usize,
) -> (Vec<Point>, Vec<f64>) {
    let (gp, gw) = gauss_1d(npts);
    let mut h = [0.0f64; 3];
    for d in 0..dim {
        h[d] = (hi[d] - lo[d]) / cells[d] as f64;
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut cell = [0usize; 3];
    let total_cells: usize = cells[..dim].iter().product();
    for flat in 0..total_cells {
        let mut rem = flat;
        for d in 0..dim {
            cell[d] = rem % cells[d];
            rem /= cells[d];
        }
        let mut qp = [0usize; 3];
        let per_cell = npts.pow(dim as u32);
        for q in 0..per_cell {
            let mut rq = q;
            let mut x = [0.0f64; 3];
            let mut w = 1.0;
            for d in 0..dim {
                qp[d] = rq % npts;
                rq /= npts;
                let c0 = lo[d] + cell[d] as f64 * h[d];
                x[d] = c0 + 0.5 * h[d] * (1.0 + gp[qp[d]]);
                w *= 0.5 * h[d] * gw[qp[d]];
            }
            points.push(x);
            weights.push(w);
        }
    }
    (points, weights)
}

/// Tensor Gauss rule over the elements of a B-spline space with
/// `max degree + 1` points per direction (exact for the polynomial part).
pub fn space_rule(space: &TensorBsplineSpace) -> (Vec<Point>, Vec<f64>) {
    let dim = space.dim();
    let npts = (0..dim).map(|d| space.degree(d)).max().unwrap() + 1;
    let lo = space.lower();
    let hi = space.upper();
    let cells: Vec<usize> = (0..dim).map(|d| space.elements(d)).collect();
    tensor_rule(dim, &lo, &hi, &cells, npts)
}
