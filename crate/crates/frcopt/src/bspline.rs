//! Uniform tensor-product B-spline spaces in 2D/3D with value and gradient
//! evaluation.
//!
//! Spaces use open uniform knot vectors of degree 1 to 3 per dimension over an
//! axis-aligned box. They back the level-set field, the fiber orientation
//! fields and (through degree-1 spaces) nodal data. Spaces and fields are
//! immutable after construction; evaluation is pure and can be called
//! concurrently.

use std::sync::Arc;

use thiserror::Error;

/// Spatial point. The third component is ignored by 2D spaces.
pub type Point = [f64; 3];

/// Maximum supported polynomial degree per dimension.
pub const MAX_DEGREE: usize = 3;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("point ({0:?}) lies outside the domain box")]
    OutsideDomain(Point),
    #[error("degree {0} unsupported (must be 1..=3)")]
    BadDegree(usize),
    #[error("element count must be positive")]
    NoElements,
    #[error("domain bounds must satisfy lo < hi per dimension")]
    BadDomain,
    #[error("coefficient vector has length {got}, space has {want} basis functions")]
    CoeffLen { got: usize, want: usize },
    #[error("greville interpolation system is singular")]
    SingularInterpolation,
}

/// Uniform tensor-product B-spline space of degree 1..=3 over a rectangular
/// domain. Open uniform knot vectors; `num_basis = elements + degree` per
/// dimension.
#[derive(Debug, Clone)]
pub struct TensorBsplineSpace {
    dim: usize,
    degree: [usize; 3],
    lo: [f64; 3],
    hi: [f64; 3],
    elems: [usize; 3],
    knots: [Vec<f64>; 3],
}

impl TensorBsplineSpace {
    pub fn new(
        dim: usize,
        degree: &[usize],
        lo: &[f64],
        hi: &[f64],
        elems: &[usize],
    ) -> Result<Self, SplineError> {
        assert!(dim == 2 || dim == 3, "only 2D and 3D spaces are supported");
        let mut deg = [1usize; 3];
        let mut l = [0.0f64; 3];
        let mut h = [1.0f64; 3];
        let mut ne = [1usize; 3];
        for d in 0..dim {
            if degree[d] == 0 || degree[d] > MAX_DEGREE {
                return Err(SplineError::BadDegree(degree[d]));
            }
            if elems[d] == 0 {
                return Err(SplineError::NoElements);
            }
            if !(lo[d] < hi[d]) {
                return Err(SplineError::BadDomain);
            }
            deg[d] = degree[d];
            l[d] = lo[d];
            h[d] = hi[d];
            ne[d] = elems[d];
        }
        let mut knots: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for d in 0..dim {
            knots[d] = open_uniform_knots(deg[d], l[d], h[d], ne[d]);
        }
        Ok(Self { dim, degree: deg, lo: l, hi: h, elems: ne, knots })
    }

    pub fn new_2d(degree: [usize; 2], lo: [f64; 2], hi: [f64; 2], elems: [usize; 2]) -> Result<Self, SplineError> {
        Self::new(2, &degree, &lo, &hi, &elems)
    }

    pub fn new_3d(degree: [usize; 3], lo: [f64; 3], hi: [f64; 3], elems: [usize; 3]) -> Result<Self, SplineError> {
        Self::new(3, &degree, &lo, &hi, &elems)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self, d: usize) -> usize {
        self.degree[d]
    }

    pub fn elements(&self, d: usize) -> usize {
        self.elems[d]
    }

    pub fn lower(&self) -> [f64; 3] {
        self.lo
    }

    pub fn upper(&self) -> [f64; 3] {
        self.hi
    }

    pub fn knots(&self, d: usize) -> &[f64] {
        &self.knots[d]
    }

    /// Number of basis functions along dimension `d`.
    pub fn num_basis_1d(&self, d: usize) -> usize {
        self.elems[d] + self.degree[d]
    }

    /// Total number of tensor-product basis functions.
    pub fn num_basis(&self) -> usize {
        (0..self.dim).map(|d| self.num_basis_1d(d)).product()
    }

    /// Flattened global index of the per-dimension basis indices
    /// (first dimension fastest).
    pub fn global_index(&self, per_dim: [usize; 3]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for d in 0..self.dim {
            idx += per_dim[d] * stride;
            stride *= self.num_basis_1d(d);
        }
        idx
    }

    /// Inverse of [`global_index`](Self::global_index).
    pub fn multi_index(&self, mut k: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for d in 0..self.dim {
            let n = self.num_basis_1d(d);
            out[d] = k % n;
            k /= n;
        }
        out
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|d| x[d] >= self.lo[d] - 1e-14 && x[d] <= self.hi[d] + 1e-14)
    }

    /// Greville abscissa of basis function `i` along dimension `d`.
    pub fn greville_1d(&self, d: usize, i: usize) -> f64 {
        let p = self.degree[d];
        let t = &self.knots[d];
        t[i + 1..i + 1 + p].iter().sum::<f64>() / p as f64
    }

    /// Greville point of the tensor-product basis function with global index `k`.
    pub fn greville(&self, k: usize) -> Point {
        let mi = self.multi_index(k);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.greville_1d(d, mi[d]);
        }
        x
    }

    /// Number of basis functions supported on any point: `(degree+1)^dim`.
    pub fn support_size(&self) -> usize {
        (0..self.dim).map(|d| self.degree[d] + 1).product()
    }

    /// Axis-aligned bounding box of the support of basis function `k`.
    pub fn support_box(&self, k: usize) -> ([f64; 3], [f64; 3]) {
        let mi = self.multi_index(k);
        let mut lo = self.lo;
        let mut hi = self.hi;
        for d in 0..self.dim {
            let t = &self.knots[d];
            lo[d] = t[mi[d]];
            hi[d] = t[mi[d] + self.degree[d] + 1];
        }
        (lo, hi)
    }

    /// Knot span containing `x` along dimension `d`. Spans are half-open,
    /// closed at the final domain boundary.
    fn span(&self, d: usize, x: f64) -> usize {
        let p = self.degree[d];
        let ne = self.elems[d];
        let h = (self.hi[d] - self.lo[d]) / ne as f64;
        let e = ((x - self.lo[d]) / h).floor() as isize;
        let e = e.clamp(0, ne as isize - 1) as usize;
        p + e
    }

    /// Evaluates all non-vanishing basis functions at `x`.
    ///
    /// Returns exactly `(degree+1)^dim` entries of (global basis index, value,
    /// gradient). Values sum to one and gradients to the zero vector.
    pub fn eval_basis(&self, x: &Point) -> Result<Vec<(usize, f64, [f64; 3])>, SplineError> {
        let mut out = Vec::with_capacity(self.support_size());
        self.eval_basis_into(x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`eval_basis`](Self::eval_basis); clears and
    /// fills `out`.
    pub fn eval_basis_into(
        &self,
        x: &Point,
        out: &mut Vec<(usize, f64, [f64; 3])>,
    ) -> Result<(), SplineError> {
        if !self.contains(x) {
            return Err(SplineError::OutsideDomain(*x));
        }
        out.clear();
        // Per-dimension values and derivatives of the (degree+1) active functions.
        let mut vals = [[0.0f64; MAX_DEGREE + 1]; 3];
        let mut ders = [[0.0f64; MAX_DEGREE + 1]; 3];
        let mut first = [0usize; 3];
        for d in 0..self.dim {
            let s = self.span(d, x[d]);
            basis_funs_and_derivs(&self.knots[d], self.degree[d], s, x[d], &mut vals[d], &mut ders[d]);
            first[d] = s - self.degree[d];
        }
        let counts: Vec<usize> = (0..self.dim).map(|d| self.degree[d] + 1).collect();
        let mut it = [0usize; 3];
        loop {
            let mut per_dim = [0usize; 3];
            let mut v = 1.0;
            for d in 0..self.dim {
                per_dim[d] = first[d] + it[d];
                v *= vals[d][it[d]];
            }
            let mut g = [0.0f64; 3];
            for gd in 0..self.dim {
                let mut gv = 1.0;
                for d in 0..self.dim {
                    gv *= if d == gd { ders[d][it[d]] } else { vals[d][it[d]] };
                }
                g[gd] = gv;
            }
            out.push((self.global_index(per_dim), v, g));
            // advance the mixed-radix counter
            let mut d = 0;
            loop {
                it[d] += 1;
                if it[d] < counts[d] {
                    break;
                }
                it[d] = 0;
                d += 1;
                if d == self.dim {
                    return Ok(());
                }
            }
        }
    }
}

/// Open uniform knot vector: `degree+1` repeated end knots, uniform interior.
fn open_uniform_knots(degree: usize, lo: f64, hi: f64, elems: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(elems + 2 * degree + 1);
    for _ in 0..=degree {
        t.push(lo);
    }
    let h = (hi - lo) / elems as f64;
    for e in 1..elems {
        t.push(lo + e as f64 * h);
    }
    for _ in 0..=degree {
        t.push(hi);
    }
    t
}

/// Cox-de Boor recursion: values and first derivatives of the `p+1` basis
/// functions that are non-zero on knot span `s` at `x`.
fn basis_funs_and_derivs(
    knots: &[f64],
    p: usize,
    s: usize,
    x: f64,
    vals: &mut [f64; MAX_DEGREE + 1],
    ders: &mut [f64; MAX_DEGREE + 1],
) {
    let mut n = [0.0f64; MAX_DEGREE + 1];
    let mut lower = [0.0f64; MAX_DEGREE + 1]; // degree p-1 values, captured
    let mut left = [0.0f64; MAX_DEGREE + 1];
    let mut right = [0.0f64; MAX_DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=p {
        if j == p {
            lower[..j].copy_from_slice(&n[..j]);
        }
        left[j] = x - knots[s + 1 - j];
        right[j] = knots[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    vals[..=p].copy_from_slice(&n[..=p]);
    if p == 0 {
        ders[0] = 0.0;
        return;
    }
    // dN_i = p * ( L_i/(t[i+p]-t[i]) - L_{i+1}/(t[i+p+1]-t[i+1]) ),
    // where L are the degree p-1 values on the same span (L_j corresponds to
    // basis index s-p+1+j).
    for r in 0..=p {
        let i = s - p + r;
        let a = if r > 0 {
            let den = knots[i + p] - knots[i];
            if den > 0.0 {
                lower[r - 1] / den
            } else {
                0.0
            }
        } else {
            0.0
        };
        let b = if r < p {
            let den = knots[i + p + 1] - knots[i + 1];
            if den > 0.0 {
                lower[r] / den
            } else {
                0.0
            }
        } else {
            0.0
        };
        ders[r] = p as f64 * (a - b);
    }
}

/// Scalar field over a [`TensorBsplineSpace`]: one coefficient per basis
/// function.
#[derive(Debug, Clone)]
pub struct ScalarField {
    space: Arc<TensorBsplineSpace>,
    coeffs: Vec<f64>,
}

impl ScalarField {
    pub fn new(space: Arc<TensorBsplineSpace>, coeffs: Vec<f64>) -> Result<Self, SplineError> {
        if coeffs.len() != space.num_basis() {
            return Err(SplineError::CoeffLen { got: coeffs.len(), want: space.num_basis() });
        }
        Ok(Self { space, coeffs })
    }

    pub fn constant(space: Arc<TensorBsplineSpace>, value: f64) -> Self {
        let n = space.num_basis();
        Self { space, coeffs: vec![value; n] }
    }

    /// Field with coefficients sampled from `f` at the Greville points.
    /// Reproduces polynomials up to degree one exactly.
    pub fn from_fn_greville(space: Arc<TensorBsplineSpace>, f: impl Fn(&Point) -> f64) -> Self {
        let coeffs = (0..space.num_basis()).map(|k| f(&space.greville(k))).collect();
        Self { space, coeffs }
    }

    /// Field interpolating `f` at the Greville points (dense collocation
    /// solve). Reproduces polynomials up to the space degree exactly.
    pub fn interpolate_greville(
        space: Arc<TensorBsplineSpace>,
        f: impl Fn(&Point) -> f64,
    ) -> Result<Self, SplineError> {
        let n = space.num_basis();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        let mut buf = Vec::new();
        for row in 0..n {
            let x = space.greville(row);
            space.eval_basis_into(&x, &mut buf)?;
            for &(k, v, _) in &buf {
                a[(row, k)] = v;
            }
            b[row] = f(&x);
        }
        let lu = a.lu();
        let sol = lu.solve(&b).ok_or(SplineError::SingularInterpolation)?;
        Ok(Self { space, coeffs: sol.iter().copied().collect() })
    }

    pub fn space(&self) -> &Arc<TensorBsplineSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Field value and gradient at `x`.
    pub fn eval(&self, x: &Point) -> Result<(f64, [f64; 3]), SplineError> {
        let mut buf = Vec::with_capacity(self.space.support_size());
        self.space.eval_basis_into(x, &mut buf)?;
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for &(k, bv, bg) in &buf {
            let c = self.coeffs[k];
            v += bv * c;
            for d in 0..3 {
                g[d] += bg[d] * c;
            }
        }
        Ok((v, g))
    }

    /// Value only (same cost as [`eval`](Self::eval)).
    pub fn value(&self, x: &Point) -> Result<f64, SplineError> {
        Ok(self.eval(x)?.0)
    }
}

/// Precomputed basis evaluations at a fixed set of points.
///
/// Rows have a fixed stride of `(degree+1)^dim` entries. Used by quadrature
/// loops so that per-iteration field evaluation reduces to coefficient dot
/// products.
#[derive(Debug, Clone)]
pub struct BasisTable {
    stride: usize,
    num_points: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

impl BasisTable {
    pub fn new(space: &TensorBsplineSpace, points: &[Point]) -> Result<Self, SplineError> {
        let stride = space.support_size();
        let mut indices = Vec::with_capacity(points.len() * stride);
        let mut values = Vec::with_capacity(points.len() * stride);
        let mut grads = Vec::with_capacity(points.len() * stride);
        let mut buf = Vec::new();
        for x in points {
            space.eval_basis_into(x, &mut buf)?;
            for &(k, v, g) in &buf {
                indices.push(k as u32);
                values.push(v);
                grads.push(g);
            }
        }
        Ok(Self { stride, num_points: points.len(), indices, values, grads })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Basis entries of point `row` as (index, value, gradient) triples.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64, [f64; 3])> + '_ {
        let lo = row * self.stride;
        let hi = lo + self.stride;
        (lo..hi).map(move |i| (self.indices[i] as usize, self.values[i], self.grads[i]))
    }

    /// Field value and gradient at point `row` for the given coefficients.
    pub fn eval(&self, row: usize, coeffs: &[f64]) -> (f64, [f64; 3]) {
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for (k, bv, bg) in self.row(row) {
            let c = coeffs[k];
            v += bv * c;
            g[0] += bg[0] * c;
            g[1] += bg[1] * c;
            g[2] += bg[2] * c;
        }
        (v, g)
    }

    /// Accumulates `dv * B_k + dg . grad(B_k)` into `out[k]` for every basis
    /// function active at point `row` (chain rule to coefficient space).
    pub fn accumulate(&self, row: usize, dv: f64, dg: [f64; 3], out: &mut [f64]) {
        for (k, bv, bg) in self.row(row) {
            out[k] += dv * bv + dg[0] * bg[0] + dg[1] * bg[1] + dg[2] * bg[2];
        }
    }
}
