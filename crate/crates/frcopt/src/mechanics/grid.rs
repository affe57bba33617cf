//! Fixed background analysis grid: uniform square bilinear quadrilaterals.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have at least one element per dimension")]
    Empty,
    #[error("element size must be equal per dimension (hx={0}, hy={1})")]
    Anisotropic(f64, f64),
}

/// Uniform rectangular grid of square bilinear elements over an axis-aligned
/// box. Nodes and elements are numbered with the y index fastest, which keeps
/// the assembled system bandwidth proportional to the shorter grid dimension
/// for the common wide-domain problems.
#[derive(Debug, Clone)]
pub struct AnalysisGrid {
    nx: usize,
    ny: usize,
    lo: [f64; 2],
    h: f64,
}

impl AnalysisGrid {
    pub fn new(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 {
            return Err(GridError::Empty);
        }
        let hx = (hi[0] - lo[0]) / nx as f64;
        let hy = (hi[1] - lo[1]) / ny as f64;
        if (hx - hy).abs() > 1e-9 * hx.max(hy) {
            return Err(GridError::Anisotropic(hx, hy));
        }
        Ok(Self { nx, ny, lo, h: hx })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lo
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.lo[0] + self.h * self.nx as f64, self.lo[1] + self.h * self.ny as f64]
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        ix * (self.ny + 1) + iy
    }

    pub fn node_ij(&self, id: usize) -> (usize, usize) {
        (id / (self.ny + 1), id % (self.ny + 1))
    }

    pub fn node_pos(&self, id: usize) -> [f64; 2] {
        let (ix, iy) = self.node_ij(id);
        [self.lo[0] + ix as f64 * self.h, self.lo[1] + iy as f64 * self.h]
    }

    pub fn elem_id(&self, ex: usize, ey: usize) -> usize {
        ex * self.ny + ey
    }

    pub fn elem_ij(&self, e: usize) -> (usize, usize) {
        (e / self.ny, e % self.ny)
    }

    /// Lower-left corner of element `e`.
    pub fn elem_origin(&self, e: usize) -> [f64; 2] {
        let (ex, ey) = self.elem_ij(e);
        [self.lo[0] + ex as f64 * self.h, self.lo[1] + ey as f64 * self.h]
    }

    /// Node ids of element `e` in counter-clockwise corner order
    /// (lower-left, lower-right, upper-right, upper-left).
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = self.elem_ij(e);
        [
            self.node_id(ex, ey),
            self.node_id(ex + 1, ey),
            self.node_id(ex + 1, ey + 1),
            self.node_id(ex, ey + 1),
        ]
    }

    /// Element corner coordinates matching [`elem_nodes`](Self::elem_nodes).
    pub fn elem_corners(&self, e: usize) -> [[f64; 2]; 4] {
        let o = self.elem_origin(e);
        let h = self.h;
        [[o[0], o[1]], [o[0] + h, o[1]], [o[0] + h, o[1] + h], [o[0], o[1] + h]]
    }

    /// Bilinear shape function values of the 4 corner nodes at physical `x`
    /// inside element `e`.
    pub fn shape_values(&self, e: usize, x: &[f64; 2]) -> [f64; 4] {
        let o = self.elem_origin(e);
        let xi = (x[0] - o[0]) / self.h;
        let et = (x[1] - o[1]) / self.h;
        [(1.0 - xi) * (1.0 - et), xi * (1.0 - et), xi * et, (1.0 - xi) * et]
    }

    /// Physical gradients of the 4 bilinear shape functions at `x` in `e`.
    pub fn shape_gradients(&self, e: usize, x: &[f64; 2]) -> [[f64; 2]; 4] {
        let o = self.elem_origin(e);
        let xi = (x[0] - o[0]) / self.h;
        let et = (x[1] - o[1]) / self.h;
        let ih = 1.0 / self.h;
        [
            [-(1.0 - et) * ih, -(1.0 - xi) * ih],
            [(1.0 - et) * ih, -xi * ih],
            [et * ih, xi * ih],
            [-et * ih, (1.0 - xi) * ih],
        ]
    }

    /// Element containing `x` (clamped to the grid).
    pub fn elem_at(&self, x: &[f64; 2]) -> usize {
        let ex = (((x[0] - self.lo[0]) / self.h).floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let ey = (((x[1] - self.lo[1]) / self.h).floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        self.elem_id(ex, ey)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbering_round_trips() {
        let g = AnalysisGrid::new([0.0, 0.0], [2.0, 1.0], 8, 4).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.num_nodes(), 9 * 5);
        assert_eq!(g.num_elements(), 32);
        for id in 0..g.num_nodes() {
            let (ix, iy) = g.node_ij(id);
            assert_eq!(g.node_id(ix, iy), id);
        }
        let e = g.elem_id(3, 2);
        let n = g.elem_nodes(e);
        assert_eq!(n[0], g.node_id(3, 2));
        assert_eq!(n[2], g.node_id(4, 3));
    }

    #[test]
    fn anisotropic_grid_rejected() {
        assert!(AnalysisGrid::new([0.0, 0.0], [2.0, 1.0], 4, 4).is_err());
    }

    #[test]
    fn shape_functions_partition_unity() {
        let g = AnalysisGrid::new([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let e = g.elem_id(1, 2);
        let x = [0.3, 0.55];
        let n = g.shape_values(e, &x);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let gr = g.shape_gradients(e, &x);
        for d in 0..2 {
            let s: f64 = gr.iter().map(|g| g[d]).sum();
            assert!(s.abs() < 1e-13);
        }
    }
}
