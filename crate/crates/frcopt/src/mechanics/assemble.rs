//! Immersed 2D linear-elastic analysis on the background grid.
//!
//! Two backends share one assembly and solve path:
//!
//! - **Ersatz**: every element is integrated fully; the stiffness is scaled
//!   by a smoothed Heaviside of the level set (void floor `epsilon_void`).
//!   The geometry-to-stiffness map is smooth, which the adjoint exploits.
//! - **Cut-cell**: integration is restricted to the triangulated solid
//!   polygons with Heaviside-enriched DOFs, unsymmetric-Nitsche Dirichlet
//!   conditions on the material part of the boundary, facet-oriented ghost
//!   stabilization against sliver cuts, and elastic bedding of free-floating
//!   solid components.

use nalgebra::{Matrix3, SMatrix};
use rayon::prelude::*;
use thiserror::Error;

use crate::levelset::{GeometryError, LevelSetField};
use crate::mechanics::cutcell::{decompose, CutCellDecomposition, ElementClass, GhostFacet};
use crate::mechanics::enrich::{detect_free_floating, enrich, BoundaryEdge, BoundaryRegion, EnrichedDofMap};
use crate::mechanics::grid::AnalysisGrid;
use crate::mechanics::solver::{BandMatrix, Factorization, SolverError};
use crate::quadrature::gauss_1d;

pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error)]
pub enum MechanicsError {
    #[error("the level set contains no solid material")]
    EmptySolid,
    #[error("no Dirichlet boundary intersects solid material; rigid body motion unconstrained")]
    NoDirichletOnSolid,
    #[error("linear solve failed ({0}); node {1:?} may belong to an unconstrained subregion")]
    Solve(SolverError, Option<(usize, usize)>),
    #[error("residual too large after solve: {0:.3e}")]
    BadResidual(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Analysis constants. `c_dirichlet` scales the Nitsche penalty
/// `gamma_D = c_D E_eff / h`; the ghost penalty is `gamma_G E_eff h` per
/// facet (first-order normal-derivative jumps of the bilinear basis).
#[derive(Debug, Clone, Copy)]
pub struct MechanicsConfig {
    pub c_dirichlet: f64,
    pub gamma_ghost: f64,
    pub epsilon_void: f64,
    pub bedding: bool,
}

impl Default for MechanicsConfig {
    fn default() -> Self {
        Self { c_dirichlet: 10.0, gamma_ghost: 0.01, epsilon_void: 1e-6, bedding: true }
    }
}

/// Prescribed boundary displacement: constant or affine (`u = A x + b`).
#[derive(Debug, Clone, Copy)]
pub enum DirichletValue {
    Constant([f64; 2]),
    Affine { a: [[f64; 2]; 2], b: [f64; 2] },
}

impl DirichletValue {
    pub const ZERO: DirichletValue = DirichletValue::Constant([0.0, 0.0]);

    pub fn at(&self, x: &[f64; 2]) -> [f64; 2] {
        match self {
            DirichletValue::Constant(v) => *v,
            DirichletValue::Affine { a, b } => [
                a[0][0] * x[0] + a[0][1] * x[1] + b[0],
                a[1][0] * x[0] + a[1][1] * x[1] + b[1],
            ],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DirichletSpec {
    pub region: BoundaryRegion,
    pub value: DirichletValue,
}

/// One load case: tractions over boundary regions.
#[derive(Debug, Clone)]
pub struct LoadCase {
    pub tractions: Vec<(BoundaryRegion, [f64; 2])>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Ersatz,
    CutCell,
}

/// Smoothed Heaviside with bandwidth `beta` (0 below `-beta`, 1 above).
pub fn heaviside(v: f64, beta: f64) -> f64 {
    if v <= -beta {
        0.0
    } else if v >= beta {
        1.0
    } else {
        0.5 * (1.0 + v / beta + (std::f64::consts::PI * v / beta).sin() / std::f64::consts::PI)
    }
}

pub fn heaviside_deriv(v: f64, beta: f64) -> f64 {
    if v.abs() >= beta {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * v / beta).cos()) / beta
    }
}

/// Quadrature point data shared by assembly, energy and the adjoint:
/// position, geometric weight, material presence scaling and (ersatz only)
/// the level-set value.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub w: f64,
    pub scale: f64,
    pub phi: f64,
}

/// Bulk quadrature points sharing one dof list (a full element or one solid
/// polygon).
#[derive(Debug, Clone)]
pub struct BulkGroup {
    pub element: usize,
    pub dofs: [usize; 8],
    /// (solids index, polygon index) in the cut-cell backend
    pub poly: Option<(usize, usize)>,
    pub points: Vec<QuadPoint>,
}

/// Boundary quadrature point with its dof list.
#[derive(Debug, Clone)]
pub struct BoundaryPointData {
    pub q: QuadPoint,
    pub normal: [f64; 2],
    pub element: usize,
    pub dofs: [usize; 8],
    /// index of the Dirichlet spec or traction entry this point belongs to
    pub region_index: usize,
}

enum BackendData {
    Ersatz { ls: LevelSetField, beta: f64 },
    CutCell { dec: CutCellDecomposition, dofmap: EnrichedDofMap, bedded: Vec<bool> },
}

/// Immersed analysis for one design snapshot: geometry-derived quadrature
/// and dof data for the selected backend, ready to assemble against any
/// stiffness field.
pub struct ImmersedAnalysis {
    pub grid: AnalysisGrid,
    pub config: MechanicsConfig,
    pub dirichlet: Vec<DirichletSpec>,
    backend: BackendData,
    bulk: Vec<BulkGroup>,
    dirichlet_points: Vec<BoundaryPointData>,
    ndof: usize,
    band: usize,
}

impl ImmersedAnalysis {
    pub fn new(
        backend: Backend,
        grid: AnalysisGrid,
        ls: &LevelSetField,
        config: MechanicsConfig,
        dirichlet: Vec<DirichletSpec>,
    ) -> Result<Self, MechanicsError> {
        let backend_data = match backend {
            Backend::Ersatz => BackendData::Ersatz { ls: ls.clone(), beta: 2.0 * grid.h() },
            Backend::CutCell => {
                let dec = decompose(ls, &grid)?;
                if dec.solids.is_empty() {
                    return Err(MechanicsError::EmptySolid);
                }
                let dofmap = enrich(&dec, &grid);
                let regions: Vec<BoundaryRegion> = dirichlet.iter().map(|d| d.region).collect();
                let floating = detect_free_floating(&dec, &dofmap, &regions, &grid);
                if floating.iter().all(|&f| f) {
                    return Err(MechanicsError::NoDirichletOnSolid);
                }
                let bedded = if config.bedding { floating } else { vec![false; dofmap.num_components] };
                BackendData::CutCell { dec, dofmap, bedded }
            }
        };
        let mut me = Self {
            grid,
            config,
            dirichlet,
            backend: backend_data,
            bulk: Vec::new(),
            dirichlet_points: Vec::new(),
            ndof: 0,
            band: 0,
        };
        me.bulk = me.build_bulk_groups();
        me.dirichlet_points = me
            .dirichlet
            .iter()
            .enumerate()
            .flat_map(|(i, d)| me.region_points(&d.region, i))
            .collect();
        me.ndof = match &me.backend {
            BackendData::Ersatz { .. } => 2 * me.grid.num_nodes(),
            BackendData::CutCell { dofmap, .. } => dofmap.num_dofs,
        };
        me.band = me.compute_bandwidth();
        me.check_dirichlet_contact()?;
        Ok(me)
    }

    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendData::Ersatz { .. } => Backend::Ersatz,
            BackendData::CutCell { .. } => Backend::CutCell,
        }
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn decomposition(&self) -> Option<&CutCellDecomposition> {
        match &self.backend {
            BackendData::CutCell { dec, .. } => Some(dec),
            _ => None,
        }
    }

    pub fn dof_map(&self) -> Option<&EnrichedDofMap> {
        match &self.backend {
            BackendData::CutCell { dofmap, .. } => Some(dofmap),
            _ => None,
        }
    }

    pub fn bulk_groups(&self) -> &[BulkGroup] {
        &self.bulk
    }

    pub fn dirichlet_points(&self) -> &[BoundaryPointData] {
        &self.dirichlet_points
    }

    /// Ersatz material scaling at a level-set value (1 in the cut-cell
    /// backend).
    pub fn ersatz_scale(&self, phi: f64) -> f64 {
        match &self.backend {
            BackendData::Ersatz { beta, .. } => {
                self.config.epsilon_void + (1.0 - self.config.epsilon_void) * heaviside(-phi, *beta)
            }
            _ => 1.0,
        }
    }

    /// d(scale)/d(phi) for the ersatz backend.
    pub fn ersatz_scale_deriv(&self, phi: f64) -> f64 {
        match &self.backend {
            BackendData::Ersatz { beta, .. } => {
                -(1.0 - self.config.epsilon_void) * heaviside_deriv(-phi, *beta)
            }
            _ => 0.0,
        }
    }

    pub fn ersatz_heaviside(&self, phi: f64) -> (f64, f64) {
        match &self.backend {
            BackendData::Ersatz { beta, .. } => (heaviside(-phi, *beta), -heaviside_deriv(-phi, *beta)),
            _ => (1.0, 0.0),
        }
    }

    fn ersatz_dofs(&self, element: usize) -> [usize; 8] {
        let nodes = self.grid.elem_nodes(element);
        [
            2 * nodes[0],
            2 * nodes[0] + 1,
            2 * nodes[1],
            2 * nodes[1] + 1,
            2 * nodes[2],
            2 * nodes[2] + 1,
            2 * nodes[3],
            2 * nodes[3] + 1,
        ]
    }

    fn build_bulk_groups(&self) -> Vec<BulkGroup> {
        let h = self.grid.h();
        let (gp, gw) = gauss_1d(2);
        let mut groups = Vec::new();
        match &self.backend {
            BackendData::Ersatz { ls, .. } => {
                for e in 0..self.grid.num_elements() {
                    let o = self.grid.elem_origin(e);
                    let mut points = Vec::with_capacity(4);
                    for qa in 0..2 {
                        for qb in 0..2 {
                            let x = [o[0] + 0.5 * h * (1.0 + gp[qa]), o[1] + 0.5 * h * (1.0 + gp[qb])];
                            let w = 0.25 * h * h * gw[qa] * gw[qb];
                            let phi = ls.field.value(&[x[0], x[1], 0.0]).unwrap_or(0.0);
                            points.push(QuadPoint { x, w, scale: self.ersatz_scale(phi), phi });
                        }
                    }
                    groups.push(BulkGroup { element: e, dofs: self.ersatz_dofs(e), poly: None, points });
                }
            }
            BackendData::CutCell { dec, dofmap, .. } => {
                // degree-2 interior rule on the reference triangle
                const TRI_Q: [(f64, f64, f64); 3] = [
                    (2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0),
                    (1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0),
                    (1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0),
                ];
                for (si, es) in dec.solids.iter().enumerate() {
                    let e = es.element;
                    let o = self.grid.elem_origin(e);
                    for (pi, poly) in es.polygons.iter().enumerate() {
                        let dofs = dofmap.poly_dofs[dofmap.polygon_id(si, pi)];
                        let mut points = Vec::with_capacity(if poly.full_cell { 4 } else { 3 * poly.tris.len() });
                        if poly.full_cell {
                            for qa in 0..2 {
                                for qb in 0..2 {
                                    let x =
                                        [o[0] + 0.5 * h * (1.0 + gp[qa]), o[1] + 0.5 * h * (1.0 + gp[qb])];
                                    let w = 0.25 * h * h * gw[qa] * gw[qb];
                                    points.push(QuadPoint { x, w, scale: 1.0, phi: 0.0 });
                                }
                            }
                        } else {
                            for t in &poly.tris {
                                let a = poly.verts[t[0]];
                                let b = poly.verts[t[1]];
                                let c = poly.verts[t[2]];
                                let area =
                                    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
                                if area <= 0.0 {
                                    continue;
                                }
                                for &(l1, l2, wq) in &TRI_Q {
                                    let l0 = 1.0 - l1 - l2;
                                    let x = [
                                        l0 * a[0] + l1 * b[0] + l2 * c[0],
                                        l0 * a[1] + l1 * b[1] + l2 * c[1],
                                    ];
                                    points.push(QuadPoint { x, w: wq * area, scale: 1.0, phi: 0.0 });
                                }
                            }
                        }
                        groups.push(BulkGroup { element: e, dofs, poly: Some((si, pi)), points });
                    }
                }
            }
        }
        groups
    }

    /// Boundary quadrature of one region: 2-point Gauss per element-edge
    /// interval where material is present.
    fn region_points(&self, region: &BoundaryRegion, region_index: usize) -> Vec<BoundaryPointData> {
        let grid = &self.grid;
        let h = grid.h();
        let cell_edge = region.edge.cell_edge();
        let axis = region.edge.along_axis();
        let normal = region.edge.outward_normal();
        let (r0, r1) = (region.range.0.min(region.range.1), region.range.0.max(region.range.1));
        let (gp, gw) = gauss_1d(2);
        let n_along = if axis == 0 { grid.nx() } else { grid.ny() };
        let mut out = Vec::new();
        for i in 0..n_along {
            let (ex, ey) = match region.edge {
                BoundaryEdge::Bottom => (i, 0),
                BoundaryEdge::Top => (i, grid.ny() - 1),
                BoundaryEdge::Left => (0, i),
                BoundaryEdge::Right => (grid.nx() - 1, i),
            };
            let e = grid.elem_id(ex, ey);
            let o = grid.elem_origin(e);
            let lo = o[axis].max(r0);
            let hi = (o[axis] + h).min(r1);
            if hi - lo <= 1e-14 * h {
                continue;
            }
            let fixed = match region.edge {
                BoundaryEdge::Bottom => o[1],
                BoundaryEdge::Top => o[1] + h,
                BoundaryEdge::Left => o[0],
                BoundaryEdge::Right => o[0] + h,
            };
            let make_x = |t: f64| if axis == 0 { [t, fixed] } else { [fixed, t] };
            match &self.backend {
                BackendData::Ersatz { ls, .. } => {
                    let dofs = self.ersatz_dofs(e);
                    for q in 0..2 {
                        let t = lo + 0.5 * (hi - lo) * (1.0 + gp[q]);
                        let w = 0.5 * (hi - lo) * gw[q];
                        let x = make_x(t);
                        let phi = ls.field.value(&[x[0], x[1], 0.0]).unwrap_or(0.0);
                        out.push(BoundaryPointData {
                            q: QuadPoint { x, w, scale: self.ersatz_scale(phi), phi },
                            normal,
                            element: e,
                            dofs,
                            region_index,
                        });
                    }
                }
                BackendData::CutCell { dec, dofmap, .. } => {
                    let Some(si) = dec.solid_index[e] else { continue };
                    for (pi, poly) in dec.solids[si].polygons.iter().enumerate() {
                        let dofs = dofmap.poly_dofs[dofmap.polygon_id(si, pi)];
                        for &(s0, s1) in &poly.edge_intervals[cell_edge] {
                            let ilo = s0.max(lo);
                            let ihi = s1.min(hi);
                            if ihi - ilo <= 1e-14 * h {
                                continue;
                            }
                            for q in 0..2 {
                                let t = ilo + 0.5 * (ihi - ilo) * (1.0 + gp[q]);
                                let w = 0.5 * (ihi - ilo) * gw[q];
                                let x = make_x(t);
                                out.push(BoundaryPointData {
                                    q: QuadPoint { x, w, scale: 1.0, phi: 0.0 },
                                    normal,
                                    element: e,
                                    dofs,
                                    region_index,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Traction quadrature points for one load case.
    pub fn traction_points(&self, case: &LoadCase) -> Vec<BoundaryPointData> {
        case.tractions
            .iter()
            .enumerate()
            .flat_map(|(i, (region, _))| self.region_points(region, i))
            .collect()
    }

    fn compute_bandwidth(&self) -> usize {
        let mut band = 0usize;
        for g in &self.bulk {
            let lo = *g.dofs.iter().min().unwrap();
            let hi = *g.dofs.iter().max().unwrap();
            band = band.max(hi - lo);
        }
        if let BackendData::CutCell { dec, dofmap, .. } = &self.backend {
            for f in &dec.ghost_facets {
                let mut lo = usize::MAX;
                let mut hi = 0usize;
                for e in [f.elem_a, f.elem_b] {
                    if let Some(si) = dec.solid_index[e] {
                        for pi in 0..dec.solids[si].polygons.len() {
                            for &d in &dofmap.poly_dofs[dofmap.polygon_id(si, pi)] {
                                lo = lo.min(d);
                                hi = hi.max(d);
                            }
                        }
                    }
                }
                if lo != usize::MAX {
                    band = band.max(hi - lo);
                }
            }
        }
        band
    }

    fn check_dirichlet_contact(&self) -> Result<(), MechanicsError> {
        let mut weighted = 0.0;
        let mut total = 0.0;
        for p in &self.dirichlet_points {
            weighted += p.q.w * p.q.scale;
            total += p.q.w;
        }
        if total == 0.0 || weighted <= 10.0 * self.config.epsilon_void * total {
            return Err(MechanicsError::NoDirichletOnSolid);
        }
        Ok(())
    }

    /// Solid volume: polygon area sum (cut-cell) or the smoothed-Heaviside
    /// integral (ersatz, void floor excluded).
    pub fn solid_volume(&self) -> f64 {
        match &self.backend {
            BackendData::CutCell { dec, .. } => dec.solid_area,
            BackendData::Ersatz { beta, .. } => {
                let mut v = 0.0;
                for g in &self.bulk {
                    for p in &g.points {
                        v += p.w * heaviside(-p.phi, *beta);
                    }
                }
                v
            }
        }
    }

    /// Assembles the system matrix (bulk + Nitsche + ghost + bedding) and
    /// one right-hand side per load case.
    pub fn assemble(
        &self,
        stiffness: &(dyn Fn(&[f64; 2]) -> Mat3 + Sync),
        e_eff: f64,
        loads: &[LoadCase],
    ) -> AssembledSystem {
        let h = self.grid.h();
        let gamma_d = self.config.c_dirichlet * e_eff / h;
        let mut k = BandMatrix::new(self.ndof, self.band, self.band);
        let mut rhs = vec![vec![0.0; self.ndof]; loads.len()];

        // bulk: group matrices in parallel, deterministic serial scatter
        let kes: Vec<SMatrix<f64, 8, 8>> = self
            .bulk
            .par_iter()
            .map(|g| {
                let mut ke = SMatrix::<f64, 8, 8>::zeros();
                for p in &g.points {
                    let c = stiffness(&p.x);
                    let b = strain_matrix(&self.grid.shape_gradients(g.element, &p.x));
                    ke += b.transpose() * c * b * (p.w * p.scale);
                }
                ke
            })
            .collect();
        for (g, ke) in self.bulk.iter().zip(&kes) {
            scatter(&mut k, &g.dofs, ke);
        }

        // Nitsche Dirichlet terms (unsymmetric formulation)
        for p in &self.dirichlet_points {
            let value = &self.dirichlet[p.region_index].value;
            let c = stiffness(&p.q.x);
            let shapes = self.grid.shape_values(p.element, &p.q.x);
            let grads = self.grid.shape_gradients(p.element, &p.q.x);
            let nmat = displacement_matrix(&shapes);
            let tmat = traction_matrix(&c, &grads, &p.normal);
            let w = p.q.w * p.q.scale;
            let ud = value.at(&p.q.x);
            // -du.s(u)n + s(du)n.u + gamma_D du.u
            let ke = (-nmat.transpose() * tmat
                + tmat.transpose() * nmat
                + gamma_d * nmat.transpose() * nmat)
                * w;
            scatter(&mut k, &p.dofs, &ke);
            let fe =
                (tmat.transpose() + gamma_d * nmat.transpose()) * nalgebra::Vector2::new(ud[0], ud[1]) * w;
            for r in rhs.iter_mut() {
                for (i, &d) in p.dofs.iter().enumerate() {
                    r[d] += fe[i];
                }
            }
        }

        // ghost stabilization and bedding (cut-cell backend)
        if let BackendData::CutCell { dec, dofmap, bedded } = &self.backend {
            let gamma_g = self.config.gamma_ghost * e_eff * h;
            let (gp, gw) = gauss_1d(2);
            for facet in &dec.ghost_facets {
                for (dofs_a, dofs_b, lo, hi) in facet_polygon_pairs(dec, dofmap, facet, h) {
                    let len = hi - lo;
                    if len <= 1e-14 * h {
                        continue;
                    }
                    for q in 0..2 {
                        let t = lo + 0.5 * len * (1.0 + gp[q]);
                        let w = 0.5 * len * gw[q] * gamma_g;
                        let x = if facet.axis == 0 { [facet.a[0], t] } else { [t, facet.a[1]] };
                        let ga = self.grid.shape_gradients(facet.elem_a, &x);
                        let gb = self.grid.shape_gradients(facet.elem_b, &x);
                        // jump of the facet-normal derivative per node slot:
                        // 4 nodes of side a, then 4 nodes of side b
                        let mut jump = [0.0f64; 8];
                        for i in 0..4 {
                            jump[i] = ga[i][facet.axis];
                            jump[4 + i] = -gb[i][facet.axis];
                        }
                        let dof_of = |slot: usize, comp: usize| {
                            if slot < 4 {
                                dofs_a[2 * slot + comp]
                            } else {
                                dofs_b[2 * (slot - 4) + comp]
                            }
                        };
                        for comp in 0..2 {
                            for i in 0..8 {
                                if jump[i] == 0.0 {
                                    continue;
                                }
                                for j in 0..8 {
                                    if jump[j] != 0.0 {
                                        k.add(dof_of(i, comp), dof_of(j, comp), w * jump[i] * jump[j]);
                                    }
                                }
                            }
                        }
                    }
                }
            }

            if bedded.iter().any(|&b| b) {
                let kappa_s = e_eff / (h * h);
                for g in &self.bulk {
                    let Some((si, pi)) = g.poly else { continue };
                    let comp = dofmap.poly_component[dofmap.polygon_id(si, pi)];
                    if !bedded[comp] {
                        continue;
                    }
                    let mut ke = SMatrix::<f64, 8, 8>::zeros();
                    for p in &g.points {
                        let nmat = displacement_matrix(&self.grid.shape_values(g.element, &p.x));
                        ke += nmat.transpose() * nmat * (p.w * kappa_s);
                    }
                    scatter(&mut k, &g.dofs, &ke);
                }
            }
        }

        // tractions
        for (ci, case) in loads.iter().enumerate() {
            for p in self.traction_points(case) {
                let traction = case.tractions[p.region_index].1;
                let shapes = self.grid.shape_values(p.element, &p.q.x);
                let w = p.q.w * p.q.scale;
                for i in 0..4 {
                    rhs[ci][p.dofs[2 * i]] += w * shapes[i] * traction[0];
                    rhs[ci][p.dofs[2 * i + 1]] += w * shapes[i] * traction[1];
                }
            }
        }

        AssembledSystem { matrix: k, rhs, ndof: self.ndof }
    }

    /// Factorizes once and solves every load case; checks residuals.
    pub fn solve(&self, system: AssembledSystem) -> Result<Solution, MechanicsError> {
        let a = system.matrix.clone();
        let fact = system.matrix.factorize().map_err(|e| self.solve_error(e))?;
        let mut stats = SolveStats { factorizations: 1, solves: 0 };
        let mut u = Vec::with_capacity(system.rhs.len());
        for b in &system.rhs {
            let x = fact.solve(b).map_err(|e| self.solve_error(e))?;
            stats.solves += 1;
            let mut r = vec![0.0; x.len()];
            a.matvec(&x, &mut r);
            let mut rn = 0.0;
            let mut bn = 0.0;
            for i in 0..x.len() {
                rn += (r[i] - b[i]) * (r[i] - b[i]);
                bn += b[i] * b[i];
            }
            if bn > 0.0 {
                let rel = (rn / bn).sqrt();
                if rel > 1e-10 {
                    return Err(MechanicsError::BadResidual(rel));
                }
            }
            u.push(x);
        }
        Ok(Solution { u, factorization: fact, stats })
    }

    fn solve_error(&self, e: SolverError) -> MechanicsError {
        let diag = match (&e, &self.backend) {
            (SolverError::Singular { col }, BackendData::CutCell { dofmap, .. }) => {
                Some(self.grid.node_ij(dofmap.dof_node(*col)))
            }
            (SolverError::Singular { col }, BackendData::Ersatz { .. }) => {
                Some(self.grid.node_ij(col / 2))
            }
            _ => None,
        };
        MechanicsError::Solve(e, diag)
    }

    /// Strain energy `1/2 int eps:C:eps` from bulk terms only (Nitsche,
    /// ghost and bedding contributions excluded).
    pub fn strain_energy(&self, stiffness: &(dyn Fn(&[f64; 2]) -> Mat3 + Sync), u: &[f64]) -> f64 {
        let mut energy = 0.0;
        for g in &self.bulk {
            for p in &g.points {
                let c = stiffness(&p.x);
                let grads = self.grid.shape_gradients(g.element, &p.x);
                let eps = strain_from_dofs(&grads, &g.dofs, u);
                energy += 0.5 * p.w * p.scale * eps.dot(&(c * eps));
            }
        }
        energy
    }

    /// Arithmetic mean of the per-case strain energies; one factorization
    /// serves all cases.
    pub fn multiload_average(
        &self,
        stiffness: &(dyn Fn(&[f64; 2]) -> Mat3 + Sync),
        e_eff: f64,
        loads: &[LoadCase],
    ) -> Result<(f64, Vec<f64>, Solution), MechanicsError> {
        let system = self.assemble(stiffness, e_eff, loads);
        let sol = self.solve(system)?;
        let energies: Vec<f64> = sol.u.iter().map(|u| self.strain_energy(stiffness, u)).collect();
        let avg = energies.iter().sum::<f64>() / energies.len().max(1) as f64;
        Ok((avg, energies, sol))
    }

    /// Displacement at a physical point for one solved case.
    pub fn displacement_at(&self, u: &[f64], x: &[f64; 2]) -> [f64; 2] {
        let e = self.grid.elem_at(x);
        let dofs = match &self.backend {
            BackendData::Ersatz { .. } => self.ersatz_dofs(e),
            BackendData::CutCell { dec, dofmap, .. } => match dec.polygon_at(e, x) {
                Some((si, pi)) => dofmap.poly_dofs[dofmap.polygon_id(si, pi)],
                None => return [0.0, 0.0],
            },
        };
        let shapes = self.grid.shape_values(e, x);
        let mut out = [0.0, 0.0];
        for i in 0..4 {
            out[0] += shapes[i] * u[dofs[2 * i]];
            out[1] += shapes[i] * u[dofs[2 * i + 1]];
        }
        out
    }

    /// Number of elements classified as cut (0 for the ersatz backend).
    pub fn num_cut_elements(&self) -> usize {
        match &self.backend {
            BackendData::CutCell { dec, .. } => {
                dec.classes.iter().filter(|&&c| c == ElementClass::Cut).count()
            }
            _ => 0,
        }
    }
}

/// Assembled linear system: matrix plus one right-hand side per load case.
pub struct AssembledSystem {
    pub matrix: BandMatrix,
    pub rhs: Vec<Vec<f64>>,
    pub ndof: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub factorizations: usize,
    pub solves: usize,
}

pub struct Solution {
    pub u: Vec<Vec<f64>>,
    pub factorization: Factorization,
    pub stats: SolveStats,
}

/// Engineering-strain interpolation matrix (3x8) of the bilinear element.
pub fn strain_matrix(grads: &[[f64; 2]; 4]) -> SMatrix<f64, 3, 8> {
    let mut b = SMatrix::<f64, 3, 8>::zeros();
    for i in 0..4 {
        b[(0, 2 * i)] = grads[i][0];
        b[(1, 2 * i + 1)] = grads[i][1];
        b[(2, 2 * i)] = grads[i][1];
        b[(2, 2 * i + 1)] = grads[i][0];
    }
    b
}

/// Displacement interpolation matrix (2x8).
pub fn displacement_matrix_pub(shapes: &[f64; 4]) -> SMatrix<f64, 2, 8> {
    displacement_matrix(shapes)
}

fn displacement_matrix(shapes: &[f64; 4]) -> SMatrix<f64, 2, 8> {
    let mut n = SMatrix::<f64, 2, 8>::zeros();
    for i in 0..4 {
        n[(0, 2 * i)] = shapes[i];
        n[(1, 2 * i + 1)] = shapes[i];
    }
    n
}

/// Boundary traction `sigma(basis) . n` matrix (2x8).
pub fn traction_matrix(c: &Mat3, grads: &[[f64; 2]; 4], normal: &[f64; 2]) -> SMatrix<f64, 2, 8> {
    let b = strain_matrix(grads);
    let s = c * b; // stress rows (s11, s22, s12) per dof column
    let mut t = SMatrix::<f64, 2, 8>::zeros();
    for j in 0..8 {
        t[(0, j)] = s[(0, j)] * normal[0] + s[(2, j)] * normal[1];
        t[(1, j)] = s[(2, j)] * normal[0] + s[(1, j)] * normal[1];
    }
    t
}

/// Engineering strain at a point from a dof list.
pub fn strain_from_dofs(grads: &[[f64; 2]; 4], dofs: &[usize; 8], u: &[f64]) -> nalgebra::Vector3<f64> {
    let mut e = nalgebra::Vector3::zeros();
    for i in 0..4 {
        let ux = u[dofs[2 * i]];
        let uy = u[dofs[2 * i + 1]];
        e[0] += grads[i][0] * ux;
        e[1] += grads[i][1] * uy;
        e[2] += grads[i][1] * ux + grads[i][0] * uy;
    }
    e
}

fn scatter(k: &mut BandMatrix, dofs: &[usize; 8], ke: &SMatrix<f64, 8, 8>) {
    for i in 0..8 {
        for j in 0..8 {
            let v = ke[(i, j)];
            if v != 0.0 {
                k.add(dofs[i], dofs[j], v);
            }
        }
    }
}

/// Polygon dof pairs across a ghost facet with the interval to integrate:
/// the full facet in the regular one-polygon-per-side case, otherwise the
/// pairwise interval overlaps.
fn facet_polygon_pairs(
    dec: &CutCellDecomposition,
    dofmap: &EnrichedDofMap,
    facet: &GhostFacet,
    h: f64,
) -> Vec<([usize; 8], [usize; 8], f64, f64)> {
    let (edge_a, edge_b) = if facet.axis == 0 { (1usize, 3usize) } else { (2, 0) };
    let along = if facet.axis == 0 { (facet.a[1], facet.b[1]) } else { (facet.a[0], facet.b[0]) };
    let mut sides: [Vec<(usize, f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (slot, (e, edge)) in [(facet.elem_a, edge_a), (facet.elem_b, edge_b)].iter().enumerate() {
        if let Some(si) = dec.solid_index[*e] {
            for (pi, poly) in dec.solids[si].polygons.iter().enumerate() {
                let pid = dofmap.polygon_id(si, pi);
                for &(lo, hi) in &poly.edge_intervals[*edge] {
                    sides[slot].push((pid, lo, hi));
                }
            }
        }
    }
    let mut out = Vec::new();
    if sides[0].len() == 1 && sides[1].len() == 1 {
        out.push((
            dofmap.poly_dofs[sides[0][0].0],
            dofmap.poly_dofs[sides[1][0].0],
            along.0.min(along.1),
            along.0.max(along.1),
        ));
        return out;
    }
    for &(pa, a0, a1) in &sides[0] {
        for &(pb, b0, b1) in &sides[1] {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi - lo > 1e-12 * h {
                out.push((dofmap.poly_dofs[pa], dofmap.poly_dofs[pb], lo, hi));
            }
        }
    }
    out
}
