//! Cut-cell decomposition of the level-set solid on the background grid:
//! per-element solid polygons with triangulated quadrature cells, interface
//! chords consistent with the marching-squares contour, and the ghost-facet
//! list.

use crate::levelset::{cut_param, solid, EdgeCut, GeometryError, InterfaceMesh, LevelSetField};
use crate::mechanics::grid::AnalysisGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementClass {
    Solid,
    Void,
    Cut,
}

/// One connected solid polygon inside a single element.
#[derive(Debug, Clone)]
pub struct SolidPolygon {
    /// Counter-clockwise vertex loop.
    pub verts: Vec<[f64; 2]>,
    /// Triangles indexing into `verts`.
    pub tris: Vec<[usize; 3]>,
    pub area: f64,
    /// Whole uncut cell (fast assembly path).
    pub full_cell: bool,
    /// Solid intervals on the four cell edges (bottom, right, top, left), in
    /// the absolute coordinate along the edge (x for bottom/top, y for
    /// left/right).
    pub edge_intervals: [Vec<(f64, f64)>; 4],
    /// Vertices that are interface cuts on grid edges, with their nodal data
    /// (for semi-analytic shape sensitivities).
    pub cut_verts: Vec<(usize, EdgeCut)>,
}

/// Solid content of one element (one polygon normally, two in saddle cells).
#[derive(Debug, Clone)]
pub struct ElementSolid {
    pub element: usize,
    pub polygons: Vec<SolidPolygon>,
}

/// Facet between two material-carrying elements of which at least one is cut.
#[derive(Debug, Clone, Copy)]
pub struct GhostFacet {
    pub elem_a: usize,
    pub elem_b: usize,
    /// Facet normal axis: 0 for vertical facets, 1 for horizontal facets.
    pub axis: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct CutCellDecomposition {
    pub classes: Vec<ElementClass>,
    pub solids: Vec<ElementSolid>,
    /// element id -> index into `solids` (None for void elements)
    pub solid_index: Vec<Option<usize>>,
    pub interface: InterfaceMesh,
    pub ghost_facets: Vec<GhostFacet>,
    pub nodal_phi: Vec<f64>,
    pub solid_area: f64,
}

impl CutCellDecomposition {
    pub fn num_polygons(&self) -> usize {
        self.solids.iter().map(|s| s.polygons.len()).sum()
    }

    /// Polygon in element `e` containing point `x` (nearest by winding test,
    /// falling back to the largest polygon).
    pub fn polygon_at(&self, e: usize, x: &[f64; 2]) -> Option<(usize, usize)> {
        let si = self.solid_index[e]?;
        let polys = &self.solids[si].polygons;
        for (pi, p) in polys.iter().enumerate() {
            if p.full_cell || point_in_polygon(&p.verts, x) {
                return Some((si, pi));
            }
        }
        // on edges/vertices the winding test can miss; take the largest
        polys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.area.partial_cmp(&b.1.area).unwrap())
            .map(|(pi, _)| (si, pi))
    }
}

fn point_in_polygon(verts: &[[f64; 2]], x: &[f64; 2]) -> bool {
    let mut inside = false;
    let n = verts.len();
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let t = (x[1] - a[1]) / (b[1] - a[1]);
            if a[0] + t * (b[0] - a[0]) > x[0] {
                inside = !inside;
            }
        }
    }
    inside
}

fn polygon_area(verts: &[[f64; 2]]) -> f64 {
    let n = verts.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

/// Ear-clipping triangulation of a simple CCW polygon; drops slivers below
/// `area_eps`.
pub fn triangulate(verts: &[[f64; 2]], area_eps: f64) -> Vec<[usize; 3]> {
    let n = verts.len();
    if n < 3 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut guard = 0;
    while idx.len() > 3 {
        guard += 1;
        if guard > 4 * n {
            break; // numerical deadlock; fall through to fan below
        }
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let ip = idx[(i + m - 1) % m];
            let ic = idx[i];
            let inx = idx[(i + 1) % m];
            let c = cross(verts[ip], verts[ic], verts[inx]);
            if c < -area_eps {
                continue; // reflex
            }
            if c.abs() <= area_eps {
                // collinear: remove without emitting
                idx.remove(i);
                clipped = true;
                break;
            }
            // no other vertex strictly inside the candidate ear
            let mut ok = true;
            for &j in &idx {
                if j == ip || j == ic || j == inx {
                    continue;
                }
                let p = verts[j];
                let d1 = cross(verts[ip], verts[ic], p);
                let d2 = cross(verts[ic], verts[inx], p);
                let d3 = cross(verts[inx], verts[ip], p);
                if d1 > area_eps && d2 > area_eps && d3 > area_eps {
                    ok = false;
                    break;
                }
            }
            if ok {
                tris.push([ip, ic, inx]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        let c = cross(verts[idx[0]], verts[idx[1]], verts[idx[2]]);
        if c.abs() > area_eps {
            tris.push([idx[0], idx[1], idx[2]]);
        }
    } else if idx.len() > 3 {
        for i in 1..idx.len() - 1 {
            tris.push([idx[0], idx[i], idx[i + 1]]);
        }
    }
    tris
}

/// Perimeter entry of a cut cell: cell corners and edge cuts in CCW order.
#[derive(Clone, Copy)]
enum PerimeterEntry {
    Corner { local: usize, is_solid: bool },
    Cut { edge: usize, cut: EdgeCut },
}

/// Decomposes the level-set solid over the analysis grid.
pub fn decompose(ls: &LevelSetField, grid: &AnalysisGrid) -> Result<CutCellDecomposition, GeometryError> {
    let phi = ls.sample_nodes(grid)?;
    let interface = crate::levelset::extract_interface_from_samples(ls, grid, &phi);
    let h = grid.h();
    let area_eps = 1e-12 * h * h;

    let mut classes = vec![ElementClass::Void; grid.num_elements()];
    let mut solids: Vec<ElementSolid> = Vec::new();
    let mut solid_index = vec![None; grid.num_elements()];
    let mut solid_area = 0.0;

    for e in 0..grid.num_elements() {
        let nodes = grid.elem_nodes(e);
        let corners = grid.elem_corners(e);
        let v: [f64; 4] = [phi[nodes[0]], phi[nodes[1]], phi[nodes[2]], phi[nodes[3]]];
        let s: [bool; 4] = [solid(v[0]), solid(v[1]), solid(v[2]), solid(v[3])];
        let nsolid = s.iter().filter(|&&b| b).count();
        if nsolid == 0 {
            classes[e] = ElementClass::Void;
            continue;
        }
        if nsolid == 4 {
            classes[e] = ElementClass::Solid;
            let verts: Vec<[f64; 2]> = corners.to_vec();
            let o = grid.elem_origin(e);
            let poly = SolidPolygon {
                tris: vec![[0, 1, 2], [0, 2, 3]],
                area: h * h,
                full_cell: true,
                edge_intervals: [
                    vec![(o[0], o[0] + h)],
                    vec![(o[1], o[1] + h)],
                    vec![(o[0], o[0] + h)],
                    vec![(o[1], o[1] + h)],
                ],
                cut_verts: Vec::new(),
                verts,
            };
            solid_index[e] = Some(solids.len());
            solids.push(ElementSolid { element: e, polygons: vec![poly] });
            solid_area += h * h;
            continue;
        }

        classes[e] = ElementClass::Cut;
        let polygons = cut_cell_polygons(ls, grid, e, &nodes, &corners, &v, &s, area_eps);
        if polygons.is_empty() {
            classes[e] = ElementClass::Void;
            continue;
        }
        for p in &polygons {
            solid_area += p.area;
        }
        solid_index[e] = Some(solids.len());
        solids.push(ElementSolid { element: e, polygons });
    }

    // ghost facets: both sides carry material, at least one side cut
    let mut ghost_facets = Vec::new();
    let material = |c: ElementClass| c != ElementClass::Void;
    for ex in 0..grid.nx() {
        for ey in 0..grid.ny() {
            let e = grid.elem_id(ex, ey);
            let o = grid.elem_origin(e);
            if ex + 1 < grid.nx() {
                let er = grid.elem_id(ex + 1, ey);
                if material(classes[e])
                    && material(classes[er])
                    && (classes[e] == ElementClass::Cut || classes[er] == ElementClass::Cut)
                {
                    ghost_facets.push(GhostFacet {
                        elem_a: e,
                        elem_b: er,
                        axis: 0,
                        a: [o[0] + h, o[1]],
                        b: [o[0] + h, o[1] + h],
                    });
                }
            }
            if ey + 1 < grid.ny() {
                let et = grid.elem_id(ex, ey + 1);
                if material(classes[e])
                    && material(classes[et])
                    && (classes[e] == ElementClass::Cut || classes[et] == ElementClass::Cut)
                {
                    ghost_facets.push(GhostFacet {
                        elem_a: e,
                        elem_b: et,
                        axis: 1,
                        a: [o[0], o[1] + h],
                        b: [o[0] + h, o[1] + h],
                    });
                }
            }
        }
    }

    Ok(CutCellDecomposition {
        classes,
        solids,
        solid_index,
        interface,
        ghost_facets,
        nodal_phi: phi,
        solid_area,
    })
}

/// Re-polygonizes a single element for given corner level-set values (used
/// by the semi-analytic shape sensitivities; saddle disambiguation still
/// samples the unperturbed field at the cell center).
pub fn polygons_for_values(
    ls: &LevelSetField,
    grid: &AnalysisGrid,
    e: usize,
    v: &[f64; 4],
) -> Vec<SolidPolygon> {
    let nodes = grid.elem_nodes(e);
    let corners = grid.elem_corners(e);
    let s = [solid(v[0]), solid(v[1]), solid(v[2]), solid(v[3])];
    let h = grid.h();
    let nsolid = s.iter().filter(|&&b| b).count();
    if nsolid == 0 {
        return Vec::new();
    }
    if nsolid == 4 {
        let o = grid.elem_origin(e);
        return vec![SolidPolygon {
            verts: corners.to_vec(),
            tris: vec![[0, 1, 2], [0, 2, 3]],
            area: h * h,
            full_cell: true,
            edge_intervals: [
                vec![(o[0], o[0] + h)],
                vec![(o[1], o[1] + h)],
                vec![(o[0], o[0] + h)],
                vec![(o[1], o[1] + h)],
            ],
            cut_verts: Vec::new(),
        }];
    }
    cut_cell_polygons(ls, grid, e, &nodes, &corners, v, &s, 1e-12 * h * h)
}

/// Traces the solid polygon(s) of a cut cell by walking the cell perimeter
/// counter-clockwise and jumping along interface chords.
#[allow(clippy::too_many_arguments)]
fn cut_cell_polygons(
    ls: &LevelSetField,
    grid: &AnalysisGrid,
    e: usize,
    nodes: &[usize; 4],
    corners: &[[f64; 2]; 4],
    v: &[f64; 4],
    s: &[bool; 4],
    area_eps: f64,
) -> Vec<SolidPolygon> {
    let h = grid.h();
    let edges = [(0usize, 1usize), (1, 2), (2, 3), (3, 0)];
    // perimeter in CCW order with cuts inserted; remember cut slots per edge
    let mut perim: Vec<PerimeterEntry> = Vec::with_capacity(8);
    let mut cut_slot_of_edge = [usize::MAX; 4];
    for (ei, &(i, j)) in edges.iter().enumerate() {
        perim.push(PerimeterEntry::Corner { local: i, is_solid: s[i] });
        if s[i] != s[j] {
            let t = cut_param(v[i], v[j]);
            cut_slot_of_edge[ei] = perim.len();
            perim.push(PerimeterEntry::Cut {
                edge: ei,
                cut: EdgeCut { n0: nodes[i], n1: nodes[j], phi0: v[i], phi1: v[j], s: t },
            });
        }
    }
    let pos_of = |entry: &PerimeterEntry| -> [f64; 2] {
        match entry {
            PerimeterEntry::Corner { local, .. } => corners[*local],
            PerimeterEntry::Cut { edge, cut } => {
                let (i, j) = edges[*edge];
                [
                    corners[i][0] + cut.s * (corners[j][0] - corners[i][0]),
                    corners[i][1] + cut.s * (corners[j][1] - corners[i][1]),
                ]
            }
        }
    };
    // chord partners (by perimeter slot)
    let cut_slots: Vec<usize> = (0..4).map(|ei| cut_slot_of_edge[ei]).filter(|&s| s != usize::MAX).collect();
    let mut partner = vec![usize::MAX; perim.len()];
    match cut_slots.len() {
        2 => {
            partner[cut_slots[0]] = cut_slots[1];
            partner[cut_slots[1]] = cut_slots[0];
        }
        4 => {
            // saddle: pairing by the cell-center sample sign
            let o = grid.elem_origin(e);
            let center = [o[0] + 0.5 * h, o[1] + 0.5 * h, 0.0];
            let center_solid =
                solid(ls.field.value(&center).unwrap_or(0.25 * (v[0] + v[1] + v[2] + v[3])));
            let pair = |a: usize, b: usize, partner: &mut Vec<usize>| {
                let (sa, sb) = (cut_slot_of_edge[a], cut_slot_of_edge[b]);
                partner[sa] = sb;
                partner[sb] = sa;
            };
            if s[0] == center_solid {
                pair(0, 1, &mut partner);
                pair(2, 3, &mut partner);
            } else {
                pair(3, 0, &mut partner);
                pair(1, 2, &mut partner);
            }
        }
        n => unreachable!("cut cell with {n} crossings"),
    }

    let m = perim.len();
    // arc i runs from perim[i] to perim[(i+1) % m]; it is solid iff the solid
    // region borders it, i.e. its corner endpoint(s) are solid
    let arc_solid: Vec<bool> = (0..m)
        .map(|i| {
            let a = &perim[i];
            let b = &perim[(i + 1) % m];
            match (a, b) {
                (PerimeterEntry::Corner { is_solid, .. }, _) => *is_solid,
                (_, PerimeterEntry::Corner { is_solid, .. }) => *is_solid,
                _ => unreachable!("two consecutive cuts on one edge"),
            }
        })
        .collect();

    let edge_of_arc = |i: usize| -> usize {
        // the cell edge an arc lies on: determined by its starting entry
        match &perim[i] {
            PerimeterEntry::Corner { local, .. } => *local,
            PerimeterEntry::Cut { edge, .. } => *edge,
        }
    };

    let mut visited = vec![false; m];
    let mut polygons = Vec::new();
    for start in 0..m {
        if !arc_solid[start] || visited[start] {
            continue;
        }
        let mut verts: Vec<[f64; 2]> = Vec::with_capacity(8);
        let mut cut_verts = Vec::new();
        let mut edge_intervals: [Vec<(f64, f64)>; 4] = Default::default();
        let mut arc = start;
        loop {
            visited[arc] = true;
            let a = &perim[arc];
            let b = &perim[(arc + 1) % m];
            let pa = pos_of(a);
            let pb = pos_of(b);
            if verts.last().map_or(true, |last: &[f64; 2]| {
                (last[0] - pa[0]).abs() + (last[1] - pa[1]).abs() > 1e-12 * h
            }) {
                if let PerimeterEntry::Cut { cut, .. } = a {
                    cut_verts.push((verts.len(), *cut));
                }
                verts.push(pa);
            }
            // record the solid interval on the cell edge this arc covers
            let ce = edge_of_arc(arc);
            let axis = if ce == 0 || ce == 2 { 0 } else { 1 };
            let (lo, hi) = if pa[axis] <= pb[axis] { (pa[axis], pb[axis]) } else { (pb[axis], pa[axis]) };
            if hi - lo > 1e-12 * h {
                edge_intervals[ce].push((lo, hi));
            }
            // advance: through the next entry
            let next_slot = (arc + 1) % m;
            match &perim[next_slot] {
                PerimeterEntry::Corner { .. } => {
                    arc = next_slot;
                }
                PerimeterEntry::Cut { cut, .. } => {
                    // jump the chord to the partner cut; polygon continues
                    // with the arc starting at the partner
                    if verts.last().map_or(true, |last: &[f64; 2]| {
                        (last[0] - pb[0]).abs() + (last[1] - pb[1]).abs() > 1e-12 * h
                    }) {
                        cut_verts.push((verts.len(), *cut));
                        verts.push(pb);
                    }
                    let p = partner[next_slot];
                    debug_assert!(p != usize::MAX);
                    debug_assert!(arc_solid[p], "chord lands on a void arc");
                    arc = p;
                }
            }
            if arc == start {
                break;
            }
        }
        // drop a duplicated closing vertex
        if verts.len() >= 2 {
            let first = verts[0];
            let last = *verts.last().unwrap();
            if (first[0] - last[0]).abs() + (first[1] - last[1]).abs() < 1e-12 * h {
                verts.pop();
                cut_verts.retain(|(vi, _)| *vi < verts.len());
            }
        }
        let area = polygon_area(&verts);
        if area <= area_eps {
            continue;
        }
        let tris = triangulate(&verts, area_eps);
        if tris.is_empty() {
            continue;
        }
        polygons.push(SolidPolygon {
            verts,
            tris,
            area,
            full_cell: false,
            edge_intervals,
            cut_verts,
        });
    }
    polygons
}
