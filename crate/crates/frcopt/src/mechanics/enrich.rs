//! Heaviside enrichment: per basis function, topologically disconnected solid
//! subregions within its support get independent displacement coefficients.
//! Void carries no degrees of freedom. Also hosts the connected-component
//! analysis used to flag free-floating solid regions for elastic bedding.

use std::collections::HashMap;

use crate::mechanics::cutcell::CutCellDecomposition;
use crate::mechanics::grid::AnalysisGrid;

/// Boundary edge of the rectangular analysis domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryEdge {
    Left,
    Right,
    Bottom,
    Top,
}

impl BoundaryEdge {
    /// Coordinate axis running along the edge (x for bottom/top, y for
    /// left/right).
    pub fn along_axis(&self) -> usize {
        match self {
            BoundaryEdge::Bottom | BoundaryEdge::Top => 0,
            BoundaryEdge::Left | BoundaryEdge::Right => 1,
        }
    }

    /// Outward unit normal of the domain on this edge.
    pub fn outward_normal(&self) -> [f64; 2] {
        match self {
            BoundaryEdge::Left => [-1.0, 0.0],
            BoundaryEdge::Right => [1.0, 0.0],
            BoundaryEdge::Bottom => [0.0, -1.0],
            BoundaryEdge::Top => [0.0, 1.0],
        }
    }

    /// Local cell-edge index (0 bottom, 1 right, 2 top, 3 left) of a boundary
    /// element's edge lying on this domain edge.
    pub fn cell_edge(&self) -> usize {
        match self {
            BoundaryEdge::Bottom => 0,
            BoundaryEdge::Right => 1,
            BoundaryEdge::Top => 2,
            BoundaryEdge::Left => 3,
        }
    }
}

/// Interval of a domain boundary edge, in the absolute coordinate along it.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryRegion {
    pub edge: BoundaryEdge,
    pub range: (f64, f64),
}

impl BoundaryRegion {
    pub fn full(edge: BoundaryEdge, grid: &AnalysisGrid) -> Self {
        let axis = edge.along_axis();
        Self { edge, range: (grid.lower()[axis], grid.upper()[axis]) }
    }
}

/// Heaviside-enriched degree-of-freedom layout: per node, one coefficient
/// pair per topologically connected solid subregion of its support.
#[derive(Debug, Clone)]
pub struct EnrichedDofMap {
    pub num_dofs: usize,
    /// First dof of each node (2 per subregion).
    pub node_offsets: Vec<usize>,
    /// Number of solid subregions per node (`L_k`).
    pub node_subregions: Vec<usize>,
    /// Global polygon id -> first polygon id per solids entry.
    pub poly_offsets: Vec<usize>,
    /// Per global polygon: 8 dofs in node-local order
    /// `(n0x, n0y, n1x, n1y, n2x, n2y, n3x, n3y)`.
    pub poly_dofs: Vec<[usize; 8]>,
    /// Global solid component per polygon (for bedding/floating analysis).
    pub poly_component: Vec<usize>,
    pub num_components: usize,
}

impl EnrichedDofMap {
    pub fn polygon_id(&self, solids_index: usize, poly: usize) -> usize {
        self.poly_offsets[solids_index] + poly
    }

    /// Node owning a dof (for solver diagnostics).
    pub fn dof_node(&self, dof: usize) -> usize {
        match self.node_offsets.binary_search(&dof) {
            Ok(mut i) => {
                // offsets repeat for nodes with zero subregions
                while i + 1 < self.node_offsets.len() && self.node_offsets[i + 1] == dof {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn intervals_overlap(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> bool {
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            if a1.min(b1) - a0.max(b0) > tol {
                return true;
            }
        }
    }
    false
}

/// Pairs of globally-indexed polygons connected across each shared facet.
/// Key: (element_a, element_b) with `element_a < element_b`.
type FacetLinks = HashMap<(usize, usize), Vec<(usize, usize)>>;

fn facet_links(dec: &CutCellDecomposition, grid: &AnalysisGrid, poly_offsets: &[usize]) -> FacetLinks {
    let tol = 1e-9 * grid.h();
    let mut links: FacetLinks = HashMap::new();
    // neighbor pairs: right (+x) uses edges 1|3, top (+y) uses edges 2|0
    for ex in 0..grid.nx() {
        for ey in 0..grid.ny() {
            let e = grid.elem_id(ex, ey);
            let Some(si) = dec.solid_index[e] else { continue };
            for (nex, ney, edge_a, edge_b) in
                [(ex + 1, ey, 1usize, 3usize), (ex, ey + 1, 2, 0)]
            {
                if nex >= grid.nx() || ney >= grid.ny() {
                    continue;
                }
                let en = grid.elem_id(nex, ney);
                let Some(sj) = dec.solid_index[en] else { continue };
                let mut pairs = Vec::new();
                for (pi, pa) in dec.solids[si].polygons.iter().enumerate() {
                    for (pj, pb) in dec.solids[sj].polygons.iter().enumerate() {
                        if intervals_overlap(&pa.edge_intervals[edge_a], &pb.edge_intervals[edge_b], tol) {
                            pairs.push((poly_offsets[si] + pi, poly_offsets[sj] + pj));
                        }
                    }
                }
                if !pairs.is_empty() {
                    links.insert((e, en), pairs);
                }
            }
        }
    }
    links
}

/// Builds the enriched dof map: flood fill of solid polygons within each
/// basis support, one displacement coefficient pair per subregion.
pub fn enrich(dec: &CutCellDecomposition, grid: &AnalysisGrid) -> EnrichedDofMap {
    let num_polys = dec.num_polygons();
    let mut poly_offsets = Vec::with_capacity(dec.solids.len());
    let mut acc = 0;
    for es in &dec.solids {
        poly_offsets.push(acc);
        acc += es.polygons.len();
    }
    let links = facet_links(dec, grid, &poly_offsets);

    // global solid components (used for bedding)
    let mut uf = UnionFind::new(num_polys.max(1));
    for pairs in links.values() {
        for &(a, b) in pairs {
            uf.union(a, b);
        }
    }
    let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
    let mut poly_component = vec![0usize; num_polys];
    for p in 0..num_polys {
        let r = uf.find(p);
        let next = comp_of_root.len();
        let c = *comp_of_root.entry(r).or_insert(next);
        poly_component[p] = c;
    }
    let num_components = comp_of_root.len();

    // per-node subregions: flood fill restricted to the <= 4 support elements
    let nxn = grid.nx() + 1;
    let nyn = grid.ny() + 1;
    let mut node_subregions = vec![0usize; grid.num_nodes()];
    let mut node_offsets = vec![0usize; grid.num_nodes() + 1];
    // subregion index per (node, polygon): filled below
    let mut poly_sub_of_node: HashMap<(usize, usize), usize> = HashMap::new();
    for ix in 0..nxn {
        for iy in 0..nyn {
            let node = grid.node_id(ix, iy);
            // support elements of the bilinear hat at this node
            let mut elems: Vec<usize> = Vec::with_capacity(4);
            for dx in 0..2 {
                for dy in 0..2 {
                    if ix + dx >= 1 && iy + dy >= 1 && ix + dx <= grid.nx() && iy + dy <= grid.ny() {
                        elems.push(grid.elem_id(ix + dx - 1, iy + dy - 1));
                    }
                }
            }
            let mut local_polys: Vec<usize> = Vec::new();
            for &e in &elems {
                if let Some(si) = dec.solid_index[e] {
                    for pi in 0..dec.solids[si].polygons.len() {
                        local_polys.push(poly_offsets[si] + pi);
                    }
                }
            }
            if local_polys.is_empty() {
                continue;
            }
            // local union-find over the support polygons, connected only
            // through facets between support elements
            let index_of: HashMap<usize, usize> =
                local_polys.iter().enumerate().map(|(i, &p)| (p, i)).collect();
            let mut luf = UnionFind::new(local_polys.len());
            for i in 0..elems.len() {
                for j in i + 1..elems.len() {
                    let key = (elems[i].min(elems[j]), elems[i].max(elems[j]));
                    if let Some(pairs) = links.get(&key) {
                        for &(a, b) in pairs {
                            if let (Some(&ia), Some(&ib)) = (index_of.get(&a), index_of.get(&b)) {
                                luf.union(ia, ib);
                            }
                        }
                    }
                }
            }
            // assign subregion indices in deterministic (smallest polygon) order
            let mut sub_of_root: HashMap<usize, usize> = HashMap::new();
            for (i, &p) in local_polys.iter().enumerate() {
                let r = luf.find(i);
                let next = sub_of_root.len();
                let sub = *sub_of_root.entry(r).or_insert(next);
                poly_sub_of_node.insert((node, p), sub);
            }
            node_subregions[node] = sub_of_root.len();
        }
    }
    let mut num_dofs = 0;
    for node in 0..grid.num_nodes() {
        node_offsets[node] = num_dofs;
        num_dofs += 2 * node_subregions[node];
    }
    node_offsets[grid.num_nodes()] = num_dofs;

    // per-polygon dof lists
    let mut poly_dofs = vec![[usize::MAX; 8]; num_polys];
    for (si, es) in dec.solids.iter().enumerate() {
        let nodes = grid.elem_nodes(es.element);
        for pi in 0..es.polygons.len() {
            let p = poly_offsets[si] + pi;
            let mut dofs = [usize::MAX; 8];
            for (ln, &node) in nodes.iter().enumerate() {
                let sub = *poly_sub_of_node.get(&(node, p)).expect("support polygon registered");
                dofs[2 * ln] = node_offsets[node] + 2 * sub;
                dofs[2 * ln + 1] = node_offsets[node] + 2 * sub + 1;
            }
            poly_dofs[p] = dofs;
        }
    }

    EnrichedDofMap {
        num_dofs,
        node_offsets: node_offsets[..grid.num_nodes()].to_vec(),
        node_subregions,
        poly_offsets,
        poly_dofs,
        poly_component,
        num_components,
    }
}

/// Flags solid components not reachable from any Dirichlet-supported
/// boundary: `true` means free-floating (needs elastic bedding).
pub fn detect_free_floating(
    dec: &CutCellDecomposition,
    dofmap: &EnrichedDofMap,
    dirichlet: &[BoundaryRegion],
    grid: &AnalysisGrid,
) -> Vec<bool> {
    let tol = 1e-9 * grid.h();
    let mut supported = vec![false; dofmap.num_components];
    for region in dirichlet {
        let cell_edge = region.edge.cell_edge();
        let fixed_range = [region.range.0.min(region.range.1), region.range.0.max(region.range.1)];
        for (si, es) in dec.solids.iter().enumerate() {
            let (ex, ey) = grid.elem_ij(es.element);
            let on_boundary = match region.edge {
                BoundaryEdge::Left => ex == 0,
                BoundaryEdge::Right => ex == grid.nx() - 1,
                BoundaryEdge::Bottom => ey == 0,
                BoundaryEdge::Top => ey == grid.ny() - 1,
            };
            if !on_boundary {
                continue;
            }
            for (pi, poly) in es.polygons.iter().enumerate() {
                if intervals_overlap(&poly.edge_intervals[cell_edge], &[(fixed_range[0], fixed_range[1])], tol)
                {
                    let p = dofmap.polygon_id(si, pi);
                    supported[dofmap.poly_component[p]] = true;
                }
            }
        }
    }
    supported.iter().map(|&s| !s).collect()
}
