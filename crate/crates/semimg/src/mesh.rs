//! Conforming 2D triangulations with refinement genealogy.
//!
//! Meshes are immutable: every operation returns a new mesh. Refinement
//! records, per fine vertex, whether it was inherited from the coarse mesh
//! or created as an edge midpoint. That genealogy is what makes the P1
//! spaces on consecutive meshes exactly nested and lets the prolongation
//! operators be written down without any geometric searches.
//!
//! Two refinement rules are provided:
//! - [`uniform_refine`]: red refinement, each triangle split into four
//!   congruent children via its edge midpoints;
//! - [`bisect_refine`]: newest-vertex bisection of a marked cell set with
//!   recursive conformity closure.
//!
//! Cell storage convention: each cell is a counterclockwise vertex triple
//! `[v0, v1, v2]` whose refinement edge is `(v0, v1)` and whose newest
//! vertex is `v2`. Initial meshes (and red-refined meshes) assign the
//! refinement edge as the longest edge, ties broken by the lowest opposite
//! vertex index; bisection children keep the edge dictated by the rule.

use crate::{Error, Result};

/// Provenance of a vertex relative to the previous (coarser) mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexOrigin {
    /// Vertex of an initial mesh; no coarse ancestor.
    Initial,
    /// Same vertex (and coordinates) as the given coarse vertex.
    Inherited(usize),
    /// Midpoint of the coarse edge between the two given vertices.
    EdgeMidpoint(usize, usize),
}

/// A conforming triangulation of a polygonal domain.
#[derive(Clone, Debug)]
pub struct Mesh {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples; see the module docs for the
    /// refinement-edge convention.
    pub cells: Vec<[usize; 3]>,
    /// True iff the vertex lies on an edge owned by exactly one cell.
    pub boundary_vertex: Vec<bool>,
    /// Parent cell in the previous mesh (None for initial meshes).
    pub cell_parent: Vec<Option<usize>>,
    /// Provenance of each vertex relative to the previous mesh.
    pub vertex_origin: Vec<VertexOrigin>,
    /// Refinement level; initial meshes are level 1.
    pub level: usize,
    /// Maximum cell diameter.
    pub h_max: f64,
}

/// An undirected mesh edge together with its incident cells.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    /// Endpoint vertex ids with `v.0 < v.1`.
    pub v: (usize, usize),
    /// Incident cells; `[Some, None]` for boundary edges.
    pub cells: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

/// Edge connectivity derived from a mesh: the unique edge list plus the
/// per-cell edge ids in the local order `(v0,v1), (v1,v2), (v2,v0)`.
pub struct EdgeTopology {
    pub edges: Vec<Edge>,
    pub cell_edges: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Signed area of a cell (positive for the CCW storage convention).
    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Cell diameter, i.e. its longest edge.
    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Build the unique edge list. Edge ids are assigned in deterministic
    /// cell-traversal order so downstream consumers are reproducible.
    pub fn edge_topology(&self) -> EdgeTopology {
        let mut lookup = std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = vec![[usize::MAX; 3]; self.n_cells()];
        for (ci, cell) in self.cells.iter().enumerate() {
            for (slot, (a, b)) in cell_edge_pairs(cell).into_iter().enumerate() {
                let key = ordered(a, b);
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        v: key,
                        cells: [None, None],
                    });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.cells[0].is_none() {
                    e.cells[0] = Some(ci);
                } else if e.cells[1].is_none() {
                    e.cells[1] = Some(ci);
                } else {
                    // conformity guarantees at most two incident cells
                    unreachable!("edge {:?} has more than two incident cells", key);
                }
                cell_edges[ci][slot] = id;
            }
        }
        EdgeTopology { edges, cell_edges }
    }

    /// Plain-text dump: header `nv nc`, then `x y b` per vertex, then
    /// `i j k` per cell (0-based indices). Debugging and golden tests only.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.n_vertices(), self.n_cells()));
        for (v, p) in self.vertices.iter().enumerate() {
            let b = if self.boundary_vertex[v] { 1 } else { 0 };
            out.push_str(&format!("{:.16e} {:.16e} {}\n", p[0], p[1], b));
        }
        for cell in &self.cells {
            out.push_str(&format!("{} {} {}\n", cell[0], cell[1], cell[2]));
        }
        out
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn cell_edge_pairs(cell: &[usize; 3]) -> [(usize, usize); 3] {
    [(cell[0], cell[1]), (cell[1], cell[2]), (cell[2], cell[0])]
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Recompute boundary flags and h_max from scratch; shared by all
/// constructors so the flags always match the edge-incidence definition.
fn finalize(
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    cell_parent: Vec<Option<usize>>,
    vertex_origin: Vec<VertexOrigin>,
    level: usize,
) -> Mesh {
    let mut mesh = Mesh {
        boundary_vertex: vec![false; vertices.len()],
        h_max: 0.0,
        vertices,
        cells,
        cell_parent,
        vertex_origin,
        level,
    };
    let topo = mesh.edge_topology();
    for e in &topo.edges {
        if e.is_boundary() {
            mesh.boundary_vertex[e.v.0] = true;
            mesh.boundary_vertex[e.v.1] = true;
        }
    }
    mesh.h_max = (0..mesh.n_cells())
        .map(|c| mesh.cell_diameter(c))
        .fold(0.0, f64::max);
    mesh
}

/// Rotate the triple so the refinement edge (longest edge; ties broken by
/// the lowest opposite vertex index) comes first. Rotation preserves the
/// CCW orientation.
fn canonicalize_cell(vertices: &[[f64; 2]], cell: [usize; 3]) -> [usize; 3] {
    let rotations = [
        cell,
        [cell[1], cell[2], cell[0]],
        [cell[2], cell[0], cell[1]],
    ];
    let mut best = 0;
    let mut best_len = f64::NEG_INFINITY;
    for (i, rot) in rotations.iter().enumerate() {
        let len = dist(vertices[rot[0]], vertices[rot[1]]);
        let better = len > best_len || (len == best_len && rot[2] < rotations[best][2]);
        if better {
            best = i;
            best_len = len;
        }
    }
    rotations[best]
}

/// Structured triangulation of the unit square with `n` cells per side:
/// `(n+1)^2` vertices and `2 n^2` right triangles.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "unit_square_mesh requires at least 1 cell per side".into(),
        ));
    }
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push(canonicalize_cell(&vertices, [v00, v10, v11]));
            cells.push(canonicalize_cell(&vertices, [v00, v11, v01]));
        }
    }
    let nv = vertices.len();
    let nc = cells.len();
    Ok(finalize(
        vertices,
        cells,
        vec![None; nc],
        vec![VertexOrigin::Initial; nv],
        1,
    ))
}

/// L-shaped domain `(-1,1)^2 \ [0,1)^2` built from three unit squares;
/// the reentrant corner at the origin is a mesh vertex.
pub fn l_shaped_mesh() -> Mesh {
    let vertices = vec![
        [-1.0, -1.0],
        [0.0, -1.0],
        [1.0, -1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [-1.0, 1.0],
        [0.0, 1.0],
    ];
    let squares = [(0usize, 1, 4, 3), (1, 2, 5, 4), (3, 4, 7, 6)];
    let mut cells = Vec::with_capacity(6);
    for (v00, v10, v11, v01) in squares {
        cells.push(canonicalize_cell(&vertices, [v00, v10, v11]));
        cells.push(canonicalize_cell(&vertices, [v00, v11, v01]));
    }
    let nv = vertices.len();
    let nc = cells.len();
    finalize(
        vertices,
        cells,
        vec![None; nc],
        vec![VertexOrigin::Initial; nv],
        1,
    )
}

/// Red refinement: each triangle is split into four congruent children via
/// its edge midpoints. Coarse vertices keep their ids; midpoints are
/// appended in deterministic edge order. `h_max` halves exactly.
pub fn uniform_refine(mesh: &Mesh) -> Mesh {
    let topo = mesh.edge_topology();
    let mut vertices = mesh.vertices.clone();
    let mut vertex_origin: Vec<VertexOrigin> = (0..mesh.n_vertices())
        .map(VertexOrigin::Inherited)
        .collect();
    // one midpoint per edge, ids following edge order
    let mut edge_midpoint = vec![usize::MAX; topo.edges.len()];
    for (eid, e) in topo.edges.iter().enumerate() {
        edge_midpoint[eid] = vertices.len();
        vertices.push(midpoint(mesh.vertices[e.v.0], mesh.vertices[e.v.1]));
        vertex_origin.push(VertexOrigin::EdgeMidpoint(e.v.0, e.v.1));
    }
    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    let mut cell_parent = Vec::with_capacity(4 * mesh.n_cells());
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let [a, b, c] = *cell;
        let m_ab = edge_midpoint[topo.cell_edges[ci][0]];
        let m_bc = edge_midpoint[topo.cell_edges[ci][1]];
        let m_ca = edge_midpoint[topo.cell_edges[ci][2]];
        for child in [
            [a, m_ab, m_ca],
            [b, m_bc, m_ab],
            [c, m_ca, m_bc],
            [m_ab, m_bc, m_ca],
        ] {
            cells.push(canonicalize_cell(&vertices, child));
            cell_parent.push(Some(ci));
        }
    }
    finalize(vertices, cells, cell_parent, vertex_origin, mesh.level + 1)
}

/// Newest-vertex bisection of the marked cells plus conformity closure.
///
/// Marking a cell marks its refinement edge; closure iterates until every
/// cell with a marked edge also has its refinement edge marked. Each cell
/// is then bisected once, twice or three times according to its marked
/// edges, which yields a conforming mesh in a single pass. Every new
/// vertex is an edge midpoint, so the refined space remains nested.
pub fn bisect_refine(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    for &m in marked {
        if m >= mesh.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "marked cell {m} out of range ({} cells)",
                mesh.n_cells()
            )));
        }
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let topo = mesh.edge_topology();
    let mut edge_marked = vec![false; topo.edges.len()];
    for &m in marked {
        edge_marked[topo.cell_edges[m][0]] = true;
    }
    // closure: a marked non-refinement edge forces the refinement edge
    let guard = topo.edges.len() + 2;
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for ci in 0..mesh.n_cells() {
            let [e0, e1, e2] = topo.cell_edges[ci];
            if (edge_marked[e1] || edge_marked[e2]) && !edge_marked[e0] {
                edge_marked[e0] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
        if rounds > guard {
            return Err(Error::Mesh("conformity closure did not terminate".into()));
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut vertex_origin: Vec<VertexOrigin> = (0..mesh.n_vertices())
        .map(VertexOrigin::Inherited)
        .collect();
    let mut edge_midpoint = vec![usize::MAX; topo.edges.len()];
    for (eid, e) in topo.edges.iter().enumerate() {
        if edge_marked[eid] {
            edge_midpoint[eid] = vertices.len();
            vertices.push(midpoint(mesh.vertices[e.v.0], mesh.vertices[e.v.1]));
            vertex_origin.push(VertexOrigin::EdgeMidpoint(e.v.0, e.v.1));
        }
    }

    // bisect [v0,v1,v2] through the midpoint of (v0,v1); children keep the
    // newest vertex last
    let bisect = |cell: [usize; 3], m: usize| -> ([usize; 3], [usize; 3]) {
        ([cell[2], cell[0], m], [cell[1], cell[2], m])
    };

    let mut cells = Vec::new();
    let mut cell_parent = Vec::new();
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let [e0, e1, e2] = topo.cell_edges[ci];
        if !edge_marked[e0] {
            debug_assert!(!edge_marked[e1] && !edge_marked[e2]);
            cells.push(*cell);
            cell_parent.push(Some(ci));
            continue;
        }
        let (first, second) = bisect(*cell, edge_midpoint[e0]);
        // first child's refinement edge is the parent edge (v2, v0) = e2,
        // second child's is (v1, v2) = e1
        for (child, edge) in [(first, e2), (second, e1)] {
            if edge_marked[edge] {
                let (ga, gb) = bisect(child, edge_midpoint[edge]);
                cells.push(ga);
                cells.push(gb);
                cell_parent.push(Some(ci));
                cell_parent.push(Some(ci));
            } else {
                cells.push(child);
                cell_parent.push(Some(ci));
            }
        }
    }
    Ok(finalize(
        vertices,
        cells,
        cell_parent,
        vertex_origin,
        mesh.level + 1,
    ))
}
