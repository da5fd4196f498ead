//! P1 finite element spaces with homogeneous Dirichlet elimination.
//!
//! Degrees of freedom are the interior mesh vertices; boundary vertices
//! are eliminated (the boundary value is identically zero). The free-dof
//! ordering is ascending vertex id, so assembled systems are reproducible
//! bit for bit.

use std::sync::Arc;

use crate::mesh::{Mesh, VertexOrigin};
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// A P1 space over a mesh: the free/fixed vertex partition and the map
/// from vertex ids to free-dof indices.
#[derive(Clone, Debug)]
pub struct FESpace {
    pub mesh: Arc<Mesh>,
    /// Interior vertex ids in ascending order.
    pub free_dofs: Vec<usize>,
    /// Boundary vertex ids in ascending order.
    pub fixed_dofs: Vec<usize>,
    /// `vertex_to_free[v]` is the free-dof index of vertex v, or None if
    /// the vertex is fixed.
    pub vertex_to_free: Vec<Option<usize>>,
}

impl FESpace {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Expand a free-dof coefficient vector to one value per mesh vertex,
    /// with zeros on the boundary.
    pub fn vertex_values(&self, free: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.n_free());
        let mut out = vec![0.0; self.n_vertices()];
        for (i, &v) in self.free_dofs.iter().enumerate() {
            out[v] = free[i];
        }
        out
    }
}

/// A function in the P1 space, stored as one coefficient per free dof
/// (boundary trace is zero by construction).
#[derive(Clone, Debug)]
pub struct NodalVector {
    pub space: Arc<FESpace>,
    pub values: Vec<f64>,
}

impl NodalVector {
    pub fn zero(space: &Arc<FESpace>) -> Self {
        NodalVector {
            space: Arc::clone(space),
            values: vec![0.0; space.n_free()],
        }
    }

    pub fn from_values(space: &Arc<FESpace>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), space.n_free(), "coefficient count mismatch");
        NodalVector {
            space: Arc::clone(space),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Build the P1 space over a mesh: free dofs are exactly the non-boundary
/// vertices, ordered by ascending vertex id.
pub fn build_fespace(mesh: &Arc<Mesh>) -> FESpace {
    let mut free_dofs = Vec::new();
    let mut fixed_dofs = Vec::new();
    let mut vertex_to_free = vec![None; mesh.n_vertices()];
    for v in 0..mesh.n_vertices() {
        if mesh.boundary_vertex[v] {
            fixed_dofs.push(v);
        } else {
            vertex_to_free[v] = Some(free_dofs.len());
            free_dofs.push(v);
        }
    }
    FESpace {
        mesh: Arc::clone(mesh),
        free_dofs,
        fixed_dofs,
        vertex_to_free,
    }
}

/// The matrix of the embedding V_coarse into V_fine: one row per fine
/// free dof, one column per coarse free dof. Inherited vertices carry
/// weight 1 on their coarse source; midpoints carry 1/2 on each free
/// coarse parent (fixed parents contribute 0, consistent with the zero
/// boundary values).
pub fn prolongation(coarse: &FESpace, fine: &FESpace) -> Result<SparseMatrix> {
    let mut triplets = Vec::new();
    for (row, &v) in fine.free_dofs.iter().enumerate() {
        match fine.mesh.vertex_origin[v] {
            VertexOrigin::Initial => {
                return Err(Error::MissingGenealogy(format!(
                    "fine vertex {v} has no refinement origin; the fine mesh \
                     must be produced by refining the coarse mesh"
                )));
            }
            VertexOrigin::Inherited(cv) => {
                if let Some(col) = coarse.vertex_to_free.get(cv).copied().flatten() {
                    triplets.push((row, col, 1.0));
                }
            }
            VertexOrigin::EdgeMidpoint(a, b) => {
                for parent in [a, b] {
                    if let Some(col) = coarse.vertex_to_free.get(parent).copied().flatten() {
                        triplets.push((row, col, 0.5));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        fine.n_free(),
        coarse.n_free(),
        &triplets,
        false,
    ))
}

/// Nodal interpolation: evaluate `u` at every free-dof vertex.
pub fn interpolate<F: Fn(f64, f64) -> f64>(space: &Arc<FESpace>, u: F) -> NodalVector {
    let values = space
        .free_dofs
        .iter()
        .map(|&v| {
            let p = space.mesh.vertices[v];
            u(p[0], p[1])
        })
        .collect();
    NodalVector::from_values(space, values)
}
