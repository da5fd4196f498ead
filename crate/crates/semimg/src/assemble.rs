//! Quadrature-based assembly of the diffusion bilinear form, load vector,
//! nonlinear residual and mass matrix, plus error norms against
//! manufactured solutions.
//!
//! P1 gradients are constant per cell, so the stiffness integrand is
//! integrated exactly with the one-point rule. Loads, nonlinear residuals
//! and mass matrices use a degree-4 (6-point) rule by default: the cube of
//! a P1 function times a basis function has degree 4, and the rule is
//! exact for it. Error norms use a degree-6 rule so quadrature pollution
//! stays below the discretization error at the mesh sizes this crate
//! targets.

use crate::fespace::{FESpace, NodalVector};
use crate::mesh::Mesh;
use crate::problems::NonlinearTerm;
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// Constant symmetric positive definite 2x2 diffusion matrix. Symmetry is
/// structural (only three entries are stored); positive definiteness is
/// checked at construction.
#[derive(Clone, Copy, Debug)]
pub struct DiffusionCoefficient {
    a11: f64,
    a12: f64,
    a22: f64,
}

impl DiffusionCoefficient {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Result<Self> {
        // both eigenvalues positive <=> positive trace entry and determinant
        if !(a11 > 0.0 && a11 * a22 - a12 * a12 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diffusion matrix [[{a11}, {a12}], [{a12}, {a22}]] is not positive definite"
            )));
        }
        Ok(DiffusionCoefficient { a11, a12, a22 })
    }

    pub fn identity() -> Self {
        DiffusionCoefficient {
            a11: 1.0,
            a12: 0.0,
            a22: 1.0,
        }
    }

    pub fn apply(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * g[0] + self.a12 * g[1],
            self.a12 * g[0] + self.a22 * g[1],
        ]
    }

    pub fn entries(&self) -> (f64, f64, f64) {
        (self.a11, self.a12, self.a22)
    }
}

/// Symmetric quadrature rule on the reference triangle, stored in
/// barycentric coordinates with weights normalized to sum to one.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn orbit_1(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, w: f64) {
    points.push([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    weights.push(w);
}

fn orbit_3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

fn orbit_6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        points.push(p);
        weights.push(w);
    }
}

impl QuadratureRule {
    /// One-point centroid rule, exact for affine integrands.
    pub fn degree1() -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        orbit_1(&mut points, &mut weights, 1.0);
        QuadratureRule {
            degree: 1,
            points,
            weights,
        }
    }

    /// Three-point rule, exact through degree 2.
    pub fn degree2() -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        orbit_3(&mut points, &mut weights, 1.0 / 6.0, 1.0 / 3.0);
        QuadratureRule {
            degree: 2,
            points,
            weights,
        }
    }

    /// Six-point rule, exact through degree 4.
    pub fn degree4() -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        orbit_3(
            &mut points,
            &mut weights,
            0.445_948_490_915_964_89,
            0.223_381_589_678_011_47,
        );
        orbit_3(
            &mut points,
            &mut weights,
            0.091_576_213_509_770_743,
            0.109_951_743_655_321_87,
        );
        QuadratureRule {
            degree: 4,
            points,
            weights,
        }
    }

    /// Twelve-point rule, exact through degree 6.
    pub fn degree6() -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        orbit_3(
            &mut points,
            &mut weights,
            0.063_089_014_491_502_228,
            0.050_844_906_370_206_817,
        );
        orbit_3(
            &mut points,
            &mut weights,
            0.249_286_745_170_910_42,
            0.116_786_275_726_379_37,
        );
        orbit_6(
            &mut points,
            &mut weights,
            0.053_145_049_844_816_947,
            0.310_352_451_033_784_41,
            0.082_851_075_618_373_575,
        );
        QuadratureRule {
            degree: 6,
            points,
            weights,
        }
    }

    /// Smallest built-in rule exact at least through the given degree.
    pub fn with_degree_at_least(degree: usize) -> Result<Self> {
        match degree {
            0 | 1 => Ok(Self::degree1()),
            2 => Ok(Self::degree2()),
            3 | 4 => Ok(Self::degree4()),
            5 | 6 => Ok(Self::degree6()),
            d => Err(Error::InvalidArgument(format!(
                "no built-in quadrature rule of degree {d}"
            ))),
        }
    }
}

/// Geometry of one cell used by the assembly loops.
pub(crate) struct CellGeometry {
    pub(crate) vertices: [usize; 3],
    pub(crate) coords: [[f64; 2]; 3],
    pub(crate) area: f64,
    /// Constant gradients of the three barycentric basis functions.
    pub(crate) grads: [[f64; 2]; 3],
}

pub(crate) fn cell_geometry(mesh: &Mesh, cell: usize) -> Result<CellGeometry> {
    let vertices = mesh.cells[cell];
    let coords = [
        mesh.vertices[vertices[0]],
        mesh.vertices[vertices[1]],
        mesh.vertices[vertices[2]],
    ];
    let [p0, p1, p2] = coords;
    let double_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
    if double_area <= 0.0 {
        return Err(Error::Mesh(format!("cell {cell} has non-positive area")));
    }
    let grads = [
        [(p1[1] - p2[1]) / double_area, (p2[0] - p1[0]) / double_area],
        [(p2[1] - p0[1]) / double_area, (p0[0] - p2[0]) / double_area],
        [(p0[1] - p1[1]) / double_area, (p1[0] - p0[0]) / double_area],
    ];
    Ok(CellGeometry {
        vertices,
        coords,
        area: 0.5 * double_area,
        grads,
    })
}

pub(crate) fn physical_point(geo: &CellGeometry, bary: [f64; 3]) -> [f64; 2] {
    [
        bary[0] * geo.coords[0][0] + bary[1] * geo.coords[1][0] + bary[2] * geo.coords[2][0],
        bary[0] * geo.coords[0][1] + bary[1] * geo.coords[1][1] + bary[2] * geo.coords[2][1],
    ]
}

/// Exact local stiffness matrix of one triangle for constant diffusion.
pub fn local_stiffness(
    p0: [f64; 2],
    p1: [f64; 2],
    p2: [f64; 2],
    a: &DiffusionCoefficient,
) -> [[f64; 3]; 3] {
    let double_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
    let area = 0.5 * double_area;
    let grads = [
        [(p1[1] - p2[1]) / double_area, (p2[0] - p1[0]) / double_area],
        [(p2[1] - p0[1]) / double_area, (p0[0] - p2[0]) / double_area],
        [(p0[1] - p1[1]) / double_area, (p1[0] - p0[0]) / double_area],
    ];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        let agi = a.apply(grads[i]);
        for j in 0..3 {
            k[i][j] = area * (agi[0] * grads[j][0] + agi[1] * grads[j][1]);
        }
    }
    k
}

/// Exact local mass matrix of one triangle: (area/12) * [[2,1,1],[1,2,1],[1,1,2]].
pub fn local_mass(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]));
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    m
}

/// Stiffness matrix on the free dofs; symmetric positive definite by
/// coercivity of the diffusion form.
pub fn assemble_stiffness(space: &FESpace, a: &DiffusionCoefficient) -> Result<SparseMatrix> {
    let mesh = &space.mesh;
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell)?;
        let local = local_stiffness(geo.coords[0], geo.coords[1], geo.coords[2], a);
        for i in 0..3 {
            let Some(row) = space.vertex_to_free[geo.vertices[i]] else {
                continue;
            };
            for j in 0..3 {
                let Some(col) = space.vertex_to_free[geo.vertices[j]] else {
                    continue;
                };
                triplets.push((row, col, local[i][j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        space.n_free(),
        space.n_free(),
        &triplets,
        true,
    ))
}

/// Stiffness over all vertices (no boundary elimination); used for kernel
/// checks and diagnostics.
pub fn assemble_stiffness_unconstrained(
    mesh: &Mesh,
    a: &DiffusionCoefficient,
) -> Result<SparseMatrix> {
    let n = mesh.n_vertices();
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell)?;
        let local = local_stiffness(geo.coords[0], geo.coords[1], geo.coords[2], a);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((geo.vertices[i], geo.vertices[j], local[i][j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, &triplets, true))
}

/// Load vector (g, phi_i) over the free dofs.
pub fn assemble_load<F: Fn(f64, f64) -> f64>(
    space: &FESpace,
    g: F,
    quad: &QuadratureRule,
) -> Vec<f64> {
    let mesh = &space.mesh;
    let mut b = vec![0.0; space.n_free()];
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell).expect("valid mesh");
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let gv = g(x[0], x[1]);
            for i in 0..3 {
                if let Some(row) = space.vertex_to_free[geo.vertices[i]] {
                    b[row] += w * geo.area * gv * pt[i];
                }
            }
        }
    }
    b
}

/// Nonlinear residual vector (f(x, u_h), phi_i) with u_h evaluated at the
/// quadrature points by P1 interpolation.
pub fn nonlinear_residual(
    space: &FESpace,
    term: &NonlinearTerm,
    u: &NodalVector,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    let vals = space.vertex_values(&u.values);
    let mut b = vec![0.0; space.n_free()];
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell)?;
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let uq = pt[0] * vals[geo.vertices[0]]
                + pt[1] * vals[geo.vertices[1]]
                + pt[2] * vals[geo.vertices[2]];
            let fv = term.eval(x[0], x[1], uq);
            if !fv.is_finite() {
                return Err(Error::Evaluation {
                    x: x[0],
                    y: x[1],
                    u: uq,
                });
            }
            for i in 0..3 {
                if let Some(row) = space.vertex_to_free[geo.vertices[i]] {
                    b[row] += w * geo.area * fv * pt[i];
                }
            }
        }
    }
    Ok(b)
}

/// Consistent mass matrix (phi_j, phi_i) over the free dofs.
pub fn assemble_mass(space: &FESpace, quad: &QuadratureRule) -> SparseMatrix {
    let mesh = &space.mesh;
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell).expect("valid mesh");
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            for i in 0..3 {
                let Some(row) = space.vertex_to_free[geo.vertices[i]] else {
                    continue;
                };
                for j in 0..3 {
                    let Some(col) = space.vertex_to_free[geo.vertices[j]] else {
                        continue;
                    };
                    triplets.push((row, col, w * geo.area * pt[i] * pt[j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(space.n_free(), space.n_free(), &triplets, true)
}

/// Mass matrix over all vertices; used for partition-of-unity checks.
pub fn assemble_mass_unconstrained(mesh: &Mesh, quad: &QuadratureRule) -> SparseMatrix {
    let n = mesh.n_vertices();
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell).expect("valid mesh");
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            for i in 0..3 {
                for j in 0..3 {
                    triplets.push((
                        geo.vertices[i],
                        geo.vertices[j],
                        w * geo.area * pt[i] * pt[j],
                    ));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets, true)
}

/// Mass-like matrix weighted by `w(x, y, u_h(x))` at the quadrature
/// points; this is the u-derivative block of the semilinear Jacobian when
/// `w` is d f / d u.
pub fn assemble_weighted_mass<W: Fn(f64, f64, f64) -> f64>(
    space: &FESpace,
    u: &NodalVector,
    weight: W,
    quad: &QuadratureRule,
) -> Result<SparseMatrix> {
    let mesh = &space.mesh;
    let vals = space.vertex_values(&u.values);
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell)?;
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let uq = pt[0] * vals[geo.vertices[0]]
                + pt[1] * vals[geo.vertices[1]]
                + pt[2] * vals[geo.vertices[2]];
            let wv = weight(x[0], x[1], uq);
            if !wv.is_finite() {
                return Err(Error::Evaluation {
                    x: x[0],
                    y: x[1],
                    u: uq,
                });
            }
            for i in 0..3 {
                let Some(row) = space.vertex_to_free[geo.vertices[i]] else {
                    continue;
                };
                for j in 0..3 {
                    let Some(col) = space.vertex_to_free[geo.vertices[j]] else {
                        continue;
                    };
                    triplets.push((row, col, w * geo.area * wv * pt[i] * pt[j]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        space.n_free(),
        space.n_free(),
        &triplets,
        true,
    ))
}

/// E^T M_w E for the weighted mass form, accumulated cell by cell
/// without materializing M_w. `embedding` has one row per free dof and
/// few entries per row, so each local 3x3 block scatters into the small
/// dense result directly; this keeps the per-iteration Jacobian cost a
/// single pass over the mesh.
pub fn reduced_weighted_mass<W: Fn(f64, f64, f64) -> f64>(
    space: &FESpace,
    u: &NodalVector,
    weight: W,
    quad: &QuadratureRule,
    embedding: &SparseMatrix,
) -> Result<crate::sparse::DenseMatrix> {
    assert_eq!(embedding.n_rows, space.n_free(), "embedding row count");
    let mesh = &space.mesh;
    let vals = space.vertex_values(&u.values);
    let n = embedding.n_cols;
    let mut out = crate::sparse::DenseMatrix::zeros(n, n);
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell)?;
        let mut local = [[0.0; 3]; 3];
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let uq = pt[0] * vals[geo.vertices[0]]
                + pt[1] * vals[geo.vertices[1]]
                + pt[2] * vals[geo.vertices[2]];
            let wv = weight(x[0], x[1], uq);
            if !wv.is_finite() {
                return Err(Error::Evaluation {
                    x: x[0],
                    y: x[1],
                    u: uq,
                });
            }
            let scale = w * geo.area * wv;
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += scale * pt[i] * pt[j];
                }
            }
        }
        for i in 0..3 {
            let Some(row_i) = space.vertex_to_free[geo.vertices[i]] else {
                continue;
            };
            let (cols_i, vals_i) = embedding.row(row_i);
            for j in 0..3 {
                let Some(row_j) = space.vertex_to_free[geo.vertices[j]] else {
                    continue;
                };
                let (cols_j, vals_j) = embedding.row(row_j);
                let m_ij = local[i][j];
                for (ci, vi) in cols_i.iter().zip(vals_i) {
                    let contrib = m_ij * vi;
                    for (cj, vj) in cols_j.iter().zip(vals_j) {
                        out[(*ci, *cj)] += contrib * vj;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Energy- and L2-norm errors of a discrete function against a
/// manufactured exact solution, integrated cell by cell with the given
/// rule.
pub fn error_norms<U, G>(
    space: &FESpace,
    u_h: &NodalVector,
    u_exact: U,
    grad_u_exact: G,
    a: &DiffusionCoefficient,
    quad: &QuadratureRule,
) -> (f64, f64)
where
    U: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> [f64; 2],
{
    let mesh = &space.mesh;
    let vals = space.vertex_values(&u_h.values);
    let mut energy_sq = 0.0;
    let mut l2_sq = 0.0;
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell).expect("valid mesh");
        // constant discrete gradient on the cell
        let mut gh = [0.0, 0.0];
        for i in 0..3 {
            gh[0] += vals[geo.vertices[i]] * geo.grads[i][0];
            gh[1] += vals[geo.vertices[i]] * geo.grads[i][1];
        }
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let uq = pt[0] * vals[geo.vertices[0]]
                + pt[1] * vals[geo.vertices[1]]
                + pt[2] * vals[geo.vertices[2]];
            let du = u_exact(x[0], x[1]) - uq;
            l2_sq += w * geo.area * du * du;
            let ge = grad_u_exact(x[0], x[1]);
            let dg = [ge[0] - gh[0], ge[1] - gh[1]];
            let adg = a.apply(dg);
            energy_sq += w * geo.area * (dg[0] * adg[0] + dg[1] * adg[1]);
        }
    }
    (energy_sq.max(0.0).sqrt(), l2_sq.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{build_fespace, interpolate, NodalVector};
    use crate::mesh::unit_square_mesh;
    use crate::problems::NonlinearTerm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Closed-form integral of x^a y^b over the reference triangle.
    fn exact_monomial(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn quadrature_rules_are_exact_to_declared_degree() {
        for rule in [
            QuadratureRule::degree1(),
            QuadratureRule::degree2(),
            QuadratureRule::degree4(),
            QuadratureRule::degree6(),
        ] {
            let wsum: f64 = rule.weights.iter().sum();
            assert!(
                (wsum - 1.0).abs() < 1e-13,
                "degree {} weight sum",
                rule.degree
            );
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=rule.degree {
                for b in 0..=(rule.degree - a) {
                    // on the reference triangle x = l1, y = l2
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| 0.5 * w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    assert!(
                        (approx - exact_monomial(a, b)).abs() < 1e-13,
                        "degree {} rule fails on x^{a} y^{b}",
                        rule.degree
                    );
                }
            }
        }
    }

    #[test]
    fn quadrature_selection() {
        assert_eq!(QuadratureRule::with_degree_at_least(3).unwrap().degree, 4);
        assert!(QuadratureRule::with_degree_at_least(9).is_err());
    }

    #[test]
    fn diffusion_must_be_spd() {
        assert!(DiffusionCoefficient::new(1.0, 0.0, 1.0).is_ok());
        assert!(DiffusionCoefficient::new(1.0, 2.0, 1.0).is_err());
        assert!(DiffusionCoefficient::new(-1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn local_stiffness_matches_symbolic_reference() {
        // symbolic integration of grad(phi_i) . grad(phi_j) on the
        // reference triangle (0,0), (1,0), (0,1)
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let k = local_stiffness(
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            &DiffusionCoefficient::identity(),
        );
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_mass_matches_symbolic_reference() {
        let m = local_mass([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m[i][j] - expected).abs() < 1e-12);
            }
            let row_sum: f64 = m[i].iter().sum();
            assert!((row_sum - area / 3.0).abs() < 1e-14);
        }
    }

    /// Independent oracle for hat-function stiffness entries: recover the
    /// P1 gradient on each support cell by solving the 3x3 affine
    /// interpolation system instead of using the closed-form gradients.
    fn hat_self_energy(mesh: &crate::mesh::Mesh, vertex: usize) -> f64 {
        let mut total = 0.0;
        for cell in &mesh.cells {
            if !cell.contains(&vertex) {
                continue;
            }
            let p: Vec<[f64; 2]> = cell.iter().map(|&v| mesh.vertices[v]).collect();
            let vals: Vec<f64> = cell
                .iter()
                .map(|&v| if v == vertex { 1.0 } else { 0.0 })
                .collect();
            // solve [1 x y][c0 c1 c2]^T = vals by Cramer's rule
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
            let gx = ((vals[1] - vals[0]) * (p[2][1] - p[0][1])
                - (vals[2] - vals[0]) * (p[1][1] - p[0][1]))
                / det;
            let gy = ((vals[2] - vals[0]) * (p[1][0] - p[0][0])
                - (vals[1] - vals[0]) * (p[2][0] - p[0][0]))
                / det;
            total += 0.5 * det.abs() * (gx * gx + gy * gy);
        }
        total
    }

    #[test]
    fn stiffness_center_diagonal_is_four() {
        let mesh = Arc::new(unit_square_mesh(2).unwrap());
        let space = build_fespace(&mesh);
        let a = assemble_stiffness(&space, &DiffusionCoefficient::identity()).unwrap();
        assert_eq!(a.n_rows, 1);
        assert!((a.get(0, 0) - 4.0).abs() < 1e-12);
        let center = space.free_dofs[0];
        assert!((a.get(0, 0) - hat_self_energy(&mesh, center)).abs() < 1e-12);
    }

    #[test]
    fn stiffness_is_spd_on_random_vectors() {
        let mesh = Arc::new(unit_square_mesh(4).unwrap());
        let space = build_fespace(&mesh);
        let a = assemble_stiffness(&space, &DiffusionCoefficient::identity()).unwrap();
        assert!(a.verify_symmetry_sampled(3, 64));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x: Vec<f64> = (0..a.n_rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            assert!(crate::sparse::dot(&x, &a.matvec(&x)) > 0.0);
        }
    }

    #[test]
    fn stiffness_kernel_contains_constants() {
        let mesh = unit_square_mesh(3).unwrap();
        let a = assemble_stiffness_unconstrained(&mesh, &DiffusionCoefficient::identity()).unwrap();
        let ones = vec![1.0; a.n_rows];
        for v in a.matvec(&ones) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn load_examples() {
        let mesh = Arc::new(unit_square_mesh(2).unwrap());
        let space = build_fespace(&mesh);
        let quad = QuadratureRule::degree4();
        let zero = assemble_load(&space, |_, _| 0.0, &quad);
        assert_eq!(zero, vec![0.0]);
        // (1, phi_center) = patch area / 3 = (6 * 1/8) / 3 = 0.25
        let ones = assemble_load(&space, |_, _| 1.0, &quad);
        assert!((ones[0] - 0.25).abs() < 1e-13);
        // affine g: degree-2 and degree-4 rules agree to rounding
        let g = |x: f64, y: f64| 3.0 * x - 2.0 * y + 0.5;
        let b2 = assemble_load(&space, g, &QuadratureRule::degree2());
        let b4 = assemble_load(&space, g, &quad);
        for (u, v) in b2.iter().zip(&b4) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn nonlinear_residual_zero_term() {
        let mesh = Arc::new(unit_square_mesh(4).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let u = interpolate(&space, |x, y| x * y);
        let r = nonlinear_residual(
            &space,
            &NonlinearTerm::zero(),
            &u,
            &QuadratureRule::degree4(),
        )
        .unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlinear_residual_identity_equals_mass_action() {
        let mesh = Arc::new(unit_square_mesh(4).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let quad = QuadratureRule::degree4();
        let u = interpolate(&space, |x, y| (x - 0.3) * (y + 0.2));
        let term = NonlinearTerm::new(|_, _, u| u, Some(|_, _, _| 1.0), |_, _| 1.0);
        let r = nonlinear_residual(&space, &term, &u, &quad).unwrap();
        let m = assemble_mass(&space, &quad);
        let mu = m.matvec(&u.values);
        for (a, b) in r.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    /// Exact integral of lambda0^a lambda1^b lambda2^c over a triangle of
    /// the given area (the barycentric power formula).
    fn bary_integral(area: f64, a: usize, b: usize, c: usize) -> f64 {
        2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    #[test]
    fn nonlinear_residual_cubic_single_cell_oracle() {
        // one reference triangle with all vertices free so the residual
        // has three entries; compare (u_h^3, phi_i) against the exact
        // barycentric expansion of the quartic integrand
        let mesh = Arc::new(crate::mesh::Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            cells: vec![[0, 1, 2]],
            boundary_vertex: vec![false; 3],
            cell_parent: vec![None],
            vertex_origin: vec![crate::mesh::VertexOrigin::Initial; 3],
            level: 1,
            h_max: 2f64.sqrt(),
        });
        let space = Arc::new(FESpace {
            mesh: Arc::clone(&mesh),
            free_dofs: vec![0, 1, 2],
            fixed_dofs: vec![],
            vertex_to_free: vec![Some(0), Some(1), Some(2)],
        });
        let nodal = [0.7, -0.4, 1.3];
        let u = NodalVector::from_values(&space, nodal.to_vec());
        let term = NonlinearTerm::new(|_, _, u| u * u * u, Some(|_, _, u| 3.0 * u * u), |_, _| 0.0);
        let r = nonlinear_residual(&space, &term, &u, &QuadratureRule::degree4()).unwrap();
        // expand (sum_k n_k lambda_k)^3 * lambda_i exactly
        let area = 0.5;
        for i in 0..3 {
            let mut exact = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    for s in 0..3 {
                        let mut powers = [0usize; 3];
                        powers[p] += 1;
                        powers[q] += 1;
                        powers[s] += 1;
                        powers[i] += 1;
                        exact += nodal[p]
                            * nodal[q]
                            * nodal[s]
                            * bary_integral(area, powers[0], powers[1], powers[2]);
                    }
                }
            }
            assert!((r[i] - exact).abs() < 1e-14, "component {i}");
        }
    }

    #[test]
    fn nonlinear_residual_reports_bad_evaluation() {
        let mesh = Arc::new(unit_square_mesh(2).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let u = interpolate(&space, |_, _| -1.0);
        let term = NonlinearTerm::new(
            |_, _, u: f64| u.ln(),
            None::<fn(f64, f64, f64) -> f64>,
            |_, _| 0.0,
        );
        assert!(matches!(
            nonlinear_residual(&space, &term, &u, &QuadratureRule::degree4()),
            Err(Error::Evaluation { .. })
        ));
    }

    #[test]
    fn mass_partition_of_unity() {
        let mesh = unit_square_mesh(3).unwrap();
        let m = assemble_mass_unconstrained(&mesh, &QuadratureRule::degree4());
        let ones = vec![1.0; m.n_rows];
        let total = crate::sparse::dot(&ones, &m.matvec(&ones));
        assert!((total - mesh.total_area()).abs() < 1e-13);
    }

    #[test]
    fn weighted_mass_with_unit_weight_is_mass() {
        let mesh = Arc::new(unit_square_mesh(4).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let quad = QuadratureRule::degree4();
        let u = interpolate(&space, |x, _| x);
        let wm = assemble_weighted_mass(&space, &u, |_, _, _| 1.0, &quad).unwrap();
        let m = assemble_mass(&space, &quad);
        assert_eq!(wm.row_offsets, m.row_offsets);
        for (a, b) in wm.values.iter().zip(&m.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reduced_weighted_mass_matches_triple_product() {
        let mesh = Arc::new(unit_square_mesh(4).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let quad = QuadratureRule::degree4();
        let u = interpolate(&space, |x, y| x + 0.5 * y);
        let weight = |x: f64, _: f64, v: f64| 1.0 + x + v * v;
        // tall embedding with a handful of columns
        let n = space.n_free();
        let mut triplets = Vec::new();
        for r in 0..n {
            triplets.push((r, r % 3, 1.0 + r as f64 * 0.1));
            triplets.push((r, 3, ((r * 7) % 5) as f64 * 0.25));
        }
        let e = crate::sparse::SparseMatrix::from_triplets(n, 4, &triplets, false);
        let fused = reduced_weighted_mass(&space, &u, weight, &quad, &e).unwrap();
        let m = assemble_weighted_mass(&space, &u, weight, &quad).unwrap();
        let reference = e.transpose().multiply(&m.multiply(&e)).to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (fused[(i, j)] - reference[(i, j)]).abs()
                        < 1e-12 * (1.0 + reference[(i, j)].abs()),
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn error_norms_affine_exactness() {
        // on a space without fixed dofs the interpolant of an affine
        // function is the function itself, so both errors vanish
        let mesh = Arc::new(crate::mesh::Mesh {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]],
            cells: vec![[0, 1, 2]],
            boundary_vertex: vec![false; 3],
            cell_parent: vec![None],
            vertex_origin: vec![crate::mesh::VertexOrigin::Initial; 3],
            level: 1,
            h_max: 2.0,
        });
        let space = Arc::new(FESpace {
            mesh: Arc::clone(&mesh),
            free_dofs: vec![0, 1, 2],
            fixed_dofs: vec![],
            vertex_to_free: vec![Some(0), Some(1), Some(2)],
        });
        let u = |x: f64, y: f64| 1.5 * x - 0.5 * y + 2.0;
        let u_h = interpolate(&space, u);
        let (energy, l2) = error_norms(
            &space,
            &u_h,
            u,
            |_, _| [1.5, -0.5],
            &DiffusionCoefficient::identity(),
            &QuadratureRule::degree6(),
        );
        assert!(energy <= 1e-13 && l2 <= 1e-13);
    }

    #[test]
    fn error_norms_of_zero_against_sine() {
        // u_h = 0: l2 -> 1/2 and energy -> pi/sqrt(2) as the mesh (and
        // with it the composite quadrature) refines
        let exact_l2 = 0.5;
        let exact_energy = PI / 2f64.sqrt();
        for n in [8, 16, 32] {
            let mesh = Arc::new(unit_square_mesh(n).unwrap());
            let space = Arc::new(build_fespace(&mesh));
            let u_h = NodalVector::zero(&space);
            let (energy, l2) = error_norms(
                &space,
                &u_h,
                |x, y| (PI * x).sin() * (PI * y).sin(),
                |x, y| {
                    [
                        PI * (PI * x).cos() * (PI * y).sin(),
                        PI * (PI * x).sin() * (PI * y).cos(),
                    ]
                },
                &DiffusionCoefficient::identity(),
                &QuadratureRule::degree6(),
            );
            // the composite degree-6 rule is already exact to rounding
            // at these resolutions
            assert!((l2 - exact_l2).abs() < 1e-12, "n = {n}: l2 = {l2}");
            assert!(
                (energy - exact_energy).abs() < 1e-12,
                "n = {n}: energy = {energy}"
            );
        }
    }

    #[test]
    fn error_norms_decompose_per_cell() {
        // norms are sums of per-cell contributions, hence independent of
        // any dof ordering
        let mesh = Arc::new(unit_square_mesh(3).unwrap());
        let space = Arc::new(build_fespace(&mesh));
        let u_h = interpolate(&space, |x, y| x * (1.0 - x) * y);
        let quad = QuadratureRule::degree6();
        let a = DiffusionCoefficient::identity();
        let u = |x: f64, y: f64| (2.0 * x + y).sin();
        let grad = |x: f64, y: f64| [2.0 * (2.0 * x + y).cos(), (2.0 * x + y).cos()];
        let (energy, l2) = error_norms(&space, &u_h, u, grad, &a, &quad);
        // recompute via single-cell meshes sharing the same nodal data
        let vals = space.vertex_values(&u_h.values);
        let mut energy_sq = 0.0;
        let mut l2_sq = 0.0;
        for cell in 0..mesh.n_cells() {
            let ids = mesh.cells[cell];
            let sub = Arc::new(crate::mesh::Mesh {
                vertices: ids.iter().map(|&v| mesh.vertices[v]).collect(),
                cells: vec![[0, 1, 2]],
                boundary_vertex: vec![false; 3],
                cell_parent: vec![None],
                vertex_origin: vec![crate::mesh::VertexOrigin::Initial; 3],
                level: 1,
                h_max: 1.0,
            });
            let sub_space = Arc::new(FESpace {
                mesh: Arc::clone(&sub),
                free_dofs: vec![0, 1, 2],
                fixed_dofs: vec![],
                vertex_to_free: vec![Some(0), Some(1), Some(2)],
            });
            let sub_u =
                NodalVector::from_values(&sub_space, ids.iter().map(|&v| vals[v]).collect());
            let (e, l) = error_norms(&sub_space, &sub_u, u, grad, &a, &quad);
            energy_sq += e * e;
            l2_sq += l * l;
        }
        assert!((energy - energy_sq.sqrt()).abs() < 1e-12);
        assert!((l2 - l2_sq.sqrt()).abs() < 1e-12);
    }
}
