//! One correction step: an approximate multigrid solve of the linearized
//! fine-level problem followed by a semilinear solve on the coarse space
//! augmented by the current fine iterate.
//!
//! The augmented space V_H + span{u~} is realized through an embedding
//! matrix E whose first block is the composed prolongation from the
//! designated coarse level and whose last column is the fine-level vector
//! u~. All integrals of the reduced problem are evaluated on the fine
//! level through E, so no hybrid mesh is ever built: the reduced operator
//! is E^T A E and the reduced nonlinear term is E^T F(E c). The reduced
//! system has (coarse dimension + 1) unknowns independent of the fine
//! level, which is what keeps the nonlinear work per level linear in the
//! fine-level dimension.

use crate::assemble::{nonlinear_residual, reduced_weighted_mass};
use crate::fespace::NodalVector;
use crate::fmg::Hierarchy;
use crate::problems::ProblemSpec;
use crate::sparse::{axpy, mg_solve_m_steps, norm2, DenseCholesky, DenseMatrix, SparseMatrix};
use crate::{Error, Result};

/// Embedding of the augmented coarse space into a fine level: one column
/// per coarse free dof plus a final column holding the fine iterate.
pub struct AugmentedSpace {
    pub embedding: SparseMatrix,
    pub level: usize,
    pub coarse_level: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearSolverKind {
    /// Damped Newton with the analytic u-derivative when available,
    /// otherwise central finite differences.
    Newton,
    /// Picard iteration on the nonlinear term; no derivative needed.
    FixedPoint,
}

/// Parameters of one correction step.
#[derive(Clone, Debug)]
pub struct CorrectionConfig {
    /// V-cycles applied to the linearized problem.
    pub vcycles: usize,
    pub solver: NonlinearSolverKind,
    /// Residual 2-norm tolerance of the reduced semilinear solve.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Backtracking line-search halvings before giving up.
    pub max_halvings: usize,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            vcycles: 2,
            solver: NonlinearSolverKind::Newton,
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 20,
        }
    }
}

/// Output of the reduced semilinear solve: the fine-level iterate and the
/// number of nonlinear iterations it took.
pub struct CorrectionStep {
    pub u: NodalVector,
    pub nonlinear_iters: usize,
}

/// Right-hand side of the linearized auxiliary problem
/// a(u^, v) = -(f(x, u_prev), v) + (g, v).
pub fn linearized_rhs(
    h: &Hierarchy,
    level: usize,
    u_prev: &NodalVector,
    problem: &ProblemSpec,
) -> Result<Vec<f64>> {
    let f = nonlinear_residual(h.space(level), &problem.nonlinear, u_prev, h.quadrature())?;
    let mut b = h.load(level).to_vec();
    axpy(-1.0, &f, &mut b);
    Ok(b)
}

/// Approximate solve of the linearized problem: `m` V-cycles starting
/// from the previous iterate. Deliberately not an exact solve; the error
/// contracts by the per-cycle factor to the m-th power.
pub fn approximate_linear_solve(
    h: &Hierarchy,
    level: usize,
    b: &[f64],
    u_prev: &NodalVector,
    m: usize,
) -> Result<NodalVector> {
    let x = mg_solve_m_steps(h.stack(), level, b, &u_prev.values, m)?;
    Ok(NodalVector::from_values(h.space(level), x))
}

/// Assemble the embedding of V_coarse + span{u~} into the given level.
pub fn build_augmented_space(
    h: &Hierarchy,
    level: usize,
    u_tilde: &NodalVector,
) -> Result<AugmentedSpace> {
    if u_tilde.len() != h.space(level).n_free() {
        return Err(Error::DimensionMismatch(format!(
            "iterate has {} entries, level {} has {} free dofs",
            u_tilde.len(),
            level + 1,
            h.space(level).n_free()
        )));
    }
    let composed = h.composed_prolongation(level)?;
    Ok(AugmentedSpace {
        embedding: composed.append_column(&u_tilde.values),
        level,
        coarse_level: h.coarse_index(),
    })
}

/// E^T S E as a dense matrix; the result has augmented (small) dimension.
fn reduced_dense(e: &SparseMatrix, et: &SparseMatrix, s: &SparseMatrix) -> DenseMatrix {
    et.multiply(&s.multiply(e)).to_dense()
}

fn add_dense(a: &mut DenseMatrix, b: &DenseMatrix) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

/// Solve the semilinear problem restricted to the augmented space: find
/// coefficients c with E^T (A (E c) + F(E c) - b) = 0, and return E c.
///
/// Newton uses the reduced Jacobian E^T (A + M_f) E with M_f the
/// mass-like matrix weighted by the u-derivative of the nonlinear term,
/// damped by backtracking on the residual 2-norm. The iteration starts at
/// c = (0, ..., 0, 1), i.e. at u~ itself. A Cholesky pivot below 1e-13
/// (relative) reports the augmented space as degenerate rather than
/// regularizing silently.
pub fn coarse_semilinear_solve(
    h: &Hierarchy,
    aug: &AugmentedSpace,
    problem: &ProblemSpec,
    cfg: &CorrectionConfig,
) -> Result<CorrectionStep> {
    let level = aug.level;
    let space = h.space(level);
    let a = h.matrix(level);
    let b = h.load(level);
    let quad = h.quadrature();
    let term = &problem.nonlinear;
    let e = &aug.embedding;
    let n_reduced = e.n_cols;

    // reduced residual R(c) and the fine-level function E c
    let evaluate = |c: &[f64]| -> Result<(Vec<f64>, NodalVector)> {
        let u = NodalVector::from_values(space, e.matvec(c));
        let f = nonlinear_residual(space, term, &u, quad)?;
        let mut fine = a.matvec(&u.values);
        for i in 0..fine.len() {
            fine[i] += f[i] - b[i];
        }
        Ok((e.matvec_transpose(&fine), u))
    };

    let mut c = vec![0.0; n_reduced];
    c[n_reduced - 1] = 1.0;
    let (mut r, mut u) = evaluate(&c)?;
    let mut rn = norm2(&r);
    if rn <= cfg.tolerance {
        return Ok(CorrectionStep {
            u,
            nonlinear_iters: 0,
        });
    }

    let et = e.transpose();
    let reduced_stiffness = reduced_dense(e, &et, a);
    let mut iterations = 0;
    loop {
        if iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: rn,
            });
        }
        let step = match cfg.solver {
            NonlinearSolverKind::Newton => {
                let reduced_mass =
                    reduced_weighted_mass(space, &u, |x, y, v| term.dfdu(x, y, v), quad, e)?;
                let mut jacobian = reduced_stiffness.clone();
                add_dense(&mut jacobian, &reduced_mass);
                let chol = DenseCholesky::factor(&jacobian, 1e-13).map_err(|err| match err {
                    Error::Factorization { pivot, row } => Error::DegenerateSpace(format!(
                        "reduced Jacobian pivot {pivot:.3e} at row {row}; \
                         the fine iterate may lie in the coarse space"
                    )),
                    other => other,
                })?;
                let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
                chol.solve(&neg_r)
            }
            NonlinearSolverKind::FixedPoint => {
                // Picard: solve E^T A E c' = E^T (b - F(E c)), step = c' - c
                let f = nonlinear_residual(space, term, &u, quad)?;
                let mut rhs_fine = b.to_vec();
                axpy(-1.0, &f, &mut rhs_fine);
                let rhs = e.matvec_transpose(&rhs_fine);
                let chol =
                    DenseCholesky::factor(&reduced_stiffness, 1e-13).map_err(|err| match err {
                        Error::Factorization { pivot, row } => Error::DegenerateSpace(format!(
                            "reduced stiffness pivot {pivot:.3e} at row {row}"
                        )),
                        other => other,
                    })?;
                let next = chol.solve(&rhs);
                next.iter().zip(&c).map(|(n, o)| n - o).collect()
            }
        };
        // backtracking on the residual norm; evaluation failures reject
        // the trial point the same way an increase does
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut candidate = c.clone();
            axpy(lambda, &step, &mut candidate);
            match evaluate(&candidate) {
                Ok((rc, uc)) => {
                    let rcn = norm2(&rc);
                    if rcn <= (1.0 - 1e-4 * lambda) * rn {
                        accepted = Some((candidate, rc, uc, rcn));
                        break;
                    }
                }
                Err(Error::Evaluation { .. }) => {}
                Err(other) => return Err(other),
            }
            lambda *= 0.5;
        }
        let Some((cc, rc, uc, rcn)) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                residual: rn,
            });
        };
        c = cc;
        r = rc;
        u = uc;
        rn = rcn;
        iterations += 1;
        if rn <= cfg.tolerance {
            return Ok(CorrectionStep {
                u,
                nonlinear_iters: iterations,
            });
        }
    }
}

/// One correction step on the given level: linearize about the current
/// iterate, run `m` V-cycles, then solve the semilinear problem on the
/// augmented coarse space.
pub fn one_correction_step(
    h: &Hierarchy,
    level: usize,
    u_ell: &NodalVector,
    problem: &ProblemSpec,
    cfg: &CorrectionConfig,
) -> Result<CorrectionStep> {
    let b = linearized_rhs(h, level, u_ell, problem)?;
    let u_tilde = approximate_linear_solve(h, level, &b, u_ell, cfg.vcycles)?;
    let aug = build_augmented_space(h, level, &u_tilde)?;
    coarse_semilinear_solve(h, &aug, problem, cfg)
}
