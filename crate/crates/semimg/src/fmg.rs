//! The full multigrid driver: solve the semilinear problem exactly on the
//! coarsest space, then ascend the hierarchy applying a fixed number of
//! correction steps per level. Also hosts the damped-Newton reference
//! solver used as the ground-truth oracle in tests and benchmarks.

use std::sync::Arc;
use std::time::Instant;

use crate::assemble::{
    assemble_load, assemble_stiffness, assemble_weighted_mass, nonlinear_residual, QuadratureRule,
};
use crate::correction::{one_correction_step, CorrectionConfig};
use crate::fespace::{build_fespace, prolongation, FESpace, NodalVector};
use crate::mesh::{l_shaped_mesh, uniform_refine, unit_square_mesh, Mesh};
use crate::problems::{Domain, ProblemSpec};
use crate::sparse::{
    axpy, dot, norm2, sub, v_cycle, DenseCholesky, MGLevelStack, SparseMatrix, DEFAULT_SWEEPS,
};
use crate::{Error, Result};

/// Nested P1 spaces over a refinement chain, with per-level stiffness
/// matrices, load vectors, inter-level prolongations and the multigrid
/// stack. `coarse_index` designates the level whose space plays the role
/// of the low-dimensional correction space.
pub struct Hierarchy {
    spaces: Vec<Arc<FESpace>>,
    /// `prolongations[k]` embeds level k into level k+1.
    prolongations: Vec<Arc<SparseMatrix>>,
    stiffness: Vec<Arc<SparseMatrix>>,
    loads: Vec<Vec<f64>>,
    /// Composed embedding from `coarse_index` into level k (None below
    /// the coarse level).
    composed_from_coarse: Vec<Option<SparseMatrix>>,
    coarse_index: usize,
    stack: MGLevelStack,
    quad: QuadratureRule,
}

impl Hierarchy {
    /// Single-level hierarchy over the given mesh; grown level by level
    /// with [`Hierarchy::extend_with_mesh`] (this is how the adaptive
    /// loop builds its chain).
    pub fn from_base_mesh(problem: &ProblemSpec, base: Mesh) -> Result<Self> {
        let quad = QuadratureRule::degree4();
        let mesh = Arc::new(base);
        let space = Arc::new(build_fespace(&mesh));
        let a = Arc::new(assemble_stiffness(&space, &problem.diffusion)?);
        let load = assemble_load(&space, |x, y| (problem.source)(x, y), &quad);
        let stack = MGLevelStack::new(vec![Arc::clone(&a)], vec![])?;
        let identity = SparseMatrix::identity(space.n_free());
        Ok(Hierarchy {
            spaces: vec![space],
            prolongations: vec![],
            stiffness: vec![a],
            loads: vec![load],
            composed_from_coarse: vec![Some(identity)],
            coarse_index: 0,
            stack,
            quad,
        })
    }

    /// Append one refinement level to the chain.
    pub fn extend_with_mesh(&mut self, problem: &ProblemSpec, mesh: Mesh) -> Result<()> {
        let mesh = Arc::new(mesh);
        let space = Arc::new(build_fespace(&mesh));
        let top = self.spaces.last().unwrap();
        if space.n_free() <= top.n_free() {
            return Err(Error::InvalidArgument(format!(
                "levels must be strictly nested: {} free dofs after {}",
                space.n_free(),
                top.n_free()
            )));
        }
        let p = Arc::new(prolongation(top, &space)?);
        let a = Arc::new(assemble_stiffness(&space, &problem.diffusion)?);
        let load = assemble_load(&space, |x, y| (problem.source)(x, y), &self.quad);
        self.stack.push_level(Arc::clone(&a), Arc::clone(&p))?;
        let new_level = self.spaces.len();
        let composed = if new_level == self.coarse_index {
            Some(SparseMatrix::identity(space.n_free()))
        } else if new_level > self.coarse_index {
            let prev = self.composed_from_coarse[new_level - 1]
                .as_ref()
                .expect("composed chain is contiguous above the coarse level");
            Some(p.multiply(prev))
        } else {
            None
        };
        self.spaces.push(space);
        self.prolongations.push(p);
        self.stiffness.push(a);
        self.loads.push(load);
        self.composed_from_coarse.push(composed);
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.spaces.len()
    }

    pub fn space(&self, level: usize) -> &Arc<FESpace> {
        &self.spaces[level]
    }

    pub fn matrix(&self, level: usize) -> &SparseMatrix {
        &self.stiffness[level]
    }

    pub fn load(&self, level: usize) -> &[f64] {
        &self.loads[level]
    }

    /// Prolongation embedding level `k` into level `k + 1`.
    pub fn prolongation_from(&self, level: usize) -> &SparseMatrix {
        &self.prolongations[level]
    }

    pub fn coarse_index(&self) -> usize {
        self.coarse_index
    }

    pub fn stack(&self) -> &MGLevelStack {
        &self.stack
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    /// Composed embedding of the designated coarse space into level k.
    pub fn composed_prolongation(&self, level: usize) -> Result<&SparseMatrix> {
        if level < self.coarse_index {
            return Err(Error::InvalidArgument(format!(
                "level {level} lies below the coarse level {}",
                self.coarse_index
            )));
        }
        Ok(self.composed_from_coarse[level].as_ref().unwrap())
    }

    /// Embed coefficients from one level to a finer one by chaining the
    /// stored prolongations.
    pub fn prolong_between(&self, from: usize, to: usize, values: &[f64]) -> Vec<f64> {
        assert!(from <= to && to < self.n_levels());
        let mut v = values.to_vec();
        for k in from..to {
            v = self.prolongations[k].matvec(&v);
        }
        v
    }

    /// Energy norm sqrt(w^T A_k w) on the given level.
    pub fn a_norm(&self, level: usize, w: &[f64]) -> f64 {
        dot(w, &self.stiffness[level].matvec(w)).max(0.0).sqrt()
    }
}

fn ceil_log2(n: usize) -> usize {
    let mut r = 0;
    while (1usize << r) < n {
        r += 1;
    }
    r
}

/// Base mesh for a problem domain with roughly `base_n` cells per unit
/// side (the L-shaped domain is refined uniformly to the next power of
/// two).
pub fn base_mesh_for(problem: &ProblemSpec, base_n: usize) -> Result<Mesh> {
    match problem.domain {
        Domain::UnitSquare => unit_square_mesh(base_n),
        Domain::LShaped => {
            let mut mesh = l_shaped_mesh();
            for _ in 0..ceil_log2(base_n) {
                mesh = uniform_refine(&mesh);
            }
            Ok(mesh)
        }
    }
}

/// Build an n-level hierarchy by repeated uniform refinement of the base
/// mesh, with the coarsest level as the designated correction space.
pub fn build_hierarchy(problem: &ProblemSpec, n_levels: usize, base_n: usize) -> Result<Hierarchy> {
    build_hierarchy_with(problem, n_levels, base_n, 0)
}

/// As [`build_hierarchy`] with an explicit 0-based coarse level index.
pub fn build_hierarchy_with(
    problem: &ProblemSpec,
    n_levels: usize,
    base_n: usize,
    coarse_index: usize,
) -> Result<Hierarchy> {
    if n_levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "a hierarchy needs at least 2 levels, got {n_levels}"
        )));
    }
    if coarse_index >= n_levels {
        return Err(Error::InvalidArgument(format!(
            "coarse index {coarse_index} out of range for {n_levels} levels"
        )));
    }
    let base = base_mesh_for(problem, base_n)?;
    if build_fespace(&Arc::new(base.clone())).n_free() == 0 {
        return Err(Error::CoarseMeshTooCoarse(
            "the base mesh has no interior vertices".into(),
        ));
    }
    let mut h = Hierarchy::from_base_mesh(problem, base)?;
    h.coarse_index = coarse_index;
    if coarse_index == 0 {
        h.composed_from_coarse[0] = Some(SparseMatrix::identity(h.spaces[0].n_free()));
    } else {
        h.composed_from_coarse[0] = None;
    }
    let mut mesh = h.spaces[0].mesh.as_ref().clone();
    for _ in 1..n_levels {
        mesh = uniform_refine(&mesh);
        h.extend_with_mesh(problem, mesh.clone())?;
    }
    Ok(h)
}

/// Configuration of the full multigrid scheme.
#[derive(Clone, Debug)]
pub struct FMGConfig {
    /// Correction steps per level.
    pub corrections_per_level: usize,
    /// Residual tolerance of the coarsest Newton solve.
    pub coarsest_tol: f64,
    /// Parameters of each correction step (V-cycle count, reduced-solve
    /// tolerances).
    pub correction: CorrectionConfig,
}

impl Default for FMGConfig {
    fn default() -> Self {
        FMGConfig {
            corrections_per_level: 1,
            coarsest_tol: 1e-12,
            correction: CorrectionConfig::default(),
        }
    }
}

impl FMGConfig {
    pub fn with_vcycles(mut self, m: usize) -> Self {
        self.correction.vcycles = m;
        self
    }

    pub fn with_corrections(mut self, p: usize) -> Self {
        self.corrections_per_level = p;
        self
    }
}

/// Per-level outcome of a full multigrid run. Error columns stay empty
/// until a caller fills them in against an exact solution or an oracle;
/// that keeps error measurement out of the timed solve path.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    /// 1-based level number.
    pub level: usize,
    pub n_free: usize,
    pub nonlinear_iters: usize,
    pub level_time_s: f64,
    pub cumulative_time_s: f64,
    pub energy_error: Option<f64>,
    pub l2_error: Option<f64>,
}

/// Full record of a run: per-level rows plus the final iterate of every
/// level (needed to measure errors after the fact).
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub levels: Vec<LevelRecord>,
    pub solutions: Vec<NodalVector>,
}

/// Result of a damped-Newton solve.
pub struct NewtonOutcome {
    pub u: NodalVector,
    pub iterations: usize,
}

enum InnerSolve<'a> {
    /// Dense Cholesky of the full Jacobian; for small levels.
    Dense,
    /// Conjugate gradients preconditioned by one V-cycle on the stiffness
    /// stack.
    Pcg {
        stack: &'a MGLevelStack,
        level: usize,
    },
}

fn add_sparse_into_dense(m: &SparseMatrix, d: &mut crate::sparse::DenseMatrix) {
    for r in 0..m.n_rows {
        for k in m.row_offsets[r]..m.row_offsets[r + 1] {
            d[(r, m.column_indices[k])] += m.values[k];
        }
    }
}

fn pcg<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = norm2(b).max(1e-300);
    if norm2(&r) <= rel_tol * b_norm {
        return Ok(x);
    }
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm2(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
        z = precondition(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: norm2(&r) / b_norm,
    })
}

/// Damped Newton iteration for a(u, v) + (f(x,u), v) = (g, v) on one
/// level of the hierarchy.
fn damped_newton(
    h: &Hierarchy,
    level: usize,
    problem: &ProblemSpec,
    x0: Vec<f64>,
    tol: f64,
    max_iterations: usize,
    inner: InnerSolve,
) -> Result<NewtonOutcome> {
    let space = h.space(level);
    let a = h.matrix(level);
    let b = h.load(level);
    let quad = h.quadrature();
    let term = &problem.nonlinear;

    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let nodal = NodalVector::from_values(space, u.to_vec());
        let f = nonlinear_residual(space, term, &nodal, quad)?;
        let mut r = a.matvec(u);
        for i in 0..r.len() {
            r[i] += f[i] - b[i];
        }
        Ok(r)
    };

    let mut u = x0;
    let mut r = residual(&u)?;
    let mut rn = norm2(&r);
    let mut iterations = 0;
    while rn > tol {
        if iterations >= max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: rn,
            });
        }
        let nodal = NodalVector::from_values(space, u.clone());
        let m = assemble_weighted_mass(space, &nodal, |x, y, v| term.dfdu(x, y, v), quad)?;
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = match &inner {
            InnerSolve::Dense => {
                let mut j = a.to_dense();
                add_sparse_into_dense(&m, &mut j);
                DenseCholesky::factor(&j, 0.0)?.solve(&neg_r)
            }
            InnerSolve::Pcg { stack, level } => {
                let apply = |x: &[f64]| {
                    let mut y = a.matvec(x);
                    let my = m.matvec(x);
                    for i in 0..y.len() {
                        y[i] += my[i];
                    }
                    y
                };
                let precondition = |res: &[f64]| -> Result<Vec<f64>> {
                    let mut z = vec![0.0; res.len()];
                    v_cycle(stack, *level, res, &mut z, DEFAULT_SWEEPS, DEFAULT_SWEEPS)?;
                    Ok(z)
                };
                pcg(apply, precondition, &neg_r, 1e-12, 400)?
            }
        };
        // backtracking on the residual norm
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let mut candidate = u.clone();
            axpy(lambda, &d, &mut candidate);
            match residual(&candidate) {
                Ok(rc) => {
                    let rcn = norm2(&rc);
                    if rcn <= (1.0 - 1e-4 * lambda) * rn {
                        accepted = Some((candidate, rc, rcn));
                        break;
                    }
                }
                Err(Error::Evaluation { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        let Some((candidate, rc, rcn)) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                residual: rn,
            });
        };
        u = candidate;
        r = rc;
        rn = rcn;
        iterations += 1;
    }
    Ok(NewtonOutcome {
        u: NodalVector::from_values(space, u),
        iterations,
    })
}

/// Exact (to `tol`) damped-Newton solve of the semilinear problem on the
/// coarsest level, with dense linear algebra.
pub fn solve_coarsest(h: &Hierarchy, problem: &ProblemSpec, tol: f64) -> Result<NewtonOutcome> {
    if h.space(0).n_free() == 0 {
        return Err(Error::CoarseMeshTooCoarse(
            "coarsest space has no free dofs; refine the base mesh".into(),
        ));
    }
    let x0 = vec![0.0; h.space(0).n_free()];
    damped_newton(h, 0, problem, x0, tol, 50, InnerSolve::Dense)
}

/// Ground-truth discrete solution on an arbitrary level: full damped
/// Newton from zero with V-cycle-preconditioned conjugate-gradient inner
/// solves (dense on the coarsest level). This is the oracle the full
/// multigrid output is measured against.
pub fn newton_reference_solve(
    h: &Hierarchy,
    level: usize,
    problem: &ProblemSpec,
    tol: f64,
) -> Result<NodalVector> {
    let x0 = vec![0.0; h.space(level).n_free()];
    let inner = if level == 0 {
        InnerSolve::Dense
    } else {
        InnerSolve::Pcg {
            stack: h.stack(),
            level,
        }
    };
    Ok(damped_newton(h, level, problem, x0, tol, 50, inner)?.u)
}

/// The full multigrid scheme over the first `n_active` levels: exact
/// semilinear solve on the coarsest space, then for each finer level embed
/// the previous iterate and apply the configured number of correction
/// steps. Direct Newton solves are used up to the designated coarse level
/// when it is above the coarsest (the augmented space only makes sense
/// strictly above it).
///
/// On failure the record collected so far is returned alongside the
/// error, so a diverging run can be diagnosed level by level.
pub fn full_multigrid_diagnostic(
    h: &Hierarchy,
    problem: &ProblemSpec,
    cfg: &FMGConfig,
    n_active: usize,
) -> (RunRecord, Result<NodalVector>) {
    let mut record = RunRecord {
        levels: Vec::new(),
        solutions: Vec::new(),
    };
    let result = run_levels(h, problem, cfg, n_active, &mut record);
    (record, result)
}

fn run_levels(
    h: &Hierarchy,
    problem: &ProblemSpec,
    cfg: &FMGConfig,
    n_active: usize,
    record: &mut RunRecord,
) -> Result<NodalVector> {
    if n_active == 0 || n_active > h.n_levels() {
        return Err(Error::InvalidArgument(format!(
            "active level count {n_active} out of range (hierarchy has {})",
            h.n_levels()
        )));
    }
    if cfg.corrections_per_level == 0 || cfg.correction.vcycles == 0 {
        return Err(Error::InvalidArgument(
            "corrections per level and V-cycle count must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    let coarse = solve_coarsest(h, problem, cfg.coarsest_tol)?;
    let mut u = coarse.u;
    let mut cumulative = start.elapsed().as_secs_f64();
    record.levels.push(LevelRecord {
        level: 1,
        n_free: h.space(0).n_free(),
        nonlinear_iters: coarse.iterations,
        level_time_s: cumulative,
        cumulative_time_s: cumulative,
        energy_error: None,
        l2_error: None,
    });
    record.solutions.push(u.clone());

    let mut prev_increment: Option<f64> = None;
    for k in 1..n_active {
        let level_start = Instant::now();
        let u0 = h.prolongation_from(k - 1).matvec(&u.values);
        let mut iters = 0;
        let u_new = if k <= h.coarse_index() {
            // below the designated coarse space the augmented correction
            // is not defined; solve directly, warm-started from the
            // embedded iterate
            let inner = if h.space(k).n_free() <= 2000 {
                InnerSolve::Dense
            } else {
                InnerSolve::Pcg {
                    stack: h.stack(),
                    level: k,
                }
            };
            let out = damped_newton(h, k, problem, u0.clone(), cfg.coarsest_tol, 50, inner)?;
            iters = out.iterations;
            out.u
        } else {
            let mut current = NodalVector::from_values(h.space(k), u0.clone());
            for _ in 0..cfg.corrections_per_level {
                let step = one_correction_step(h, k, &current, problem, &cfg.correction)?;
                iters += step.nonlinear_iters;
                current = step.u;
            }
            current
        };
        // ascent sanity: the per-level increment must keep shrinking,
        // otherwise the coarse space is too coarse for contraction
        let increment = h.a_norm(k, &sub(&u_new.values, &u0));
        if !increment.is_finite() {
            return Err(Error::CoarseMeshTooCoarse(format!(
                "non-finite iterate at level {}",
                k + 1
            )));
        }
        if let Some(prev) = prev_increment {
            if increment > 2.0 * prev && increment > 1e-10 {
                return Err(Error::CoarseMeshTooCoarse(format!(
                    "level increment grew from {prev:.3e} to {increment:.3e} at level {}",
                    k + 1
                )));
            }
        }
        prev_increment = Some(increment);
        u = u_new;
        let level_time = level_start.elapsed().as_secs_f64();
        cumulative += level_time;
        record.levels.push(LevelRecord {
            level: k + 1,
            n_free: h.space(k).n_free(),
            nonlinear_iters: iters,
            level_time_s: level_time,
            cumulative_time_s: cumulative,
            energy_error: None,
            l2_error: None,
        });
        record.solutions.push(u.clone());
    }
    Ok(u)
}

/// As [`full_multigrid`] but stopping after `n_active` levels.
pub fn full_multigrid_partial(
    h: &Hierarchy,
    problem: &ProblemSpec,
    cfg: &FMGConfig,
    n_active: usize,
) -> Result<(NodalVector, RunRecord)> {
    let (record, result) = full_multigrid_diagnostic(h, problem, cfg, n_active);
    result.map(|u| (u, record))
}

/// Run the scheme over the whole hierarchy.
pub fn full_multigrid(
    h: &Hierarchy,
    problem: &ProblemSpec,
    cfg: &FMGConfig,
) -> Result<(NodalVector, RunRecord)> {
    full_multigrid_partial(h, problem, cfg, h.n_levels())
}
