//! Residual a posteriori error estimation, Doerfler marking, and the
//! adaptive loop that couples both with the multigrid correction steps.
//!
//! The per-cell indicator is
//!
//! ```text
//!   eta^2(K) = h_K^2 ||g - f(x, u_h)||_{0,K}^2
//!            + sum over interior edges e of K of h_e ||[A grad u_h] . n||_{0,e}^2
//! ```
//!
//! For P1 elements with constant diffusion the second-order term of the
//! element residual vanishes cell by cell, so it is omitted. Gradient
//! jumps are constant along each straight edge, which makes the edge
//! integrals exact.

use std::time::Instant;

use crate::assemble::QuadratureRule;
use crate::assemble::{cell_geometry, physical_point};
use crate::correction::one_correction_step;
use crate::fespace::NodalVector;
use crate::fmg::{solve_coarsest, FMGConfig, Hierarchy};
use crate::mesh::{bisect_refine, Mesh};
use crate::problems::ProblemSpec;
use crate::{Error, Result};

/// Per-cell squared error indicators and their square-rooted total.
#[derive(Clone, Debug)]
pub struct ErrorIndicators {
    pub eta2: Vec<f64>,
    pub total: f64,
}

/// Evaluate the residual indicator for every cell.
pub fn compute_indicators(
    u: &NodalVector,
    problem: &ProblemSpec,
    quad: &QuadratureRule,
) -> ErrorIndicators {
    let space = &u.space;
    let mesh = &space.mesh;
    let vals = space.vertex_values(&u.values);
    let n_cells = mesh.n_cells();
    let mut eta2 = vec![0.0; n_cells];

    // element residual, with the divergence term dropped (constant flux)
    let mut flux = vec![[0.0; 2]; n_cells];
    for cell in 0..n_cells {
        let geo = cell_geometry(mesh, cell).expect("valid mesh");
        let mut grad = [0.0, 0.0];
        for i in 0..3 {
            grad[0] += vals[geo.vertices[i]] * geo.grads[i][0];
            grad[1] += vals[geo.vertices[i]] * geo.grads[i][1];
        }
        flux[cell] = problem.diffusion.apply(grad);
        let h_k = mesh.cell_diameter(cell);
        let mut volume = 0.0;
        for (pt, w) in quad.points.iter().zip(&quad.weights) {
            let x = physical_point(&geo, *pt);
            let uq = pt[0] * vals[geo.vertices[0]]
                + pt[1] * vals[geo.vertices[1]]
                + pt[2] * vals[geo.vertices[2]];
            let r = (problem.source)(x[0], x[1]) - problem.nonlinear.eval(x[0], x[1], uq);
            volume += w * geo.area * r * r;
        }
        eta2[cell] += h_k * h_k * volume;
    }

    // jump residuals: each interior edge contributes to both incident cells
    let topo = mesh.edge_topology();
    for edge in &topo.edges {
        let (Some(kp), Some(km)) = (edge.cells[0], edge.cells[1]) else {
            continue;
        };
        let a = mesh.vertices[edge.v.0];
        let b = mesh.vertices[edge.v.1];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let h_e = (dx * dx + dy * dy).sqrt();
        let normal = [dy / h_e, -dx / h_e];
        let jump =
            (flux[kp][0] - flux[km][0]) * normal[0] + (flux[kp][1] - flux[km][1]) * normal[1];
        let contribution = h_e * h_e * jump * jump;
        eta2[kp] += contribution;
        eta2[km] += contribution;
    }

    let total = eta2.iter().sum::<f64>().max(0.0).sqrt();
    ErrorIndicators { eta2, total }
}

/// Doerfler marking with the squared-sum convention: the smallest set of
/// cells (sorted by descending indicator, ties by ascending id) whose
/// squared indicators sum to at least `fraction^2` times the total.
pub fn dorfler_mark(indicators: &ErrorIndicators, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "marking fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let total_sq: f64 = indicators.eta2.iter().sum();
    if total_sq <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = fraction * fraction * total_sq;
    let mut order: Vec<usize> = (0..indicators.eta2.len()).collect();
    order.sort_by(|&a, &b| {
        indicators.eta2[b]
            .partial_cmp(&indicators.eta2[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut marked = Vec::new();
    let mut acc = 0.0;
    for cell in order {
        if acc >= threshold {
            break;
        }
        acc += indicators.eta2[cell];
        marked.push(cell);
    }
    marked.sort_unstable();
    Ok(marked)
}

/// One row of an adaptive run: the mesh solved in that iteration and its
/// estimator total. Times are cumulative seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveRecord {
    pub iter: usize,
    pub n_free: usize,
    pub eta_total: f64,
    pub time_s: f64,
}

/// Outcome of the adaptive loop: per-iteration records, the solution
/// chain, and the final hierarchy (whose last mesh is the one produced by
/// the final refinement).
pub struct AdaptiveRun {
    pub records: Vec<AdaptiveRecord>,
    pub solutions: Vec<NodalVector>,
    pub hierarchy: Hierarchy,
}

/// Adaptive full multigrid: per iteration, solve on the current finest
/// mesh (full Newton on the base mesh, prolongation plus correction steps
/// above it), estimate, mark, and bisect. The hierarchy grows by one
/// level per iteration, staying nested, so the same correction machinery
/// drives both the uniform and the adaptive runs. If the marker returns
/// no cells (estimator identically zero) the loop stops early.
pub fn adaptive_fmg(
    problem: &ProblemSpec,
    base_mesh: Mesh,
    iterations: usize,
    theta_mark: f64,
    cfg: &FMGConfig,
) -> Result<AdaptiveRun> {
    if !(theta_mark > 0.0 && theta_mark < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "marking fraction must lie in (0, 1), got {theta_mark}"
        )));
    }
    let start = Instant::now();
    let mut hierarchy = Hierarchy::from_base_mesh(problem, base_mesh)?;
    let mut records = Vec::new();
    let mut solutions: Vec<NodalVector> = Vec::new();
    let quad = QuadratureRule::degree4();

    for iter in 1..=iterations {
        let level = hierarchy.n_levels() - 1;
        let u = if level == 0 {
            solve_coarsest(&hierarchy, problem, cfg.coarsest_tol)?.u
        } else {
            let prev = solutions.last().expect("previous iterate");
            let mut current = NodalVector::from_values(
                hierarchy.space(level),
                hierarchy.prolongation_from(level - 1).matvec(&prev.values),
            );
            for _ in 0..cfg.corrections_per_level {
                current =
                    one_correction_step(&hierarchy, level, &current, problem, &cfg.correction)?.u;
            }
            current
        };
        let indicators = compute_indicators(&u, problem, &quad);
        records.push(AdaptiveRecord {
            iter,
            n_free: hierarchy.space(level).n_free(),
            eta_total: indicators.total,
            time_s: start.elapsed().as_secs_f64(),
        });
        solutions.push(u);
        let marked = dorfler_mark(&indicators, theta_mark)?;
        if marked.is_empty() {
            break;
        }
        let refined = bisect_refine(&hierarchy.space(level).mesh, &marked)?;
        hierarchy.extend_with_mesh(problem, refined)?;
    }
    Ok(AdaptiveRun {
        records,
        solutions,
        hierarchy,
    })
}
