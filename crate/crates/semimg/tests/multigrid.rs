//! Multigrid quality and nesting identities on the Poisson model problem:
//! V-cycle contraction measured against direct solves, linearity of the
//! cycle, the Galerkin identity between re-assembled and projected coarse
//! operators, and the energy-norm equality of embedded functions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semimg::assemble::{assemble_stiffness, DiffusionCoefficient};
use semimg::fespace::{build_fespace, prolongation, FESpace};
use semimg::mesh::{uniform_refine, unit_square_mesh, Mesh};
use semimg::sparse::{
    cholesky_solve, energy_norm, mg_solve_m_steps, sub, v_cycle, MGLevelStack, SparseMatrix,
};

struct PoissonChain {
    spaces: Vec<Arc<FESpace>>,
    matrices: Vec<Arc<SparseMatrix>>,
    prolongations: Vec<Arc<SparseMatrix>>,
}

fn poisson_chain(levels: usize, base: usize) -> PoissonChain {
    let a = DiffusionCoefficient::identity();
    let mut meshes: Vec<Mesh> = vec![unit_square_mesh(base).unwrap()];
    for _ in 1..levels {
        meshes.push(uniform_refine(meshes.last().unwrap()));
    }
    let spaces: Vec<Arc<FESpace>> = meshes
        .into_iter()
        .map(|m| Arc::new(build_fespace(&Arc::new(m))))
        .collect();
    let matrices: Vec<Arc<SparseMatrix>> = spaces
        .iter()
        .map(|s| Arc::new(assemble_stiffness(s, &a).unwrap()))
        .collect();
    let prolongations: Vec<Arc<SparseMatrix>> = spaces
        .windows(2)
        .map(|w| Arc::new(prolongation(&w[0], &w[1]).unwrap()))
        .collect();
    PoissonChain {
        spaces,
        matrices,
        prolongations,
    }
}

fn stack_of(chain: &PoissonChain) -> MGLevelStack {
    MGLevelStack::new(chain.matrices.clone(), chain.prolongations.clone()).unwrap()
}

/// Asymptotic per-cycle a-norm contraction on the given level, measured
/// by iterating the error propagation from a seeded random start.
fn measured_contraction(stack: &MGLevelStack, a: &SparseMatrix, level: usize, seed: u64) -> f64 {
    let n = a.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = a.matvec(&x_star);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut err = energy_norm(a, &sub(&x, &x_star));
    let mut worst: f64 = 0.0;
    for cycle in 0..8 {
        v_cycle(stack, level, &b, &mut x, 2, 2).unwrap();
        let next = energy_norm(a, &sub(&x, &x_star));
        if cycle >= 2 && err > 1e-13 {
            worst = worst.max(next / err);
        }
        err = next;
    }
    worst
}

#[test]
fn v_cycle_fixed_point_on_fine_level() {
    let chain = poisson_chain(4, 2);
    let stack = stack_of(&chain);
    let a = &chain.matrices[3];
    let n = a.n_rows;
    let x_star: Vec<f64> = (0..n).map(|i| ((i * 13) % 17) as f64 / 17.0).collect();
    let b = a.matvec(&x_star);
    let mut x = x_star.clone();
    v_cycle(&stack, 3, &b, &mut x, 2, 2).unwrap();
    let drift = energy_norm(a, &sub(&x, &x_star));
    assert!(drift < 1e-12, "fixed-point drift {drift}");
}

#[test]
fn v_cycle_contracts_below_half_on_poisson() {
    let chain = poisson_chain(4, 2);
    let stack = stack_of(&chain);
    // direct-solve oracle against one cycle from zero
    let a = &chain.matrices[3];
    let n = a.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let exact = cholesky_solve(&a.to_dense(), &b).unwrap();
    let before = energy_norm(a, &exact);
    let mut x = vec![0.0; n];
    v_cycle(&stack, 3, &b, &mut x, 2, 2).unwrap();
    let after = energy_norm(a, &sub(&x, &exact));
    assert!(after <= 0.5 * before, "one-cycle ratio {}", after / before);
    // asymptotic contraction stays below one half as well
    let rho = measured_contraction(&stack, a, 3, 11);
    assert!(rho <= 0.5, "asymptotic contraction {rho}");
}

#[test]
fn v_cycle_contraction_does_not_grow_with_levels() {
    // h-independence: measured contraction on 3 through 6 levels
    let mut rhos = Vec::new();
    for levels in 3..=6 {
        let chain = poisson_chain(levels, 2);
        let stack = stack_of(&chain);
        let top = levels - 1;
        rhos.push(measured_contraction(&stack, &chain.matrices[top], top, 7));
    }
    for rho in &rhos {
        assert!(*rho <= 0.5, "contraction {rho} exceeds 0.5 in {rhos:?}");
    }
    // the factor saturates at an h-independent plateau instead of
    // drifting toward 1
    let last = rhos[rhos.len() - 1];
    let prev = rhos[rhos.len() - 2];
    assert!((last - prev).abs() <= 0.05, "no plateau: {rhos:?}");
}

#[test]
fn v_cycle_is_linear_in_rhs_and_iterate() {
    let chain = poisson_chain(3, 2);
    let stack = stack_of(&chain);
    let a = &chain.matrices[2];
    let n = a.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let alpha = -2.75;
    let mut x = x0.clone();
    v_cycle(&stack, 2, &b, &mut x, 2, 2).unwrap();
    let scaled_b: Vec<f64> = b.iter().map(|v| alpha * v).collect();
    let mut scaled_x: Vec<f64> = x0.iter().map(|v| alpha * v).collect();
    v_cycle(&stack, 2, &scaled_b, &mut scaled_x, 2, 2).unwrap();
    for (lhs, rhs) in scaled_x.iter().zip(&x) {
        assert!((lhs - alpha * rhs).abs() < 1e-12);
    }
}

#[test]
fn m_cycles_compose_the_contraction() {
    let chain = poisson_chain(4, 2);
    let stack = stack_of(&chain);
    let a = &chain.matrices[3];
    let n = a.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let exact = cholesky_solve(&a.to_dense(), &b).unwrap();
    let x0 = vec![0.0; n];
    let x = mg_solve_m_steps(&stack, 3, &b, &x0, 2).unwrap();
    let before = energy_norm(a, &sub(&x0, &exact));
    let after = energy_norm(a, &sub(&x, &exact));
    assert!(after <= 0.25 * before, "two-cycle ratio {}", after / before);
}

#[test]
fn galerkin_coarse_operator_matches_reassembly() {
    // re-assembled coarse stiffness equals P^T A_fine P entrywise
    let chain = poisson_chain(3, 2);
    for k in 0..2 {
        let p = &chain.prolongations[k];
        let projected = p.transpose().multiply(&chain.matrices[k + 1].multiply(p));
        let reassembled = &chain.matrices[k];
        assert_eq!(projected.n_rows, reassembled.n_rows);
        for r in 0..projected.n_rows {
            for c in 0..projected.n_cols {
                let diff = (projected.get(r, c) - reassembled.get(r, c)).abs();
                assert!(diff < 1e-10, "level {k} entry ({r},{c}) differs by {diff}");
            }
        }
    }
}

#[test]
fn embedded_functions_keep_their_energy_norm() {
    let chain = poisson_chain(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..2 {
        let n = chain.spaces[k].n_free();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fine = chain.prolongations[k].matvec(&c);
        let coarse_norm = energy_norm(&chain.matrices[k], &c);
        let fine_norm = energy_norm(&chain.matrices[k + 1], &fine);
        assert!(
            (coarse_norm - fine_norm).abs() < 1e-12 * (1.0 + coarse_norm),
            "level {k}: {coarse_norm} vs {fine_norm}"
        );
    }
}
