//! Full multigrid finite element solver for semilinear elliptic equations
//!
//! Solves boundary value problems of the form
//!
//! ```text
//!   -div(A grad u) + f(x, u) = g   in Omega,
//!                          u = 0   on the boundary,
//! ```
//!
//! with P1 elements on conforming triangulations. Instead of running a
//! Newton iteration on the finest mesh, the solver ascends a hierarchy of
//! nested spaces: on each level it applies a few multigrid V-cycles to a
//! linearized problem and then solves a tiny semilinear system on the
//! coarse space augmented by the current fine-level iterate. The nonlinear
//! work per level is therefore independent of the fine-level dimension,
//! and only Lipschitz continuity of `f` in `u` is required.
//!
//! Modules:
//! - [`mesh`]: conforming triangulations, uniform (red) and adaptive
//!   (newest-vertex bisection) refinement with genealogy.
//! - [`fespace`]: P1 spaces, Dirichlet dof elimination, prolongations.
//! - [`sparse`]: CSR matrices, Gauss-Seidel, geometric V-cycle, dense
//!   Cholesky for the coarsest level.
//! - [`assemble`]: stiffness/mass/load/nonlinear-residual assembly and
//!   error norms against manufactured solutions.
//! - [`problems`]: the built-in benchmark problems.
//! - [`correction`]: one correction step (linearized multigrid solve plus
//!   the augmented-space semilinear solve).
//! - [`fmg`]: the full multigrid driver and the Newton reference solver.
//! - [`estimator`]: residual a posteriori estimator, Doerfler marking and
//!   the adaptive loop.
//! - [`bench`]: benchmark configuration, CSV output, CLI entry points.

use std::fmt;
use std::path::PathBuf;

pub mod assemble;
pub mod bench;
pub mod correction;
pub mod estimator;
pub mod fespace;
pub mod fmg;
pub mod mesh;
pub mod problems;
pub mod sparse;

/// Crate-wide error type. Variants map onto the machine-readable
/// categories reported by the CLI (see [`Error::category`]).
#[derive(Debug)]
pub enum Error {
    /// Invalid argument or configuration value.
    InvalidArgument(String),
    /// Mesh construction or refinement failure (e.g. closure guard).
    Mesh(String),
    /// Refinement genealogy required but absent (initial mesh).
    MissingGenealogy(String),
    /// Dimension mismatch between operators and vectors.
    DimensionMismatch(String),
    /// Zero diagonal entry encountered by a smoother.
    SingularSmoother { row: usize },
    /// Dense Cholesky factorization hit a non-positive pivot.
    Factorization { pivot: f64, row: usize },
    /// Nonlinear term evaluation produced a non-finite value.
    Evaluation { x: f64, y: f64, u: f64 },
    /// Nonlinear iteration failed to reach its tolerance.
    NonConvergence { iterations: usize, residual: f64 },
    /// Augmented coarse space is (numerically) linearly dependent.
    DegenerateSpace(String),
    /// Divergence across levels: the coarsest mesh does not contract.
    CoarseMeshTooCoarse(String),
    /// I/O failure with path context.
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category slug, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "config",
            Error::Mesh(_) => "mesh",
            Error::MissingGenealogy(_) => "genealogy",
            Error::DimensionMismatch(_) => "dimension",
            Error::SingularSmoother { .. } => "singular-smoother",
            Error::Factorization { .. } => "factorization",
            Error::Evaluation { .. } => "evaluation",
            Error::NonConvergence { .. } => "non-convergence",
            Error::DegenerateSpace(_) => "degenerate-space",
            Error::CoarseMeshTooCoarse(_) => "coarse-mesh-too-coarse",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code used by the CLI for this category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Mesh(msg) => write!(f, "mesh error: {msg}"),
            Error::MissingGenealogy(msg) => write!(f, "missing refinement genealogy: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::SingularSmoother { row } => {
                write!(f, "zero diagonal entry in row {row}; smoother is singular")
            }
            Error::Factorization { pivot, row } => {
                write!(f, "Cholesky pivot {pivot:.3e} at row {row} is not positive")
            }
            Error::Evaluation { x, y, u } => {
                write!(f, "nonlinear term not finite at ({x}, {y}) with u = {u}")
            }
            Error::NonConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "nonlinear solve did not converge after {iterations} iterations \
                 (last residual {residual:.3e})"
            ),
            Error::DegenerateSpace(msg) => write!(f, "degenerate augmented space: {msg}"),
            Error::CoarseMeshTooCoarse(msg) => write!(f, "coarse mesh too coarse: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
