//! Built-in benchmark problems: domain, diffusion, nonlinear term, source
//! and (when available) a manufactured exact solution.
//!
//! All nonlinear terms are monotone nondecreasing in `u` and Lipschitz on
//! bounded ranges, which is the only regularity the solver relies on.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::assemble::DiffusionCoefficient;
use crate::{Error, Result};

type ScalarFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
type SourceFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
type GradFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;
type RangeFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// The nonlinear term f(x, u): pointwise evaluation, an optional analytic
/// u-derivative, and a Lipschitz bound over a given u-range.
#[derive(Clone)]
pub struct NonlinearTerm {
    eval: Arc<ScalarFn>,
    derivative: Option<Arc<ScalarFn>>,
    lipschitz: Arc<RangeFn>,
}

impl NonlinearTerm {
    pub fn new<F, D, L>(eval: F, derivative: Option<D>, lipschitz: L) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        L: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        NonlinearTerm {
            eval: Arc::new(eval),
            derivative: derivative.map(|d| Arc::new(d) as Arc<ScalarFn>),
            lipschitz: Arc::new(lipschitz),
        }
    }

    /// f identically zero; turns the equation into a linear problem.
    pub fn zero() -> Self {
        NonlinearTerm::new(|_, _, _| 0.0, Some(|_, _, _| 0.0), |_, _| 0.0)
    }

    pub fn eval(&self, x: f64, y: f64, u: f64) -> f64 {
        (self.eval)(x, y, u)
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn derivative(&self, x: f64, y: f64, u: f64) -> Option<f64> {
        self.derivative.as_ref().map(|d| d(x, y, u))
    }

    /// Analytic derivative when present, otherwise a central difference
    /// with step 1e-6 * (1 + |u|).
    pub fn dfdu(&self, x: f64, y: f64, u: f64) -> f64 {
        match &self.derivative {
            Some(d) => d(x, y, u),
            None => {
                let h = 1e-6 * (1.0 + u.abs());
                ((self.eval)(x, y, u + h) - (self.eval)(x, y, u - h)) / (2.0 * h)
            }
        }
    }

    /// Documented Lipschitz constant of u -> f(x, u) on [lo, hi].
    pub fn lipschitz_hint(&self, lo: f64, hi: f64) -> f64 {
        (self.lipschitz)(lo, hi)
    }

    /// Pointwise monotonicity check on seeded random samples: for all
    /// sampled (x, y, w, v), (f(x,w) - f(x,v)) (w - v) >= 0.
    pub fn monotone_on_samples(&self, lo: f64, hi: f64, samples: usize, seed: u64) -> bool {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let x = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0);
            let w = rng.gen_range(lo..hi);
            let v = rng.gen_range(lo..hi);
            if ((self.eval)(x, y, w) - (self.eval)(x, y, v)) * (w - v) < -1e-14 {
                return false;
            }
        }
        true
    }
}

impl std::fmt::Debug for NonlinearTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearTerm")
            .field("has_derivative", &self.has_derivative())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    LShaped,
}

/// Manufactured exact solution with its gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: Arc<SourceFn>,
    pub grad: Arc<GradFn>,
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExactSolution")
    }
}

/// A complete problem instance: -div(A grad u) + f(x, u) = g with
/// homogeneous Dirichlet boundary values.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub diffusion: DiffusionCoefficient,
    pub nonlinear: NonlinearTerm,
    pub source: Arc<SourceFn>,
    pub exact: Option<ExactSolution>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

fn sign_three_halves(u: f64) -> f64 {
    // odd extension of u^(3/2); keeps the term monotone for negative
    // intermediate iterates
    u.signum() * u.abs().powf(1.5)
}

fn sign_three_halves_derivative(u: f64) -> f64 {
    1.5 * u.abs().sqrt()
}

/// Cubic nonlinearity with a manufactured sine solution on the unit
/// square: f = u^3, u = sin(pi x) sin(pi y).
pub fn example1_2d() -> ProblemSpec {
    let u = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    ProblemSpec {
        name: "example1".into(),
        domain: Domain::UnitSquare,
        diffusion: DiffusionCoefficient::identity(),
        nonlinear: NonlinearTerm::new(
            |_, _, u| u * u * u,
            Some(|_, _, u: f64| 3.0 * u * u),
            |lo: f64, hi: f64| 3.0 * (lo * lo).max(hi * hi),
        ),
        source: Arc::new(move |x, y| {
            let v = u(x, y);
            2.0 * PI * PI * v + v * v * v
        }),
        exact: Some(ExactSolution {
            u: Arc::new(u),
            grad: Arc::new(|x, y| {
                [
                    PI * (PI * x).cos() * (PI * y).sin(),
                    PI * (PI * x).sin() * (PI * y).cos(),
                ]
            }),
        }),
    }
}

/// Exponential nonlinearity f = -exp(-u) with unit source; no closed-form
/// solution, reference values come from a finer-level solve.
pub fn example2_2d() -> ProblemSpec {
    ProblemSpec {
        name: "example2".into(),
        domain: Domain::UnitSquare,
        diffusion: DiffusionCoefficient::identity(),
        nonlinear: NonlinearTerm::new(
            |_, _, u: f64| -(-u).exp(),
            Some(|_, _, u: f64| (-u).exp()),
            // sup of exp(-u) over [lo, hi] sits at the left endpoint
            |lo: f64, _hi: f64| (-lo).exp(),
        ),
        source: Arc::new(|_, _| 1.0),
        exact: None,
    }
}

/// Odd three-halves power nonlinearity (bounded first derivative,
/// unbounded second derivative at zero) with a manufactured double-
/// frequency sine solution.
pub fn example3_2d() -> ProblemSpec {
    let u = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    ProblemSpec {
        name: "example3".into(),
        domain: Domain::UnitSquare,
        diffusion: DiffusionCoefficient::identity(),
        nonlinear: NonlinearTerm::new(
            |_, _, u| sign_three_halves(u),
            Some(|_, _, u: f64| sign_three_halves_derivative(u)),
            |lo: f64, hi: f64| 1.5 * lo.abs().max(hi.abs()).sqrt(),
        ),
        source: Arc::new(move |x, y| {
            let v = u(x, y);
            8.0 * PI * PI * v + sign_three_halves(v)
        }),
        exact: Some(ExactSolution {
            u: Arc::new(u),
            grad: Arc::new(|x, y| {
                [
                    2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin(),
                    2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
                ]
            }),
        }),
    }
}

/// Three-halves power nonlinearity on the L-shaped domain with unit
/// source; the reentrant corner induces a singular solution, so this is
/// the adaptive-refinement benchmark. The term is sign-extended to
/// negative arguments (the true solution is nonnegative, so the extension
/// does not change it).
pub fn example4_2d() -> ProblemSpec {
    ProblemSpec {
        name: "example4".into(),
        domain: Domain::LShaped,
        diffusion: DiffusionCoefficient::identity(),
        nonlinear: NonlinearTerm::new(
            |_, _, u| sign_three_halves(u),
            Some(|_, _, u: f64| sign_three_halves_derivative(u)),
            |lo: f64, hi: f64| 1.5 * lo.abs().max(hi.abs()).sqrt(),
        ),
        source: Arc::new(|_, _| 1.0),
        exact: None,
    }
}

/// Look up a built-in problem by its CLI name.
pub fn problem_by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "example1" => Ok(example1_2d()),
        "example2" => Ok(example2_2d()),
        "example3" => Ok(example3_2d()),
        "example4" => Ok(example4_2d()),
        other => Err(Error::InvalidArgument(format!(
            "unknown problem '{other}' (expected example1..example4)"
        ))),
    }
}
