//! Benchmark harness: validated run configuration, the uniform and
//! adaptive experiment drivers, and CSV emission with pinned formatting.
//!
//! CSV rules: UTF-8, comma separators, one header line, `\n` line
//! endings, a trailing newline. General floating-point columns print 17
//! significant digits (`{:.16e}`), which round-trips `f64` exactly; time
//! columns report wall-clock seconds at millisecond resolution and are
//! the only columns allowed to differ between two identical runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::assemble::{assemble_mass, error_norms, QuadratureRule};
use crate::correction::CorrectionConfig;
use crate::estimator::adaptive_fmg;
use crate::fmg::{
    base_mesh_for, build_hierarchy_with, full_multigrid_partial, newton_reference_solve, FMGConfig,
};
use crate::problems::problem_by_name;
use crate::sparse::{dot, sub};
use crate::{Error, Result};

/// Validated configuration of one benchmark invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub problem: String,
    pub levels: usize,
    /// Cells per unit side of the base mesh.
    pub base: usize,
    /// V-cycles per correction step.
    pub m: usize,
    /// Correction steps per level.
    pub p: usize,
    /// 1-based level designated as the correction space.
    pub coarse_index: usize,
    pub adaptive: bool,
    pub theta_mark: f64,
    pub iterations: usize,
    pub out: Option<PathBuf>,
    /// Directory for per-iteration mesh dumps of adaptive runs.
    pub dump_meshes: Option<PathBuf>,
    /// Seed consumed by the randomized sanity checks.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            problem: "example1".into(),
            levels: 5,
            base: 4,
            m: 2,
            p: 1,
            coarse_index: 1,
            adaptive: false,
            theta_mark: 0.5,
            iterations: 15,
            out: None,
            dump_meshes: None,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=10).contains(&self.levels) {
            return Err(Error::InvalidArgument(format!(
                "levels must lie in [2, 10], got {}",
                self.levels
            )));
        }
        if !(1..=10).contains(&self.m) {
            return Err(Error::InvalidArgument(format!(
                "m must lie in [1, 10], got {}",
                self.m
            )));
        }
        if !(1..=5).contains(&self.p) {
            return Err(Error::InvalidArgument(format!(
                "p must lie in [1, 5], got {}",
                self.p
            )));
        }
        if !(self.theta_mark > 0.0 && self.theta_mark < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta-mark must lie in (0, 1), got {}",
                self.theta_mark
            )));
        }
        if self.coarse_index < 1 || self.coarse_index > self.levels {
            return Err(Error::InvalidArgument(format!(
                "coarse-index must lie in [1, levels], got {}",
                self.coarse_index
            )));
        }
        if self.base < 2 {
            return Err(Error::InvalidArgument(format!(
                "base must be at least 2, got {}",
                self.base
            )));
        }
        Ok(())
    }

    /// Apply `key = value` lines from a config file. Keys match the CLI
    /// flag names (hyphens and underscores are interchangeable); `#`
    /// starts a comment.
    pub fn apply_kv_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidArgument(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            let bad = |what: &str| {
                Error::InvalidArgument(format!(
                    "{}:{}: invalid {what} value '{value}'",
                    path.display(),
                    lineno + 1
                ))
            };
            match key.as_str() {
                "problem" => self.problem = value.to_string(),
                "levels" => self.levels = value.parse().map_err(|_| bad("levels"))?,
                "base" => self.base = value.parse().map_err(|_| bad("base"))?,
                "m" => self.m = value.parse().map_err(|_| bad("m"))?,
                "p" => self.p = value.parse().map_err(|_| bad("p"))?,
                "coarse_index" => {
                    self.coarse_index = value.parse().map_err(|_| bad("coarse-index"))?
                }
                "adaptive" => self.adaptive = value.parse().map_err(|_| bad("adaptive"))?,
                "theta_mark" => self.theta_mark = value.parse().map_err(|_| bad("theta-mark"))?,
                "iters" | "iterations" => {
                    self.iterations = value.parse().map_err(|_| bad("iters"))?
                }
                "out" => self.out = Some(PathBuf::from(value)),
                "dump_meshes" => self.dump_meshes = Some(PathBuf::from(value)),
                "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "{}:{}: unknown key '{other}'",
                        path.display(),
                        lineno + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One CSV cell. Times carry their own variant so emission can apply the
/// millisecond formatting rule.
#[derive(Clone, Debug, PartialEq)]
pub enum CsvValue {
    Count(usize),
    Float(f64),
    Time(f64),
}

impl CsvValue {
    fn format(&self) -> String {
        match self {
            CsvValue::Count(n) => n.to_string(),
            CsvValue::Float(v) => format!("{v:.16e}"),
            CsvValue::Time(v) => format!("{v:.3}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<CsvValue>>,
}

impl CsvTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(CsvValue::format).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Write a table to disk; I/O failures carry the path.
pub fn emit_csv(table: &CsvTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv_string()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn fmg_config(cfg: &BenchConfig) -> FMGConfig {
    FMGConfig {
        corrections_per_level: cfg.p,
        coarsest_tol: 1e-12,
        correction: CorrectionConfig {
            vcycles: cfg.m,
            ..CorrectionConfig::default()
        },
    }
}

/// Uniform-refinement convergence run: one row per level with dof count,
/// errors against the exact solution (or a one-level-finer Newton oracle
/// when none exists), timings and nonlinear iteration counts.
pub fn run_uniform(cfg: &BenchConfig) -> Result<CsvTable> {
    cfg.validate()?;
    let problem = problem_by_name(&cfg.problem)?;
    if !problem
        .nonlinear
        .monotone_on_samples(-5.0, 5.0, 64, cfg.seed)
    {
        return Err(Error::InvalidArgument(format!(
            "nonlinear term of {} failed the monotonicity sampling check",
            problem.name
        )));
    }
    let needs_oracle = problem.exact.is_none();
    let total_levels = cfg.levels + usize::from(needs_oracle);
    let hierarchy = build_hierarchy_with(&problem, total_levels, cfg.base, cfg.coarse_index - 1)?;
    for level in 0..total_levels {
        if !hierarchy
            .matrix(level)
            .verify_symmetry_sampled(cfg.seed, 32)
        {
            return Err(Error::Mesh(format!(
                "assembled stiffness on level {} failed the symmetry sampling check",
                level + 1
            )));
        }
    }
    let (_, mut record) =
        full_multigrid_partial(&hierarchy, &problem, &fmg_config(cfg), cfg.levels)?;

    match &problem.exact {
        Some(exact) => {
            let quad = QuadratureRule::degree6();
            for (k, solution) in record.solutions.iter().enumerate() {
                let (energy, l2) = error_norms(
                    hierarchy.space(k),
                    solution,
                    |x, y| (exact.u)(x, y),
                    |x, y| (exact.grad)(x, y),
                    &problem.diffusion,
                    &quad,
                );
                record.levels[k].energy_error = Some(energy);
                record.levels[k].l2_error = Some(l2);
            }
        }
        None => {
            let oracle_level = total_levels - 1;
            let oracle = newton_reference_solve(&hierarchy, oracle_level, &problem, 1e-11)?;
            let mass = assemble_mass(hierarchy.space(oracle_level), hierarchy.quadrature());
            for (k, solution) in record.solutions.iter().enumerate() {
                let embedded = hierarchy.prolong_between(k, oracle_level, &solution.values);
                let diff = sub(&embedded, &oracle.values);
                record.levels[k].energy_error = Some(hierarchy.a_norm(oracle_level, &diff));
                record.levels[k].l2_error = Some(dot(&diff, &mass.matvec(&diff)).max(0.0).sqrt());
            }
        }
    }

    let header = [
        "level",
        "N_k",
        "energy_error",
        "l2_error",
        "level_time_s",
        "cumulative_time_s",
        "nonlinear_iters",
    ]
    .map(String::from)
    .to_vec();
    let rows = record
        .levels
        .iter()
        .map(|lvl| {
            vec![
                CsvValue::Count(lvl.level),
                CsvValue::Count(lvl.n_free),
                CsvValue::Float(lvl.energy_error.unwrap_or(f64::NAN)),
                CsvValue::Float(lvl.l2_error.unwrap_or(f64::NAN)),
                CsvValue::Time(lvl.level_time_s),
                CsvValue::Time(lvl.cumulative_time_s),
                CsvValue::Count(lvl.nonlinear_iters),
            ]
        })
        .collect();
    Ok(CsvTable { header, rows })
}

/// Adaptive run: one row per iteration with the dof count, the estimator
/// total and the cumulative solve time.
pub fn run_adaptive(cfg: &BenchConfig) -> Result<CsvTable> {
    cfg.validate()?;
    let problem = problem_by_name(&cfg.problem)?;
    if !problem
        .nonlinear
        .monotone_on_samples(-5.0, 5.0, 64, cfg.seed)
    {
        return Err(Error::InvalidArgument(format!(
            "nonlinear term of {} failed the monotonicity sampling check",
            problem.name
        )));
    }
    let base = base_mesh_for(&problem, cfg.base)?;
    let run = adaptive_fmg(
        &problem,
        base,
        cfg.iterations,
        cfg.theta_mark,
        &fmg_config(cfg),
    )?;
    if let Some(dir) = &cfg.dump_meshes {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        for level in 0..run.hierarchy.n_levels() {
            let path = dir.join(format!("mesh_{:02}.txt", level + 1));
            std::fs::write(&path, run.hierarchy.space(level).mesh.to_text())
                .map_err(|source| Error::Io { path, source })?;
        }
    }
    let header = ["iter", "N", "eta_total", "time_s"]
        .map(String::from)
        .to_vec();
    let rows = run
        .records
        .iter()
        .map(|r| {
            vec![
                CsvValue::Count(r.iter),
                CsvValue::Count(r.n_free),
                CsvValue::Float(r.eta_total),
                CsvValue::Time(r.time_s),
            ]
        })
        .collect();
    Ok(CsvTable { header, rows })
}
