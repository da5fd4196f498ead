//! Compressed-row sparse matrices, Gauss-Seidel smoothing, a geometric
//! multigrid V-cycle over a prolongation chain, and a dense Cholesky
//! solver for the coarsest level.

use std::sync::Arc;

use crate::{Error, Result};

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub column_indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Hint that the matrix is numerically symmetric.
    pub symmetric: bool,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed and
    /// columns sorted.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
        symmetric: bool,
    ) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r},{c}) out of range");
            per_row[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut column_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == col {
                    v += row[i].1;
                    i += 1;
                }
                column_indices.push(col);
                values.push(v);
            }
            row_offsets.push(column_indices.len());
        }
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            column_indices,
            values,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            column_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.column_indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.column_indices {
            counts[c] += 1;
        }
        let mut row_offsets = vec![0usize; self.n_cols + 1];
        for c in 0..self.n_cols {
            row_offsets[c + 1] = row_offsets[c] + counts[c];
        }
        let mut column_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = row_offsets.clone();
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let dst = next[*c];
                column_indices[dst] = r;
                values[dst] = *v;
                next[*c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            column_indices,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Sparse-sparse product A * B.
    pub fn multiply(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.n_cols, other.n_rows, "spmm dimension mismatch");
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut column_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        let mut acc: Vec<f64> = vec![0.0; other.n_cols];
        let mut seen = vec![false; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (k, v) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(*k);
                for (c, bv) in bcols.iter().zip(bvals) {
                    if !seen[*c] {
                        seen[*c] = true;
                        touched.push(*c);
                    }
                    acc[*c] += v * bv;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                column_indices.push(c);
                values.push(acc[c]);
                acc[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
            row_offsets.push(column_indices.len());
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            row_offsets,
            column_indices,
            values,
            symmetric: false,
        }
    }

    /// Append one dense column (used for the augmented-space embedding).
    pub fn append_column(&self, column: &[f64]) -> SparseMatrix {
        assert_eq!(column.len(), self.n_rows);
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut column_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            column_indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            if column[r] != 0.0 {
                column_indices.push(self.n_cols);
                values.push(column[r]);
            }
            row_offsets.push(column_indices.len());
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols + 1,
            row_offsets,
            column_indices,
            values,
            symmetric: false,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[(r, *c)] = *v;
            }
        }
        d
    }

    /// Check the symmetry hint on a seeded random sample of stored
    /// entries: |A_ij - A_ji| <= 1e-12 * max(1, |A_ij|).
    pub fn verify_symmetry_sampled(&self, seed: u64, samples: usize) -> bool {
        use rand::{Rng, SeedableRng};
        if self.n_rows != self.n_cols || self.nnz() == 0 {
            return self.n_rows == self.n_cols;
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let k = rng.gen_range(0..self.nnz());
            // row whose span contains entry k (robust to empty rows)
            let r = self.row_offsets.partition_point(|&o| o <= k) - 1;
            let c = self.column_indices[k];
            let a_ij = self.values[k];
            let a_ji = self.get(c, r);
            if (a_ij - a_ji).abs() > 1e-12 * a_ij.abs().max(1.0) {
                return false;
            }
        }
        true
    }
}

/// Row-major dense matrix; only used for coarsest-level and reduced
/// systems, which are small by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.n_cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.n_cols + c]
    }
}

/// Lower-triangular Cholesky factor L with A = L L^T.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factor a symmetric matrix; a pivot below `pivot_tol` times the
    /// largest diagonal entry is reported as a factorization error.
    pub fn factor(a: &DenseMatrix, pivot_tol: f64) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols, "Cholesky needs a square matrix");
        let n = a.n_rows;
        let scale = (0..n)
            .map(|i| a[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[(i, j)];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= pivot_tol * scale {
                        return Err(Error::Factorization { pivot: sum, row: i });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(DenseCholesky { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

/// Factor-and-solve convenience for SPD dense systems.
pub fn cholesky_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(DenseCholesky::factor(a, 0.0)?.solve(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    Forward,
    Backward,
}

/// In-place Gauss-Seidel sweeps. Errors on a zero diagonal entry.
pub fn gauss_seidel(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    sweeps: usize,
    order: SweepOrder,
) -> Result<()> {
    if a.n_rows != a.n_cols || b.len() != a.n_rows || x.len() != a.n_rows {
        return Err(Error::DimensionMismatch(format!(
            "gauss_seidel: matrix {}x{}, b {}, x {}",
            a.n_rows,
            a.n_cols,
            b.len(),
            x.len()
        )));
    }
    for _ in 0..sweeps {
        let rows: Box<dyn Iterator<Item = usize>> = match order {
            SweepOrder::Forward => Box::new(0..a.n_rows),
            SweepOrder::Backward => Box::new((0..a.n_rows).rev()),
        };
        for r in rows {
            let start = a.row_offsets[r];
            let end = a.row_offsets[r + 1];
            let mut sigma = 0.0;
            let mut diag = 0.0;
            for k in start..end {
                let c = a.column_indices[k];
                if c == r {
                    diag = a.values[k];
                } else {
                    sigma += a.values[k] * x[c];
                }
            }
            if diag == 0.0 {
                return Err(Error::SingularSmoother { row: r });
            }
            x[r] = (b[r] - sigma) / diag;
        }
    }
    Ok(())
}

// small vector helpers used throughout the solver

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// sqrt(x^T A x) for symmetric positive definite A.
pub fn energy_norm(a: &SparseMatrix, x: &[f64]) -> f64 {
    dot(x, &a.matvec(x)).max(0.0).sqrt()
}

/// The per-level operators of a geometric multigrid hierarchy: stiffness
/// matrices, prolongations between consecutive levels, and a dense
/// Cholesky factorization of the coarsest operator.
pub struct MGLevelStack {
    a: Vec<Arc<SparseMatrix>>,
    /// `p[k]` maps level k to level k+1 (so it has `levels - 1` entries).
    p: Vec<Arc<SparseMatrix>>,
    coarsest: DenseCholesky,
}

impl MGLevelStack {
    pub fn new(a: Vec<Arc<SparseMatrix>>, p: Vec<Arc<SparseMatrix>>) -> Result<Self> {
        if a.is_empty() || p.len() + 1 != a.len() {
            return Err(Error::DimensionMismatch(format!(
                "stack needs n stiffness matrices and n-1 prolongations, got {} and {}",
                a.len(),
                p.len()
            )));
        }
        for k in 0..p.len() {
            if p[k].n_cols != a[k].n_rows || p[k].n_rows != a[k + 1].n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "prolongation {} is {}x{}, levels are {} and {}",
                    k,
                    p[k].n_rows,
                    p[k].n_cols,
                    a[k + 1].n_rows,
                    a[k].n_rows
                )));
            }
        }
        let coarsest = DenseCholesky::factor(&a[0].to_dense(), 0.0)?;
        Ok(MGLevelStack { a, p, coarsest })
    }

    pub fn n_levels(&self) -> usize {
        self.a.len()
    }

    pub fn matrix(&self, level: usize) -> &SparseMatrix {
        &self.a[level]
    }

    /// Append one level (used by the adaptive loop as the mesh grows).
    pub fn push_level(&mut self, a: Arc<SparseMatrix>, p: Arc<SparseMatrix>) -> Result<()> {
        let top = self.a.last().unwrap();
        if p.n_cols != top.n_rows || p.n_rows != a.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "pushed prolongation is {}x{}, expected {}x{}",
                p.n_rows, p.n_cols, a.n_rows, top.n_rows
            )));
        }
        self.a.push(a);
        self.p.push(p);
        Ok(())
    }
}

/// One V-cycle on the given level: pre-smooth (forward Gauss-Seidel),
/// restrict the residual, recurse (direct solve on level 0), prolong the
/// correction, post-smooth (backward Gauss-Seidel). `x` is updated in
/// place.
pub fn v_cycle(
    stack: &MGLevelStack,
    level: usize,
    b: &[f64],
    x: &mut Vec<f64>,
    pre_sweeps: usize,
    post_sweeps: usize,
) -> Result<()> {
    let a = stack.matrix(level);
    if b.len() != a.n_rows || x.len() != a.n_rows {
        return Err(Error::DimensionMismatch(format!(
            "v_cycle level {level}: matrix {}x{}, b {}, x {}",
            a.n_rows,
            a.n_cols,
            b.len(),
            x.len()
        )));
    }
    if level == 0 {
        *x = stack.coarsest.solve(b);
        return Ok(());
    }
    gauss_seidel(a, b, x, pre_sweeps, SweepOrder::Forward)?;
    let mut residual = b.to_vec();
    let ax = a.matvec(x);
    for (r, v) in residual.iter_mut().zip(&ax) {
        *r -= v;
    }
    let p = &stack.p[level - 1];
    let coarse_residual = p.matvec_transpose(&residual);
    let mut coarse_correction = vec![0.0; coarse_residual.len()];
    v_cycle(
        stack,
        level - 1,
        &coarse_residual,
        &mut coarse_correction,
        pre_sweeps,
        post_sweeps,
    )?;
    let correction = p.matvec(&coarse_correction);
    axpy(1.0, &correction, x);
    gauss_seidel(a, b, x, post_sweeps, SweepOrder::Backward)?;
    Ok(())
}

/// Default smoothing sweeps: symmetric Gauss-Seidel with two pre- and two
/// post-sweeps gives a contraction well below 0.5 for P1 diffusion
/// problems without any tuning.
pub const DEFAULT_SWEEPS: usize = 2;

/// Run `m` V-cycles starting from `x0`; the error contracts by the
/// per-cycle factor raised to the m-th power.
pub fn mg_solve_m_steps(
    stack: &MGLevelStack,
    level: usize,
    b: &[f64],
    x0: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for _ in 0..m {
        v_cycle(stack, level, b, &mut x, DEFAULT_SWEEPS, DEFAULT_SWEEPS)?;
    }
    Ok(x)
}
