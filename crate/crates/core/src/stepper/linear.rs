//! Sparse assembly buffer and the linear solvers behind the time steppers.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::solvers::Solve;
use faer::matrix_free::{IdentityPrecond, LinOp, Precond};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Par;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolver {
    /// Sparse LU.
    #[default]
    Direct,
    /// Block-Jacobi preconditioned BiCGSTAB to a relative residual tolerance.
    Iterative { tol: f64, max_iters: usize },
}

/// Square sparse matrix in coordinate form; duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem { n, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push(Triplet::new(row, col, value));
    }

    /// Drops every entry of `row`.
    pub fn clear_row(&mut self, row: usize) {
        self.entries.retain(|t| t.row != row);
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for t in &self.entries {
            a[t.row][t.col] += t.val;
        }
        a
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    fn matrix(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::Solver(format!("cannot build sparse matrix: {e:?}")))
    }

    pub fn solve(&self, rhs: &[f64], solver: LinearSolver) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let a = self.matrix()?;
        let x = match solver {
            LinearSolver::Direct => {
                // the numeric factorization panics on an exactly zero pivot
                let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| a.sp_lu()))
                    .map_err(|_| Error::Solver("sparse LU hit an exactly zero pivot; the matrix is singular".into()))?
                    .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
                let mut b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
                lu.solve_in_place(b.as_mat_mut());
                (0..self.n).map(|i| b[i]).collect::<Vec<f64>>()
            }
            LinearSolver::Iterative { tol, max_iters } => bicgstab(&a, rhs, tol, max_iters)?,
        };
        self.check_solution(&x, rhs)?;
        Ok(x)
    }

    fn check_solution(&self, x: &[f64], rhs: &[f64]) -> Result<()> {
        let ax = self.apply(x);
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let res: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let (r, b) = (norm(&res), norm(rhs));
        let scale = b.max(norm(&ax)).max(f64::MIN_POSITIVE);
        if !x.iter().all(|v| v.is_finite()) || r > 1e-6 * scale {
            let max_diag = (0..self.n)
                .map(|i| self.entries.iter().filter(|t| t.row == i && t.col == i).map(|t| t.val).sum::<f64>().abs())
                .fold(0.0, f64::max);
            return Err(Error::Solver(format!(
                "linear solve failed: residual {r:.3e} against right-hand side {b:.3e} (largest diagonal entry {max_diag:.3e}); the matrix is singular or severely ill-conditioned"
            )));
        }
        Ok(())
    }
}

/// Inverses of the 2x2 diagonal blocks `(2k, 2k+1)`; an odd trailing row or a
/// singular block falls back to the scalar diagonal.
#[derive(Debug)]
struct BlockJacobi {
    n: usize,
    blocks: Vec<[f64; 4]>,
}

impl BlockJacobi {
    fn new(a: &SparseColMat<usize, f64>) -> Self {
        let n = a.nrows();
        let mut raw = vec![[0.0; 4]; n.div_ceil(2)];
        let sym = a.symbolic();
        for j in 0..n {
            for (idx, &i) in sym.row_idx_of_col_raw(j).iter().enumerate() {
                if i / 2 == j / 2 {
                    raw[i / 2][2 * (i % 2) + j % 2] += a.val_of_col(j)[idx];
                }
            }
        }
        let inv = |d: f64| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 };
        let blocks = raw
            .iter()
            .enumerate()
            .map(|(k, &[a00, a01, a10, a11])| {
                let det = a00 * a11 - a01 * a10;
                let full = 2 * k + 1 < n;
                if full && det.abs() > 1e-12 * (a00 * a11).abs().max((a01 * a10).abs()).max(f64::MIN_POSITIVE) {
                    [a11 / det, -a01 / det, -a10 / det, a00 / det]
                } else {
                    [inv(a00), 0.0, 0.0, inv(a11)]
                }
            })
            .collect();
        BlockJacobi { n, blocks }
    }
}

impl LinOp<f64> for BlockJacobi {
    fn apply_scratch(&self, _rhs_ncols: usize, _par: Par) -> StackReq {
        StackReq::EMPTY
    }

    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply(&self, mut out: MatMut<'_, f64>, rhs: MatRef<'_, f64>, _par: Par, _stack: &mut MemStack) {
        for c in 0..rhs.ncols() {
            for (k, b) in self.blocks.iter().enumerate() {
                let i = 2 * k;
                if i + 1 < self.n {
                    let (x, y) = (rhs[(i, c)], rhs[(i + 1, c)]);
                    out[(i, c)] = b[0] * x + b[1] * y;
                    out[(i + 1, c)] = b[2] * x + b[3] * y;
                } else {
                    out[(i, c)] = b[0] * rhs[(i, c)];
                }
            }
        }
    }

    fn conj_apply(&self, out: MatMut<'_, f64>, rhs: MatRef<'_, f64>, par: Par, stack: &mut MemStack) {
        self.apply(out, rhs, par, stack);
    }
}

impl Precond<f64> for BlockJacobi {}

fn bicgstab(a: &SparseColMat<usize, f64>, rhs: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    use faer::matrix_free::bicgstab::{bicgstab, bicgstab_scratch, BicgParams};
    let n = rhs.len();
    let precond = BlockJacobi::new(a);
    let identity = IdentityPrecond { dim: n };
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let mut x = Mat::<f64>::zeros(n, 1);
    let params = BicgParams { rel_tolerance: tol, max_iters, ..Default::default() };
    let mut buf = MemBuffer::new(bicgstab_scratch(&precond, identity, a, 1, Par::Seq));
    let result =
        bicgstab(x.as_mut(), &precond, identity, a, b.as_ref(), params, |_| {}, Par::Seq, MemStack::new(&mut buf));
    match result {
        Ok(_) => Ok((0..n).map(|i| x[(i, 0)]).collect()),
        Err(_) => Err(Error::Solver(format!(
            "BiCGSTAB did not reach relative residual {tol:e} within {max_iters} iterations"
        ))),
    }
}
