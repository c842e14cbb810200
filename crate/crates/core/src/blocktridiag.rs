//! Symmetric block-tridiagonal systems.
//!
//! `T` has diagonal blocks `F_0..F_N` and subdiagonal blocks `G_0..G_{N-1}`
//! where `G_t` sits at block position `(t+1, t)` (so `G_t^T` is at `(t, t+1)`).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::linalg::{self, CovarianceFactors};
use crate::statespace::StackedSystem;

/// Pivot blocks with smallest eigenvalue at or below this multiple of the
/// diagonal block's norm are rejected as not positive definite.
pub const PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtdError {
    #[error("covariance block for state block {t} is not invertible")]
    SingularBlock { t: usize },
    #[error("pivot block {t} is not positive definite")]
    NotPositiveDefinite { t: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    pub diag: Vec<DMatrix<f64>>,
    pub sub: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn new(diag: Vec<DMatrix<f64>>, sub: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(diag.len(), sub.len() + 1, "need one fewer subdiagonal block than diagonal blocks");
        Self { diag, sub }
    }

    pub fn identity(n: usize, horizon: usize) -> Self {
        Self {
            diag: vec![DMatrix::identity(n, n); horizon + 1],
            sub: vec![DMatrix::zeros(n, n); horizon],
        }
    }

    pub fn block_dim(&self) -> usize {
        self.diag[0].nrows()
    }

    /// Number of subdiagonal blocks, `N`.
    pub fn horizon(&self) -> usize {
        self.sub.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim() * self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.block_dim();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (t, f) in self.diag.iter().enumerate() {
            out.view_mut((t * n, t * n), (n, n)).copy_from(f);
        }
        for (t, g) in self.sub.iter().enumerate() {
            out.view_mut(((t + 1) * n, t * n), (n, n)).copy_from(g);
            out.view_mut((t * n, (t + 1) * n), (n, n)).copy_from(&g.transpose());
        }
        out
    }

    pub fn matvec(&self, x: &DVector<f64>) -> Result<DVector<f64>, BtdError> {
        if x.len() != self.dim() {
            return Err(BtdError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.apply(x))
    }

    /// `T x` without the dimension check.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.block_dim();
        let mut out = DVector::zeros(self.dim());
        for (t, f) in self.diag.iter().enumerate() {
            let mut blk = out.rows_mut(t * n, n);
            blk.gemv(1.0, f, &x.rows(t * n, n), 0.0);
        }
        for (t, g) in self.sub.iter().enumerate() {
            {
                let mut lower = out.rows_mut((t + 1) * n, n);
                lower.gemv(1.0, g, &x.rows(t * n, n), 1.0);
            }
            let mut upper = out.rows_mut(t * n, n);
            upper.gemv_tr(1.0, g, &x.rows((t + 1) * n, n), 1.0);
        }
        out
    }

    /// Largest absolute row sum; an upper bound on every eigenvalue.
    pub fn gershgorin_bound(&self) -> f64 {
        let n = self.block_dim();
        let blocks = self.diag.len();
        let mut best = 0.0f64;
        for t in 0..blocks {
            for i in 0..n {
                let mut sum = 0.0;
                for j in 0..n {
                    sum += linalg::abs(self.diag[t][(i, j)]);
                    if t > 0 {
                        sum += linalg::abs(self.sub[t - 1][(i, j)]);
                    }
                    if t + 1 < blocks {
                        sum += linalg::abs(self.sub[t][(j, i)]);
                    }
                }
                best = best.max(sum);
            }
        }
        best
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|f| f * factor).collect(),
            sub: self.sub.iter().map(|g| g * factor).collect(),
        }
    }

    /// Adds `shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let n = self.block_dim();
        Self {
            diag: self.diag.iter().map(|f| f + DMatrix::identity(n, n) * shift).collect(),
            sub: self.sub.clone(),
        }
    }

    /// Entrywise sum of two operators with the same layout.
    pub fn add(&self, other: &Self) -> Self {
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + b).collect(),
            sub: self.sub.iter().zip(&other.sub).map(|(a, b)| a + b).collect(),
        }
    }
}

/// `C^T W_R C + A^T W_Q A` and `C^T W_R y + A^T W_Q z` for block weights
/// `W_Q = diag(q_weights)` (Pi first) and `W_R = diag(r_weights)`.
pub fn assemble_weighted(
    sys: &StackedSystem,
    q_weights: &[DMatrix<f64>],
    r_weights: &[DMatrix<f64>],
) -> (BlockTridiag, DVector<f64>) {
    let (t_op, _) = assemble_parts(sys, q_weights, r_weights, 1.0, 1.0);
    let rhs = weighted_rhs(sys, q_weights, r_weights, 1.0, 1.0);
    (t_op, rhs)
}

/// `c_scale C^T W_R C + a_scale A^T W_Q A`, with the separate process and
/// measurement parts returned for reuse.
pub(crate) fn assemble_parts(
    sys: &StackedSystem,
    q_weights: &[DMatrix<f64>],
    r_weights: &[DMatrix<f64>],
    a_scale: f64,
    c_scale: f64,
) -> (BlockTridiag, BlockTridiag) {
    let process = process_gram(sys, q_weights).scaled(a_scale);
    let measurement = measurement_gram(sys, r_weights).scaled(c_scale);
    (process.add(&measurement), measurement)
}

/// `A^T W A` for block-diagonal `W = diag(w_0..w_N)`.
pub fn process_gram(sys: &StackedSystem, q_weights: &[DMatrix<f64>]) -> BlockTridiag {
    let horizon = sys.horizon();
    let mut diag = Vec::with_capacity(horizon + 1);
    let mut sub = Vec::with_capacity(horizon);
    for t in 0..=horizon {
        let mut f = q_weights[t].clone();
        if t < horizon {
            let wa = &q_weights[t + 1] * &sys.a[t];
            f += sys.a[t].transpose() * &wa;
            sub.push(-wa);
        }
        diag.push(linalg::symmetrize(&f));
    }
    BlockTridiag { diag, sub }
}

/// `C^T W C` for block-diagonal `W = diag(w_1..w_N)`.
pub fn measurement_gram(sys: &StackedSystem, r_weights: &[DMatrix<f64>]) -> BlockTridiag {
    let n = sys.state_dim();
    let horizon = sys.horizon();
    let mut diag = vec![DMatrix::zeros(n, n)];
    for t in 0..horizon {
        let c = &sys.c[t];
        diag.push(linalg::symmetrize(&(c.transpose() * &r_weights[t] * c)));
    }
    BlockTridiag { diag, sub: vec![DMatrix::zeros(n, n); horizon] }
}

pub(crate) fn weighted_rhs(
    sys: &StackedSystem,
    q_weights: &[DMatrix<f64>],
    r_weights: &[DMatrix<f64>],
    a_scale: f64,
    c_scale: f64,
) -> DVector<f64> {
    let (n, m) = (sys.state_dim(), sys.meas_dim());
    let mut wz = sys.z.clone();
    for (j, w) in q_weights.iter().enumerate() {
        let blk = w * sys.z.rows(j * n, n);
        wz.rows_mut(j * n, n).copy_from(&blk);
    }
    let mut wy = sys.y.clone();
    for (t, w) in r_weights.iter().enumerate() {
        let blk = w * sys.y.rows(t * m, m);
        wy.rows_mut(t * m, m).copy_from(&blk);
    }
    sys.at_mul(&wz) * a_scale + sys.ct_mul(&wy) * c_scale
}

/// Normal equations of the least-squares smoother with exact inverses.
pub fn assemble_normal_equations(sys: &StackedSystem) -> Result<(BlockTridiag, DVector<f64>), BtdError> {
    let mut q_weights = Vec::with_capacity(sys.q.len());
    for (t, q) in sys.q.iter().enumerate() {
        q_weights.push(invert_block(q, t)?);
    }
    let mut r_weights = Vec::with_capacity(sys.r.len());
    for (t, r) in sys.r.iter().enumerate() {
        r_weights.push(invert_block(r, t + 1)?);
    }
    Ok(assemble_weighted(sys, &q_weights, &r_weights))
}

fn invert_block(m: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>, BtdError> {
    let f = CovarianceFactors::new(m);
    if f.is_singular() {
        return Err(BtdError::SingularBlock { t });
    }
    Ok(f.pinv)
}

fn pivot(d: DMatrix<f64>, reference: &DMatrix<f64>, t: usize, rtol: f64) -> Result<Cholesky<f64, Dyn>, BtdError> {
    if rtol > 0.0 {
        let scale = reference.norm();
        if linalg::min_eigenvalue(&d) <= rtol * scale {
            return Err(BtdError::NotPositiveDefinite { t });
        }
    }
    Cholesky::new(linalg::symmetrize(&d)).ok_or(BtdError::NotPositiveDefinite { t })
}

/// Forward elimination of a block-tridiagonal operator, reusable for any
/// right-hand side.
#[derive(Debug, Clone)]
pub struct BtdFactorization {
    pivots: Vec<Cholesky<f64, Dyn>>,
    sub: Vec<DMatrix<f64>>,
    n: usize,
}

pub fn factor(op: &BlockTridiag) -> Result<BtdFactorization, BtdError> {
    factor_with_tol(op, PIVOT_RTOL)
}

/// As [`factor`] with a custom pivot tolerance; `0` accepts any pivot that
/// admits a Cholesky factorization.
pub fn factor_with_tol(op: &BlockTridiag, pivot_rtol: f64) -> Result<BtdFactorization, BtdError> {
    let blocks = op.diag.len();
    let mut pivots = Vec::with_capacity(blocks);
    pivots.push(pivot(op.diag[0].clone(), &op.diag[0], 0, pivot_rtol)?);
    for t in 1..blocks {
        let g = &op.sub[t - 1];
        let dinv_gt = pivots[t - 1].solve(&g.transpose());
        let d = &op.diag[t] - g * dinv_gt;
        pivots.push(pivot(d, &op.diag[t], t, pivot_rtol)?);
    }
    Ok(BtdFactorization { pivots, sub: op.sub.clone(), n: op.block_dim() })
}

impl BtdFactorization {
    pub fn dim(&self) -> usize {
        self.n * self.pivots.len()
    }

    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let blocks = self.pivots.len();
        let mut s = r.clone();
        for t in 1..blocks {
            let prev = self.pivots[t - 1].solve(&s.rows((t - 1) * n, n).into_owned());
            let upd = &self.sub[t - 1] * prev;
            let mut blk = s.rows_mut(t * n, n);
            blk -= upd;
        }
        let mut x = DVector::zeros(r.len());
        let last = blocks - 1;
        x.rows_mut(last * n, n)
            .copy_from(&self.pivots[last].solve(&s.rows(last * n, n).into_owned()));
        for t in (0..last).rev() {
            let rhs = s.rows(t * n, n) - self.sub[t].transpose() * x.rows((t + 1) * n, n);
            x.rows_mut(t * n, n).copy_from(&self.pivots[t].solve(&rhs));
        }
        x
    }
}

pub fn solve_factored(f: &BtdFactorization, r: &DVector<f64>) -> Result<DVector<f64>, BtdError> {
    if r.len() != f.dim() {
        return Err(BtdError::DimensionMismatch { expected: f.dim(), found: r.len() });
    }
    Ok(f.solve(r))
}

/// Forward elimination followed by back substitution.
pub fn solve_rts(op: &BlockTridiag, r: &DVector<f64>) -> Result<DVector<f64>, BtdError> {
    if r.len() != op.dim() {
        return Err(BtdError::DimensionMismatch { expected: op.dim(), found: r.len() });
    }
    Ok(factor(op)?.solve(r))
}

struct Sweep {
    d: Vec<DMatrix<f64>>,
    s: Vec<DVector<f64>>,
}

fn forward_sweep(op: &BlockTridiag, r: &DVector<f64>) -> Result<Sweep, BtdError> {
    let n = op.block_dim();
    let blocks = op.diag.len();
    let mut d = Vec::with_capacity(blocks);
    let mut s = Vec::with_capacity(blocks);
    d.push(op.diag[0].clone());
    s.push(r.rows(0, n).into_owned());
    for t in 1..blocks {
        let chol = pivot(d[t - 1].clone(), &op.diag[t - 1], t - 1, PIVOT_RTOL)?;
        let g = &op.sub[t - 1];
        d.push(&op.diag[t] - g * chol.solve(&g.transpose()));
        s.push(r.rows(t * n, n) - g * chol.solve(&s[t - 1]));
    }
    pivot(d[blocks - 1].clone(), &op.diag[blocks - 1], blocks - 1, PIVOT_RTOL)?;
    Ok(Sweep { d, s })
}

fn backward_sweep(op: &BlockTridiag, r: &DVector<f64>) -> Result<Sweep, BtdError> {
    let n = op.block_dim();
    let blocks = op.diag.len();
    let mut d = vec![DMatrix::zeros(n, n); blocks];
    let mut s = vec![DVector::zeros(n); blocks];
    d[blocks - 1] = op.diag[blocks - 1].clone();
    s[blocks - 1] = r.rows((blocks - 1) * n, n).into_owned();
    for t in (0..blocks - 1).rev() {
        let chol = pivot(d[t + 1].clone(), &op.diag[t + 1], t + 1, PIVOT_RTOL)?;
        let g = &op.sub[t];
        d[t] = &op.diag[t] - g.transpose() * chol.solve(g);
        s[t] = r.rows(t * n, n) - g.transpose() * chol.solve(&s[t + 1]);
    }
    pivot(d[0].clone(), &op.diag[0], 0, PIVOT_RTOL)?;
    Ok(Sweep { d, s })
}

fn combine(op: &BlockTridiag, r: &DVector<f64>, fwd: &Sweep, bwd: &Sweep) -> Result<DVector<f64>, BtdError> {
    let n = op.block_dim();
    let mut x = DVector::zeros(op.dim());
    for t in 0..op.diag.len() {
        // Both sweeps include F_t and r_t once, so one copy is removed.
        let d = &fwd.d[t] + &bwd.d[t] - &op.diag[t];
        let s = &fwd.s[t] + &bwd.s[t] - r.rows(t * n, n);
        let chol = pivot(d, &op.diag[t], t, PIVOT_RTOL)?;
        x.rows_mut(t * n, n).copy_from(&chol.solve(&s));
    }
    Ok(x)
}

/// Two-filter solve: independent forward and backward eliminations combined
/// block by block.
pub fn solve_mf(op: &BlockTridiag, r: &DVector<f64>) -> Result<DVector<f64>, BtdError> {
    if r.len() != op.dim() {
        return Err(BtdError::DimensionMismatch { expected: op.dim(), found: r.len() });
    }
    let fwd = forward_sweep(op, r)?;
    let bwd = backward_sweep(op, r)?;
    combine(op, r, &fwd, &bwd)
}

/// [`solve_mf`] with the forward and backward sweeps on separate threads.
#[cfg(feature = "std")]
pub fn solve_mf_parallel(op: &BlockTridiag, r: &DVector<f64>) -> Result<DVector<f64>, BtdError> {
    if r.len() != op.dim() {
        return Err(BtdError::DimensionMismatch { expected: op.dim(), found: r.len() });
    }
    let (fwd, bwd) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| backward_sweep(op, r));
        let fwd = forward_sweep(op, r);
        (fwd, handle.join().expect("backward sweep panicked"))
    });
    combine(op, r, &fwd?, &bwd?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    /// Final Rayleigh quotient; never exceeds the true largest eigenvalue.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Multiplier applied to a power-iteration estimate before it is used as a
/// Lipschitz constant.
pub const POWER_SAFETY: f64 = 1.05;

impl PowerEstimate {
    /// Estimate inflated by [`POWER_SAFETY`].
    pub fn inflated(&self) -> f64 {
        self.value * POWER_SAFETY
    }
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
/// Stops when successive Rayleigh quotients agree to relative `tol`.
pub fn power_iteration<F>(op: F, dim: usize, iters: usize, tol: f64) -> PowerEstimate
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return PowerEstimate { value: 0.0, iterations: 0, converged: true };
    }
    // Deterministic start with no special symmetry.
    let mut v = DVector::from_fn(dim, |i, _| {
        let f = (i as f64) * 0.618_033_988_75;
        1.0 + f - libm::floor(f)
    });
    v /= v.norm();
    let mut value = 0.0;
    for k in 1..=iters {
        let w = op(&v);
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return PowerEstimate { value: 0.0, iterations: k, converged: true };
        }
        let done = k > 1 && linalg::abs(rayleigh - value) <= tol * linalg::abs(rayleigh);
        value = rayleigh;
        if done {
            return PowerEstimate { value, iterations: k, converged: true };
        }
        v = w / norm;
    }
    PowerEstimate { value, iterations: iters, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_example() -> BlockTridiag {
        BlockTridiag::new(
            vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 2.0)],
            vec![DMatrix::from_element(1, 1, -1.0)],
        )
    }

    #[test]
    fn scalar_solves() {
        let t = scalar_example();
        let r = DVector::from_vec(vec![0.0, 2.0]);
        for x in [solve_rts(&t, &r).unwrap(), solve_mf(&t, &r).unwrap(), factor(&t).unwrap().solve(&r)] {
            assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
            assert!((x[1] - 4.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matvec_row_sums() {
        let t = scalar_example();
        let x = t.matvec(&DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(x, DVector::from_element(2, 1.0));
        assert!(matches!(
            t.matvec(&DVector::zeros(3)),
            Err(BtdError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn diagonal_mf_halves() {
        let t = BlockTridiag::identity(2, 3).scaled(2.0);
        let r = DVector::from_element(8, 1.0);
        let x = solve_mf(&t, &r).unwrap();
        assert!((x - DVector::from_element(8, 0.5)).amax() < 1e-15);
    }

    #[test]
    fn indefinite_pivot_is_located() {
        let t = BlockTridiag::new(
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            vec![DMatrix::from_element(1, 1, 2.0)],
        );
        assert_eq!(factor(&t).unwrap_err(), BtdError::NotPositiveDefinite { t: 1 });
    }

    #[test]
    fn power_iteration_known_spectra() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let est = power_iteration(|v| &d * v, 2, 500, 1e-14);
        assert!((est.value - 3.0).abs() < 1e-6);
        let t = scalar_example();
        let est = power_iteration(|v| t.apply(v), 2, 500, 1e-14);
        assert!((est.value - 3.0).abs() < 1e-6);
        assert!(est.value <= 3.0 + 1e-12);
        let b = DVector::from_vec(vec![1.0, 2.0, -2.0]);
        let bbt = &b * b.transpose();
        let est = power_iteration(|v| &bbt * v, 3, 100, 1e-14);
        assert!((est.value - 9.0).abs() < 1e-9);
    }
}
