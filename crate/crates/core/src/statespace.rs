//! Linear time-varying state-space models and their stacked block form.
//!
//! Indexing follows the model equations
//!
//! ```text
//! x_{t+1} = A_t x_t + B_t u_t + v_t,   t = 0..N-1
//! y_t     = C_t x_t + e_t,             t = 1..N
//! ```
//!
//! so `a[t]`, `b[t]`, `q[t]`, `u[t]` hold `A_t`, `B_t`, `Q_t`, `u_t` while
//! `c[t]`, `r[t]`, `y[t]` hold `C_{t+1}`, `R_{t+1}`, `y_{t+1}`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, CovarianceFactors};

/// Relative tolerance for the symmetry check on covariance blocks.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Negative eigenvalues down to `-PSD_RTOL * scale` are accepted as zero.
pub const PSD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LtvModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    /// Cross-covariances `S_t = E[v_t e_t^T]` (n x m). `v_0` is independent of
    /// the measurement noise, so entry 0 must be zero.
    pub s: Option<Vec<DMatrix<f64>>>,
    pub mu: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Which part of an [`LtvModel`] a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    A,
    B,
    C,
    Q,
    R,
    S,
    Pi,
    Mu,
    U,
    Y,
}

/// One failed model invariant. `t` uses the model's own time index
/// (`R_1` is reported as `t = 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LengthMismatch { field: Field, expected: usize, found: usize },
    DimensionMismatch { field: Field, t: usize },
    NonFinite { field: Field, t: usize },
    NotSymmetric { field: Field, t: usize },
    NotPsd { field: Field, t: usize },
    JointNotPsd { t: usize },
    InitialCrossCovariance,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::LengthMismatch { .. } => "length_mismatch",
            Violation::DimensionMismatch { .. } => "dimension_mismatch",
            Violation::NonFinite { .. } => "non_finite",
            Violation::NotSymmetric { .. } => "not_symmetric",
            Violation::NotPsd { .. } => "not_psd",
            Violation::JointNotPsd { .. } => "joint_not_psd",
            Violation::InitialCrossCovariance => "initial_cross_covariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model violates {} invariant(s), first: {:?}", .0.len(), .0.first())]
    InvalidModel(Vec<Violation>),
    #[error("model carries cross-covariances; decorrelate it before stacking")]
    CrossCovariancePresent,
    #[error("R_{t} is singular along the range of S_{t}")]
    SingularR { t: usize },
    #[error("non-Gaussian noise cannot be drawn jointly with cross-covariances")]
    UnsupportedNoise,
}

impl LtvModel {
    /// Builds a model whose matrices are the same at every step.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        mu: DVector<f64>,
        pi: DMatrix<f64>,
        u: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
    ) -> Self {
        let horizon = y.len();
        Self {
            a: vec![a; horizon],
            b: vec![b; horizon],
            c: vec![c; horizon],
            q: vec![q; horizon],
            r: vec![r; horizon],
            s: None,
            mu,
            pi,
            u,
            y,
        }
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.mu.len()
    }

    pub fn meas_dim(&self) -> usize {
        self.c.first().map(|c| c.nrows()).unwrap_or(0)
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map(|b| b.ncols()).unwrap_or(0)
    }
}

fn finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn psd_ok(m: &DMatrix<f64>) -> bool {
    let scale: f64 = m.diagonal().iter().map(|d| linalg::abs(*d)).sum::<f64>();
    let scale = scale.max(linalg::max_abs(m));
    linalg::min_eigenvalue(m) >= -PSD_RTOL * scale
}

fn check_cov(out: &mut Vec<Violation>, field: Field, t: usize, m: &DMatrix<f64>, dim: usize) {
    if m.nrows() != dim || m.ncols() != dim {
        out.push(Violation::DimensionMismatch { field, t });
        return;
    }
    if !finite(m) {
        out.push(Violation::NonFinite { field, t });
        return;
    }
    if !linalg::is_symmetric(m, SYMMETRY_RTOL) {
        out.push(Violation::NotSymmetric { field, t });
        return;
    }
    if !psd_ok(m) {
        out.push(Violation::NotPsd { field, t });
    }
}

/// Lists every invariant violation of `model`; an empty list means valid.
pub fn validate(model: &LtvModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let horizon = model.a.len();
    let n = model.state_dim();
    let m = model.meas_dim();
    let p = model.input_dim();

    let lens = [
        (Field::B, model.b.len()),
        (Field::C, model.c.len()),
        (Field::Q, model.q.len()),
        (Field::R, model.r.len()),
        (Field::U, model.u.len()),
        (Field::Y, model.y.len()),
    ];
    for (field, found) in lens {
        if found != horizon {
            out.push(Violation::LengthMismatch { field, expected: horizon, found });
        }
    }
    if let Some(s) = &model.s {
        if s.len() != horizon {
            out.push(Violation::LengthMismatch { field: Field::S, expected: horizon, found: s.len() });
        }
    }
    if !out.is_empty() {
        // Report A as the odd one out when every other sequence agrees.
        if out.len() == lens.len() && lens.windows(2).all(|w| w[0].1 == w[1].1) {
            out.clear();
            out.push(Violation::LengthMismatch { field: Field::A, expected: lens[0].1, found: horizon });
        }
        return out;
    }

    if !finite_vec(&model.mu) {
        out.push(Violation::NonFinite { field: Field::Mu, t: 0 });
    }
    check_cov(&mut out, Field::Pi, 0, &model.pi, n);

    for t in 0..horizon {
        let a = &model.a[t];
        if a.nrows() != n || a.ncols() != n {
            out.push(Violation::DimensionMismatch { field: Field::A, t });
        } else if !finite(a) {
            out.push(Violation::NonFinite { field: Field::A, t });
        }
        let b = &model.b[t];
        if b.nrows() != n || b.ncols() != p {
            out.push(Violation::DimensionMismatch { field: Field::B, t });
        } else if !finite(b) {
            out.push(Violation::NonFinite { field: Field::B, t });
        }
        if model.u[t].len() != p {
            out.push(Violation::DimensionMismatch { field: Field::U, t });
        } else if !finite_vec(&model.u[t]) {
            out.push(Violation::NonFinite { field: Field::U, t });
        }
        let c = &model.c[t];
        if c.nrows() != m || c.ncols() != n {
            out.push(Violation::DimensionMismatch { field: Field::C, t: t + 1 });
        } else if !finite(c) {
            out.push(Violation::NonFinite { field: Field::C, t: t + 1 });
        }
        if model.y[t].len() != m {
            out.push(Violation::DimensionMismatch { field: Field::Y, t: t + 1 });
        } else if !finite_vec(&model.y[t]) {
            out.push(Violation::NonFinite { field: Field::Y, t: t + 1 });
        }
        check_cov(&mut out, Field::Q, t, &model.q[t], n);
        check_cov(&mut out, Field::R, t + 1, &model.r[t], m);
    }

    if let Some(s) = &model.s {
        for t in 0..horizon {
            let st = &s[t];
            if st.nrows() != n || st.ncols() != m {
                out.push(Violation::DimensionMismatch { field: Field::S, t });
                continue;
            }
            if !finite(st) {
                out.push(Violation::NonFinite { field: Field::S, t });
                continue;
            }
            if t == 0 {
                if linalg::max_abs(st) != 0.0 {
                    out.push(Violation::InitialCrossCovariance);
                }
                continue;
            }
            // Joint covariance of (v_t, e_t); e_t is measured at step t, i.e. r[t-1].
            let r = &model.r[t - 1];
            let q = &model.q[t];
            if q.nrows() != n || r.nrows() != m {
                continue;
            }
            let mut joint = DMatrix::zeros(n + m, n + m);
            joint.view_mut((0, 0), (n, n)).copy_from(q);
            joint.view_mut((0, n), (n, m)).copy_from(st);
            joint.view_mut((n, 0), (m, n)).copy_from(&st.transpose());
            joint.view_mut((n, n), (m, m)).copy_from(r);
            if !psd_ok(&joint) {
                out.push(Violation::JointNotPsd { t });
            }
        }
    }
    out
}

/// A set of linear rows on the stacked state touching at most two adjacent
/// time blocks: `cur * x_block + next * x_{block+1}` compared with `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRows {
    pub block: usize,
    pub cur: DMatrix<f64>,
    pub next: Option<DMatrix<f64>>,
    pub rhs: DVector<f64>,
}

impl BlockRows {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    /// Row values `cur x_t + next x_{t+1}` (without the right-hand side).
    pub fn apply(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        let t = self.block;
        let mut out = &self.cur * x.rows(t * n, n);
        if let Some(next) = &self.next {
            out += next * x.rows((t + 1) * n, n);
        }
        out
    }
}

/// Block operators of the stacked least-squares problem
/// `||R^{-1/2}(y - Cx)||^2 + ||Q^{-1/2}(z - Ax)||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    n: usize,
    m: usize,
    horizon: usize,
    /// Transition matrices `A_0..A_{N-1}`; `A_big` has `-A_t` below the diagonal.
    pub a: Vec<DMatrix<f64>>,
    /// Observation matrices `C_1..C_N`.
    pub c: Vec<DMatrix<f64>>,
    /// Diagonal blocks of `Q_big`: `(Pi, Q_0, ..., Q_{N-1})`.
    pub q: Vec<DMatrix<f64>>,
    /// Diagonal blocks of `R_big`: `(R_1, ..., R_N)`.
    pub r: Vec<DMatrix<f64>>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

/// Stacks a validated, cross-covariance free model into block operators.
pub fn stack(model: &LtvModel) -> Result<StackedSystem, ModelError> {
    let violations = validate(model);
    if !violations.is_empty() {
        return Err(ModelError::InvalidModel(violations));
    }
    if model.s.is_some() {
        return Err(ModelError::CrossCovariancePresent);
    }
    let horizon = model.horizon();
    let n = model.state_dim();
    let m = model.meas_dim();
    let mut z = DVector::zeros(n * (horizon + 1));
    z.rows_mut(0, n).copy_from(&model.mu);
    for t in 0..horizon {
        z.rows_mut((t + 1) * n, n).copy_from(&(&model.b[t] * &model.u[t]));
    }
    let mut y = DVector::zeros(m * horizon);
    for t in 0..horizon {
        y.rows_mut(t * m, m).copy_from(&model.y[t]);
    }
    let mut q = Vec::with_capacity(horizon + 1);
    q.push(model.pi.clone());
    q.extend(model.q.iter().cloned());
    Ok(StackedSystem {
        n,
        m,
        horizon,
        a: model.a.clone(),
        c: model.c.clone(),
        q,
        r: model.r.clone(),
        z,
        y,
    })
}

impl StackedSystem {
    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn meas_dim(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Length of the stacked state, `n (N + 1)`.
    pub fn dim(&self) -> usize {
        self.n * (self.horizon + 1)
    }

    /// `A_big x`: block 0 is `x_0`, block `t+1` is `x_{t+1} - A_t x_t`.
    pub fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = x.clone();
        for t in 0..self.horizon {
            let ax = &self.a[t] * x.rows(t * n, n);
            let mut blk = out.rows_mut((t + 1) * n, n);
            blk -= ax;
        }
        out
    }

    /// `A_big^T w`.
    pub fn at_mul(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = w.clone();
        for t in 0..self.horizon {
            let atw = self.a[t].transpose() * w.rows((t + 1) * n, n);
            let mut blk = out.rows_mut(t * n, n);
            blk -= atw;
        }
        out
    }

    /// `C_big x`, one `m`-block per measurement time.
    pub fn c_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = DVector::zeros(m * self.horizon);
        for t in 0..self.horizon {
            out.rows_mut(t * m, m)
                .copy_from(&(&self.c[t] * x.rows((t + 1) * n, n)));
        }
        out
    }

    /// `C_big^T w`.
    pub fn ct_mul(&self, w: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = DVector::zeros(self.dim());
        for t in 0..self.horizon {
            out.rows_mut((t + 1) * n, n)
                .copy_from(&(self.c[t].transpose() * w.rows(t * m, m)));
        }
        out
    }

    pub fn dense_a(&self) -> DMatrix<f64> {
        let n = self.n;
        let dim = self.dim();
        let mut out = DMatrix::identity(dim, dim);
        for t in 0..self.horizon {
            out.view_mut(((t + 1) * n, t * n), (n, n)).copy_from(&(-&self.a[t]));
        }
        out
    }

    pub fn dense_c(&self) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = DMatrix::zeros(m * self.horizon, self.dim());
        for t in 0..self.horizon {
            out.view_mut((t * m, (t + 1) * n), (m, n)).copy_from(&self.c[t]);
        }
        out
    }

    pub fn dense_q(&self) -> DMatrix<f64> {
        block_diag(&self.q)
    }

    pub fn dense_r(&self) -> DMatrix<f64> {
        block_diag(&self.r)
    }

    /// Value of `||R^{-1/2}(y - Cx)||^2 + ||Q^{-1/2}(z - Ax)||^2` (no 1/2
    /// factors). Singular blocks use their pseudoinverse.
    pub fn ls_objective(&self, x: &DVector<f64>) -> f64 {
        let (n, m) = (self.n, self.m);
        let pr = self.z.clone() - self.a_mul(x);
        let mr = self.y.clone() - self.c_mul(x);
        let mut total = 0.0;
        for (j, q) in self.q.iter().enumerate() {
            let w = CovarianceFactors::new(q).pinv;
            let blk = pr.rows(j * n, n);
            total += blk.dot(&(&w * blk));
        }
        for (t, r) in self.r.iter().enumerate() {
            let w = CovarianceFactors::new(r).pinv;
            let blk = mr.rows(t * m, m);
            total += blk.dot(&(&w * blk));
        }
        total
    }

    /// Pseudoinverse weights for every covariance block plus the equality
    /// rows that pin the state to the range of singular blocks.
    pub fn pseudo_weights(&self) -> PseudoWeights {
        let n = self.n;
        let m = self.m;
        let q: Vec<CovarianceFactors> = self.q.iter().map(CovarianceFactors::new).collect();
        let r: Vec<CovarianceFactors> = self.r.iter().map(CovarianceFactors::new).collect();
        let mut equality_rows = Vec::new();
        for (j, f) in q.iter().enumerate() {
            if !f.is_singular() {
                continue;
            }
            let basis_t = f.null_basis.transpose();
            let rhs = &basis_t * self.z.rows(j * n, n);
            if j == 0 {
                equality_rows.push(BlockRows { block: 0, cur: basis_t, next: None, rhs });
            } else {
                let t = j - 1;
                equality_rows.push(BlockRows {
                    block: t,
                    cur: -(&basis_t * &self.a[t]),
                    next: Some(basis_t),
                    rhs,
                });
            }
        }
        for (t, f) in r.iter().enumerate() {
            if !f.is_singular() {
                continue;
            }
            let basis_t = f.null_basis.transpose();
            let rhs = &basis_t * self.y.rows(t * m, m);
            equality_rows.push(BlockRows {
                block: t + 1,
                cur: &basis_t * &self.c[t],
                next: None,
                rhs,
            });
        }
        equality_rows.sort_by_key(|rows| rows.block);
        PseudoWeights { q, r, equality_rows }
    }
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Per-block pseudoinverse data for a stacked system.
#[derive(Debug, Clone)]
pub struct PseudoWeights {
    /// Factors of `(Pi, Q_0, ..., Q_{N-1})`.
    pub q: Vec<CovarianceFactors>,
    /// Factors of `(R_1, ..., R_N)`.
    pub r: Vec<CovarianceFactors>,
    /// Null-space equality rows (`rows x = rhs`), sorted by block.
    pub equality_rows: Vec<BlockRows>,
}

impl PseudoWeights {
    pub fn has_singular_blocks(&self) -> bool {
        !self.equality_rows.is_empty()
    }
}

/// Removes cross-covariances by output injection.
///
/// For `t >= 1` the transition becomes `A_t - S_t R_t^+ C_t`, the process
/// covariance `Q_t - S_t R_t^+ S_t^T`, and `S_t R_t^+ y_t` enters as an extra
/// known input: the returned model has `B_t <- [B_t, S_t R_t^+]` and
/// `u_t <- [u_t; y_t]` (with a zero measurement slot at `t = 0`).
pub fn decorrelate(model: &LtvModel) -> Result<LtvModel, ModelError> {
    let violations = validate(model);
    if !violations.is_empty() {
        return Err(ModelError::InvalidModel(violations));
    }
    let Some(s) = &model.s else {
        return Ok(model.clone());
    };
    let horizon = model.horizon();
    let n = model.state_dim();
    let m = model.meas_dim();
    let p = model.input_dim();
    let mut out = model.clone();
    out.s = None;
    for t in 0..horizon {
        let mut b = DMatrix::zeros(n, p + m);
        b.view_mut((0, 0), (n, p)).copy_from(&model.b[t]);
        let mut u = DVector::zeros(p + m);
        u.rows_mut(0, p).copy_from(&model.u[t]);
        if t >= 1 && linalg::max_abs(&s[t]) > 0.0 {
            let rf = CovarianceFactors::new(&model.r[t - 1]);
            let scale = linalg::max_abs(&s[t]);
            if linalg::max_abs(&(&s[t] * &rf.perp)) > 1e-8 * scale {
                return Err(ModelError::SingularR { t });
            }
            let gain = &s[t] * &rf.pinv;
            out.a[t] = &model.a[t] - &gain * &model.c[t - 1];
            out.q[t] = linalg::symmetrize(&(&model.q[t] - &gain * s[t].transpose()));
            b.view_mut((0, p), (n, m)).copy_from(&gain);
            u.rows_mut(p, m).copy_from(&model.y[t - 1]);
        }
        out.b[t] = b;
        out.u[t] = u;
    }
    Ok(out)
}

/// Pseudoinverse weights and null-space rows of a model, decorrelating first
/// when cross-covariances are present.
pub fn pseudo_weights(model: &LtvModel) -> Result<PseudoWeights, ModelError> {
    let plain = decorrelate(model)?;
    Ok(stack(&plain)?.pseudo_weights())
}

/// Distribution family for one noise sequence. Every family has covariance
/// equal to the model's block except the outlier mixture, which treats the
/// block as the nominal (inlier) covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Zero,
    Gaussian,
    /// Zero with probability `1 - alpha`, otherwise `N(0, Sigma / alpha)`.
    BernoulliGaussian { alpha: f64 },
    /// `N(0, Sigma)` with probability `1 - alpha`, otherwise `N(0, factor^2 Sigma)`.
    GaussianMixtureOutlier { alpha: f64, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub process: NoiseKind,
    pub measurement: NoiseKind,
}

impl NoiseSpec {
    pub fn gaussian() -> Self {
        Self { process: NoiseKind::Gaussian, measurement: NoiseKind::Gaussian }
    }

    pub fn zero() -> Self {
        Self { process: NoiseKind::Zero, measurement: NoiseKind::Zero }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_N`.
    pub states: Vec<DVector<f64>>,
    /// `y_1..y_N`.
    pub measurements: Vec<DVector<f64>>,
    /// Process noise draws `v_0..v_{N-1}`.
    pub process_noise: Vec<DVector<f64>>,
}

/// Generator for run `stream` of a seeded experiment. Streams of one seed are
/// independent ChaCha20 streams, so run `i` is reproducible on its own.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `factor * xi` shaped by `kind`, where `factor * factor^T` is the
/// block covariance and `xi` is standard normal.
pub fn draw_noise<R: Rng + ?Sized>(kind: NoiseKind, factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let dim = factor.nrows();
    let rank = factor.ncols();
    match kind {
        NoiseKind::Zero => DVector::zeros(dim),
        NoiseKind::Gaussian => {
            let xi = DVector::from_fn(rank, |_, _| standard_normal(rng));
            factor * xi
        }
        NoiseKind::BernoulliGaussian { alpha } => {
            let active = rng.random::<f64>() < alpha;
            let xi = DVector::from_fn(rank, |_, _| standard_normal(rng));
            if active {
                factor * xi / linalg::sqrt(alpha)
            } else {
                DVector::zeros(dim)
            }
        }
        NoiseKind::GaussianMixtureOutlier { alpha, factor: k } => {
            let outlier = rng.random::<f64>() < alpha;
            let xi = DVector::from_fn(rank, |_, _| standard_normal(rng));
            let v = factor * xi;
            if outlier {
                v * k
            } else {
                v
            }
        }
    }
}

/// Simulates the model from `x_0 ~ N(mu, Pi)`. Draw order: `x_0`, then for
/// each step the process noise `v_t` followed by the measurement noise of
/// `y_{t+1}`. The model's own `y` is ignored.
pub fn simulate(model: &LtvModel, noise: &NoiseSpec, seed: u64) -> Result<Trajectory, ModelError> {
    simulate_with(model, noise, &mut rng_for(seed, 0))
}

pub fn simulate_with<R: Rng + ?Sized>(
    model: &LtvModel,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Trajectory, ModelError> {
    let mut violations = validate(model);
    violations.retain(|v| !matches!(v, Violation::DimensionMismatch { field: Field::Y, .. }));
    if !violations.is_empty() {
        return Err(ModelError::InvalidModel(violations));
    }
    let correlated = model
        .s
        .as_ref()
        .map(|s| s.iter().any(|st| linalg::max_abs(st) > 0.0))
        .unwrap_or(false);
    let gaussianish = |k: NoiseKind| matches!(k, NoiseKind::Zero | NoiseKind::Gaussian);
    if correlated && !(gaussianish(noise.process) && gaussianish(noise.measurement)) {
        return Err(ModelError::UnsupportedNoise);
    }
    let horizon = model.horizon();
    let n = model.state_dim();
    let m = model.meas_dim();

    let pi_factor = CovarianceFactors::new(&model.pi).range_factor;
    let x0 = &model.mu + draw_noise(NoiseKind::Gaussian, &pi_factor, rng);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0);
    let mut measurements = Vec::with_capacity(horizon);
    let mut process_noise = Vec::with_capacity(horizon);

    // Measurement noise e_t pairs with v_t when correlated; pre-draw jointly.
    let mut pending_e: Option<DVector<f64>> = None;
    for t in 0..horizon {
        let v = if correlated && t >= 1 {
            // v_t correlated with e_t (which belongs to y_t, drawn at step t-1).
            pending_e.take().unwrap_or_else(|| DVector::zeros(n))
        } else {
            draw_noise(noise.process, &CovarianceFactors::new(&model.q[t]).range_factor, rng)
        };
        let x = &model.a[t] * &states[t] + &model.b[t] * &model.u[t] + &v;
        process_noise.push(v);

        // Measurement of x_{t+1}, i.e. y_{t+1}.
        let e = if correlated && t + 1 < horizon {
            let q = &model.q[t + 1];
            let r = &model.r[t];
            let s = &model.s.as_ref().unwrap()[t + 1];
            let mut joint = DMatrix::zeros(n + m, n + m);
            joint.view_mut((0, 0), (n, n)).copy_from(q);
            joint.view_mut((0, n), (n, m)).copy_from(s);
            joint.view_mut((n, 0), (m, n)).copy_from(&s.transpose());
            joint.view_mut((n, n), (m, m)).copy_from(r);
            let kind = if noise.process == NoiseKind::Zero && noise.measurement == NoiseKind::Zero {
                NoiseKind::Zero
            } else {
                NoiseKind::Gaussian
            };
            let ve = draw_noise(kind, &CovarianceFactors::new(&joint).range_factor, rng);
            pending_e = Some(ve.rows(0, n).into_owned());
            ve.rows(n, m).into_owned()
        } else {
            draw_noise(noise.measurement, &CovarianceFactors::new(&model.r[t]).range_factor, rng)
        };
        measurements.push(&model.c[t] * &x + e);
        states.push(x);
    }
    Ok(Trajectory { states, measurements, process_noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn v1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn scalar_model() -> LtvModel {
        LtvModel::time_invariant(
            m1(1.0),
            m1(0.0),
            m1(1.0),
            m1(1.0),
            m1(1.0),
            v1(0.0),
            m1(1.0),
            vec![v1(0.0)],
            vec![v1(2.0)],
        )
    }

    #[test]
    fn scalar_stack_matches_hand_layout() {
        let sys = stack(&scalar_model()).unwrap();
        let a = sys.dense_a();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
        assert_eq!(sys.dense_c(), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(sys.z, DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(sys.dense_q(), DMatrix::identity(2, 2));
    }

    #[test]
    fn negative_r_is_reported() {
        let mut model = scalar_model();
        model.r[0] = m1(-1.0);
        assert_eq!(validate(&model), vec![Violation::NotPsd { field: Field::R, t: 1 }]);
    }

    #[test]
    fn short_a_sequence_is_reported() {
        let mut model = scalar_model();
        model.a.clear();
        let v = validate(&model);
        assert_eq!(v, vec![Violation::LengthMismatch { field: Field::A, expected: 1, found: 0 }]);
        assert_eq!(v[0].code(), "length_mismatch");
    }

    #[test]
    fn decorrelate_scalar_formula() {
        let mut model = scalar_model();
        model.a = vec![m1(1.0); 2];
        model.b = vec![m1(0.0); 2];
        model.c = vec![m1(1.0); 2];
        model.q = vec![m1(2.0); 2];
        model.r = vec![m1(1.0); 2];
        model.u = vec![v1(0.0); 2];
        model.y = vec![v1(0.5), v1(1.5)];
        model.s = Some(vec![m1(0.0), m1(1.0)]);
        let out = decorrelate(&model).unwrap();
        assert!(out.s.is_none());
        assert!((out.a[1][(0, 0)] - 0.0).abs() < 1e-15);
        assert!((out.q[1][(0, 0)] - 1.0).abs() < 1e-15);
        // Output injection S R^+ y_1 rides on the augmented input.
        let injected = &out.b[1] * &out.u[1];
        assert!((injected[0] - 0.5).abs() < 1e-15);
        assert_eq!(out.a[0], model.a[0]);
    }

    #[test]
    fn decorrelate_zero_cross_covariance_only_clears() {
        let mut model = scalar_model();
        model.s = Some(vec![m1(0.0)]);
        let out = decorrelate(&model).unwrap();
        assert!(out.s.is_none());
        assert_eq!(out.a, model.a);
        assert_eq!(out.q, model.q);
        assert_eq!(&out.b[0] * &out.u[0], &model.b[0] * &model.u[0]);
    }

    #[test]
    fn decorrelate_rejects_cross_covariance_outside_range_of_r() {
        let mut model = scalar_model();
        model.a = vec![m1(1.0); 2];
        model.b = vec![m1(0.0); 2];
        model.c = vec![m1(1.0); 2];
        model.q = vec![m1(2.0); 2];
        model.r = vec![m1(0.0); 2];
        model.u = vec![v1(0.0); 2];
        model.y = vec![v1(0.0); 2];
        model.s = Some(vec![m1(0.0), m1(1.0)]);
        // Joint covariance [[2,1],[1,0]] is indefinite; validation catches it first.
        assert!(matches!(decorrelate(&model), Err(ModelError::InvalidModel(_))));
    }

    #[test]
    fn zero_noise_follows_the_recursion() {
        let mut model = scalar_model();
        model.a = vec![m1(0.5); 3];
        model.b = vec![m1(0.0); 3];
        model.c = vec![m1(2.0); 3];
        model.q = vec![m1(1.0); 3];
        model.r = vec![m1(1.0); 3];
        model.u = vec![v1(0.0); 3];
        model.y = vec![v1(0.0); 3];
        model.mu = v1(8.0);
        model.pi = m1(0.0);
        let traj = simulate(&model, &NoiseSpec::zero(), 7).unwrap();
        let ys: Vec<f64> = traj.measurements.iter().map(|y| y[0]).collect();
        assert_eq!(ys, vec![8.0, 4.0, 2.0]);
    }
}
