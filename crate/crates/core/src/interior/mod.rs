//! Interior-point solver for constrained PLQ smoothing.
//!
//! The primal problem is
//!
//! ```text
//! min_x  rho(x) = sum_i sup_{v_i in V_i} <v_i, b_i + B_i x> - v_i^T M_i v_i / 2
//! s.t.   D^T x <= d,   E^T x = e
//! ```
//!
//! with `V_i = {v : H_i^T v <= h_i}`. Every term and constraint row touches
//! at most two consecutive time blocks, so each Newton step reduces to a
//! block-tridiagonal solve in the state.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::blocktridiag::BtdError;
use crate::firstorder::SmootherProblem;
use crate::plq::{ConstraintSet, PlqPenalty, ScalarLoss};
use crate::statespace::BlockRows;

mod kkt;
mod newton;
mod solve;

pub use kkt::{kkt_residual, KktResidual, KktState};
pub use newton::{newton_direction, step_to_boundary};
pub use solve::{duality_gap, solve_ip, solve_ip_from, solve_ip_observed, IpOptions, IpSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IpError {
    #[error("constraint set cannot be written as block rows: {0}")]
    UnsupportedConstraint(String),
    #[error("loss {0} has no scalar PLQ encoding")]
    UnsupportedLoss(ScalarLoss),
    #[error("reduced Newton system is singular at block {t}")]
    SingularKkt { t: usize },
    #[error("no convergence within {iterations} iterations")]
    MaxItersExceeded { iterations: usize, best: alloc::boxed::Box<IpSolution> },
    #[error("dual point is infeasible: {0}")]
    DualInfeasible(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

impl From<BtdError> for IpError {
    fn from(e: BtdError) -> Self {
        match e {
            BtdError::NotPositiveDefinite { t } | BtdError::SingularBlock { t } => IpError::SingularKkt { t },
            other => IpError::InvalidProblem(format!("{other}")),
        }
    }
}

/// One PLQ term `weight * sum_c loss(u_c)` of `u = offset + map * x_loc`,
/// where `x_loc` is `x_block` or `(x_block, x_{block+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlqTerm {
    pub block: usize,
    pub spans_next: bool,
    pub loss: ScalarLoss,
    pub weight: f64,
    pub map: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Encoding in terms of `x_loc`, with the weight folded in.
    pub encoding: PlqPenalty,
    /// Strictly interior point of the dual set.
    pub dual_center: DVector<f64>,
}

impl PlqTerm {
    pub fn new(
        block: usize,
        spans_next: bool,
        loss: ScalarLoss,
        weight: f64,
        map: DMatrix<f64>,
        offset: DVector<f64>,
    ) -> Result<Self, IpError> {
        let scalar = loss.plq_encoding().ok_or(IpError::UnsupportedLoss(loss))?;
        let copies = map.nrows();
        let encoding = scalar.replicate(copies).compose(&map, &offset).scaled(weight);
        let center = scalar_dual_center(loss) * weight;
        let mut dual_center = DVector::zeros(center.len() * copies);
        for c in 0..copies {
            dual_center.rows_mut(c * center.len(), center.len()).copy_from(&center);
        }
        Ok(Self { block, spans_next, loss, weight, map, offset, encoding, dual_center })
    }

    pub fn local_dim(&self) -> usize {
        self.map.ncols()
    }

    pub fn local(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        x.rows(self.block * n, self.local_dim()).into_owned()
    }

    pub fn value(&self, x: &DVector<f64>, n: usize) -> f64 {
        let u = &self.offset + &self.map * self.local(x, n);
        self.weight * u.iter().map(|v| self.loss.eval(*v)).sum::<f64>()
    }
}

/// A point with `H^T v < h` for the scalar encodings.
fn scalar_dual_center(loss: ScalarLoss) -> DVector<f64> {
    match loss {
        ScalarLoss::Vapnik { .. } => DVector::from_element(2, 0.5),
        ScalarLoss::HuberInsensitive { kappa, .. } => DVector::from_element(2, 0.5 * kappa),
        ScalarLoss::ElasticNet { alpha } if alpha > 0.0 && alpha < 1.0 => DVector::zeros(2),
        _ => DVector::zeros(1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedPlqProblem {
    n: usize,
    blocks: usize,
    terms: Vec<PlqTerm>,
    /// Rows `cur x_t + next x_{t+1} <= rhs`.
    inequalities: Vec<BlockRows>,
    /// Rows `cur x_t + next x_{t+1} = rhs`.
    equalities: Vec<BlockRows>,
    layout: Layout,
}

/// Offsets of each term's dual slices and each row group's multipliers.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Layout {
    pub v: Vec<usize>,
    pub l: Vec<usize>,
    pub s: Vec<usize>,
    pub e: Vec<usize>,
    pub dual_dim: usize,
    pub dual_constraints: usize,
    pub inequalities: usize,
    pub equalities: usize,
}

impl Layout {
    fn new(terms: &[PlqTerm], inequalities: &[BlockRows], equalities: &[BlockRows]) -> Self {
        let mut out = Layout::default();
        for t in terms {
            out.v.push(out.dual_dim);
            out.l.push(out.dual_constraints);
            out.dual_dim += t.encoding.dual_dim();
            out.dual_constraints += t.encoding.constraint_count();
        }
        for r in inequalities {
            out.s.push(out.inequalities);
            out.inequalities += r.len();
        }
        for r in equalities {
            out.e.push(out.equalities);
            out.equalities += r.len();
        }
        out
    }
}

/// Dense form of a [`ConstrainedPlqProblem`], for checks on small instances.
#[derive(Debug, Clone)]
pub struct DensePlq {
    pub b: DVector<f64>,
    pub bmat: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub hmat: DMatrix<f64>,
    pub h: DVector<f64>,
    pub dmat: DMatrix<f64>,
    pub d: DVector<f64>,
    pub emat: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl ConstrainedPlqProblem {
    pub fn new(
        n: usize,
        blocks: usize,
        terms: Vec<PlqTerm>,
        inequalities: Vec<BlockRows>,
        equalities: Vec<BlockRows>,
    ) -> Result<Self, IpError> {
        let fits = |block: usize, spans: bool| block + usize::from(spans) < blocks;
        for t in &terms {
            if !fits(t.block, t.spans_next) || t.local_dim() != n * (1 + usize::from(t.spans_next)) {
                return Err(IpError::InvalidProblem(format!("term at block {} does not fit", t.block)));
            }
        }
        for rows in inequalities.iter().chain(&equalities) {
            let ok = fits(rows.block, rows.next.is_some())
                && rows.cur.ncols() == n
                && rows.cur.nrows() == rows.rhs.len()
                && rows.next.as_ref().is_none_or(|m| m.ncols() == n && m.nrows() == rows.rhs.len());
            if !ok {
                return Err(IpError::InvalidProblem(format!("constraint rows at block {} do not fit", rows.block)));
            }
        }
        let layout = Layout::new(&terms, &inequalities, &equalities);
        Ok(Self { n, blocks, terms, inequalities, equalities, layout })
    }

    pub fn terms(&self) -> &[PlqTerm] {
        &self.terms
    }

    pub fn inequalities(&self) -> &[BlockRows] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[BlockRows] {
        &self.equalities
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn dim(&self) -> usize {
        self.n * self.blocks
    }

    pub fn dual_dim(&self) -> usize {
        self.layout.dual_dim
    }

    pub fn dual_constraint_count(&self) -> usize {
        self.layout.dual_constraints
    }

    pub fn inequality_count(&self) -> usize {
        self.layout.inequalities
    }

    pub fn equality_count(&self) -> usize {
        self.layout.equalities
    }

    /// `rho(x)` from the closed-form losses.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.value(x, self.n)).sum()
    }

    /// Largest violation of the inequality and equality rows.
    pub fn infeasibility(&self, x: &DVector<f64>) -> f64 {
        let ineq = self
            .inequalities
            .iter()
            .map(|r| (r.apply(x, self.n) - &r.rhs).max().max(0.0))
            .fold(0.0, f64::max);
        let eq = self.equalities.iter().map(|r| (r.apply(x, self.n) - &r.rhs).amax()).fold(0.0, f64::max);
        ineq.max(eq)
    }

    pub fn to_dense(&self) -> DensePlq {
        let n = self.n;
        let dim = self.dim();
        let k = self.dual_dim();
        let l = self.dual_constraint_count();
        let mut out = DensePlq {
            b: DVector::zeros(k),
            bmat: DMatrix::zeros(k, dim),
            m: DMatrix::zeros(k, k),
            hmat: DMatrix::zeros(k, l),
            h: DVector::zeros(l),
            dmat: DMatrix::zeros(dim, self.inequality_count()),
            d: DVector::zeros(self.inequality_count()),
            emat: DMatrix::zeros(dim, self.equality_count()),
            e: DVector::zeros(self.equality_count()),
        };
        let (mut ko, mut lo) = (0, 0);
        for t in &self.terms {
            let enc = &t.encoding;
            let (tk, tl) = (enc.dual_dim(), enc.constraint_count());
            out.b.rows_mut(ko, tk).copy_from(&enc.b);
            out.bmat.view_mut((ko, t.block * n), (tk, t.local_dim())).copy_from(&enc.bmat);
            out.m.view_mut((ko, ko), (tk, tk)).copy_from(&enc.m);
            out.hmat.view_mut((ko, lo), (tk, tl)).copy_from(&enc.hmat);
            out.h.rows_mut(lo, tl).copy_from(&enc.h);
            ko += tk;
            lo += tl;
        }
        let fill = |mat: &mut DMatrix<f64>, rhs: &mut DVector<f64>, rows: &[BlockRows]| {
            let mut off = 0;
            for r in rows {
                let len = r.len();
                mat.view_mut((r.block * n, off), (n, len)).copy_from(&r.cur.transpose());
                if let Some(next) = &r.next {
                    mat.view_mut(((r.block + 1) * n, off), (n, len)).copy_from(&next.transpose());
                }
                rhs.rows_mut(off, len).copy_from(&r.rhs);
                off += len;
            }
        };
        fill(&mut out.dmat, &mut out.d, &self.inequalities);
        fill(&mut out.emat, &mut out.e, &self.equalities);
        out
    }
}

/// Builds the PLQ form of a smoothing problem: one term per measurement
/// block (loss `V` on `W_R (y_t - C_t x_t)`) and per process block (loss
/// `gamma J` on `W_Q (z - A x)`), the null-space equality rows of singular
/// covariances, and block rows for the constraint set.
pub fn smoother_to_plq(p: &SmootherProblem) -> Result<ConstrainedPlqProblem, IpError> {
    let sys = p.sys();
    let n = sys.state_dim();
    let m = sys.meas_dim();
    let horizon = sys.horizon();
    let mut terms = Vec::with_capacity(2 * horizon + 1);

    for (j, f) in p.q_factors().iter().enumerate() {
        if f.rank == 0 {
            continue;
        }
        let w = &f.sqrt_pinv;
        let offset = w * sys.z.rows(j * n, n);
        let term = if j == 0 {
            PlqTerm::new(0, false, p.process_loss(), p.gamma(), -w, offset)?
        } else {
            let t = j - 1;
            let mut map = DMatrix::zeros(n, 2 * n);
            map.view_mut((0, 0), (n, n)).copy_from(&(w * &sys.a[t]));
            map.view_mut((0, n), (n, n)).copy_from(&(-w));
            PlqTerm::new(t, true, p.process_loss(), p.gamma(), map, offset)?
        };
        terms.push(term);
    }
    for (t, f) in p.r_factors().iter().enumerate() {
        if f.sqrt_pinv.iter().all(|v| *v == 0.0) {
            continue;
        }
        let w = &f.sqrt_pinv;
        let offset = w * sys.y.rows(t * m, m);
        terms.push(PlqTerm::new(t + 1, false, p.measurement_loss(), 1.0, -(w * &sys.c[t]), offset)?);
    }

    let (inequalities, extra_eq) = constraint_rows(p.constraints(), n, horizon + 1)?;
    let mut equalities: Vec<BlockRows> = p.equality_rows().to_vec();
    equalities.extend(extra_eq);
    ConstrainedPlqProblem::new(n, horizon + 1, terms, inequalities, equalities)
}

type RowSets = (Vec<BlockRows>, Vec<BlockRows>);

fn constraint_rows(set: &ConstraintSet, n: usize, blocks: usize) -> Result<RowSets, IpError> {
    match set {
        ConstraintSet::Unconstrained => Ok((Vec::new(), Vec::new())),
        ConstraintSet::Box { lo, hi } => Ok((box_rows(lo, hi, n, blocks), Vec::new())),
        ConstraintSet::BallInf { tau } => {
            let dim = n * blocks;
            let lo = DVector::from_element(dim, -tau);
            let hi = DVector::from_element(dim, *tau);
            Ok((box_rows(&lo, &hi, n, blocks), Vec::new()))
        }
        ConstraintSet::Ball2 { .. } | ConstraintSet::Ball1 { .. } => {
            Err(IpError::UnsupportedConstraint(format!("{set:?} is not a polyhedron in block form")))
        }
        ConstraintSet::Polyhedral { dmat, d, equality } => {
            let ineq = columns_to_rows(dmat, d, n, blocks)?;
            let eq = match equality {
                Some((e, rhs)) => columns_to_rows(e, rhs, n, blocks)?,
                None => Vec::new(),
            };
            Ok((ineq, eq))
        }
    }
}

fn box_rows(lo: &DVector<f64>, hi: &DVector<f64>, n: usize, blocks: usize) -> Vec<BlockRows> {
    let mut out = Vec::new();
    for t in 0..blocks {
        let mut coef: Vec<(usize, f64, f64)> = Vec::new();
        for j in 0..n {
            let i = t * n + j;
            if hi[i].is_finite() {
                coef.push((j, 1.0, hi[i]));
            }
            if lo[i].is_finite() {
                coef.push((j, -1.0, -lo[i]));
            }
        }
        if coef.is_empty() {
            continue;
        }
        let mut cur = DMatrix::zeros(coef.len(), n);
        let mut rhs = DVector::zeros(coef.len());
        for (row, (j, sign, bound)) in coef.into_iter().enumerate() {
            cur[(row, j)] = sign;
            rhs[row] = bound;
        }
        out.push(BlockRows { block: t, cur, next: None, rhs });
    }
    out
}

fn columns_to_rows(mat: &DMatrix<f64>, rhs: &DVector<f64>, n: usize, blocks: usize) -> Result<Vec<BlockRows>, IpError> {
    let mut out = Vec::new();
    for col in 0..mat.ncols() {
        let column = mat.column(col);
        let touched: Vec<usize> =
            (0..blocks).filter(|&t| column.rows(t * n, n).iter().any(|v| *v != 0.0)).collect();
        let first = touched.first().copied().unwrap_or(0);
        let last = touched.last().copied().unwrap_or(0);
        if last > first + 1 {
            return Err(IpError::UnsupportedConstraint(format!(
                "constraint column {col} couples blocks {first} and {last}"
            )));
        }
        let row = |t: usize| DMatrix::from_row_slice(1, n, column.rows(t * n, n).as_slice());
        let cur = row(first);
        let next = (last == first + 1).then(|| row(last));
        out.push(BlockRows { block: first, cur, next, rhs: DVector::from_element(1, rhs[col]) });
    }
    Ok(out)
}
