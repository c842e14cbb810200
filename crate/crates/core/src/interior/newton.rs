use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::kkt::{kkt_residual, KktState};
use super::{ConstrainedPlqProblem, IpError};
use crate::blocktridiag::{self, BlockTridiag};
use crate::statespace::BlockRows;

/// Added to a term's reduced dual block when it fails to factor, which can
/// happen for encodings with a singular `M` once the multipliers degenerate.
const DUAL_REGULARIZATION: f64 = 1e-10;

/// Per-term pieces kept for back substitution: `dv = tinv_g + tinv_b dx_loc`.
struct TermSolve {
    tinv_b: DMatrix<f64>,
    tinv_g: DVector<f64>,
}

/// `[cur next]` as one matrix over the local state.
fn local_rows(rows: &BlockRows) -> DMatrix<f64> {
    match &rows.next {
        None => rows.cur.clone(),
        Some(next) => {
            let (len, n) = rows.cur.shape();
            let mut out = DMatrix::zeros(len, 2 * n);
            out.view_mut((0, 0), (len, n)).copy_from(&rows.cur);
            out.view_mut((0, n), (len, n)).copy_from(next);
            out
        }
    }
}

fn add_local(phi: &mut BlockTridiag, block: usize, n: usize, local: &DMatrix<f64>) {
    phi.diag[block] += local.view((0, 0), (n, n));
    if local.nrows() > n {
        phi.diag[block + 1] += local.view((n, n), (n, n));
        phi.sub[block] += local.view((n, 0), (n, n));
    }
}

/// Newton direction for `F_mu = 0` at `st`.
///
/// The dual, slack and multiplier blocks are eliminated term by term, which
/// leaves a block-tridiagonal system in `x`, or a block-tridiagonal saddle
/// system in `(x, lambda)` when there are equality rows.
pub fn newton_direction(p: &ConstrainedPlqProblem, st: &KktState, mu: f64) -> Result<KktState, IpError> {
    let n = p.state_dim();
    let blocks = p.blocks();
    let lay = p.layout();
    let res = kkt_residual(p, st, mu);
    let mut phi = BlockTridiag::new(vec![DMatrix::zeros(n, n); blocks], vec![DMatrix::zeros(n, n); blocks - 1]);
    let mut rhs = -&res.f1;

    let mut solves = Vec::with_capacity(p.terms().len());
    for (i, term) in p.terms().iter().enumerate() {
        let enc = &term.encoding;
        let (k, l) = (enc.dual_dim(), enc.constraint_count());
        let (vo, lo) = (lay.v[i], lay.l[i]);
        let w = st.w.rows(lo, l);
        let r = st.r.rows(lo, l);
        let ratio = w.component_div(&r);
        let mut t = enc.m.clone();
        let mut h_scaled = enc.hmat.clone();
        for (j, mut col) in h_scaled.column_iter_mut().enumerate() {
            col *= ratio[j];
        }
        t.gemm(1.0, &h_scaled, &enc.hmat.transpose(), 1.0);
        let chol = match Cholesky::new(t.clone()) {
            Some(c) => c,
            None => Cholesky::new(t + DMatrix::identity(k, k) * DUAL_REGULARIZATION)
                .ok_or(IpError::SingularKkt { t: term.block })?,
        };
        let inner = (res.f6.rows(lo, l) - w.component_mul(&res.f4.rows(lo, l))).component_div(&r);
        let g = -res.f2.rows(vo, k) + &enc.hmat * inner;
        let tinv_b = chol.solve(&enc.bmat);
        let tinv_g = chol.solve(&g);
        add_local(&mut phi, term.block, n, &(enc.bmat.transpose() * &tinv_b));
        let mut rl = rhs.rows_mut(term.block * n, term.local_dim());
        rl.gemv_tr(-1.0, &enc.bmat, &tinv_g, 1.0);
        solves.push(TermSolve { tinv_b, tinv_g });
    }

    let mut ineq_rows = Vec::with_capacity(p.inequalities().len());
    for (g, rows) in p.inequalities().iter().enumerate() {
        let (so, len) = (lay.s[g], rows.len());
        let s = st.s.rows(so, len);
        let om = st.omega.rows(so, len);
        let loc = local_rows(rows);
        let mut scaled = loc.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= om[j] / s[j];
        }
        add_local(&mut phi, rows.block, n, &(loc.transpose() * scaled));
        let y = (om.component_mul(&res.f3.rows(so, len)) - res.f5.rows(so, len)).component_div(&s);
        let mut rl = rhs.rows_mut(rows.block * n, loc.ncols());
        rl.gemv_tr(-1.0, &loc, &y, 1.0);
        ineq_rows.push(loc);
    }

    let (dx, dlambda) = if p.equalities().is_empty() {
        let f = blocktridiag::factor_with_tol(&phi, 0.0)?;
        (f.solve(&rhs), DVector::zeros(0))
    } else {
        saddle_solve(p, &phi, &rhs, &(-&res.f7))?
    };

    let mut d = KktState::zeros(p);
    for (i, term) in p.terms().iter().enumerate() {
        let enc = &term.encoding;
        let (k, l) = (enc.dual_dim(), enc.constraint_count());
        let (vo, lo) = (lay.v[i], lay.l[i]);
        let dv = &solves[i].tinv_g + &solves[i].tinv_b * dx.rows(term.block * n, term.local_dim());
        let ht_dv = enc.hmat.transpose() * &dv;
        let f4 = res.f4.rows(lo, l);
        let w = st.w.rows(lo, l);
        d.r.rows_mut(lo, l).copy_from(&(-f4 - &ht_dv));
        let dw = (-res.f6.rows(lo, l) + w.component_mul(&f4) + w.component_mul(&ht_dv)).component_div(&st.r.rows(lo, l));
        d.w.rows_mut(lo, l).copy_from(&dw);
        d.v.rows_mut(vo, k).copy_from(&dv);
    }
    for (g, rows) in p.inequalities().iter().enumerate() {
        let (so, len) = (lay.s[g], rows.len());
        let rdx = &ineq_rows[g] * dx.rows(rows.block * n, ineq_rows[g].ncols());
        let f3 = res.f3.rows(so, len);
        let om = st.omega.rows(so, len);
        d.s.rows_mut(so, len).copy_from(&(-f3 - &rdx));
        let dom = (-res.f5.rows(so, len) + om.component_mul(&f3) + om.component_mul(&rdx)).component_div(&st.s.rows(so, len));
        d.omega.rows_mut(so, len).copy_from(&dom);
    }
    d.x = dx;
    d.lambda = dlambda;
    Ok(d)
}

/// Largest `alpha <= 1` keeping every positive variable above
/// `(1 - fraction)` of its current value.
pub fn step_to_boundary(st: &KktState, d: &KktState, fraction: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (z, dz) in [(&st.s, &d.s), (&st.r, &d.r), (&st.omega, &d.omega), (&st.w, &d.w)] {
        for (zi, dzi) in z.iter().zip(dz.iter()) {
            if *dzi < 0.0 {
                alpha = alpha.min(-fraction * zi / dzi);
            }
        }
    }
    alpha
}

/// Solves `[Phi E; E^T 0] [dx; dlambda] = [rx; rl]` by block LU over groups
/// `(lambda_j, x_j)`, where `lambda_j` collects the equality rows whose last
/// touched block is `j`.
fn saddle_solve(
    p: &ConstrainedPlqProblem,
    phi: &BlockTridiag,
    rx: &DVector<f64>,
    rl: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), IpError> {
    let n = p.state_dim();
    let blocks = p.blocks();
    let lay = p.layout();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); blocks];
    for (g, rows) in p.equalities().iter().enumerate() {
        groups[rows.block + usize::from(rows.next.is_some())].push(g);
    }
    let mult: Vec<usize> = groups.iter().map(|gs| gs.iter().map(|&g| p.equalities()[g].len()).sum()).collect();

    // Diagonal and sub-diagonal blocks of the permuted saddle matrix, and the
    // right-hand side per group.
    let mut diag = Vec::with_capacity(blocks);
    let mut sub = Vec::with_capacity(blocks);
    let mut rhs = Vec::with_capacity(blocks);
    for j in 0..blocks {
        let k = mult[j];
        let mut dj = DMatrix::zeros(k + n, k + n);
        let mut rj = DVector::zeros(k + n);
        let mut lj = if j > 0 { DMatrix::zeros(k + n, mult[j - 1] + n) } else { DMatrix::zeros(0, 0) };
        let mut off = 0;
        for &g in &groups[j] {
            let rows = &p.equalities()[g];
            let len = rows.len();
            let own = rows.next.as_ref().unwrap_or(&rows.cur);
            dj.view_mut((off, k), (len, n)).copy_from(own);
            dj.view_mut((k, off), (n, len)).copy_from(&own.transpose());
            if rows.next.is_some() {
                lj.view_mut((off, mult[j - 1]), (len, n)).copy_from(&rows.cur);
            }
            rj.rows_mut(off, len).copy_from(&rl.rows(lay.e[g], len));
            off += len;
        }
        dj.view_mut((k, k), (n, n)).copy_from(&phi.diag[j]);
        rj.rows_mut(k, n).copy_from(&rx.rows(j * n, n));
        if j > 0 {
            lj.view_mut((k, mult[j - 1]), (n, n)).copy_from(&phi.sub[j - 1]);
        }
        diag.push(dj);
        sub.push(lj);
        rhs.push(rj);
    }

    let mut pivots: Vec<LU<f64, Dyn, Dyn>> = Vec::with_capacity(blocks);
    for j in 0..blocks {
        if j > 0 {
            let prev = &pivots[j - 1];
            let x = prev.solve(&sub[j].transpose()).ok_or(IpError::SingularKkt { t: j - 1 })?;
            diag[j] -= &sub[j] * x;
            let y = prev.solve(&rhs[j - 1]).ok_or(IpError::SingularKkt { t: j - 1 })?;
            rhs[j] -= &sub[j] * y;
        }
        // Near the solution these blocks mix multiplier rows of size 1e7 with
        // curvature of size 1e-9, so only a vanishing pivot counts as singular.
        let lu = LU::new(diag[j].clone());
        if lu.u().diagonal().iter().any(|u| !u.is_finite() || u.abs() < f64::MIN_POSITIVE) {
            return Err(IpError::SingularKkt { t: j });
        }
        pivots.push(lu);
    }
    let mut sol: Vec<DVector<f64>> = vec![DVector::zeros(0); blocks];
    for j in (0..blocks).rev() {
        let mut r = rhs[j].clone();
        if j + 1 < blocks {
            r -= sub[j + 1].transpose() * &sol[j + 1];
        }
        sol[j] = pivots[j].solve(&r).ok_or(IpError::SingularKkt { t: j })?;
    }

    let mut dx = DVector::zeros(p.dim());
    let mut dl = DVector::zeros(p.equality_count());
    for j in 0..blocks {
        let k = mult[j];
        dx.rows_mut(j * n, n).copy_from(&sol[j].rows(k, n));
        let mut off = 0;
        for &g in &groups[j] {
            let len = p.equalities()[g].len();
            dl.rows_mut(lay.e[g], len).copy_from(&sol[j].rows(off, len));
            off += len;
        }
    }
    Ok((dx, dl))
}
