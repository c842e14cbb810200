use nalgebra::DVector;

use super::ConstrainedPlqProblem;
use crate::statespace::BlockRows;

/// Primal-dual iterate. `v`, `r`, `w` are stacked per term, `s`, `omega`
/// per inequality row and `lambda` per equality row.
#[derive(Debug, Clone, PartialEq)]
pub struct KktState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub s: DVector<f64>,
    pub r: DVector<f64>,
    pub omega: DVector<f64>,
    pub w: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl KktState {
    pub fn zeros(p: &ConstrainedPlqProblem) -> Self {
        Self {
            x: DVector::zeros(p.dim()),
            v: DVector::zeros(p.dual_dim()),
            s: DVector::zeros(p.inequality_count()),
            r: DVector::zeros(p.dual_constraint_count()),
            omega: DVector::zeros(p.inequality_count()),
            w: DVector::zeros(p.dual_constraint_count()),
            lambda: DVector::zeros(p.equality_count()),
        }
    }

    /// `x = 0`, slacks `s = max(d - D^T x, 1)`, multipliers one, `v` at the
    /// center of each dual set and `r = h - H^T v`.
    pub fn initial(p: &ConstrainedPlqProblem) -> Self {
        let mut st = Self::zeros(p);
        let lay = p.layout();
        for (g, rows) in p.inequalities().iter().enumerate() {
            let slack = &rows.rhs - rows.apply(&st.x, p.state_dim());
            st.s.rows_mut(lay.s[g], rows.len()).copy_from(&slack.map(|v| v.max(1.0)));
        }
        st.omega.fill(1.0);
        st.w.fill(1.0);
        for (i, term) in p.terms().iter().enumerate() {
            let enc = &term.encoding;
            st.v.rows_mut(lay.v[i], enc.dual_dim()).copy_from(&term.dual_center);
            let r = &enc.h - enc.hmat.transpose() * &term.dual_center;
            st.r.rows_mut(lay.l[i], enc.constraint_count()).copy_from(&r);
        }
        st
    }

    /// `omega^T s + w^T r`.
    pub fn complementarity(&self) -> f64 {
        self.omega.dot(&self.s) + self.w.dot(&self.r)
    }

    pub fn pair_count(&self) -> usize {
        self.s.len() + self.r.len()
    }

    /// Average complementarity, zero without inequality pairs.
    pub fn average_complementarity(&self) -> f64 {
        match self.pair_count() {
            0 => 0.0,
            k => self.complementarity() / k as f64,
        }
    }

    /// `self + alpha * d`.
    pub fn stepped(&self, d: &KktState, alpha: f64) -> KktState {
        KktState {
            x: &self.x + &d.x * alpha,
            v: &self.v + &d.v * alpha,
            s: &self.s + &d.s * alpha,
            r: &self.r + &d.r * alpha,
            omega: &self.omega + &d.omega * alpha,
            w: &self.w + &d.w * alpha,
            lambda: &self.lambda + &d.lambda * alpha,
        }
    }

    pub fn is_strictly_positive(&self) -> bool {
        [&self.s, &self.r, &self.omega, &self.w].iter().all(|v| v.iter().all(|x| *x > 0.0))
    }
}

/// The seven residual blocks of the relaxed KKT system `F_mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    /// `D omega + B^T v + E lambda`.
    pub f1: DVector<f64>,
    /// `M v + H w - B x - b`.
    pub f2: DVector<f64>,
    /// `D^T x - d + s`.
    pub f3: DVector<f64>,
    /// `H^T v - h + r`.
    pub f4: DVector<f64>,
    /// `omega * s - mu`.
    pub f5: DVector<f64>,
    /// `w * r - mu`.
    pub f6: DVector<f64>,
    /// `E^T x - e`.
    pub f7: DVector<f64>,
}

impl KktResidual {
    fn blocks(&self) -> [&DVector<f64>; 7] {
        [&self.f1, &self.f2, &self.f3, &self.f4, &self.f5, &self.f6, &self.f7]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::sqrt(self.blocks().iter().map(|b| b.norm_squared()).sum())
    }

    pub fn norm_inf(&self) -> f64 {
        self.blocks().iter().map(|b| b.amax()).fold(0.0, f64::max)
    }
}

/// Adds `rows^T y` into the block slots of `out`.
pub(crate) fn add_rows_t(out: &mut DVector<f64>, rows: &BlockRows, y: &DVector<f64>, n: usize) {
    let t = rows.block;
    let mut cur = out.rows_mut(t * n, n);
    cur.gemv_tr(1.0, &rows.cur, y, 1.0);
    if let Some(next) = &rows.next {
        let mut nb = out.rows_mut((t + 1) * n, n);
        nb.gemv_tr(1.0, next, y, 1.0);
    }
}

pub fn kkt_residual(p: &ConstrainedPlqProblem, st: &KktState, mu: f64) -> KktResidual {
    let n = p.state_dim();
    let lay = p.layout();
    let mut f1 = DVector::zeros(p.dim());
    let mut f2 = DVector::zeros(p.dual_dim());
    let mut f4 = DVector::zeros(p.dual_constraint_count());
    for (i, term) in p.terms().iter().enumerate() {
        let enc = &term.encoding;
        let (k, l) = (enc.dual_dim(), enc.constraint_count());
        let v = st.v.rows(lay.v[i], k);
        let w = st.w.rows(lay.l[i], l);
        let xl = st.x.rows(term.block * n, term.local_dim());
        let mut f1_loc = f1.rows_mut(term.block * n, term.local_dim());
        f1_loc.gemv_tr(1.0, &enc.bmat, &v, 1.0);
        let mut f2_i = f2.rows_mut(lay.v[i], k);
        f2_i.copy_from(&(&enc.m * v + &enc.hmat * w - &enc.bmat * xl - &enc.b));
        let mut f4_i = f4.rows_mut(lay.l[i], l);
        f4_i.copy_from(&(enc.hmat.transpose() * v - &enc.h + st.r.rows(lay.l[i], l)));
    }
    let mut f3 = DVector::zeros(p.inequality_count());
    for (g, rows) in p.inequalities().iter().enumerate() {
        let om = st.omega.rows(lay.s[g], rows.len()).into_owned();
        add_rows_t(&mut f1, rows, &om, n);
        let val = rows.apply(&st.x, n) - &rows.rhs + st.s.rows(lay.s[g], rows.len());
        f3.rows_mut(lay.s[g], rows.len()).copy_from(&val);
    }
    let mut f7 = DVector::zeros(p.equality_count());
    for (g, rows) in p.equalities().iter().enumerate() {
        let lam = st.lambda.rows(lay.e[g], rows.len()).into_owned();
        add_rows_t(&mut f1, rows, &lam, n);
        f7.rows_mut(lay.e[g], rows.len()).copy_from(&(rows.apply(&st.x, n) - &rows.rhs));
    }
    let f5 = st.omega.component_mul(&st.s).add_scalar(-mu);
    let f6 = st.w.component_mul(&st.r).add_scalar(-mu);
    KktResidual { f1, f2, f3, f4, f5, f6, f7 }
}
