//! Named scalar losses with closed-form values, subgradients, conjugates and
//! proximity operators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{PlqError, PlqPenalty};
use crate::linalg::{abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarLoss {
    /// `x^2 / 2`.
    Quadratic,
    /// `|x|`.
    L1,
    /// Quadratic on `[-kappa, kappa]`, linear outside.
    Huber { kappa: f64 },
    /// `max(0, |x| - eps)`.
    Vapnik { eps: f64 },
    /// Zero on `[-eps, eps]`, then Huber with parameter `kappa`.
    HuberInsensitive { kappa: f64, eps: f64 },
    /// `alpha |x| + (1 - alpha) x^2 / 2`.
    ElasticNet { alpha: f64 },
    /// Euclidean norm of a whole block (group lasso).
    GroupL2,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn soft(y: f64, thresh: f64) -> f64 {
    sign(y) * (abs(y) - thresh).max(0.0)
}

impl ScalarLoss {
    pub fn validate(&self) -> Result<(), PlqError> {
        let ok = match *self {
            ScalarLoss::Huber { kappa } => kappa > 0.0 && kappa.is_finite(),
            ScalarLoss::Vapnik { eps } => eps >= 0.0 && eps.is_finite(),
            ScalarLoss::HuberInsensitive { kappa, eps } => {
                kappa > 0.0 && kappa.is_finite() && eps >= 0.0 && eps.is_finite()
            }
            ScalarLoss::ElasticNet { alpha } => (0.0..=1.0).contains(&alpha),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PlqError::InvalidParameter(format!("{self}")))
        }
    }

    /// Differentiable everywhere with a Lipschitz gradient.
    pub fn is_smooth(&self) -> bool {
        matches!(self, ScalarLoss::Quadratic | ScalarLoss::Huber { .. })
            || matches!(self, ScalarLoss::ElasticNet { alpha } if *alpha == 0.0)
    }

    /// Lipschitz constant of the derivative for smooth losses.
    pub fn curvature(&self) -> f64 {
        match self {
            ScalarLoss::Quadratic | ScalarLoss::Huber { .. } => 1.0,
            ScalarLoss::ElasticNet { alpha } => 1.0 - alpha,
            _ => f64::INFINITY,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, ScalarLoss::GroupL2)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = abs(x);
        match *self {
            ScalarLoss::Quadratic => 0.5 * x * x,
            ScalarLoss::L1 | ScalarLoss::GroupL2 => a,
            ScalarLoss::Huber { kappa } => {
                if a <= kappa {
                    0.5 * x * x
                } else {
                    kappa * a - 0.5 * kappa * kappa
                }
            }
            ScalarLoss::Vapnik { eps } => (a - eps).max(0.0),
            ScalarLoss::HuberInsensitive { kappa, eps } => {
                let d = (a - eps).max(0.0);
                if d <= kappa {
                    0.5 * d * d
                } else {
                    kappa * d - 0.5 * kappa * kappa
                }
            }
            ScalarLoss::ElasticNet { alpha } => alpha * a + (1.0 - alpha) * 0.5 * x * x,
        }
    }

    /// Loss of a whole block: the coordinate sum for separable losses, the
    /// Euclidean norm for [`ScalarLoss::GroupL2`].
    pub fn eval_block(&self, v: &DVector<f64>) -> f64 {
        match self {
            ScalarLoss::GroupL2 => v.norm(),
            _ => v.iter().map(|x| self.eval(*x)).sum(),
        }
    }

    /// `sum_i loss((W r)_i)` for a weight root `W`.
    pub fn eval_sum(&self, w: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        self.eval_block(&(w * r))
    }

    /// Derivative of a smooth loss; `None` for nonsmooth ones.
    pub fn gradient(&self, x: f64) -> Option<f64> {
        match *self {
            ScalarLoss::Quadratic => Some(x),
            ScalarLoss::Huber { kappa } => Some(x.clamp(-kappa, kappa)),
            ScalarLoss::ElasticNet { alpha } if alpha == 0.0 => Some(x),
            _ => None,
        }
    }

    /// One subgradient, choosing zero wherever zero is admissible.
    pub fn subgradient(&self, x: f64) -> f64 {
        let (lo, hi) = self.subdifferential(x);
        if lo <= 0.0 && 0.0 <= hi {
            0.0
        } else if abs(lo) < abs(hi) {
            lo
        } else {
            hi
        }
    }

    /// The subdifferential `[lo, hi]` at `x` (a point for differentiable losses).
    pub fn subdifferential(&self, x: f64) -> (f64, f64) {
        let a = abs(x);
        let s = sign(x);
        let point = |g: f64| (g, g);
        match *self {
            ScalarLoss::Quadratic => point(x),
            ScalarLoss::L1 | ScalarLoss::GroupL2 => {
                if x == 0.0 {
                    (-1.0, 1.0)
                } else {
                    point(s)
                }
            }
            ScalarLoss::Huber { kappa } => point(x.clamp(-kappa, kappa)),
            ScalarLoss::Vapnik { eps } => {
                if a < eps {
                    point(0.0)
                } else if a == eps {
                    if eps == 0.0 {
                        (-1.0, 1.0)
                    } else if x > 0.0 {
                        (0.0, 1.0)
                    } else {
                        (-1.0, 0.0)
                    }
                } else {
                    point(s)
                }
            }
            ScalarLoss::HuberInsensitive { kappa, eps } => {
                let d = (a - eps).max(0.0);
                point(s * d.min(kappa))
            }
            ScalarLoss::ElasticNet { alpha } => {
                if x == 0.0 {
                    (-alpha, alpha)
                } else {
                    point(alpha * s + (1.0 - alpha) * x)
                }
            }
        }
    }

    /// Block subgradient (the group norm uses `v / ||v||`, zero at the origin).
    pub fn subgradient_block(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ScalarLoss::GroupL2 => {
                let norm = v.norm();
                if norm > 0.0 {
                    v / norm
                } else {
                    DVector::zeros(v.len())
                }
            }
            _ => v.map(|x| self.subgradient(x)),
        }
    }

    /// Convex conjugate `sup_x {w x - loss(x)}`; `+inf` outside the domain.
    pub fn conjugate_eval(&self, w: f64) -> f64 {
        let a = abs(w);
        match *self {
            ScalarLoss::Quadratic => 0.5 * w * w,
            ScalarLoss::L1 | ScalarLoss::GroupL2 => {
                if a <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ScalarLoss::Huber { kappa } => {
                if a <= kappa {
                    0.5 * w * w
                } else {
                    f64::INFINITY
                }
            }
            ScalarLoss::Vapnik { eps } => {
                if a <= 1.0 {
                    eps * a
                } else {
                    f64::INFINITY
                }
            }
            ScalarLoss::HuberInsensitive { kappa, eps } => {
                if a <= kappa {
                    eps * a + 0.5 * w * w
                } else {
                    f64::INFINITY
                }
            }
            ScalarLoss::ElasticNet { alpha } => {
                if alpha >= 1.0 {
                    if a <= 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    let d = (a - alpha).max(0.0);
                    d * d / (2.0 * (1.0 - alpha))
                }
            }
        }
    }

    /// Conjugate of a block loss (indicator of the unit ball for the group norm).
    pub fn conjugate_block(&self, w: &DVector<f64>) -> f64 {
        match self {
            ScalarLoss::GroupL2 => {
                if w.norm() <= 1.0 + 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => w.iter().map(|x| self.conjugate_eval(*x)).sum(),
        }
    }

    /// `argmin_u eta * loss(u) + (u - y)^2 / 2`.
    pub fn prox_scalar(&self, eta: f64, y: f64) -> f64 {
        let a = abs(y);
        let s = sign(y);
        match *self {
            ScalarLoss::Quadratic => y / (1.0 + eta),
            ScalarLoss::L1 | ScalarLoss::GroupL2 => soft(y, eta),
            ScalarLoss::Huber { kappa } => {
                if a <= kappa * (1.0 + eta) {
                    y / (1.0 + eta)
                } else {
                    y - eta * kappa * s
                }
            }
            ScalarLoss::Vapnik { eps } => {
                if a <= eps {
                    y
                } else if a <= eps + eta {
                    s * eps
                } else {
                    y - eta * s
                }
            }
            ScalarLoss::HuberInsensitive { kappa, eps } => {
                if a <= eps {
                    y
                } else if a <= eps + kappa * (1.0 + eta) {
                    s * (a + eta * eps) / (1.0 + eta)
                } else {
                    y - eta * kappa * s
                }
            }
            ScalarLoss::ElasticNet { alpha } => soft(y, eta * alpha) / (1.0 + eta * (1.0 - alpha)),
        }
    }

    /// Proximity operator on a block; coordinate-wise except for the group
    /// norm, which shrinks the whole block toward zero.
    pub fn prox(&self, eta: f64, y: &DVector<f64>) -> DVector<f64> {
        match self {
            ScalarLoss::GroupL2 => {
                let norm = y.norm();
                if norm <= eta {
                    DVector::zeros(y.len())
                } else {
                    y * (1.0 - eta / norm)
                }
            }
            _ => y.map(|v| self.prox_scalar(eta, v)),
        }
    }

    /// Proximity operator of `eta * loss^*` via the Moreau identity
    /// `prox_{eta f*}(y) = y - eta prox_{f/eta}(y / eta)`.
    pub fn prox_conjugate(&self, eta: f64, y: &DVector<f64>) -> DVector<f64> {
        match self {
            // Exact forms avoid the cancellation in the identity.
            ScalarLoss::L1 => y.map(|v| v.clamp(-1.0, 1.0)),
            ScalarLoss::GroupL2 => {
                let norm = y.norm();
                if norm <= 1.0 {
                    y.clone()
                } else {
                    y / norm
                }
            }
            _ => y - self.prox(1.0 / eta, &(y / eta)) * eta,
        }
    }

    /// Scalar PLQ encoding `sup_{v in V} <v, b + B x> - v^T M v / 2` with
    /// `V = {v : H^T v <= h}`. The group norm is not scalar and has none.
    pub fn plq_encoding(&self) -> Option<PlqPenalty> {
        let m1 = |v: f64| DMatrix::from_element(1, 1, v);
        let enc = match *self {
            ScalarLoss::Quadratic => PlqPenalty::new_unchecked(
                DVector::zeros(1),
                m1(1.0),
                m1(1.0),
                DMatrix::zeros(1, 0),
                DVector::zeros(0),
            ),
            ScalarLoss::L1 => interval(1.0, 0.0),
            ScalarLoss::Huber { kappa } => interval(kappa, 1.0),
            ScalarLoss::Vapnik { eps } => deadzone(eps, 1.0, 0.0),
            ScalarLoss::HuberInsensitive { kappa, eps } => deadzone(eps, kappa, 1.0),
            ScalarLoss::ElasticNet { alpha } => {
                if alpha <= 0.0 {
                    return ScalarLoss::Quadratic.plq_encoding();
                }
                if alpha >= 1.0 {
                    return ScalarLoss::L1.plq_encoding();
                }
                // v_1 in [-alpha, alpha] carries the l1 part; v_2 is free and
                // reproduces (1 - alpha) x^2 / 2 through the sqrt(1 - alpha) row.
                PlqPenalty::new_unchecked(
                    DVector::zeros(2),
                    DMatrix::from_column_slice(2, 1, &[1.0, sqrt(1.0 - alpha)]),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
                    DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]),
                    DVector::from_vec(vec![alpha, alpha]),
                )
            }
            ScalarLoss::GroupL2 => return None,
        };
        Some(enc)
    }
}

/// `v in [-bound, bound]`, `M = curvature`.
fn interval(bound: f64, curvature: f64) -> PlqPenalty {
    PlqPenalty::new_unchecked(
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, curvature),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        DVector::from_vec(vec![bound, bound]),
    )
}

/// `v in [0, bound]^2` against `(x - eps, -x - eps)`, `M = curvature * I`.
fn deadzone(eps: f64, bound: f64, curvature: f64) -> PlqPenalty {
    PlqPenalty::new_unchecked(
        DVector::from_vec(vec![-eps, -eps]),
        DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        DMatrix::identity(2, 2) * curvature,
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
        DVector::from_vec(vec![bound, bound, 0.0, 0.0]),
    )
}

impl fmt::Display for ScalarLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarLoss::Quadratic => write!(f, "l2"),
            ScalarLoss::L1 => write!(f, "l1"),
            ScalarLoss::Huber { kappa } => write!(f, "huber:kappa={kappa}"),
            ScalarLoss::Vapnik { eps } => write!(f, "vapnik:eps={eps}"),
            ScalarLoss::HuberInsensitive { kappa, eps } => write!(f, "huber-ins:kappa={kappa},eps={eps}"),
            ScalarLoss::ElasticNet { alpha } => write!(f, "enet:alpha={alpha}"),
            ScalarLoss::GroupL2 => write!(f, "group-l2"),
        }
    }
}

fn param(params: &[(String, f64)], key: &str, default: Option<f64>, spec: &str) -> Result<f64, PlqError> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| PlqError::Parse(format!("`{spec}` needs parameter `{key}`")))
}

impl FromStr for ScalarLoss {
    type Err = PlqError;

    /// Parses `name[:key=value,...]`, e.g. `l1`, `huber:kappa=1`,
    /// `vapnik:eps=0.5`, `huber-ins:kappa=1,eps=0.5`, `enet:alpha=0.5`,
    /// `group-l2`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let spec = spec.trim();
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (spec, ""),
        };
        let mut params: alloc::vec::Vec<(String, f64)> = alloc::vec::Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| PlqError::Parse(format!("malformed parameter `{part}`")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| PlqError::Parse(format!("bad number in `{part}`")))?;
            params.push((k.trim().to_string(), value));
        }
        let loss = match name.to_ascii_lowercase().as_str() {
            "l2" | "quadratic" => ScalarLoss::Quadratic,
            "l1" => ScalarLoss::L1,
            "huber" => ScalarLoss::Huber { kappa: param(&params, "kappa", Some(1.0), spec)? },
            "vapnik" => ScalarLoss::Vapnik { eps: param(&params, "eps", None, spec)? },
            "huber-ins" | "huber-insensitive" => ScalarLoss::HuberInsensitive {
                kappa: param(&params, "kappa", Some(1.0), spec)?,
                eps: param(&params, "eps", None, spec)?,
            },
            "enet" | "elastic-net" => ScalarLoss::ElasticNet { alpha: param(&params, "alpha", None, spec)? },
            "group-l2" => ScalarLoss::GroupL2,
            _ => return Err(PlqError::Parse(format!("unknown loss `{name}`"))),
        };
        loss.validate()?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let h = ScalarLoss::Huber { kappa: 1.0 };
        assert_eq!(h.eval(0.5), 0.125);
        assert_eq!(h.eval(2.0), 1.5);
        let v = ScalarLoss::Vapnik { eps: 0.5 };
        assert_eq!(v.eval(0.3), 0.0);
        assert_eq!(v.eval(1.0), 0.5);
        assert_eq!(ScalarLoss::ElasticNet { alpha: 0.5 }.eval(2.0), 2.0);
    }

    #[test]
    fn prox_cases() {
        assert_eq!(ScalarLoss::L1.prox_scalar(1.0, 2.5), 1.5);
        assert_eq!(ScalarLoss::L1.prox_scalar(1.0, 0.5), 0.0);
        assert_eq!(ScalarLoss::Quadratic.prox_scalar(1.0, 3.0), 1.5);
        let h = ScalarLoss::Huber { kappa: 1.0 };
        assert_eq!(h.prox_scalar(2.0, 5.0), 3.0);
        assert!((h.prox_scalar(2.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conjugate_prox_cases() {
        let y = DVector::from_element(1, 2.5);
        assert_eq!(ScalarLoss::L1.prox_conjugate(1.0, &y)[0], 1.0);
        let y = DVector::from_element(1, 4.0);
        assert_eq!(ScalarLoss::Quadratic.prox_conjugate(1.0, &y)[0], 2.0);
    }

    #[test]
    fn subgradient_tie_breaks() {
        assert_eq!(ScalarLoss::L1.subgradient(0.0), 0.0);
        let h = ScalarLoss::Huber { kappa: 1.0 };
        assert_eq!(h.subgradient(2.0), 1.0);
        assert_eq!(h.subgradient(0.3), 0.3);
        assert_eq!(ScalarLoss::Vapnik { eps: 0.5 }.subgradient(0.2), 0.0);
    }

    #[test]
    fn conjugate_values() {
        assert_eq!(ScalarLoss::L1.conjugate_eval(0.5), 0.0);
        assert_eq!(ScalarLoss::L1.conjugate_eval(1.5), f64::INFINITY);
        assert_eq!(ScalarLoss::Quadratic.conjugate_eval(3.0), 4.5);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["l2", "l1", "huber:kappa=1", "vapnik:eps=0.5", "enet:alpha=0.5", "group-l2", "huber-ins:kappa=2,eps=0.1"] {
            let loss: ScalarLoss = s.parse().unwrap();
            let again: ScalarLoss = loss.to_string().parse().unwrap();
            assert_eq!(loss, again);
        }
        assert!("huber:kappa=-1".parse::<ScalarLoss>().is_err());
        assert!("cauchy".parse::<ScalarLoss>().is_err());
        assert!("enet:alpha=2".parse::<ScalarLoss>().is_err());
    }
}
