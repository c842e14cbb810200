//! Generalized Kalman smoothing.
//!
//! Solves smoothing problems of the form
//!
//! ```text
//! min_x  V(R^{-1/2}(y - Cx)) + gamma * J(Q^{-1/2}(z - Ax)),   x in X
//! ```
//!
//! over the stacked state `x = (x_0, ..., x_N)` of a linear time-varying
//! state-space model. The crate is organized bottom-up:
//!
//! - [`statespace`]: model description, stacking into block operators,
//!   correlated-noise and singular-covariance reformulations, simulation.
//! - [`blocktridiag`]: block-tridiagonal normal equations with the
//!   Rauch-Tung-Striebel and Mayne-Fraser elimination schemes.
//! - [`plq`]: piecewise linear-quadratic penalties, scalar losses, proximal
//!   operators and projections.
//! - [`firstorder`]: subgradient, proximal gradient, FISTA, ADMM and
//!   Chambolle-Pock solvers.
//! - [`interior`]: an interior-point solver for constrained PLQ smoothing
//!   that keeps the block-tridiagonal structure in every Newton step.
//!
//! The crate is `no_std` compatible (with `alloc`) when the default `std`
//! feature is disabled; wall-clock timings in solver reports are then zero.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod blocktridiag;
pub mod firstorder;
pub mod interior;
pub mod linalg;
pub mod plq;
pub mod statespace;

mod clock;

pub use nalgebra::{DMatrix, DVector};

pub use blocktridiag::{BlockTridiag, BtdError, BtdFactorization};
pub use firstorder::{SmootherProblem, SolverError, SolverReport};
pub use interior::{ConstrainedPlqProblem, IpError, IpOptions};
pub use plq::{ConstraintSet, PlqPenalty, ScalarLoss};
pub use statespace::{LtvModel, StackedSystem};
