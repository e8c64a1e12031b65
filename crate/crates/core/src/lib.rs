//! Numerical laboratory for sequential (non-autonomous) compositions of
//! intermittent interval maps with a neutral fixed point at 0.
//!
//! The map family is
//!
//! ```text
//! T_b(x) = x + (3^b / 2^(1+b)) x^(1+b)   for 0 <= x <= 2/3
//! T_b(x) = 3x - 2                        for 2/3 <= x <= 1
//! ```
//!
//! with exponents 0 <= b <= alpha < 1, read on the circle S^1 = [0,1) so the
//! map is continuous. The crate provides:
//!
//! * exact map evaluation, branch inverses and preimage ladders ([`map`]);
//! * densities with an x^(-alpha) singularity stored in regularized
//!   h(x) = x^alpha f(x) coordinates on a power-graded mesh, with closed-form
//!   quadrature ([`density`]);
//! * the transfer (Perron-Frobenius) operator as a grid collocation engine,
//!   an Ulam matrix backend, an exact preimage-tree oracle, the averaging
//!   perturbation and its kernel ([`transfer`]);
//! * membership tests for the invariant cones and their explicit
//!   constants ([`cones`]);
//! * scripted experiments measuring the polynomial loss-of-memory rate
//!   n^(1-1/alpha) (log n)^(1/alpha) and related asymptotics ([`experiments`]);
//! * CSV/JSON/SVG emission helpers for the CLI ([`report`]).

pub mod cones;
pub mod density;
pub mod error;
pub mod experiments;
pub mod map;
pub mod report;
pub mod transfer;

pub use error::{PmError, Result};
