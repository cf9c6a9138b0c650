//! Approximate Kakutani fixed points from separation oracles.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: rationals, polynomials, linear arithmetic circuits.
//! * [`bodies`]: declarative convex bodies compiled to separation oracles.
//! * [`ellipsoid`]: central-cut ellipsoid feasibility, optimisation and
//!   approximate projection.
//! * [`sperner`]: Kuhn triangulation and panchromatic-simplex search.
//! * [`kakutani`]: the fixed-point solver and its violation certificates.
//! * [`games`], [`walras`]: concave games and exchange economies reduced to
//!   Kakutani instances.
//! * [`reductions`]: Brouwer and generalized-circuit instance constructors.
//! * [`berge`]: numerical audits of maximum-theorem style bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod berge;
pub mod bodies;
pub mod ellipsoid;
pub mod error;
pub mod json;
pub mod kakutani;
pub mod numerics;
pub mod reductions;
pub mod games;
pub mod walras;
pub mod sperner;

pub use error::{Error, Result};
