//! Scalars, exact rationals, dense linear algebra, polynomials and linear
//! arithmetic circuits.

pub mod circuit;
pub mod linalg;
pub mod poly;
pub mod rational;

pub use circuit::{CircuitBuilder, Gate, LinCircuit};
pub use linalg::Matrix;
pub use poly::{integrate_poly_1d, Polynomial};
pub use rational::Rational;
