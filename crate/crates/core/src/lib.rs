//! Numerical toolkit for Schur multipliers on Schatten classes.
//!
//! The crate covers dyadic lattice geometry and finite differences
//! ([`lattice`]), Schatten norms and operator-valued `L^p` norms
//! ([`schatten`]), multiplier symbols ([`symbols`]), the Marcinkiewicz-type
//! testing conditions ([`marcinkiewicz`]), the matrix-valued trigonometric
//! polynomial engine behind transference ([`transference`]), lower-bound norm
//! estimation ([`estimator`]) and the exact-identity suites ([`verify`]).
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix `f64`.

pub mod estimator;
pub mod expr;
pub mod lattice;
pub mod marcinkiewicz;
pub mod quadrature;
pub mod random;
pub mod scalar;
pub mod schatten;
pub mod symbols;
pub mod transference;
pub mod verify;

pub use lattice::{AlphaMask, DyadicIndex, LatticeBox};
pub use scalar::{bound_shape, Cx, Exponent, Real};
pub use schatten::{LabeledMatrix, QuadratureGrid};
pub use symbols::{ContinuousSymbol, DiscreteSymbol, Symbol};
pub use transference::{DiagonalOp, MatTrigPoly};

pub type LabeledMatrix64 = schatten::LabeledMatrix<f64>;
pub type LabeledMatrix32 = schatten::LabeledMatrix<f32>;
pub type DiscreteSymbol64 = symbols::DiscreteSymbol<f64>;
pub type DiscreteSymbol32 = symbols::DiscreteSymbol<f32>;
pub type ContinuousSymbol64 = symbols::ContinuousSymbol<f64>;
pub type MatTrigPoly64 = transference::MatTrigPoly<f64>;
pub type MatTrigPoly32 = transference::MatTrigPoly<f32>;
pub type ConditionReport64 = marcinkiewicz::ConditionReport<f64>;
pub type EstimateResult64 = estimator::EstimateResult<f64>;
pub type Exponent64 = scalar::Exponent<f64>;
