//! Desk-scale laboratory for stochastic viscous scalar conservation laws
//! on the torus `[-pi, pi]^d`, driven by white noise on finitely many
//! Fourier modes:
//!
//! ```text
//! du_t + div A(u_t) dt = nu * Laplace(u_t) dt + d eta_t
//! ```
//!
//! The crate provides exact integer-lattice decision procedures for the
//! reachability condition coupling the flux `A` with the forced mode set,
//! a dealiased pseudo-spectral integrator with tangent/adjoint flows,
//! Malliavin Gram matrices on tracked mode spans, and a suite of named
//! ergodicity experiments with reproducible statistics.

pub mod dynamics;
pub mod ergolab;
pub mod exact;
pub mod field;
pub mod kvec;
pub mod lattice;
pub mod malliavin;
pub mod rng;
pub mod stats;

pub use exact::ExactScalar;
pub use kvec::{BasisIndex, KVec, Parity};
