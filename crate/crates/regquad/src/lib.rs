//! Minimization of regularized quadratics
//!
//! ```text
//!     f(x) = 1/2 x'Ax - b'x + (s/p) ||x||^p ,    A >= 0, s > 0, p >= 2,
//! ```
//!
//! together with the machinery needed to study how hard such problems are
//! for first-order methods:
//!
//! * [`model`] - problem data in spectral form and the counted first-order
//!   oracle;
//! * [`solvers`] - gradient descent with the theoretical step size, an
//!   adaptive backtracking variant, a composite (proximal-style) method, a
//!   Krylov subspace solver and a high-accuracy direct solver;
//! * [`instances`] - generators for worst-case and randomized instances,
//!   including the Chebyshev-spectrum families that make first-order
//!   methods provably slow;
//! * [`resist`] - a resisting (adversarial) oracle that rotates the
//!   instance away from any method that leaves the Krylov subspace of its
//!   own query history;
//! * [`bounds`] - evaluators for the matching upper and lower complexity
//!   envelopes, used to sandwich measured traces in experiments.

pub mod bounds;
pub mod error;
pub mod instances;
pub mod model;
pub mod resist;
pub mod solvers;

pub use error::{Error, Result};
