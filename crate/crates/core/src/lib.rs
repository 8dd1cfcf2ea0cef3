//! Supercongruences for harmonic-type sums over compositions modulo prime powers.
//!
//! The crate evaluates the sums directly (convolution and enumeration),
//! produces closed forms in terms of Bernoulli-number monomials, and checks
//! the two against each other over parameter grids.

pub mod bernoulli;
pub mod budget;
pub mod closedforms;
pub mod directsums;
pub mod error;
pub mod modarith;
pub mod monomial;
pub mod nestedsums;
pub mod verifier;

pub use budget::Budget;
pub use error::{Error, Result};
pub use modarith::{PrimePowerModulus, Rational, Residue};
pub use monomial::BetaMonomial;
