//! Numerical laboratory for the prime Diophantine inequality
//! `|λ₁p₁² + λ₂p₂² + λ₃p₃² + λ₄p₄^k − ω| ≤ (max pⱼ)^{−(7−6k)/(14k)+ε}`.
//!
//! The crate evaluates every computable object of the Davenport–Heilbronn
//! argument for this inequality (sieve weights, exponential sums, the Fejér
//! kernel pair, arcs, convergents, the exponent program) and searches for
//! solutions directly.

pub mod arcs;
pub mod dd;
pub mod error;
pub mod exact;
pub mod exponent_opt;
pub mod model;
pub mod oscillatory;
pub mod prime_tables;
pub mod quadrature;
pub mod rational;
pub mod search;
pub mod sieve_weight;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
