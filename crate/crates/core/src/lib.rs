//! Numerical laboratory for Steinhaus random multiplicative functions.
//!
//! Modules, bottom up:
//! - [`primes`]: sieve, factorization queries, smooth/rough counting.
//! - [`rmf`]: seeded phases for α(p) and the completely multiplicative extension.
//! - [`euler`]: random Euler products on shifted critical lines, the prime field
//!   and the two chaos measures built from them.
//! - [`coupling`]: monotone coupling of tilted phases and the residual field.
//! - [`spectral`]: step functions, Mellin transforms and the Plancherel bridge.
//! - [`dickman`]: ρ, its Laplace transform and the bracket constants.
//! - [`truncation`]: the truncated sum, its martingale increments and bracket.
//! - [`concentration`]: Bernstein and generic chaining bounds.
//! - [`experiments`]: ensembles and statistical verdicts.

pub mod concentration;
pub mod coupling;
pub mod dickman;
pub mod euler;
pub mod experiments;
pub mod primes;
pub mod quad;
pub mod rmf;
pub mod spectral;
pub mod stats;
pub mod truncation;

pub use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("factor table limit {requested} exceeds capacity {limit}")]
    Capacity { requested: u64, limit: u64 },
    #[error("argument {n} outside table range 1..={limit}")]
    OutOfRange { n: u64, limit: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Euler factor at p={p} is singular (|1 - α(p)p^-s| = {modulus:e})")]
    Pole { p: u64, modulus: f64 },
    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudget(String),
    #[error("operation not supported for this model: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
