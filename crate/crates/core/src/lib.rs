//! Randomized experimental designs that minimize `‖Cov(Bz)‖` over feasible
//! assignment distributions with arbitrary marginal treatment probabilities.
//!
//! The centerpiece is [`mwu::mwu_build`]: a matrix multiplicative-weights
//! loop whose inner oracle ([`oracle::oracle_sample`]) is a martingale walk
//! on `[-1, 1]^n`. Benchmark designs, Horvitz-Thompson evaluation, the
//! set-splitting hardness gadgets and the data pipeline sit alongside.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }};
}

pub mod data;
pub mod designs;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod hardness;
pub mod linalg;
pub mod mwu;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{DdmError, Result};
pub use linalg::{Assignment, AugmentedSpec, DesignMatrix, ProbabilityVector, SymmetricMatrix};
