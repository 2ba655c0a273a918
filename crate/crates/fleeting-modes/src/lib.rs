//! Out-of-sample excess-risk detection for large portfolios.
//!
//! The central object is the overlap matrix `D = E_in^{-1/2} E_out E_in^{-1/2}`
//! built from an in-sample and an out-of-sample covariance estimate of the same
//! asset universe. Under a stationary world the spectrum of `D` follows an exact
//! random-matrix law that depends only on the aspect ratios `q_in = N/T_in` and
//! `q_out = N/T_out`, never on the unknown true covariance. Eigenvalues escaping
//! the null support flag portfolio directions ("fleeting modes") that realized
//! significantly more risk out-of-sample than in-sample.
//!
//! Module map:
//! - [`null_model`]: closed-form null spectrum, its moments and edges, Monte
//!   Carlo samplers for the benchmark ensemble, and edge calibration.
//! - [`linalg`]: symmetric eigendecomposition, symmetric (inverse) square
//!   roots, and the construction of `D` in the statistical-risk-mode basis.
//! - [`panel`]: OHLC ingestion, Garman-Klass volatility normalization,
//!   second-moment covariance estimation, rolling window protocol, and
//!   synthetic market generation for validation.
//! - [`engine`]: per-date fleeting-mode extraction, rolling analysis, and
//!   exceedance flagging against the finite-size-corrected null edge.
//! - [`analytics`]: cumulative overlap curves of fleeting modes with risk
//!   modes and with factor directions, plus their Monte Carlo null models.

// Guards written as `!(v > 0.0)` reject NaN along with the out-of-range
// values; the positively-phrased comparisons clippy suggests would let NaN
// through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod engine;
mod error;
pub mod linalg;
pub mod null_model;
pub mod panel;
pub mod quad;

pub use error::{Error, Result};

pub(crate) mod rng {
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Seeded generator on an independent stream. Repeats of a Monte Carlo
    /// experiment use the same seed with distinct streams, so results are
    /// reproducible bit-for-bit and independent of scheduling.
    pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}
