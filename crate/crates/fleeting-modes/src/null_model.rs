//! Exact stationary null for the overlap-matrix spectrum.
//!
//! Under stationarity the eigenvalues of `D` are distributed as those of
//! `W_in^{-1/2} W_out W_in^{-1/2}` with independent white Wishart factors, a
//! law that depends only on `(q_in, q_out)`. This module provides the
//! closed-form density, support edges, Dirac weight and moments, Monte Carlo
//! samplers for the benchmark ensemble, and an edge-calibration routine for
//! the finite-size correction constant.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::linalg::{self, SymmetricMatrix, DEFAULT_EIGENVALUE_FLOOR};
use crate::{quad, Error, Result};

/// Default constant of the finite-size edge scale `Δ_N = (c N)^{-2/3}`,
/// fitted empirically at universe sizes of a few hundred assets. The
/// prefactor is ensemble-dependent, so treat this as a starting point and
/// calibrate per configuration with [`calibrate_edge`].
pub const DEFAULT_EDGE_CONSTANT: f64 = 2.7e-3;

/// An eigenvalue below `λ_1 * ZERO_EIGENVALUE_REL_THRESHOLD` counts as part of
/// the Dirac mass at zero: exact rank deficiency, not bulk.
pub const ZERO_EIGENVALUE_REL_THRESHOLD: f64 = 1e-8;

/// Relative tolerance of density quadrature.
const QUAD_REL_TOL: f64 = 1e-9;

/// Dimension-to-samples ratios `(N, q_in, q_out)` parameterizing the null.
///
/// Requires `0 < q_in < 1` (the in-sample Wishart must be invertible) and
/// `q_out > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullParams {
    n_assets: usize,
    q_in: f64,
    q_out: f64,
}

impl NullParams {
    pub fn new(n_assets: usize, q_in: f64, q_out: f64) -> Result<Self> {
        if n_assets < 1 {
            return Err(Error::InvalidParams("n_assets must be >= 1".into()));
        }
        if !(q_in > 0.0 && q_in < 1.0) {
            return Err(Error::InvalidParams(format!(
                "q_in must lie in (0, 1), got {q_in}"
            )));
        }
        if !(q_out > 0.0) {
            return Err(Error::InvalidParams(format!(
                "q_out must be positive, got {q_out}"
            )));
        }
        Ok(Self {
            n_assets,
            q_in,
            q_out,
        })
    }

    /// Derives the ratios from explicit window lengths.
    pub fn from_windows(n_assets: usize, t_in: usize, t_out: usize) -> Result<Self> {
        if t_in == 0 || t_out == 0 {
            return Err(Error::InvalidParams("window lengths must be positive".into()));
        }
        Self::new(
            n_assets,
            n_assets as f64 / t_in as f64,
            n_assets as f64 / t_out as f64,
        )
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn q_in(&self) -> f64 {
        self.q_in
    }

    pub fn q_out(&self) -> f64 {
        self.q_out
    }

    /// In-sample window length `round(N / q_in)`.
    pub fn t_in(&self) -> usize {
        (self.n_assets as f64 / self.q_in).round() as usize
    }

    /// Out-of-sample window length `round(N / q_out)`, at least one column.
    pub fn t_out(&self) -> usize {
        ((self.n_assets as f64 / self.q_out).round() as usize).max(1)
    }
}

/// Support of the continuous spectral component plus the Dirac weight at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSupport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `[1 - 1/q_out]^+`: fraction of exactly-zero eigenvalues when the
    /// out-window is shorter than the universe.
    pub zero_mass: f64,
}

/// Closed-form support edges
/// `λ_{max,min} = [1 + u ± 2√u] / (1 - q_in)²` with `u = q_in + q_out (1 - q_in)`.
pub fn support_edges(params: &NullParams) -> SpectralSupport {
    let (qi, qo) = (params.q_in, params.q_out);
    let u = qi + qo * (1.0 - qi);
    let denom = (1.0 - qi) * (1.0 - qi);
    let root = 2.0 * u.sqrt();
    SpectralSupport {
        lambda_min: (1.0 + u - root) / denom,
        lambda_max: (1.0 + u + root) / denom,
        zero_mass: (1.0 - 1.0 / qo).max(0.0),
    }
}

/// Continuous part of the null density,
/// `ρ_c(λ) = (1-q_in)/(2π) · √([(λ_max-λ)(λ-λ_min)]^+) / (λ (q_in λ + q_out))`.
///
/// Zero outside the support; the Dirac component at zero is reported
/// separately by [`support_edges`].
pub fn spectral_density(lambda: f64, params: &NullParams) -> f64 {
    let edges = support_edges(params);
    let bracket = (edges.lambda_max - lambda) * (lambda - edges.lambda_min);
    if bracket <= 0.0 {
        return 0.0;
    }
    let (qi, qo) = (params.q_in, params.q_out);
    (1.0 - qi) / (2.0 * std::f64::consts::PI) * bracket.sqrt() / (lambda * (qi * lambda + qo))
}

/// First two moments of the full spectral law (Dirac mass included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumMoments {
    pub mean: f64,
    pub variance: f64,
}

/// `mean = (1-q_in)^{-1}`, `variance = (1-q_in)^{-3} (q_in + q_out (1-q_in))`.
pub fn moments(params: &NullParams) -> SpectrumMoments {
    let (qi, qo) = (params.q_in, params.q_out);
    let one_minus = 1.0 - qi;
    SpectrumMoments {
        mean: 1.0 / one_minus,
        variance: (qi + qo * one_minus) / (one_minus * one_minus * one_minus),
    }
}

/// Support edges for equal-length windows,
/// `[1 + 2q - q² ± 2√(q(2-q))] / (1-q)²`.
///
/// Accepts the `q = 0` boundary, where both edges collapse to one.
pub fn equal_q_edges(q: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParams(format!(
            "q must lie in [0, 1), got {q}"
        )));
    }
    let num = 1.0 + 2.0 * q - q * q;
    let root = 2.0 * (q * (2.0 - q)).sqrt();
    let denom = (1.0 - q) * (1.0 - q);
    Ok(((num - root) / denom, (num + root) / denom))
}

/// Finite-size edge correction scale `Δ_N = (c N)^{-2/3}`.
pub fn finite_n_shift(n_assets: usize, c: f64) -> Result<f64> {
    if n_assets < 1 {
        return Err(Error::InvalidParams("n_assets must be >= 1".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("c must be positive, got {c}")));
    }
    Ok((c * n_assets as f64).powf(-2.0 / 3.0))
}

/// Integrated continuous mass over `[a, b] ∩ [λ_min, λ_max]`.
pub fn continuous_mass(params: &NullParams, a: f64, b: f64) -> f64 {
    let edges = support_edges(params);
    let lo = a.max(edges.lambda_min);
    let hi = b.min(edges.lambda_max);
    quad::integrate(|x| spectral_density(x, params), lo, hi, QUAD_REL_TOL)
}

/// Total mass of the continuous component, `1 - zero_mass` in exact arithmetic.
pub fn normalization(params: &NullParams) -> f64 {
    let edges = support_edges(params);
    continuous_mass(params, edges.lambda_min, edges.lambda_max)
}

/// White Wishart sample `(1/T) G Gᵀ` with `G` an `N×T` standard Gaussian panel.
pub fn sample_white_wishart(
    n_assets: usize,
    t_samples: usize,
    rng: &mut impl Rng,
) -> Result<SymmetricMatrix> {
    if n_assets < 1 || t_samples < 1 {
        return Err(Error::InvalidParams(
            "wishart dimensions must be positive".into(),
        ));
    }
    let g = DMatrix::<f64>::from_fn(n_assets, t_samples, |_, _| StandardNormal.sample(rng));
    let mut w = &g * g.transpose();
    w /= t_samples as f64;
    SymmetricMatrix::from_matrix(w)
}

/// One draw of the benchmark ensemble `W_in^{-1/2} W_out W_in^{-1/2}`.
#[derive(Debug, Clone)]
pub struct BenchmarkSample {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    pub t_in: usize,
    pub t_out: usize,
    /// Ratios actually realized after rounding `T = round(N/q)`.
    pub realized_q_in: f64,
    pub realized_q_out: f64,
}

impl BenchmarkSample {
    /// Count of eigenvalues in the Dirac mass at zero.
    pub fn zero_count(&self) -> usize {
        zero_count(&self.eigenvalues)
    }
}

/// Eigenvalues (descending) below the relative zero threshold.
pub fn zero_count(eigenvalues_desc: &[f64]) -> usize {
    match eigenvalues_desc.first() {
        None => 0,
        Some(&top) => {
            let cut = ZERO_EIGENVALUE_REL_THRESHOLD * top.max(0.0);
            eigenvalues_desc.iter().filter(|&&v| v < cut).count()
        }
    }
}

/// Samples the null benchmark spectrum for `params`.
///
/// Window lengths are `round(N/q)`; the realized ratios are reported so that
/// rounding bias is visible to the caller.
pub fn sample_d_benchmark(params: &NullParams, rng: &mut impl Rng) -> Result<BenchmarkSample> {
    let n = params.n_assets;
    let t_in = params.t_in();
    let t_out = params.t_out();
    if t_in <= n {
        return Err(Error::SingularMatrix(format!(
            "derived t_in = {t_in} <= n_assets = {n}; the in-sample Wishart is singular"
        )));
    }
    let w_in = sample_white_wishart(n, t_in, rng)?;
    let w_out = sample_white_wishart(n, t_out, rng)?;
    let matrices = linalg::build_d(&w_in, &w_out, DEFAULT_EIGENVALUE_FLOOR).map_err(|e| match e {
        Error::NotPositiveDefinite(msg) => Error::SingularMatrix(msg),
        other => other,
    })?;
    let eig = linalg::eigendecompose(&matrices.d_rotated)?;
    Ok(BenchmarkSample {
        eigenvalues: eig.values().iter().copied().collect(),
        t_in,
        t_out,
        realized_q_in: n as f64 / t_in as f64,
        realized_q_out: n as f64 / t_out as f64,
    })
}

/// Monte Carlo calibration of the edge constant `c`.
#[derive(Debug, Clone)]
pub struct EdgeCalibration {
    /// Requested false-positive quantile of the null top eigenvalue.
    pub target_quantile: f64,
    /// Empirical quantile of `λ_1` under the null: the threshold that flags
    /// the top `1 - target_quantile` of stationary dates.
    pub threshold: f64,
    /// `λ_max - threshold`. Negative when the quantile lies above the
    /// asymptotic edge, in which case no positive `c` reproduces it.
    pub delta: f64,
    /// `c` with `(c N)^{-2/3} = delta`, when `delta > 0`.
    pub c: Option<f64>,
    pub lambda1_mean: f64,
    pub lambda1_std: f64,
    /// Sorted top-eigenvalue samples, one per repeat.
    pub lambda1_samples: Vec<f64>,
}

/// Estimates the null distribution of `λ_1` by sampling the benchmark
/// ensemble `n_rep` times on independent streams of `seed`.
pub fn calibrate_edge(
    params: &NullParams,
    n_rep: usize,
    target_quantile: f64,
    seed: u64,
) -> Result<EdgeCalibration> {
    if n_rep < 2 {
        return Err(Error::InvalidParams("n_rep must be >= 2".into()));
    }
    if !(target_quantile > 0.0 && target_quantile < 1.0) {
        return Err(Error::InvalidParams(
            "target_quantile must lie in (0, 1)".into(),
        ));
    }
    let mut lambda1: Vec<f64> = (0..n_rep as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = crate::rng::stream(seed, rep);
            sample_d_benchmark(params, &mut rng).map(|s| s.eigenvalues[0])
        })
        .collect::<Result<_>>()?;
    lambda1.sort_by(|a, b| a.total_cmp(b));

    let mean = lambda1.iter().sum::<f64>() / n_rep as f64;
    let var =
        lambda1.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n_rep as f64 - 1.0);
    let rank = ((target_quantile * n_rep as f64).ceil() as usize).clamp(1, n_rep);
    let threshold = lambda1[rank - 1];
    let delta = support_edges(params).lambda_max - threshold;
    let c = (delta > 0.0).then(|| delta.powf(-1.5) / params.n_assets as f64);

    Ok(EdgeCalibration {
        target_quantile,
        threshold,
        delta,
        c,
        lambda1_mean: mean,
        lambda1_std: var.sqrt(),
        lambda1_samples: lambda1,
    })
}
