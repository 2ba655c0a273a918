//! Overlap diagnostics: where in risk-mode space the top fleeting mode
//! lives (ψ), how strongly a factor direction aligns with the leading
//! fleeting modes (φ), and the Monte Carlo null models for both.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::engine::{fleeting_modes, FleetingModeSet};
use crate::linalg::{self, EigenSystem, SymmetricMatrix, DEFAULT_EIGENVALUE_FLOOR};
use crate::null_model::NullParams;
use crate::panel::PricePanel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// ψ: top fleeting mode against the statistical risk modes.
    RiskModeOverlap,
    /// φ: factor loadings against the leading fleeting modes.
    FactorAlignment,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RiskModeOverlap => "risk-mode-overlap",
            Self::FactorAlignment => "factor-alignment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveCondition {
    TopGroup,
    BottomGroup,
    Unconditional,
    Null,
}

impl CurveCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TopGroup => "top",
            Self::BottomGroup => "bottom",
            Self::Unconditional => "unconditional",
            Self::Null => "null",
        }
    }
}

/// A cumulative squared-overlap sequence over `n = 1..=values.len()`.
///
/// Non-decreasing, bounded by `[0, 1]`; reaches 1 (to roundoff) when the
/// curve spans the full basis, i.e. `values.len() == n_total`.
#[derive(Debug, Clone)]
pub struct OverlapCurve {
    pub values: Vec<f64>,
    pub kind: CurveKind,
    pub condition: CurveCondition,
    /// Size of the underlying orthonormal basis.
    pub n_total: usize,
}

impl OverlapCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("overlap curves are never empty")
    }

    pub fn is_full_range(&self) -> bool {
        self.values.len() == self.n_total
    }
}

fn cumulative_squares(components: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    components
        .map(|c| {
            acc += c * c;
            acc
        })
        .collect()
}

/// ψ_n for the top fleeting mode: cumulative squared components over the
/// risk modes, ordered by descending in-sample risk.
pub fn psi_curve(mode_set: &FleetingModeSet) -> OverlapCurve {
    psi_curve_for_mode(mode_set, 0).expect("mode 0 always exists")
}

/// ψ_n for an arbitrary fleeting mode (by descending-eigenvalue index).
pub fn psi_curve_for_mode(mode_set: &FleetingModeSet, mode_index: usize) -> Result<OverlapCurve> {
    let n = mode_set.n();
    if mode_index >= n {
        return Err(Error::InvalidParams(format!(
            "mode index {mode_index} out of range for {n} modes"
        )));
    }
    let z = mode_set.modes_risk_basis.column(mode_index);
    Ok(OverlapCurve {
        values: cumulative_squares(z.iter().copied()),
        kind: CurveKind::RiskModeOverlap,
        condition: CurveCondition::Unconditional,
        n_total: n,
    })
}

/// Stationary ψ null: treats `e_in` as the true covariance, simulates fresh
/// in/out Gaussian panels at the given window ratios, reruns the mode
/// extraction and averages ψ over `n_rep` repeats.
pub fn psi_null_curve(
    e_in: &SymmetricMatrix,
    params: &NullParams,
    n_rep: usize,
    seed: u64,
) -> Result<OverlapCurve> {
    let n = e_in.dim();
    if params.n_assets() != n {
        return Err(Error::ParamsMismatch(format!(
            "params cover {} assets, matrix covers {n}",
            params.n_assets()
        )));
    }
    if n_rep < 1 {
        return Err(Error::InvalidParams("n_rep must be >= 1".into()));
    }
    let root = linalg::sqrt(e_in, 0.0)?;
    let (t_in, t_out) = (params.t_in(), params.t_out());

    let curves: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let mut rng = crate::rng::stream(seed, rep);
            let sim = |t: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<SymmetricMatrix> {
                let g = DMatrix::<f64>::from_fn(n, t, |_, _| StandardNormal.sample(rng));
                let x = root.matrix() * g;
                SymmetricMatrix::from_matrix(&x * x.transpose() / t as f64)
            };
            let e_in_sim = sim(t_in, &mut rng)?;
            let e_out_sim = sim(t_out, &mut rng)?;
            let set = fleeting_modes(&e_in_sim, &e_out_sim, DEFAULT_EIGENVALUE_FLOOR)?;
            Ok(psi_curve(&set).values)
        })
        .collect::<Result<_>>()?;

    Ok(OverlapCurve {
        values: average_values(&curves),
        kind: CurveKind::RiskModeOverlap,
        condition: CurveCondition::Null,
        n_total: n,
    })
}

fn average_values(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves[0].len();
    let mut mean = vec![0.0; len];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= curves.len() as f64;
    }
    mean
}

/// Unit-norm factor loadings over the real assets at one date.
#[derive(Debug, Clone)]
pub struct FactorLoadings {
    pub date: String,
    pub loadings: DVector<f64>,
}

impl FactorLoadings {
    /// Normalizes to unit length; rejects zero or non-finite input.
    pub fn new(date: String, loadings: DVector<f64>) -> Result<Self> {
        if loadings.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("loadings must be finite".into()));
        }
        let norm = loadings.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateFactor);
        }
        Ok(Self {
            date,
            loadings: loadings / norm,
        })
    }
}

/// Cross-sectional momentum: market-neutralized, rank-transformed, lagged
/// trend signal with `trend = p / ewma(p, halflife)`.
///
/// The EWMA uses weights `2^{-Δt/halflife}` over all prices up to the
/// evaluation date and requires at least five halflives of burn-in history.
pub fn momentum_factor(
    prices: &PricePanel,
    halflife: f64,
    lag: usize,
    date_index: usize,
) -> Result<FactorLoadings> {
    if !(halflife > 0.0) {
        return Err(Error::InvalidParams("halflife must be positive".into()));
    }
    if date_index >= prices.n_dates() {
        return Err(Error::InvalidParams(format!(
            "date index {date_index} out of range"
        )));
    }
    let required = (5.0 * halflife).ceil() as usize + lag;
    if date_index + 1 < required || date_index < lag {
        return Err(Error::InsufficientHistory {
            required,
            actual: date_index + 1,
        });
    }
    let eval = date_index - lag;
    let n = prices.n_assets();
    let beta = 2f64.powf(-1.0 / halflife);

    let mut trend = vec![0.0; n];
    for (i, trend_i) in trend.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..=eval {
            num = beta * num + prices.prices()[(i, t)];
            den = beta * den + 1.0;
        }
        *trend_i = prices.prices()[(i, eval)] / (num / den);
    }

    // Average-rank transform onto the symmetric grid (rank - (N+1)/2) / N.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| trend[a].total_cmp(&trend[b]).then(a.cmp(&b)));
    let mut grid = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && trend[order[end]] == trend[order[start]] {
            end += 1;
        }
        // Ranks are 1-based; ties share the average rank of their run.
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let value = (avg_rank - (n as f64 + 1.0) / 2.0) / n as f64;
        for &idx in &order[start..end] {
            grid[idx] = value;
        }
        start = end;
    }

    let mean = grid.iter().sum::<f64>() / n as f64;
    let neutral = DVector::from_iterator(n, grid.iter().map(|g| g - mean));
    if neutral.norm() < 1e-12 {
        return Err(Error::DegenerateFactor);
    }
    FactorLoadings::new(prices.dates()[date_index].clone(), neutral)
}

/// φ_n: cumulative squared overlap of the factor with the leading `n_max`
/// fleeting modes in the asset basis, ordered by descending eigenvalue.
pub fn phi_curve(
    factor: &FactorLoadings,
    mode_set: &FleetingModeSet,
    n_max: usize,
) -> Result<OverlapCurve> {
    let n = mode_set.n();
    if factor.loadings.len() != n {
        return Err(Error::UniverseMismatch {
            factor: factor.loadings.len(),
            modes: n,
        });
    }
    if n_max == 0 || n_max > n {
        return Err(Error::InvalidParams(format!(
            "n_max = {n_max} must lie in 1..={n}"
        )));
    }
    let projections = (0..n_max).map(|a| factor.loadings.dot(&mode_set.modes_asset_basis.column(a)));
    Ok(OverlapCurve {
        values: cumulative_squares(projections),
        kind: CurveKind::FactorAlignment,
        condition: CurveCondition::Unconditional,
        n_total: n,
    })
}

/// One sign-scrambled copy of the factor: identical projection amplitudes on
/// the risk modes, independent random signs.
fn scramble_signs(
    factor: &FactorLoadings,
    risk_modes: &EigenSystem,
    rng: &mut impl Rng,
) -> FactorLoadings {
    let v = risk_modes.vectors();
    let mut coeffs = v.transpose() * &factor.loadings;
    for c in coeffs.iter_mut() {
        if rng.random::<bool>() {
            *c = -*c;
        }
    }
    FactorLoadings {
        date: factor.date.clone(),
        loadings: v * coeffs,
    }
}

/// Scrambled-sign null for φ: preserves the factor's per-mode projection
/// amplitude on the statistical risk modes, randomizes the signs, and
/// averages the resulting φ curves over `n_rep` repeats.
pub fn scrambled_factor_null(
    factor: &FactorLoadings,
    mode_set: &FleetingModeSet,
    n_max: usize,
    n_rep: usize,
    seed: u64,
) -> Result<OverlapCurve> {
    if n_rep < 1 {
        return Err(Error::InvalidParams("n_rep must be >= 1".into()));
    }
    if factor.loadings.len() != mode_set.n() {
        return Err(Error::UniverseMismatch {
            factor: factor.loadings.len(),
            modes: mode_set.n(),
        });
    }
    let curves: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let mut rng = crate::rng::stream(seed, rep);
            let scrambled = scramble_signs(factor, &mode_set.risk_modes, &mut rng);
            Ok(phi_curve(&scrambled, mode_set, n_max)?.values)
        })
        .collect::<Result<_>>()?;
    Ok(OverlapCurve {
        values: average_values(&curves),
        kind: CurveKind::FactorAlignment,
        condition: CurveCondition::Null,
        n_total: mode_set.n(),
    })
}

fn check_curve_family(curves: &[OverlapCurve], scores: &[f64]) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::EmptyPartition("no curves to average".into()));
    }
    if curves.len() != scores.len() {
        return Err(Error::InvalidParams(format!(
            "{} curves but {} scores",
            curves.len(),
            scores.len()
        )));
    }
    let first = &curves[0];
    for c in curves {
        if c.len() != first.len() || c.kind != first.kind || c.n_total != first.n_total {
            return Err(Error::InvalidParams(
                "curves must share length, kind and basis size".into(),
            ));
        }
    }
    Ok(())
}

fn averaged(curves: &[OverlapCurve], pick: &[usize], condition: CurveCondition) -> OverlapCurve {
    let chosen: Vec<Vec<f64>> = pick.iter().map(|&i| curves[i].values.clone()).collect();
    OverlapCurve {
        values: average_values(&chosen),
        kind: curves[0].kind,
        condition,
        n_total: curves[0].n_total,
    }
}

/// Splits dates at the empirical `top_fraction` quantile of the scores and
/// averages the curves in each part: `ceil(top_fraction * M)` highest-score
/// dates (ties broken by date order) form the top group, the rest form the
/// bottom group.
pub fn conditional_average(
    curves: &[OverlapCurve],
    scores: &[f64],
    top_fraction: f64,
) -> Result<(OverlapCurve, OverlapCurve)> {
    check_curve_family(curves, scores)?;
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::InvalidParams(
            "top_fraction must lie in (0, 1)".into(),
        ));
    }
    let m = curves.len();
    let k = ((top_fraction * m as f64).ceil() as usize).clamp(1, m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let top: Vec<usize> = order[..k].to_vec();
    let bottom: Vec<usize> = order[k..].to_vec();
    if bottom.is_empty() {
        return Err(Error::EmptyPartition(
            "bottom group is empty; top_fraction too large for the sample".into(),
        ));
    }
    Ok((
        averaged(curves, &top, CurveCondition::TopGroup),
        averaged(curves, &bottom, CurveCondition::BottomGroup),
    ))
}

/// Variant with independently sized groups: `ceil(top_fraction * M)` highest
/// and `ceil(bottom_fraction * M)` lowest scores. The groups may overlap when
/// the fractions sum past one.
pub fn conditional_groups(
    curves: &[OverlapCurve],
    scores: &[f64],
    top_fraction: f64,
    bottom_fraction: f64,
) -> Result<(OverlapCurve, OverlapCurve)> {
    check_curve_family(curves, scores)?;
    for (name, f) in [("top_fraction", top_fraction), ("bottom_fraction", bottom_fraction)] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidParams(format!("{name} must lie in (0, 1]")));
        }
    }
    let m = curves.len();
    let k_top = ((top_fraction * m as f64).ceil() as usize).clamp(1, m);
    let k_bot = ((bottom_fraction * m as f64).ceil() as usize).clamp(1, m);
    let mut desc: Vec<usize> = (0..m).collect();
    desc.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let top: Vec<usize> = desc[..k_top].to_vec();
    let mut asc: Vec<usize> = (0..m).collect();
    asc.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let bottom: Vec<usize> = asc[..k_bot].to_vec();
    Ok((
        averaged(curves, &top, CurveCondition::TopGroup),
        averaged(curves, &bottom, CurveCondition::BottomGroup),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{sample_covariance, synth_market, CorrelationScenario};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn mode_set_from_synth(n: usize, seed: u64) -> FleetingModeSet {
        let (panel, _) =
            synth_market(n, 6 * n, &CorrelationScenario::Identity, None, seed).unwrap();
        let e_in = sample_covariance(&panel, 0..4 * n).unwrap();
        let e_out = sample_covariance(&panel, 4 * n..5 * n).unwrap();
        fleeting_modes(&e_in, &e_out, DEFAULT_EIGENVALUE_FLOOR).unwrap()
    }

    fn assert_curve_invariants(curve: &OverlapCurve) {
        let mut prev = 0.0;
        for &v in &curve.values {
            assert!(v >= prev - 1e-12, "curve must be non-decreasing");
            assert!((-1e-12..=1.0 + 1e-10).contains(&v));
            prev = v;
        }
        if curve.is_full_range() {
            assert_abs_diff_eq!(curve.last(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn psi_terminal_value_and_invariants() {
        let set = mode_set_from_synth(18, 1);
        let curve = psi_curve(&set);
        assert_eq!(curve.len(), 18);
        assert_curve_invariants(&curve);
        assert_abs_diff_eq!(curve.last(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn psi_is_one_when_top_mode_is_a_risk_mode() {
        // Diagonal windows keep everything in the coordinate basis: the top
        // fleeting mode coincides with risk mode 1 and psi_1 = 1 exactly.
        let e_in = SymmetricMatrix::from_fn(3, |i, j| {
            if i == j {
                [3.0, 2.0, 1.0][i]
            } else {
                0.0
            }
        })
        .unwrap();
        let bump = SymmetricMatrix::from_fn(3, |i, j| {
            if i == 0 && j == 0 {
                10.0
            } else {
                0.0
            }
        })
        .unwrap();
        let e_out = SymmetricMatrix::from_matrix(e_in.matrix() + bump.matrix()).unwrap();
        let set = fleeting_modes(&e_in, &e_out, 0.0).unwrap();
        let curve = psi_curve(&set);
        assert!(curve.values[0] >= 1.0 - 1e-12, "psi_1 = {}", curve.values[0]);
    }

    #[test]
    fn psi_concentrates_when_top_mode_is_spiked() {
        // Inflate the top in-sample risk mode out-of-sample: the top fleeting
        // mode then points along risk mode 1 and psi_1 is close to one.
        let set = {
            let (panel, _) =
                synth_market(10, 80, &CorrelationScenario::Identity, None, 2).unwrap();
            let e_in = sample_covariance(&panel, 0..60).unwrap();
            let v1 = linalg::eigendecompose(&e_in).unwrap().vectors().column(0).clone_owned();
            let spike = &v1 * v1.transpose() * 50.0;
            let e_out = SymmetricMatrix::from_matrix(e_in.matrix() + spike).unwrap();
            fleeting_modes(&e_in, &e_out, DEFAULT_EIGENVALUE_FLOOR).unwrap()
        };
        let curve = psi_curve(&set);
        assert!(curve.values[0] > 0.9, "psi_1 = {}", curve.values[0]);
    }

    #[test]
    fn psi_for_isotropic_mode_is_uniform() {
        // Haar-random unit modes against any basis: E[psi_n] = n/N.
        let n = 20;
        let reps = 4000;
        let mut sums = vec![0.0; n];
        let mut sums_sq = vec![0.0; n];
        for rep in 0..reps {
            let mut rng = crate::rng::stream(77, rep as u64);
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng)).normalize();
            let psi = cumulative_squares(z.iter().copied());
            for (i, v) in psi.iter().enumerate() {
                sums[i] += v;
                sums_sq[i] += v * v;
            }
        }
        for i in 0..n - 1 {
            let mean = sums[i] / reps as f64;
            let var = sums_sq[i] / reps as f64 - mean * mean;
            let se = (var / reps as f64).sqrt();
            let expect = (i + 1) as f64 / n as f64;
            assert!(
                (mean - expect).abs() <= 4.0 * se,
                "n={}: mean {mean} vs {expect}, se {se}",
                i + 1
            );
        }
    }

    #[test]
    fn psi_null_approaches_uniform_in_the_long_window_limit() {
        // The stationary null keeps a low-risk tilt of order q_in^{1/4} even
        // for C = I: the top mode of D prefers directions whose in-sample
        // risk was underestimated. The tilt fades as the in-sample window
        // grows and is strong at realistic window ratios.
        let n = 16;
        let uniform_dev = |curve: &OverlapCurve| -> f64 {
            curve
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v - (i + 1) as f64 / n as f64).abs())
                .fold(0.0f64, f64::max)
        };

        let long = psi_null_curve(
            &SymmetricMatrix::identity(n),
            &NullParams::new(n, 0.02, 1.0).unwrap(),
            48,
            3,
        )
        .unwrap();
        assert_curve_invariants(&long);
        assert_abs_diff_eq!(long.last(), 1.0, epsilon = 1e-10);
        assert!(uniform_dev(&long) < 0.15, "long-window dev {}", uniform_dev(&long));

        let realistic = psi_null_curve(
            &SymmetricMatrix::identity(n),
            &NullParams::new(n, 0.25, 4.0).unwrap(),
            48,
            4,
        )
        .unwrap();
        assert_curve_invariants(&realistic);
        let half = realistic.values[n / 2 - 1];
        assert!(half < 0.4, "expected strong low-risk tilt, psi_{{N/2}} = {half}");
        assert!(
            uniform_dev(&long) < 0.5 * uniform_dev(&realistic),
            "tilt should fade with longer in-sample windows: {} vs {}",
            uniform_dev(&long),
            uniform_dev(&realistic)
        );
    }

    #[test]
    fn psi_null_single_rep_still_valid() {
        let n = 12;
        let params = NullParams::new(n, 0.25, 2.0).unwrap();
        let curve = psi_null_curve(&SymmetricMatrix::identity(n), &params, 1, 5).unwrap();
        assert_curve_invariants(&curve);
        assert_abs_diff_eq!(curve.last(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn psi_null_sensitive_to_anisotropy() {
        let n = 16;
        let spiked = SymmetricMatrix::from_fn(n, |i, j| {
            if i == j {
                if i == 0 {
                    40.0
                } else {
                    1.0
                }
            } else {
                0.0
            }
        })
        .unwrap();
        let params = NullParams::new(n, 0.25, 4.0).unwrap();
        let aniso = psi_null_curve(&spiked, &params, 48, 6).unwrap();
        let max_dev = aniso
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (i + 1) as f64 / n as f64).abs())
            .fold(0.0f64, f64::max)
            ;
        assert!(max_dev > 0.1, "anisotropic null should deviate from n/N, max dev {max_dev}");
    }

    #[test]
    fn momentum_two_asset_reference() {
        let t = 40;
        let mut prices = DMatrix::zeros(2, t);
        for j in 0..t {
            prices[(0, j)] = 100.0 * 1.01f64.powi(j as i32);
            prices[(1, j)] = 100.0 * 0.99f64.powi(j as i32);
        }
        let panel = PricePanel::new(
            vec!["UP".into(), "DOWN".into()],
            (0..t).map(|j| format!("t{j:03}")).collect(),
            prices,
        )
        .unwrap();
        let f = momentum_factor(&panel, 4.0, 1, t - 1).unwrap();
        let root_half = 0.5f64.sqrt();
        assert_relative_eq!(f.loadings[0], root_half, max_relative = 1e-12);
        assert_relative_eq!(f.loadings[1], -root_half, max_relative = 1e-12);
    }

    #[test]
    fn momentum_complete_tie_is_degenerate() {
        let t = 30;
        let row: Vec<f64> = (0..t).map(|j| 100.0 + j as f64).collect();
        let mut prices = DMatrix::zeros(3, t);
        for i in 0..3 {
            for j in 0..t {
                prices[(i, j)] = row[j];
            }
        }
        let panel = PricePanel::new(
            vec!["A".into(), "B".into(), "C".into()],
            (0..t).map(|j| format!("t{j:03}")).collect(),
            prices,
        )
        .unwrap();
        assert!(matches!(
            momentum_factor(&panel, 4.0, 1, t - 1),
            Err(Error::DegenerateFactor)
        ));
    }

    #[test]
    fn momentum_is_market_neutral_unit_norm() {
        let (panel, _) = synth_market(9, 120, &CorrelationScenario::Identity, None, 8).unwrap();
        let prices = panel.compound_prices(0.01).unwrap();
        let f = momentum_factor(&prices, 10.0, 1, 119).unwrap();
        assert_abs_diff_eq!(f.loadings.iter().sum::<f64>(), 0.0, epsilon = 1e-10);
        assert_relative_eq!(f.loadings.norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn momentum_requires_burn_in() {
        let (panel, _) = synth_market(4, 30, &CorrelationScenario::Identity, None, 9).unwrap();
        let prices = panel.compound_prices(0.01).unwrap();
        assert!(matches!(
            momentum_factor(&prices, 100.0, 1, 29),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn phi_reference_cases() {
        let set = mode_set_from_synth(14, 10);
        // Factor equal to the top fleeting mode: phi_1 = 1.
        let top = FactorLoadings::new("d".into(), set.top_mode_asset()).unwrap();
        let curve = phi_curve(&top, &set, 14).unwrap();
        assert_abs_diff_eq!(curve.values[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(curve.last(), 1.0, epsilon = 1e-10);
        assert_curve_invariants(&curve);

        // Truncated curve keeps the invariants but not the terminal value.
        let short = phi_curve(&top, &set, 5).unwrap();
        assert_eq!(short.len(), 5);
        assert!(!short.is_full_range());

        let wrong = FactorLoadings::new("d".into(), DVector::from_element(9, 1.0)).unwrap();
        assert!(matches!(
            phi_curve(&wrong, &set, 5),
            Err(Error::UniverseMismatch { .. })
        ));
    }

    #[test]
    fn phi_isotropic_factor_is_uniform() {
        let n = 16;
        let set = mode_set_from_synth(n, 11);
        let reps = 4000;
        let mut sums = vec![0.0; n];
        let mut sums_sq = vec![0.0; n];
        for rep in 0..reps {
            let mut rng = crate::rng::stream(78, rep as u64);
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let f = FactorLoadings::new("d".into(), z).unwrap();
            let phi = phi_curve(&f, &set, n).unwrap();
            for (i, v) in phi.values.iter().enumerate() {
                sums[i] += v;
                sums_sq[i] += v * v;
            }
        }
        for i in 0..n - 1 {
            let mean = sums[i] / reps as f64;
            let var = sums_sq[i] / reps as f64 - mean * mean;
            let se = (var / reps as f64).sqrt();
            let expect = (i + 1) as f64 / n as f64;
            assert!(
                (mean - expect).abs() <= 4.0 * se,
                "n={}: mean {mean} vs {expect}, se {se}",
                i + 1
            );
        }
    }

    #[test]
    fn scrambling_preserves_amplitudes_and_norm() {
        let set = mode_set_from_synth(12, 12);
        let (panel, _) = synth_market(12, 150, &CorrelationScenario::Identity, None, 13).unwrap();
        let prices = panel.compound_prices(0.01).unwrap();
        let factor = momentum_factor(&prices, 10.0, 1, 149).unwrap();

        let mut rng = crate::rng::stream(14, 0);
        let scrambled = scramble_signs(&factor, &set.risk_modes, &mut rng);
        assert_relative_eq!(scrambled.loadings.norm(), 1.0, max_relative = 1e-10);

        let v = set.risk_modes.vectors();
        let before = v.transpose() * &factor.loadings;
        let after = v.transpose() * &scrambled.loadings;
        let mut flipped = 0;
        for k in 0..12 {
            assert_relative_eq!(before[k].abs(), after[k].abs(), max_relative = 1e-10);
            if (before[k] - after[k]).abs() > 1e-12 {
                flipped += 1;
            }
        }
        assert!(flipped > 0, "seed produced no sign flips");

        let null = scrambled_factor_null(&factor, &set, 12, 16, 15).unwrap();
        assert_curve_invariants(&null);
        assert_abs_diff_eq!(null.last(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn conditional_average_partitions_and_stays_valid() {
        let set = mode_set_from_synth(10, 16);
        let base = psi_curve(&set);
        let mut curves = Vec::new();
        let mut scores = Vec::new();
        for k in 0..10 {
            let mut c = base.clone();
            // Perturb within bounds to make the curves distinct.
            for v in &mut c.values {
                *v = (*v * (1.0 - 0.01 * k as f64)).clamp(0.0, 1.0);
            }
            let len = c.values.len();
            c.values[len - 1] = 1.0;
            curves.push(c);
            scores.push(k as f64);
        }
        let (top, bottom) = conditional_average(&curves, &scores, 0.10).unwrap();
        assert_curve_invariants(&top);
        assert_curve_invariants(&bottom);
        // Highest score (k=9) forms the top group.
        assert_abs_diff_eq!(top.values[2], curves[9].values[2], epsilon = 1e-15);

        // All-equal scores: ceil(f*M) dates in the top group, by date order.
        let equal = vec![1.0; 10];
        let (top_eq, _) = conditional_average(&curves, &equal, 0.25).unwrap();
        let expect: f64 = (0..3).map(|i| curves[i].values[0]).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(top_eq.values[0], expect, epsilon = 1e-15);

        // Degenerate single-date sample cannot be split.
        assert!(matches!(
            conditional_average(&curves[..1], &scores[..1], 0.5),
            Err(Error::EmptyPartition(_))
        ));
    }

    #[test]
    fn conditional_groups_independent_fractions() {
        let set = mode_set_from_synth(8, 17);
        let base = psi_curve(&set);
        let curves: Vec<OverlapCurve> = (0..10).map(|_| base.clone()).collect();
        let scores: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let (top, bottom) = conditional_groups(&curves, &scores, 0.10, 0.90).unwrap();
        assert_eq!(top.condition, CurveCondition::TopGroup);
        assert_eq!(bottom.condition, CurveCondition::BottomGroup);
        assert_curve_invariants(&top);
        assert_curve_invariants(&bottom);
    }
}
