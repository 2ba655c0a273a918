//! Price panels, volatility-normalized returns, covariance estimation, and
//! the rolling in/out window protocol.

mod io;
mod synth;

pub use io::{
    detect_layout, read_ohlc_long, read_ohlc_wide, read_prices_wide, read_returns_wide,
    read_wide_matrix, write_returns_wide, write_wide_matrix, DataLayout,
};
pub use synth::{
    inject_direction_variance, synth_market, CorrelationScenario, RegimeShift, ShiftMeta,
    SynthMeta,
};

use std::ops::Range;

use nalgebra::DMatrix;

use crate::linalg::SymmetricMatrix;
use crate::{Error, Result};

/// Complete Close-High-Low-Close panel: `N` assets by `T` dates, no gaps.
#[derive(Debug, Clone)]
pub struct OhlcPanel {
    assets: Vec<String>,
    dates: Vec<String>,
    open: DMatrix<f64>,
    high: DMatrix<f64>,
    low: DMatrix<f64>,
    close: DMatrix<f64>,
}

fn check_dates_increasing(dates: &[String]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Data(format!(
                "dates must be strictly increasing: {:?} followed by {:?}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

fn check_unique_assets(assets: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for a in assets {
        if !seen.insert(a.as_str()) {
            return Err(Error::Data(format!("duplicate asset label {a:?}")));
        }
    }
    Ok(())
}

impl OhlcPanel {
    pub fn new(
        assets: Vec<String>,
        dates: Vec<String>,
        open: DMatrix<f64>,
        high: DMatrix<f64>,
        low: DMatrix<f64>,
        close: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, t) = (assets.len(), dates.len());
        if n == 0 || t == 0 {
            return Err(Error::Data("panel must contain assets and dates".into()));
        }
        check_unique_assets(&assets)?;
        check_dates_increasing(&dates)?;
        for (name, m) in [("open", &open), ("high", &high), ("low", &low), ("close", &close)] {
            if m.nrows() != n || m.ncols() != t {
                return Err(Error::Data(format!(
                    "{name} matrix is {}x{}, expected {n}x{t}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        for i in 0..n {
            for j in 0..t {
                let (o, h, l, c) = (open[(i, j)], high[(i, j)], low[(i, j)], close[(i, j)]);
                if !(o > 0.0 && h > 0.0 && l > 0.0 && c > 0.0)
                    || !(o.is_finite() && h.is_finite() && l.is_finite() && c.is_finite())
                {
                    return Err(Error::NonPositivePrice {
                        asset: assets[i].clone(),
                        date: dates[j].clone(),
                    });
                }
                if l > o.min(c) || h < o.max(c) {
                    return Err(Error::Data(format!(
                        "bar violates low <= open,close <= high for asset {:?} at {:?}",
                        assets[i], dates[j]
                    )));
                }
            }
        }
        Ok(Self {
            assets,
            dates,
            open,
            high,
            low,
            close,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn close(&self) -> &DMatrix<f64> {
        &self.close
    }

    /// Restricts the panel to the requested assets, in the requested order.
    pub fn select_assets(&self, wanted: &[String]) -> Result<Self> {
        let rows = asset_rows(&self.assets, wanted)?;
        Ok(Self {
            assets: wanted.to_vec(),
            dates: self.dates.clone(),
            open: select_rows(&self.open, &rows),
            high: select_rows(&self.high, &rows),
            low: select_rows(&self.low, &rows),
            close: select_rows(&self.close, &rows),
        })
    }

    /// Close prices as a standalone panel, for factor construction.
    pub fn close_panel(&self) -> PricePanel {
        PricePanel {
            assets: self.assets.clone(),
            dates: self.dates.clone(),
            prices: self.close.clone(),
        }
    }
}

fn asset_rows(have: &[String], wanted: &[String]) -> Result<Vec<usize>> {
    check_unique_assets(wanted)?;
    wanted
        .iter()
        .map(|w| {
            have.iter()
                .position(|a| a == w)
                .ok_or_else(|| Error::Data(format!("asset {w:?} not present in panel")))
        })
        .collect()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Volatility-normalized daily returns, `N` assets by `T` dates.
///
/// Returns are deliberately not detrended by their means; covariances built
/// from this panel are plain second moments.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    assets: Vec<String>,
    dates: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(assets: Vec<String>, dates: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if assets.is_empty() || dates.is_empty() {
            return Err(Error::Data("panel must contain assets and dates".into()));
        }
        check_unique_assets(&assets)?;
        check_dates_increasing(&dates)?;
        if returns.nrows() != assets.len() || returns.ncols() != dates.len() {
            return Err(Error::Data(format!(
                "returns matrix is {}x{}, expected {}x{}",
                returns.nrows(),
                returns.ncols(),
                assets.len(),
                dates.len()
            )));
        }
        if returns.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("returns must be finite".into()));
        }
        Ok(Self {
            assets,
            dates,
            returns,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn select_assets(&self, wanted: &[String]) -> Result<Self> {
        let rows = asset_rows(&self.assets, wanted)?;
        Ok(Self {
            assets: wanted.to_vec(),
            dates: self.dates.clone(),
            returns: select_rows(&self.returns, &rows),
        })
    }

    /// Compounds returns into a synthetic close-price path
    /// `p_t = 100 · Π_{s<=t} (1 + scale · X_s)`, for factor construction on
    /// simulated markets. `scale` shrinks unit-variance returns to plausible
    /// daily moves; factors must stay above -1.
    pub fn compound_prices(&self, scale: f64) -> Result<PricePanel> {
        let (n, t) = (self.n_assets(), self.n_dates());
        let mut prices = DMatrix::zeros(n, t);
        for i in 0..n {
            let mut level = 100.0;
            for j in 0..t {
                let factor = 1.0 + scale * self.returns[(i, j)];
                if factor <= 0.0 {
                    return Err(Error::Data(format!(
                        "compounding scale {scale} drives price non-positive for asset {:?} at {:?}",
                        self.assets[i], self.dates[j]
                    )));
                }
                level *= factor;
                prices[(i, j)] = level;
            }
        }
        PricePanel::new(self.assets.clone(), self.dates.clone(), prices)
    }
}

/// Close-price panel used by factor construction.
#[derive(Debug, Clone)]
pub struct PricePanel {
    assets: Vec<String>,
    dates: Vec<String>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(assets: Vec<String>, dates: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != assets.len() || prices.ncols() != dates.len() {
            return Err(Error::Data("price matrix shape mismatch".into()));
        }
        check_unique_assets(&assets)?;
        check_dates_increasing(&dates)?;
        if prices.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Data("prices must be positive and finite".into()));
        }
        Ok(Self {
            assets,
            dates,
            prices,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn select_assets(&self, wanted: &[String]) -> Result<Self> {
        let rows = asset_rows(&self.assets, wanted)?;
        Ok(Self {
            assets: wanted.to_vec(),
            dates: self.dates.clone(),
            prices: select_rows(&self.prices, &rows),
        })
    }
}

/// One Garman-Klass volatility observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkVol {
    /// Daily volatility in return units, after flooring.
    pub sigma: f64,
    /// Whether the variance floor was hit (zero-range or negative estimate).
    pub floored: bool,
}

/// Garman-Klass daily variance from Close-High-Low-Close fields,
/// `σ² = 0.5 ln²(H_t/L_t) - (2 ln 2 - 1) ln²(C_t/C_{t-1})`,
/// floored at `vol_floor²` since the cross term can push it negative.
pub fn garman_klass_vol(
    ohlc: &OhlcPanel,
    asset: usize,
    t: usize,
    vol_floor: f64,
) -> Result<GkVol> {
    if asset >= ohlc.n_assets() {
        return Err(Error::InvalidParams(format!(
            "asset index {asset} out of range"
        )));
    }
    if t < 1 || t >= ohlc.n_dates() {
        return Err(Error::InvalidParams(format!(
            "t = {t} needs a previous close and must be in range"
        )));
    }
    if !(vol_floor > 0.0) {
        return Err(Error::InvalidParams("vol_floor must be positive".into()));
    }
    let hl = (ohlc.high[(asset, t)] / ohlc.low[(asset, t)]).ln();
    let cc = (ohlc.close[(asset, t)] / ohlc.close[(asset, t - 1)]).ln();
    let var = 0.5 * hl * hl - (2.0 * std::f64::consts::LN_2 - 1.0) * cc * cc;
    let floor = vol_floor * vol_floor;
    if var < floor {
        Ok(GkVol {
            sigma: vol_floor,
            floored: true,
        })
    } else {
        Ok(GkVol {
            sigma: var.sqrt(),
            floored: false,
        })
    }
}

/// Normalizes simple daily returns by same-day Garman-Klass volatility,
/// `X_{i,t} = (C_t/C_{t-1} - 1) / σ_{i,t}`. The first date is consumed by
/// the one-day lag.
pub fn normalize_returns(ohlc: &OhlcPanel, vol_floor: f64) -> Result<ReturnPanel> {
    let (n, t_total) = (ohlc.n_assets(), ohlc.n_dates());
    if t_total < 2 {
        return Err(Error::InsufficientHistory {
            required: 2,
            actual: t_total,
        });
    }
    let mut x = DMatrix::zeros(n, t_total - 1);
    for i in 0..n {
        for t in 1..t_total {
            let vol = garman_klass_vol(ohlc, i, t, vol_floor)?;
            let r = ohlc.close[(i, t)] / ohlc.close[(i, t - 1)] - 1.0;
            x[(i, t - 1)] = r / vol.sigma;
        }
    }
    ReturnPanel::new(
        ohlc.assets.clone(),
        ohlc.dates[1..].to_vec(),
        x,
    )
}

/// Second-moment covariance over a column range:
/// `E = (1/T) Σ_{t in range} X_t X_tᵀ`, no mean subtraction.
pub fn sample_covariance(panel: &ReturnPanel, range: Range<usize>) -> Result<SymmetricMatrix> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > panel.n_dates() {
        return Err(Error::InvalidParams(format!(
            "range {range:?} exceeds panel length {}",
            panel.n_dates()
        )));
    }
    let width = range.end - range.start;
    let block = panel.returns.columns(range.start, width);
    let mut e = block * block.transpose();
    e /= width as f64;
    SymmetricMatrix::from_matrix(e)
}

/// One rolling in/out window pair anchored at day `t`:
/// in-sample `[t - T_out - T_in, t - T_out)`, out-of-sample `[t - T_out, t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPair {
    pub t_anchor: usize,
    pub in_range: Range<usize>,
    pub out_range: Range<usize>,
}

/// All window pairs for anchors `t ∈ [t_in + t_out, t_total]`.
///
/// The windows are contiguous, disjoint, of fixed lengths, and reference
/// only indices strictly before the anchor.
pub fn rolling_windows(t_total: usize, t_in: usize, t_out: usize) -> Result<Vec<WindowPair>> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::InvalidParams("window lengths must be positive".into()));
    }
    if t_total < t_in + t_out {
        return Err(Error::InsufficientHistory {
            required: t_in + t_out,
            actual: t_total,
        });
    }
    Ok(((t_in + t_out)..=t_total)
        .map(|t| WindowPair {
            t_anchor: t,
            in_range: (t - t_out - t_in)..(t - t_out),
            out_range: (t - t_out)..t,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_distr::{Distribution, StandardNormal};

    fn flat_bar(level: f64, t: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, t, level)
    }

    #[test]
    fn gk_range_only_bar() {
        // H/L = e^{0.02}, close unchanged: sigma = sqrt(0.5) * 0.02.
        let open = flat_bar(100.0, 2);
        let mut high = flat_bar(100.0, 2);
        let mut low = flat_bar(100.0, 2);
        let close = flat_bar(100.0, 2);
        high[(0, 1)] = 100.0 * (0.01f64).exp();
        low[(0, 1)] = 100.0 * (-0.01f64).exp();
        let panel = OhlcPanel::new(
            vec!["A".into()],
            vec!["2020-01-01".into(), "2020-01-02".into()],
            open,
            high,
            low,
            close,
        )
        .unwrap();
        let vol = garman_klass_vol(&panel, 0, 1, 1e-6).unwrap();
        assert!(!vol.floored);
        assert_relative_eq!(vol.sigma, 0.5f64.sqrt() * 0.02, max_relative = 1e-12);
    }

    #[test]
    fn gk_zero_range_day_floors() {
        let panel = OhlcPanel::new(
            vec!["A".into()],
            vec!["2020-01-01".into(), "2020-01-02".into()],
            flat_bar(50.0, 2),
            flat_bar(50.0, 2),
            flat_bar(50.0, 2),
            flat_bar(50.0, 2),
        )
        .unwrap();
        let vol = garman_klass_vol(&panel, 0, 1, 1e-4).unwrap();
        assert!(vol.floored);
        assert_eq!(vol.sigma, 1e-4);
    }

    #[test]
    fn gk_is_nonnegative_and_finite() {
        let mut rng = crate::rng::stream(5, 0);
        for _ in 0..50 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
            let c0 = 100.0 * (0.02 * draw(&mut rng)).exp();
            let c1 = c0 * (0.02 * draw(&mut rng)).exp();
            let spread = (0.01 * draw(&mut rng)).abs() + 1e-3;
            let high = c0.max(c1) * (1.0 + spread);
            let low = c0.min(c1) * (1.0 - spread.min(0.5));
            let panel = OhlcPanel::new(
                vec!["A".into()],
                vec!["2020-01-01".into(), "2020-01-02".into()],
                DMatrix::from_row_slice(1, 2, &[c0, c0]),
                DMatrix::from_row_slice(1, 2, &[c0, high]),
                DMatrix::from_row_slice(1, 2, &[c0, low]),
                DMatrix::from_row_slice(1, 2, &[c0, c1]),
            )
            .unwrap();
            let vol = garman_klass_vol(&panel, 0, 1, 1e-8).unwrap();
            assert!(vol.sigma.is_finite() && vol.sigma >= 0.0);
        }
    }

    #[test]
    fn constant_prices_normalize_to_zero() {
        let t = 5;
        let panel = OhlcPanel::new(
            vec!["A".into(), "B".into()],
            (0..t).map(|i| format!("2020-01-0{}", i + 1)).collect(),
            DMatrix::from_element(2, t, 10.0),
            DMatrix::from_element(2, t, 10.0),
            DMatrix::from_element(2, t, 10.0),
            DMatrix::from_element(2, t, 10.0),
        )
        .unwrap();
        let returns = normalize_returns(&panel, 1e-4).unwrap();
        assert_eq!(returns.n_dates(), t - 1);
        assert_eq!(returns.dates()[0], "2020-01-02");
        assert!(returns.returns().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_observation_covariance_is_rank_one() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let panel =
            ReturnPanel::new(
                vec!["A".into(), "B".into(), "C".into()],
                vec!["d0".into()],
                x,
            )
            .unwrap();
        let e = sample_covariance(&panel, 0..1).unwrap();
        let expect = [
            [1.0, 2.0, -1.0],
            [2.0, 4.0, -2.0],
            [-1.0, -2.0, 1.0],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_abs_diff_eq!(e.matrix()[(i, j)], *want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn hand_computed_two_by_two_covariance() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let panel = ReturnPanel::new(
            vec!["A".into(), "B".into()],
            vec!["d0".into(), "d1".into()],
            x,
        )
        .unwrap();
        let e = sample_covariance(&panel, 0..2).unwrap();
        assert_abs_diff_eq!(e.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.matrix()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.matrix()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn covariance_concatenation_is_length_weighted_average() {
        let mut rng = crate::rng::stream(6, 0);
        let x = DMatrix::<f64>::from_fn(4, 10, |_, _| StandardNormal.sample(&mut rng));
        let panel = ReturnPanel::new(
            (0..4).map(|i| format!("A{i}")).collect(),
            (0..10).map(|i| format!("d{i:02}")).collect(),
            x,
        )
        .unwrap();
        let full = sample_covariance(&panel, 0..10).unwrap();
        let a = sample_covariance(&panel, 0..4).unwrap();
        let b = sample_covariance(&panel, 4..10).unwrap();
        let blended = (a.matrix() * 4.0 + b.matrix() * 6.0) / 10.0;
        assert!((full.matrix() - blended).norm() < 1e-13);
    }

    #[test]
    fn empty_and_out_of_bounds_ranges() {
        let panel = ReturnPanel::new(
            vec!["A".into()],
            vec!["d0".into(), "d1".into()],
            DMatrix::from_element(1, 2, 0.5),
        )
        .unwrap();
        assert!(matches!(
            sample_covariance(&panel, 1..1),
            Err(Error::EmptyRange)
        ));
        assert!(sample_covariance(&panel, 0..3).is_err());
    }

    #[test]
    fn rolling_windows_reference_case() {
        let (t_total, t_in, t_out) = (6, 4, 2);
        let pairs = rolling_windows(t_total, t_in, t_out).unwrap();
        assert_eq!(pairs.len(), t_total - t_in - t_out + 1);
        assert_eq!(pairs[0].t_anchor, 6);
        assert_eq!(pairs[0].in_range, 0..4);
        assert_eq!(pairs[0].out_range, 4..6);
    }

    #[test]
    fn rolling_windows_counting_and_disjointness() {
        let pairs = rolling_windows(30, 8, 3).unwrap();
        assert_eq!(pairs.len(), 30 - 8 - 3 + 1);
        for p in &pairs {
            assert_eq!(p.in_range.len(), 8);
            assert_eq!(p.out_range.len(), 3);
            // Contiguous and disjoint.
            assert_eq!(p.in_range.end, p.out_range.start);
            // Causality: nothing at or past the anchor.
            assert!(p.out_range.end <= p.t_anchor);
        }
    }

    #[test]
    fn rolling_windows_insufficient_history() {
        assert!(matches!(
            rolling_windows(6, 4, 2).map(|_| ()),
            Ok(())
        ));
        assert!(matches!(
            rolling_windows(6, 4, 3),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn select_assets_reorders_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let panel = ReturnPanel::new(
            vec!["A".into(), "B".into()],
            vec!["d0".into(), "d1".into()],
            x,
        )
        .unwrap();
        let picked = panel.select_assets(&["B".into()]).unwrap();
        assert_eq!(picked.n_assets(), 1);
        assert_eq!(picked.returns()[(0, 0)], 3.0);
        assert!(panel.select_assets(&["Z".into()]).is_err());
    }

    #[test]
    fn bad_bars_are_rejected() {
        let bad = OhlcPanel::new(
            vec!["A".into()],
            vec!["2020-01-01".into()],
            flat_bar(10.0, 1),
            flat_bar(9.0, 1), // high below open
            flat_bar(8.0, 1),
            flat_bar(10.0, 1),
        );
        assert!(bad.is_err());

        let negative = OhlcPanel::new(
            vec!["A".into()],
            vec!["2020-01-01".into()],
            flat_bar(-1.0, 1),
            flat_bar(1.0, 1),
            flat_bar(-2.0, 1),
            flat_bar(1.0, 1),
        );
        assert!(matches!(negative, Err(Error::NonPositivePrice { .. })));
    }
}
