//! Command implementations. Each command creates the output directory,
//! writes its tables, and finishes with a `manifest.json` echoing the
//! resolved configuration. All numeric output uses the shortest round-trip
//! decimal form, so outputs are locale-independent and reproducible byte for
//! byte given (config, seeds).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use fleeting_modes::analytics::{
    conditional_groups, momentum_factor, phi_curve, psi_curve, psi_null_curve,
    scrambled_factor_null, CurveCondition, OverlapCurve,
};
use fleeting_modes::engine::{flag_exceedances, rolling_analysis, FleetingModeSet, RollingSeries};
use fleeting_modes::null_model::{
    calibrate_edge, finite_n_shift, moments, spectral_density, support_edges, zero_count,
    NullParams,
};
use fleeting_modes::panel::{
    detect_layout, read_ohlc_long, read_ohlc_wide, read_prices_wide, read_returns_wide,
    sample_covariance, synth_market, write_returns_wide, write_wide_matrix, CorrelationScenario,
    DataLayout, PricePanel, RegimeShift, ReturnPanel,
};
use fleeting_modes::Error;

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn create_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        CliError::Core(Error::Data(format!(
            "cannot create output directory {}: {e}",
            cfg.out_dir.display()
        )))
    })
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(Error::Io)?))
}

fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'a str,
        version: &'a str,
        config: &'a RunConfig,
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
    };
    let path = cfg.out_dir.join("manifest.json");
    let mut out = writer(&path)?;
    serde_json::to_writer_pretty(&mut out, &manifest)
        .map_err(|e| CliError::Core(Error::Data(format!("manifest: {e}"))))?;
    out.write_all(b"\n").map_err(Error::Io)?;
    out.flush().map_err(Error::Io)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// data loading
// ---------------------------------------------------------------------------

/// Loads the return panel and, when the input carries prices, the close-price
/// panel for factor construction.
fn load_panels(cfg: &RunConfig) -> Result<(ReturnPanel, Option<PricePanel>)> {
    let delim = cfg.delimiter as u8;
    let (mut returns, mut prices): (ReturnPanel, Option<PricePanel>) =
        if let Some(path) = &cfg.returns {
            let panel = read_returns_wide(path, delim)?;
            let prices = match &cfg.close {
                Some(close) => Some(read_prices_wide(close, delim)?),
                None => None,
            };
            (panel, prices)
        } else if let Some(path) = &cfg.data {
            match detect_layout(path, delim)? {
                DataLayout::OhlcLong => {
                    let ohlc = read_ohlc_long(path, delim)?;
                    let prices = ohlc.close_panel();
                    (
                        fleeting_modes::panel::normalize_returns(&ohlc, cfg.vol_floor)?,
                        Some(prices),
                    )
                }
                DataLayout::WideMatrix => (read_returns_wide(path, delim)?, None),
            }
        } else if let (Some(open), Some(high), Some(low), Some(close)) =
            (&cfg.open, &cfg.high, &cfg.low, &cfg.close)
        {
            let ohlc = read_ohlc_wide(open, high, low, close, delim)?;
            let prices = ohlc.close_panel();
            (
                fleeting_modes::panel::normalize_returns(&ohlc, cfg.vol_floor)?,
                Some(prices),
            )
        } else {
            return Err(CliError::InvalidConfig(
                "no input: give --data, --returns, or all of --open/--high/--low/--close".into(),
            ));
        };

    if let Some(wanted) = &cfg.assets {
        returns = returns.select_assets(wanted)?;
        prices = match prices {
            Some(p) => Some(p.select_assets(wanted)?),
            None => None,
        };
    }
    Ok((returns, prices))
}

fn series_params(cfg: &RunConfig, panel: &ReturnPanel) -> Result<(usize, usize, NullParams)> {
    let n = panel.n_assets();
    let (t_in, t_out) = cfg.windows_for(n)?;
    let params = NullParams::from_windows(n, t_in, t_out)?;
    Ok((t_in, t_out, params))
}

// ---------------------------------------------------------------------------
// null-spectrum
// ---------------------------------------------------------------------------

pub fn null_spectrum(cfg: &RunConfig) -> Result<()> {
    let params = NullParams::new(cfg.n_assets.unwrap_or(100), cfg.q_in, cfg.q_out)?;
    let edges = support_edges(&params);
    let m = moments(&params);

    create_out_dir(cfg)?;
    let path = cfg.out_dir.join("null_spectrum.csv");
    let mut out = writer(&path)?;
    let d = cfg.delimiter;
    writeln!(out, "# q_in={}", cfg.q_in).map_err(Error::Io)?;
    writeln!(out, "# q_out={}", cfg.q_out).map_err(Error::Io)?;
    writeln!(out, "# lambda_min={}", edges.lambda_min).map_err(Error::Io)?;
    writeln!(out, "# lambda_max={}", edges.lambda_max).map_err(Error::Io)?;
    writeln!(out, "# zero_mass={}", edges.zero_mass).map_err(Error::Io)?;
    writeln!(out, "# mean={}", m.mean).map_err(Error::Io)?;
    writeln!(out, "# variance={}", m.variance).map_err(Error::Io)?;
    if let Some(n) = cfg.n_assets {
        let shift = finite_n_shift(n, cfg.edge_constant)?;
        writeln!(out, "# finite_n_shift={shift}").map_err(Error::Io)?;
    }
    writeln!(out, "lambda{d}density").map_err(Error::Io)?;
    for k in 0..cfg.grid {
        let lambda = edges.lambda_min
            + (edges.lambda_max - edges.lambda_min) * k as f64 / (cfg.grid - 1) as f64;
        writeln!(out, "{lambda}{d}{}", spectral_density(lambda, &params)).map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;

    write_manifest(cfg, "null-spectrum")?;
    println!(
        "null-spectrum: {} points on [{:.6}, {:.6}], zero mass {:.4} -> {}",
        cfg.grid,
        edges.lambda_min,
        edges.lambda_max,
        edges.zero_mass,
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_scenario(spec: &str) -> Result<CorrelationScenario> {
    if spec.eq_ignore_ascii_case("identity") {
        return Ok(CorrelationScenario::Identity);
    }
    if let Some(rho) = spec
        .strip_prefix("equicorr:")
        .or_else(|| spec.strip_prefix("EQUICORR:"))
    {
        let rho: f64 = rho.parse().map_err(|_| {
            CliError::InvalidConfig(format!("bad equicorrelation value in scenario {spec:?}"))
        })?;
        return Ok(CorrelationScenario::Equicorrelated { rho });
    }
    Err(CliError::InvalidConfig(format!(
        "unknown scenario {spec:?}; use \"identity\" or \"equicorr:<rho>\""
    )))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let n = cfg
        .n_assets
        .ok_or_else(|| CliError::InvalidConfig("simulate needs --n-assets".into()))?;
    let t_total = cfg
        .t_total
        .ok_or_else(|| CliError::InvalidConfig("simulate needs --t-total".into()))?;
    let scenario = parse_scenario(&cfg.scenario)?;
    let shift = match cfg.shift_at {
        Some(at) => Some(RegimeShift::random_direction(
            at,
            n,
            cfg.shift_variance.unwrap_or(24.0),
            // Direction stream kept apart from the market noise stream.
            cfg.seed ^ 0x5113_df00_0000_0001,
        )?),
        None => None,
    };

    let (panel, meta) = synth_market(n, t_total, &scenario, shift.as_ref(), cfg.seed)?;
    let prices = panel.compound_prices(cfg.price_scale)?;

    create_out_dir(cfg)?;
    let delim = cfg.delimiter as u8;
    write_returns_wide(&panel, &cfg.out_dir.join("returns.csv"), delim)?;
    write_wide_matrix(
        prices.assets(),
        prices.dates(),
        prices.prices(),
        &cfg.out_dir.join("prices.csv"),
        delim,
    )?;

    #[derive(Serialize)]
    struct ShiftOut {
        at: usize,
        added_variance: f64,
        direction: Vec<f64>,
    }
    #[derive(Serialize)]
    struct MetaOut<'a> {
        seed: u64,
        n_assets: usize,
        t_total: usize,
        scenario: &'a str,
        price_scale: f64,
        shift: Option<ShiftOut>,
    }
    let meta_out = MetaOut {
        seed: meta.seed,
        n_assets: meta.n_assets,
        t_total: meta.t_total,
        scenario: &meta.scenario,
        price_scale: cfg.price_scale,
        shift: meta.shift.as_ref().map(|s| ShiftOut {
            at: s.at,
            added_variance: s.added_variance,
            direction: s.direction.clone(),
        }),
    };
    let mut out = writer(&cfg.out_dir.join("synth_meta.json"))?;
    serde_json::to_writer_pretty(&mut out, &meta_out)
        .map_err(|e| CliError::Core(Error::Data(format!("metadata: {e}"))))?;
    out.write_all(b"\n").map_err(Error::Io)?;
    out.flush().map_err(Error::Io)?;

    write_manifest(cfg, "simulate")?;
    println!(
        "simulate: {n} assets x {t_total} days ({}) -> {}",
        meta.scenario,
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn write_failures(series: &RollingSeries, cfg: &RunConfig) -> Result<usize> {
    let failures: Vec<_> = series.failures().collect();
    if failures.is_empty() {
        return Ok(0);
    }
    let d = cfg.delimiter;
    let mut out = writer(&cfg.out_dir.join("failures.csv"))?;
    writeln!(out, "date{d}t_anchor{d}message").map_err(Error::Io)?;
    for f in &failures {
        let msg = f.message.replace(cfg.delimiter, ";");
        writeln!(out, "{}{d}{}{d}{msg}", f.date, f.t_anchor).map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;
    Ok(failures.len())
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let (panel, _) = load_panels(cfg)?;
    let (t_in, t_out, params) = series_params(cfg, &panel)?;
    let n = panel.n_assets();
    let series = rolling_analysis(&panel, t_in, t_out, cfg.eigenvalue_floor)?;
    let reports = flag_exceedances(&series, &params, cfg.edge_constant)?;

    create_out_dir(cfg)?;
    let d = cfg.delimiter;

    // Per-date eigenvalue table, all N values descending.
    let mut out = writer(&cfg.out_dir.join("eigenvalues.csv"))?;
    write!(out, "date").map_err(Error::Io)?;
    for k in 1..=n {
        write!(out, "{d}lambda_{k}").map_err(Error::Io)?;
    }
    writeln!(out).map_err(Error::Io)?;
    for set in series.successes() {
        write!(out, "{}", set.date.as_deref().unwrap_or("")).map_err(Error::Io)?;
        for v in set.lambdas.iter() {
            write!(out, "{d}{v}").map_err(Error::Io)?;
        }
        writeln!(out).map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;

    // Exceedance flags against the finite-size-corrected edge.
    let mut out = writer(&cfg.out_dir.join("exceedances.csv"))?;
    writeln!(out, "date{d}lambda_1{d}threshold{d}exceeds{d}margin").map_err(Error::Io)?;
    for r in &reports {
        writeln!(
            out,
            "{}{d}{}{d}{}{d}{}{d}{}",
            r.date, r.lambda_1, r.threshold, r.exceeds, r.margin
        )
        .map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;

    // Pooled nonzero spectrum against the null density.
    let edges = support_edges(&params);
    let mut pooled: Vec<f64> = Vec::new();
    for set in series.successes() {
        let values: Vec<f64> = set.lambdas.iter().copied().collect();
        let zeros = zero_count(&values);
        pooled.extend_from_slice(&values[..values.len() - zeros]);
    }
    pooled.sort_by(|a, b| a.total_cmp(b));
    let mut out = writer(&cfg.out_dir.join("spectrum_hist.csv"))?;
    writeln!(out, "# zero_mass_theory={}", edges.zero_mass).map_err(Error::Io)?;
    writeln!(
        out,
        "# zero_fraction_empirical={}",
        1.0 - pooled.len() as f64 / (n * series.successes().count()) as f64
    )
    .map_err(Error::Io)?;
    writeln!(out, "bin_lo{d}bin_hi{d}empirical_density{d}null_density").map_err(Error::Io)?;
    if !pooled.is_empty() {
        let bins = 50usize;
        let lo = pooled[0].min(edges.lambda_min);
        let hi = pooled[pooled.len() - 1].max(edges.lambda_max) * (1.0 + 1e-12);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &x in &pooled {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let continuous_fraction = 1.0 - edges.zero_mass;
        for (b, &count) in counts.iter().enumerate() {
            let bin_lo = lo + b as f64 * width;
            let bin_hi = bin_lo + width;
            let empirical = count as f64 / (pooled.len() as f64 * width);
            let null = spectral_density(0.5 * (bin_lo + bin_hi), &params) / continuous_fraction;
            writeln!(out, "{bin_lo}{d}{bin_hi}{d}{empirical}{d}{null}").map_err(Error::Io)?;
        }
    }
    out.flush().map_err(Error::Io)?;

    // Leading mode vectors, one JSON record per date.
    #[derive(Serialize)]
    struct ModeRecord<'a> {
        date: &'a str,
        t_anchor: usize,
        lambdas: Vec<f64>,
        modes_asset: Vec<Vec<f64>>,
        modes_risk: Vec<Vec<f64>>,
    }
    let k = cfg.top_k_modes.min(n);
    let mut out = writer(&cfg.out_dir.join("modes.jsonl"))?;
    for set in series.successes() {
        let record = ModeRecord {
            date: set.date.as_deref().unwrap_or(""),
            t_anchor: set.t_anchor.unwrap_or(0),
            lambdas: set.lambdas.iter().take(k).copied().collect(),
            modes_asset: (0..k)
                .map(|a| set.modes_asset_basis.column(a).iter().copied().collect())
                .collect(),
            modes_risk: (0..k)
                .map(|a| set.modes_risk_basis.column(a).iter().copied().collect())
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| CliError::Core(Error::Data(format!("modes: {e}"))))?;
        out.write_all(b"\n").map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;

    let n_failures = write_failures(&series, cfg)?;
    write_manifest(cfg, "analyze")?;
    let exceed = reports.iter().filter(|r| r.exceeds).count();
    println!(
        "analyze: {} dates ({} failed), {} exceed the threshold {:.4} -> {}",
        series.outcomes.len(),
        n_failures,
        exceed,
        reports.first().map_or(f64::NAN, |r| r.threshold),
        cfg.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// overlaps
// ---------------------------------------------------------------------------

fn write_curves(
    path: &Path,
    delimiter: char,
    header_lines: &[String],
    curves: &[&OverlapCurve],
) -> Result<()> {
    let d = delimiter;
    let mut out = writer(path)?;
    for line in header_lines {
        writeln!(out, "# {line}").map_err(Error::Io)?;
    }
    writeln!(out, "n{d}value{d}kind{d}condition").map_err(Error::Io)?;
    for curve in curves {
        for (i, v) in curve.values.iter().enumerate() {
            writeln!(
                out,
                "{}{d}{v}{d}{}{d}{}",
                i + 1,
                curve.kind.as_str(),
                curve.condition.as_str()
            )
            .map_err(Error::Io)?;
        }
    }
    out.flush().map_err(Error::Io)?;
    Ok(())
}

fn average_curves(curves: &[OverlapCurve], condition: CurveCondition) -> OverlapCurve {
    let len = curves[0].values.len();
    let mut mean = vec![0.0; len];
    for c in curves {
        for (m, v) in mean.iter_mut().zip(&c.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= curves.len() as f64;
    }
    OverlapCurve {
        values: mean,
        kind: curves[0].kind,
        condition,
        n_total: curves[0].n_total,
    }
}

pub fn overlaps(cfg: &RunConfig) -> Result<()> {
    let (panel, _) = load_panels(cfg)?;
    let (t_in, t_out, params) = series_params(cfg, &panel)?;
    let series = rolling_analysis(&panel, t_in, t_out, cfg.eigenvalue_floor)?;

    let sets: Vec<&FleetingModeSet> = series.successes().collect();
    if sets.is_empty() {
        return Err(CliError::Core(Error::Data(
            "no date produced a valid mode set".into(),
        )));
    }
    let curves: Vec<OverlapCurve> = sets.iter().map(|s| psi_curve(s)).collect();
    let scores: Vec<f64> = sets.iter().map(|s| s.lambda_1()).collect();
    let (top, bottom) =
        conditional_groups(&curves, &scores, cfg.top_fraction, cfg.bottom_fraction)?;

    // Stationary null on a spread of dates: simulate fresh windows treating
    // each date's E_in as the truth.
    let n_dates = cfg.null_dates.max(1).min(sets.len());
    let stride = sets.len() / n_dates;
    let mut null_curves = Vec::with_capacity(n_dates);
    for j in 0..n_dates {
        let set = sets[(j * stride).min(sets.len() - 1)];
        let anchor = set.t_anchor.expect("rolling sets carry anchors");
        let e_in = sample_covariance(&panel, anchor - t_out - t_in..anchor - t_out)?;
        null_curves.push(psi_null_curve(
            &e_in,
            &params,
            cfg.null_reps,
            cfg.seed.wrapping_add(j as u64),
        )?);
    }
    let null = average_curves(&null_curves, CurveCondition::Null);

    create_out_dir(cfg)?;
    let path = cfg.out_dir.join("overlap_curves.csv");
    write_curves(
        &path,
        cfg.delimiter,
        &[
            format!("top_fraction={}", cfg.top_fraction),
            format!("bottom_fraction={}", cfg.bottom_fraction),
            format!("null_dates={n_dates} null_reps={}", cfg.null_reps),
        ],
        &[&top, &bottom, &null],
    )?;
    let n_failures = write_failures(&series, cfg)?;
    write_manifest(cfg, "overlaps")?;
    println!(
        "overlaps: {} dates ({} failed), psi_1 top/bottom/null = {:.4}/{:.4}/{:.4} -> {}",
        sets.len(),
        n_failures,
        top.values[0],
        bottom.values[0],
        null.values[0],
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// factor-align
// ---------------------------------------------------------------------------

pub fn factor_align(cfg: &RunConfig) -> Result<()> {
    let (panel, prices) = load_panels(cfg)?;
    let prices = prices.ok_or_else(|| {
        CliError::InvalidConfig(
            "factor-align needs close prices: give OHLC input or --close next to --returns".into(),
        )
    })?;
    let (t_in, t_out, _params) = series_params(cfg, &panel)?;
    let n = panel.n_assets();
    let n_max = cfg.n_max.min(n);
    let series = rolling_analysis(&panel, t_in, t_out, cfg.eigenvalue_floor)?;

    let mut phi_curves: Vec<OverlapCurve> = Vec::new();
    let mut null_curves: Vec<OverlapCurve> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut loadings_rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut skipped: Vec<(String, String)> = Vec::new();

    for (j, set) in series.successes().enumerate() {
        let date = set.date.clone().expect("rolling sets carry dates");
        let price_index = match prices.dates().iter().position(|d| *d == date) {
            Some(i) => i,
            None => {
                return Err(CliError::Core(Error::Data(format!(
                    "price panel does not cover analysis date {date}"
                ))))
            }
        };
        match momentum_factor(&prices, cfg.halflife, cfg.lag, price_index) {
            Ok(factor) => {
                let phi = phi_curve(&factor, set, n_max)?;
                let null = scrambled_factor_null(
                    &factor,
                    set,
                    n_max,
                    cfg.null_reps.max(1),
                    cfg.seed.wrapping_add(1 + j as u64),
                )?;
                scores.push(set.lambda_1());
                loadings_rows.push((date, factor.loadings.iter().copied().collect()));
                phi_curves.push(phi);
                null_curves.push(null);
            }
            // Burn-in or degenerate factors are per-date conditions, not
            // reasons to abort the scan.
            Err(e @ (Error::InsufficientHistory { .. } | Error::DegenerateFactor)) => {
                skipped.push((date, e.to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if phi_curves.is_empty() {
        return Err(CliError::Core(Error::Data(format!(
            "no date had enough price history for the momentum factor \
             (first skip: {})",
            skipped
                .first()
                .map(|(d, m)| format!("{d}: {m}"))
                .unwrap_or_default()
        ))));
    }

    let (top, bottom) =
        conditional_groups(&phi_curves, &scores, cfg.top_fraction, cfg.bottom_fraction)?;
    let null = average_curves(&null_curves, CurveCondition::Null);

    create_out_dir(cfg)?;
    let d = cfg.delimiter;
    let path = cfg.out_dir.join("factor_curves.csv");
    write_curves(
        &path,
        cfg.delimiter,
        &[
            format!("factor=momentum halflife={} lag={}", cfg.halflife, cfg.lag),
            format!("n_max={n_max}"),
            format!("top_fraction={}", cfg.top_fraction),
            format!("bottom_fraction={}", cfg.bottom_fraction),
            format!("dates={} skipped={}", phi_curves.len(), skipped.len()),
        ],
        &[&top, &bottom, &null],
    )?;

    let mut out = writer(&cfg.out_dir.join("factor_loadings.csv"))?;
    writeln!(out, "date{d}asset{d}loading").map_err(Error::Io)?;
    for (date, loadings) in &loadings_rows {
        for (asset, value) in panel.assets().iter().zip(loadings) {
            writeln!(out, "{date}{d}{asset}{d}{value}").map_err(Error::Io)?;
        }
    }
    out.flush().map_err(Error::Io)?;

    if !skipped.is_empty() {
        let mut out = writer(&cfg.out_dir.join("factor_skipped.csv"))?;
        writeln!(out, "date{d}reason").map_err(Error::Io)?;
        for (date, reason) in &skipped {
            writeln!(out, "{date}{d}{}", reason.replace(d, ";")).map_err(Error::Io)?;
        }
        out.flush().map_err(Error::Io)?;
    }

    write_manifest(cfg, "factor-align")?;
    println!(
        "factor-align: {} dates ({} skipped), phi_{n_max} top/null = {:.4}/{:.4} -> {}",
        phi_curves.len(),
        skipped.len(),
        top.values[n_max - 1],
        null.values[n_max - 1],
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate-edge
// ---------------------------------------------------------------------------

pub fn calibrate_edge_cmd(cfg: &RunConfig) -> Result<()> {
    let n = cfg
        .n_assets
        .ok_or_else(|| CliError::InvalidConfig("calibrate-edge needs --n-assets".into()))?;
    let params = NullParams::new(n, cfg.q_in, cfg.q_out)?;
    let cal = calibrate_edge(&params, cfg.calib_reps, cfg.target_quantile, cfg.seed)?;
    let edges = support_edges(&params);
    let default_threshold = edges.lambda_max - finite_n_shift(n, cfg.edge_constant)?;

    create_out_dir(cfg)?;

    #[derive(Serialize)]
    struct CalOut {
        n_assets: usize,
        q_in: f64,
        q_out: f64,
        t_in: usize,
        t_out: usize,
        n_rep: usize,
        target_quantile: f64,
        lambda_max: f64,
        threshold: f64,
        delta: f64,
        c: Option<f64>,
        lambda1_mean: f64,
        lambda1_std: f64,
        default_constant_threshold: f64,
    }
    let summary = CalOut {
        n_assets: n,
        q_in: cfg.q_in,
        q_out: cfg.q_out,
        t_in: params.t_in(),
        t_out: params.t_out(),
        n_rep: cfg.calib_reps,
        target_quantile: cal.target_quantile,
        lambda_max: edges.lambda_max,
        threshold: cal.threshold,
        delta: cal.delta,
        c: cal.c,
        lambda1_mean: cal.lambda1_mean,
        lambda1_std: cal.lambda1_std,
        default_constant_threshold: default_threshold,
    };
    let mut out = writer(&cfg.out_dir.join("edge_calibration.json"))?;
    serde_json::to_writer_pretty(&mut out, &summary)
        .map_err(|e| CliError::Core(Error::Data(format!("calibration: {e}"))))?;
    out.write_all(b"\n").map_err(Error::Io)?;
    out.flush().map_err(Error::Io)?;

    let mut out = writer(&cfg.out_dir.join("lambda1_samples.csv"))?;
    writeln!(out, "lambda_1").map_err(Error::Io)?;
    for v in &cal.lambda1_samples {
        writeln!(out, "{v}").map_err(Error::Io)?;
    }
    out.flush().map_err(Error::Io)?;

    write_manifest(cfg, "calibrate-edge")?;
    println!(
        "calibrate-edge: threshold at q{:.2} = {:.4} (lambda_max {:.4}, delta {:+.4}, c {}) -> {}",
        cal.target_quantile,
        cal.threshold,
        edges.lambda_max,
        cal.delta,
        cal.c.map_or("n/a".into(), |c| format!("{c:.3e}")),
        cfg.out_dir.display()
    );
    Ok(())
}
