//! Command-line front end: simulation, rolling analysis, overlap
//! diagnostics, factor alignment, and null-spectrum tables.
//!
//! Every command resolves its configuration (flags over file over defaults),
//! writes a `manifest.json` echoing the resolved values, and emits plain
//! delimiter-separated tables; re-running with the same configuration and
//! seeds reproduces the outputs byte for byte.

// `!(v > 0.0)` guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, RunConfig};

#[derive(Debug)]
pub enum CliError {
    InvalidConfig(String),
    Core(fleeting_modes::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<fleeting_modes::Error> for CliError {
    fn from(e: fleeting_modes::Error) -> Self {
        Self::Core(e)
    }
}

impl CliError {
    /// Exit codes: 2 invalid configuration, 3 data error, 4 numerical failure.
    fn exit_code(&self) -> u8 {
        use fleeting_modes::Error as E;
        match self {
            Self::InvalidConfig(_) => 2,
            Self::Core(e) => match e {
                E::InvalidParams(_) | E::ParamsMismatch(_) => 2,
                E::NumericalFailure | E::SingularMatrix(_) | E::NotPositiveDefinite(_) => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fleeting-modes",
    version,
    about = "Detects portfolio directions with statistically significant out-of-sample excess risk"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (also settable via FLEETING_MODES_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Base seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataOpts {
    /// Input table: long OHLC (date,asset,open,high,low,close) or a wide
    /// returns matrix (date,<asset>,...), detected by header.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Cached wide returns matrix.
    #[arg(long)]
    returns: Option<PathBuf>,

    /// Wide per-field OHLC matrices (all four required together).
    #[arg(long)]
    open: Option<PathBuf>,
    #[arg(long)]
    high: Option<PathBuf>,
    #[arg(long)]
    low: Option<PathBuf>,
    /// Wide close-price matrix; alone it supplies prices for factor
    /// construction next to --returns.
    #[arg(long)]
    close: Option<PathBuf>,

    /// Universe selection: comma-separated asset labels.
    #[arg(long, value_delimiter = ',')]
    assets: Option<Vec<String>>,

    /// Field delimiter of input and output tables.
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args, Default)]
struct WindowOpts {
    /// Explicit in-sample window length (overrides q-in).
    #[arg(long)]
    t_in: Option<usize>,
    /// Explicit out-of-sample window length (overrides q-out).
    #[arg(long)]
    t_out: Option<usize>,
    /// Dimension-to-samples ratio N/T_in.
    #[arg(long)]
    q_in: Option<f64>,
    /// Dimension-to-samples ratio N/T_out.
    #[arg(long)]
    q_out: Option<f64>,
    /// Garman-Klass volatility floor (per-day return units).
    #[arg(long)]
    vol_floor: Option<f64>,
    /// Relative eigenvalue floor for covariance inversion.
    #[arg(long)]
    eigenvalue_floor: Option<f64>,
    /// Finite-size edge constant c in (cN)^(-2/3).
    #[arg(long)]
    edge_constant: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form null spectrum table with edges, Dirac weight and moments.
    NullSpectrum {
        #[arg(long)]
        q_in: Option<f64>,
        #[arg(long)]
        q_out: Option<f64>,
        /// Universe size; adds the finite-size edge shift to the header.
        #[arg(long)]
        n_assets: Option<usize>,
        /// Number of grid points across the support.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        edge_constant: Option<f64>,
    },
    /// Generate a synthetic market (optionally with a regime shift).
    Simulate {
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        t_total: Option<usize>,
        /// Correlation scenario: "identity" or "equicorr:<rho>".
        #[arg(long)]
        scenario: Option<String>,
        /// Day index at which the covariance shifts.
        #[arg(long)]
        shift_at: Option<usize>,
        /// Variance added along the (random unit) shift direction.
        #[arg(long)]
        shift_variance: Option<f64>,
        /// Return-to-price compounding scale for the emitted price panel.
        #[arg(long)]
        price_scale: Option<f64>,
        #[arg(long)]
        delimiter: Option<char>,
    },
    /// Rolling fleeting-mode scan: eigenvalues, exceedances, pooled spectrum.
    Analyze {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        windows: WindowOpts,
        /// Number of leading mode vectors written per date.
        #[arg(long)]
        top_k_modes: Option<usize>,
    },
    /// Cumulative risk-mode overlap curves, conditioned and against the null.
    Overlaps {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        windows: WindowOpts,
        /// Fraction of dates in the top risk-over-realization group.
        #[arg(long)]
        top_fraction: Option<f64>,
        /// Fraction of dates in the bottom group.
        #[arg(long)]
        bottom_fraction: Option<f64>,
        /// Monte Carlo repeats per null date.
        #[arg(long)]
        null_reps: Option<usize>,
        /// Number of dates the stationary null is simulated on.
        #[arg(long)]
        null_dates: Option<usize>,
    },
    /// Momentum-factor alignment curves against the scrambled-sign null.
    FactorAlign {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        windows: WindowOpts,
        /// EWMA halflife of the trend signal, in days.
        #[arg(long)]
        halflife: Option<f64>,
        /// Signal lag in days.
        #[arg(long)]
        lag: Option<usize>,
        /// Number of leading fleeting modes in the curves.
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        top_fraction: Option<f64>,
        #[arg(long)]
        bottom_fraction: Option<f64>,
        /// Scrambled-sign repeats per date.
        #[arg(long)]
        null_reps: Option<usize>,
    },
    /// Monte Carlo calibration of the finite-size edge constant.
    CalibrateEdge {
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        q_in: Option<f64>,
        #[arg(long)]
        q_out: Option<f64>,
        /// Number of benchmark samples.
        #[arg(long)]
        reps: Option<usize>,
        /// Null quantile of lambda_1 the threshold should sit at.
        #[arg(long)]
        target_quantile: Option<f64>,
    },
}

fn apply_data_opts(cfg: &mut RunConfig, data: DataOpts) {
    let DataOpts {
        data,
        returns,
        open,
        high,
        low,
        close,
        assets,
        delimiter,
    } = data;
    if data.is_some() {
        cfg.data = data;
    }
    if returns.is_some() {
        cfg.returns = returns;
    }
    if open.is_some() {
        cfg.open = open;
    }
    if high.is_some() {
        cfg.high = high;
    }
    if low.is_some() {
        cfg.low = low;
    }
    if close.is_some() {
        cfg.close = close;
    }
    if assets.is_some() {
        cfg.assets = assets;
    }
    if let Some(d) = delimiter {
        cfg.delimiter = d;
    }
}

fn apply_window_opts(cfg: &mut RunConfig, w: WindowOpts) {
    if w.t_in.is_some() {
        cfg.t_in = w.t_in;
    }
    if w.t_out.is_some() {
        cfg.t_out = w.t_out;
    }
    if let Some(v) = w.q_in {
        cfg.q_in = v;
    }
    if let Some(v) = w.q_out {
        cfg.q_out = v;
    }
    if let Some(v) = w.vol_floor {
        cfg.vol_floor = v;
    }
    if let Some(v) = w.eigenvalue_floor {
        cfg.eigenvalue_floor = v;
    }
    if let Some(v) = w.edge_constant {
        cfg.edge_constant = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(FileConfig::load(path)?);
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::NullSpectrum {
            q_in,
            q_out,
            n_assets,
            grid,
            edge_constant,
        } => {
            if let Some(v) = q_in {
                cfg.q_in = v;
            }
            if let Some(v) = q_out {
                cfg.q_out = v;
            }
            if n_assets.is_some() {
                cfg.n_assets = n_assets;
            }
            if let Some(v) = grid {
                cfg.grid = v;
            }
            if let Some(v) = edge_constant {
                cfg.edge_constant = v;
            }
            cfg.validate()?;
            commands::null_spectrum(&cfg)
        }
        Command::Simulate {
            n_assets,
            t_total,
            scenario,
            shift_at,
            shift_variance,
            price_scale,
            delimiter,
        } => {
            if n_assets.is_some() {
                cfg.n_assets = n_assets;
            }
            if t_total.is_some() {
                cfg.t_total = t_total;
            }
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if shift_at.is_some() {
                cfg.shift_at = shift_at;
            }
            if shift_variance.is_some() {
                cfg.shift_variance = shift_variance;
            }
            if let Some(v) = price_scale {
                cfg.price_scale = v;
            }
            if let Some(d) = delimiter {
                cfg.delimiter = d;
            }
            cfg.validate()?;
            commands::simulate(&cfg)
        }
        Command::Analyze {
            data,
            windows,
            top_k_modes,
        } => {
            apply_data_opts(&mut cfg, data);
            apply_window_opts(&mut cfg, windows);
            if let Some(k) = top_k_modes {
                cfg.top_k_modes = k;
            }
            cfg.validate()?;
            commands::analyze(&cfg)
        }
        Command::Overlaps {
            data,
            windows,
            top_fraction,
            bottom_fraction,
            null_reps,
            null_dates,
        } => {
            apply_data_opts(&mut cfg, data);
            apply_window_opts(&mut cfg, windows);
            if let Some(v) = top_fraction {
                cfg.top_fraction = v;
            }
            if let Some(v) = bottom_fraction {
                cfg.bottom_fraction = v;
            }
            if let Some(v) = null_reps {
                cfg.null_reps = v;
            }
            if let Some(v) = null_dates {
                cfg.null_dates = v;
            }
            cfg.validate()?;
            commands::overlaps(&cfg)
        }
        Command::FactorAlign {
            data,
            windows,
            halflife,
            lag,
            n_max,
            top_fraction,
            bottom_fraction,
            null_reps,
        } => {
            apply_data_opts(&mut cfg, data);
            apply_window_opts(&mut cfg, windows);
            if let Some(v) = halflife {
                cfg.halflife = v;
            }
            if let Some(v) = lag {
                cfg.lag = v;
            }
            if let Some(v) = n_max {
                cfg.n_max = v;
            }
            if let Some(v) = top_fraction {
                cfg.top_fraction = v;
            }
            if let Some(v) = bottom_fraction {
                cfg.bottom_fraction = v;
            }
            if let Some(v) = null_reps {
                cfg.null_reps = v;
            }
            cfg.validate()?;
            commands::factor_align(&cfg)
        }
        Command::CalibrateEdge {
            n_assets,
            q_in,
            q_out,
            reps,
            target_quantile,
        } => {
            if n_assets.is_some() {
                cfg.n_assets = n_assets;
            }
            if let Some(v) = q_in {
                cfg.q_in = v;
            }
            if let Some(v) = q_out {
                cfg.q_out = v;
            }
            if let Some(v) = reps {
                cfg.calib_reps = v;
            }
            if let Some(v) = target_quantile {
                cfg.target_quantile = v;
            }
            cfg.validate()?;
            commands::calibrate_edge_cmd(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
