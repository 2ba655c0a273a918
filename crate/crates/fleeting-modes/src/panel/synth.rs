//! Synthetic Gaussian markets with an optional correlation regime shift,
//! used to validate the detector at desk scale where real data would be
//! needed otherwise.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::ReturnPanel;
use crate::linalg::{self, SymmetricMatrix};
use crate::{Error, Result};

/// True correlation structure of the simulated market.
#[derive(Debug, Clone)]
pub enum CorrelationScenario {
    Identity,
    /// Constant pairwise correlation `rho`; SPD for `rho ∈ (-1/(N-1), 1)`.
    Equicorrelated { rho: f64 },
    Custom(SymmetricMatrix),
}

impl CorrelationScenario {
    pub fn matrix(&self, n_assets: usize) -> Result<SymmetricMatrix> {
        match self {
            Self::Identity => Ok(SymmetricMatrix::identity(n_assets)),
            Self::Equicorrelated { rho } => SymmetricMatrix::from_fn(n_assets, |i, j| {
                if i == j {
                    1.0
                } else {
                    *rho
                }
            }),
            Self::Custom(c) => {
                if c.dim() != n_assets {
                    return Err(Error::DimensionMismatch {
                        expected: n_assets,
                        actual: c.dim(),
                    });
                }
                Ok(c.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Equicorrelated { rho } => format!("equicorrelated(rho={rho})"),
            Self::Custom(_) => "custom".into(),
        }
    }
}

/// A one-off change of the true covariance: from day `at` onward, variance
/// `added_variance` is added along the unit `direction`.
#[derive(Debug, Clone)]
pub struct RegimeShift {
    at: usize,
    direction: DVector<f64>,
    added_variance: f64,
}

impl RegimeShift {
    pub fn new(at: usize, direction: DVector<f64>, added_variance: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || direction.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(
                "shift direction must be a nonzero finite vector".into(),
            ));
        }
        if !(added_variance >= 0.0) {
            return Err(Error::InvalidParams(
                "added variance must be nonnegative".into(),
            ));
        }
        Ok(Self {
            at,
            direction: direction / norm,
            added_variance,
        })
    }

    /// Shift along a uniformly random unit direction.
    pub fn random_direction(at: usize, n_assets: usize, added_variance: f64, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, 0);
        let direction =
            DVector::<f64>::from_fn(n_assets, |_, _| StandardNormal.sample(&mut rng));
        Self::new(at, direction, added_variance)
    }

    pub fn at(&self) -> usize {
        self.at
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn added_variance(&self) -> f64 {
        self.added_variance
    }
}

/// Ground-truth record of a simulation, for later alignment checks.
#[derive(Debug, Clone)]
pub struct SynthMeta {
    pub seed: u64,
    pub n_assets: usize,
    pub t_total: usize,
    pub scenario: String,
    pub shift: Option<ShiftMeta>,
}

#[derive(Debug, Clone)]
pub struct ShiftMeta {
    pub at: usize,
    pub added_variance: f64,
    /// Unit-norm injected direction over assets.
    pub direction: Vec<f64>,
}

fn spd_sqrt(c: &SymmetricMatrix) -> Result<DMatrix<f64>> {
    let eig = linalg::eigendecompose(c)?;
    if eig.values()[eig.dim() - 1] <= 0.0 {
        return Err(Error::ScenarioNotSpd);
    }
    let mut scaled = eig.vectors().clone();
    for k in 0..eig.dim() {
        scaled.column_mut(k).scale_mut(eig.values()[k].sqrt());
    }
    Ok(&scaled * eig.vectors().transpose())
}

fn synthetic_labels(n_assets: usize, t_total: usize) -> (Vec<String>, Vec<String>) {
    let assets = (0..n_assets).map(|i| format!("A{i:04}")).collect();
    let dates = (0..t_total).map(|t| format!("t{t:06}")).collect();
    (assets, dates)
}

/// Simulates `X_t = C(t)^{1/2} ξ_t` with standard Gaussian noise and the
/// covariance switching at the shift date.
///
/// The noise panel depends only on `(seed, N, T)`, never on the scenario, so
/// runs with the same seed but different correlation structures share their
/// noise draws exactly.
pub fn synth_market(
    n_assets: usize,
    t_total: usize,
    scenario: &CorrelationScenario,
    shift: Option<&RegimeShift>,
    seed: u64,
) -> Result<(ReturnPanel, SynthMeta)> {
    if n_assets == 0 || t_total == 0 {
        return Err(Error::InvalidParams(
            "synthetic market needs assets and dates".into(),
        ));
    }
    let c_pre = scenario.matrix(n_assets)?;
    let root_pre = spd_sqrt(&c_pre)?;

    let mut rng = crate::rng::stream(seed, 0);
    let noise = DMatrix::<f64>::from_fn(n_assets, t_total, |_, _| StandardNormal.sample(&mut rng));

    let shift_meta = match shift {
        Some(s) => {
            if s.direction.len() != n_assets {
                return Err(Error::DimensionMismatch {
                    expected: n_assets,
                    actual: s.direction.len(),
                });
            }
            if s.at > t_total {
                return Err(Error::InvalidParams(format!(
                    "shift date {} past the end of the panel {t_total}",
                    s.at
                )));
            }
            Some(s)
        }
        None => None,
    };

    let split = shift_meta.map_or(t_total, |s| s.at.min(t_total));
    let mut x = DMatrix::zeros(n_assets, t_total);
    if split > 0 {
        let pre = &root_pre * noise.columns(0, split);
        x.columns_mut(0, split).copy_from(&pre);
    }
    if split < t_total {
        let s = shift_meta.expect("split < t_total only with a shift");
        let bump = &s.direction * s.direction.transpose() * s.added_variance;
        let c_post = SymmetricMatrix::from_matrix(c_pre.matrix() + bump)?;
        let root_post = spd_sqrt(&c_post)?;
        let post = &root_post * noise.columns(split, t_total - split);
        x.columns_mut(split, t_total - split).copy_from(&post);
    }

    let (assets, dates) = synthetic_labels(n_assets, t_total);
    let panel = ReturnPanel::new(assets, dates, x)?;
    let meta = SynthMeta {
        seed,
        n_assets,
        t_total,
        scenario: scenario.label(),
        shift: shift_meta.map(|s| ShiftMeta {
            at: s.at,
            added_variance: s.added_variance,
            direction: s.direction.iter().copied().collect(),
        }),
    };
    Ok((panel, meta))
}

/// Adds independent Gaussian variance along `direction` to every column at or
/// after `at`: the post-shift covariance becomes `C + added_variance · uuᵀ`.
///
/// Used when the injected direction must be computed from the panel itself
/// (e.g. aligned with a factor) rather than drawn up front.
pub fn inject_direction_variance(
    panel: &ReturnPanel,
    at: usize,
    direction: &DVector<f64>,
    added_variance: f64,
    seed: u64,
) -> Result<ReturnPanel> {
    if direction.len() != panel.n_assets() {
        return Err(Error::DimensionMismatch {
            expected: panel.n_assets(),
            actual: direction.len(),
        });
    }
    if at > panel.n_dates() {
        return Err(Error::InvalidParams(format!(
            "injection date {at} past the end of the panel {}",
            panel.n_dates()
        )));
    }
    let norm = direction.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidParams("direction must be nonzero".into()));
    }
    if !(added_variance >= 0.0) {
        return Err(Error::InvalidParams(
            "added variance must be nonnegative".into(),
        ));
    }
    let unit = direction / norm;
    let amp = added_variance.sqrt();
    let mut rng = crate::rng::stream(seed, 0);
    let mut x = panel.returns().clone();
    for t in at..panel.n_dates() {
        let eta: f64 = StandardNormal.sample(&mut rng);
        let add = &unit * (amp * eta);
        for i in 0..panel.n_assets() {
            x[(i, t)] += add[i];
        }
    }
    ReturnPanel::new(panel.assets().to_vec(), panel.dates().to_vec(), x)
}
