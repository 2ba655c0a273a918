//! Symmetric-matrix kernels: eigendecomposition with a deterministic ordering
//! and sign convention, symmetric square roots, and the overlap-matrix
//! construction `D = E_in^{-1/2} E_out E_in^{-1/2}`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative eigenvalue floor below which a covariance matrix is treated as
/// rank deficient rather than silently regularized.
pub const DEFAULT_EIGENVALUE_FLOOR: f64 = 1e-12;

/// Dense symmetric matrix. Construction symmetrizes via `(A + Aᵀ)/2` and
/// rejects non-finite entries, so every held matrix is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(
                "matrix entries must be finite".into(),
            ));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { data: sym })
    }

    /// Builds from the upper triangle of `f(i, j)`, mirroring below.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::from_matrix(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending; column `k` of `vectors` pairs with
/// `values[k]`. Each column is normalized so its largest-magnitude entry
/// (first such entry on ties) is positive, which pins the basis down to
/// permutations inside exactly degenerate eigenspaces.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Λ) Vᵀ`, assembled as `A Aᵀ` with `A = V f(Λ)^{1/2}`-style column
    /// scaling so the result is symmetric to the last bit.
    fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        &scaled * self.vectors.transpose()
    }
}

/// Eigendecomposes a symmetric matrix into a descending, sign-pinned system.
pub fn eigendecompose(s: &SymmetricMatrix) -> Result<EigenSystem> {
    let n = s.dim();
    let eig = s
        .matrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(Error::NumericalFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[i];
        let mut col = eig.eigenvectors.column(i).clone_owned();
        let mut pivot = 0;
        let mut best = -1.0;
        for (r, x) in col.iter().enumerate() {
            let a = x.abs();
            if a > best {
                best = a;
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
    }

    Ok(EigenSystem { values, vectors })
}

fn check_floor(eig: &EigenSystem, floor: f64) -> Result<f64> {
    if !(floor >= 0.0) {
        return Err(Error::InvalidParams("eigenvalue floor must be >= 0".into()));
    }
    let top = eig.values[0];
    if !(top > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "largest eigenvalue {top:e} is not positive"
        )));
    }
    let cutoff = floor * top;
    let smallest = eig.values[eig.dim() - 1];
    if smallest <= cutoff {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {smallest:e} <= floor * lambda_1 = {cutoff:e}; \
             the in-sample window is too short or assets are degenerate"
        )));
    }
    Ok(cutoff)
}

fn inverse_sqrt_of(eig: &EigenSystem, floor: f64) -> Result<SymmetricMatrix> {
    check_floor(eig, floor)?;
    SymmetricMatrix::from_matrix(eig.apply_spectral(|v| 1.0 / v.sqrt()))
}

/// Symmetric inverse square root `V Λ^{-1/2} Vᵀ`.
///
/// Any eigenvalue at or below `floor * λ_1` is rejected as rank deficiency.
pub fn inverse_sqrt(s: &SymmetricMatrix, floor: f64) -> Result<SymmetricMatrix> {
    inverse_sqrt_of(&eigendecompose(s)?, floor)
}

/// Symmetric square root `V Λ^{1/2} Vᵀ` under the same floor policy.
pub fn sqrt(s: &SymmetricMatrix, floor: f64) -> Result<SymmetricMatrix> {
    let eig = eigendecompose(s)?;
    check_floor(&eig, floor)?;
    SymmetricMatrix::from_matrix(eig.apply_spectral(|v| v.sqrt()))
}

/// The overlap matrix together with its expression in the risk-mode basis.
#[derive(Debug, Clone)]
pub struct OverlapMatrices {
    /// `E_in^{-1/2} E_out E_in^{-1/2}` over real assets.
    pub d: SymmetricMatrix,
    /// `Vᵀ D V` where `V` are the in-sample risk modes; same spectrum as `d`.
    pub d_rotated: SymmetricMatrix,
    /// Eigensystem of `E_in`: the statistical risk modes, descending risk.
    pub risk_modes: EigenSystem,
}

/// Builds `D` with the symmetric root of `E_in` and rotates it into the
/// statistical-risk-mode basis.
pub fn build_d(
    e_in: &SymmetricMatrix,
    e_out: &SymmetricMatrix,
    floor: f64,
) -> Result<OverlapMatrices> {
    if e_in.dim() != e_out.dim() {
        return Err(Error::DimensionMismatch {
            expected: e_in.dim(),
            actual: e_out.dim(),
        });
    }
    let risk_modes = eigendecompose(e_in)?;
    let inv_root = inverse_sqrt_of(&risk_modes, floor)?;
    let d_raw = inv_root.matrix() * e_out.matrix() * inv_root.matrix();
    let d = SymmetricMatrix::from_matrix(d_raw)?;
    let v = risk_modes.vectors();
    let d_rotated = SymmetricMatrix::from_matrix(v.transpose() * d.matrix() * v)?;
    Ok(OverlapMatrices {
        d,
        d_rotated,
        risk_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = crate::rng::stream(seed, 0);
        SymmetricMatrix::from_matrix(DMatrix::from_fn(n, n, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = crate::rng::stream(seed, 1);
        let g = DMatrix::<f64>::from_fn(n, 2 * n, |_, _| StandardNormal.sample(&mut rng));
        SymmetricMatrix::from_matrix(&g * g.transpose() / (2 * n) as f64).unwrap()
    }

    #[test]
    fn identity_eigenvalues_are_one() {
        let eig = eigendecompose(&SymmetricMatrix::identity(4)).unwrap();
        for k in 0..4 {
            assert_relative_eq!(eig.values()[k], 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let s =
            SymmetricMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![
                4.0, 1.0, 9.0,
            ])))
            .unwrap();
        let eig = eigendecompose(&s).unwrap();
        assert_eq!(eig.values().as_slice(), &[9.0, 4.0, 1.0]);
        // Eigenvectors are signed unit coordinate vectors.
        let expect = [(2usize, 0usize), (0, 1), (1, 2)];
        for (row, col) in expect {
            assert_relative_eq!(eig.vectors()[(row, col)], 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let s = random_symmetric(25, 42);
        let eig = eigendecompose(&s).unwrap();
        let v = eig.vectors();

        let gram = v.transpose() * v;
        let eye = DMatrix::<f64>::identity(25, 25);
        assert!((gram - &eye).norm() < 1e-10);

        let rebuilt = eig.apply_spectral(|x| x);
        let rel = (&rebuilt - s.matrix()).norm() / s.matrix().norm();
        assert!(rel < 1e-10, "relative reconstruction error {rel:e}");
    }

    #[test]
    fn eigendecompose_is_bit_deterministic() {
        let s = random_symmetric(12, 7);
        let a = eigendecompose(&s).unwrap();
        let b = eigendecompose(&s).unwrap();
        assert_eq!(a.values().as_slice(), b.values().as_slice());
        assert_eq!(a.vectors().as_slice(), b.vectors().as_slice());
    }

    #[test]
    fn inverse_sqrt_diagonal() {
        let s =
            SymmetricMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![
                4.0, 9.0,
            ])))
            .unwrap();
        let inv = inverse_sqrt(&s, 0.0).unwrap();
        assert_relative_eq!(inv.matrix()[(0, 0)], 0.5, max_relative = 1e-14);
        assert_relative_eq!(inv.matrix()[(1, 1)], 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(inv.matrix()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_sqrt_identity_on_spd() {
        let s = random_spd(20, 3);
        let inv = inverse_sqrt(&s, DEFAULT_EIGENVALUE_FLOOR).unwrap();
        let probe = inv.matrix() * s.matrix() * inv.matrix();
        let eye = DMatrix::<f64>::identity(20, 20);
        assert!((probe - eye).norm() < 1e-10);
    }

    #[test]
    fn inverse_sqrt_commutes_with_input() {
        let s = random_spd(20, 5);
        let inv = inverse_sqrt(&s, DEFAULT_EIGENVALUE_FLOOR).unwrap();
        let comm = s.matrix() * inv.matrix() - inv.matrix() * s.matrix();
        assert!(comm.norm() < 1e-10);
    }

    #[test]
    fn inverse_sqrt_rejects_rank_deficiency() {
        // Rank-1 covariance from a single observation.
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let s = SymmetricMatrix::from_matrix(&x * x.transpose()).unwrap();
        match inverse_sqrt(&s, DEFAULT_EIGENVALUE_FLOOR) {
            Err(Error::NotPositiveDefinite(_)) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn build_d_identity_when_windows_agree() {
        let e = random_spd(15, 11);
        let m = build_d(&e, &e, DEFAULT_EIGENVALUE_FLOOR).unwrap();
        let eye = DMatrix::<f64>::identity(15, 15);
        assert!((m.d.matrix() - &eye).norm() < 1e-10);
        assert!((m.d_rotated.matrix() - &eye).norm() < 1e-10);
    }

    #[test]
    fn d_spectrum_matches_nonsymmetric_product() {
        // Same characteristic polynomial as E_in^{-1} E_out.
        let e_in = random_spd(12, 21);
        let e_out = random_spd(12, 22);
        let m = build_d(&e_in, &e_out, DEFAULT_EIGENVALUE_FLOOR).unwrap();
        let d_eigs = eigendecompose(&m.d).unwrap();

        let product = e_in.matrix().clone().try_inverse().unwrap() * e_out.matrix();
        let mut general: Vec<f64> = product
            .eigenvalues()
            .expect("product of SPD matrices has real eigenvalues")
            .iter()
            .copied()
            .collect();
        general.sort_by(|a, b| b.total_cmp(a));

        for (ours, theirs) in d_eigs.values().iter().zip(&general) {
            assert_relative_eq!(ours, theirs, max_relative = 1e-10);
        }
    }

    #[test]
    fn d_and_rotated_share_spectrum() {
        let e_in = random_spd(18, 31);
        let e_out = random_spd(18, 32);
        let m = build_d(&e_in, &e_out, DEFAULT_EIGENVALUE_FLOOR).unwrap();
        let a = eigendecompose(&m.d).unwrap();
        let b = eigendecompose(&m.d_rotated).unwrap();
        for k in 0..18 {
            assert_relative_eq!(a.values()[k], b.values()[k], max_relative = 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = SymmetricMatrix::identity(3);
        let b = SymmetricMatrix::identity(4);
        assert!(matches!(
            build_d(&a, &b, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
