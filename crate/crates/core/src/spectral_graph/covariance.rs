//! Sample covariance and its sparse-matrix-transform (SMT) factorization.
//!
//! The SMT approximates the eigendecomposition `S ≈ Ê Λ̂ Êᵀ` by a greedy
//! sequence of Givens rotations. Each rotation acts on the coordinate pair
//! with the largest normalized off-diagonal entry `s_ij² / (s_ii s_jj)` and
//! annihilates it, which multiplies the product of the diagonal entries by
//! `1 − s_ij² / (s_ii s_jj)`. That product therefore never increases.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::PixelDataset;
use crate::{Error, Result, Scalar};

/// Sweeps over all `d(d-1)/2` coordinate pairs allowed before a rotation
/// request is rejected.
pub const MAX_SMT_SWEEPS: usize = 50;

/// Rotations stop once every normalized off-diagonal correlation is below this.
pub const SMT_CORRELATION_TOL: f64 = 1e-8;

/// Relative floor applied to the estimated eigenvalues.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// `S = (1/N) Σ (y_i − ȳ)(y_i − ȳ)ᵀ`.
pub fn sample_covariance<T: Scalar>(data: &PixelDataset<T>) -> Result<Array2<T>> {
    covariance_of(data.spectra())
}

pub(crate) fn covariance_of<T: Scalar>(spectra: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = spectra.nrows();
    if n < 2 {
        return Err(Error::param(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mean = spectra.mean_axis(Axis(0)).expect("non-empty");
    let centered = &spectra - &mean;
    let mut s = centered.t().dot(&centered) / T::from_usize_lossy(n);
    // exact symmetry regardless of summation order inside the product
    let d = s.nrows();
    for i in 0..d {
        for j in 0..i {
            s[[i, j]] = s[[j, i]];
        }
    }
    Ok(s)
}

/// SMT covariance factorization `Σ̂ = Ê Λ̂ Êᵀ`.
#[derive(Debug, Clone)]
pub struct CovarianceModel<T> {
    /// Sample covariance the model was estimated from.
    pub s: Array2<T>,
    /// Orthogonal product of the applied Givens rotations.
    pub e_hat: Array2<T>,
    /// Floored diagonal of `ÊᵀSÊ`.
    pub lambda_hat: Array1<T>,
    /// Rotations actually applied.
    pub n_rotations: usize,
    /// `Σ ln diag(ÊᵀSÊ)` before the first and after every rotation.
    pub log_objective: Vec<T>,
    whitening: Array2<T>,
}

impl<T: Scalar> CovarianceModel<T> {
    /// `Λ̂^{-1/2} Êᵀ y`: coordinates in which the photometric metric is euclidean.
    pub fn whiten(&self, y: ArrayView1<'_, T>) -> Array1<T> {
        self.whitening.dot(&y)
    }

    /// Whitens every row of `spectra`.
    pub fn whiten_rows(&self, spectra: ArrayView2<'_, T>) -> Array2<T> {
        spectra.dot(&self.whitening.t())
    }

    /// `Σ̂⁻¹ = Ê Λ̂⁻¹ Êᵀ`.
    pub fn inverse(&self) -> Array2<T> {
        let scaled = &self.e_hat / &self.lambda_hat;
        scaled.dot(&self.e_hat.t())
    }

    pub fn dim(&self) -> usize {
        self.lambda_hat.len()
    }

    /// Model with `Ê = I` and the given eigenvalues (no estimation).
    pub fn diagonal(lambda: Array1<T>) -> Result<Self> {
        if lambda.iter().any(|&l| l <= T::zero() || !l.is_finite()) {
            return Err(Error::param("diagonal covariance entries must be positive and finite"));
        }
        let d = lambda.len();
        let s = Array2::from_diag(&lambda);
        Ok(Self::assemble(s, Array2::eye(d), lambda, 0, Vec::new()))
    }

    fn assemble(
        s: Array2<T>,
        e_hat: Array2<T>,
        lambda_hat: Array1<T>,
        n_rotations: usize,
        log_objective: Vec<T>,
    ) -> Self {
        let inv_sqrt = lambda_hat.mapv(|l| l.sqrt().recip());
        let whitening = &e_hat.t() * &inv_sqrt.insert_axis(Axis(1));
        Self {
            s,
            e_hat,
            lambda_hat,
            n_rotations,
            log_objective,
            whitening,
        }
    }
}

/// Largest rotation count accepted for a `d × d` matrix.
pub fn rotation_budget(d: usize) -> usize {
    (d * d.saturating_sub(1) / 2).max(1) * MAX_SMT_SWEEPS
}

/// Default rotation count: `2d`.
pub fn default_rotations(d: usize) -> usize {
    2 * d
}

/// Greedy SMT estimate with at most `k` Givens rotations.
///
/// Stops early when the largest normalized off-diagonal correlation falls
/// below [`SMT_CORRELATION_TOL`].
pub fn smt_estimate<T: Scalar>(s: ArrayView2<'_, T>, k: usize) -> Result<CovarianceModel<T>> {
    let (d, d2) = s.dim();
    if d != d2 || d == 0 {
        return Err(Error::ShapeMismatch {
            expected: "non-empty square matrix".into(),
            found: format!("{d}×{d2}"),
        });
    }
    let limit = rotation_budget(d);
    if k > limit {
        return Err(Error::RotationBudgetExceeded { requested: k, limit });
    }
    let sym_tol = T::lit(1e-12) * s.iter().fold(T::one(), |m, v| m.max(v.abs()));
    for i in 0..d {
        if !s[[i, i]].is_finite() || s[[i, i]] < T::zero() {
            return Err(Error::param(format!("covariance diagonal entry {i} is negative or non-finite")));
        }
        for j in 0..i {
            if (s[[i, j]] - s[[j, i]]).abs() > sym_tol {
                return Err(Error::param("covariance matrix is not symmetric"));
            }
        }
    }

    let mut a = s.to_owned();
    let mut e = Array2::<T>::eye(d);
    let mut log_objective = vec![log_diag_product(&a)];
    let tol2 = T::lit(SMT_CORRELATION_TOL * SMT_CORRELATION_TOL);
    let mut applied = 0;

    while applied < k {
        let Some((p, q, corr2)) = most_correlated_pair(&a) else {
            break;
        };
        if corr2 < tol2 {
            break;
        }
        givens_annihilate(&mut a, &mut e, p, q);
        applied += 1;
        log_objective.push(log_diag_product(&a));
    }

    let raw = a.diag().to_owned();
    let max = raw.iter().fold(T::zero(), |m, &v| m.max(v));
    let floor = if max > T::zero() {
        max * T::lit(EIGENVALUE_FLOOR)
    } else {
        T::min_positive_value()
    };
    let lambda = raw.mapv(|v| v.max(floor));
    Ok(CovarianceModel::assemble(s.to_owned(), e, lambda, applied, log_objective))
}

fn log_diag_product<T: Scalar>(a: &Array2<T>) -> T {
    a.diag().iter().map(|v| v.ln()).sum()
}

/// Pair `(p, q)` with the largest `a_pq² / (a_pp a_qq)`, ties to the first found.
fn most_correlated_pair<T: Scalar>(a: &Array2<T>) -> Option<(usize, usize, T)> {
    let d = a.nrows();
    let mut best: Option<(usize, usize, T)> = None;
    for p in 0..d {
        let app = a[[p, p]];
        if app <= T::zero() {
            continue;
        }
        for q in (p + 1)..d {
            let aqq = a[[q, q]];
            if aqq <= T::zero() {
                continue;
            }
            let apq = a[[p, q]];
            let c = apq * apq / (app * aqq);
            if best.is_none_or(|(_, _, b)| c > b) {
                best = Some((p, q, c));
            }
        }
    }
    best
}

/// Jacobi rotation zeroing `a[p][q]`; `a ← Gᵀ a G`, `e ← e G`.
fn givens_annihilate<T: Scalar>(a: &mut Array2<T>, e: &mut Array2<T>, p: usize, q: usize) {
    let d = a.nrows();
    let apq = a[[p, q]];
    if apq == T::zero() {
        return;
    }
    let two = T::lit(2.0);
    let theta = (a[[q, q]] - a[[p, p]]) / (two * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let t = if theta == T::zero() { T::one() } else { t };
    let c = (t * t + T::one()).sqrt().recip();
    let s = t * c;

    let app = a[[p, p]];
    let aqq = a[[q, q]];
    a[[p, p]] = app - t * apq;
    a[[q, q]] = aqq + t * apq;
    a[[p, q]] = T::zero();
    a[[q, p]] = T::zero();
    for r in 0..d {
        if r == p || r == q {
            continue;
        }
        let arp = a[[r, p]];
        let arq = a[[r, q]];
        let nrp = c * arp - s * arq;
        let nrq = s * arp + c * arq;
        a[[r, p]] = nrp;
        a[[p, r]] = nrp;
        a[[r, q]] = nrq;
        a[[q, r]] = nrq;
    }
    for r in 0..d {
        let erp = e[[r, p]];
        let erq = e[[r, q]];
        e[[r, p]] = c * erp - s * erq;
        e[[r, q]] = s * erp + c * erq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn orthogonality_error(e: &Array2<f64>) -> f64 {
        let g = e.t().dot(e) - Array2::<f64>::eye(e.nrows());
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn two_point_covariance() {
        let data = PixelDataset::from_spectra(array![[0.0, 0.0], [2.0, 0.0]], None).unwrap();
        let s = sample_covariance(&data).unwrap();
        assert_eq!(s, array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn covariance_needs_two_samples() {
        let data = PixelDataset::from_spectra(array![[1.0, 2.0]], None).unwrap();
        assert!(sample_covariance(&data).is_err());
    }

    #[test]
    fn diagonal_matrix_needs_no_rotation() {
        let s = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let m = smt_estimate(s.view(), 10).unwrap();
        assert_eq!(m.n_rotations, 0);
        assert_eq!(m.e_hat, Array2::<f64>::eye(3));
        assert_eq!(m.lambda_hat, array![3.0, 1.0, 2.0]);
    }

    #[test]
    fn single_rotation_diagonalizes_two_by_two() {
        let s = array![[2.0f64, 1.0], [1.0, 2.0]];
        let m = smt_estimate(s.view(), 1).unwrap();
        let mut l = m.lambda_hat.to_vec();
        l.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((l[0] - 3.0).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14, "{l:?}");
        assert!(orthogonality_error(&m.e_hat) < 1e-14);
    }

    #[test]
    fn rotation_budget_is_enforced() {
        let s = Array2::<f64>::eye(3);
        let limit = rotation_budget(3);
        assert!(smt_estimate(s.view(), limit).is_ok());
        assert!(matches!(
            smt_estimate(s.view(), limit + 1),
            Err(Error::RotationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn eigenvalues_are_floored() {
        let s = array![[1.0f64, 1.0], [1.0, 1.0]];
        let m = smt_estimate(s.view(), 5).unwrap();
        assert!(m.lambda_hat.iter().all(|&l| l >= 1e-10 * 2.0 - 1e-24));
        assert!(m.inverse().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn inverse_matches_whitening() {
        let s = array![[4.0f64, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let m = smt_estimate(s.view(), 100).unwrap();
        let y = array![0.3, -1.2, 0.7];
        let w = m.whiten(y.view());
        let q1 = w.dot(&w);
        let q2 = y.dot(&m.inverse().dot(&y));
        assert!((q1 - q2).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let s = array![[1.0, 0.5], [0.2, 1.0]];
        assert!(smt_estimate(s.view(), 1).is_err());
    }
}
