use ndarray::ArrayView1;

use super::CovarianceModel;
use crate::{Error, Result, Scalar};

/// `exp{−½ (Êᵀy_i − Êᵀy_j)ᵀ Λ̂⁻¹ (Êᵀy_i − Êᵀy_j)}`.
pub fn photometric_weight<T: Scalar>(
    y_i: ArrayView1<'_, T>,
    y_j: ArrayView1<'_, T>,
    cov: &CovarianceModel<T>,
) -> T {
    let diff = &y_i - &y_j;
    let u = cov.e_hat.t().dot(&diff);
    let q: T = u
        .iter()
        .zip(cov.lambda_hat.iter())
        .map(|(&v, &l)| v * v / l)
        .sum();
    (-T::lit(0.5) * q).exp()
}

/// Spatial Gaussian `exp{−‖s_i − s_j‖² / σ_s²}`.
pub fn spatial_weight<T: Scalar>(s_i: [T; 2], s_j: [T; 2], sigma_s: T) -> T {
    let dr = s_i[0] - s_j[0];
    let dc = s_i[1] - s_j[1];
    (-(dr * dr + dc * dc) / (sigma_s * sigma_s)).exp()
}

/// Product of the spatial Gaussian and the photometric term.
pub fn bilateral_weight<T: Scalar>(
    s_i: [T; 2],
    s_j: [T; 2],
    y_i: ArrayView1<'_, T>,
    y_j: ArrayView1<'_, T>,
    sigma_s: T,
    cov: &CovarianceModel<T>,
) -> Result<T> {
    if !sigma_s.is_finite() || sigma_s <= T::zero() {
        return Err(Error::param(format!("spatial scale must be positive, got {sigma_s}")));
    }
    Ok(spatial_weight(s_i, s_j, sigma_s) * photometric_weight(y_i, y_j, cov))
}
