use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};

use super::covariance::covariance_of;
use super::PixelDataset;
use crate::{Error, Result, Scalar};

/// Principal axes of a dataset's centered sample covariance.
#[derive(Debug, Clone)]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// `target_dim × d`, one unit-norm component per row, descending variance.
    pub components: Array2<T>,
    /// Eigenvalues of all `d` components, descending.
    pub eigenvalues: Array1<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn transform(&self, spectra: ndarray::ArrayView2<'_, T>) -> Array2<T> {
        let centered = &spectra - &self.mean;
        centered.dot(&self.components.t())
    }

    /// Fraction of the total variance captured by the kept components.
    pub fn retained_variance(&self) -> T {
        let total: T = self.eigenvalues.iter().copied().sum();
        let kept: T = self
            .eigenvalues
            .iter()
            .take(self.components.nrows())
            .copied()
            .sum();
        kept / total
    }
}

/// Fits the top `target_dim` principal axes.
///
/// Each component's sign is fixed so that its largest-magnitude entry is
/// positive, which makes the projection reproducible and idempotent.
pub fn pca_fit<T: Scalar>(data: &PixelDataset<T>, target_dim: usize) -> Result<PcaModel<T>> {
    let d = data.n_bands();
    if target_dim == 0 || target_dim > d {
        return Err(Error::param(format!(
            "target dimension must lie in 1..={d}, got {target_dim}"
        )));
    }
    let s = covariance_of(data.spectra())?;
    let trace: T = s.diag().iter().copied().sum();
    if trace.is_nan() || trace <= T::zero() {
        return Err(Error::ZeroVariance);
    }

    let dense = DMatrix::<f64>::from_fn(d, d, |i, j| s[[i, j]].as_f64());
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Array2::<T>::zeros((target_dim, d));
    for (row, &col) in order.iter().take(target_dim).enumerate() {
        let v = eig.eigenvectors.column(col);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            components[[row, k]] = T::lit(sign * v[k]);
        }
    }
    let eigenvalues = order
        .iter()
        .map(|&c| T::lit(eig.eigenvalues[c].max(0.0)))
        .collect();
    Ok(PcaModel {
        mean: data.spectra().mean_axis(Axis(0)).expect("n >= 2"),
        components,
        eigenvalues,
    })
}

/// Projects spectra onto the top `target_dim` principal components.
/// Spatial coordinates and labels are carried over unchanged.
pub fn pca_reduce<T: Scalar>(data: &PixelDataset<T>, target_dim: usize) -> Result<PixelDataset<T>> {
    let model = pca_fit(data, target_dim)?;
    data.with_spectra(model.transform(data.spectra()))
}
