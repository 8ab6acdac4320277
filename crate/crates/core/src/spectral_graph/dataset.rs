use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result, Scalar};

/// A set of image pixels: spatial position, spectrum and optional class label.
///
/// Spectra are stored row-wise (`n_pixels × n_bands`). Labels, when present,
/// cover exactly the classes `1..=n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDataset<T> {
    coords: Vec<[T; 2]>,
    spectra: Array2<T>,
    labels: Option<Vec<usize>>,
}

impl<T: Scalar> PixelDataset<T> {
    pub fn new(coords: Vec<[T; 2]>, spectra: Array2<T>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = spectra.dim();
        if d == 0 {
            return Err(Error::InvalidDataset("spectra must have at least one band".into()));
        }
        if coords.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} coordinate pairs"),
                found: format!("{}", coords.len()),
            });
        }
        if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::NonFinite(format!("spatial coordinates of pixel {i}")));
        }
        if let Some(((i, b), _)) = spectra.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("band {b} of pixel {i}")));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n} labels"),
                    found: format!("{}", labels.len()),
                });
            }
            let classes: BTreeSet<usize> = labels.iter().copied().collect();
            let max = classes.iter().next_back().copied().unwrap_or(0);
            if classes.contains(&0) || classes.len() != max {
                return Err(Error::InvalidDataset(format!(
                    "labels must form the contiguous set 1..=C, found {classes:?}"
                )));
            }
        }
        Ok(Self {
            coords,
            spectra,
            labels,
        })
    }

    /// Dataset without spatial information: every pixel sits at the origin.
    pub fn from_spectra(spectra: Array2<T>, labels: Option<Vec<usize>>) -> Result<Self> {
        let coords = vec![[T::zero(); 2]; spectra.nrows()];
        Self::new(coords, spectra, labels)
    }

    pub fn n_pixels(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn coords(&self) -> &[[T; 2]] {
        &self.coords
    }

    pub fn spectra(&self) -> ArrayView2<'_, T> {
        self.spectra.view()
    }

    pub fn spectrum(&self, i: usize) -> ArrayView1<'_, T> {
        self.spectra.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().copied().max())
            .unwrap_or(0)
    }

    /// Same pixels with the spectra replaced, e.g. after a projection.
    pub fn with_spectra(&self, spectra: Array2<T>) -> Result<Self> {
        Self::new(self.coords.clone(), spectra, self.labels.clone())
    }

    pub fn into_parts(self) -> (Vec<[T; 2]>, Array2<T>, Option<Vec<usize>>) {
        (self.coords, self.spectra, self.labels)
    }
}
