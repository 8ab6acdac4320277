//! Labeled synthetic scenes: class prototype spectra plus Gaussian noise laid
//! out in class-pure spatial regions.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::spectral_graph::PixelDataset;
use crate::{Error, Result, Scalar};

/// Noise level used when none is asked for explicitly.
pub const MODERATE_NOISE: f64 = 0.05;

/// Side of a checkerboard tile, in pixels.
pub const CHECKER_TILE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialLayout {
    /// One near-square rectangle per class, placed left to right.
    Blocks,
    /// 4×4 tiles cycling through the classes diagonally.
    Checker,
}

impl fmt::Display for SpatialLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpatialLayout::Blocks => "blocks",
            SpatialLayout::Checker => "checker",
        })
    }
}

impl FromStr for SpatialLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blocks" => Ok(SpatialLayout::Blocks),
            "checker" => Ok(SpatialLayout::Checker),
            _ => Err(Error::param(format!("unknown spatial layout `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub bands: usize,
    pub layout: SpatialLayout,
    /// Standard deviation of the per-band noise.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, per_class: usize, bands: usize) -> Self {
        Self {
            classes,
            per_class,
            bands,
            layout: SpatialLayout::Blocks,
            noise: MODERATE_NOISE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::param(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.per_class == 0 || self.bands == 0 {
            return Err(Error::param("pixels per class and bands must be positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::param(format!("noise must be finite and nonnegative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// `h × w = n` with `h ≤ w` as close to square as possible.
fn near_square(n: usize) -> (usize, usize) {
    let mut h = (n as f64).sqrt().floor() as usize;
    while !n.is_multiple_of(h) {
        h -= 1;
    }
    (h, n / h)
}

fn layout_coords(spec: &SyntheticSpec) -> Vec<(usize, [usize; 2])> {
    let (c, n) = (spec.classes, spec.per_class);
    match spec.layout {
        SpatialLayout::Blocks => {
            let (_, w) = near_square(n);
            (0..c)
                .flat_map(|k| (0..n).map(move |p| (k + 1, [p / w, k * w + p % w])))
                .collect()
        }
        SpatialLayout::Checker => {
            let side = ((c * n) as f64).sqrt().ceil() as usize;
            let width = side.div_ceil(CHECKER_TILE).max(1) * CHECKER_TILE;
            let mut filled = vec![0usize; c];
            let mut out = Vec::with_capacity(c * n);
            let mut idx = 0usize;
            while out.len() < c * n {
                let (r, col) = (idx / width, idx % width);
                let k = (r / CHECKER_TILE + col / CHECKER_TILE) % c;
                if filled[k] < n {
                    filled[k] += 1;
                    out.push((k + 1, [r, col]));
                }
                idx += 1;
            }
            out
        }
    }
}

/// Generates a labeled scene. Identical specs give identical datasets.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<PixelDataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.bands).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let noise = (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("valid noise"));

    let placed = layout_coords(spec);
    let mut spectra = Array2::zeros((placed.len(), spec.bands));
    let mut coords = Vec::with_capacity(placed.len());
    let mut labels = Vec::with_capacity(placed.len());
    for (i, (label, rc)) in placed.into_iter().enumerate() {
        for (b, &mu) in prototypes[label - 1].iter().enumerate() {
            let e = noise.map_or(0.0, |nd| nd.sample(&mut rng));
            spectra[[i, b]] = T::lit(mu + e);
        }
        coords.push([T::from_usize_lossy(rc[0]), T::from_usize_lossy(rc[1])]);
        labels.push(label);
    }
    PixelDataset::new(coords, spectra, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_classes_are_constant() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..SyntheticSpec::new(3, 6, 4)
        };
        let d = generate_synthetic::<f64>(&spec).unwrap();
        let labels = d.labels().unwrap();
        for i in 0..d.n_pixels() {
            for j in 0..d.n_pixels() {
                if labels[i] == labels[j] {
                    assert_eq!(d.spectrum(i), d.spectrum(j));
                }
            }
        }
    }

    #[test]
    fn blocks_are_rectangles() {
        let d = generate_synthetic::<f64>(&SyntheticSpec::new(3, 12, 2)).unwrap();
        let labels = d.labels().unwrap();
        for class in 1..=3 {
            let pts: Vec<[f64; 2]> = (0..d.n_pixels()).filter(|&i| labels[i] == class).map(|i| d.coords()[i]).collect();
            let (r0, r1) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
            let (c0, c1) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
            assert_eq!((r1 - r0 + 1.0) * (c1 - c0 + 1.0), 12.0);
        }
    }

    #[test]
    fn checker_fills_every_class() {
        let spec = SyntheticSpec {
            layout: SpatialLayout::Checker,
            ..SyntheticSpec::new(3, 20, 2)
        };
        let d = generate_synthetic::<f64>(&spec).unwrap();
        for class in 1..=3 {
            assert_eq!(d.labels().unwrap().iter().filter(|&&l| l == class).count(), 20);
        }
        let mut seen: Vec<_> = d.coords().iter().map(|c| (c[0] as i64, c[1] as i64)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 60);
    }

    #[test]
    fn seeded_generation_is_repeatable() {
        let spec = SyntheticSpec::new(2, 5, 3);
        let a = generate_synthetic::<f64>(&spec).unwrap();
        let b = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(a.spectra(), b.spectra());
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(generate_synthetic::<f64>(&SyntheticSpec::new(1, 5, 3)).is_err());
    }
}
