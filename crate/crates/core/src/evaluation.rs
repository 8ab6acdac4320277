//! Embedding quality measures and nearest-neighbor classification.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{run, EngineConfig};
use crate::field::FieldModel;
use crate::spectral_graph::NeighborhoodGraph;
use crate::{Error, Result, Scalar};

/// Default share of every class used for training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Default number of repeated splits.
pub const DEFAULT_RUNS: usize = 10;

/// Euclidean distance matrix of the rows of `x`.
pub fn pairwise_distances<T: Scalar>(x: ArrayView2<'_, T>) -> Array2<T> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
                .sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// `‖D̂ − D‖_F`.
pub fn frobenius_residual<T: Scalar>(high: ArrayView2<'_, T>, low: ArrayView2<'_, T>) -> Result<T> {
    if high.dim() != low.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", high.dim()),
            found: format!("{:?}", low.dim()),
        });
    }
    Ok(high
        .iter()
        .zip(low.iter())
        .fold(T::zero(), |acc, (&a, &b)| acc + (b - a) * (b - a))
        .sqrt())
}

/// Angle between two nonzero vectors, in `[0, π]`.
pub fn spectral_angle<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}-vector", a.len()),
            found: format!("{}-vector", b.len()),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroVector);
    }
    let c = a.dot(&b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SpectralAngle,
    Euclidean,
}

impl Metric {
    /// Angles carry no information on a line, so one-dimensional embeddings
    /// fall back to euclidean.
    pub fn default_for_dim(m: usize) -> Self {
        if m >= 2 {
            Metric::SpectralAngle
        } else {
            Metric::Euclidean
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::SpectralAngle => "sam",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sam" | "spectral-angle" => Ok(Metric::SpectralAngle),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(Error::param(format!("unknown metric `{s}`"))),
        }
    }
}

/// Label of the closest training row for every test row. Ties go to the
/// lowest training index.
pub fn knn1_classify<T: Scalar>(
    train: ArrayView2<'_, T>,
    train_labels: &[usize],
    test: ArrayView2<'_, T>,
    metric: Metric,
) -> Result<Vec<usize>> {
    if train.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if train_labels.len() != train.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} training labels", train.nrows()),
            found: format!("{}", train_labels.len()),
        });
    }
    if train.ncols() != test.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} test columns", train.ncols()),
            found: format!("{}", test.ncols()),
        });
    }
    let dist = |a: ArrayView1<'_, T>, b: ArrayView1<'_, T>| -> Result<T> {
        match metric {
            Metric::SpectralAngle => spectral_angle(a, b),
            Metric::Euclidean => Ok(a
                .iter()
                .zip(b.iter())
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))),
        }
    };
    test.outer_iter()
        .map(|q| {
            let mut best = (T::infinity(), 0usize);
            for (j, r) in train.outer_iter().enumerate() {
                let d = dist(q, r)?;
                if d < best.0 {
                    best = (d, j);
                }
            }
            Ok(train_labels[best.1])
        })
        .collect()
}

/// Counts with rows for the true class and columns for the prediction.
/// Classes are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: Array2::zeros((n_classes, n_classes)),
        }
    }

    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                found: format!("{:?}", counts.dim()),
            });
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} predictions", truth.len()),
                found: format!("{}", predicted.len()),
            });
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t == 0 || t > n_classes || p == 0 || p > n_classes {
                return Err(Error::param(format!("class labels must lie in 1..={n_classes}")));
            }
            cm.counts[[t - 1, p - 1]] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts.diag().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.counts.dim() != self.counts.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.counts.dim()),
                found: format!("{:?}", other.counts.dim()),
            });
        }
        self.counts += &other.counts;
        Ok(())
    }

    /// `100 · trace / total`, or `None` for an empty matrix.
    pub fn overall_accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| 100.0 * self.trace() as f64 / n as f64)
    }

    /// Percentage of each true class predicted correctly; `None` for classes
    /// with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .outer_iter()
            .enumerate()
            .map(|(c, row)| {
                let n = row.sum();
                (n > 0).then(|| 100.0 * row[c] as f64 / n as f64)
            })
            .collect()
    }

    pub fn kappa(&self) -> Option<f64> {
        kappa_statistic(self)
    }
}

/// `(N Σ t_cc − Σ t_c+ t_+c) / (N² − Σ t_c+ t_+c)`; `None` when the
/// denominator vanishes.
pub fn kappa_statistic(cm: &ConfusionMatrix) -> Option<f64> {
    let n = cm.total() as f64;
    let chance: f64 = (0..cm.n_classes())
        .map(|c| cm.counts.row(c).sum() as f64 * cm.counts.column(c).sum() as f64)
        .sum();
    let denom = n * n - chance;
    (denom != 0.0).then(|| (n * cm.trace() as f64 - chance) / denom)
}

/// Training and test indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn split_with<R: rand::Rng>(labels: &[usize], train_fraction: f64, rng: &mut R) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            return Err(Error::param("class labels start at 1"));
        }
        by_class[l - 1].push(i);
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: c + 1,
                count: members.len(),
            });
        }
        let n = members.len();
        // Half-up rounding, keeping at least one sample on each side.
        let n_train = ((train_fraction * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
        members.shuffle(rng);
        split.train.extend_from_slice(&members[..n_train]);
        split.test.extend_from_slice(&members[n_train..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn split_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Per-class random split at `train_fraction`, deterministic in `seed`.
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> Result<Split> {
    split_with(labels, train_fraction, &mut split_rng(seed, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSettings {
    pub runs: usize,
    pub train_fraction: f64,
    /// `None` picks [`Metric::default_for_dim`].
    pub metric: Option<Metric>,
    pub seed: u64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            runs: DEFAULT_RUNS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            metric: None,
            seed: 0,
        }
    }
}

/// Mean and standard error over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Standard error is the sample standard deviation over `sqrt(n)`; zero for one value.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Residual between input-space and embedding distances, when computed.
    pub frobenius: Option<f64>,
    pub per_class_accuracy: Vec<MeanSe>,
    pub overall_accuracy: MeanSe,
    /// `None` when kappa was undefined on every run.
    pub kappa: Option<MeanSe>,
    /// Confusion matrix summed over runs.
    pub confusion: ConfusionMatrix,
    pub runs: usize,
    pub dimension: usize,
    pub metric: Metric,
}

/// 1NN accuracy over `runs` stratified splits of `z`.
pub fn repeated_evaluation<T: Scalar>(
    z: ArrayView2<'_, T>,
    labels: &[usize],
    settings: &EvaluationSettings,
) -> Result<EvaluationReport> {
    if settings.runs == 0 {
        return Err(Error::param("at least one evaluation run is required"));
    }
    if labels.len() != z.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", z.nrows()),
            found: format!("{}", labels.len()),
        });
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0);
    let metric = settings.metric.unwrap_or_else(|| Metric::default_for_dim(z.ncols()));

    let per_run: Vec<ConfusionMatrix> = (0..settings.runs)
        .into_par_iter()
        .map(|r| {
            let split = split_with(labels, settings.train_fraction, &mut split_rng(settings.seed, r as u64))?;
            let train = z.select(ndarray::Axis(0), &split.train);
            let test = z.select(ndarray::Axis(0), &split.test);
            let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
            let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
            let predicted = knn1_classify(train.view(), &train_labels, test.view(), metric)?;
            ConfusionMatrix::from_predictions(&truth, &predicted, n_classes)
        })
        .collect::<Result<_>>()?;

    let mut confusion = ConfusionMatrix::new(n_classes);
    for cm in &per_run {
        confusion.add(cm)?;
    }
    let oa: Vec<f64> = per_run.iter().filter_map(|cm| cm.overall_accuracy()).collect();
    let ks: Vec<f64> = per_run.iter().filter_map(|cm| cm.kappa()).collect();
    let per_class = (0..n_classes)
        .map(|c| {
            let v: Vec<f64> = per_run.iter().filter_map(|cm| cm.per_class_accuracy()[c]).collect();
            MeanSe::of(&v).unwrap_or(MeanSe { mean: f64::NAN, se: f64::NAN })
        })
        .collect();
    Ok(EvaluationReport {
        frobenius: None,
        per_class_accuracy: per_class,
        overall_accuracy: MeanSe::of(&oa).ok_or(Error::EmptyTrainingSet)?,
        kappa: MeanSe::of(&ks),
        confusion,
        runs: settings.runs,
        dimension: z.ncols(),
        metric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    /// Misclassification error in percent.
    pub error: MeanSe,
}

/// Embeds at every dimension in `dims` and reports the 1NN error.
pub fn dimension_sweep<T: Scalar>(
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
    labels: &[usize],
    dims: &[usize],
    engine: &EngineConfig,
    settings: &EvaluationSettings,
) -> Result<Vec<SweepRow>> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::param("dimension list must be nonempty with every entry at least 1"));
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    dims.into_iter()
        .map(|m| {
            let cfg = EngineConfig { dim: m, ..engine.clone() };
            let result = run(graph, field, &cfg)?;
            let report = repeated_evaluation(result.z.view(), labels, settings)?;
            Ok(SweepRow {
                dim: m,
                error: MeanSe {
                    mean: 100.0 - report.overall_accuracy.mean,
                    se: report.overall_accuracy.se,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn residual_examples() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(frobenius_residual(a.view(), a.view()).unwrap(), 0.0);
        let b = array![[0.0, 4.0], [4.0, 0.0]];
        assert!((frobenius_residual(a.view(), b.view()).unwrap() - 18f64.sqrt()).abs() < 1e-15);
        assert!(frobenius_residual(a.view(), array![[0.0]].view()).is_err());
    }

    #[test]
    fn angle_examples() {
        let x = array![1.0, 0.0];
        assert_eq!(spectral_angle(x.view(), array![2.0, 0.0].view()).unwrap(), 0.0);
        assert!((spectral_angle(x.view(), array![0.0, 1.0].view()).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((spectral_angle(x.view(), array![1.0, 1.0].view()).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(matches!(spectral_angle(x.view(), array![0.0, 0.0].view()), Err(Error::ZeroVector)));
    }

    #[test]
    fn nearest_neighbor_rules() {
        let train = array![[0.0, 1.0], [2.0, 1.0], [5.0, 5.0]];
        let labels = [1, 2, 3];
        let test = array![[5.0, 5.0], [1.0, 1.0]];
        let pred = knn1_classify(train.view(), &labels, test.view(), Metric::Euclidean).unwrap();
        assert_eq!(pred, vec![3, 1]);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            knn1_classify(empty.view(), &[], test.view(), Metric::Euclidean),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn kappa_examples() {
        let perfect = ConfusionMatrix::from_counts(array![[5, 0], [0, 7]]).unwrap();
        assert_eq!(perfect.kappa(), Some(1.0));
        let chance = ConfusionMatrix::from_counts(array![[25, 25], [25, 25]]).unwrap();
        assert_eq!(chance.kappa(), Some(0.0));
        let cm = ConfusionMatrix::from_counts(array![[40, 10], [5, 45]]).unwrap();
        assert!((cm.kappa().unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(cm.overall_accuracy(), Some(85.0));
        let single = ConfusionMatrix::from_counts(array![[4, 0], [0, 0]]).unwrap();
        assert_eq!(single.kappa(), None);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<usize> = (0..10).map(|_| 1).chain((0..5).map(|_| 2)).collect();
        let s = stratified_split(&labels, 0.7, 3).unwrap();
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 1).count(), 7);
        // 3.5 rounds up
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 2).count(), 4);
        assert_eq!(s, stratified_split(&labels, 0.7, 3).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_class_is_named() {
        let labels = [1, 1, 1, 2];
        assert!(matches!(
            stratified_split(&labels, 0.7, 0),
            Err(Error::ClassTooSmall { class: 2, count: 1 })
        ));
    }

    #[test]
    fn separated_clusters_score_perfectly() {
        let z = array![[1.0, 0.0], [1.1, 0.0], [1.0, 0.1], [0.0, 1.0], [0.1, 1.0], [0.0, 1.1]];
        let labels = [1, 1, 1, 2, 2, 2];
        let r = repeated_evaluation(z.view(), &labels, &EvaluationSettings::default()).unwrap();
        assert_eq!(r.overall_accuracy.mean, 100.0);
        assert_eq!(r.kappa.unwrap().mean, 1.0);
        assert_eq!(r.metric, Metric::SpectralAngle);
        assert_eq!(r.confusion.total(), 20);
    }

    #[test]
    fn single_run_matches_single_split() {
        let z = array![[0.0], [0.2], [0.9], [1.0], [2.0], [2.2], [0.1], [1.1]];
        let labels = [1, 1, 2, 2, 3, 3, 1, 2];
        let settings = EvaluationSettings {
            runs: 1,
            seed: 9,
            ..EvaluationSettings::default()
        };
        let r = repeated_evaluation(z.view(), &labels, &settings).unwrap();
        let s = stratified_split(&labels, 0.7, 9).unwrap();
        let train = z.select(ndarray::Axis(0), &s.train);
        let test = z.select(ndarray::Axis(0), &s.test);
        let tl: Vec<usize> = s.train.iter().map(|&i| labels[i]).collect();
        let truth: Vec<usize> = s.test.iter().map(|&i| labels[i]).collect();
        let pred = knn1_classify(train.view(), &tl, test.view(), Metric::Euclidean).unwrap();
        let cm = ConfusionMatrix::from_predictions(&truth, &pred, 3).unwrap();
        assert_eq!(r.confusion, cm);
        assert_eq!(r.overall_accuracy.mean, cm.overall_accuracy().unwrap());
        assert_eq!(r.overall_accuracy.se, 0.0);
    }
}
