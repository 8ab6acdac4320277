use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::covariance::{default_rotations, sample_covariance, smt_estimate, CovarianceModel};
use super::kernel::spatial_weight;
use super::PixelDataset;
use crate::{Error, Result, Scalar};

/// Iteration cap for the per-point bandwidth search.
pub const PERPLEXITY_MAX_ITER: usize = 200;

/// Largest accepted gap between a row entropy and `log k`.
pub const PERPLEXITY_TOL: f64 = 1e-3;

/// Spatial window radius for bilateral candidates, in units of `σ_s`.
pub const SPATIAL_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    GaussianPerplexity,
    Bilateral,
    /// Built from an explicit weight matrix or loaded from disk.
    Custom,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::GaussianPerplexity => "gaussian",
            GraphKind::Bilateral => "bilateral",
            GraphKind::Custom => "custom",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(GraphKind::GaussianPerplexity),
            "bilateral" => Ok(GraphKind::Bilateral),
            "custom" => Ok(GraphKind::Custom),
            other => Err(Error::param(format!("unknown graph kind `{other}`"))),
        }
    }
}

/// Sparse symmetric nonnegative weight graph without self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph<T> {
    adjacency: Vec<Vec<(usize, T)>>,
    pub k: usize,
    /// Per-point bandwidths (Gaussian-perplexity graphs).
    pub sigma_i: Option<Vec<T>>,
    /// Spatial scale (bilateral graphs).
    pub sigma_s: Option<T>,
    pub kind: GraphKind,
}

impl<T: Scalar> NeighborhoodGraph<T> {
    /// Builds a graph from upper-triangle triples `(i, j, w)` with `i < j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)], kind: GraphKind, k: usize) -> Result<Self> {
        let mut adjacency: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= j || j >= n {
                return Err(Error::param(format!("edge ({i}, {j}) must satisfy i < j < {n}")));
            }
            if !w.is_finite() || w < T::zero() {
                return Err(Error::param(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            if w > T::zero() {
                adjacency[i].push((j, w));
                adjacency[j].push((i, w));
            }
        }
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::param(format!("duplicate edge at vertex {i}")));
            }
        }
        Ok(Self {
            adjacency,
            k,
            sigma_i: None,
            sigma_s: None,
            kind,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighbors of `i` with their weights, ordered by neighbor index.
    pub fn neighbors(&self, i: usize) -> &[(usize, T)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        let row = &self.adjacency[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(pos) => row[pos].1,
            Err(_) => T::zero(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Upper-triangle triples `(i, j, w)`, `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize, T)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |e| e.0 > i).map(move |&(j, w)| (i, j, w)))
            .collect()
    }

    pub fn to_dense(&self) -> Array2<T> {
        let n = self.n_vertices();
        let mut w = Array2::zeros((n, n));
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, v) in row {
                w[[i, j]] = v;
            }
        }
        w
    }

    fn from_rows(rows: Vec<Vec<(usize, T)>>, k: usize, kind: GraphKind) -> Self {
        Self {
            adjacency: symmetrize(rows),
            k,
            sigma_i: None,
            sigma_s: None,
            kind,
        }
    }
}

/// `w ← (w + wᵀ)/2` on sparse rows. Each row must be sorted by column.
///
/// The pair sum is formed as `w_ij + w_ji` in row `i` and `w_ji + w_ij` in
/// row `j`; float addition is commutative, so the result is bit-symmetric.
fn symmetrize<T: Scalar>(rows: Vec<Vec<(usize, T)>>) -> Vec<Vec<(usize, T)>> {
    let n = rows.len();
    let mut incoming: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            incoming[j].push((i, w));
        }
    }
    let half = T::lit(0.5);
    rows.into_iter()
        .zip(incoming)
        .enumerate()
        .map(|(i, (own, other))| {
            let mut out = Vec::with_capacity(own.len().max(other.len()));
            let (mut a, mut b) = (0, 0);
            while a < own.len() || b < other.len() {
                let ja = own.get(a).map_or(usize::MAX, |e| e.0);
                let jb = other.get(b).map_or(usize::MAX, |e| e.0);
                let (j, wa, wb) = match ja.cmp(&jb) {
                    Ordering::Less => {
                        a += 1;
                        (ja, own[a - 1].1, T::zero())
                    }
                    Ordering::Greater => {
                        b += 1;
                        (jb, T::zero(), other[b - 1].1)
                    }
                    Ordering::Equal => {
                        a += 1;
                        b += 1;
                        (ja, own[a - 1].1, other[b - 1].1)
                    }
                };
                let v = (wa + wb) * half;
                if j != i && v > T::zero() {
                    out.push((j, v));
                }
            }
            out
        })
        .collect()
}

/// Keeps the `k` largest entries `(j, w)` of a row (ties to lower `j`),
/// dropping zeros, and returns them sorted by column.
fn top_k<T: Scalar>(mut row: Vec<(usize, T)>, k: usize) -> Vec<(usize, T)> {
    row.retain(|e| e.1 > T::zero());
    row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    row.truncate(k);
    row.sort_by_key(|e| e.0);
    row
}

/// Keeps the top `k` weights of every row of a dense matrix, then symmetrizes.
pub fn knn_sparsify_and_symmetrize<T: Scalar>(dense: ArrayView2<'_, T>, k: usize) -> Result<NeighborhoodGraph<T>> {
    let (n, n2) = dense.dim();
    if n != n2 {
        return Err(Error::ShapeMismatch {
            expected: "square weight matrix".into(),
            found: format!("{n}×{n2}"),
        });
    }
    if k == 0 || k >= n {
        return Err(Error::param(format!("k must lie in 1..{n}, got {k}")));
    }
    if dense.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::param("weights must be finite and nonnegative"));
    }
    let rows = (0..n)
        .map(|i| {
            let row = (0..n).filter(|&j| j != i).map(|j| (j, dense[[i, j]])).collect();
            top_k(row, k)
        })
        .collect();
    Ok(NeighborhoodGraph::from_rows(rows, k, GraphKind::Custom))
}

/// Logarithm base used to report and calibrate row entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyBase {
    #[default]
    Natural,
    Two,
}

impl EntropyBase {
    fn ln_base(self) -> f64 {
        match self {
            EntropyBase::Natural => 1.0,
            EntropyBase::Two => std::f64::consts::LN_2,
        }
    }
}

/// Row-normalized Gaussian weights before symmetrization.
#[derive(Debug, Clone)]
pub struct PerplexityRows<T> {
    /// Row `i` holds `(j, w_ij)` for every `j ≠ i`, summing to one.
    pub rows: Vec<Vec<(usize, T)>>,
    /// Bandwidths `σ_i` in `exp(−‖y_i − y_j‖² / 2σ_i)`.
    pub sigma: Vec<T>,
    /// Achieved row entropies in the requested base.
    pub entropy: Vec<T>,
    pub base: EntropyBase,
}

/// Calibrates `σ_i` for every point so the entropy of row `i` equals `log k`.
pub fn perplexity_rows<T: Scalar>(data: &PixelDataset<T>, k: usize, base: EntropyBase) -> Result<PerplexityRows<T>> {
    let n = data.n_pixels();
    if k < 2 || k >= n {
        return Err(Error::param(format!("effective neighbors k must lie in 2..{n}, got {k}")));
    }
    let y = data.spectra();
    let dist2 = squared_distances(y);
    let target = (k as f64).ln() / base.ln_base();

    let rows: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(i, dist2.row(i).as_slice().expect("standard layout"), target, base))
        .collect::<Result<_>>()?;

    let mut out = PerplexityRows {
        rows: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        base,
    };
    for (row, beta, h) in rows {
        out.rows.push(row);
        out.sigma.push(T::lit(0.5 / beta));
        out.entropy.push(T::lit(h));
    }
    Ok(out)
}

/// Row entropy of `exp(−β D_j)` (normalized over `j ≠ i`), natural log.
fn row_entropy(shifted: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let p: Vec<f64> = shifted.iter().map(|&d| (-beta * d).exp()).collect();
    let z: f64 = p.iter().sum();
    let mean: f64 = p.iter().zip(shifted).map(|(pj, d)| pj * d).sum::<f64>() / z;
    (z.ln() + beta * mean, p.into_iter().map(|v| v / z).collect())
}

#[allow(clippy::type_complexity)]
fn calibrate_row<T: Scalar>(
    i: usize,
    dist2: &[T],
    target: f64,
    base: EntropyBase,
) -> Result<(Vec<(usize, T)>, f64, f64)> {
    let others: Vec<usize> = (0..dist2.len()).filter(|&j| j != i).collect();
    let raw: Vec<f64> = others.iter().map(|&j| dist2[j].as_f64()).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = raw.iter().map(|d| d - min).collect();
    let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;

    let ln_base = base.ln_base();
    let search_tol = 1e-3 * PERPLEXITY_TOL;
    let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;

    for _ in 0..PERPLEXITY_MAX_ITER {
        let (h_nat, p) = row_entropy(&shifted, beta);
        let h = h_nat / ln_base;
        let gap = (h - target).abs();
        if best.as_ref().is_none_or(|b| gap < (b.1 - target).abs()) {
            best = Some((beta, h, p));
        }
        if gap <= search_tol {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { 2.0 * beta };
        } else {
            hi = beta;
            beta = if lo > 0.0 { 0.5 * (beta + lo) } else { 0.5 * beta };
        }
    }

    let (beta, h, p) = best.expect("at least one iteration");
    if h.is_nan() || (h - target).abs() > PERPLEXITY_TOL {
        return Err(Error::PerplexitySearch {
            index: i,
            iterations: PERPLEXITY_MAX_ITER,
        });
    }
    let row = others.into_iter().zip(p).map(|(j, v)| (j, T::lit(v))).collect();
    Ok((row, beta, h))
}

/// Symmetrized Gaussian-perplexity graph with natural-log calibration.
pub fn gaussian_perplexity_graph<T: Scalar>(data: &PixelDataset<T>, k: usize) -> Result<NeighborhoodGraph<T>> {
    gaussian_perplexity_graph_with_base(data, k, EntropyBase::Natural)
}

pub fn gaussian_perplexity_graph_with_base<T: Scalar>(
    data: &PixelDataset<T>,
    k: usize,
    base: EntropyBase,
) -> Result<NeighborhoodGraph<T>> {
    let calibrated = perplexity_rows(data, k, base)?;
    let mut graph = NeighborhoodGraph::from_rows(calibrated.rows, k, GraphKind::GaussianPerplexity);
    graph.sigma_i = Some(calibrated.sigma);
    Ok(graph)
}

fn squared_distances<T: Scalar>(x: ArrayView2<'_, T>) -> Array2<T> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: T = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Median of the nonzero distances from each pixel to its `k` nearest
/// spatial neighbors; `1` when every pixel shares one location.
pub fn default_spatial_scale<T: Scalar>(data: &PixelDataset<T>, k: usize) -> T {
    let coords = data.coords();
    let n = coords.len();
    let mut pooled: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut d: Vec<T> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dr = coords[i][0] - coords[j][0];
                    let dc = coords[i][1] - coords[j][1];
                    (dr * dr + dc * dc).sqrt()
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            d.truncate(k);
            d.into_iter().filter(|v| *v > T::zero())
        })
        .collect();
    if pooled.is_empty() {
        return T::one();
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = pooled.len();
    if m % 2 == 1 {
        pooled[m / 2]
    } else {
        (pooled[m / 2 - 1] + pooled[m / 2]) * T::lit(0.5)
    }
}

/// Settings for [`bilateral_graph`]; `None` fields resolve to defaults.
#[derive(Debug, Clone)]
pub struct BilateralOptions<T> {
    pub k: usize,
    pub sigma_s: Option<T>,
    pub rotations: Option<usize>,
    /// Normalize each row of kept weights to sum to one before symmetrizing.
    pub normalize_rows: bool,
}

impl<T> BilateralOptions<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            sigma_s: None,
            rotations: None,
            normalize_rows: true,
        }
    }
}

/// Sparse graph from the bilateral spatial-spectral kernel.
///
/// Candidates for pixel `i` are the pixels inside a spatial window of radius
/// `3σ_s` plus its `k` nearest neighbors in the whitened spectral metric. The
/// `k` strongest bilateral weights are kept per row before symmetrization.
pub fn bilateral_graph<T: Scalar>(
    data: &PixelDataset<T>,
    opts: &BilateralOptions<T>,
) -> Result<(NeighborhoodGraph<T>, CovarianceModel<T>)> {
    let n = data.n_pixels();
    let k = opts.k;
    if k == 0 || k >= n {
        return Err(Error::param(format!("k must lie in 1..{n}, got {k}")));
    }
    let sigma_s = match opts.sigma_s {
        Some(s) if s > T::zero() && s.is_finite() => s,
        Some(s) => return Err(Error::param(format!("spatial scale must be positive, got {s}"))),
        None => default_spatial_scale(data, k),
    };
    let s = sample_covariance(data)?;
    let rotations = opts.rotations.unwrap_or_else(|| default_rotations(data.n_bands()));
    let cov = smt_estimate(s.view(), rotations)?;
    let u = cov.whiten_rows(data.spectra());
    let coords = data.coords();
    let radius2 = {
        let r = T::lit(SPATIAL_WINDOW) * sigma_s;
        r * r
    };
    let half = T::lit(0.5);

    let rows: Vec<Vec<(usize, T)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ui = u.row(i);
            let spectral: Vec<(usize, T)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let q: T = ui.iter().zip(u.row(j).iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
                    (j, q)
                })
                .collect();
            let mut nearest = spectral.clone();
            nearest.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
            let mut candidate = vec![false; n];
            for &(j, _) in nearest.iter().take(k) {
                candidate[j] = true;
            }
            let weighted = spectral
                .into_iter()
                .filter(|&(j, _)| {
                    let dr = coords[i][0] - coords[j][0];
                    let dc = coords[i][1] - coords[j][1];
                    candidate[j] || dr * dr + dc * dc <= radius2
                })
                .map(|(j, q)| (j, spatial_weight(coords[i], coords[j], sigma_s) * (-half * q).exp()))
                .collect();
            let mut kept = top_k(weighted, k);
            if opts.normalize_rows {
                let total: T = kept.iter().map(|e| e.1).sum();
                if total > T::zero() {
                    kept.iter_mut().for_each(|e| e.1 = e.1 / total);
                }
            }
            kept
        })
        .collect();

    let mut graph = NeighborhoodGraph::from_rows(rows, k, GraphKind::Bilateral);
    graph.sigma_s = Some(sigma_s);
    Ok((graph, cov))
}
