use ndarray::{Array2, ArrayView2};

use super::Family;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Row-normalized SNE / tSNE kernel.
    Probabilistic,
    /// `ξ_a w_ij − ξ_r exp(−d²/σ)`.
    LearnedBr,
    /// `ξ_a w_ij − ξ_r / d⁴`.
    LearnedUr,
}

/// Dense pair weights read off an embedding. The diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGraphWeights<T> {
    pub values: Array2<T>,
    pub kind: WeightKind,
}

/// `ŵ_ij`: the Gaussian (SNE) or Student-t (tSNE) kernel of the embedding,
/// normalized over `j ≠ i` in every row.
pub fn probabilistic_embedding_weights<T: Scalar>(
    z: ArrayView2<'_, T>,
    family: Family,
) -> Result<EmbeddingGraphWeights<T>> {
    if !matches!(family, Family::Sne | Family::Tsne) {
        return Err(Error::UnsupportedFamily(family.to_string()));
    }
    let n = z.nrows();
    if n < 2 {
        return Err(Error::param("at least two points are required"));
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        let d2: Vec<T> = (0..n)
            .map(|j| {
                z.row(i)
                    .iter()
                    .zip(z.row(j).iter())
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            })
            .collect();
        // Shift by the nearest squared distance so the Gaussian never underflows
        // to an all-zero row.
        let shift = (0..n)
            .filter(|&j| j != i)
            .map(|j| d2[j])
            .fold(T::infinity(), T::min);
        let mut sum = T::zero();
        for j in (0..n).filter(|&j| j != i) {
            let k = match family {
                Family::Sne => (-(d2[j] - shift)).exp(),
                _ => (T::one() + d2[j]).recip(),
            };
            values[[i, j]] = k;
            sum = sum + k;
        }
        values.row_mut(i).mapv_inplace(|v| v / sum);
    }
    Ok(EmbeddingGraphWeights {
        values,
        kind: WeightKind::Probabilistic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_points_weigh_one() {
        let z = array![[0.0, 0.0], [3.0, 1.0]];
        for fam in [Family::Sne, Family::Tsne] {
            let w = probabilistic_embedding_weights(z.view(), fam).unwrap();
            assert_eq!(w.values[[0, 1]], 1.0);
            assert_eq!(w.values[[1, 0]], 1.0);
            assert_eq!(w.values[[0, 0]], 0.0);
        }
    }

    #[test]
    fn equidistant_triangle_is_uniform() {
        let h = 3f64.sqrt() / 2.0;
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        let w = probabilistic_embedding_weights(z.view(), Family::Tsne).unwrap();
        for i in 0..3 {
            for j in (0..3).filter(|&j| j != i) {
                assert!((w.values[[i, j]] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_points_do_not_underflow() {
        let z = array![[0.0f64], [100.0], [250.0]];
        let w = probabilistic_embedding_weights(z.view(), Family::Sne).unwrap();
        for i in 0..3 {
            assert!((w.values.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_pairwise_family() {
        let z = array![[0.0], [1.0]];
        assert!(probabilistic_embedding_weights(z.view(), Family::MafeBr).is_err());
    }
}
