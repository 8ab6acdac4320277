use ndarray::{Array2, ArrayView2};

use super::{Family, FieldModel};
use crate::spectral_graph::NeighborhoodGraph;
use crate::{Error, Result, Scalar};

/// Total energy of the configuration `z` (one row per vertex).
///
/// * MAFE families: `Σ_i Σ_{j≠i} [w_ij U_att(d_ij) + U_rep(d_ij)]`.
/// * SNE / tSNE: `−Σ_ij w_ij ln ŵ_ij`, i.e. the KL objective without its
///   constant entropy term.
/// * LE: `Σ_i Σ_{j≠i} w_ij d_ij²`.
pub fn total_energy<T: Scalar>(
    z: ArrayView2<'_, T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
) -> Result<T> {
    Ok(evaluate(z, graph, field, false)?.0)
}

/// Exact gradient of [`total_energy`] with respect to every coordinate.
///
/// Row `i` is `Σ_{j≠i} c_ij (z_i − z_j)` with a pair coefficient `c_ij`
/// symmetric in `i, j`. For MAFE families `c_ij = 2(w_ij F_a − F_r)`.
pub fn total_gradient<T: Scalar>(
    z: ArrayView2<'_, T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
) -> Result<Array2<T>> {
    Ok(evaluate(z, graph, field, true)?.1.expect("gradient requested"))
}

/// [`total_energy`] and [`total_gradient`] from a single pass over the pairs.
pub fn energy_and_gradient<T: Scalar>(
    z: ArrayView2<'_, T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
) -> Result<(T, Array2<T>)> {
    let (e, g) = evaluate(z, graph, field, true)?;
    Ok((e, g.expect("gradient requested")))
}

fn check_shapes<T: Scalar>(z: &ArrayView2<'_, T>, graph: &NeighborhoodGraph<T>) -> Result<()> {
    if z.nrows() != graph.n_vertices() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} embedding rows", graph.n_vertices()),
            found: format!("{}", z.nrows()),
        });
    }
    if z.ncols() == 0 {
        return Err(Error::param("embedding dimension must be at least 1"));
    }
    Ok(())
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc = acc + d * d;
    }
    acc
}

/// Calls `f(i, j, w_ij)` for every pair `i < j` in lexicographic order.
#[inline]
fn for_each_pair<T: Scalar>(graph: &NeighborhoodGraph<T>, mut f: impl FnMut(usize, usize, T)) {
    let n = graph.n_vertices();
    for i in 0..n {
        let nbrs = graph.neighbors(i);
        let mut next = nbrs.partition_point(|e| e.0 <= i);
        for j in (i + 1)..n {
            let w = if next < nbrs.len() && nbrs[next].0 == j {
                next += 1;
                nbrs[next - 1].1
            } else {
                T::zero()
            };
            f(i, j, w);
        }
    }
}

/// Per-row normalizer of the SNE / tSNE embedding kernel.
#[derive(Debug, Clone, Copy)]
struct RowNorm<T> {
    /// `Σ_j w_ij`.
    mass: T,
    /// Shift applied inside the exponent (SNE only).
    shift: T,
    /// Sum of the (shifted) kernel over `j ≠ i`.
    sum: T,
}

impl<T: Scalar> RowNorm<T> {
    fn log_normalizer(&self, family: Family) -> T {
        match family {
            Family::Sne => self.sum.ln() - self.shift,
            _ => self.sum.ln(),
        }
    }

    /// `ŵ_ij` from the squared distance.
    fn prob(&self, d2: T, family: Family) -> T {
        match family {
            Family::Sne => (-(d2 - self.shift)).exp() / self.sum,
            _ => (T::one() + d2).recip() / self.sum,
        }
    }
}

fn row_norms<T: Scalar>(z: &[T], m: usize, graph: &NeighborhoodGraph<T>, family: Family) -> Vec<RowNorm<T>> {
    let n = graph.n_vertices();
    let row = |i: usize| &z[i * m..(i + 1) * m];
    let mut norms: Vec<RowNorm<T>> = (0..n)
        .map(|i| RowNorm {
            mass: graph.neighbors(i).iter().map(|e| e.1).sum(),
            shift: if family == Family::Sne { T::infinity() } else { T::zero() },
            sum: T::zero(),
        })
        .collect();
    if family == Family::Sne {
        for i in 0..n {
            for j in (i + 1)..n {
                let d2 = sq_dist(row(i), row(j));
                norms[i].shift = norms[i].shift.min(d2);
                norms[j].shift = norms[j].shift.min(d2);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = sq_dist(row(i), row(j));
            match family {
                Family::Sne => {
                    norms[i].sum = norms[i].sum + (-(d2 - norms[i].shift)).exp();
                    norms[j].sum = norms[j].sum + (-(d2 - norms[j].shift)).exp();
                }
                _ => {
                    let k = (T::one() + d2).recip();
                    norms[i].sum = norms[i].sum + k;
                    norms[j].sum = norms[j].sum + k;
                }
            }
        }
    }
    norms
}

/// Energy of one ordered pair and its gradient coefficient `c_ij`.
#[inline]
fn pair_terms<T: Scalar>(field: &FieldModel<T>, d2: T, w: T) -> (T, T) {
    let two = T::lit(2.0);
    match field.family {
        Family::Le => (w * d2, two * two * w),
        _ => {
            let d = d2.sqrt();
            let (att, fa) = if w == T::zero() {
                (T::zero(), T::zero())
            } else {
                (w * field.attraction_energy(d), w * field.attraction_magnitude(d))
            };
            (att + field.repulsion_energy(d), two * (fa - field.repulsion_magnitude(d)))
        }
    }
}

/// Visits every unordered pair once, in a fixed order, so results are
/// bit-reproducible.
fn evaluate<T: Scalar>(
    z: ArrayView2<'_, T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
    want_grad: bool,
) -> Result<(T, Option<Array2<T>>)> {
    check_shapes(&z, graph)?;
    let (n, m) = z.dim();
    let zs = z.as_standard_layout();
    let zs = zs.as_slice().expect("standard layout");
    let row = |i: usize| &zs[i * m..(i + 1) * m];
    let family = field.family;
    let norms = matches!(family, Family::Sne | Family::Tsne).then(|| row_norms(zs, m, graph, family));
    let two = T::lit(2.0);

    let mut grad = want_grad.then(|| vec![T::zero(); n * m]);
    let mut energy = T::zero();
    for_each_pair(graph, |i, j, w| {
        let d2 = sq_dist(row(i), row(j));
        let (e, c) = match &norms {
            Some(norms) => {
                let (ri, rj) = (norms[i], norms[j]);
                let rep = ri.mass * ri.prob(d2, family) + rj.mass * rj.prob(d2, family);
                let c = two * two * w - two * rep;
                if family == Family::Tsne {
                    (w * d2.ln_1p(), c / (T::one() + d2))
                } else {
                    (w * d2, c)
                }
            }
            None => pair_terms(field, d2, w),
        };
        energy = energy + two * e;
        if let Some(g) = grad.as_mut() {
            if c != T::zero() {
                for k in 0..m {
                    let v = c * (zs[i * m + k] - zs[j * m + k]);
                    g[i * m + k] = g[i * m + k] + v;
                    g[j * m + k] = g[j * m + k] - v;
                }
            }
        }
    });
    if let Some(norms) = &norms {
        for r in norms.iter().filter(|r| r.mass != T::zero()) {
            energy = energy + r.mass * r.log_normalizer(family);
        }
    }
    let grad = grad.map(|g| Array2::from_shape_vec((n, m), g).expect("gradient shape"));
    Ok((energy, grad))
}
