//! Pairwise attraction/repulsion force fields and the graph energy they define.
//!
//! Every family is described by an attraction energy `U_att(d)` (weighted by
//! the graph edge `w_ij`) and a repulsion energy `U_rep(d)` acting between all
//! pairs. Their radial force magnitudes are `F_a(d) = U_att'(d)/d` and
//! `F_r(d) = −U_rep'(d)/d`, so the pair force on `z_i` is
//! `(z_i − z_j)·{F_r − w_ij F_a}`: positive pushes apart, negative pulls in.
//!
//! The total energy sums over ordered pairs `i ≠ j` with repulsion added as a
//! barrier, and its gradient is exact (each unordered pair contributes twice).

mod energy;
mod weights;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;

pub use energy::{energy_and_gradient, total_energy, total_gradient};
pub use weights::{probabilistic_embedding_weights, EmbeddingGraphWeights, WeightKind};

use crate::{Error, Result, Scalar};

/// Upper end of the pair-equilibrium search interval.
pub const EQUILIBRIUM_MAX_DISTANCE: f64 = 1e3;

/// Absolute tolerance of the pair-equilibrium bisection.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Power attraction, bounded exponential repulsion.
    MafeBr,
    /// Power attraction, unbounded inverse-power repulsion.
    MafeUr,
    /// Exponential well attraction, bounded exponential repulsion.
    Mafee,
    /// Inverse-power well attraction, unbounded inverse-power repulsion.
    Mafeh,
    /// Stochastic neighbor embedding (Gaussian kernel, KL objective).
    Sne,
    /// Student-t stochastic neighbor embedding.
    Tsne,
    /// Laplacian eigenmaps objective as a pure attraction field.
    Le,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::MafeBr,
        Family::MafeUr,
        Family::Mafee,
        Family::Mafeh,
        Family::Sne,
        Family::Tsne,
        Family::Le,
    ];

    /// Families whose repulsion is a pairwise potential.
    pub fn is_pairwise(self) -> bool {
        matches!(self, Family::MafeBr | Family::MafeUr | Family::Mafee | Family::Mafeh)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::MafeBr => "mafe-br",
            Family::MafeUr => "mafe-ur",
            Family::Mafee => "mafee",
            Family::Mafeh => "mafeh",
            Family::Sne => "sne",
            Family::Tsne => "tsne",
            Family::Le => "le",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown model family `{s}`")))
    }
}

/// A force-field family with its parameters. Parameters a family does not
/// use are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldModel<T> {
    pub family: Family,
    pub xi_a: T,
    pub xi_r: T,
    pub p: T,
    pub q: T,
    /// Width of the bounded repulsion (MAFE-BR).
    pub sigma: T,
    /// Width of the exponential attraction well (MAFEE).
    pub sigma_a: T,
    /// Width of the exponential repulsion (MAFEE).
    pub sigma_r: T,
}

impl<T: Scalar> FieldModel<T> {
    /// Default parameters for a family.
    ///
    /// MAFE-BR: `p = q = 2`, `ξ_a = 0.4`, `ξ_r = 1e-4`, `σ = 1`.
    /// MAFE-UR: `p = 2`, `q = 1`, `ξ_a = 0.03`, `ξ_r = 1e-5`.
    pub fn defaults(family: Family) -> Self {
        let base = Self {
            family,
            xi_a: T::one(),
            xi_r: T::zero(),
            p: T::lit(2.0),
            q: T::lit(2.0),
            sigma: T::one(),
            sigma_a: T::one(),
            sigma_r: T::one(),
        };
        match family {
            Family::MafeBr => Self {
                xi_a: T::lit(0.4),
                xi_r: T::lit(1e-4),
                ..base
            },
            Family::MafeUr => Self {
                xi_a: T::lit(0.03),
                xi_r: T::lit(1e-5),
                q: T::one(),
                ..base
            },
            Family::Mafee => Self {
                xi_a: T::lit(0.4),
                xi_r: T::one(),
                sigma_a: T::lit(10.0),
                sigma_r: T::one(),
                ..base
            },
            Family::Mafeh => Self {
                xi_a: T::lit(0.03),
                xi_r: T::lit(1e-5),
                p: T::one(),
                q: T::lit(2.0),
                ..base
            },
            Family::Sne | Family::Tsne | Family::Le => base,
        }
    }

    pub fn mafe_br() -> Self {
        Self::defaults(Family::MafeBr)
    }

    pub fn mafe_ur() -> Self {
        Self::defaults(Family::MafeUr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xi_a, self.xi_r, self.p, self.q, self.sigma, self.sigma_a, self.sigma_r];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("field parameters must be finite"));
        }
        if self.xi_a < T::zero() || self.xi_r < T::zero() {
            return Err(Error::param("field magnitudes xi_a, xi_r must be nonnegative"));
        }
        if self.p < T::one() || self.q < T::one() {
            return Err(Error::param("exponents p, q must be at least 1"));
        }
        if self.sigma <= T::zero() || self.sigma_a <= T::zero() || self.sigma_r <= T::zero() {
            return Err(Error::param("widths sigma, sigma_a, sigma_r must be positive"));
        }
        Ok(())
    }

    /// Attraction energy `U_att(d)` of one pair, before the edge weight.
    ///
    /// For SNE this is `d²`, for tSNE `ln(1 + d²)`, for LE `d²`.
    pub fn attraction_energy(&self, d: T) -> T {
        match self.family {
            Family::MafeBr | Family::MafeUr => self.xi_a * powe(d, self.p),
            Family::Mafee => self.xi_a * self.sigma_a * (T::one() - (-powe(d, self.p) / self.sigma_a).exp()),
            Family::Mafeh => -self.xi_a / powe(floored(d), self.p),
            Family::Sne | Family::Le => d * d,
            Family::Tsne => (d * d).ln_1p(),
        }
    }

    /// Pairwise repulsion energy `U_rep(d)`.
    ///
    /// SNE and tSNE repel through a normalizing log-sum that is not pairwise
    /// (see [`total_energy`]); LE has no repulsion. All three return zero.
    pub fn repulsion_energy(&self, d: T) -> T {
        match self.family {
            Family::MafeBr => self.xi_r * self.sigma * (-powe(d, self.q) / self.sigma).exp(),
            Family::Mafee => self.xi_r * self.sigma_r * (-powe(d, self.q) / self.sigma_r).exp(),
            Family::MafeUr | Family::Mafeh => self.xi_r / powe(floored(d), self.q),
            Family::Sne | Family::Tsne | Family::Le => T::zero(),
        }
    }

    /// `F_a(d) = U_att'(d) / d`.
    pub fn attraction_magnitude(&self, d: T) -> T {
        let two = T::lit(2.0);
        match self.family {
            Family::MafeBr | Family::MafeUr => self.xi_a * self.p * pow_m2(d, self.p),
            Family::Mafee => self.xi_a * self.p * pow_m2(d, self.p) * (-powe(d, self.p) / self.sigma_a).exp(),
            Family::Mafeh => self.xi_a * self.p / powe(floored(d), self.p + two),
            Family::Sne | Family::Le => two,
            Family::Tsne => two / (T::one() + d * d),
        }
    }

    /// `F_r(d) = −U_rep'(d) / d`. For SNE and tSNE this is the repulsion of
    /// the unnormalized kernel (normalizer taken as one).
    pub fn repulsion_magnitude(&self, d: T) -> T {
        let two = T::lit(2.0);
        match self.family {
            Family::MafeBr => self.xi_r * self.q * pow_m2(d, self.q) * (-powe(d, self.q) / self.sigma).exp(),
            Family::Mafee => self.xi_r * self.q * pow_m2(d, self.q) * (-powe(d, self.q) / self.sigma_r).exp(),
            Family::MafeUr | Family::Mafeh => self.xi_r * self.q / powe(floored(d), self.q + two),
            Family::Sne => two * (-d * d).exp(),
            Family::Tsne => {
                let s = T::one() / (T::one() + d * d);
                two * s * s
            }
            Family::Le => T::zero(),
        }
    }

    /// `F_r(d) − w F_a(d)`: positive means net repulsion.
    pub fn radial_coefficient(&self, d: T, w: T) -> T {
        self.repulsion_magnitude(d) - w * self.attraction_magnitude(d)
    }

    /// Distance where `w F_a = F_r` on `(δ, 1e3]`, by bisection to `1e-10`.
    ///
    /// `None` when the field has no repulsion or the coefficient does not
    /// change sign over the interval.
    pub fn equilibrium_distance(&self, w: T) -> Option<T> {
        if self.xi_r <= T::zero() && self.family.is_pairwise() {
            return None;
        }
        let mut lo = T::distance_floor();
        let mut hi = T::lit(EQUILIBRIUM_MAX_DISTANCE);
        let f_lo = self.radial_coefficient(lo, w);
        let mut f_hi = self.radial_coefficient(hi, w);
        // Bounded magnitudes underflow to exactly zero far out.
        while f_hi == T::zero() && hi > lo {
            hi = hi * T::lit(0.5);
            f_hi = self.radial_coefficient(hi, w);
        }
        if f_hi == T::zero() {
            return None;
        }
        let lo_positive = f_lo >= T::zero();
        if lo_positive == (f_hi >= T::zero()) {
            return None;
        }
        let tol = T::lit(EQUILIBRIUM_TOL);
        while hi - lo > tol {
            let mid = lo + (hi - lo) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.radial_coefficient(mid, w) >= T::zero()) == lo_positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo + (hi - lo) * T::lit(0.5))
    }
}

/// Pair force on `z_i` exerted by `z_j`: `(z_i − z_j)·{F_r(‖Δ‖) − w F_a(‖Δ‖)}`.
///
/// For SNE and tSNE the repulsion uses the unnormalized kernel; see
/// [`pair_force_normalized`].
pub fn pair_force<T: Scalar>(
    z_i: ArrayView1<'_, T>,
    z_j: ArrayView1<'_, T>,
    w_ij: T,
    field: &FieldModel<T>,
) -> Result<Vec<T>> {
    pair_force_normalized(z_i, z_j, w_ij, T::one(), field)
}

/// [`pair_force`] with the SNE/tSNE repulsion divided by `normalizer`.
pub fn pair_force_normalized<T: Scalar>(
    z_i: ArrayView1<'_, T>,
    z_j: ArrayView1<'_, T>,
    w_ij: T,
    normalizer: T,
    field: &FieldModel<T>,
) -> Result<Vec<T>> {
    if z_i.len() != z_j.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}-vector", z_i.len()),
            found: format!("{}-vector", z_j.len()),
        });
    }
    if z_i.iter().chain(z_j.iter()).any(|v| !v.is_finite()) || !w_ij.is_finite() {
        return Err(Error::NonFinite("pair force input".into()));
    }
    let delta: Vec<T> = z_i.iter().zip(z_j.iter()).map(|(&a, &b)| a - b).collect();
    let d = delta.iter().map(|&v| v * v).sum::<T>().sqrt();
    let rep = match field.family {
        Family::Sne | Family::Tsne => field.repulsion_magnitude(d) / normalizer,
        _ => field.repulsion_magnitude(d),
    };
    let c = rep - w_ij * field.attraction_magnitude(d);
    Ok(delta.into_iter().map(|v| v * c).collect())
}

#[inline]
fn floored<T: Scalar>(d: T) -> T {
    d.max(T::distance_floor())
}

/// `d^e`, by repeated multiplication for small integer exponents.
#[inline]
fn powe<T: Scalar>(d: T, e: T) -> T {
    if e.fract() == T::zero() && e.abs() <= T::lit(8.0) {
        d.powi(e.to_i32().expect("small integer exponent"))
    } else {
        d.powf(e)
    }
}

/// `d^(e−2)`, with the distance floored when the exponent is negative.
#[inline]
fn pow_m2<T: Scalar>(d: T, e: T) -> T {
    let k = e - T::lit(2.0);
    if k == T::zero() {
        T::one()
    } else if k > T::zero() {
        powe(d, k)
    } else {
        powe(floored(d), k)
    }
}
