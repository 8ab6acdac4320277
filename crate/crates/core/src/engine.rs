//! Adaptive-rate gradient descent of the field energy.

use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::field::{energy_and_gradient, EmbeddingGraphWeights, Family, FieldModel, WeightKind};
use crate::spectral_graph::NeighborhoodGraph;
use crate::{Error, Result, Scalar};

/// Variance of the initial coordinates.
pub const INIT_VARIANCE: f64 = 50.0;

/// Maximum number of step halvings tried by the backtracking guard.
pub const MAX_HALVINGS: usize = 20;

/// A run fails once the energy exceeds this multiple of `max(|E₀|, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Embedding dimension `m`.
    pub dim: usize,
    /// Initial learning rate.
    pub alpha0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Stop once the gradient's Frobenius norm is at most this.
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Record every `s`-th iteration. `None` picks 1 for up to 100 points, 10 above.
    pub cadence: Option<usize>,
    /// Reject steps that raise the energy, halving them instead.
    pub backtracking: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            alpha0: 0.1,
            gamma1: 1e-4,
            gamma2: 1e-5,
            alpha_min: 1e-6,
            alpha_max: 1.0,
            eps: 1e-5,
            max_iter: 1000,
            seed: 0,
            cadence: None,
            backtracking: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.dim == 0 {
            return Err(Error::param("embedding dimension must be at least 1"));
        }
        if !positive(self.alpha_min) || !positive(self.alpha_max) || self.alpha_min > self.alpha_max {
            return Err(Error::param(format!(
                "learning rate bounds must satisfy 0 < alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        if !positive(self.alpha0) {
            return Err(Error::param(format!("initial learning rate must be positive, got {}", self.alpha0)));
        }
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::param(format!("{name} must be finite and nonnegative, got {g}")));
            }
        }
        if !positive(self.eps) {
            return Err(Error::param(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if self.cadence == Some(0) {
            return Err(Error::param("snapshot cadence must be at least 1"));
        }
        Ok(())
    }

    /// Snapshot cadence for `n` points.
    pub fn resolved_cadence(&self, n: usize) -> usize {
        self.cadence.unwrap_or(if n <= 100 { 1 } else { 10 })
    }

    fn clamp_alpha<T: Scalar>(&self, alpha: T) -> T {
        alpha.max(T::lit(self.alpha_min)).min(T::lit(self.alpha_max))
    }
}

/// `N × m` coordinates drawn iid from `N(0, 50)`.
pub fn init_embedding<T: Scalar>(n: usize, m: usize, seed: u64) -> Result<Array2<T>> {
    if n == 0 || m == 0 {
        return Err(Error::param(format!("embedding shape must be positive, got {n}x{m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_VARIANCE.sqrt()).expect("valid normal");
    Ok(Array2::from_shape_simple_fn((n, m), || T::lit(normal.sample(&mut rng))))
}

fn inner<T: Scalar>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn frobenius<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

/// `α + γ₁⟨g_{t−1}, g_t⟩ + γ₂⟨g_{t−2}, g_{t−1}⟩`, clamped to
/// `[alpha_min, alpha_max]`. Absent history counts as zero.
#[allow(clippy::too_many_arguments)]
pub fn adapt_learning_rate<T: Scalar>(
    alpha: T,
    g_t: ArrayView2<'_, T>,
    g_t1: Option<ArrayView2<'_, T>>,
    g_t2: Option<ArrayView2<'_, T>>,
    gamma1: T,
    gamma2: T,
    alpha_min: T,
    alpha_max: T,
) -> Result<T> {
    for g in [g_t1.as_ref(), g_t2.as_ref()].into_iter().flatten() {
        if g.dim() != g_t.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} gradient", g_t.dim()),
                found: format!("{:?}", g.dim()),
            });
        }
    }
    let mut next = alpha;
    if let Some(g1) = &g_t1 {
        next = next + gamma1 * inner(g1, &g_t);
        if let Some(g2) = &g_t2 {
            next = next + gamma2 * inner(g2, g1);
        }
    }
    Ok(next.max(alpha_min).min(alpha_max))
}

/// Optimizer state between iterations.
#[derive(Debug, Clone)]
pub struct EmbeddingState<T> {
    pub z: Array2<T>,
    /// Learning rate used by the next step.
    pub alpha: T,
    /// Gradient at `z`.
    pub grad: Array2<T>,
    /// Gradients at the two previous iterates, most recent first.
    pub grad_t1: Option<Array2<T>>,
    pub grad_t2: Option<Array2<T>>,
    /// Energy at `z`.
    pub energy: T,
    pub t: usize,
}

impl<T: Scalar> EmbeddingState<T> {
    /// State at `z` with no gradient history.
    pub fn new(z: Array2<T>, graph: &NeighborhoodGraph<T>, field: &FieldModel<T>, config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        field.validate()?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial embedding".into()));
        }
        let (energy, grad) = energy_and_gradient(z.view(), graph, field)?;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: 0 });
        }
        Ok(Self {
            z,
            alpha: config.clamp_alpha(T::lit(config.alpha0)),
            grad,
            grad_t1: None,
            grad_t2: None,
            energy,
            t: 0,
        })
    }

    pub fn grad_norm(&self) -> T {
        frobenius(&self.grad)
    }
}

/// One descent iteration `Z ← Z − α∇U(Z)` followed by the learning-rate update.
///
/// With backtracking on, a step that raises the energy is halved up to 20
/// times. If none is accepted the coordinates stay put and the rate shrinks.
pub fn step<T: Scalar>(
    state: EmbeddingState<T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
    config: &EngineConfig,
) -> Result<EmbeddingState<T>> {
    let t = state.t + 1;
    let half = T::lit(0.5);
    let mut alpha = state.alpha;
    let mut accepted = None;
    for attempt in 0..=MAX_HALVINGS {
        let mut z = state.z.clone();
        Zip::from(&mut z).and(&state.grad).for_each(|zi, &g| *zi = *zi - alpha * g);
        let (energy, grad) = energy_and_gradient(z.view(), graph, field)?;
        if !config.backtracking || energy <= state.energy {
            accepted = Some((z, energy, grad));
            break;
        }
        if attempt < MAX_HALVINGS {
            alpha = alpha * half;
        }
    }

    let Some((z, energy, grad)) = accepted else {
        let alpha = config.clamp_alpha(alpha * half);
        return Ok(EmbeddingState { alpha, t, ..state });
    };

    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { iteration: t });
    }
    let next_alpha = adapt_learning_rate(
        alpha,
        grad.view(),
        Some(state.grad.view()),
        state.grad_t1.as_ref().map(|g| g.view()),
        T::lit(config.gamma1),
        T::lit(config.gamma2),
        T::lit(config.alpha_min),
        T::lit(config.alpha_max),
    )?;
    Ok(EmbeddingState {
        z,
        alpha: next_alpha,
        grad,
        grad_t1: Some(state.grad),
        grad_t2: state.grad_t1,
        energy,
        t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub t: usize,
    pub z: Array2<T>,
    pub energy: T,
    pub grad_norm: T,
    pub alpha: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T> {
    pub cadence: usize,
    pub snapshots: Vec<Snapshot<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell to `eps` or below.
    Converged,
    /// `max_iter` iterations were taken.
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct EmbeddingRun<T> {
    pub z: Array2<T>,
    pub trajectory: Trajectory<T>,
    pub termination: Termination,
    pub iterations: usize,
    pub energy: T,
    pub grad_norm: T,
}

/// Full run from a seeded `N(0, 50I)` start.
pub fn run<T: Scalar>(
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
    config: &EngineConfig,
) -> Result<EmbeddingRun<T>> {
    config.validate()?;
    let z0 = init_embedding(graph.n_vertices(), config.dim, config.seed)?;
    run_from(z0, graph, field, config)
}

/// Full run from given coordinates.
pub fn run_from<T: Scalar>(
    z0: Array2<T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
    config: &EngineConfig,
) -> Result<EmbeddingRun<T>> {
    let mut state = EmbeddingState::new(z0, graph, field, config)?;
    let cadence = config.resolved_cadence(graph.n_vertices());
    let eps = T::lit(config.eps);
    let limit = DIVERGENCE_FACTOR * state.energy.as_f64().abs().max(1.0);
    let mut trajectory = Trajectory {
        cadence,
        snapshots: Vec::new(),
    };
    let record = |s: &EmbeddingState<T>, tr: &mut Trajectory<T>| {
        if s.t.is_multiple_of(cadence) {
            tr.snapshots.push(Snapshot {
                t: s.t,
                z: s.z.clone(),
                energy: s.energy,
                grad_norm: s.grad_norm(),
                alpha: s.alpha,
            });
        }
    };
    record(&state, &mut trajectory);

    let mut termination = Termination::MaxIter;
    if state.grad_norm() <= eps {
        termination = Termination::Converged;
    } else {
        while state.t < config.max_iter {
            state = step(state, graph, field, config)?;
            let e = state.energy.as_f64();
            if !e.is_finite() || e > limit {
                return Err(Error::Diverged {
                    iteration: state.t,
                    energy: e,
                    limit,
                });
            }
            record(&state, &mut trajectory);
            if state.grad_norm() <= eps {
                termination = Termination::Converged;
                break;
            }
        }
    }

    let grad_norm = state.grad_norm();
    Ok(EmbeddingRun {
        z: state.z,
        trajectory,
        termination,
        iterations: state.t,
        energy: state.energy,
        grad_norm,
    })
}

/// Signed pair weights implied by a MAFE-BR or MAFE-UR embedding:
/// `ξ_a w_ij − ξ_r exp(−d²/σ)` or `ξ_a w_ij − ξ_r / max(d, δ)⁴`.
pub fn learned_embedding_weights<T: Scalar>(
    z: ArrayView2<'_, T>,
    graph: &NeighborhoodGraph<T>,
    field: &FieldModel<T>,
) -> Result<EmbeddingGraphWeights<T>> {
    let two = T::lit(2.0);
    let kind = match field.family {
        Family::MafeBr if field.p == two && field.q == two => WeightKind::LearnedBr,
        Family::MafeUr if field.p == two => WeightKind::LearnedUr,
        Family::MafeBr | Family::MafeUr => {
            return Err(Error::param(format!(
                "learned weights need p = 2 (and q = 2 for mafe-br), got p = {}, q = {}",
                field.p, field.q
            )))
        }
        other => return Err(Error::UnsupportedFamily(other.to_string())),
    };
    let n = graph.n_vertices();
    if z.nrows() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} embedding rows"),
            found: format!("{}", z.nrows()),
        });
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = z
                .row(i)
                .iter()
                .zip(z.row(j).iter())
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            let rep = match kind {
                WeightKind::LearnedBr => field.xi_r * (-d2 / field.sigma).exp(),
                _ => {
                    let d = d2.sqrt().max(T::distance_floor());
                    field.xi_r / (d * d * d * d)
                }
            };
            let v = field.xi_a * graph.weight(i, j) - rep;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(EmbeddingGraphWeights { values, kind })
}
