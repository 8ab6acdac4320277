mod common;

use common::*;
use mafe::field::{pair_force, total_energy, total_gradient, EQUILIBRIUM_MAX_DISTANCE};
use mafe::spectral_graph::GraphKind;
use mafe::{EngineConfig, Family, FieldModel, NeighborhoodGraph, Termination};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

fn fd_check(family: Family, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=12);
    let m = r.random_range(1..=3);
    let field = random_field(&mut r, family);
    let graph = random_graph(&mut r, n);
    let z = spread_points(&mut r, n, m, 2.0, 0.2);
    let g = total_gradient(z.view(), &graph, &field).unwrap();
    let fd = central_difference(&z, 1e-6, |zz| total_energy(zz.view(), &graph, &field).unwrap());
    relative_error(&g, &fd)
}

#[test]
fn gradient_matches_central_differences_for_every_family() {
    for family in Family::ALL {
        for seed in 0..50 {
            let err = fd_check(family, seed);
            assert!(err <= 1e-5, "{family} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn three_point_energy_matches_double_loop() {
    let mut r = rng(7);
    let f = FieldModel {
        xi_r: 0.3,
        ..FieldModel::mafe_br()
    };
    for _ in 0..20 {
        let z = Array2::from_shape_simple_fn((3, 2), || r.random_range(-3.0..3.0));
        let g = random_graph(&mut r, 3);
        let got = total_energy(z.view(), &g, &f).unwrap();
        let want = mafe_br_energy_oracle(&z, &g, &f);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn pure_attraction_points_toward_partner() {
    for family in [Family::MafeBr, Family::MafeUr, Family::Mafee, Family::Mafeh] {
        let f = FieldModel::<f64> {
            xi_r: 0.0,
            ..FieldModel::defaults(family)
        };
        let zi = array![1.0, 2.0];
        let zj = array![-0.5, 0.5];
        let force = pair_force(zi.view(), zj.view(), 0.7, &f).unwrap();
        let toward = &zj - &zi;
        let expected = f.attraction_magnitude(toward.dot(&toward).sqrt()) * 0.7;
        for k in 0..2 {
            assert!((force[k] - expected * toward[k]).abs() < 1e-14, "{family}");
            assert!(force[k] * toward[k] > 0.0, "{family}");
        }
    }
}

#[test]
fn br_force_vanishes_at_bisection_root() {
    // ξ_a w = ξ_r exp(−d²/σ) solved by an independent bisection
    let f = FieldModel::<f64>::mafe_br();
    for w in [1e-5, 5e-5, 1e-4, 2e-4] {
        let g = |d: f64| f.xi_a * w - f.xi_r * (-d * d / f.sigma).exp();
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eps = 0.5 * (lo + hi);
        let force = pair_force(array![eps, 0.0].view(), array![0.0, 0.0].view(), w, &f).unwrap();
        assert!(force.iter().all(|v| v.abs() <= 1e-12), "w={w}: {force:?}");
        let found = f.equilibrium_distance(w).unwrap();
        assert!((found - eps).abs() < 1e-9);
    }
}

#[test]
fn ur_equilibrium_matches_grid_scan_and_closed_form() {
    // 2ξ_a w = ξ_r q / d^{q+2} with p=2, q=1 → d = (ξ_r / 2ξ_a w)^{1/3}
    let f = FieldModel::<f64>::mafe_ur();
    let eps = f.equilibrium_distance(1.0).unwrap();
    let closed = (f.xi_r / (2.0 * f.xi_a)).cbrt();
    assert!((eps - closed).abs() < 1e-9);

    let coeff = |d: f64| f.radial_coefficient(d, 1.0);
    let steps = 1_000_000;
    let (a, b) = (1e-3, 1.0);
    let h = (b - a) / steps as f64;
    let mut root = None;
    for s in 0..steps {
        let (x0, x1) = (a + s as f64 * h, a + (s + 1) as f64 * h);
        if coeff(x0) > 0.0 && coeff(x1) <= 0.0 {
            root = Some(0.5 * (x0 + x1));
            break;
        }
    }
    assert!((root.unwrap() - eps).abs() <= 1e-6);
}

#[test]
fn equilibrium_absent_without_repulsion_or_balance() {
    let f = FieldModel {
        xi_r: 0.0,
        ..FieldModel::<f64>::mafe_br()
    };
    assert!(f.equilibrium_distance(0.5).is_none());
    // attraction dominates repulsion everywhere for BR defaults at w=1
    assert!(FieldModel::<f64>::mafe_br().equilibrium_distance(1.0).is_none());
}

fn sign_changes(f: &FieldModel<f64>, w: f64) -> usize {
    // log grid over (δ, 1e3]
    let (lo, hi) = (1e-12f64.ln(), EQUILIBRIUM_MAX_DISTANCE.ln());
    let steps = 20_000;
    let mut prev = f.radial_coefficient(lo.exp(), w) > 0.0;
    let mut count = 0;
    for s in 1..=steps {
        let d = (lo + (hi - lo) * s as f64 / steps as f64).exp();
        let c = f.radial_coefficient(d, w);
        if c == 0.0 {
            continue;
        }
        if (c > 0.0) != prev {
            count += 1;
            prev = c > 0.0;
        }
    }
    count
}

fn assert_regimes(f: &FieldModel<f64>, w: f64) {
    let eps = f.equilibrium_distance(w).unwrap();
    for t in [0.1, 0.5, 0.9, 0.999] {
        assert!(f.radial_coefficient(eps * t, w) > 0.0, "{} below eps={eps}", f.family);
    }
    for t in [1.001, 1.5, 3.0] {
        // bounded families decay to exactly zero far out
        let c = f.radial_coefficient(eps * t, w);
        assert!(c <= 0.0, "{} above eps={eps}: {c}", f.family);
    }
}

#[test]
fn defaults_have_a_single_equilibrium() {
    let mut r = rng(3);
    for family in [Family::MafeBr, Family::MafeUr, Family::Mafee, Family::Mafeh] {
        let f = FieldModel::defaults(family);
        for _ in 0..20 {
            // BR defaults only balance below w = ξ_r/ξ_a
            let w = if family == Family::MafeBr {
                r.random_range(1e-6..2.4e-4)
            } else {
                r.random_range(0.01..1.0)
            };
            assert_eq!(sign_changes(&f, w), 1, "{family} w={w}");
            assert_regimes(&f, w);
        }
    }
}

#[test]
fn sign_regimes_around_a_unique_equilibrium() {
    // random exponents can give several crossings or an inverted one; the
    // regime property is about fields that repel at contact and balance once
    let mut r = rng(11);
    for family in [Family::MafeBr, Family::MafeUr, Family::Mafee, Family::Mafeh] {
        let mut checked = 0;
        for _ in 0..600 {
            let f = random_field(&mut r, family);
            let w = r.random_range(0.01..1.0);
            // p < q can make attraction win at short range
            if sign_changes(&f, w) != 1 || f.radial_coefficient(1e-12, w) <= 0.0 {
                continue;
            }
            // roots pressed against the distance floor are not resolvable
            if f.equilibrium_distance(w).is_none_or(|e| e < 1e-6) {
                continue;
            }
            checked += 1;
            assert_regimes(&f, w);
        }
        assert!(checked > 20, "{family}: only {checked} instances had one equilibrium");
    }
}

#[test]
fn collapse_without_repulsion() {
    // the global minimum of a nonnegative energy that is zero only at
    // coincidence: every point ends at the (conserved) centroid
    let f = FieldModel::<f64> {
        xi_r: 0.0,
        ..FieldModel::mafe_br()
    };
    let g = NeighborhoodGraph::from_edges(3, &[(0, 1, 0.6), (0, 2, 0.3), (1, 2, 0.9)], GraphKind::Custom, 2).unwrap();
    let z0 = array![[3.0, -1.0], [-2.0, 4.0], [0.5, 0.5]];
    let centroid = z0.mean_axis(ndarray::Axis(0)).unwrap();
    let cfg = EngineConfig {
        eps: 1e-10,
        max_iter: 100_000,
        ..Default::default()
    };
    let out = mafe::engine::run_from(z0, &g, &f, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    for row in out.z.rows() {
        let d = (&row - &centroid).mapv(|v| v * v).sum().sqrt();
        assert!(d <= 1e-6, "{d}");
    }
}

fn arr(v: Vec<f64>) -> Array1<f64> {
    Array1::from(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pair_force_is_odd(
        fam in 0usize..7,
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
        w in 0.0f64..1.0,
    ) {
        let f = FieldModel::defaults(Family::ALL[fam]);
        let (a, b) = (arr(a), arr(b));
        prop_assume!(a != b);
        let fwd = pair_force(a.view(), b.view(), w, &f).unwrap();
        let back = pair_force(b.view(), a.view(), w, &f).unwrap();
        for (x, y) in fwd.iter().zip(&back) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn gradient_rows_decompose_into_pair_forces(seed in any::<u64>(), fam in 0usize..4) {
        let mut r = rng(seed);
        let family = Family::ALL[fam];
        let n = r.random_range(2..=8);
        let f = random_field(&mut r, family);
        let g = random_graph(&mut r, n);
        let z = spread_points(&mut r, n, 2, 2.0, 0.2);
        let grad = total_gradient(z.view(), &g, &f).unwrap();
        for i in 0..n {
            let mut sum = [0.0; 2];
            for j in (0..n).filter(|&j| j != i) {
                let p = pair_force(z.row(i), z.row(j), g.weight(i, j), &f).unwrap();
                sum[0] += p[0];
                sum[1] += p[1];
            }
            for k in 0..2 {
                let want = -2.0 * sum[k];
                prop_assert!((grad[[i, k]] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn energy_is_translation_invariant(seed in any::<u64>(), fam in 0usize..7, shift in prop::collection::vec(-3.0f64..3.0, 2)) {
        let mut r = rng(seed);
        let family = Family::ALL[fam];
        let n = r.random_range(2..=8);
        let f = random_field(&mut r, family);
        let g = random_graph(&mut r, n);
        let z = spread_points(&mut r, n, 2, 2.0, 0.2);
        let moved = &z + &arr(shift);
        let e0 = total_energy(z.view(), &g, &f).unwrap();
        let e1 = total_energy(moved.view(), &g, &f).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.abs().max(1.0), "{} vs {}", e0, e1);
    }

    #[test]
    fn repulsion_energy_decreases_with_distance(fam in 0usize..4, d in 1e-3f64..10.0, step in 1e-3f64..1.0) {
        let f = FieldModel::defaults(Family::ALL[fam]);
        prop_assert!(f.repulsion_energy(d + step) < f.repulsion_energy(d));
    }
}
