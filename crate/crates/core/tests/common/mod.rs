#![allow(dead_code)]

use mafe::spectral_graph::{bilateral_graph, BilateralOptions, GraphKind, NeighborhoodGraph};
use mafe::synth::{generate_synthetic, SyntheticSpec};
use mafe::{Family, FieldModel, PixelDataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 3 classes of 5 pixels with a bilateral k=4 graph.
pub fn toy(seed: u64) -> (PixelDataset<f64>, NeighborhoodGraph<f64>) {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::new(3, 5, 10)
    };
    let data = generate_synthetic::<f64>(&spec).unwrap();
    let (graph, _) = bilateral_graph(&data, &BilateralOptions::new(4)).unwrap();
    (data, graph)
}

/// Random symmetric graph on `n` vertices, roughly half the pairs connected.
pub fn random_graph(r: &mut ChaCha8Rng, n: usize) -> NeighborhoodGraph<f64> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if r.random_bool(0.5) {
                edges.push((i, j, r.random_range(0.05..1.0)));
            }
        }
    }
    NeighborhoodGraph::from_edges(n, &edges, GraphKind::Custom, n - 1).unwrap()
}

/// Points in a box with every pair at least `min_gap` apart.
pub fn spread_points(r: &mut ChaCha8Rng, n: usize, m: usize, half_width: f64, min_gap: f64) -> Array2<f64> {
    loop {
        let z = Array2::from_shape_simple_fn((n, m), || r.random_range(-half_width..half_width));
        let ok = (0..n).all(|i| {
            ((i + 1)..n).all(|j| {
                let d2: f64 = z.row(i).iter().zip(z.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() >= min_gap
            })
        });
        if ok {
            return z;
        }
    }
}

/// Field with randomized magnitudes and exponents, so both terms matter.
pub fn random_field(r: &mut ChaCha8Rng, family: Family) -> FieldModel<f64> {
    let mut f = FieldModel::defaults(family);
    if family.is_pairwise() {
        f.xi_a = r.random_range(0.1..1.0);
        f.xi_r = r.random_range(0.1..1.0);
        f.p = r.random_range(1.0..3.0);
        f.q = r.random_range(1.0..3.0);
        f.sigma = r.random_range(0.5..2.0);
        f.sigma_a = r.random_range(0.5..5.0);
        f.sigma_r = r.random_range(0.5..2.0);
    }
    f
}

/// Central differences of `energy` at every coordinate.
pub fn central_difference(z: &Array2<f64>, h: f64, energy: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(z.dim());
    let mut zp = z.clone();
    for idx in ndarray::indices(z.dim()) {
        let x = z[idx];
        zp[idx] = x + h;
        let ep = energy(&zp);
        zp[idx] = x - h;
        let em = energy(&zp);
        zp[idx] = x;
        g[idx] = (ep - em) / (2.0 * h);
    }
    g
}

pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// MAFE-BR energy summed over ordered pairs, straight from the definitions.
pub fn mafe_br_energy_oracle(z: &Array2<f64>, graph: &NeighborhoodGraph<f64>, f: &FieldModel<f64>) -> f64 {
    let n = z.nrows();
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sq_dist(z.row(i), z.row(j)).sqrt();
            e += graph.weight(i, j) * f.xi_a * d.powf(f.p) + f.xi_r * f.sigma * (-d.powf(f.q) / f.sigma).exp();
        }
    }
    e
}
