use std::sync::Arc;

use ndarray::{array, Array2, ArrayView1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use xmap_core::umap::affinity::{fuzzy_union, row_sum};
use xmap_core::umap::curve::q_of_sq;
use xmap_core::umap::objective::{
    attractive_coefficient, pair_cross_entropy, pair_gradient, repulsive_coefficient,
};
use xmap_core::umap::{
    cross_entropy, fit_ab, fuzzy_symmetrize, knn_graph, umap_affinities, ConditionalGraph, Metric,
    SparseGraph,
};
use xmap_core::{UmapConfig, UmapModel};
use xmap_oracles::{central_gradient, euclidean, fuzzy_cross_entropy, knn_full_sort, max_relative_error};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

fn manhattan(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).max(0.0)
}

#[test]
fn knn_matches_full_sort() {
    let x = random_matrix(50, 4, 5);
    type Dist = fn(ArrayView1<f64>, ArrayView1<f64>) -> f64;
    let cases: [(Metric, Dist); 3] =
        [(Metric::Euclidean, euclidean), (Metric::Manhattan, manhattan), (Metric::Cosine, cosine)];
    for (metric, oracle_dist) in cases {
        let nb = knn_graph(x.view(), 7, metric).unwrap();
        let oracle = knn_full_sort(x.view(), 7, oracle_dist);
        for i in 0..50 {
            let want: Vec<usize> = oracle[i].iter().map(|p| p.0).collect();
            assert_eq!(nb.indices[i], want, "{metric:?} row {i}");
            for (d, o) in nb.distances[i].iter().zip(&oracle[i]) {
                assert!((d - o.1).abs() <= 1e-12 * o.1.max(1.0));
            }
        }
    }
}

#[test]
fn calibrated_rows_sum_to_log2_k() {
    let x = random_matrix(100, 5, 17);
    let nb = knn_graph(x.view(), 15, Metric::Euclidean).unwrap();
    let g = umap_affinities(&nb);
    assert!(g.degenerate_rows.is_empty());
    for i in 0..100 {
        // direct evaluation of the membership sum from the raw distances
        let direct: f64 = nb.distances[i]
            .iter()
            .map(|&d| (-(d - g.rhos[i]).max(0.0) / g.sigmas[i]).exp())
            .sum();
        assert!((direct - 15f64.log2()).abs() <= 1e-3, "row {i}: {direct}");
        assert_eq!(g.weights[i][0], 1.0);
        assert_eq!(g.rhos[i], nb.distances[i][0]);
    }
}

#[test]
fn equidistant_neighbors_saturate_calibration() {
    assert_eq!(row_sum(&[2.0; 5], 2.0, 0.3), 5.0);
    let nb = knn_graph(array![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]].view(), 2, Metric::Euclidean)
        .unwrap();
    let g = umap_affinities(&nb);
    assert!(g.degenerate_rows.contains(&0));
}

#[test]
fn curve_fit_matches_grid_search() {
    let fit = fit_ab(0.1, 1.0).unwrap();
    let (a, b) = xmap_oracles::curve_grid_fit(0.1, 1.0);
    assert!((fit.a - a).abs() < 1e-2, "a {} vs {a}", fit.a);
    assert!((fit.b - b).abs() < 1e-2, "b {} vs {b}", fit.b);
    assert_eq!(q_of_sq(0.0, fit.a, fit.b), 1.0);
    let mut prev = f64::INFINITY;
    for i in 0..1000 {
        let d = 3.0 * i as f64 / 999.0;
        let q = q_of_sq(d * d, fit.a, fit.b);
        assert!(q <= prev);
        prev = q;
    }
}

#[test]
fn cross_entropy_of_five_point_graph_matches_term_sum() {
    let entries = [(0, 1, 1.0), (0, 2, 0.4), (1, 2, 0.75), (2, 3, 0.2), (3, 4, 1.0), (1, 4, 0.05)];
    let graph = SparseGraph::from_upper(5, entries);
    let mut dense = Array2::zeros((5, 5));
    for (i, j, w) in entries {
        dense[[i, j]] = w;
        dense[[j, i]] = w;
    }
    let y = array![[0.0, 0.0], [0.5, 0.2], [1.0, -0.3], [2.5, 1.0], [2.0, 2.0]];
    let (a, b) = (1.577, 0.895);
    let ce = cross_entropy(&graph, y.view(), a, b);
    let oracle = fuzzy_cross_entropy(dense.view(), y.view(), a, b);
    assert!((ce - oracle).abs() <= 1e-10, "{ce} vs {oracle}");
    assert!(ce >= 0.0);
}

#[test]
fn sampled_edge_gradients_match_finite_differences() {
    let fit = fit_ab(0.1, 1.0).unwrap();
    let (a, b) = (fit.a, fit.b);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = |yi: &[f64], yj: [f64; 2]| {
        let d2 = (yi[0] - yj[0]).powi(2) + (yi[1] - yj[1]).powi(2);
        1.0 / (1.0 + a * d2.powf(b))
    };
    for _ in 0..20 {
        let yi = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let yj = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let diff = [yi[0] - yj[0], yi[1] - yj[1]];
        let d2 = diff[0] * diff[0] + diff[1] * diff[1];

        let g = attractive_coefficient(d2, a, b);
        let numeric = central_gradient(|y| -q(y, yj).ln(), &yi, 1e-6);
        let err = max_relative_error(&[g * diff[0], g * diff[1]], &numeric);
        assert!(err < 1e-5, "attractive {err}");

        let g = repulsive_coefficient(d2, a, b, 0.0);
        let numeric = central_gradient(|y| -(1.0 - q(y, yj)).ln(), &yi, 1e-6);
        let err = max_relative_error(&[g * diff[0], g * diff[1]], &numeric);
        assert!(err < 1e-5, "repulsive {err}");

        let p: f64 = rng.random_range(0.0..1.0);
        let analytic = pair_gradient(p, yi, yj, a, b);
        let numeric = central_gradient(|y| pair_cross_entropy(p, q(y, yj)), &yi, 1e-6);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "pair {err}");
    }
}

#[test]
fn full_gradient_matches_finite_differences() {
    let graph = SparseGraph::from_upper(4, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.9), (0, 3, 0.1)]);
    let y = array![[0.0, 0.1], [0.7, -0.4], [1.5, 0.9], [-0.8, 1.2]];
    let (a, b) = (1.577, 0.895);
    let analytic = xmap_core::umap::cross_entropy_gradient(&graph, y.view(), a, b);
    let f = |flat: &[f64]| {
        cross_entropy(&graph, Array2::from_shape_vec((4, 2), flat.to_vec()).unwrap().view(), a, b)
    };
    let numeric = central_gradient(f, y.as_slice().unwrap(), 1e-6);
    assert!(max_relative_error(analytic.as_slice().unwrap(), &numeric) < 1e-5);
}

#[test]
fn fit_is_seeded_and_transform_leaves_training_untouched() {
    let x = Arc::new(random_matrix(60, 4, 12));
    let cfg = UmapConfig { n_neighbors: 8, n_epochs: 60, ..Default::default() };
    let m1 = UmapModel::fit(x.clone(), &cfg).unwrap();
    let m2 = UmapModel::fit(x.clone(), &cfg).unwrap();
    assert_eq!(m1.coords, m2.coords);
    assert_eq!(m1.trace.losses, m2.trace.losses);
    assert_eq!(m1.graph, m2.graph);

    let before = m1.coords.clone();
    let y = m1.transform_new(x.row(3)).unwrap();
    assert!(y.iter().all(|v| v.is_finite()));
    assert_eq!(m1.coords, before);

    let other = UmapModel::fit(x, &UmapConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(other.coords, m1.coords);
}

#[test]
fn model_invariants() {
    let x = Arc::new(random_matrix(80, 5, 2));
    let m = UmapModel::fit(x, &UmapConfig { n_neighbors: 10, n_epochs: 30, ..Default::default() }).unwrap();
    for ((&i, &j), &w) in m.graph.heads().iter().zip(m.graph.tails()).zip(m.graph.weights()) {
        assert!(i != j && w > 0.0 && w <= 1.0);
        assert_eq!(m.graph.get(j, i), w);
    }
    assert_eq!(q_of_sq(0.0, m.curve_a, m.curve_b), 1.0);
    assert!(m.sigmas.iter().all(|&s| s > 0.0));
}

fn random_conditional(n: usize, k: usize, seed: u64) -> ConditionalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        let mut row: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        for s in 0..k {
            let t = rng.random_range(s..row.len());
            row.swap(s, t);
        }
        row.truncate(k);
        weights.push(row.iter().map(|_| rng.random_range(0.0..=1.0)).collect());
        indices.push(row);
    }
    ConditionalGraph { indices, weights, rhos: vec![0.0; n], sigmas: vec![1.0; n], degenerate_rows: vec![] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetrization_is_a_fuzzy_union(n in 3usize..30, k in 1usize..3, seed in any::<u64>()) {
        let c = random_conditional(n, k.min(n - 1), seed);
        let g = fuzzy_symmetrize(&c);
        let cond = |i: usize, j: usize| {
            c.indices[i].iter().position(|&t| t == j).map_or(0.0, |p| c.weights[i][p])
        };
        for i in 0..n {
            for j in 0..n {
                let w = g.get(i, j);
                prop_assert_eq!(w, g.get(j, i));
                prop_assert!((0.0..=1.0).contains(&w));
                if i != j {
                    let want = fuzzy_union(cond(i, j), cond(j, i));
                    prop_assert!((w - want).abs() < 1e-15);
                    prop_assert!((want - (cond(i, j) + cond(j, i) - cond(i, j) * cond(j, i))).abs() < 1e-15);
                } else {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(seed in any::<u64>(), n in 3usize..10) {
        let c = random_conditional(n, 2.min(n - 1), seed);
        let g = fuzzy_symmetrize(&c);
        let y = random_matrix(n, 2, seed.wrapping_add(1));
        prop_assert!(cross_entropy(&g, y.view(), 1.5, 0.9) >= 0.0);
    }

    #[test]
    fn curve_fits_are_anchored_and_decreasing(min_dist in 0.0f64..1.0, spread in 0.5f64..3.0) {
        let fit = fit_ab(min_dist, spread).unwrap();
        prop_assert!(fit.a > 0.0 && fit.b > 0.0);
        prop_assert_eq!(q_of_sq(0.0, fit.a, fit.b), 1.0);
        let mut prev = 1.0;
        for i in 1..1000 {
            let d = 3.0 * spread * i as f64 / 999.0;
            let q = q_of_sq(d * d, fit.a, fit.b);
            prop_assert!(q <= prev);
            prev = q;
        }
    }
}
