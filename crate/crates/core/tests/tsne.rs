use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use xmap_core::tsne::{
    conditional_affinities, kl_divergence, kl_gradient, low_dim_affinities, symmetrize, tsne_embed,
    TsneConfig,
};
use xmap_oracles::{central_gradient, kl_term_sum, max_relative_error, perplexity};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

#[test]
fn calibrated_rows_reproduce_the_target_perplexity() {
    let x = random_matrix(10, 3, 8);
    let c = conditional_affinities(x.view(), 5.0).unwrap();
    assert!(c.infeasible_rows.is_empty());
    for (i, row) in c.p.rows().into_iter().enumerate() {
        let row = row.to_vec();
        assert_eq!(row[i], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let perp = perplexity(&row);
        assert!((perp - 5.0).abs() <= 1e-3, "row {i}: {perp}");
    }
}

#[test]
fn symmetrized_affinities_sum_to_one() {
    let c = conditional_affinities(random_matrix(8, 4, 2).view(), 3.0).unwrap();
    let p = symmetrize(&c).p;
    let mut total = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(p[[i, j]], p[[j, i]]);
            total += p[[i, j]];
        }
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn kernel_normalization_and_values() {
    let y = array![[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [0.0, 3.0]];
    let (q, w) = low_dim_affinities(y.view());
    assert_eq!(w[[0, 1]], 0.5);
    assert_eq!(w[[0, 2]], 0.1);
    assert_eq!(w[[2, 3]], 1.0);
    assert!((q.sum() - 1.0).abs() < 1e-12);
    assert_eq!(q.diag().sum(), 0.0);
}

#[test]
fn kl_of_two_pair_toy_matches_term_sum() {
    // ordered pairs (0,1),(1,0) carry 0.35 each and (0,2),(2,0) 0.15 each
    let p = array![[0.0, 0.35, 0.15], [0.35, 0.0, 0.0], [0.15, 0.0, 0.0]];
    let q = array![[0.0, 0.25, 0.25], [0.25, 0.0, 0.0], [0.25, 0.0, 0.0]];
    let oracle = kl_term_sum(&[0.35, 0.15, 0.35, 0.15], &[0.25; 4]);
    let expected = 0.7 * (0.7_f64 / 0.5).ln() + 0.3 * (0.3_f64 / 0.5).ln();
    assert!((oracle - expected).abs() < 1e-15);
    assert!((kl_divergence(p.view(), q.view()) - oracle).abs() < 1e-15);
    assert_eq!(kl_divergence(p.view(), p.view()), 0.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let x = random_matrix(12, 4, 40);
    let p = symmetrize(&conditional_affinities(x.view(), 4.0).unwrap()).p;
    for state in 0..5 {
        let y = random_matrix(12, 2, 100 + state);
        let analytic = kl_gradient(p.view(), y.view());
        let kl = |flat: &[f64]| {
            let y = Array2::from_shape_vec((12, 2), flat.to_vec()).unwrap();
            kl_divergence(p.view(), low_dim_affinities(y.view()).0.view())
        };
        let numeric = central_gradient(kl, y.as_slice().unwrap(), 1e-5);
        let err = max_relative_error(analytic.as_slice().unwrap(), &numeric);
        assert!(err < 1e-5, "state {state}: relative error {err}");
    }
}

#[test]
fn separated_pairs_stay_apart() {
    let x = array![[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]];
    let cfg = TsneConfig { perplexity: 1.5, n_epochs: 300, ..Default::default() };
    assert_eq!(cfg.effective_learning_rate(4), 1.0);
    let e = tsne_embed(x.view(), &cfg).unwrap();
    let d = |i: usize, j: usize| {
        let a = e.coords.row(i);
        let b = e.coords.row(j);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    };
    assert!(d(0, 1) < d(0, 2) && d(2, 3) < d(1, 3));
}

#[test]
fn same_seed_same_embedding() {
    let x = random_matrix(30, 5, 9);
    let cfg = TsneConfig { perplexity: 5.0, n_epochs: 120, ..Default::default() };
    let a = tsne_embed(x.view(), &cfg).unwrap();
    let b = tsne_embed(x.view(), &cfg).unwrap();
    assert_eq!(a.coords, b.coords);
    assert_eq!(a.trace.losses, b.trace.losses);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_p(seed in any::<u64>(), n in 3usize..12) {
        let x = random_matrix(n, 3, seed);
        let p = symmetrize(&conditional_affinities(x.view(), 2.0).unwrap()).p;
        let y = random_matrix(n, 2, seed ^ 0xabcdef);
        let q = low_dim_affinities(y.view()).0;
        let kl = kl_divergence(p.view(), q.view());
        prop_assert!(kl >= 0.0);
        prop_assert!(kl > 0.0 || p == q);
        prop_assert_eq!(kl_divergence(p.view(), p.view()), 0.0);
    }

    #[test]
    fn affinity_invariants(seed in any::<u64>(), n in 5usize..25, perp in 1.5f64..4.0) {
        let c = conditional_affinities(random_matrix(n, 3, seed).view(), perp).unwrap();
        for (i, row) in c.p.rows().into_iter().enumerate() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
            if !c.infeasible_rows.contains(&i) {
                prop_assert!((perplexity(&row.to_vec()) - perp).abs() <= 1e-3);
            }
        }
        let p = symmetrize(&c).p;
        prop_assert!((p.sum() - 1.0).abs() < 1e-8);
        prop_assert_eq!(&p, &p.t());
    }
}
