//! Acceptance criteria for the workspace. Each function builds its inputs
//! from fixed seeds, runs the code under test and measures the result
//! against an independent oracle at the stated tolerance.

pub mod embedding;
pub mod math;
pub mod report;
pub mod system;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use report::{Clause, Criterion};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

pub(crate) fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Largest rise between consecutive values; zero or less means nonincreasing.
pub(crate) fn largest_rise(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Every criterion in reporting order.
pub fn all_criteria() -> Vec<Criterion> {
    vec![
        math::pca_correctness(),
        math::diagnostics_identities(),
        math::tsne_calibration_and_gradient(),
        math::umap_calibration_and_objective(),
        embedding::embedding_quality(),
        embedding::planted_feature(),
        math::voronoi(),
        system::determinism(),
        system::end_to_end_api(),
        embedding::self_projection(),
    ]
}
