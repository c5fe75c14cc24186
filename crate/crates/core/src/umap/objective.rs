//! Fuzzy cross-entropy between the high-dimensional graph and the embedding,
//! and the per-pair gradients the optimizer samples from.

use ndarray::ArrayView2;

use super::affinity::SparseGraph;
use super::curve::q_of_sq;

pub const LOG_EPS: f64 = 1e-12;
/// Softening added to the squared distance in sampled repulsive steps.
pub const REPULSION_EPS: f64 = 1e-3;

/// Binary cross-entropy of one ordered pair. The `p·ln p` and
/// `(1−p)·ln(1−p)` parts vanish for `p ∈ {0, 1}`.
pub fn pair_cross_entropy(p: f64, q: f64) -> f64 {
    let mut ce = 0.0;
    if p > 0.0 {
        ce += p * (p.ln() - q.max(LOG_EPS).ln());
    }
    if p < 1.0 {
        ce += (1.0 - p) * ((1.0 - p).ln() - (1.0 - q).max(LOG_EPS).ln());
    }
    ce
}

pub fn sq_dist(y: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cross-entropy over every ordered pair `i ≠ j`.
pub fn cross_entropy(graph: &SparseGraph, y: ArrayView2<f64>, a: f64, b: f64) -> f64 {
    let n = y.nrows();
    let mut row = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        for (j, w) in graph.row(i) {
            row[j] = w;
        }
        for j in 0..n {
            if j != i {
                total += pair_cross_entropy(row[j], q_of_sq(sq_dist(y, i, j), a, b));
            }
        }
        for (j, _) in graph.row(i) {
            row[j] = 0.0;
        }
    }
    total
}

/// Scalar `g` with `∇_{y_i}(−ln q_ij) = g · (y_i − y_j)`.
pub fn attractive_coefficient(d2: f64, a: f64, b: f64) -> f64 {
    if d2 <= 0.0 {
        return 0.0;
    }
    2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b))
}

/// Scalar `g` with `∇_{y_i}(−ln(1 − q_ij)) = g · (y_i − y_j)`; `eps` softens
/// the singularity at zero distance.
pub fn repulsive_coefficient(d2: f64, a: f64, b: f64, eps: f64) -> f64 {
    -2.0 * b / ((eps + d2) * (1.0 + a * d2.powf(b)))
}

/// Gradient of one ordered pair's cross-entropy term with respect to `y_i`.
pub fn pair_gradient(p: f64, yi: [f64; 2], yj: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let diff = [yi[0] - yj[0], yi[1] - yj[1]];
    let d2 = diff[0] * diff[0] + diff[1] * diff[1];
    let mut g = 0.0;
    if p > 0.0 {
        g += p * attractive_coefficient(d2, a, b);
    }
    if p < 1.0 {
        g += (1.0 - p) * repulsive_coefficient(d2, a, b, 0.0);
    }
    [g * diff[0], g * diff[1]]
}
