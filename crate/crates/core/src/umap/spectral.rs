//! Spectral layout from the normalized graph Laplacian.
//!
//! The two eigenvectors of `L = I − D^(−1/2) W D^(−1/2)` following the
//! trivial one are found by subspace iteration on `(I + D^(−1/2) W D^(−1/2)) / 2`
//! (same eigenvectors, spectrum mapped into `[0, 1]` in reverse order) with
//! the trivial vector `D^(1/2)·1` projected out, plus Rayleigh–Ritz.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;

use super::affinity::SparseGraph;

const BLOCK: usize = 6;
const MAX_ITERATIONS: usize = 3000;
const CHECK_EVERY: usize = 10;
const RESIDUAL_TOL: f64 = 1e-6;

/// Returns an `n×2` layout, or `None` when the iteration fails to converge.
pub fn spectral_layout<R: Rng>(graph: &SparseGraph, rng: &mut R) -> Option<Array2<f64>> {
    let n = graph.n();
    if n < 4 {
        return None;
    }
    let block = BLOCK.min(n - 1);
    let deg = graph.degrees();
    if deg.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    normalize(&mut trivial);

    let apply = |v: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = graph.row(i).map(|(j, w)| w * inv_sqrt[j] * v[j]).sum();
            *o = 0.5 * (v[i] + inv_sqrt[i] * s);
        }
    };

    let mut basis: Vec<Vec<f64>> =
        (0..block).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    orthonormalize(&mut basis, &trivial)?;
    let mut scratch = vec![0.0; n];

    for it in 1..=MAX_ITERATIONS {
        for v in basis.iter_mut() {
            apply(v, &mut scratch);
            v.copy_from_slice(&scratch);
        }
        orthonormalize(&mut basis, &trivial)?;
        if it % CHECK_EVERY != 0 && it != MAX_ITERATIONS {
            continue;
        }
        let (ritz, values) = rayleigh_ritz(&basis, &apply, n);
        let mut converged = true;
        for (vec, &theta) in ritz.iter().take(2).zip(&values) {
            apply(vec, &mut scratch);
            let r: f64 = scratch.iter().zip(vec).map(|(a, b)| (a - theta * b).powi(2)).sum();
            if r.sqrt() > RESIDUAL_TOL {
                converged = false;
            }
        }
        if converged {
            let mut out = Array2::zeros((n, 2));
            for (c, v) in ritz.iter().take(2).enumerate() {
                for i in 0..n {
                    out[[i, c]] = v[i];
                }
            }
            return out.iter().all(|v| v.is_finite()).then_some(out);
        }
        basis = ritz;
    }
    None
}

/// Ritz vectors sorted by decreasing Ritz value.
fn rayleigh_ritz(
    basis: &[Vec<f64>],
    apply: &impl Fn(&[f64], &mut [f64]),
    n: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = basis.len();
    let mut images = vec![vec![0.0; n]; m];
    for (v, img) in basis.iter().zip(images.iter_mut()) {
        apply(v, img);
    }
    let h = DMatrix::from_fn(m, m, |r, c| dot(&basis[r], &images[c]));
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let vectors = order
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; n];
            for (r, b) in basis.iter().enumerate() {
                let coef = eig.eigenvectors[(r, c)];
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += coef * bi;
                }
            }
            v
        })
        .collect();
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    (vectors, values)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = dot(v, v).sqrt();
    if !(norm > 1e-300) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// Modified Gram–Schmidt against `fixed` and each other (two passes).
fn orthonormalize(basis: &mut [Vec<f64>], fixed: &[f64]) -> Option<()> {
    for _ in 0..2 {
        for k in 0..basis.len() {
            let (done, rest) = basis.split_at_mut(k);
            let v = &mut rest[0];
            let c = dot(v, fixed);
            v.iter_mut().zip(fixed).for_each(|(x, f)| *x -= c * f);
            for u in done.iter() {
                let c = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, f)| *x -= c * f);
            }
            normalize(v)?;
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring_layout_matches_dense_eigenvectors() {
        // 12-cycle: the second/third Laplacian eigenvectors are cos/sin waves
        let n = 12;
        let g = SparseGraph::from_upper(n, (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n), 1.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = spectral_layout(&g, &mut rng).expect("converges");
        // every point should sit at the same radius in the plane
        let r: Vec<f64> = y.rows().into_iter().map(|p| p.dot(&p).sqrt()).collect();
        for v in &r {
            assert!((v - r[0]).abs() < 1e-5, "{r:?}");
        }
        // orthogonal to the trivial vector (constant degrees here)
        for c in 0..2 {
            assert!(y.column(c).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn disconnected_components_are_separated() {
        // two triangles and a square
        let mut edges = vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)];
        edges.extend([(6, 7, 1.0), (7, 8, 1.0), (8, 9, 1.0), (6, 9, 1.0)]);
        let g = SparseGraph::from_upper(10, edges);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = spectral_layout(&g, &mut rng).expect("converges");
        let dist = |a: usize, b: usize| ((y[[a, 0]] - y[[b, 0]]).powi(2) + (y[[a, 1]] - y[[b, 1]]).powi(2)).sqrt();
        assert!(dist(0, 1) < 1e-4 && dist(6, 8) < 1e-4);
        assert!(dist(0, 3) > 0.1 && dist(0, 6) > 0.1 && dist(3, 6) > 0.1);
    }
}
