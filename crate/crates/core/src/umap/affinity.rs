//! Local-connectivity affinities `exp(−max(0, d − ρ)/σ)` and the fuzzy-union
//! graph built from them.

use std::collections::BTreeMap;

use crate::tsne::{SIGMA_MAX, SIGMA_MIN};

use super::knn::Neighbors;

const SEARCH_ITERATIONS: usize = 200;
const SUM_TOL: f64 = 1e-6;
/// Calibrated rows must hit `log₂ k` at least this closely.
pub const CALIBRATION_TOL: f64 = 1e-3;

/// Per-row membership strengths over each sample's neighbor list.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGraph {
    pub indices: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    pub rhos: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Rows whose bandwidth could not be calibrated.
    pub degenerate_rows: Vec<usize>,
}

pub fn membership(distance: f64, rho: f64, sigma: f64) -> f64 {
    (-(distance - rho).max(0.0) / sigma).exp()
}

pub fn row_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| membership(d, rho, sigma)).sum()
}

/// Solves `Σ_j exp(−max(0, d_j − ρ)/σ) = log₂ k` for σ by geometric
/// bisection. Returns `(rho, sigma, calibrated)`.
pub fn calibrate(distances: &[f64]) -> (f64, f64, bool) {
    let k = distances.len();
    let rho = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if distances.iter().all(|&d| d == 0.0) {
        return (rho, 1.0, false);
    }
    let target = (k as f64).log2();
    let mut sigma = 1.0_f64;
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut best = (f64::INFINITY, sigma);
    for _ in 0..SEARCH_ITERATIONS {
        let s = row_sum(distances, rho, sigma);
        let err = (s - target).abs();
        if err < best.0 {
            best = (err, sigma);
        }
        if err <= SUM_TOL {
            break;
        }
        if s > target {
            hi = Some(sigma);
            sigma = lo.map_or(sigma / 2.0, |l| (l * sigma).sqrt());
        } else {
            lo = Some(sigma);
            sigma = hi.map_or(sigma * 2.0, |h| (h * sigma).sqrt());
        }
        sigma = sigma.clamp(SIGMA_MIN, SIGMA_MAX);
        if lo == Some(SIGMA_MAX) || hi == Some(SIGMA_MIN) {
            break;
        }
    }
    if best.0 <= CALIBRATION_TOL {
        (rho, best.1, true)
    } else if lo.is_none() {
        (rho, SIGMA_MIN, false)
    } else if hi.is_none() {
        (rho, SIGMA_MAX, false)
    } else {
        (rho, best.1, false)
    }
}

pub fn umap_affinities(neighbors: &Neighbors) -> ConditionalGraph {
    let n = neighbors.indices.len();
    let mut weights = Vec::with_capacity(n);
    let mut rhos = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    let mut degenerate_rows = Vec::new();
    for (i, dists) in neighbors.distances.iter().enumerate() {
        let (rho, sigma, ok) = calibrate(dists);
        if !ok {
            degenerate_rows.push(i);
        }
        weights.push(dists.iter().map(|&d| membership(d, rho, sigma)).collect());
        rhos.push(rho);
        sigmas.push(sigma);
    }
    ConditionalGraph {
        indices: neighbors.indices.clone(),
        weights,
        rhos,
        sigmas,
        degenerate_rows,
    }
}

/// Symmetric sparse matrix in coordinate form, sorted by `(head, tail)`,
/// holding both orientations of every edge and no diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    heads: Vec<usize>,
    tails: Vec<usize>,
    weights: Vec<f64>,
    /// `row_start[i]..row_start[i + 1]` indexes row i's entries.
    row_start: Vec<usize>,
}

impl SparseGraph {
    /// Builds from unordered entries `(i, j, w)` with `i < j`; each is
    /// stored in both orientations.
    pub fn from_upper(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut all = Vec::new();
        for (i, j, w) in entries {
            if w > 0.0 && i != j {
                all.push((i, j, w));
                all.push((j, i, w));
            }
        }
        all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut heads = Vec::with_capacity(all.len());
        let mut tails = Vec::with_capacity(all.len());
        let mut weights = Vec::with_capacity(all.len());
        for (h, t, w) in all {
            heads.push(h);
            tails.push(t);
            weights.push(w);
        }
        let mut row_start = vec![0; n + 1];
        for &h in &heads {
            row_start[h + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        SparseGraph { n, heads, tails, weights, row_start }
    }

    /// Restores a graph from its coordinate arrays, checking structure.
    pub fn from_coo(n: usize, heads: Vec<usize>, tails: Vec<usize>, weights: Vec<f64>) -> Option<Self> {
        if heads.len() != tails.len() || heads.len() != weights.len() {
            return None;
        }
        let entries = heads
            .iter()
            .zip(&tails)
            .zip(&weights)
            .filter(|((h, t), _)| h < t)
            .map(|((&h, &t), &w)| (h, t, w));
        if heads.iter().chain(&tails).any(|&v| v >= n) {
            return None;
        }
        let g = SparseGraph::from_upper(n, entries.collect::<Vec<_>>());
        (g.heads == heads && g.tails == tails && g.weights == weights).then_some(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.heads.len()
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn tails(&self) -> &[usize] {
        &self.tails
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(tail, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.tails[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_start[i]..self.row_start[i + 1];
        match self.tails[r.clone()].binary_search(&j) {
            Ok(pos) => self.weights[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }
}

/// Probabilistic t-conorm `a + b − ab` of the two directed memberships.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

pub fn fuzzy_symmetrize(conditional: &ConditionalGraph) -> SparseGraph {
    let n = conditional.indices.len();
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, (idx, w)) in conditional.indices.iter().zip(&conditional.weights).enumerate() {
        for (&j, &v) in idx.iter().zip(w) {
            if i != j {
                directed.insert((i, j), v);
            }
        }
    }
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (&(i, j), &v) in &directed {
        let e = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
        if i < j {
            e.0 = v;
        } else {
            e.1 = v;
        }
    }
    SparseGraph::from_upper(n, pairs.into_iter().map(|((i, j), (a, b))| (i, j, fuzzy_union(a, b))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_has_full_membership() {
        let d = [0.5, 0.7, 1.2, 2.0];
        let (rho, sigma, ok) = calibrate(&d);
        assert!(ok);
        assert_eq!(rho, 0.5);
        assert_eq!(membership(d[0], rho, sigma), 1.0);
        assert!((row_sum(&d, rho, sigma) - 2.0).abs() < CALIBRATION_TOL);
    }

    #[test]
    fn equidistant_neighbors_saturate() {
        let d = [1.5; 6];
        let (_, sigma, ok) = calibrate(&d);
        assert!(!ok);
        assert_eq!(sigma, SIGMA_MIN);
        assert_eq!(row_sum(&d, 1.5, sigma), 6.0);
    }

    #[test]
    fn all_duplicate_row_gets_unit_sigma() {
        let (rho, sigma, ok) = calibrate(&[0.0, 0.0, 0.0]);
        assert_eq!((rho, sigma, ok), (0.0, 1.0, false));
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
    }

    #[test]
    fn symmetrized_graph_lookup() {
        let c = ConditionalGraph {
            indices: vec![vec![1, 2], vec![0, 2], vec![1, 0]],
            weights: vec![vec![1.0, 0.5], vec![1.0, 0.2], vec![1.0, 0.5]],
            rhos: vec![0.0; 3],
            sigmas: vec![1.0; 3],
            degenerate_rows: vec![],
        };
        let g = fuzzy_symmetrize(&c);
        assert_eq!(g.nnz(), 6);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(0, 2), 0.75);
        assert_eq!(g.get(2, 0), 0.75);
        assert_eq!(g.get(1, 2), fuzzy_union(0.2, 1.0));
        assert_eq!(g.get(1, 1), 0.0);
        let back = SparseGraph::from_coo(3, g.heads().to_vec(), g.tails().to_vec(), g.weights().to_vec());
        assert_eq!(back.as_ref(), Some(&g));
        assert!(SparseGraph::from_coo(3, vec![0], vec![1], vec![0.5]).is_none());
    }
}
