//! UMAP: fuzzy neighbor graph, fitted similarity curve, cross-entropy
//! minimized by edge-sampling SGD with negative sampling, and projection of
//! new samples against a frozen embedding.

pub mod affinity;
pub mod curve;
pub mod knn;
pub mod objective;
pub mod spectral;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::trace::{LossTrace, Progress};

pub use affinity::{fuzzy_symmetrize, umap_affinities, ConditionalGraph, SparseGraph};
pub use curve::{fit_ab, CurveFit};
pub use knn::{knn_graph, Metric, Neighbors};
pub use objective::cross_entropy;

use objective::{attractive_coefficient, repulsive_coefficient, sq_dist, REPULSION_EPS};

const GRADIENT_CLIP: f64 = 4.0;
/// Number of full cross-entropy evaluations recorded per fit (plus the initial one).
const TRACE_POINTS: usize = 50;
const TRANSFORM_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub metric: Metric,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        UmapConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            metric: Metric::Euclidean,
            n_epochs: 200,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            seed: 42,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_neighbors < 2 || self.n_neighbors >= n_samples {
            return bad(format!("n_neighbors must lie in 2..{n_samples}, got {}", self.n_neighbors));
        }
        if !(self.spread > 0.0) {
            return bad("spread must be positive".into());
        }
        if !(self.min_dist >= 0.0) || self.min_dist >= 3.0 * self.spread {
            return bad("min_dist must satisfy 0 <= min_dist < 3*spread".into());
        }
        if self.n_epochs == 0 {
            return bad("n_epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    Spectral,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmapModel {
    pub graph: SparseGraph,
    pub rhos: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub curve_a: f64,
    pub curve_b: f64,
    pub coords: Array2<f64>,
    pub config: UmapConfig,
    pub initialization: Initialization,
    /// Full cross-entropy at evenly spaced epochs.
    pub trace: LossTrace,
    /// Rows whose bandwidth calibration saturated.
    pub degenerate_rows: Vec<usize>,
    training: Arc<Array2<f64>>,
    /// Distance from each training sample to its k-th neighbor.
    knn_radius: Vec<f64>,
}

impl UmapModel {
    pub fn fit(x: Arc<Array2<f64>>, cfg: &UmapConfig) -> Result<UmapModel> {
        Self::fit_with_progress(x, cfg, None)
    }

    pub fn fit_with_progress(
        x: Arc<Array2<f64>>,
        cfg: &UmapConfig,
        progress: Option<&Progress>,
    ) -> Result<UmapModel> {
        let n = x.nrows();
        if n < 4 {
            return Err(Error::TooFewRows(n));
        }
        cfg.validate(n)?;
        let CurveFit { a, b, .. } = fit_ab(cfg.min_dist, cfg.spread)?;
        let neighbors = knn_graph(x.view(), cfg.n_neighbors, cfg.metric)?;
        let conditional = umap_affinities(&neighbors);
        let knn_radius = neighbors.distances.iter().map(|d| d[d.len() - 1]).collect();
        let graph = fuzzy_symmetrize(&conditional);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (mut coords, initialization) = match spectral::spectral_layout(&graph, &mut rng) {
            Some(layout) => (layout, Initialization::Spectral),
            None => (
                Array2::from_shape_simple_fn((n, 2), || rng.random_range(-10.0..10.0)),
                Initialization::Random,
            ),
        };
        if initialization == Initialization::Spectral {
            let max = coords.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            coords.mapv_inplace(|v| 10.0 * v / max + 1e-4 * (rng.random::<f64>() - 0.5));
        }
        rescale_columns(&mut coords, 10.0);

        let trace = optimize_layout(&graph, &mut coords, a, b, cfg, &mut rng, progress)?;

        Ok(UmapModel {
            graph,
            rhos: conditional.rhos,
            sigmas: conditional.sigmas,
            curve_a: a,
            curve_b: b,
            coords,
            config: cfg.clone(),
            initialization,
            trace,
            degenerate_rows: conditional.degenerate_rows,
            training: x,
            knn_radius,
        })
    }

    /// Reassembles a fitted model without re-running the optimizer.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        graph: SparseGraph,
        rhos: Vec<f64>,
        sigmas: Vec<f64>,
        curve_a: f64,
        curve_b: f64,
        coords: Array2<f64>,
        config: UmapConfig,
        initialization: Initialization,
        trace: LossTrace,
        degenerate_rows: Vec<usize>,
        training: Arc<Array2<f64>>,
    ) -> Result<UmapModel> {
        let n = training.nrows();
        if graph.n() != n || coords.dim() != (n, 2) || rhos.len() != n || sigmas.len() != n {
            return Err(Error::CorruptSession("embedding shape mismatch".into()));
        }
        let neighbors = knn_graph(training.view(), config.n_neighbors, config.metric)
            .map_err(|e| Error::CorruptSession(e.to_string()))?;
        let knn_radius = neighbors.distances.iter().map(|d| d[d.len() - 1]).collect();
        Ok(UmapModel {
            graph,
            rhos,
            sigmas,
            curve_a,
            curve_b,
            coords,
            config,
            initialization,
            trace,
            degenerate_rows,
            training,
            knn_radius,
        })
    }

    pub fn training_data(&self) -> &Arc<Array2<f64>> {
        &self.training
    }

    pub fn cross_entropy(&self) -> f64 {
        cross_entropy(&self.graph, self.coords.view(), self.curve_a, self.curve_b)
    }

    /// Memberships of a new preprocessed row to its nearest training samples.
    pub fn new_point_affinities(&self, x_new: ArrayView1<f64>) -> Result<(Vec<usize>, Vec<f64>)> {
        check_len(self.training.ncols(), x_new.len())?;
        let (idx, dist) = knn::nearest_to(
            self.training.view(),
            x_new,
            self.config.n_neighbors,
            self.config.metric,
            None,
        );
        let (rho, sigma, _) = affinity::calibrate(&dist);
        let w = dist.iter().map(|&d| affinity::membership(d, rho, sigma)).collect();
        Ok((idx, w))
    }

    /// Fuzzy-union memberships between a new preprocessed row and every
    /// training sample: the new row's own calibrated memberships over its k
    /// nearest neighbors, joined with its membership in the neighborhood of
    /// each training sample it would enter (within that sample's k-th
    /// neighbor distance, under the stored ρ and σ).
    pub fn new_point_memberships(&self, x_new: ArrayView1<f64>) -> Result<Vec<f64>> {
        let (idx, w) = self.new_point_affinities(x_new)?;
        let mut own = vec![0.0; self.training.nrows()];
        for (&j, &v) in idx.iter().zip(&w) {
            own[j] = v;
        }
        let metric = self.config.metric;
        Ok(self
            .training
            .rows()
            .into_iter()
            .enumerate()
            .map(|(j, row)| {
                let d = metric.distance(x_new, row);
                let theirs = if d <= self.knn_radius[j] {
                    affinity::membership(d, self.rhos[j], self.sigmas[j])
                } else {
                    0.0
                };
                affinity::fuzzy_union(own[j], theirs)
            })
            .collect())
    }

    /// Places a preprocessed row in the embedding by minimizing the
    /// cross-entropy terms it adds to the graph over its own position,
    /// starting from the membership-weighted mean of its neighbors.
    pub fn transform_new(&self, x_new: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (idx, p) = self.new_point_affinities(x_new)?;
        let row = self.new_point_memberships(x_new)?;
        let n = self.coords.nrows();
        let total: f64 = p.iter().sum();
        let mut y = [0.0; 2];
        for (&j, &v) in idx.iter().zip(&p) {
            y[0] += v * self.coords[[j, 0]] / total;
            y[1] += v * self.coords[[j, 1]] / total;
        }
        let (a, b) = (self.curve_a, self.curve_b);
        let coords = self.coords.view();
        let d2 = |y: [f64; 2], j: usize| (y[0] - coords[[j, 0]]).powi(2) + (y[1] - coords[[j, 1]]).powi(2);
        let objective = |y: [f64; 2]| -> f64 {
            (0..n).map(|j| objective::pair_cross_entropy(row[j], curve::q_of_sq(d2(y, j), a, b))).sum()
        };
        let gradient = |y: [f64; 2]| -> [f64; 2] {
            let mut g = [0.0; 2];
            for j in 0..n {
                let pg = objective::pair_gradient(row[j], y, [coords[[j, 0]], coords[[j, 1]]], a, b);
                if pg[0].is_finite() && pg[1].is_finite() {
                    g[0] += pg[0];
                    g[1] += pg[1];
                }
            }
            g
        };

        let mut f = objective(y);
        let mut step = 1.0_f64;
        for _ in 0..TRANSFORM_ITERATIONS {
            let g = gradient(y);
            let gn2 = g[0] * g[0] + g[1] * g[1];
            if !(gn2 > 1e-24) {
                break;
            }
            // backtracking line search with the Armijo condition
            let mut accepted = false;
            step = (step * 2.0).min(1e3);
            while step > 1e-14 {
                let cand = [y[0] - step * g[0], y[1] - step * g[1]];
                let fc = objective(cand);
                if fc.is_finite() && fc <= f - 1e-4 * step * gn2 {
                    y = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::NumericalDivergence { epoch: 0 });
        }
        Ok(Array1::from(y.to_vec()))
    }
}

fn rescale_columns(coords: &mut Array2<f64>, extent: f64) {
    for mut col in coords.columns_mut() {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if hi > lo {
            col.mapv_inplace(|v| extent * (v - lo) / (hi - lo));
        }
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Edge-sampling SGD. Edge `e` is sampled every `max_w / w_e` epochs and
/// moves both endpoints together; each visit is followed by
/// `negative_sample_rate` uniform negative samples that push the head away.
/// A negative sample `k` of head `i` is weighted by
/// `2I (1 − p_ik) / (negative_sample_rate · deg_i)`, so the expected update
/// follows the gradient of the full cross-entropy. The learning rate decays
/// linearly to zero.
fn optimize_layout(
    graph: &SparseGraph,
    y: &mut Array2<f64>,
    a: f64,
    b: f64,
    cfg: &UmapConfig,
    rng: &mut ChaCha8Rng,
    progress: Option<&Progress>,
) -> Result<LossTrace> {
    let n = y.nrows();
    let n_epochs = cfg.n_epochs;
    let max_w = graph.weights().iter().copied().fold(0.0, f64::max);
    let epochs_per_sample: Vec<f64> = graph
        .weights()
        .iter()
        .map(|&w| if w >= max_w / n_epochs as f64 { max_w / w } else { -1.0 })
        .collect();
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> =
        epochs_per_sample.iter().map(|&e| if neg_rate > 0.0 { e / neg_rate } else { -1.0 }).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    // importance weight making a negative sample's expected push equal the
    // repulsive part of the full cross-entropy gradient
    let deg = graph.degrees();
    let negative_weight: Vec<f64> =
        deg.iter().map(|&d| if d > 0.0 { 2.0 * n as f64 / (neg_rate * d) } else { 0.0 }).collect();

    let eval_every = (n_epochs / TRACE_POINTS).max(1);
    let mut trace = LossTrace::default();
    let initial = cross_entropy(graph, y.view(), a, b);
    trace.push(0, initial);
    if let Some(p) = progress {
        p.start(n_epochs);
        p.update(0, Some(initial));
    }

    for epoch in 0..n_epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / n_epochs as f64);
        let clock = (epoch + 1) as f64;
        for e in 0..graph.nnz() {
            if epochs_per_sample[e] <= 0.0 || next_sample[e] > clock {
                continue;
            }
            let i = graph.heads()[e];
            let j = graph.tails()[e];

            let d2 = sq_dist(y.view(), i, j);
            let g = attractive_coefficient(d2, a, b);
            for k in 0..2 {
                let step = clip(g * (y[[i, k]] - y[[j, k]])) * alpha;
                y[[i, k]] -= step;
                y[[j, k]] += step;
            }
            next_sample[e] += epochs_per_sample[e];

            if epochs_per_negative[e] > 0.0 {
                let n_neg = ((clock - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.random_range(0..n);
                    if k == i {
                        continue;
                    }
                    let d2 = sq_dist(y.view(), i, k);
                    let omega = negative_weight[i] * (1.0 - graph.get(i, k));
                    for c in 0..2 {
                        let step = if d2 > 0.0 {
                            clip(omega * repulsive_coefficient(d2, a, b, REPULSION_EPS) * (y[[i, c]] - y[[k, c]]))
                        } else {
                            -GRADIENT_CLIP
                        };
                        y[[i, c]] -= step * alpha;
                    }
                }
                next_negative[e] += n_neg as f64 * epochs_per_negative[e];
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDivergence { epoch });
        }
        let done = epoch + 1;
        let loss = if done % eval_every == 0 || done == n_epochs {
            let ce = cross_entropy(graph, y.view(), a, b);
            trace.push(done, ce);
            Some(ce)
        } else {
            None
        };
        if let Some(p) = progress {
            p.update(done, loss);
        }
    }
    Ok(trace)
}

/// Exact gradient of the full cross-entropy with respect to every
/// coordinate (each unordered pair counted in both orientations).
pub fn cross_entropy_gradient(graph: &SparseGraph, y: ArrayView2<f64>, a: f64, b: f64) -> Array2<f64> {
    let n = y.nrows();
    let mut grad = Array2::zeros((n, 2));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = graph.get(i, j);
            let g = objective::pair_gradient(p, [y[[i, 0]], y[[i, 1]]], [y[[j, 0]], y[[j, 1]]], a, b);
            // pair (i, j) and its mirror (j, i) both depend on y_i
            grad[[i, 0]] += 2.0 * g[0];
            grad[[i, 1]] += 2.0 * g[1];
        }
    }
    grad
}
