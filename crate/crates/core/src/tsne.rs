//! Exact t-SNE: Gaussian conditional affinities calibrated to a target
//! perplexity, Student-t similarities in the plane, and KL minimization by
//! momentum gradient descent with early exaggeration.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{LossTrace, Progress};

pub const SIGMA_MIN: f64 = 1e-20;
/// Coordinates beyond this magnitude make squared distances overflow.
const DIVERGENCE_BOUND: f64 = 1e100;
pub const SIGMA_MAX: f64 = 1e20;
const SEARCH_ITERATIONS: usize = 200;
const PERPLEXITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_epochs: usize,
    /// `None` picks `I / early_exaggeration_factor`, at least 1, which keeps
    /// the exaggerated phase stable from toy sizes up.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_epochs: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_epochs: 1000,
            learning_rate: None,
            momentum: 0.8,
            early_exaggeration_factor: 12.0,
            early_exaggeration_epochs: 100,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn effective_learning_rate(&self, n_samples: usize) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| (n_samples as f64 / self.early_exaggeration_factor).max(1.0))
    }

    fn validate(&self, n_samples: usize) -> Result<()> {
        if !(self.perplexity > 1.0 && self.perplexity < n_samples as f64) {
            return Err(Error::PerplexityInfeasible { perplexity: self.perplexity, n_samples });
        }
        if self.n_epochs == 0 {
            return Err(Error::InvalidConfig("n_epochs must be at least 1".into()));
        }
        if self.learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if !(self.early_exaggeration_factor > 0.0) {
            return Err(Error::InvalidConfig("early_exaggeration_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Row-stochastic conditional affinities `p_{j|i}` and their bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinities {
    pub p: Array2<f64>,
    pub sigmas: Array1<f64>,
    /// Rows whose target perplexity could not be reached.
    pub infeasible_rows: Vec<usize>,
}

/// Symmetric joint affinities `p_ij` summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub p: Array2<f64>,
    pub sigmas: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneEmbedding {
    pub coords: Array2<f64>,
    pub affinities: AffinityMatrix,
    /// KL divergence (true, unexaggerated P) at the start of every epoch,
    /// plus one final record after the last update.
    pub trace: LossTrace,
    pub infeasible_rows: Vec<usize>,
}

pub fn squared_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// `2^H` with `H = −Σ p log₂ p`; zero entries contribute nothing.
pub fn perplexity(p: ArrayView1<f64>) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    h.exp2()
}

fn gaussian_row(sq: ArrayView1<f64>, skip: usize, sigma: f64, out: &mut [f64]) {
    let min = sq
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let denom = 2.0 * sigma * sigma;
    let mut sum = 0.0;
    for (j, (&d, o)) in sq.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == skip { 0.0 } else { (-(d - min) / denom).exp() };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Binary search of one bandwidth. `sq` holds squared distances from sample
/// `skip` to every sample (its own entry is ignored; `+∞` is allowed).
/// Returns `(row, sigma, reached_target)`.
pub fn calibrate_row(sq: ArrayView1<f64>, skip: usize, target: f64) -> (Array1<f64>, f64, bool) {
    let mut row = vec![0.0; sq.len()];
    let mut sigma = 1.0_f64;
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut best = (f64::INFINITY, sigma);
    for _ in 0..SEARCH_ITERATIONS {
        gaussian_row(sq, skip, sigma, &mut row);
        let perp = perplexity(ArrayView1::from(&row[..]));
        let err = (perp - target).abs();
        if err < best.0 {
            best = (err, sigma);
        }
        if err <= PERPLEXITY_TOL {
            break;
        }
        if perp > target {
            hi = Some(sigma);
            sigma = match lo {
                Some(l) => (l * sigma).sqrt(),
                None => sigma / 2.0,
            };
        } else {
            lo = Some(sigma);
            sigma = match hi {
                Some(h) => (h * sigma).sqrt(),
                None => sigma * 2.0,
            };
        }
        sigma = sigma.clamp(SIGMA_MIN, SIGMA_MAX);
        if lo == Some(SIGMA_MAX) || hi == Some(SIGMA_MIN) {
            break;
        }
    }
    let reached = best.0 <= 1e-3;
    let sigma = if reached {
        best.1
    } else if hi.is_some() && lo.is_none() {
        SIGMA_MIN
    } else if lo.is_some() && hi.is_none() {
        SIGMA_MAX
    } else {
        best.1
    };
    gaussian_row(sq, skip, sigma, &mut row);
    (Array1::from(row), sigma, reached)
}

pub fn conditional_affinities(x: ArrayView2<f64>, target: f64) -> Result<ConditionalAffinities> {
    let n = x.nrows();
    if !(target > 1.0 && target < n as f64) {
        return Err(Error::PerplexityInfeasible { perplexity: target, n_samples: n });
    }
    Ok(conditional_from_distances(squared_distances(x).view(), target))
}

/// Calibrates every row of a precomputed squared-distance matrix.
pub fn conditional_from_distances(sq: ArrayView2<f64>, target: f64) -> ConditionalAffinities {
    let n = sq.nrows();
    let mut p = Array2::zeros((n, n));
    let mut sigmas = Array1::zeros(n);
    let mut infeasible_rows = Vec::new();
    for i in 0..n {
        let (row, sigma, ok) = calibrate_row(sq.row(i), i, target);
        p.row_mut(i).assign(&row);
        sigmas[i] = sigma;
        if !ok {
            infeasible_rows.push(i);
        }
    }
    ConditionalAffinities { p, sigmas, infeasible_rows }
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2N`.
pub fn symmetrize(conditional: &ConditionalAffinities) -> AffinityMatrix {
    let c = &conditional.p;
    let n = c.nrows();
    let mut p = Array2::zeros((n, n));
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (c[[i, j]] + c[[j, i]]) / denom;
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    AffinityMatrix { p, sigmas: conditional.sigmas.clone() }
}

/// Student-t kernel `w_ij = 1/(1 + ‖y_i − y_j‖²)` and its normalization `q`.
pub fn low_dim_affinities(y: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = y.nrows();
    let mut w = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d2);
            w[[i, j]] = v;
            w[[j, i]] = v;
            total += 2.0 * v;
        }
    }
    let q = if total > 0.0 { &w / total } else { w.clone() };
    (q, w)
}

/// `Σ_{i≠j} p_ij ln(p_ij / q_ij)`, skipping zero `p_ij`.
pub fn kl_divergence(p: ArrayView2<f64>, q: ArrayView2<f64>) -> f64 {
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            kl += pij * (pij / q[[i, j]]).ln();
        }
    }
    kl.max(0.0)
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij) w_ij (y_i − y_j)`.
pub fn kl_gradient(p: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let (q, w) = low_dim_affinities(y);
    gradient_from(p, q.view(), w.view(), y)
}

fn gradient_from(
    p: ArrayView2<f64>,
    q: ArrayView2<f64>,
    w: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Array2<f64> {
    let (n, dim) = y.dim();
    let mut grad = Array2::zeros((n, dim));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let f = 4.0 * (p[[i, j]] - q[[i, j]]) * w[[i, j]];
            for k in 0..dim {
                grad[[i, k]] += f * (y[[i, k]] - y[[j, k]]);
            }
        }
    }
    grad
}

pub fn tsne_embed(x: ArrayView2<f64>, cfg: &TsneConfig) -> Result<TsneEmbedding> {
    tsne_embed_with_progress(x, cfg, None)
}

pub fn tsne_embed_with_progress(
    x: ArrayView2<f64>,
    cfg: &TsneConfig,
    progress: Option<&Progress>,
) -> Result<TsneEmbedding> {
    let n = x.nrows();
    if n < 4 {
        return Err(Error::TooFewRows(n));
    }
    cfg.validate(n)?;
    let conditional = conditional_affinities(x, cfg.perplexity)?;
    let affinities = symmetrize(&conditional);
    let p = &affinities.p;
    let p_exaggerated = p * cfg.early_exaggeration_factor;
    let learning_rate = cfg.effective_learning_rate(n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut rng));
    let mut velocity = Array2::<f64>::zeros((n, 2));
    let mut trace = LossTrace::default();
    if let Some(pr) = progress {
        pr.start(cfg.n_epochs);
    }

    for epoch in 0..cfg.n_epochs {
        let (q, w) = low_dim_affinities(y.view());
        let loss = kl_divergence(p.view(), q.view());
        trace.push(epoch, loss);
        let target = if epoch < cfg.early_exaggeration_epochs { &p_exaggerated } else { p };
        if epoch == cfg.early_exaggeration_epochs {
            // momentum built under the exaggerated attraction would keep contracting
            velocity.fill(0.0);
        }
        let grad = gradient_from(target.view(), q.view(), w.view(), y.view());
        velocity = &velocity * cfg.momentum - &grad * learning_rate;
        y += &velocity;
        let mean = y.mean_axis(Axis(0)).expect("nonempty");
        y -= &mean;
        if !loss.is_finite() || y.iter().any(|v| !(v.abs() <= DIVERGENCE_BOUND)) {
            return Err(Error::NumericalDivergence { epoch });
        }
        if let Some(pr) = progress {
            pr.update(epoch + 1, Some(loss));
        }
    }
    let (q, _) = low_dim_affinities(y.view());
    trace.push(cfg.n_epochs, kl_divergence(p.view(), q.view()));

    Ok(TsneEmbedding { coords: y, affinities, trace, infeasible_rows: conditional.infeasible_rows })
}
