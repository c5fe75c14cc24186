//! Synthetic benchmarks with known structure: Gaussian blobs and a
//! two-cluster dataset with one planted discriminating variable.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::Result;

/// Gaussian blobs with unit isotropic spread. Blob 0 sits at the origin and
/// blob `c ≥ 1` at `separation · e_{axes[c-1]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_per_blob: usize,
    pub n_variables: usize,
    pub separation: f64,
    pub axes: Vec<usize>,
    pub seed: u64,
}

impl Default for BlobSpec {
    /// 3 blobs of 100 points in 10 dimensions, blob 1 offset along `Y8`.
    fn default() -> Self {
        BlobSpec { n_per_blob: 100, n_variables: 10, separation: 10.0, axes: vec![7, 2], seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Labeled {
    pub dataset: Dataset,
    pub labels: Vec<usize>,
}

impl Labeled {
    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

pub fn variable_names(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("Y{k}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn blobs(spec: &BlobSpec) -> Result<Labeled> {
    let n_blobs = spec.axes.len() + 1;
    let n = n_blobs * spec.n_per_blob;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, spec.n_variables));
    for c in 0..n_blobs {
        for r in 0..spec.n_per_blob {
            let i = c * spec.n_per_blob + r;
            labels.push(c);
            for j in 0..spec.n_variables {
                x[[i, j]] = normal(&mut rng);
            }
            if c > 0 {
                x[[i, spec.axes[c - 1]]] += spec.separation;
            }
        }
    }
    let samples = (0..n).map(|i| format!("s{i}")).collect();
    let dataset = Dataset::new(samples, variable_names(spec.n_variables), x)?;
    Ok(Labeled { dataset, labels })
}

/// Two equal clusters over `n_variables` columns. `dominant` has a large
/// spread shared by both clusters; `planted` is shifted between clusters by
/// `shift_fraction` of the dominant spread and has its own within-cluster
/// spread; the rest is unit noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_per_cluster: usize,
    pub n_variables: usize,
    pub dominant: usize,
    pub dominant_sd: f64,
    pub planted: usize,
    pub planted_sd: f64,
    pub shift_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_per_cluster: 100,
            n_variables: 12,
            dominant: 0,
            dominant_sd: 10.0,
            planted: 7,
            planted_sd: 5.0,
            shift_fraction: 0.3,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn shift(&self) -> f64 {
        self.shift_fraction * self.dominant_sd
    }
}

pub fn planted(spec: &PlantedSpec) -> Result<Labeled> {
    let n = 2 * spec.n_per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, spec.n_variables));
    for i in 0..n {
        let c = i / spec.n_per_cluster;
        labels.push(c);
        for j in 0..spec.n_variables {
            let z = normal(&mut rng);
            x[[i, j]] = if j == spec.dominant {
                spec.dominant_sd * z
            } else if j == spec.planted {
                spec.planted_sd * z + c as f64 * spec.shift()
            } else {
                z
            };
        }
    }
    let samples = (0..n).map(|i| format!("s{i}")).collect();
    let dataset = Dataset::new(samples, variable_names(spec.n_variables), x)?;
    Ok(Labeled { dataset, labels })
}
