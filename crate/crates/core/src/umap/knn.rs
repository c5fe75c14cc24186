//! Exact k-nearest-neighbor search by full pairwise scan.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}

impl Metric {
    pub fn distance(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Metric::Euclidean => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Cosine => {
                let na = a.dot(&a).sqrt();
                let nb = b.dot(&b).sqrt();
                match (na > 0.0, nb > 0.0) {
                    (false, false) => 0.0,
                    (true, true) => (1.0 - a.dot(&b) / (na * nb)).max(0.0),
                    _ => 1.0,
                }
            }
        }
    }
}

/// Neighbor lists sorted by increasing distance, ties by lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl Neighbors {
    pub fn k(&self) -> usize {
        self.indices.first().map_or(0, Vec::len)
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest rows of `data` to `query`, excluding row `skip`.
pub fn nearest_to(
    data: ArrayView2<f64>,
    query: ArrayView1<f64>,
    k: usize,
    metric: Metric,
    skip: Option<usize>,
) -> (Vec<usize>, Vec<f64>) {
    let mut cand: Vec<(f64, usize)> = data
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(j, row)| (metric.distance(query, row), j))
        .collect();
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    cand.into_iter().map(|(d, j)| (j, d)).unzip()
}

pub fn knn_graph(x: ArrayView2<f64>, k: usize, metric: Metric) -> Result<Neighbors> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidConfig(format!("n_neighbors {k} must lie in 1..{n}")));
    }
    let (indices, distances) =
        (0..n).map(|i| nearest_to(x, x.row(i), k, metric, Some(i))).unzip();
    Ok(Neighbors { indices, distances })
}
