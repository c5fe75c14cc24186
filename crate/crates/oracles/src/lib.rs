//! Slow, direct reference computations. Nothing here shares code with
//! `xmap-core`; every routine is the textbook definition evaluated the
//! obvious way so it can serve as an independent check.

use ndarray::{Array2, ArrayView1, ArrayView2};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// nonincreasing.
pub fn jacobi_eigenvalues(a: ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    let mut m = a.to_owned();
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `XᵀX` by explicit triple loop.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let mut g = Array2::zeros((cols, cols));
    for a in 0..cols {
        for b in 0..cols {
            g[[a, b]] = (0..rows).map(|i| x[[i, a]] * x[[i, b]]).sum();
        }
    }
    g
}

/// `‖x − (xP)Pᵀ‖²` for loadings `P` (J×A).
pub fn residual_sq(x: ArrayView1<f64>, p: ArrayView2<f64>) -> f64 {
    let (j, a) = p.dim();
    let mut fitted = vec![0.0; j];
    for k in 0..a {
        let t: f64 = (0..j).map(|r| x[r] * p[[r, k]]).sum();
        for r in 0..j {
            fitted[r] += t * p[[r, k]];
        }
    }
    (0..j).map(|r| (x[r] - fitted[r]).powi(2)).sum()
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_k |a_k − b_k| / max_k |b_k|`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Perplexity as `exp` of the natural-log Shannon entropy.
pub fn perplexity(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.exp()
}

pub fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// k nearest neighbors of every row (self excluded) by sorting the full
/// distance list on `(distance, index)`.
pub fn knn_full_sort(
    x: ArrayView2<f64>,
    k: usize,
    dist: impl Fn(ArrayView1<f64>, ArrayView1<f64>) -> f64,
) -> Vec<Vec<(usize, f64)>> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut all: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, dist(x.row(i), x.row(j)))).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

/// Index of the site nearest to `q`, lowest index on ties.
pub fn nearest_site(sites: &[[f64; 2]], q: [f64; 2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in sites.iter().enumerate() {
        let d = (s[0] - q[0]).powi(2) + (s[1] - q[1]).powi(2);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn curve_sse(a: f64, b: f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let q = 1.0 / (1.0 + a * x.powf(2.0 * b));
            (q - y).powi(2)
        })
        .sum()
}

/// Least-squares `(a, b)` for `1/(1 + a x^{2b})` against the piecewise
/// target on 300 equispaced points of `[0, 3·spread]`, found by a log-spaced
/// grid followed by repeated local grid refinement.
pub fn curve_grid_fit(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x <= min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let (mut la, mut lb) = (0.0_f64, 0.0_f64);
    let (mut half_a, mut half_b) = (5.0_f64, 2.5_f64);
    let steps = 60;
    for _round in 0..12 {
        let mut best = (f64::INFINITY, la, lb);
        for i in 0..=steps {
            let ca = la - half_a + 2.0 * half_a * i as f64 / steps as f64;
            for j in 0..=steps {
                let cb = lb - half_b + 2.0 * half_b * j as f64 / steps as f64;
                let e = curve_sse(ca.exp(), cb.exp(), &xs, &ys);
                if e < best.0 {
                    best = (e, ca, cb);
                }
            }
        }
        la = best.1;
        lb = best.2;
        half_a *= 0.2;
        half_b *= 0.2;
    }
    (la.exp(), lb.exp())
}

/// `Σ_{i≠j} [p ln(p/q) + (1−p) ln((1−p)/(1−q))]` with
/// `q = 1/(1 + a d^{2b})`, summed term by term over a dense `p`.
pub fn fuzzy_cross_entropy(p: ArrayView2<f64>, y: ArrayView2<f64>, a: f64, b: f64) -> f64 {
    let n = p.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = euclidean(y.row(i), y.row(j));
            let q = 1.0 / (1.0 + a * d.powf(2.0 * b));
            let w = p[[i, j]];
            if w > 0.0 {
                total += w * (w / q).ln();
            }
            if w < 1.0 {
                total += (1.0 - w) * ((1.0 - w) / (1.0 - q)).ln();
            }
        }
    }
    total
}

/// `Σ p ln(p/q)` over positive entries.
pub fn kl_term_sum(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&pi, _)| pi > 0.0).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Fraction of rows whose nearest other row carries the same label.
pub fn one_nn_purity(coords: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = coords.nrows();
    let hits = (0..n)
        .filter(|&i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    euclidean(coords.row(i), coords.row(a))
                        .total_cmp(&euclidean(coords.row(i), coords.row(b)))
                })
                .expect("at least two rows");
            labels[nearest] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}

/// Per-label mean of the rows of `coords`, indexed by label.
pub fn centroids(coords: ArrayView2<f64>, labels: &[usize]) -> Vec<Vec<f64>> {
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let dim = coords.ncols();
    let mut sums = vec![vec![0.0; dim]; n_labels];
    let mut counts = vec![0usize; n_labels];
    for (row, &l) in coords.rows().into_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

/// Label of the centroid nearest to `point`.
pub fn nearest_centroid(centroids: &[Vec<f64>], point: &[f64]) -> usize {
    let d = |c: &Vec<f64>| c.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..centroids.len()).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap_or(0)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation.
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
