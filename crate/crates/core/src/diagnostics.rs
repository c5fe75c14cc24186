//! Q-residuals, Hotelling's T² and per-variable T² contributions.
//!
//! With `P` the J×A column-orthonormal loadings and `x̃` a preprocessed row:
//!
//! * `Q = x̃ (I − P Pᵀ) x̃ᵀ`, the squared distance from the model plane;
//! * `T² = t Λ⁻¹ tᵀ` with `t = x̃ P` and `Λ` the eigenvalues of `XᵀX`;
//! * `c = t Λ^(−1/2) Pᵀ`, a J-vector whose squared norm equals `T²`.
//!
//! Components whose eigenvalue is at most `1e-12 · λ_max` carry no variance
//! and are skipped in `Λ⁻¹` and `Λ^(−1/2)`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::pca::{csv_field, PcaModel};

const EIGEN_FLOOR: f64 = 1e-12;

/// Which loading columns span the subspace a residual is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Components {
    All,
    Single(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsBundle {
    pub n_components: usize,
    pub q_total: Array1<f64>,
    /// I×A; column k is the residual against `p_k` alone.
    pub q_per_pc: Array2<f64>,
    pub t2: Array1<f64>,
    /// I×J; row i is the T² contribution vector of sample i.
    pub contributions: Array2<f64>,
    /// Components left out of the T² scaling for having zero variance.
    pub excluded_components: Vec<usize>,
}

/// Indices of components with usable (nonzero) eigenvalues.
pub fn retained_components(m: &PcaModel) -> Vec<usize> {
    let ev = m.eigenvalues();
    let max = ev.iter().copied().fold(0.0, f64::max);
    (0..ev.len()).filter(|&k| ev[k] > EIGEN_FLOOR * max).collect()
}

pub fn q_residual(m: &PcaModel, x: ArrayView1<f64>, components: Components) -> Result<f64> {
    let xt = m.preprocess_row(x)?;
    q_residual_preprocessed(m, xt.view(), components)
}

/// [`q_residual`] for a row that is already preprocessed.
pub fn q_residual_preprocessed(
    m: &PcaModel,
    xt: ArrayView1<f64>,
    components: Components,
) -> Result<f64> {
    check_len(m.n_variables(), xt.len())?;
    let p = m.loadings();
    let mut residual = xt.to_owned();
    match components {
        Components::All => {
            let t = xt.dot(p);
            residual -= &p.dot(&t);
        }
        Components::Single(k) => {
            if k >= m.n_components() {
                return Err(Error::ComponentOutOfRange { index: k, available: m.n_components() });
            }
            let pk = p.column(k);
            let tk = xt.dot(&pk);
            residual.scaled_add(-tk, &pk);
        }
    }
    Ok(residual.dot(&residual).max(0.0))
}

pub fn hotelling_t2(m: &PcaModel, t: ArrayView1<f64>) -> Result<f64> {
    check_len(m.n_components(), t.len())?;
    let ev = m.eigenvalues();
    let t2: f64 = retained_components(m).into_iter().map(|k| t[k] * t[k] / ev[k]).sum();
    Ok(t2.max(0.0))
}

pub fn t2_contributions(m: &PcaModel, t: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(m.n_components(), t.len())?;
    let ev = m.eigenvalues();
    let mut c = Array1::zeros(m.n_variables());
    for k in retained_components(m) {
        c.scaled_add(t[k] / ev[k].sqrt(), &m.loadings().column(k));
    }
    Ok(c)
}

/// `c_i − c_j`: which variables drive the difference between two samples.
pub fn relative_t2_contributions(ci: ArrayView1<f64>, cj: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(ci.len(), cj.len())?;
    Ok(&ci - &cj)
}

/// Relative contributions between the score centroids of two sample sets.
pub fn cluster_contributions(
    m: &PcaModel,
    selection_a: &[usize],
    selection_b: &[usize],
) -> Result<Array1<f64>> {
    let ca = centroid_contribution(m, selection_a, "a")?;
    let cb = centroid_contribution(m, selection_b, "b")?;
    relative_t2_contributions(ca.view(), cb.view())
}

fn centroid_contribution(m: &PcaModel, selection: &[usize], label: &str) -> Result<Array1<f64>> {
    if selection.is_empty() {
        return Err(Error::EmptySelection(label.to_owned()));
    }
    let scores = m.scores();
    if let Some(&bad) = selection.iter().find(|&&i| i >= scores.nrows()) {
        return Err(Error::IndexOutOfRange { index: bad, limit: scores.nrows() });
    }
    let centroid = scores.select(Axis(0), selection).mean_axis(Axis(0)).expect("nonempty");
    let c = t2_contributions(m, centroid.view())?;

    // contributions are linear in t, so the mean of the members' vectors must agree
    if cfg!(debug_assertions) {
        let mut mean = Array1::zeros(m.n_variables());
        for &i in selection {
            mean += &t2_contributions(m, scores.row(i))?;
        }
        mean /= selection.len() as f64;
        let scale = c.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        debug_assert!((&mean - &c).iter().all(|d| d.abs() <= 1e-9 * scale));
    }
    Ok(c)
}

/// Rescales to `[0, 1]`; a constant vector maps to zeros.
pub fn minmax_normalize(v: ArrayView1<f64>) -> Array1<f64> {
    let (min, max) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = max - min;
    if !(range > 0.0) {
        return Array1::zeros(v.len());
    }
    v.mapv(|x| (x - min) / range)
}

impl DiagnosticsBundle {
    /// Evaluates every statistic for the training rows of `d` under `m`.
    pub fn compute(m: &PcaModel, d: &Dataset) -> Result<DiagnosticsBundle> {
        check_len(m.n_variables(), d.n_variables())?;
        check_len(m.scores().nrows(), d.n_samples())?;
        let n = d.n_samples();
        let a = m.n_components();
        let mut q_total = Array1::zeros(n);
        let mut q_per_pc = Array2::zeros((n, a));
        let mut t2 = Array1::zeros(n);
        let mut contributions = Array2::zeros((n, m.n_variables()));
        for (i, xt) in d.values().rows().into_iter().enumerate() {
            q_total[i] = q_residual_preprocessed(m, xt, Components::All)?;
            for k in 0..a {
                q_per_pc[[i, k]] = q_residual_preprocessed(m, xt, Components::Single(k))?;
            }
            let t = m.scores().row(i);
            t2[i] = hotelling_t2(m, t)?;
            contributions.row_mut(i).assign(&t2_contributions(m, t)?);
        }
        let retained = retained_components(m);
        Ok(DiagnosticsBundle {
            n_components: a,
            q_total,
            q_per_pc,
            t2,
            contributions,
            excluded_components: (0..a).filter(|k| !retained.contains(k)).collect(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.q_total.len()
    }

    /// One row per sample: id, Q, per-PC Q, T², then one contribution
    /// column per variable.
    pub fn write_csv<W: Write>(&self, mut w: W, samples: &[String], variables: &[String]) -> Result<()> {
        check_len(self.n_samples(), samples.len())?;
        check_len(self.contributions.ncols(), variables.len())?;
        let mut header = vec!["id".to_owned(), "q_total".to_owned()];
        header.extend((1..=self.n_components).map(|k| format!("q_pc{k}")));
        header.push("t2".to_owned());
        header.extend(variables.iter().map(|v| csv_field(v)));
        writeln!(w, "{}", header.join(","))?;
        for (i, id) in samples.iter().enumerate() {
            let mut row = vec![csv_field(id), self.q_total[i].to_string()];
            row.extend(self.q_per_pc.row(i).iter().map(|v| v.to_string()));
            row.push(self.t2[i].to_string());
            row.extend(self.contributions.row(i).iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
