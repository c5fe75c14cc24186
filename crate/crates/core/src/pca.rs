//! Bilinear PCA model `X = T Pᵀ + E` fitted by one-sided Jacobi SVD.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_preprocessing, undo_preprocessing, Dataset, Preprocessing};
use crate::error::{check_len, Error, Result};

/// Cumulative explained variance at which [`PcaModel::auto_select_components`] stops.
pub const AUTO_SELECT_THRESHOLD: f64 = 0.95;
const JACOBI_SWEEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub(crate) preprocessing: Preprocessing,
    /// J×A, orthonormal columns.
    pub(crate) loadings: Array2<f64>,
    /// I×A, mutually orthogonal columns.
    pub(crate) scores: Array2<f64>,
    /// Eigenvalues of XᵀX on the preprocessed matrix, nonincreasing.
    pub(crate) eigenvalues: Array1<f64>,
    pub(crate) explained_variance_ratio: Array1<f64>,
    /// ‖X‖²_F of the preprocessed training matrix.
    pub(crate) total_sum_squares: f64,
}

/// Variance panel data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PcaSummary {
    pub n_components: usize,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative_ratio: Vec<f64>,
    /// Row-major J×A.
    pub loadings: Vec<Vec<f64>>,
}

impl PcaModel {
    /// Fits `max_components` components to the preprocessed matrix of `d`.
    pub fn fit(d: &Dataset, max_components: usize) -> Result<PcaModel> {
        if matches!(d.preprocessing(), Preprocessing::Raw) {
            return Err(Error::NotPreprocessed);
        }
        let x = d.values();
        let (rows, cols) = x.dim();
        let max = (rows - 1).min(cols);
        if max_components == 0 || max_components > max {
            return Err(Error::InvalidComponents { requested: max_components, max });
        }

        let total_sum_squares: f64 = x.iter().map(|v| v * v).sum();
        let reference = raw_reference_scale(d);
        if total_sum_squares <= 1e-12 * reference || total_sum_squares == 0.0 {
            return Err(Error::DegenerateData);
        }

        let (columns, v, sv) = one_sided_jacobi(x);

        // Stable sort keeps the decomposition's order for exactly equal values.
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let order = &order[..max_components];

        if sv[order[0]] * sv[order[0]] <= 1e-12 * reference {
            return Err(Error::DegenerateData);
        }

        let mut loadings = Array2::zeros((cols, max_components));
        let mut scores = Array2::zeros((rows, max_components));
        let mut eigenvalues = Array1::zeros(max_components);
        for (k, &src) in order.iter().enumerate() {
            let mut col = v.column(src).to_owned();
            let pivot = col
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |best, (j, v)| if v.abs() > best.1 { (j, v.abs()) } else { best })
                .0;
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            col.mapv_inplace(|v| sign * v);
            loadings.column_mut(k).assign(&col);
            scores.column_mut(k).assign(&columns.column(src).mapv(|v| sign * v));
            eigenvalues[k] = sv[src] * sv[src];
        }
        let explained_variance_ratio = eigenvalues.mapv(|l| l / total_sum_squares);

        Ok(PcaModel {
            preprocessing: d.preprocessing().clone(),
            loadings,
            scores,
            eigenvalues,
            explained_variance_ratio,
            total_sum_squares,
        })
    }

    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n_variables(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn loadings(&self) -> &Array2<f64> {
        &self.loadings
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn explained_variance_ratio(&self) -> &Array1<f64> {
        &self.explained_variance_ratio
    }

    pub fn total_sum_squares(&self) -> f64 {
        self.total_sum_squares
    }

    /// Column means in original units.
    pub fn mean(&self) -> Array1<f64> {
        match self.preprocessing.means() {
            Some(m) => Array1::from(m.to_vec()),
            None => Array1::zeros(self.n_variables()),
        }
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    /// Maps a row in original units to preprocessed coordinates.
    pub fn preprocess_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len(self.n_variables(), x.len())?;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("non-finite input value {bad}")));
        }
        Ok(apply_preprocessing(&self.preprocessing, x))
    }

    /// Scores of a row given in original units.
    pub fn project(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let xt = self.preprocess_row(x)?;
        Ok(xt.dot(&self.loadings))
    }

    /// Maps scores back to a row in original units.
    pub fn reconstruct(&self, t: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len(self.n_components(), t.len())?;
        let xt = self.loadings.dot(&t);
        Ok(undo_preprocessing(&self.preprocessing, xt.view()))
    }

    pub fn auto_select_components(&self) -> usize {
        select_by_cumulative(self.explained_variance_ratio.as_slice().unwrap(), AUTO_SELECT_THRESHOLD)
    }

    /// The same model restricted to its leading `a` components.
    pub fn truncated(&self, a: usize) -> Result<PcaModel> {
        if a == 0 || a > self.n_components() {
            return Err(Error::InvalidComponents { requested: a, max: self.n_components() });
        }
        let keep = |m: &Array2<f64>| m.slice_axis(Axis(1), (0..a).into()).to_owned();
        Ok(PcaModel {
            preprocessing: self.preprocessing.clone(),
            loadings: keep(&self.loadings),
            scores: keep(&self.scores),
            eigenvalues: self.eigenvalues.slice_axis(Axis(0), (0..a).into()).to_owned(),
            explained_variance_ratio: self
                .explained_variance_ratio
                .slice_axis(Axis(0), (0..a).into())
                .to_owned(),
            total_sum_squares: self.total_sum_squares,
        })
    }

    pub fn summary(&self) -> PcaSummary {
        let mut acc = 0.0;
        PcaSummary {
            n_components: self.n_components(),
            eigenvalues: self.eigenvalues.to_vec(),
            explained_variance_ratio: self.explained_variance_ratio.to_vec(),
            cumulative_ratio: self
                .explained_variance_ratio
                .iter()
                .map(|r| {
                    acc += r;
                    acc
                })
                .collect(),
            loadings: self.loadings.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Loadings as CSV: one row per variable, one column per component.
    pub fn write_loadings_csv<W: Write>(&self, mut w: W, variables: &[String]) -> Result<()> {
        check_len(self.n_variables(), variables.len())?;
        let header: Vec<String> = (1..=self.n_components()).map(|k| format!("PC{k}")).collect();
        writeln!(w, "variable,{}", header.join(","))?;
        for (name, row) in variables.iter().zip(self.loadings.rows()) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", csv_field(name), vals.join(","))?;
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        preprocessing: Preprocessing,
        loadings: Array2<f64>,
        scores: Array2<f64>,
        eigenvalues: Array1<f64>,
        explained_variance_ratio: Array1<f64>,
        total_sum_squares: f64,
    ) -> PcaModel {
        PcaModel {
            preprocessing,
            loadings,
            scores,
            eigenvalues,
            explained_variance_ratio,
            total_sum_squares,
        }
    }
}

/// One-sided Jacobi SVD: rotates column pairs of `x` until they are mutually
/// orthogonal. Returns the rotated columns `XV` (the unnormalized scores), the
/// orthogonal `V` and the column norms, i.e. the singular values.
fn one_sided_jacobi(x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let n = x.ncols();
    let mut u = x.clone();
    let mut v = Array2::eye(n);
    for _sweep in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let up = u.column(p);
                    let uq = u.column(q);
                    (up.dot(&up), uq.dot(&uq), up.dot(&uq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sv = u.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    (u, v, sv)
}

fn rotate(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for mut row in m.rows_mut() {
        let (a, b) = (row[p], row[q]);
        row[p] = c * a - s * b;
        row[q] = s * a + c * b;
    }
}

/// Smallest count whose cumulative ratio reaches `threshold`, clamped to
/// `1..=ratios.len()`.
pub fn select_by_cumulative(ratios: &[f64], threshold: f64) -> usize {
    let mut acc = 0.0;
    for (k, r) in ratios.iter().enumerate() {
        acc += r;
        if acc >= threshold {
            return k + 1;
        }
    }
    ratios.len().max(1)
}

fn raw_reference_scale(d: &Dataset) -> f64 {
    let scales = d.preprocessing().scales();
    d.raw()
        .indexed_iter()
        .map(|((_, j), v)| {
            let s = scales.map_or(1.0, |s| s[j]);
            (v / s) * (v / s)
        })
        .sum()
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
