//! An analysis session: one dataset with its PCA model, UMAP embedding,
//! diagnostics at the selected component count, Voronoi diagram and named
//! selections, plus the on-disk session format.
//!
//! Session files are a single JSON document followed by a checksum trailer
//! `\ncrc32:xxxxxxxx\n` over the JSON bytes. Float arrays are stored as
//! base-64 little-endian `f64` so a load restores every artifact bit for bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Preprocessing};
use crate::diagnostics::{cluster_contributions, minmax_normalize, DiagnosticsBundle};
use crate::error::{check_len, Error, Result};
use crate::pca::{csv_field, PcaModel, PcaSummary};
use crate::trace::{LossTrace, Progress};
use crate::umap::{Initialization, SparseGraph, UmapConfig, UmapModel};
use crate::voronoi::{compute_voronoi, point_in_polygon, BoundingBox, VoronoiDiagram};

pub const FORMAT_NAME: &str = "xmap-session";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "index", rename_all = "snake_case")]
pub enum ColorMode {
    PcScore(usize),
    /// `None` is the residual against all selected components.
    QResidual(Option<usize>),
    Variable(usize),
}

impl ColorMode {
    /// Parses the query form `mode` + optional `index`, where a residual
    /// index may also be `total`.
    pub fn parse(mode: &str, index: Option<&str>) -> Result<ColorMode> {
        let number = |s: Option<&str>| -> Result<usize> {
            let s = s.ok_or_else(|| Error::InvalidConfig(format!("mode {mode} needs an index")))?;
            s.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad index {s:?}")))
        };
        match mode {
            "pc_score" => Ok(ColorMode::PcScore(number(index)?)),
            "variable" => Ok(ColorMode::Variable(number(index)?)),
            "q_residual" => match index.map(str::trim) {
                None | Some("total") | Some("") => Ok(ColorMode::QResidual(None)),
                Some(s) => Ok(ColorMode::QResidual(Some(number(Some(s))?))),
            },
            other => Err(Error::InvalidConfig(format!("unknown color mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub values: Vec<f64>,
    /// Variable indices by decreasing `|value|`; ties keep index order.
    pub ranking: Vec<usize>,
    pub selection_a: String,
    pub selection_b: String,
}

impl ContributionReport {
    pub fn new(values: Vec<f64>, selection_a: &str, selection_b: &str) -> Self {
        let mut ranking: Vec<usize> = (0..values.len()).collect();
        ranking.sort_by(|&x, &y| values[y].abs().total_cmp(&values[x].abs()));
        ContributionReport {
            values,
            ranking,
            selection_a: selection_a.to_owned(),
            selection_b: selection_b.to_owned(),
        }
    }

    /// `rank,variable,index,contribution`, best first.
    pub fn write_csv<W: Write>(&self, mut w: W, variables: &[String]) -> Result<()> {
        check_len(self.values.len(), variables.len())?;
        writeln!(w, "rank,variable,index,contribution")?;
        for (r, &j) in self.ranking.iter().enumerate() {
            writeln!(w, "{},{},{},{}", r + 1, csv_field(&variables[j]), j, self.values[j])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub selection: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub variable: String,
    pub index: usize,
    /// `n_bins + 1` shared edges over the variable's full range.
    pub edges: Vec<f64>,
    pub selections: Vec<SelectionCounts>,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = self.selections.iter().map(|s| csv_field(&s.selection)).collect();
        writeln!(w, "bin_start,bin_end,{}", names.join(","))?;
        for b in 0..self.edges.len() - 1 {
            let counts: Vec<String> = self.selections.iter().map(|s| s.counts[b].to_string()).collect();
            writeln!(w, "{},{},{}", self.edges[b], self.edges[b + 1], counts.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub selected_components: usize,
    pub q_total: Vec<f64>,
    pub t2: Vec<f64>,
    pub excluded_components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub selected_components: usize,
    pub variables: Vec<String>,
    #[serde(flatten)]
    pub summary: PcaSummary,
}

#[derive(Debug, Clone)]
pub struct AnalysisSession {
    pub id: String,
    dataset: Dataset,
    pca: PcaModel,
    selected_components: usize,
    /// `pca` restricted to the selected components.
    active: PcaModel,
    umap: UmapModel,
    diagnostics: DiagnosticsBundle,
    voronoi: VoronoiDiagram,
    selections: BTreeMap<String, Vec<usize>>,
}

pub fn run_pipeline(d: Dataset, umap_cfg: &UmapConfig, max_pcs: usize) -> Result<AnalysisSession> {
    run_pipeline_with_progress(d, umap_cfg, max_pcs, None)
}

pub fn run_pipeline_with_progress(
    d: Dataset,
    umap_cfg: &UmapConfig,
    max_pcs: usize,
    progress: Option<&Progress>,
) -> Result<AnalysisSession> {
    if *d.preprocessing() == Preprocessing::Raw {
        return Err(Error::NotPreprocessed);
    }
    let pca = PcaModel::fit(&d, max_pcs)?;
    let selected = pca.auto_select_components();
    let training = Arc::new(d.values().clone());
    let umap = UmapModel::fit_with_progress(training, umap_cfg, progress)?;
    let voronoi = embedding_voronoi(&umap)?;
    let id = session_id(&d, umap_cfg, max_pcs);
    AnalysisSession::assemble(id, d, pca, selected, umap, voronoi, BTreeMap::new())
}

fn embedding_voronoi(umap: &UmapModel) -> Result<VoronoiDiagram> {
    let bbox = BoundingBox::around(umap.coords.view());
    compute_voronoi(umap.coords.view(), bbox, umap.config.seed)
}

/// Content hash of everything the fit depends on.
pub fn session_id(d: &Dataset, cfg: &UmapConfig, max_pcs: usize) -> String {
    let mut h = Sha256::new();
    for s in d.samples().iter().chain(d.variables()) {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    for v in d.raw().iter().chain(d.values().iter()) {
        h.update(v.to_le_bytes());
    }
    h.update(serde_json::to_vec(d.preprocessing()).unwrap_or_default());
    h.update(serde_json::to_vec(cfg).unwrap_or_default());
    h.update((max_pcs as u64).to_le_bytes());
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

impl AnalysisSession {
    fn assemble(
        id: String,
        dataset: Dataset,
        pca: PcaModel,
        selected_components: usize,
        umap: UmapModel,
        voronoi: VoronoiDiagram,
        selections: BTreeMap<String, Vec<usize>>,
    ) -> Result<AnalysisSession> {
        let n = dataset.n_samples();
        if pca.scores().nrows() != n || umap.coords.nrows() != n || voronoi.n_sites() != n {
            return Err(Error::CorruptSession("artifact row counts disagree".into()));
        }
        let active = pca.truncated(selected_components)?;
        let diagnostics = DiagnosticsBundle::compute(&active, &dataset)?;
        Ok(AnalysisSession {
            id,
            dataset,
            pca,
            selected_components,
            active,
            umap,
            diagnostics,
            voronoi,
            selections,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// The fitted model with all `max_pcs` components.
    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    /// The model restricted to the selected components.
    pub fn active_pca(&self) -> &PcaModel {
        &self.active
    }

    pub fn selected_components(&self) -> usize {
        self.selected_components
    }

    pub fn umap(&self) -> &UmapModel {
        &self.umap
    }

    pub fn diagnostics(&self) -> &DiagnosticsBundle {
        &self.diagnostics
    }

    pub fn voronoi(&self) -> &VoronoiDiagram {
        &self.voronoi
    }

    pub fn selections(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.selections
    }

    pub fn selection(&self, name: &str) -> Result<&[usize]> {
        self.selections
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSelection(name.to_owned()))
    }

    pub fn n_samples(&self) -> usize {
        self.dataset.n_samples()
    }

    /// Recomputes diagnostics at `count` components; the embedding is untouched.
    pub fn set_components(&mut self, count: usize) -> Result<()> {
        let active = self.pca.truncated(count)?;
        self.diagnostics = DiagnosticsBundle::compute(&active, &self.dataset)?;
        self.active = active;
        self.selected_components = count;
        Ok(())
    }

    pub fn diagnostics_summary(&self) -> DiagnosticsSummary {
        DiagnosticsSummary {
            selected_components: self.selected_components,
            q_total: self.diagnostics.q_total.to_vec(),
            t2: self.diagnostics.t2.to_vec(),
            excluded_components: self.diagnostics.excluded_components.clone(),
        }
    }

    pub fn pca_report(&self) -> PcaReport {
        PcaReport {
            selected_components: self.selected_components,
            variables: self.dataset.variables().to_vec(),
            summary: self.pca.summary(),
        }
    }

    /// Stores a selection from explicit indices (deduplicated, sorted) and
    /// returns its size.
    pub fn select_indices(&mut self, name: &str, indices: &[usize]) -> Result<usize> {
        let n = self.n_samples();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, limit: n });
        }
        let mut set = indices.to_vec();
        set.sort_unstable();
        set.dedup();
        let size = set.len();
        self.selections.insert(name.to_owned(), set);
        Ok(size)
    }

    /// Stores the samples whose embedded position lies inside `polygon`
    /// (even-odd rule) and returns the selection size.
    pub fn select_polygon(&mut self, name: &str, polygon: &[[f64; 2]]) -> Result<usize> {
        if polygon.len() < 3 {
            return Err(Error::InvalidConfig("a polygon needs at least 3 vertices".into()));
        }
        let coords = &self.umap.coords;
        let inside: Vec<usize> = (0..coords.nrows())
            .filter(|&i| point_in_polygon([coords[[i, 0]], coords[[i, 1]]], polygon))
            .collect();
        self.select_indices(name, &inside)
    }

    pub fn remove_selection(&mut self, name: &str) -> Result<()> {
        self.selections
            .remove(name)
            .map(|_| ())
            .ok_or_else(|| Error::UnknownSelection(name.to_owned()))
    }

    pub fn color_by(&self, mode: ColorMode) -> Result<Array1<f64>> {
        match mode {
            ColorMode::PcScore(k) => {
                self.check_component(k)?;
                Ok(self.pca.scores().column(k).to_owned())
            }
            ColorMode::QResidual(None) => Ok(minmax_normalize(self.diagnostics.q_total.view())),
            ColorMode::QResidual(Some(k)) => {
                self.check_component(k)?;
                Ok(minmax_normalize(self.diagnostics.q_per_pc.column(k)))
            }
            ColorMode::Variable(j) => {
                let limit = self.dataset.n_variables();
                if j >= limit {
                    return Err(Error::IndexOutOfRange { index: j, limit });
                }
                Ok(self.dataset.raw().column(j).to_owned())
            }
        }
    }

    fn check_component(&self, k: usize) -> Result<()> {
        if k >= self.selected_components {
            return Err(Error::IndexOutOfRange { index: k, limit: self.selected_components });
        }
        Ok(())
    }

    /// Relative T² contributions between the centroids of two selections.
    pub fn compare(&self, name_a: &str, name_b: &str) -> Result<ContributionReport> {
        let a = self.selection(name_a)?;
        let b = self.selection(name_b)?;
        let values = cluster_contributions(&self.active, a, b).map_err(|e| match e {
            Error::EmptySelection(side) => {
                Error::EmptySelection(if side == "a" { name_a } else { name_b }.to_owned())
            }
            other => other,
        })?;
        Ok(ContributionReport::new(values.to_vec(), name_a, name_b))
    }

    pub fn variable_histogram(&self, j: usize, names: &[String], n_bins: usize) -> Result<Histogram> {
        let limit = self.dataset.n_variables();
        if j >= limit {
            return Err(Error::IndexOutOfRange { index: j, limit });
        }
        if names.is_empty() {
            return Err(Error::InvalidConfig("at least one selection is required".into()));
        }
        if n_bins == 0 {
            return Err(Error::InvalidConfig("bins must be at least 1".into()));
        }
        let col = self.dataset.raw().column(j);
        let (mut lo, mut hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if !(hi > lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins)
            .map(|b| if b == n_bins { hi } else { lo + b as f64 * width })
            .collect();
        let bin = |v: f64| (((v - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
        let selections = names
            .iter()
            .map(|name| {
                let mut counts = vec![0; n_bins];
                for &i in self.selection(name)? {
                    counts[bin(col[i])] += 1;
                }
                Ok(SelectionCounts { selection: name.clone(), counts })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Histogram { variable: self.dataset.variables()[j].clone(), index: j, edges, selections })
    }

    /// Embeds a new row given in original units.
    pub fn transform(&self, x: ArrayView1<f64>) -> Result<[f64; 2]> {
        let xt = self.dataset.transform_row(x)?;
        let y = self.umap.transform_new(xt.view())?;
        Ok([y[0], y[1]])
    }

    pub fn save(&self) -> Result<Vec<u8>> {
        let file = SessionFile::from_session(self);
        let mut out = serde_json::to_vec(&file).map_err(|e| Error::Io(e.to_string()))?;
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(format!("\ncrc32:{crc:08x}\n").as_bytes());
        Ok(out)
    }

    pub fn load(bytes: &[u8]) -> Result<AnalysisSession> {
        let corrupt = |m: &str| Error::CorruptSession(m.to_owned());
        let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not UTF-8"))?;
        let body = text.strip_suffix('\n').ok_or_else(|| corrupt("missing checksum trailer"))?;
        let (json, trailer) = body.rsplit_once('\n').ok_or_else(|| corrupt("missing checksum trailer"))?;
        let hex = trailer.strip_prefix("crc32:").ok_or_else(|| corrupt("missing checksum trailer"))?;
        let expected = u32::from_str_radix(hex, 16).map_err(|_| corrupt("malformed checksum"))?;
        if hex.len() != 8 || crc32fast::hash(json.as_bytes()) != expected {
            return Err(corrupt("checksum mismatch"));
        }
        let header: FileHeader = serde_json::from_str(json).map_err(|e| Error::CorruptSession(e.to_string()))?;
        if header.format != FORMAT_NAME {
            return Err(corrupt("not a session file"));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: header.version });
        }
        let file: SessionFile = serde_json::from_str(json).map_err(|e| Error::CorruptSession(e.to_string()))?;
        file.into_session()
    }
}

#[derive(Deserialize)]
struct FileHeader {
    format: String,
    version: u32,
}

fn encode(v: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = v.into_iter().flat_map(f64::to_le_bytes).collect();
    B64.encode(bytes)
}

fn decode(s: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(s).map_err(|_| Error::CorruptSession(format!("{what}: bad base-64")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::CorruptSession(format!(
            "{what}: expected {expected} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn decode_matrix(s: &str, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
    let v = decode(s, rows * cols, what)?;
    Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::CorruptSession(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    format: String,
    version: u32,
    id: String,
    dataset: DatasetFile,
    pca: PcaFile,
    selected_components: usize,
    umap: UmapFile,
    voronoi: VoronoiFile,
    selections: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    samples: Vec<String>,
    variables: Vec<String>,
    raw: String,
    values: String,
    preprocessing: String,
    means: Option<String>,
    scales: Option<String>,
    zero_variance: Option<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
struct PcaFile {
    n_components: usize,
    loadings: String,
    scores: String,
    eigenvalues: String,
    explained_variance_ratio: String,
    total_sum_squares: String,
}

#[derive(Serialize, Deserialize)]
struct UmapFile {
    config: UmapConfig,
    curve: String,
    initialization: Initialization,
    heads: Vec<usize>,
    tails: Vec<usize>,
    weights: String,
    rhos: String,
    sigmas: String,
    coords: String,
    degenerate_rows: Vec<usize>,
    trace_epochs: Vec<usize>,
    trace_losses: String,
}

#[derive(Serialize, Deserialize)]
struct VoronoiFile {
    bbox: String,
    cell_sizes: Vec<usize>,
    vertices: String,
}

impl SessionFile {
    fn from_session(s: &AnalysisSession) -> SessionFile {
        let d = &s.dataset;
        let (means, scales, zero_variance) = match d.preprocessing() {
            Preprocessing::Raw => (None, None, None),
            Preprocessing::Centered { means } => (Some(encode(means.iter().copied())), None, None),
            Preprocessing::Autoscaled { means, scales, zero_variance } => (
                Some(encode(means.iter().copied())),
                Some(encode(scales.iter().copied())),
                Some(zero_variance.clone()),
            ),
        };
        let p = &s.pca;
        let u = &s.umap;
        let v = &s.voronoi;
        SessionFile {
            format: FORMAT_NAME.to_owned(),
            version: FORMAT_VERSION,
            id: s.id.clone(),
            dataset: DatasetFile {
                samples: d.samples().to_vec(),
                variables: d.variables().to_vec(),
                raw: encode(d.raw().iter().copied()),
                values: encode(d.values().iter().copied()),
                preprocessing: d.preprocessing().name().to_owned(),
                means,
                scales,
                zero_variance,
            },
            pca: PcaFile {
                n_components: p.n_components(),
                loadings: encode(p.loadings().iter().copied()),
                scores: encode(p.scores().iter().copied()),
                eigenvalues: encode(p.eigenvalues().iter().copied()),
                explained_variance_ratio: encode(p.explained_variance_ratio().iter().copied()),
                total_sum_squares: encode([p.total_sum_squares()]),
            },
            selected_components: s.selected_components,
            umap: UmapFile {
                config: u.config.clone(),
                curve: encode([u.curve_a, u.curve_b]),
                initialization: u.initialization,
                heads: u.graph.heads().to_vec(),
                tails: u.graph.tails().to_vec(),
                weights: encode(u.graph.weights().iter().copied()),
                rhos: encode(u.rhos.iter().copied()),
                sigmas: encode(u.sigmas.iter().copied()),
                coords: encode(u.coords.iter().copied()),
                degenerate_rows: u.degenerate_rows.clone(),
                trace_epochs: u.trace.epochs.clone(),
                trace_losses: encode(u.trace.losses.iter().copied()),
            },
            voronoi: VoronoiFile {
                bbox: encode([v.bbox.min_x, v.bbox.min_y, v.bbox.max_x, v.bbox.max_y]),
                cell_sizes: v.cells.iter().map(Vec::len).collect(),
                vertices: encode(v.cells.iter().flatten().flat_map(|p| [p[0], p[1]])),
            },
            selections: s.selections.clone(),
        }
    }

    fn into_session(self) -> Result<AnalysisSession> {
        let corrupt = |m: &str| Error::CorruptSession(m.to_owned());
        let df = self.dataset;
        let (n, j) = (df.samples.len(), df.variables.len());
        let raw = decode_matrix(&df.raw, n, j, "raw")?;
        let values = decode_matrix(&df.values, n, j, "values")?;
        let preprocessing = match (df.preprocessing.as_str(), df.means, df.scales, df.zero_variance) {
            ("raw", _, _, _) => Preprocessing::Raw,
            ("centered", Some(m), _, _) => Preprocessing::Centered { means: decode(&m, j, "means")? },
            ("autoscaled", Some(m), Some(s), Some(z)) if z.len() == j => Preprocessing::Autoscaled {
                means: decode(&m, j, "means")?,
                scales: decode(&s, j, "scales")?,
                zero_variance: z,
            },
            _ => return Err(corrupt("bad preprocessing record")),
        };
        let dataset = Dataset::from_parts(df.samples, df.variables, raw, values, preprocessing.clone())
            .map_err(|e| Error::CorruptSession(e.to_string()))?;

        let pf = self.pca;
        let a = pf.n_components;
        let pca = PcaModel::from_parts(
            preprocessing,
            decode_matrix(&pf.loadings, j, a, "loadings")?,
            decode_matrix(&pf.scores, n, a, "scores")?,
            Array1::from(decode(&pf.eigenvalues, a, "eigenvalues")?),
            Array1::from(decode(&pf.explained_variance_ratio, a, "explained variance")?),
            decode(&pf.total_sum_squares, 1, "total sum of squares")?[0],
        );

        let uf = self.umap;
        let graph = SparseGraph::from_coo(n, uf.heads, uf.tails, decode_weights(&uf.weights)?)
            .ok_or_else(|| corrupt("malformed graph"))?;
        let curve = decode(&uf.curve, 2, "curve")?;
        let trace = LossTrace {
            losses: decode(&uf.trace_losses, uf.trace_epochs.len(), "trace")?,
            epochs: uf.trace_epochs,
        };
        let umap = UmapModel::from_parts(
            graph,
            decode(&uf.rhos, n, "rhos")?,
            decode(&uf.sigmas, n, "sigmas")?,
            curve[0],
            curve[1],
            decode_matrix(&uf.coords, n, 2, "coords")?,
            uf.config,
            uf.initialization,
            trace,
            uf.degenerate_rows,
            Arc::new(dataset.values().clone()),
        )?;

        let vf = self.voronoi;
        if vf.cell_sizes.len() != n {
            return Err(corrupt("voronoi cell count"));
        }
        let total: usize = vf.cell_sizes.iter().sum();
        let flat = decode(&vf.vertices, 2 * total, "voronoi vertices")?;
        let mut cells = Vec::with_capacity(n);
        let mut at = 0;
        for &size in &vf.cell_sizes {
            cells.push((at..at + size).map(|k| [flat[2 * k], flat[2 * k + 1]]).collect());
            at += size;
        }
        let b = decode(&vf.bbox, 4, "bbox")?;
        let sites = umap.coords.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        let voronoi = VoronoiDiagram {
            sites,
            cells,
            bbox: BoundingBox { min_x: b[0], min_y: b[1], max_x: b[2], max_y: b[3] },
        };

        for set in self.selections.values() {
            if set.iter().any(|&i| i >= n) {
                return Err(corrupt("selection index out of range"));
            }
        }
        AnalysisSession::assemble(self.id, dataset, pca, self.selected_components, umap, voronoi, self.selections)
            .map_err(|e| match e {
                Error::CorruptSession(_) => e,
                other => Error::CorruptSession(other.to_string()),
            })
    }
}

fn decode_weights(s: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(s).map_err(|_| Error::CorruptSession("weights: bad base-64".into()))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::CorruptSession("weights: truncated".into()));
    }
    decode(s, bytes.len() / 8, "weights")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PreprocessMode;
    use crate::synthetic::{blobs, BlobSpec};

    fn small_session() -> AnalysisSession {
        let spec = BlobSpec { n_per_blob: 20, n_variables: 5, axes: vec![3, 1], ..Default::default() };
        let b = blobs(&spec).unwrap();
        let d = b.dataset.preprocess(PreprocessMode::Center).unwrap();
        let cfg = UmapConfig { n_neighbors: 8, n_epochs: 30, ..Default::default() };
        let mut s = run_pipeline(d, &cfg, 4).unwrap();
        s.select_indices("a", &b.members(0)).unwrap();
        s.select_indices("b", &b.members(1)).unwrap();
        s
    }

    #[test]
    fn color_modes() {
        let s = small_session();
        assert_eq!(s.color_by(ColorMode::PcScore(0)).unwrap(), s.pca().scores().column(0).to_owned());
        let q = s.color_by(ColorMode::QResidual(None)).unwrap();
        assert_eq!(q.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(q.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert_eq!(s.color_by(ColorMode::Variable(2)).unwrap(), s.dataset().raw().column(2).to_owned());
        let k = s.selected_components();
        assert!(matches!(s.color_by(ColorMode::PcScore(k)), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.color_by(ColorMode::Variable(5)), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn color_mode_parsing() {
        assert_eq!(ColorMode::parse("pc_score", Some("1")).unwrap(), ColorMode::PcScore(1));
        assert_eq!(ColorMode::parse("q_residual", Some("total")).unwrap(), ColorMode::QResidual(None));
        assert_eq!(ColorMode::parse("q_residual", Some("0")).unwrap(), ColorMode::QResidual(Some(0)));
        assert_eq!(ColorMode::parse("q_residual", None).unwrap(), ColorMode::QResidual(None));
        assert!(ColorMode::parse("variable", None).is_err());
        assert!(ColorMode::parse("hue", Some("1")).is_err());
    }

    #[test]
    fn compare_contract() {
        let s = small_session();
        let ab = s.compare("a", "b").unwrap();
        let ba = s.compare("b", "a").unwrap();
        for (x, y) in ab.values.iter().zip(&ba.values) {
            assert_eq!(*x, -*y);
        }
        assert_eq!(ab.ranking[0], 3);
        assert!(s.compare("a", "a").unwrap().values.iter().all(|&v| v == 0.0));
        assert_eq!(s.compare("a", "zz").unwrap_err(), Error::UnknownSelection("zz".into()));
        let mut s = s;
        s.select_indices("none", &[]).unwrap();
        assert_eq!(s.compare("none", "a").unwrap_err(), Error::EmptySelection("none".into()));
        assert_eq!(s.compare("a", "none").unwrap_err(), Error::EmptySelection("none".into()));
    }

    #[test]
    fn selections_are_validated() {
        let mut s = small_session();
        assert_eq!(s.select_indices("x", &[3, 1, 3]).unwrap(), 2);
        assert_eq!(s.selection("x").unwrap(), &[1, 3]);
        assert!(matches!(s.select_indices("y", &[60]), Err(Error::IndexOutOfRange { index: 60, limit: 60 })));
        let b = s.voronoi().bbox;
        let all = [[b.min_x, b.min_y], [b.max_x, b.min_y], [b.max_x, b.max_y], [b.min_x, b.max_y]];
        assert_eq!(s.select_polygon("all", &all).unwrap(), 60);
    }

    #[test]
    fn histogram_counts() {
        let s = small_session();
        let names = vec!["a".to_string(), "b".to_string()];
        let h = s.variable_histogram(3, &names, 7).unwrap();
        assert_eq!(h.edges.len(), 8);
        for sel in &h.selections {
            assert_eq!(sel.counts.iter().sum::<usize>(), 20);
        }
        assert!(matches!(s.variable_histogram(9, &names, 7), Err(Error::IndexOutOfRange { .. })));
        assert!(s.variable_histogram(3, &["q".to_string()], 7).is_err());
    }

    #[test]
    fn component_change_keeps_embedding() {
        let mut s = small_session();
        let coords = s.umap().coords.clone();
        s.set_components(1).unwrap();
        assert_eq!(s.diagnostics().n_components, 1);
        assert_eq!(s.umap().coords, coords);
        assert!(matches!(s.set_components(0), Err(Error::InvalidComponents { .. })));
        assert!(matches!(s.set_components(5), Err(Error::InvalidComponents { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let s = small_session();
        let bytes = s.save().unwrap();
        let back = AnalysisSession::load(&bytes).unwrap();
        assert_eq!(back.save().unwrap(), bytes);
        assert_eq!(back.umap().coords, s.umap().coords);
        assert_eq!(back.umap().graph, s.umap().graph);
        assert_eq!(back.pca().loadings(), s.pca().loadings());
        assert_eq!(back.voronoi(), s.voronoi());
        assert_eq!(back.compare("a", "b").unwrap(), s.compare("a", "b").unwrap());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = small_session().save().unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(AnalysisSession::load(cut), Err(Error::CorruptSession(_))));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(AnalysisSession::load(&flipped), Err(Error::CorruptSession(_))));

        let text = String::from_utf8(bytes).unwrap();
        let json = text.rsplit_once("\ncrc32:").unwrap().0.replace("\"version\":1", "\"version\":2");
        let crc = crc32fast::hash(json.as_bytes());
        let v2 = format!("{json}\ncrc32:{crc:08x}\n");
        assert_eq!(
            AnalysisSession::load(v2.as_bytes()).unwrap_err(),
            Error::VersionMismatch { expected: 1, found: 2 }
        );
    }
}
