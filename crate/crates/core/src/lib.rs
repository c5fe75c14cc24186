//! Explainable embedding maps: PCA with residual and Hotelling diagnostics,
//! t-SNE and UMAP embeddings, Voronoi tessellation of the embedded points,
//! and a persistent analysis session tying them together.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod pca;
pub mod session;
pub mod synthetic;
pub mod trace;
pub mod tsne;
pub mod umap;
pub mod voronoi;

pub use dataset::{CsvOptions, Dataset, PreprocessMode, Preprocessing};
pub use diagnostics::{Components, DiagnosticsBundle};
pub use error::{Error, Result};
pub use pca::PcaModel;
pub use trace::{LossTrace, Progress};
pub use tsne::{TsneConfig, TsneEmbedding};
pub use umap::{UmapConfig, UmapModel};
pub use voronoi::{compute_voronoi, BoundingBox, VoronoiDiagram};
pub use session::{run_pipeline, AnalysisSession, ColorMode, ContributionReport, Histogram};
