//! Headless pipeline access: fit a session file, render its Voronoi map,
//! compare selections and project new rows.

mod viridis;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use xmap_core::umap::Metric;
use xmap_core::{run_pipeline, AnalysisSession, ColorMode, CsvOptions, Dataset, PreprocessMode, UmapConfig};

pub use viridis::VIRIDIS;

/// Upper bound on the default number of fitted components.
pub const DEFAULT_MAX_PCS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "xmap", version, about = "Explainable embedding maps from the command line")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess a CSV, fit PCA and UMAP, and write a session file.
    Fit(FitArgs),
    /// Render the session's Voronoi map as SVG.
    PlotVoronoi(PlotArgs),
    /// Rank variables by their relative T² contribution between two selections.
    Compare(CompareArgs),
    /// Place new rows into a fitted embedding.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "center")]
    pub preprocess: String,
    #[arg(long, default_value_t = UmapConfig::default().n_neighbors)]
    pub neighbors: usize,
    #[arg(long, default_value_t = UmapConfig::default().min_dist)]
    pub min_dist: f64,
    #[arg(long, default_value_t = UmapConfig::default().spread)]
    pub spread: f64,
    #[arg(long, default_value = "euclidean")]
    pub metric: String,
    #[arg(long, default_value_t = UmapConfig::default().n_epochs)]
    pub epochs: usize,
    /// Defaults to min(10, I - 1, J).
    #[arg(long)]
    pub max_pcs: Option<usize>,
    #[arg(long, default_value_t = UmapConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Column holding sample ids; rows are numbered otherwise.
    #[arg(long)]
    pub id_column: Option<String>,
    /// The first line is data, not variable names.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// pc:K, q:K, q:total or var:NAME (a variable index also works).
    #[arg(long, default_value = "q:total")]
    pub color: String,
    #[arg(long, default_value_t = 800.0)]
    pub width: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Sample indices such as `0,1,5-9`, or a file holding them.
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// CSV with a header; an extra leading column is taken as the row id.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with the same code the HTTP API would report.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    fn bad_request(message: impl Into<String>) -> Self {
        CliError { code: "bad_request", message: message.into() }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        CliError { code: "io_error", message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<xmap_core::Error> for CliError {
    fn from(e: xmap_core::Error) -> Self {
        CliError { code: e.code(), message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => fit(&a),
        Command::PlotVoronoi(a) => plot_voronoi(&a),
        Command::Compare(a) => compare(&a),
        Command::Transform(a) => transform(&a),
    }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn load_session(path: &Path) -> CliResult<AnalysisSession> {
    Ok(AnalysisSession::load(&read_file(path)?)?)
}

/// Writes to `path`, or to stdout when it is `None` or `-`.
fn write_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        _ => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn delimiter_byte(c: char) -> CliResult<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(CliError::bad_request(format!("delimiter must be ASCII, got {c:?}")))
    }
}

pub fn default_max_pcs(d: &Dataset) -> usize {
    DEFAULT_MAX_PCS.min(d.n_samples() - 1).min(d.n_variables())
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let options = CsvOptions {
        delimiter: delimiter_byte(a.delimiter)?,
        has_header: !a.no_header,
        id_column: a.id_column.clone(),
    };
    let mode: PreprocessMode = a.preprocess.parse()?;
    let raw = Dataset::load_csv(&read_file(&a.input)?[..], &options)?;
    let d = raw.preprocess(mode)?;
    let metric: Metric = a.metric.parse()?;
    let cfg = UmapConfig {
        n_neighbors: a.neighbors,
        min_dist: a.min_dist,
        spread: a.spread,
        metric,
        n_epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let max_pcs = a.max_pcs.unwrap_or_else(|| default_max_pcs(&d));
    let session = run_pipeline(d, &cfg, max_pcs)?;
    let bytes = session.save()?;
    std::fs::write(&a.out, bytes).map_err(|e| CliError::io(&a.out, e))
}

/// Parses the `--color` form into a color mode for this session.
pub fn parse_color(spec: &str, session: &AnalysisSession) -> CliResult<ColorMode> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| CliError::bad_request(format!("color must look like pc:K, q:K, q:total or var:NAME, got {spec:?}")))?;
    match kind {
        "pc" => Ok(ColorMode::parse("pc_score", Some(arg))?),
        "q" => Ok(ColorMode::parse("q_residual", Some(arg))?),
        "var" => {
            let j = match session.dataset().variable_index(arg) {
                Some(j) => j,
                None => arg
                    .parse()
                    .map_err(|_| CliError::bad_request(format!("unknown variable {arg:?}")))?,
            };
            Ok(ColorMode::Variable(j))
        }
        other => Err(CliError::bad_request(format!("unknown color kind {other:?}"))),
    }
}

/// Min-max maps values onto the lookup table; a constant vector takes the
/// first entry.
pub fn fills(values: &[f64]) -> Vec<String> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| {
            let t = if range > 0.0 { (v - lo) / range } else { 0.0 };
            let [r, g, b] = VIRIDIS[(t * 255.0).round().clamp(0.0, 255.0) as usize];
            format!("#{r:02x}{g:02x}{b:02x}")
        })
        .collect()
}

fn plot_voronoi(a: &PlotArgs) -> CliResult<()> {
    if !(a.width > 0.0) || !a.width.is_finite() {
        return Err(CliError::bad_request("width must be positive"));
    }
    let s = load_session(&a.session)?;
    let mode = parse_color(&a.color, &s)?;
    let values = s.color_by(mode)?;
    let svg = s.voronoi().to_svg(&fills(values.as_slice().expect("contiguous")), a.width)?;
    write_output(a.out.as_deref(), |w| w.write_all(svg.as_bytes()).map_err(|e| CliError::io(Path::new("svg"), e)))
}

/// Parses `0,1,5-9` style lists separated by commas, whitespace or newlines.
pub fn parse_index_list(text: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let num = |s: &str| s.parse::<usize>().map_err(|_| CliError::bad_request(format!("bad index {tok:?}")));
        match tok.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(CliError::bad_request(format!("empty range {tok:?}")));
                }
                out.extend(lo..=hi);
            }
            None => out.push(num(tok)?),
        }
    }
    Ok(out)
}

/// An existing file is read; anything else is taken as the list itself.
fn index_argument(arg: &str) -> CliResult<Vec<usize>> {
    let path = Path::new(arg);
    if path.is_file() {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| CliError::io(path, e))?;
        parse_index_list(&text)
    } else {
        parse_index_list(arg)
    }
}

fn compare(a: &CompareArgs) -> CliResult<()> {
    let mut s = load_session(&a.session)?;
    s.select_indices("a", &index_argument(&a.a)?)?;
    s.select_indices("b", &index_argument(&a.b)?)?;
    let report = s.compare("a", "b")?;
    write_output(a.out.as_deref(), |w| Ok(report.write_csv(w, s.dataset().variables())?))
}

fn transform(a: &TransformArgs) -> CliResult<()> {
    let s = load_session(&a.session)?;
    let j = s.dataset().n_variables();
    let bytes = read_file(&a.input)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(a.delimiter)?)
        .has_headers(true)
        .from_reader(&bytes[..]);
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| xmap_core::Error::Parse(e.to_string()))?;
        let (id, cells): (String, Vec<&str>) = match rec.len() {
            n if n == j => (r.to_string(), rec.iter().collect()),
            n if n == j + 1 => (rec[0].to_owned(), rec.iter().skip(1).collect()),
            n => return Err(xmap_core::Error::DimensionMismatch { expected: j, found: n }.into()),
        };
        let offset = rec.len() - j;
        let values = cells
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| xmap_core::Error::NonNumericCell {
                    row: r,
                    col: c + offset,
                    value: (*v).to_owned(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let xy = s.transform(Array1::from(values).view())?;
        rows.push((id, xy));
    }
    write_output(a.out.as_deref(), |w| {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| xmap_core::Error::Io(e.to_string());
        out.write_record(["id", "x", "y"]).map_err(err)?;
        for (id, [x, y]) in rows {
            out.write_record([id, x.to_string(), y.to_string()]).map_err(err)?;
        }
        out.flush().map_err(|e| xmap_core::Error::Io(e.to_string()))?;
        Ok(())
    })
}
