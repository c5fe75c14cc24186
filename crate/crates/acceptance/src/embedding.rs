use ndarray::{Array1, Axis};
use xmap_core::diagnostics::{cluster_contributions, minmax_normalize};
use xmap_core::synthetic::{blobs, planted, BlobSpec, PlantedSpec};
use xmap_core::tsne::{tsne_embed, TsneConfig};
use xmap_core::{run_pipeline, AnalysisSession, PcaModel, PreprocessMode, UmapConfig};
use xmap_oracles::{centroids, euclidean, mean, nearest_centroid, one_nn_purity, sample_sd};

use crate::Criterion;

const HELD_OUT_PER_BLOB: usize = 10;

/// Blob benchmark plus 10 extra draws per blob kept out of the fit.
struct Split {
    session: AnalysisSession,
    labels: Vec<usize>,
    held_out: Vec<(Array1<f64>, usize)>,
}

fn split_blobs() -> xmap_core::Result<Split> {
    let base = BlobSpec::default();
    let per = base.n_per_blob;
    let all = blobs(&BlobSpec { n_per_blob: per + HELD_OUT_PER_BLOB, ..base })?;
    let (mut train, mut held_out) = (Vec::new(), Vec::new());
    for (i, &label) in all.labels.iter().enumerate() {
        if i % (per + HELD_OUT_PER_BLOB) < per {
            train.push(i);
        } else {
            held_out.push((all.dataset.raw().row(i).to_owned(), label));
        }
    }
    let raw = all.dataset.raw().select(Axis(0), &train);
    let names = all.dataset.variables().to_vec();
    let samples = train.iter().map(|i| format!("s{i}")).collect();
    let d = xmap_core::Dataset::new(samples, names, raw)?.preprocess(PreprocessMode::Center)?;
    let labels = train.iter().map(|&i| all.labels[i]).collect();
    let session = run_pipeline(d, &UmapConfig::default(), 10)?;
    Ok(Split { session, labels, held_out })
}

pub fn embedding_quality() -> Criterion {
    let mut c = Criterion::new("Embedding quality");
    let data = blobs(&BlobSpec::default()).unwrap();
    let x = data.dataset.preprocess(PreprocessMode::Center).unwrap().values().clone();
    match tsne_embed(x.view(), &TsneConfig::default()) {
        Ok(e) => {
            let purity = one_nn_purity(e.coords.view(), &data.labels);
            c.check("t-SNE 1-NN purity", purity >= 0.95, format!("{purity:.3} >= 0.95 on 300 points"));
        }
        Err(e) => {
            c.error("t-SNE fit", e);
        }
    }
    let split = match split_blobs() {
        Ok(s) => s,
        Err(e) => return c.error("UMAP fit", e).clone(),
    };
    let coords = &split.session.umap().coords;
    let purity = one_nn_purity(coords.view(), &split.labels);
    c.check("UMAP 1-NN purity", purity >= 0.95, format!("{purity:.3} >= 0.95 on 300 points"));

    let cents = centroids(coords.view(), &split.labels);
    let mut correct = 0;
    for (row, label) in &split.held_out {
        if let Ok(y) = split.session.transform(row.view()) {
            if nearest_centroid(&cents, &y) == *label {
                correct += 1;
            }
        }
    }
    let n = split.held_out.len();
    let rate = correct as f64 / n as f64;
    c.check("held-out placement", rate >= 0.9, format!("{correct}/{n} = {rate:.3} >= 0.90 nearest the right centroid"));
    c
}

pub fn planted_feature() -> Criterion {
    let mut c = Criterion::new("Planted-feature discovery");
    let (mut ranked_first, mut hidden, mut both) = (0, 0, 0);
    let mut separations = Vec::new();
    for seed in 0..100 {
        let spec = PlantedSpec { seed, ..Default::default() };
        let data = planted(&spec).unwrap();
        let d = data.dataset.preprocess(PreprocessMode::Center).unwrap();
        let (a, b) = (data.members(0), data.members(1));

        let full = PcaModel::fit(&d, 10).unwrap();
        let model = full.truncated(full.auto_select_components()).unwrap();
        let values = cluster_contributions(&model, &a, &b).unwrap();
        let top = (0..values.len()).max_by(|&i, &j| values[i].abs().total_cmp(&values[j].abs())).unwrap();
        let first = top == spec.planted;

        // what the min-max color map of the planted variable shows
        let color = minmax_normalize(data.dataset.raw().column(spec.planted));
        let ca: Vec<f64> = a.iter().map(|&i| color[i]).collect();
        let cb: Vec<f64> = b.iter().map(|&i| color[i]).collect();
        let within = ((sample_sd(&ca).powi(2) + sample_sd(&cb).powi(2)) / 2.0).sqrt();
        let sep = (mean(&cb) - mean(&ca)).abs() / within;
        separations.push(sep);

        ranked_first += first as usize;
        hidden += (sep < 1.0) as usize;
        both += (first && sep < 1.0) as usize;
    }
    let max_sep = separations.iter().cloned().fold(0.0, f64::max);
    c.check("relative T² ranks the planted variable first", ranked_first >= 95, format!("{ranked_first}/100 replicates >= 95"));
    c.check(
        "color-map separation < 1 within-cluster sd",
        hidden >= 95,
        format!("{hidden}/100 replicates; mean {:.3}, max {max_sep:.3}", mean(&separations)),
    );
    c.check("both at once", both >= 95, format!("{both}/100 replicates >= 95"));
    c
}

/// Not a primary criterion: transform of an exact training copy should land
/// within 0.1 median nearest-neighbor distances of its own embedding.
pub fn self_projection() -> Criterion {
    let mut c = Criterion::supplementary("UMAP self-projection");
    let split = match split_blobs() {
        Ok(s) => s,
        Err(e) => return c.error("UMAP fit", e).clone(),
    };
    let s = &split.session;
    let coords = &s.umap().coords;
    let n = coords.nrows();
    let mut nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(coords.row(i), coords.row(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let median = nn[n / 2];
    let mut ratios: Vec<f64> = (0..n)
        .step_by(10)
        .map(|i| {
            let y = s.transform(s.dataset().raw().row(i)).unwrap();
            let d = ((y[0] - coords[[i, 0]]).powi(2) + (y[1] - coords[[i, 1]]).powi(2)).sqrt();
            d / median
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let worst = *ratios.last().unwrap();
    c.check_known(
        "distance / median NN distance",
        worst < 0.1,
        format!("worst {worst:.2}, median {:.2} over {} samples; need < 0.1", ratios[ratios.len() / 2], ratios.len()),
    );
    c
}
