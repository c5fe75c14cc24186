use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmap_core::diagnostics::{hotelling_t2, relative_t2_contributions, t2_contributions};
use xmap_core::synthetic::{blobs, BlobSpec};
use xmap_core::tsne::{
    conditional_affinities, kl_divergence, kl_gradient, low_dim_affinities, symmetrize, tsne_embed, TsneConfig,
};
use xmap_core::umap::curve::q_of_sq;
use xmap_core::umap::objective::{pair_cross_entropy, pair_gradient};
use xmap_core::umap::{fit_ab, knn_graph, umap_affinities, Metric};
use xmap_core::{compute_voronoi, BoundingBox, Dataset, DiagnosticsBundle, PcaModel, PreprocessMode, UmapConfig, UmapModel};
use xmap_oracles::{
    central_gradient, curve_grid_fit, gram, jacobi_eigenvalues, max_relative_error, nearest_site, perplexity,
};

use crate::{largest_rise, max_abs, random_matrix, Criterion};

fn centered(x: Array2<f64>) -> Dataset {
    Dataset::from_matrix(x).unwrap().preprocess(PreprocessMode::Center).unwrap()
}

fn blob_benchmark() -> xmap_core::synthetic::Labeled {
    blobs(&BlobSpec::default()).expect("blob benchmark")
}

pub fn pca_correctness() -> Criterion {
    let mut c = Criterion::new("PCA correctness");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ortho, mut recon, mut eig) = (0.0_f64, 0.0_f64, 0.0_f64);
    for m in 0..20 {
        let rows = rng.random_range(3..=50);
        let cols = rng.random_range(2..=20);
        let d = centered(random_matrix(rows, cols, 1000 + m));
        let a = (rows - 1).min(cols);
        let model = match PcaModel::fit(&d, a) {
            Ok(model) => model,
            Err(e) => return c.error(format!("fit {rows}x{cols}"), e).clone(),
        };
        let p = model.loadings();
        ortho = ortho.max(max_abs((&p.t().dot(p) - &Array2::<f64>::eye(a)).iter().copied()));
        // scores are orthogonal too: off-diagonal of TᵀT relative to the column norms
        let tt = model.scores().t().dot(model.scores());
        for i in 0..a {
            for j in 0..a {
                if i != j {
                    ortho = ortho.max(tt[[i, j]].abs() / (tt[[i, i]] * tt[[j, j]]).sqrt());
                }
            }
        }
        let back = model.scores().dot(&p.t());
        let norm = d.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (&back - d.values()).iter().map(|v| v * v).sum::<f64>().sqrt();
        recon = recon.max(err / norm);
        let oracle = jacobi_eigenvalues(gram(d.values().view()).view());
        for (k, l) in model.eigenvalues().iter().enumerate() {
            eig = eig.max((l - oracle[k]).abs() / oracle[k]);
        }
    }
    c.check("orthogonality residual", ortho < 1e-8, format!("max {ortho:.2e} < 1e-8 over 20 matrices"));
    c.check("full-rank reconstruction", recon < 1e-8, format!("max relative error {recon:.2e} < 1e-8"));
    c.check("eigenvalues vs Jacobi on XᵀX", eig < 1e-8, format!("max relative error {eig:.2e} < 1e-8"));
    c
}

pub fn diagnostics_identities() -> Criterion {
    let mut c = Criterion::new("Diagnostics identities");
    let (mut t2_err, mut q_err, mut full_q) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut antisymmetric = true;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for m in 0..20 {
        let rows = rng.random_range(4..=50);
        let cols = rng.random_range(2..=20);
        let d = centered(random_matrix(rows, cols, 500 + m));
        let max = (rows - 1).min(cols);
        let full = PcaModel::fit(&d, max).unwrap();
        let model = full.truncated(rng.random_range(1..=max)).unwrap();
        let bundle = DiagnosticsBundle::compute(&model, &d).unwrap();
        for i in 0..rows {
            let t = model.scores().row(i);
            let t2 = hotelling_t2(&model, t).unwrap();
            let ci = t2_contributions(&model, t).unwrap();
            let csq: f64 = ci.iter().map(|v| v * v).sum();
            if t2 > 0.0 {
                t2_err = t2_err.max((csq - t2).abs() / t2);
            }
            let norm: f64 = d.values().row(i).iter().map(|v| v * v).sum();
            let ssq: f64 = t.iter().map(|v| v * v).sum();
            q_err = q_err.max((bundle.q_total[i] + ssq - norm).abs() / norm);
            let j = (i + 1) % rows;
            let cj = bundle.contributions.row(j);
            let ab = relative_t2_contributions(ci.view(), cj).unwrap();
            let ba = relative_t2_contributions(cj, ci.view()).unwrap();
            antisymmetric &= ab.iter().zip(&ba).all(|(x, y)| *x == -*y);
        }
        let full_bundle = DiagnosticsBundle::compute(&full, &d).unwrap();
        for i in 0..rows {
            let norm: f64 = d.values().row(i).iter().map(|v| v * v).sum();
            full_q = full_q.max(full_bundle.q_total[i] / norm.max(1.0));
        }
    }
    c.check("Σ c² = T²", t2_err < 1e-8, format!("max relative error {t2_err:.2e} < 1e-8"));
    c.check("Q + Σ t² = ||x̃||²", q_err < 1e-8, format!("max relative error {q_err:.2e} < 1e-8"));
    c.check("relative contributions antisymmetric", antisymmetric, "exact (bitwise) over all tested pairs");
    c.check("full-rank Q = 0", full_q < 1e-8, format!("max Q {full_q:.2e} < 1e-8"));
    c
}

pub fn tsne_calibration_and_gradient() -> Criterion {
    let mut c = Criterion::new("t-SNE calibration and gradient");
    let data = blob_benchmark();
    let x = data.dataset.preprocess(PreprocessMode::Center).unwrap().values().clone();
    match conditional_affinities(x.view(), 30.0) {
        Ok(cond) => {
            let worst = cond
                .p
                .rows()
                .into_iter()
                .map(|r| (perplexity(&r.to_vec()) - 30.0).abs())
                .fold(0.0, f64::max);
            c.check(
                "perplexity per row",
                worst <= 1e-3 && cond.infeasible_rows.is_empty(),
                format!("max |perp - 30| = {worst:.2e} <= 1e-3 over 300 rows, {} infeasible", cond.infeasible_rows.len()),
            );
        }
        Err(e) => {
            c.error("perplexity per row", e);
        }
    }

    let small = random_matrix(12, 4, 40);
    let p = symmetrize(&conditional_affinities(small.view(), 4.0).unwrap()).p;
    let mut grad_err = 0.0_f64;
    for state in 0..5 {
        let y = random_matrix(12, 2, 100 + state);
        let analytic = kl_gradient(p.view(), y.view());
        let kl = |flat: &[f64]| {
            let y = Array2::from_shape_vec((12, 2), flat.to_vec()).unwrap();
            kl_divergence(p.view(), low_dim_affinities(y.view()).0.view())
        };
        let numeric = central_gradient(kl, y.as_slice().unwrap(), 1e-5);
        grad_err = grad_err.max(max_relative_error(analytic.as_slice().unwrap(), &numeric));
    }
    c.check("KL gradient vs central differences", grad_err < 1e-5, format!("max relative error {grad_err:.2e} < 1e-5 at 5 states"));

    let (mut min_kl, mut self_kl) = (f64::INFINITY, 0.0_f64);
    for toy in 0..50 {
        let n = 3 + toy % 8;
        let p = symmetrize(&conditional_affinities(random_matrix(n, 3, toy as u64).view(), 2.0).unwrap()).p;
        let q = low_dim_affinities(random_matrix(n, 2, 900 + toy as u64).view()).0;
        min_kl = min_kl.min(kl_divergence(p.view(), q.view()));
        self_kl = self_kl.max(kl_divergence(p.view(), p.view()).abs());
    }
    c.check(
        "KL >= 0, zero iff q = p",
        min_kl > 0.0 && self_kl == 0.0,
        format!("min KL(p, q) over 50 toys {min_kl:.3e} > 0, KL(p, p) = {self_kl}"),
    );

    let cfg = TsneConfig::default();
    match tsne_embed(x.view(), &cfg) {
        Ok(e) => {
            let ee = cfg.early_exaggeration_epochs;
            let at_ee = e.trace.losses[ee];
            let last = e.trace.last().unwrap();
            c.check("final KL <= KL after early exaggeration", last <= at_ee, format!("{last:.4} <= {at_ee:.4}"));
            let tail = xmap_core::LossTrace { epochs: e.trace.epochs[ee..].to_vec(), losses: e.trace.losses[ee..].to_vec() };
            let rise = largest_rise(&tail.moving_average(10));
            c.check(
                "KL moving average (10 epochs) nonincreasing after early exaggeration",
                rise <= 0.0,
                format!("largest rise {rise:.2e} <= 0 on the blob benchmark"),
            );
        }
        Err(e) => {
            c.error("blob benchmark fit", e);
        }
    }
    c
}

pub fn umap_calibration_and_objective() -> Criterion {
    let mut c = Criterion::new("UMAP calibration and objective");
    let data = blob_benchmark();
    let x = data.dataset.preprocess(PreprocessMode::Center).unwrap().values().clone();
    let k = UmapConfig::default().n_neighbors;
    let nb = knn_graph(x.view(), k, Metric::Euclidean).unwrap();
    let g = umap_affinities(&nb);
    let target = (k as f64).log2();
    let worst = (0..nb.distances.len())
        .map(|i| {
            let s: f64 = nb.distances[i].iter().map(|&d| (-(d - g.rhos[i]).max(0.0) / g.sigmas[i]).exp()).sum();
            (s - target).abs()
        })
        .fold(0.0, f64::max);
    c.check("σ-search row sums", worst <= 1e-3, format!("max |sum - log2 {k}| = {worst:.2e} <= 1e-3 over 300 rows"));

    let fit = fit_ab(0.1, 1.0).unwrap();
    c.check_known("fit_ab RMS residual", fit.rms < 0.01, format!("{:.5} < 0.01 (least-squares optimum is about 0.0162)", fit.rms));
    let (ga, gb) = curve_grid_fit(0.1, 1.0);
    let (da, db) = ((fit.a - ga).abs(), (fit.b - gb).abs());
    c.check(
        "fit_ab vs grid-search oracle",
        da < 1e-2 && db < 1e-2,
        format!("a {:.4} vs {ga:.4}, b {:.4} vs {gb:.4}; diffs {da:.1e}, {db:.1e} < 1e-2", fit.a, fit.b),
    );

    let (a, b) = (fit.a, fit.b);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grad_err = 0.0_f64;
    for _ in 0..100 {
        let yi = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let yj = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let p: f64 = rng.random_range(0.0..1.0);
        let q = |y: &[f64]| q_of_sq((y[0] - yj[0]).powi(2) + (y[1] - yj[1]).powi(2), a, b);
        let analytic = pair_gradient(p, yi, yj, a, b);
        let numeric = central_gradient(|y| pair_cross_entropy(p, q(y)), &yi, 1e-6);
        grad_err = grad_err.max(max_relative_error(&analytic, &numeric));
    }
    c.check("sampled-objective gradients", grad_err < 1e-5, format!("max relative error {grad_err:.2e} < 1e-5 over 100 edges"));

    match UmapModel::fit(Arc::new(x), &UmapConfig::default()) {
        Ok(m) => {
            let rise = largest_rise(&m.trace.moving_average(10));
            c.check(
                "CE moving average (10 evaluations) nonincreasing",
                rise <= 0.0,
                format!("largest rise {rise:.2e} <= 0 over {} evaluations on the blob benchmark", m.trace.len()),
            );
        }
        Err(e) => {
            c.error("blob benchmark fit", e);
        }
    }
    c
}

pub fn voronoi() -> Criterion {
    let mut c = Criterion::new("Voronoi");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sites = Array2::from_shape_simple_fn((100, 2), || rng.random_range(0.0..1.0));
    let bbox = BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 1.0, max_y: 1.0 };
    let v = match compute_voronoi(sites.view(), bbox, 0) {
        Ok(v) => v,
        Err(e) => return c.error("construction", e).clone(),
    };
    let flat: Vec<[f64; 2]> = sites.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut agree = 0;
    for _ in 0..1000 {
        let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        if v.locate_cell(q).ok() == Some(nearest_site(&flat, q)) {
            agree += 1;
        }
    }
    c.check("enclosing cell = nearest site", agree == 1000, format!("{agree}/1000 queries"));
    let rel = (v.total_area() - bbox.area()).abs() / bbox.area();
    c.check("cells tile the box", rel < 1e-6, format!("relative area error {rel:.2e} < 1e-6"));
    c
}
