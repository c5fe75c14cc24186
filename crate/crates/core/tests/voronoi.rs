use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmap_core::voronoi::{point_in_polygon, polygon_area};
use xmap_core::{compute_voronoi, BoundingBox, Error};
use xmap_oracles::nearest_site;

fn uniform_sites(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, 2), || rng.random_range(0.0..1.0))
}

#[test]
fn located_cells_agree_with_nearest_site() {
    let sites = uniform_sites(100, 1);
    let bbox = BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 1.0, max_y: 1.0 };
    let v = compute_voronoi(sites.view(), bbox, 0).unwrap();
    let flat: Vec<[f64; 2]> = sites.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let want = nearest_site(&flat, q);
        assert_eq!(v.locate_cell(q).unwrap(), want);
        // the polygon itself must contain the query, not just the lookup
        assert!(point_in_polygon(q, &v.cells[want]));
    }
    let rel = (v.total_area() - bbox.area()).abs() / bbox.area();
    assert!(rel < 1e-6, "tiling error {rel}");
}

#[test]
fn queries_outside_the_box_are_rejected() {
    let sites = uniform_sites(10, 3);
    let bbox = BoundingBox::around(sites.view());
    let v = compute_voronoi(sites.view(), bbox, 0).unwrap();
    assert!(matches!(v.locate_cell([bbox.max_x + 1.0, 0.5]), Err(Error::OutsideBbox { .. })));
}

#[test]
fn grid_sites_produce_square_cells() {
    let mut sites = Array2::zeros((16, 2));
    for i in 0..4 {
        for j in 0..4 {
            sites[[i * 4 + j, 0]] = i as f64 + 0.5;
            sites[[i * 4 + j, 1]] = j as f64 + 0.5;
        }
    }
    let bbox = BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 4.0, max_y: 4.0 };
    let v = compute_voronoi(sites.view(), bbox, 0).unwrap();
    for cell in &v.cells {
        assert!((polygon_area(cell) - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cells_tile_the_box_and_contain_their_sites(n in 1usize..80, seed in any::<u64>(), dup in 0usize..4) {
        let mut sites = uniform_sites(n, seed);
        // force a few exact duplicates
        for d in 0..dup.min(n.saturating_sub(1)) {
            let src = sites.row(d).to_owned();
            sites.row_mut(n - 1 - d).assign(&src);
        }
        let bbox = BoundingBox::around(sites.view());
        let v = compute_voronoi(sites.view(), bbox, seed).unwrap();
        prop_assert_eq!(v.cells.len(), n);
        let rel = (v.total_area() - bbox.area()).abs() / bbox.area();
        prop_assert!(rel < 1e-6, "tiling error {}", rel);
        for (i, cell) in v.cells.iter().enumerate() {
            prop_assert!(cell.len() >= 3);
            prop_assert!(polygon_area(cell) > 0.0);
            prop_assert_eq!(v.sites[i], [sites[[i, 0]], sites[[i, 1]]]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..50 {
            let q = [rng.random_range(bbox.min_x..bbox.max_x), rng.random_range(bbox.min_y..bbox.max_y)];
            let found = v.locate_cell(q).unwrap();
            prop_assert_eq!(found, nearest_site(&v.sites, q));
        }
    }

    #[test]
    fn svg_is_deterministic(n in 2usize..30, seed in any::<u64>()) {
        let sites = uniform_sites(n, seed);
        let v = compute_voronoi(sites.view(), BoundingBox::around(sites.view()), 0).unwrap();
        let fills: Vec<String> = (0..n).map(|i| format!("#{:06x}", i * 4099)).collect();
        prop_assert_eq!(v.to_svg(&fills, 400.0).unwrap(), v.to_svg(&fills, 400.0).unwrap());
    }
}
