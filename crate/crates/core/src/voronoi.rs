//! Voronoi tessellation of the embedding plane, clipped to a padded
//! bounding box.
//!
//! Cells are the bounding box cut by the bisector half-planes of each site's
//! Delaunay neighbors; the triangulation uses exact orientation and
//! in-circle predicates.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};

pub const BBOX_PADDING: f64 = 0.05;
/// Duplicate sites are moved by this fraction of the bbox diagonal.
pub const JITTER_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    /// Extent of `points`, padded by `BBOX_PADDING` of the extent per side.
    /// A zero extent along an axis is padded by 0.5 instead.
    pub fn around(points: ArrayView2<f64>) -> BoundingBox {
        let mut b = BoundingBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points.rows() {
            b.min_x = b.min_x.min(p[0]);
            b.max_x = b.max_x.max(p[0]);
            b.min_y = b.min_y.min(p[1]);
            b.max_y = b.max_y.max(p[1]);
        }
        let pad = |lo: f64, hi: f64| if hi > lo { BBOX_PADDING * (hi - lo) } else { 0.5 };
        let (px, py) = (pad(b.min_x, b.max_x), pad(b.min_y, b.max_y));
        BoundingBox { min_x: b.min_x - px, min_y: b.min_y - py, max_x: b.max_x + px, max_y: b.max_y + py }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min_x && p[0] <= self.max_x && p[1] >= self.min_y && p[1] <= self.max_y
    }

    fn polygon(&self) -> Vec<[f64; 2]> {
        vec![
            [self.min_x, self.min_y],
            [self.max_x, self.min_y],
            [self.max_x, self.max_y],
            [self.min_x, self.max_y],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiDiagram {
    /// Original site coordinates, one row per sample.
    pub sites: Vec<[f64; 2]>,
    /// Counterclockwise cell polygon of each site.
    pub cells: Vec<Vec<[f64; 2]>>,
    pub bbox: BoundingBox,
}

struct Site {
    position: Point2<f64>,
    index: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.position
    }
}

/// Tessellates `sites` (I×2) inside `bbox`. `seed` drives the jitter
/// applied to exact duplicates.
pub fn compute_voronoi(sites: ArrayView2<f64>, bbox: BoundingBox, seed: u64) -> Result<VoronoiDiagram> {
    let n = sites.nrows();
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    if sites.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: sites.ncols() });
    }
    if sites.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("site coordinates must be finite".into()));
    }
    let original: Vec<[f64; 2]> = sites.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let tess = jitter_duplicates(&original, bbox.diagonal() * JITTER_SCALE, seed);

    let neighbors = delaunay_neighbors(&tess).unwrap_or_else(|| {
        // all pairs give the same cells, just more slowly
        (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
    });

    let cells = (0..n)
        .map(|i| {
            let mut cell = bbox.polygon();
            for &j in &neighbors[i] {
                cell = clip_half_plane(&cell, tess[i], tess[j]);
                if cell.is_empty() {
                    break;
                }
            }
            cell
        })
        .collect();
    Ok(VoronoiDiagram { sites: original, cells, bbox })
}

fn jitter_duplicates(points: &[[f64; 2]], radius: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut out = points.to_vec();
    for (i, p) in points.iter().enumerate() {
        // +0.0 and -0.0 are the same site
        let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
        if seen.insert(key, i).is_some() {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = radius.max(f64::EPSILON * p[0].abs().max(p[1].abs()).max(1.0));
            out[i] = [p[0] + r * angle.cos(), p[1] + r * angle.sin()];
        }
    }
    out
}

/// Delaunay neighbor lists, sorted. `None` if any site was rejected or
/// merged by the triangulation.
fn delaunay_neighbors(points: &[[f64; 2]]) -> Option<Vec<Vec<usize>>> {
    let mut tri: DelaunayTriangulation<Site> = DelaunayTriangulation::new();
    for (index, p) in points.iter().enumerate() {
        tri.insert(Site { position: Point2::new(p[0], p[1]), index }).ok()?;
    }
    if tri.num_vertices() != points.len() {
        return None;
    }
    let mut out = vec![Vec::new(); points.len()];
    for v in tri.vertices() {
        let list = &mut out[v.data().index];
        for e in v.out_edges() {
            list.push(e.to().data().index);
        }
        list.sort_unstable();
    }
    Some(out)
}

/// Keeps the part of the convex polygon closer to `site` than to `other`.
fn clip_half_plane(poly: &[[f64; 2]], site: [f64; 2], other: [f64; 2]) -> Vec<[f64; 2]> {
    let normal = [other[0] - site[0], other[1] - site[1]];
    let mid = [(site[0] + other[0]) / 2.0, (site[1] + other[1]) / 2.0];
    let side = |p: [f64; 2]| (p[0] - mid[0]) * normal[0] + (p[1] - mid[1]) * normal[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Shoelace area; positive for counterclockwise vertex order.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|k| {
            let (p, q) = (poly[k], poly[(k + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl VoronoiDiagram {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Nearest site to `query`, ties going to the lower index.
    pub fn locate_cell(&self, query: [f64; 2]) -> Result<usize> {
        if !self.bbox.contains(query) {
            return Err(Error::OutsideBbox { x: query[0], y: query[1] });
        }
        let mut best = (f64::INFINITY, 0);
        for (i, s) in self.sites.iter().enumerate() {
            let d = (s[0] - query[0]).powi(2) + (s[1] - query[1]).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| polygon_area(c)).sum()
    }

    pub fn sites_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.sites.len(), 2), |(i, k)| self.sites[i][k])
    }

    /// Standalone SVG with one filled path per cell (in site order) and a
    /// dot per site. The y axis points up.
    pub fn to_svg(&self, fills: &[String], width_px: f64) -> Result<String> {
        if fills.len() != self.cells.len() {
            return Err(Error::DimensionMismatch { expected: self.cells.len(), found: fills.len() });
        }
        let b = &self.bbox;
        let scale = width_px / b.width();
        let height_px = b.height() * scale;
        let px = |p: &[f64; 2]| ((p[0] - b.min_x) * scale, (b.max_y - p[1]) * scale);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.3}" height="{height_px:.3}" viewBox="0 0 {width_px:.3} {height_px:.3}">"#
        );
        for (i, (cell, fill)) in self.cells.iter().zip(fills).enumerate() {
            if cell.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (k, p) in cell.iter().enumerate() {
                let (x, y) = px(p);
                let _ = write!(d, "{}{x:.3},{y:.3}", if k == 0 { "M" } else { " L" });
            }
            let _ = writeln!(
                s,
                r##"<path data-site="{i}" d="{d} Z" fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>"##
            );
        }
        for site in &self.sites {
            let (x, y) = px(site);
            let _ = writeln!(s, r##"<circle cx="{x:.3}" cy="{y:.3}" r="1.5" fill="#000000"/>"##);
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}
