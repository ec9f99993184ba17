//! Adaptive density clustering of feature images.
//!
//! DBSCAN with a value-dependent reachability bound: two nonzero blocks
//! `p`, `q` are neighbours when
//!
//! ```text
//! dist(p, q) - eta * (f_p + f_q) <= sqrt(2)
//! ```
//!
//! where `eta` shrinks as the mean nonzero value of the frame grows. With
//! `eta = 0` this is plain DBSCAN over 8-connected grid cells.

use std::collections::VecDeque;
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::features::FeatureImage;

/// Pixels per feature cell along each axis.
pub const BLOCK_PIXELS: usize = 4;
const G_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeaturePoint {
    pub row: usize,
    pub col: usize,
    pub value: u8,
}

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl CellRect {
    pub fn of_cells(cells: &[(usize, usize)]) -> Option<Self> {
        let (&(r, c), rest) = cells.split_first()?;
        let mut rect = CellRect {
            row0: r,
            col0: c,
            row1: r,
            col1: c,
        };
        for &(r, c) in rest {
            rect.row0 = rect.row0.min(r);
            rect.row1 = rect.row1.max(r);
            rect.col0 = rect.col0.min(c);
            rect.col1 = rect.col1.max(c);
        }
        Some(rect)
    }

    /// The rectangle in pixel units.
    pub fn to_pixel_box(self) -> BoundingBox {
        let s = BLOCK_PIXELS as f64;
        BoundingBox::from_ltwh(
            self.col0 as f64 * s,
            self.row0 as f64 * s,
            (self.col1 - self.col0 + 1) as f64 * s,
            (self.row1 - self.row0 + 1) as f64 * s,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub label: usize,
    /// Member cells `(row, col)`, raster order.
    pub cells: Vec<(usize, usize)>,
    pub hull: CellRect,
}

impl Cluster {
    pub fn new(label: usize, mut cells: Vec<(usize, usize)>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        let hull = CellRect::of_cells(&cells).expect("cluster has at least one cell");
        Self { label, cells, hull }
    }

    pub fn pixel_box(&self) -> BoundingBox {
        self.hull.to_pixel_box()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub noise: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub min_pts: usize,
    /// Fixed `eta` instead of the per-frame value.
    pub eta_override: Option<f64>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_pts: 3,
            eta_override: None,
        }
    }
}

/// Reach factor from the mean nonzero feature value: `max(0, (1 - log8 mean) / 2)`,
/// held at 1/2 for means at or below 1.
pub fn eta(mean: f64) -> f64 {
    if mean <= 1.0 {
        return 0.5;
    }
    (0.5 * (1.0 - mean.ln() / 8f64.ln())).max(0.0)
}

/// `dist(p, q) - eta * (f_p + f_q)`.
pub fn reach_distance(p: &FeaturePoint, q: &FeaturePoint, eta: f64) -> f64 {
    let dr = p.row as f64 - q.row as f64;
    let dc = p.col as f64 - q.col as f64;
    (dr * dr + dc * dc).sqrt() - eta * (f64::from(p.value) + f64::from(q.value))
}

pub fn within_reach(p: &FeaturePoint, q: &FeaturePoint, eta: f64) -> bool {
    reach_distance(p, q, eta) <= SQRT_2 + G_TOLERANCE
}

/// Grid-bucketed point set.
struct PointIndex<'a> {
    points: &'a [FeaturePoint],
    rows: usize,
    cols: usize,
    cell: Vec<u32>,
    max_value: u8,
}

const EMPTY: u32 = u32::MAX;

impl<'a> PointIndex<'a> {
    fn new(points: &'a [FeaturePoint], rows: usize, cols: usize) -> Self {
        let mut cell = vec![EMPTY; rows * cols];
        for (i, p) in points.iter().enumerate() {
            cell[p.row * cols + p.col] = i as u32;
        }
        let max_value = points.iter().map(|p| p.value).max().unwrap_or(0);
        Self {
            points,
            rows,
            cols,
            cell,
            max_value,
        }
    }

    fn neighbours(&self, i: usize, eta: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let reach = SQRT_2 + eta * (f64::from(p.value) + f64::from(self.max_value));
        let r = (reach + G_TOLERANCE).floor() as usize;
        let (r0, r1) = (p.row.saturating_sub(r), (p.row + r).min(self.rows - 1));
        let (c0, c1) = (p.col.saturating_sub(r), (p.col + r).min(self.cols - 1));
        for row in r0..=r1 {
            for col in c0..=c1 {
                let j = self.cell[row * self.cols + col];
                if j != EMPTY && within_reach(p, &self.points[j as usize], eta) {
                    out.push(j as usize);
                }
            }
        }
    }
}

/// Points whose reach distance from `points[p]` is within sqrt(2); includes `p`.
pub fn neighborhood(p: usize, points: &[FeaturePoint], eta: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, q)| within_reach(&points[p], q, eta))
        .map(|(j, _)| j)
        .collect()
}

/// DBSCAN over `points` (raster order defines the scan and label order).
pub fn cluster_points(points: &[FeaturePoint], rows: usize, cols: usize, eta: f64, min_pts: usize) -> Clustering {
    const UNSEEN: i64 = -2;
    const NOISE: i64 = -1;
    if points.is_empty() {
        return Clustering::default();
    }
    let index = PointIndex::new(points, rows, cols);
    let mut label = vec![UNSEEN; points.len()];
    let mut next = 0i64;
    let mut nb = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..points.len() {
        if label[i] != UNSEEN {
            continue;
        }
        index.neighbours(i, eta, &mut nb);
        if nb.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let cid = next;
        next += 1;
        label[i] = cid;
        queue.extend(nb.iter().copied());
        while let Some(q) = queue.pop_front() {
            match label[q] {
                NOISE => label[q] = cid,
                UNSEEN => {
                    label[q] = cid;
                    index.neighbours(q, eta, &mut nb);
                    if nb.len() >= min_pts {
                        queue.extend(nb.iter().copied().filter(|&j| label[j] < 0));
                    }
                }
                _ => {}
            }
        }
    }
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); next as usize];
    let mut noise = Vec::new();
    for (p, &l) in points.iter().zip(&label) {
        if l >= 0 {
            members[l as usize].push((p.row, p.col));
        } else {
            noise.push((p.row, p.col));
        }
    }
    Clustering {
        clusters: members
            .into_iter()
            .enumerate()
            .map(|(l, cells)| Cluster::new(l, cells))
            .collect(),
        noise,
    }
}

/// Clusters the nonzero entries of a feature image.
pub fn cluster_frame(img: &FeatureImage, params: &ClusterParams) -> Clustering {
    let e = params.eta_override.unwrap_or_else(|| eta(img.mean));
    let points: Vec<FeaturePoint> = img
        .nonzero()
        .map(|(row, col, value)| FeaturePoint { row, col, value })
        .collect();
    cluster_points(&points, img.rows, img.cols, e, params.min_pts)
}

/// Integer line from `a` to `b` (inclusive), Bresenham.
pub fn raster_line(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// 3x3 closing (dilate then erode) of a binary mask, computed on a padded
/// canvas so the result always contains the input.
fn close3x3(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let pad = 2;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut canvas = vec![false; ph * pw];
    for r in 0..h {
        for c in 0..w {
            canvas[(r + pad) * pw + c + pad] = mask[r * w + c];
        }
    }
    let apply = |src: &[bool], want_any: bool| -> Vec<bool> {
        let mut dst = vec![false; ph * pw];
        for r in 0..ph {
            for c in 0..pw {
                let mut any = false;
                let mut all = true;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        let v = rr >= 0
                            && cc >= 0
                            && (rr as usize) < ph
                            && (cc as usize) < pw
                            && src[rr as usize * pw + cc as usize];
                        any |= v;
                        all &= v;
                    }
                }
                dst[r * pw + c] = if want_any { any } else { all };
            }
        }
        dst
    };
    let closed = apply(&apply(&canvas, true), false);
    (0..h * w).map(|i| closed[(i / w + pad) * pw + i % w + pad]).collect()
}

/// Joins several fragments into one region: lines from the joint centroid to
/// every member cell, then one 3x3 closing. Result is clipped to the grid.
pub fn fill_fragments(cells: &[(usize, usize)], rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let Some(rect) = CellRect::of_cells(cells) else {
        return Vec::new();
    };
    let n = cells.len() as f64;
    let cr = (cells.iter().map(|c| c.0 as f64).sum::<f64>() / n).round() as i64;
    let cc = (cells.iter().map(|c| c.1 as f64).sum::<f64>() / n).round() as i64;
    let (h, w) = (rect.row1 - rect.row0 + 1, rect.col1 - rect.col0 + 1);
    let mut mask = vec![false; h * w];
    let local = |r: i64, c: i64| (r as usize - rect.row0) * w + (c as usize - rect.col0);
    for &(r, c) in cells {
        for (lr, lc) in raster_line((cr, cc), (r as i64, c as i64)) {
            mask[local(lr, lc)] = true;
        }
    }
    let closed = close3x3(&mask, h, w);
    let mut out: Vec<(usize, usize)> = (0..h * w)
        .filter(|&i| closed[i])
        .map(|i| (rect.row0 + i / w, rect.col0 + i % w))
        .filter(|&(r, c)| r < rows && c < cols)
        .collect();
    out.sort_unstable();
    out
}

/// Merges clusters whose hull centers fall inside the same prior-frame box.
pub fn merge_with_prior_boxes(
    clusters: Vec<Cluster>,
    prior_boxes: &[BoundingBox],
    rows: usize,
    cols: usize,
) -> Vec<Cluster> {
    let mut current = clusters;
    for b in prior_boxes {
        let (inside, outside): (Vec<Cluster>, Vec<Cluster>) = current.into_iter().partition(|c| {
            let pb = c.pixel_box();
            b.contains_point(pb.cx, pb.cy)
        });
        if inside.len() < 2 {
            current = outside.into_iter().chain(inside).collect();
        } else {
            let label = inside.iter().map(|c| c.label).min().unwrap();
            let cells: Vec<(usize, usize)> = inside.iter().flat_map(|c| c.cells.iter().copied()).collect();
            let merged = Cluster::new(label, fill_fragments(&cells, rows, cols));
            current = outside;
            current.push(merged);
        }
        current.sort_by_key(|c| c.label);
    }
    current
}

/// Tight pixel-unit box per cluster.
pub fn initial_boxes(clusters: &[Cluster]) -> Vec<BoundingBox> {
    clusters.iter().map(Cluster::pixel_box).collect()
}

/// Cluster dump rows `frame,label,row,col`; noise uses label -1.
pub fn clustering_csv_rows(frame: usize, c: &Clustering, out: &mut String) {
    for cl in &c.clusters {
        for &(r, col) in &cl.cells {
            let _ = writeln!(out, "{frame},{},{r},{col}", cl.label);
        }
    }
    for &(r, col) in &c.noise {
        let _ = writeln!(out, "{frame},-1,{r},{col}");
    }
}
