//! Segmentation and tracking metrics, curves and ground-truth files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::overlap_rate;
use crate::clustering::BLOCK_PIXELS;
use crate::features::{FeatureImage, DNRC_CAP};
use crate::tracking::{parse_trajectory_csv, trajectory_csv, TrajectoryError, TrajectoryRow};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("mask size {got:?} does not match {want:?}")]
    DimensionMismatch { got: (usize, usize), want: (usize, usize) },
    #[error("bad PGM: {0}")]
    Pgm(&'static str),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Replicates each cell into a `factor x factor` square.
    pub fn upsample(&self, factor: usize) -> Mask {
        let mut out = Mask::new(self.width * factor, self.height * factor);
        for y in 0..out.height {
            for x in 0..out.width {
                out.data[y * out.width + x] = self.get(x / factor, y / factor);
            }
        }
        out
    }

    /// Block mask of the cells listed, at feature-grid resolution.
    pub fn from_cells(cols: usize, rows: usize, cells: impl IntoIterator<Item = (usize, usize)>) -> Mask {
        let mut m = Mask::new(cols, rows);
        for (r, c) in cells {
            m.set(c, r, true);
        }
        m
    }

    /// Binary P5 with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| if v { 255u8 } else { 0 }));
        out
    }

    /// Reads a binary P5 image; any nonzero pixel is foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Mask, EvalError> {
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(EvalError::Pgm("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| EvalError::Pgm("header text"))?);
        }
        if fields[0] != "P5" {
            return Err(EvalError::Pgm("not P5"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| EvalError::Pgm("header number"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(EvalError::Pgm("maxval must be 1..=255"));
        }
        let data = bytes
            .get(pos + 1..pos + 1 + width * height)
            .ok_or(EvalError::Pgm("truncated data"))?;
        Ok(Mask {
            width,
            height,
            data: data.iter().map(|&v| v != 0).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SegMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |n: u64, d: u64| if d == 0 { 1.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

fn seg_counts(pred: &Mask, gt: &Mask) -> Result<(u64, u64, u64), EvalError> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(EvalError::DimensionMismatch {
            got: (pred.width, pred.height),
            want: (gt.width, gt.height),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok((tp, fp, fn_))
}

pub fn seg_metrics(pred: &Mask, gt: &Mask) -> Result<SegMetrics, EvalError> {
    let (tp, fp, fn_) = seg_counts(pred, gt)?;
    Ok(SegMetrics::from_counts(tp, fp, fn_))
}

/// Pixel counts pooled over a sequence of frame pairs.
pub fn seg_metrics_sequence(pred: &[Mask], gt: &[Mask]) -> Result<SegMetrics, EvalError> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gt) {
        let c = seg_counts(p, g)?;
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
    }
    Ok(SegMetrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MotMetrics {
    pub mota: f64,
    pub motp: f64,
    pub gt: u64,
    pub matches: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    /// Frames where an identity switch was counted.
    pub id_switch_frames: Vec<usize>,
}

pub const MOT_IOU_GATE: f64 = 0.5;

fn by_frame(rows: &[TrajectoryRow]) -> BTreeMap<usize, Vec<TrajectoryRow>> {
    let mut m: BTreeMap<usize, Vec<TrajectoryRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.frame).or_default().push(*r);
    }
    m
}

/// CLEAR-MOT accuracy and precision with a 0.5 overlap gate. Previous
/// correspondences are kept while still above the gate; the rest are matched
/// greedily by descending overlap.
pub fn mot_metrics(pred: &[TrajectoryRow], gt: &[TrajectoryRow]) -> MotMetrics {
    let pf = by_frame(pred);
    let gf = by_frame(gt);
    let mut frames: Vec<usize> = pf.keys().chain(gf.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();
    let empty = Vec::new();
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut m = MotMetrics::default();
    let mut iou_sum = 0.0;
    for f in frames {
        let ps = pf.get(&f).unwrap_or(&empty);
        let gs = gf.get(&f).unwrap_or(&empty);
        let mut gt_used = vec![false; gs.len()];
        let mut pred_used = vec![false; ps.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (gi, g) in gs.iter().enumerate() {
            if let Some(&pid) = last.get(&g.id) {
                if let Some(pi) = ps.iter().position(|p| p.id == pid) {
                    let r = overlap_rate(&g.bbox, &ps[pi].bbox);
                    if r >= MOT_IOU_GATE && !pred_used[pi] {
                        gt_used[gi] = true;
                        pred_used[pi] = true;
                        pairs.push((gi, pi, r));
                    }
                }
            }
        }
        let mut cand = Vec::new();
        for (gi, g) in gs.iter().enumerate().filter(|(gi, _)| !gt_used[*gi]) {
            for (pi, p) in ps.iter().enumerate().filter(|(pi, _)| !pred_used[*pi]) {
                let r = overlap_rate(&g.bbox, &p.bbox);
                if r >= MOT_IOU_GATE {
                    cand.push((gi, pi, r));
                }
            }
        }
        cand.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        for (gi, pi, r) in cand {
            if !gt_used[gi] && !pred_used[pi] {
                gt_used[gi] = true;
                pred_used[pi] = true;
                pairs.push((gi, pi, r));
            }
        }
        let mut switched = false;
        for &(gi, pi, r) in &pairs {
            let (gid, pid) = (gs[gi].id, ps[pi].id);
            if last.get(&gid).is_some_and(|&prev| prev != pid) {
                m.id_switches += 1;
                switched = true;
            }
            last.insert(gid, pid);
            iou_sum += r;
        }
        if switched {
            m.id_switch_frames.push(f);
        }
        m.gt += gs.len() as u64;
        m.matches += pairs.len() as u64;
        m.false_negatives += (gs.len() - pairs.len()) as u64;
        m.false_positives += (ps.len() - pairs.len()) as u64;
    }
    let errors = (m.false_negatives + m.false_positives + m.id_switches) as f64;
    m.mota = 1.0 - errors / m.gt.max(1) as f64;
    m.motp = if m.matches == 0 {
        0.0
    } else {
        iou_sum / m.matches as f64
    };
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,value\n");
        for (t, v) in &self.points {
            let _ = writeln!(s, "{t},{v}");
        }
        s
    }

    pub fn value_at(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-9)
            .map(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessPrecision {
    pub success: Curve,
    pub auc: f64,
    pub precision: Curve,
    pub pre20: f64,
}

/// Assigns each ground-truth id the predicted id it overlaps best most often.
pub fn majority_mapping(pred: &[TrajectoryRow], gt: &[TrajectoryRow]) -> HashMap<u64, u64> {
    let pf = by_frame(pred);
    let mut votes: HashMap<u64, BTreeMap<u64, usize>> = HashMap::new();
    for g in gt {
        let best = pf.get(&g.frame).and_then(|ps| {
            ps.iter()
                .map(|p| (p.id, overlap_rate(&p.bbox, &g.bbox)))
                .filter(|&(_, r)| r > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        });
        if let Some((pid, _)) = best {
            *votes.entry(g.id).or_default().entry(pid).or_default() += 1;
        }
    }
    votes
        .into_iter()
        .map(|(gid, v)| {
            let pid = v
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&p, _)| p)
                .unwrap();
            (gid, pid)
        })
        .collect()
}

/// Success curve over overlap thresholds 0..1 (step 0.01) and precision
/// curve over centroid-error thresholds 0..50 pixels. A frame succeeds at
/// threshold `t` when its overlap is positive and at least `t`. Every
/// ground-truth (id, frame) pair is one sample; missing predictions fail.
pub fn success_precision(pred: &[TrajectoryRow], gt: &[TrajectoryRow]) -> SuccessPrecision {
    let map = majority_mapping(pred, gt);
    let index: HashMap<(usize, u64), &TrajectoryRow> = pred.iter().map(|p| ((p.frame, p.id), p)).collect();
    let samples: Vec<(f64, f64)> = gt
        .iter()
        .map(|g| match map.get(&g.id).and_then(|pid| index.get(&(g.frame, *pid))) {
            Some(p) => (overlap_rate(&p.bbox, &g.bbox), p.bbox.centroid_distance(&g.bbox)),
            None => (0.0, f64::INFINITY),
        })
        .collect();
    let n = samples.len().max(1) as f64;
    let success = Curve {
        points: (0..=100)
            .map(|i| {
                let t = i as f64 / 100.0;
                let ok = samples.iter().filter(|(r, _)| *r > 0.0 && *r >= t - 1e-12).count();
                (t, ok as f64 / n)
            })
            .collect(),
    };
    let precision = Curve {
        points: (0..=50)
            .map(|rho| {
                let ok = samples.iter().filter(|(_, d)| *d <= rho as f64).count();
                (rho as f64, ok as f64 / n)
            })
            .collect(),
    };
    let auc = success.points.iter().map(|p| p.1).sum::<f64>() / success.points.len() as f64;
    let pre20 = precision.value_at(20.0).unwrap_or(0.0);
    SuccessPrecision {
        success,
        auc,
        precision,
        pre20,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnrcHistogram {
    /// Block counts per value, values of 16 and above pooled in the last bin.
    pub counts: Vec<u64>,
    /// Moving blocks per value.
    pub motion: Vec<u64>,
}

impl DnrcHistogram {
    pub fn probability(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .zip(&self.motion)
            .map(|(&c, &m)| (c > 0).then(|| m as f64 / c as f64))
            .collect()
    }

    /// Bins that actually hold blocks.
    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Histogram of feature values against block-resolution motion masks.
pub fn dnrc_histogram(features: &[FeatureImage], gt_blocks: &[Mask]) -> Result<DnrcHistogram, EvalError> {
    let bins = usize::from(DNRC_CAP) + 1;
    let mut h = DnrcHistogram {
        counts: vec![0; bins],
        motion: vec![0; bins],
    };
    for (img, m) in features.iter().zip(gt_blocks) {
        if (m.width, m.height) != (img.cols, img.rows) {
            return Err(EvalError::DimensionMismatch {
                got: (m.width, m.height),
                want: (img.cols, img.rows),
            });
        }
        for r in 0..img.rows {
            for c in 0..img.cols {
                let v = usize::from(img.get(r, c)).min(bins - 1);
                h.counts[v] += 1;
                if m.get(c, r) {
                    h.motion[v] += 1;
                }
            }
        }
    }
    Ok(h)
}

/// Pixel-resolution mask of the nonzero cells of a feature image.
pub fn feature_mask(img: &FeatureImage) -> Mask {
    Mask::from_cells(img.cols, img.rows, img.nonzero().map(|(r, c, _)| (r, c))).upsample(BLOCK_PIXELS)
}

/// Ground truth for a sequence: identified boxes and per-frame pixel masks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<TrajectoryRow>,
    pub masks: Vec<Mask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct GtMeta {
    width: usize,
    height: usize,
    frames: usize,
}

pub const GT_BOXES_FILE: &str = "boxes.csv";
pub const GT_META_FILE: &str = "meta.json";
pub const GT_MASK_DIR: &str = "masks";

pub fn mask_file_name(frame: usize) -> String {
    format!("{frame:05}.pgm")
}

impl GroundTruth {
    /// Writes `meta.json`, `boxes.csv` and `masks/NNNNN.pgm`.
    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir.join(GT_MASK_DIR))?;
        let meta = GtMeta {
            width: self.width,
            height: self.height,
            frames: self.masks.len(),
        };
        std::fs::write(dir.join(GT_META_FILE), serde_json::to_string_pretty(&meta)?)?;
        std::fs::write(dir.join(GT_BOXES_FILE), trajectory_csv(&self.boxes))?;
        for (i, m) in self.masks.iter().enumerate() {
            std::fs::write(dir.join(GT_MASK_DIR).join(mask_file_name(i)), m.to_pgm())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let meta: GtMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(GT_META_FILE))?)?;
        let boxes = parse_trajectory_csv(&std::fs::read_to_string(dir.join(GT_BOXES_FILE))?)?;
        let masks = load_masks(&dir.join(GT_MASK_DIR), meta.frames)?;
        Ok(Self {
            width: meta.width,
            height: meta.height,
            boxes,
            masks,
        })
    }
}

pub fn load_masks(dir: &Path, frames: usize) -> Result<Vec<Mask>, EvalError> {
    (0..frames)
        .map(|i| Mask::from_pgm(&std::fs::read(dir.join(mask_file_name(i)))?))
        .collect()
}

pub fn save_masks(dir: &Path, masks: &[Mask]) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    for (i, m) in masks.iter().enumerate() {
        std::fs::write(dir.join(mask_file_name(i)), m.to_pgm())?;
    }
    Ok(())
}

/// One metrics record per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub sequence: String,
    pub frames: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegMetrics>,
    pub mot: MotMetrics,
    pub auc: f64,
    pub pre20: f64,
}

pub fn evaluate_sequence(
    name: &str,
    pred: &[TrajectoryRow],
    pred_masks: Option<&[Mask]>,
    gt: &GroundTruth,
) -> Result<(SequenceMetrics, SuccessPrecision), EvalError> {
    let segmentation = pred_masks.map(|pm| seg_metrics_sequence(pm, &gt.masks)).transpose()?;
    let sp = success_precision(pred, &gt.boxes);
    let m = SequenceMetrics {
        sequence: name.to_string(),
        frames: gt.masks.len(),
        segmentation,
        mot: mot_metrics(pred, &gt.boxes),
        auc: sp.auc,
        pre20: sp.pre20,
    };
    Ok((m, sp))
}

pub fn write_jsonl(records: &[SequenceMetrics], mut w: impl std::io::Write) -> Result<(), EvalError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
