//! Kalman multi-object tracking over cluster boxes.

pub mod kalman;
pub mod refine;
pub mod tracker;

use std::fmt::Write as _;

pub use kalman::{KalmanModel, KalmanParams, KalmanState, Prediction};
pub use refine::{classify, fit_ratios, refine, RefineCase, RefineInput, Refinement, Thresholds};
pub use tracker::{match_boxes, mean_size_box, Track, TrackOutput, TrackStatus, Tracker, TrackerConfig};

use crate::bbox::BoundingBox;
use crate::clustering::{cluster_frame, initial_boxes, merge_with_prior_boxes, Cluster};
use crate::features::FeatureImage;

pub const TRAJECTORY_HEADER: &str = "frame,id,left,top,width,height";

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct TrajectoryError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub frame: usize,
    pub id: u64,
    pub bbox: BoundingBox,
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut s = String::with_capacity(32 * (rows.len() + 1));
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for r in rows {
        let b = &r.bbox;
        let _ = writeln!(
            s,
            "{},{},{:.3},{:.3},{:.3},{:.3}",
            r.frame,
            r.id,
            b.left(),
            b.top(),
            b.w,
            b.h
        );
    }
    s
}

/// Parses trajectory rows; the header line is optional.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>, TrajectoryError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let err = |msg: &str| TrajectoryError {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        let frame = f[0].parse().map_err(|_| err("bad frame"))?;
        let id = f[1].parse().map_err(|_| err("bad id"))?;
        let mut v = [0.0; 4];
        for (k, x) in v.iter_mut().enumerate() {
            *x = f[k + 2].parse().map_err(|_| err("bad coordinate"))?;
        }
        if v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(err("non-positive size"));
        }
        rows.push(TrajectoryRow {
            frame,
            id,
            bbox: BoundingBox::from_ltwh(v[0], v[1], v[2], v[3]),
        });
    }
    Ok(rows)
}

/// Per-frame clustering plus tracking; the previous frame's output boxes
/// guide the fragment merge.
#[derive(Debug, Clone)]
pub struct MotionTracker {
    tracker: Tracker,
    previous: Vec<BoundingBox>,
    clusters: Vec<Cluster>,
}

impl MotionTracker {
    pub fn new(width: f64, height: f64, config: TrackerConfig) -> Self {
        Self {
            tracker: Tracker::new(width, height, config),
            previous: Vec::new(),
            clusters: Vec::new(),
        }
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Motion regions of the last processed frame, after fragment merging.
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn process(&mut self, img: &FeatureImage) -> Vec<TrajectoryRow> {
        let clustering = cluster_frame(img, &self.tracker.config().cluster);
        self.clusters = merge_with_prior_boxes(clustering.clusters, &self.previous, img.rows, img.cols);
        let boxes = initial_boxes(&self.clusters);
        let out = self.tracker.step(&boxes, img);
        self.previous = out.iter().map(|o| o.bbox).collect();
        out.into_iter()
            .map(|o| TrajectoryRow {
                frame: img.frame_index,
                id: o.id,
                bbox: o.bbox,
            })
            .collect()
    }
}

/// Tracks a whole feature-image sequence.
pub fn track_sequence(images: &[FeatureImage], width: f64, height: f64, config: &TrackerConfig) -> Vec<TrajectoryRow> {
    let mut mt = MotionTracker::new(width, height, config.clone());
    images.iter().flat_map(|img| mt.process(img)).collect()
}
