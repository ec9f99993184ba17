//! Multi-object tracker: predict, match, refine or resolve occlusion, update.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::kalman::{KalmanModel, KalmanParams, KalmanState};
use super::refine::{refine, RefineInput, Thresholds};
use crate::bbox::{overlap_rate, BoundingBox};
use crate::clustering::{cluster_frame, ClusterParams, BLOCK_PIXELS};
use crate::features::{build_feature_image, FeatureImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub kalman: KalmanParams,
    pub thresholds: Thresholds,
    pub confirm_threshold: usize,
    pub max_lost: usize,
    /// Pixels from the frame edge that count as entering or leaving.
    pub border_margin: f64,
    /// Relative area change that counts as motion along the view axis.
    pub z_motion_ratio: f64,
    /// History length for mean-size boxes and area trends.
    pub mu: usize,
    pub cluster: ClusterParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kalman: KalmanParams::default(),
            thresholds: Thresholds::default(),
            confirm_threshold: 3,
            max_lost: 10,
            border_margin: 8.0,
            z_motion_ratio: 0.2,
            mu: 5,
            cluster: ClusterParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    pub status: TrackStatus,
    /// Frames with a match, counting the creating frame.
    pub hits: usize,
    pub lost_frames: usize,
    /// Prior boxes of the last `mu` frames, newest last.
    pub priors: VecDeque<BoundingBox>,
    /// Predicted velocities matching `priors`.
    pub velocities: VecDeque<[f64; 4]>,
    /// Areas of matched measurements, newest last.
    pub areas: VecDeque<f64>,
    /// Final boxes of the last `mu` frames, newest last.
    pub history: VecDeque<BoundingBox>,
}

impl Track {
    fn new(id: u64, b: BoundingBox, model: &KalmanModel) -> Self {
        Self {
            id,
            state: KalmanState::from_box(&b, model),
            status: TrackStatus::Tentative,
            hits: 1,
            lost_frames: 0,
            priors: VecDeque::new(),
            velocities: VecDeque::new(),
            areas: VecDeque::from([b.area()]),
            history: VecDeque::from([b]),
        }
    }

    pub fn last_box(&self) -> BoundingBox {
        *self.history.back().expect("track history is never empty")
    }

    pub fn prior(&self) -> BoundingBox {
        self.priors.back().copied().unwrap_or_else(|| self.state.bbox())
    }

    pub fn mean_size_box(&self) -> BoundingBox {
        let priors: Vec<BoundingBox> = self.priors.iter().copied().collect();
        let velocities: Vec<[f64; 4]> = self.velocities.iter().copied().collect();
        mean_size_box(&priors, &velocities)
    }
}

fn push_capped<T>(q: &mut VecDeque<T>, v: T, cap: usize) {
    q.push_back(v);
    while q.len() > cap.max(1) {
        q.pop_front();
    }
}

/// Box at the newest prior centroid whose size is the mean size advanced by
/// the mean size rate (`vw`, `vh`), both over the given history. Sizes are
/// kept at least one pixel.
pub fn mean_size_box(priors: &[BoundingBox], velocities: &[[f64; 4]]) -> BoundingBox {
    let last = priors.last().expect("mean size box needs history");
    let n = priors.len() as f64;
    let w = priors.iter().map(|b| b.w).sum::<f64>() / n;
    let h = priors.iter().map(|b| b.h).sum::<f64>() / n;
    let (vw, vh) = if velocities.is_empty() {
        (0.0, 0.0)
    } else {
        let m = velocities.len() as f64;
        (
            velocities.iter().map(|v| v[2]).sum::<f64>() / m,
            velocities.iter().map(|v| v[3]).sum::<f64>() / m,
        )
    };
    BoundingBox::new(last.cx, last.cy, (w + vw).max(1.0), (h + vh).max(1.0))
}

/// One-to-one assignment by descending overlap, ties to the lower track id
/// and then the lower box index. Returns the box index per track.
pub fn match_boxes(priors: &[(u64, BoundingBox)], boxes: &[BoundingBox]) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (t, (id, p)) in priors.iter().enumerate() {
        for (b, bx) in boxes.iter().enumerate() {
            let r = overlap_rate(p, bx);
            if r > 0.0 {
                pairs.push((r, *id, t, b));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
    let mut track_of_box = vec![false; boxes.len()];
    let mut out = vec![None; priors.len()];
    for (_, _, t, b) in pairs {
        if out[t].is_none() && !track_of_box[b] {
            out[t] = Some(b);
            track_of_box[b] = true;
        }
    }
    out
}

/// Output box of a confirmed, matched track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    model: KalmanModel,
    width: f64,
    height: f64,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(width: f64, height: f64, config: TrackerConfig) -> Self {
        let model = KalmanModel::new(&config.kalman);
        Self {
            config,
            model,
            width,
            height,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    fn at_border(&self, b: &BoundingBox) -> bool {
        let m = self.config.border_margin;
        b.left() <= m || b.top() <= m || b.right() >= self.width - m || b.bottom() >= self.height - m
    }

    fn area_trend(&self, areas: &VecDeque<f64>) -> (bool, bool) {
        let r = self.config.z_motion_ratio;
        let a: Vec<f64> = areas.iter().copied().collect();
        if a.len() < 2 {
            return (false, false);
        }
        let (first, last) = (a[0], a[a.len() - 1]);
        let shrinking = a.windows(2).all(|w| w[1] <= w[0]) && last <= (1.0 - r) * first;
        let growing = a.windows(2).all(|w| w[1] >= w[0]) && last >= (1.0 + r) * first;
        (shrinking, growing)
    }

    /// Measurement for a track sharing its box with others: re-cluster the
    /// features inside the shared box and the mean-size box, and trust the
    /// largest cluster only when it agrees with the prediction.
    pub fn occlusion_measurement(&self, track: &Track, shared: &BoundingBox, features: &FeatureImage) -> BoundingBox {
        let b_v = track.mean_size_box();
        let half = BLOCK_PIXELS as f64 / 2.0;
        let mut values = vec![0u8; features.rows * features.cols];
        for (r, c, v) in features.nonzero() {
            let x = (c * BLOCK_PIXELS) as f64 + half;
            let y = (r * BLOCK_PIXELS) as f64 + half;
            if shared.contains_point(x, y) || b_v.contains_point(x, y) {
                values[r * features.cols + c] = v;
            }
        }
        let masked = build_feature_image(features.frame_index, features.rows, features.cols, values);
        let clustering = cluster_frame(&masked, &self.config.cluster);
        let biggest = clustering
            .clusters
            .iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then(b.label.cmp(&a.label)));
        match biggest {
            Some(c) if overlap_rate(&c.pixel_box(), &track.prior()) > self.config.thresholds.t_ie => {
                0.5 * (c.pixel_box() + b_v)
            }
            _ => b_v,
        }
    }

    /// Advances every track by one frame and returns the confirmed, matched
    /// tracks' boxes ordered by id.
    pub fn step(&mut self, boxes: &[BoundingBox], features: &FeatureImage) -> Vec<TrackOutput> {
        let mu = self.config.mu;
        for t in &mut self.tracks {
            let p = t.state.predict(&self.model);
            push_capped(&mut t.priors, p.bbox, mu);
            push_capped(&mut t.velocities, t.state.velocity(), mu);
        }
        let priors: Vec<(u64, BoundingBox)> = self.tracks.iter().map(|t| (t.id, t.prior())).collect();
        let assignment = match_boxes(&priors, boxes);

        // unmatched established tracks whose best box is taken share that box
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (t, a) in assignment.iter().enumerate() {
            if let Some(b) = a {
                owner.insert(*b, t);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (t, track) in self.tracks.iter().enumerate() {
            if assignment[t].is_some() || track.status == TrackStatus::Tentative {
                continue;
            }
            let best = boxes
                .iter()
                .enumerate()
                .map(|(b, bx)| (b, overlap_rate(&priors[t].1, bx)))
                .filter(|&(_, r)| r > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((b, _)) = best {
                if let Some(&o) = owner.get(&b) {
                    groups.entry(b).or_insert_with(|| vec![o]).push(t);
                }
            }
        }
        let in_group: BTreeMap<usize, usize> = groups
            .iter()
            .flat_map(|(&b, ts)| ts.iter().map(move |&t| (t, b)))
            .collect();

        let mut updated = vec![None; self.tracks.len()];
        for t in 0..self.tracks.len() {
            if let Some(&b) = in_group.get(&t) {
                let z = self.occlusion_measurement(&self.tracks[t], &boxes[b], features);
                let track = &mut self.tracks[t];
                track.state.update_box(&z, &self.model);
                updated[t] = Some(track.state.bbox());
            } else if let Some(b) = assignment[t] {
                let initial = boxes[b];
                let track = &self.tracks[t];
                let mut areas = track.areas.clone();
                push_capped(&mut areas, initial.area(), mu + 1);
                let (shrinking, growing) = self.area_trend(&areas);
                let input = RefineInput {
                    initial,
                    prior: track.prior(),
                    mean_size: track.mean_size_box(),
                    previous: track.last_box(),
                    at_border: self.at_border(&initial),
                    shrinking,
                    growing,
                };
                let r = refine(&input, &self.config.thresholds);
                let track = &mut self.tracks[t];
                track.areas = areas;
                track.state.update_box(&r.refined, &self.model);
                updated[t] = Some(r.final_box(&track.state.bbox(), &initial));
            }
        }

        let confirm = self.config.confirm_threshold;
        let max_lost = self.config.max_lost;
        let mut out = Vec::new();
        for (t, track) in self.tracks.iter_mut().enumerate() {
            match updated[t] {
                Some(b) => {
                    push_capped(&mut track.history, b, mu);
                    track.hits += 1;
                    track.lost_frames = 0;
                    if track.hits >= confirm {
                        track.status = TrackStatus::Confirmed;
                    }
                    if track.status == TrackStatus::Confirmed {
                        out.push(TrackOutput { id: track.id, bbox: b });
                    }
                }
                None => {
                    track.lost_frames += 1;
                    if track.status != TrackStatus::Tentative {
                        track.status = TrackStatus::Lost;
                    }
                }
            }
        }
        self.tracks.retain(|t| match t.status {
            TrackStatus::Tentative => t.lost_frames == 0,
            _ => t.lost_frames <= max_lost,
        });

        for b in boxes {
            if priors.iter().all(|(_, p)| overlap_rate(p, b) == 0.0) {
                let mut track = Track::new(self.next_id, *b, &self.model);
                if track.hits >= confirm {
                    track.status = TrackStatus::Confirmed;
                }
                self.tracks.push(track);
                self.next_id += 1;
            }
        }
        out.sort_by_key(|o| o.id);
        out
    }
}
