//! Synthetic scenes: moving rectangles rendered straight into residual
//! statistics, with exact ground truth.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::codec::random::random_macroblock;
use crate::codec::{
    write_stream, CodecError, CodedFrame, FrameKind, Macroblock, MbType, Mvd, ResidualBlock4, Residuals,
};
use crate::evaluation::{GroundTruth, Mask};
use crate::tracking::TrajectoryRow;

const BLOCK: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Spec(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u64,
    /// Piecewise-linear path; the object exists from the first to the last waypoint frame.
    pub waypoints: Vec<Waypoint>,
    /// Mean nonzero coefficients per covered 4x4 block.
    pub density: f64,
    /// Chance per frame that a block on the one-block ring around the object
    /// carries a faint shadow residual.
    #[serde(default)]
    pub shadow: f64,
}

impl ObjectSpec {
    pub fn span(&self) -> (usize, usize) {
        (
            self.waypoints.first().map_or(0, |w| w.frame),
            self.waypoints.last().map_or(0, |w| w.frame),
        )
    }

    pub fn box_at(&self, frame: usize) -> Option<BoundingBox> {
        let (first, last) = self.span();
        if frame < first || frame > last {
            return None;
        }
        let i = self.waypoints.partition_point(|w| w.frame <= frame).saturating_sub(1);
        let a = &self.waypoints[i];
        let Some(b) = self.waypoints.get(i + 1) else {
            return Some(BoundingBox::new(a.cx, a.cy, a.w, a.h));
        };
        let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
        let lerp = |x: f64, y: f64| x + (y - x) * t;
        Some(BoundingBox::new(
            lerp(a.cx, b.cx),
            lerp(a.cy, b.cy),
            lerp(a.w, b.w),
            lerp(a.h, b.h),
        ))
    }

    fn velocity_at(&self, frame: usize) -> (f64, f64) {
        match (self.box_at(frame), self.box_at(frame.saturating_sub(1))) {
            (Some(b), Some(p)) if frame > 0 => (b.cx - p.cx, b.cy - p.cy),
            _ => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Chance per background block per frame that a residual spike starts.
    pub spike_rate: f64,
    /// Chance per covered block per frame that the block carries no residual.
    pub valley_rate: f64,
    /// Maximum global offset per frame, in blocks.
    pub jitter: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            spike_rate: 0.0,
            valley_rate: 0.0,
            jitter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default = "default_intra_period")]
    pub intra_period: usize,
    /// Drawing order: later objects cover earlier ones.
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

fn default_intra_period() -> usize {
    12
}

const BUNDLED_SCENE: &str = include_str!("../data/crossing_scene.json");

impl SceneSpec {
    /// 352x288, 300 frames, three objects; the small one passes fully behind
    /// the large one for about ten frames.
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_SCENE).expect("bundled scene parses")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(16) || !self.height.is_multiple_of(16) {
            return bad(format!(
                "frame size {}x{} must be positive multiples of 16",
                self.width, self.height
            ));
        }
        if self.width > usize::from(u16::MAX) || self.height > usize::from(u16::MAX) {
            return bad("frame size exceeds 65535".into());
        }
        if self.intra_period == 0 {
            return bad("intra_period must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise.spike_rate) || !(0.0..=1.0).contains(&self.noise.valley_rate) {
            return bad("noise rates must lie in [0, 1]".into());
        }
        for o in &self.objects {
            if o.waypoints.is_empty() {
                return bad(format!("object {} has no waypoints", o.id));
            }
            if o.waypoints.windows(2).any(|w| w[1].frame <= w[0].frame) {
                return bad(format!("object {} waypoints must have increasing frames", o.id));
            }
            if o.waypoints.iter().any(|w| !(w.w > 0.0 && w.h > 0.0)) {
                return bad(format!("object {} has a non-positive size", o.id));
            }
            if !(o.density > 0.0 && o.density.is_finite()) || !(0.0..=1.0).contains(&o.shadow) {
                return bad(format!("object {} density or shadow out of range", o.id));
            }
        }
        let mut ids: Vec<u64> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("object ids must be unique".into());
        }
        Ok(())
    }

    pub fn is_intra(&self, frame: usize) -> bool {
        frame.is_multiple_of(self.intra_period)
    }

    /// Small random scene for property checks.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let width = 16 * rng.random_range(3..=8);
        let height = 16 * rng.random_range(3..=6);
        let frames = rng.random_range(4..=30);
        let objects = (0..rng.random_range(0..=3))
            .map(|id| {
                let mut wp = |frame: usize| Waypoint {
                    frame,
                    cx: rng.random_range(0.0..width as f64),
                    cy: rng.random_range(0.0..height as f64),
                    w: rng.random_range(8.0..40.0),
                    h: rng.random_range(8.0..40.0),
                };
                let first = wp(0);
                let last = wp(frames - 1);
                ObjectSpec {
                    id,
                    waypoints: vec![first, last],
                    density: rng.random_range(1.0..10.0),
                    shadow: rng.random_range(0.0..0.5),
                }
            })
            .collect();
        Self {
            width,
            height,
            frames,
            intra_period: rng.random_range(1..=12),
            objects,
            noise: NoiseSpec {
                spike_rate: rng.random_range(0.0..0.02),
                valley_rate: rng.random_range(0.0..0.1),
                jitter: rng.random_range(0..=1),
            },
            seed: rng.random(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub frames: Vec<CodedFrame>,
    pub stream: Vec<u8>,
    pub gt: GroundTruth,
    /// Per frame, blocks covered by a visible object (feature-grid resolution).
    pub block_masks: Vec<Mask>,
}

fn clip(b: &BoundingBox, width: usize, height: usize) -> Option<BoundingBox> {
    let frame = BoundingBox::from_ltwh(0.0, 0.0, width as f64, height as f64);
    b.intersection(&frame)
}

/// Blocks whose centre lies inside the box.
fn covered_blocks(b: &BoundingBox, cols: usize, rows: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let half = BLOCK as f64 / 2.0;
    let c0 = ((b.left() - half) / BLOCK as f64).ceil().max(0.0) as usize;
    let r0 = ((b.top() - half) / BLOCK as f64).ceil().max(0.0) as usize;
    let c1 = (((b.right() - half) / BLOCK as f64).floor().min(cols as f64 - 1.0)).max(-1.0);
    let r1 = (((b.bottom() - half) / BLOCK as f64).floor().min(rows as f64 - 1.0)).max(-1.0);
    let (c1, r1) = (c1 as i64, r1 as i64);
    (r0 as i64..=r1).flat_map(move |r| (c0 as i64..=c1).map(move |c| (r as usize, c as usize)))
}

fn nonzero_levels<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i32> {
    (0..n)
        .map(|_| {
            let m = if rng.random_bool(0.6) {
                1
            } else {
                rng.random_range(2..=12)
            };
            if rng.random() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn block_with<R: Rng + ?Sized>(rng: &mut R, count: usize) -> ResidualBlock4 {
    let levels = nonzero_levels(rng, count);
    ResidualBlock4::first_slots(count, levels)
}

/// Renders the scene to frames, stream and ground truth; fully determined by the spec.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (cols, rows) = (spec.width / BLOCK, spec.height / BLOCK);
    let mb_cols = spec.width / 16;
    let poissons: Vec<Poisson<f64>> = spec
        .objects
        .iter()
        .map(|o| Poisson::new(o.density).map_err(|e| SynthError::Spec(e.to_string())))
        .collect::<Result<_, _>>()?;
    // remaining frames of an active background spike, per block
    let mut spikes: HashMap<(usize, usize), usize> = HashMap::new();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = GroundTruth {
        width: spec.width,
        height: spec.height,
        ..Default::default()
    };
    let mut block_masks = Vec::with_capacity(spec.frames);
    for k in 0..spec.frames {
        let j = spec.noise.jitter as i64;
        let (jx, jy) = if j > 0 {
            (rng.random_range(-j..=j), rng.random_range(-j..=j))
        } else {
            (0, 0)
        };
        let shift = |b: BoundingBox| {
            BoundingBox::new(
                b.cx + (jx * BLOCK as i64) as f64,
                b.cy + (jy * BLOCK as i64) as f64,
                b.w,
                b.h,
            )
        };

        // owner object index per block, later objects on top
        let mut owner: Vec<Option<usize>> = vec![None; rows * cols];
        let mut shadow: Vec<bool> = vec![false; rows * cols];
        let mut mask = Mask::new(spec.width, spec.height);
        for (oi, o) in spec.objects.iter().enumerate() {
            let Some(b) = o.box_at(k).map(shift) else { continue };
            let Some(vis) = clip(&b, spec.width, spec.height) else {
                continue;
            };
            gt.boxes.push(TrajectoryRow {
                frame: k,
                id: o.id,
                bbox: vis,
            });
            for (r, c) in covered_blocks(&vis, cols, rows) {
                owner[r * cols + c] = Some(oi);
            }
            if o.shadow > 0.0 {
                let ring = BoundingBox::new(vis.cx, vis.cy, vis.w + 2.0 * BLOCK as f64, vis.h + 2.0 * BLOCK as f64);
                for (r, c) in covered_blocks(&ring, cols, rows) {
                    if rng.random_bool(o.shadow) {
                        shadow[r * cols + c] = true;
                    }
                }
            }
        }
        let mut block_mask = Mask::new(cols, rows);
        for r in 0..rows {
            for c in 0..cols {
                if owner[r * cols + c].is_some() {
                    block_mask.set(c, r, true);
                }
            }
        }
        for b in gt.boxes.iter().filter(|b| b.frame == k) {
            let bb = &b.bbox;
            let (x0, y0) = (bb.left().round().max(0.0) as usize, bb.top().round().max(0.0) as usize);
            let x1 = (bb.right().round() as usize).min(spec.width);
            let y1 = (bb.bottom().round() as usize).min(spec.height);
            for y in y0..y1 {
                for x in x0..x1 {
                    mask.set(x, y, true);
                }
            }
        }

        // spikes evolve on every frame so I frames do not reset them
        spikes.retain(|_, left| {
            *left -= 1;
            *left > 0
        });
        if spec.noise.spike_rate > 0.0 {
            for r in 0..rows {
                for c in 0..cols {
                    if owner[r * cols + c].is_none() && rng.random_bool(spec.noise.spike_rate) {
                        spikes.entry((r, c)).or_insert(rng.random_range(1..=3));
                    }
                }
            }
        }

        let frame = if spec.is_intra(k) {
            CodedFrame {
                kind: FrameKind::I,
                width: spec.width as u16,
                height: spec.height as u16,
                macroblocks: (0..mb_cols * (spec.height / 16))
                    .map(|_| random_macroblock(&mut rng, FrameKind::I))
                    .collect(),
            }
        } else {
            let mut f = CodedFrame::blank(FrameKind::P, spec.width as u16, spec.height as u16);
            for (m, mb) in f.macroblocks.iter_mut().enumerate() {
                let (r0, c0) = ((m / mb_cols) * 4, (m % mb_cols) * 4);
                let mut blocks = Vec::with_capacity(16);
                let mut mover = None;
                for b in 0..16 {
                    let (r, c) = (r0 + b / 4, c0 + b % 4);
                    let i = r * cols + c;
                    let count = if let Some(oi) = owner[i] {
                        mover.get_or_insert(oi);
                        if rng.random_bool(spec.noise.valley_rate) {
                            0
                        } else {
                            (poissons[oi].sample(&mut rng) as usize).clamp(1, 16)
                        }
                    } else if spikes.contains_key(&(r, c)) {
                        rng.random_range(1..=16)
                    } else if shadow[i] {
                        rng.random_range(1..=2)
                    } else {
                        0
                    };
                    blocks.push(block_with(&mut rng, count));
                }
                let (vx, vy) = mover.map_or((0.0, 0.0), |oi| spec.objects[oi].velocity_at(k));
                *mb = Macroblock {
                    mb_type: MbType::Inter,
                    mvds: vec![Mvd {
                        dx: (4.0 * vx).round() as i32,
                        dy: (4.0 * vy).round() as i32,
                    }],
                    ipms: Vec::new(),
                    residuals: Residuals::T4(blocks),
                };
            }
            f
        };
        frames.push(frame);
        gt.masks.push(mask);
        block_masks.push(block_mask);
    }
    let stream = write_stream(&frames)?;
    Ok(GeneratedScene {
        frames,
        stream,
        gt,
        block_masks,
    })
}
