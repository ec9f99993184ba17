//! Streaming extract, cluster and track, plus the shared configuration.
//!
//! Parsing and feature counting run on a worker thread feeding a bounded
//! channel; the temporal filter holds only its lookahead window, so memory
//! stays flat in the length of the stream.

use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::clustering::BLOCK_PIXELS;
use crate::codec::{CodecError, EcvReader};
use crate::evaluation::Mask;
use crate::features::{dnrc_frame, FeatureError, FeatureImage, FilterParams, StreamingFilter};
use crate::tracking::{MotionTracker, TrackerConfig, TrajectoryRow};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// All tunables; any subset may be given in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: FilterParams,
    pub tracker: TrackerConfig,
    /// Frames buffered between the parse and track stages.
    pub queue_depth: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            tracker: TrackerConfig::default(),
            queue_depth: 16,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !self.tracker.thresholds.is_valid() {
            return bad("thresholds need 0 < t_ie < t_a <= 1");
        }
        if self.filter.mu == 0 || self.tracker.mu == 0 {
            return bad("mu must be at least 1");
        }
        if self.tracker.cluster.min_pts == 0 {
            return bad("min_pts must be at least 1");
        }
        if self.queue_depth == 0 {
            return bad("queue_depth must be at least 1");
        }
        let k = &self.tracker.kalman;
        if k.q_diag.iter().chain(&k.s_diag).any(|v| *v < 0.0) || k.p0 < 0.0 || k.dt <= 0.0 {
            return bad("noise covariances must be non-negative and dt positive");
        }
        Ok(())
    }

    /// Keeps the tracker history aligned with the filter window.
    pub fn with_mu(mut self, mu: usize) -> Self {
        self.filter.mu = mu;
        self.tracker.mu = mu;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub rows: Vec<TrajectoryRow>,
    /// Per-frame motion masks at pixel resolution, when requested.
    pub masks: Option<Vec<Mask>>,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub elapsed: Duration,
}

impl PipelineOutput {
    pub fn fps(&self) -> f64 {
        self.frames as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Runs extract, cluster and track over an ECV stream (plain or encrypted).
pub fn run_pipeline(stream: &[u8], config: &PipelineConfig, want_masks: bool) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let mut reader = EcvReader::new(stream)?.peekable();
    let (width, height) = match reader.peek() {
        Some(Ok(p)) => (usize::from(p.frame.width), usize::from(p.frame.height)),
        Some(Err(e)) => return Err(e.clone().into()),
        None => {
            return Ok(PipelineOutput {
                masks: want_masks.then(Vec::new),
                elapsed: start.elapsed(),
                ..Default::default()
            })
        }
    };

    let mut tracker = MotionTracker::new(width as f64, height as f64, config.tracker.clone());
    let mut filter = StreamingFilter::new(config.filter);
    let mut out = PipelineOutput {
        masks: want_masks.then(Vec::new),
        width,
        height,
        ..Default::default()
    };
    let mut consume = |img: FeatureImage, out: &mut PipelineOutput| {
        out.rows.extend(tracker.process(&img));
        if let Some(masks) = out.masks.as_mut() {
            let cells = tracker.clusters().iter().flat_map(|c| c.cells.iter().copied());
            masks.push(Mask::from_cells(img.cols, img.rows, cells).upsample(BLOCK_PIXELS));
        }
        out.frames += 1;
    };

    std::thread::scope(|scope| -> Result<(), PipelineError> {
        let (tx, rx) = sync_channel(config.queue_depth);
        let producer = scope.spawn(move || -> Result<(), CodecError> {
            for (i, parsed) in reader.enumerate() {
                let grid = dnrc_frame(i, &parsed?.frame);
                if tx.send(grid).is_err() {
                    break;
                }
            }
            Ok(())
        });
        let mut result: Result<(), PipelineError> = Ok(());
        for grid in rx {
            match filter.push(grid) {
                Ok(imgs) => imgs.into_iter().for_each(|img| consume(img, &mut out)),
                Err(e) => {
                    result = Err(e.into());
                    break;
                }
            }
        }
        producer.join().expect("parse stage panicked")?;
        result?;
        for img in filter.finish()? {
            consume(img, &mut out);
        }
        Ok(())
    })?;
    out.elapsed = start.elapsed();
    Ok(out)
}
