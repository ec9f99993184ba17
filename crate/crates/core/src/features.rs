//! Residual-density (DNRC) features.
//!
//! Every 4x4 luma block gets the number of nonzero coefficients of the
//! transform block that covers it (capped at 16), plus one for a nonzero
//! Intra_16x16 DC. Sign scrambling never changes these counts, so the
//! features read the same from plaintext and encrypted streams.
//!
//! I frames carry spatial residuals only; their values are zero-initialized
//! and rebuilt from neighbouring frames by inverse-distance weighting. Each
//! block's time series is then cleaned of valley noise (a zero between
//! nonzero neighbours) and spike noise (short nonzero bursts).

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::dump::CoeffDump;
use crate::codec::{
    CodecError, CodedFrame, EcvReader, FrameKind, MbType, ResidualBlock4, ResidualBlock8, Residuals, TransformSize,
};

pub const DNRC_CAP: u8 = 16;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("grid shape mismatch between frames")]
    ShapeMismatch,
    #[error("coefficient dump has no frame size")]
    MissingSize,
    #[error("dump record outside the frame: {0}")]
    OutOfFrame(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Temporal filter windows, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Interpolation and valley half-window.
    pub delta: usize,
    /// Spike-run length: a nonzero sample survives inside a run of at least `mu + 1`.
    pub mu: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { delta: 1, mu: 5 }
    }
}

impl FilterParams {
    /// Frames of lookahead (and history) needed to filter one frame exactly.
    pub fn window(&self) -> usize {
        self.mu.max(self.delta) + self.delta
    }
}

/// Raw per-4x4-block DNRC values of one frame, raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnrcGrid {
    pub frame_index: usize,
    pub kind: FrameKind,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u8>,
}

impl DnrcGrid {
    pub fn zeros(frame_index: usize, kind: FrameKind, rows: usize, cols: usize) -> Self {
        Self {
            frame_index,
            kind,
            rows,
            cols,
            values: vec![0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }
}

pub fn dnrc_block(b: &ResidualBlock4, in_intra16: bool) -> u8 {
    let dc = u8::from(in_intra16 && b.has_nonzero_dc);
    (b.total_coeff + dc).min(DNRC_CAP)
}

pub fn dnrc_block8(b: &ResidualBlock8) -> u8 {
    b.total_coeff.min(DNRC_CAP)
}

/// DNRC grid of one frame. I frames yield zeros pending interpolation.
pub fn dnrc_frame(frame_index: usize, f: &CodedFrame) -> DnrcGrid {
    let cols = usize::from(f.width / 4);
    let rows = usize::from(f.height / 4);
    let mut grid = DnrcGrid::zeros(frame_index, f.kind, rows, cols);
    if f.kind == FrameKind::I {
        return grid;
    }
    let mb_cols = f.mb_cols();
    for (m, mb) in f.macroblocks.iter().enumerate() {
        let (r0, c0) = ((m / mb_cols) * 4, (m % mb_cols) * 4);
        match &mb.residuals {
            Residuals::T4(blocks) => {
                let intra16 = matches!(mb.mb_type, MbType::Intra16x16(_));
                for (b, blk) in blocks.iter().enumerate() {
                    grid.values[(r0 + b / 4) * cols + c0 + b % 4] = dnrc_block(blk, intra16);
                }
            }
            Residuals::T8(blocks) => {
                for (b, blk) in blocks.iter().enumerate() {
                    let v = dnrc_block8(blk);
                    let (br, bc) = (r0 + (b / 2) * 2, c0 + (b % 2) * 2);
                    for dr in 0..2 {
                        for dc in 0..2 {
                            grid.values[(br + dr) * cols + bc + dc] = v;
                        }
                    }
                }
            }
        }
    }
    grid
}

/// DNRC grids of every frame in an ECV stream (parsed in parallel).
pub fn dnrc_stream(stream: &[u8]) -> Result<Vec<DnrcGrid>, FeatureError> {
    let parsed: Vec<_> = EcvReader::new(stream)?.collect::<Result<_, _>>()?;
    Ok(parsed
        .par_iter()
        .enumerate()
        .map(|(i, p)| dnrc_frame(i, &p.frame))
        .collect())
}

/// DNRC grids from a coefficient dump.
pub fn dnrc_from_dump(dump: &CoeffDump) -> Result<Vec<DnrcGrid>, FeatureError> {
    let (w, h) = dump.size.ok_or(FeatureError::MissingSize)?;
    let (rows, cols) = (usize::from(h / 4), usize::from(w / 4));
    let n = dump.frame_count();
    let mut grids: Vec<DnrcGrid> = (0..n)
        .map(|i| {
            let kind = if dump.intra_frames.contains(&i) {
                FrameKind::I
            } else {
                FrameKind::P
            };
            DnrcGrid::zeros(i, kind, rows, cols)
        })
        .collect();
    for r in &dump.records {
        let g = &mut grids[r.frame];
        if g.kind == FrameKind::I {
            continue;
        }
        let (r0, c0) = (r.mb_row * 4, r.mb_col * 4);
        if r0 + 4 > rows || c0 + 4 > cols {
            return Err(FeatureError::OutOfFrame(format!(
                "frame {} mb ({}, {})",
                r.frame, r.mb_row, r.mb_col
            )));
        }
        match r.transform {
            TransformSize::T4 => {
                let v = (r.total_coeff + u8::from(r.has_dc)).min(DNRC_CAP);
                g.values[(r0 + r.blk_idx / 4) * cols + c0 + r.blk_idx % 4] = v;
            }
            TransformSize::T8 => {
                let v = r.total_coeff.min(DNRC_CAP);
                let (br, bc) = (r0 + (r.blk_idx / 2) * 2, c0 + (r.blk_idx % 2) * 2);
                for dr in 0..2 {
                    for dc in 0..2 {
                        g.values[(br + dr) * cols + bc + dc] = v;
                    }
                }
            }
        }
    }
    Ok(grids)
}

fn round_half_up(x: f64) -> u8 {
    ((x + 0.5 + 1e-9).floor() as u64).min(u64::from(DNRC_CAP)) as u8
}

/// Rebuilds I-frame grids by inverse-distance weighting of the raw grids within
/// `delta` frames. Other I frames in the window contribute their zero values.
pub fn interpolate_iframes(seq: &[DnrcGrid], params: FilterParams) -> Result<Vec<DnrcGrid>, FeatureError> {
    if seq.is_empty() {
        return Err(FeatureError::EmptySequence);
    }
    let (rows, cols) = (seq[0].rows, seq[0].cols);
    if seq.iter().any(|g| g.rows != rows || g.cols != cols) {
        return Err(FeatureError::ShapeMismatch);
    }
    let n = seq.len();
    let mut out = seq.to_vec();
    for (k, grid) in out.iter_mut().enumerate() {
        if grid.kind != FrameKind::I {
            continue;
        }
        let lo = k.saturating_sub(params.delta);
        let hi = (k + params.delta).min(n - 1);
        let neighbours: Vec<(usize, f64)> = (lo..=hi)
            .filter(|&t| t != k)
            .map(|t| (t, 1.0 / k.abs_diff(t) as f64))
            .collect();
        let wsum: f64 = neighbours.iter().map(|&(_, w)| w).sum();
        if wsum == 0.0 {
            continue;
        }
        for i in 0..rows * cols {
            let num: f64 = neighbours.iter().map(|&(t, w)| f64::from(seq[t].values[i]) * w).sum();
            grid.values[i] = round_half_up(num / wsum);
        }
    }
    Ok(out)
}

/// Filtered value at `k` of one block's series.
///
/// `closed_lo`/`closed_hi` say whether the ends of `d` are the true ends of the
/// sequence; windows crossing a true end shrink to the available samples.
fn filter_point(d: &[u8], k: usize, params: FilterParams, closed_lo: bool, closed_hi: bool) -> u8 {
    let n = d.len();
    if d[k] == 0 {
        // valley: both immediate neighbours exist and the whole window is nonzero
        if k == 0 || k + 1 >= n {
            return 0;
        }
        let lo = k.saturating_sub(params.delta);
        let hi = (k + params.delta).min(n - 1);
        let valley = (lo..=hi).filter(|&t| t != k).all(|t| d[t] > 0);
        return if valley { d[k - 1].min(d[k + 1]) } else { 0 };
    }
    let mut a = k;
    while a > 0 && k - a < params.mu && d[a - 1] > 0 {
        a -= 1;
    }
    let mut b = k;
    while b + 1 < n && b - k < params.mu && d[b + 1] > 0 {
        b += 1;
    }
    let long_run = b - a >= params.mu;
    let touches_start = closed_lo && a == 0;
    let touches_end = closed_hi && b == n - 1;
    if long_run || touches_start || touches_end {
        d[k]
    } else {
        0
    }
}

/// Valley fill and spike suppression on one block's full time series.
pub fn temporal_filter(series: &[u8], params: FilterParams) -> Vec<u8> {
    (0..series.len())
        .map(|k| filter_point(series, k, params, true, true))
        .collect()
}

/// Filtered 4x4-block feature grid of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub frame_index: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u8>,
    /// Mean over the nonzero entries; 0 for an all-zero image.
    pub mean: f64,
}

impl FeatureImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }

    /// Nonzero entries as `(row, col, value)`, raster order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (i / self.cols, i % self.cols, v))
    }

    pub fn empty(frame_index: usize, rows: usize, cols: usize) -> Self {
        build_feature_image(frame_index, rows, cols, vec![0; rows * cols])
    }
}

pub fn build_feature_image(frame_index: usize, rows: usize, cols: usize, values: Vec<u8>) -> FeatureImage {
    let (sum, count) = values
        .iter()
        .filter(|&&v| v > 0)
        .fold((0u64, 0u64), |(s, c), &v| (s + u64::from(v), c + 1));
    let mean = if count == 0 { 0.0 } else { sum as f64 / count as f64 };
    FeatureImage {
        frame_index,
        rows,
        cols,
        values,
        mean,
    }
}

fn filter_window(grids: &[DnrcGrid], k: usize, params: FilterParams, closed_lo: bool, closed_hi: bool) -> Vec<u8> {
    let cells = grids[0].rows * grids[0].cols;
    let mut series = vec![0u8; grids.len()];
    (0..cells)
        .map(|i| {
            for (s, g) in series.iter_mut().zip(grids) {
                *s = g.values[i];
            }
            filter_point(&series, k, params, closed_lo, closed_hi)
        })
        .collect()
}

/// Interpolation followed by temporal filtering over a whole sequence.
pub fn feature_images(grids: &[DnrcGrid], params: FilterParams) -> Result<Vec<FeatureImage>, FeatureError> {
    let d = interpolate_iframes(grids, params)?;
    let (rows, cols) = (d[0].rows, d[0].cols);
    Ok((0..d.len())
        .into_par_iter()
        .map(|k| {
            let values = filter_window(&d, k, params, true, true);
            build_feature_image(d[k].frame_index, rows, cols, values)
        })
        .collect())
}

/// Parses, extracts and filters every frame of an ECV stream.
pub fn extract_features(stream: &[u8], params: FilterParams) -> Result<Vec<FeatureImage>, FeatureError> {
    let grids = dnrc_stream(stream)?;
    if grids.is_empty() {
        return Ok(Vec::new());
    }
    feature_images(&grids, params)
}

/// Frame-by-frame filter with a bounded lookahead buffer.
///
/// Produces exactly what [`feature_images`] produces on the full sequence,
/// emitting frame `k` once frame `k + window` has arrived (or on `finish`).
#[derive(Debug)]
pub struct StreamingFilter {
    params: FilterParams,
    buf: VecDeque<DnrcGrid>,
    /// Absolute index of `buf[0]`.
    base: usize,
    /// Next frame to emit.
    next: usize,
}

impl StreamingFilter {
    pub fn new(params: FilterParams) -> Self {
        Self {
            params,
            buf: VecDeque::new(),
            base: 0,
            next: 0,
        }
    }

    pub fn lookahead(&self) -> usize {
        self.params.window()
    }

    pub fn push(&mut self, grid: DnrcGrid) -> Result<Vec<FeatureImage>, FeatureError> {
        if let Some(first) = self.buf.front() {
            if first.rows != grid.rows || first.cols != grid.cols {
                return Err(FeatureError::ShapeMismatch);
            }
        }
        self.buf.push_back(grid);
        let w = self.params.window();
        let mut out = Vec::new();
        while self.next + w < self.base + self.buf.len() {
            out.push(self.emit(false)?);
        }
        Ok(out)
    }

    /// Flushes the frames still waiting for lookahead.
    pub fn finish(&mut self) -> Result<Vec<FeatureImage>, FeatureError> {
        let mut out = Vec::new();
        while self.next < self.base + self.buf.len() {
            out.push(self.emit(true)?);
        }
        Ok(out)
    }

    fn emit(&mut self, at_end: bool) -> Result<FeatureImage, FeatureError> {
        let w = self.params.window();
        let k = self.next;
        let lo = k.saturating_sub(w).max(self.base);
        let hi = (k + w + 1).min(self.base + self.buf.len());
        let window: Vec<DnrcGrid> = self.buf.range(lo - self.base..hi - self.base).cloned().collect();
        let d = interpolate_iframes(&window, self.params)?;
        let closed_lo = lo == 0;
        let closed_hi = at_end && hi == self.base + self.buf.len();
        let values = filter_window(&d, k - lo, self.params, closed_lo, closed_hi);
        let img = build_feature_image(d[k - lo].frame_index, d[0].rows, d[0].cols, values);
        self.next += 1;
        while self.base + w < self.next {
            self.buf.pop_front();
            self.base += 1;
        }
        Ok(img)
    }
}

/// Nonzero feature entries as CSV `frame,row,col,value`.
pub fn features_csv(images: &[FeatureImage]) -> String {
    let mut s = String::from("frame,row,col,value\n");
    for img in images {
        for (r, c, v) in img.nonzero() {
            let _ = writeln!(s, "{},{},{},{}", img.frame_index, r, c, v);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::random::random_frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(delta: usize, mu: usize) -> FilterParams {
        FilterParams { delta, mu }
    }

    #[test]
    fn block_values() {
        assert_eq!(dnrc_block(&ResidualBlock4::empty(), false), 0);
        let mut b = ResidualBlock4::first_slots(3, [4, 5, 6]);
        b.has_nonzero_dc = true;
        assert_eq!(dnrc_block(&b, true), 4);
        assert_eq!(dnrc_block(&b, false), 3);
        let mut full = ResidualBlock4::first_slots(16, std::iter::repeat(2));
        full.has_nonzero_dc = true;
        assert_eq!(dnrc_block(&full, true), 16);
        assert_eq!(dnrc_block8(&ResidualBlock8::empty()), 0);
        assert_eq!(dnrc_block8(&ResidualBlock8::first_slots(40, std::iter::repeat(3))), 16);
    }

    #[test]
    fn block8_matches_direct_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let density = rng.random_range(0.0..0.5);
            let c: [i32; 64] = crate::codec::random::random_coefficients(&mut rng, density);
            let direct = c.iter().filter(|&&v| v != 0).count().min(16) as u8;
            assert_eq!(dnrc_block8(&ResidualBlock8::from_coefficients(&c)), direct);
        }
    }

    #[test]
    fn frame_grid_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_frame(&mut rng, FrameKind::P, 48, 32);
        let g = dnrc_frame(0, &f);
        assert_eq!((g.rows, g.cols), (8, 12));
        // independent per-block oracle via coefficient arrays
        for (m, mb) in f.macroblocks.iter().enumerate() {
            let (mr, mc) = (m / 3, m % 3);
            for r in 0..4 {
                for c in 0..4 {
                    let expected = match &mb.residuals {
                        Residuals::T4(bl) => {
                            let b = &bl[r * 4 + c];
                            let nz = b.coefficients().unwrap().iter().filter(|&&v| v != 0).count();
                            let dc = matches!(mb.mb_type, MbType::Intra16x16(_)) && b.has_nonzero_dc;
                            (nz + usize::from(dc)).min(16) as u8
                        }
                        Residuals::T8(bl) => {
                            let b = &bl[(r / 2) * 2 + c / 2];
                            b.coefficients().unwrap().iter().filter(|&&v| v != 0).count().min(16) as u8
                        }
                    };
                    assert_eq!(g.get(mr * 4 + r, mc * 4 + c), expected);
                }
            }
        }
        assert!(dnrc_frame(0, &CodedFrame::blank(FrameKind::P, 32, 32))
            .values
            .iter()
            .all(|&v| v == 0));
        let i = random_frame(&mut rng, FrameKind::I, 32, 32);
        assert!(dnrc_frame(0, &i).values.iter().all(|&v| v == 0));
    }

    fn series_grids(values: &[u8], intra: &[usize]) -> Vec<DnrcGrid> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| DnrcGrid {
                frame_index: i,
                kind: if intra.contains(&i) { FrameKind::I } else { FrameKind::P },
                rows: 1,
                cols: 1,
                values: vec![v],
            })
            .collect()
    }

    #[test]
    fn interpolation_examples() {
        let g = interpolate_iframes(&series_grids(&[0, 0, 0], &[1]), p(1, 5)).unwrap();
        assert_eq!(g[1].values[0], 0);
        let g = interpolate_iframes(&series_grids(&[4, 0, 8], &[1]), p(1, 5)).unwrap();
        assert_eq!(g[1].values[0], 6);
        let g = interpolate_iframes(&series_grids(&[2, 4, 0, 4, 2], &[2]), p(2, 5)).unwrap();
        assert_eq!(g[2].values[0], 3);
        // ties round up, boundary uses one side
        let g = interpolate_iframes(&series_grids(&[4, 0, 5], &[1]), p(1, 5)).unwrap();
        assert_eq!(g[1].values[0], 5);
        let g = interpolate_iframes(&series_grids(&[0, 7, 1], &[0]), p(1, 5)).unwrap();
        assert_eq!(g[0].values[0], 7);
        assert!(matches!(
            interpolate_iframes(&[], p(1, 5)),
            Err(FeatureError::EmptySequence)
        ));
    }

    #[test]
    fn filter_examples() {
        let s = [5, 5, 5, 5, 5, 5, 5, 0, 6, 6, 6, 6, 6, 6, 6];
        let f = temporal_filter(&s, p(1, 5));
        assert_eq!(f[7], 5);
        let mut spike = vec![0u8; 30];
        spike[10..13].copy_from_slice(&[3, 4, 5]);
        assert!(temporal_filter(&spike, p(1, 5)).iter().all(|&v| v == 0));
        let constant = vec![9u8; 20];
        assert_eq!(temporal_filter(&constant, p(1, 5)), constant);
        // runs touching the sequence ends survive
        let mut edge = vec![0u8; 20];
        edge[0] = 2;
        edge[19] = 3;
        let f = temporal_filter(&edge, p(1, 5));
        assert_eq!((f[0], f[19]), (2, 3));
    }

    #[test]
    fn feature_image_mean() {
        assert_eq!(build_feature_image(0, 2, 2, vec![0; 4]).mean, 0.0);
        assert_eq!(build_feature_image(0, 2, 2, vec![0, 8, 0, 0]).mean, 8.0);
        assert_eq!(build_feature_image(0, 2, 2, vec![2, 0, 4, 0]).mean, 3.0);
    }

    #[test]
    fn streaming_equals_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for params in [p(1, 5), p(2, 3), p(1, 1), p(3, 2)] {
            for len in [1usize, 2, 7, 40] {
                let grids: Vec<DnrcGrid> = (0..len)
                    .map(|i| DnrcGrid {
                        frame_index: i,
                        kind: if i % 12 == 0 { FrameKind::I } else { FrameKind::P },
                        rows: 2,
                        cols: 3,
                        values: (0..6)
                            .map(|_| {
                                if rng.random_bool(0.6) {
                                    rng.random_range(1..=16)
                                } else {
                                    0
                                }
                            })
                            .collect(),
                    })
                    .collect();
                let batch = feature_images(&grids, params).unwrap();
                let mut sf = StreamingFilter::new(params);
                let mut streamed = Vec::new();
                for g in grids.iter().cloned() {
                    streamed.extend(sf.push(g).unwrap());
                    assert!(sf.buf.len() <= 2 * params.window() + 2);
                }
                streamed.extend(sf.finish().unwrap());
                assert_eq!(streamed, batch, "params {params:?} len {len}");
            }
        }
    }

    #[test]
    fn csv_lists_nonzero_only() {
        let img = build_feature_image(3, 1, 3, vec![0, 5, 0]);
        assert_eq!(features_csv(&[img]), "frame,row,col,value\n3,0,1,5\n");
    }
}
