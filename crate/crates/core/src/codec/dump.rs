//! Text coefficient dumps, an alternate input path for codecs that can
//! export per-block nonzero counts.
//!
//! One whitespace-separated line per transform block:
//!
//! ```text
//! frame mbRow mbCol blkIdx transform totalCoeff hasDC
//! ```
//!
//! `transform` is `4` or `8`; `blkIdx` is raster order inside the macroblock
//! (0..16 for 4x4, 0..4 for 8x8). Lines starting with `#` are comments, except
//! `# size W H` (frame dimensions) and `# I n` (frame `n` is intra coded).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::frame::{CodedFrame, FrameKind, MbType, Residuals, TransformSize};
use super::residual::ResidualBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpRecord {
    pub frame: usize,
    pub mb_row: usize,
    pub mb_col: usize,
    pub blk_idx: usize,
    pub transform: TransformSize,
    pub total_coeff: u8,
    pub has_dc: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoeffDump {
    pub size: Option<(u16, u16)>,
    pub intra_frames: BTreeSet<usize>,
    pub records: Vec<DumpRecord>,
}

impl CoeffDump {
    /// Number of frames covered (highest referenced index + 1).
    pub fn frame_count(&self) -> usize {
        let max_rec = self.records.iter().map(|r| r.frame + 1).max().unwrap_or(0);
        let max_i = self.intra_frames.iter().map(|f| f + 1).max().unwrap_or(0);
        max_rec.max(max_i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("coefficient dump line {line}: {msg}")]
pub struct DumpError {
    pub line: usize,
    pub msg: String,
}

pub fn parse_dump(text: &str) -> Result<CoeffDump, DumpError> {
    let mut dump = CoeffDump::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: &str| DumpError {
            line,
            msg: msg.to_string(),
        };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let words: Vec<&str> = comment.split_whitespace().collect();
            match words.as_slice() {
                ["size", w, h] => {
                    let w = w.parse().map_err(|_| err("bad width"))?;
                    let h = h.parse().map_err(|_| err("bad height"))?;
                    dump.size = Some((w, h));
                }
                ["I", n] => {
                    dump.intra_frames.insert(n.parse().map_err(|_| err("bad frame index"))?);
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        let num = |idx: usize| -> Result<usize, DumpError> {
            fields[idx]
                .parse::<usize>()
                .map_err(|_| err("field is not a non-negative integer"))
        };
        let transform = match num(4)? {
            4 => TransformSize::T4,
            8 => TransformSize::T8,
            _ => return Err(err("transform must be 4 or 8")),
        };
        let (max_blk, max_coeff) = match transform {
            TransformSize::T4 => (16, 16),
            TransformSize::T8 => (4, 64),
        };
        let blk_idx = num(3)?;
        let total_coeff = num(5)?;
        if blk_idx >= max_blk {
            return Err(err("block index out of range"));
        }
        if total_coeff > max_coeff {
            return Err(err("totalCoeff out of range"));
        }
        let has_dc = match num(6)? {
            0 => false,
            1 => true,
            _ => return Err(err("hasDC must be 0 or 1")),
        };
        dump.records.push(DumpRecord {
            frame: num(0)?,
            mb_row: num(1)?,
            mb_col: num(2)?,
            blk_idx,
            transform,
            total_coeff: total_coeff as u8,
            has_dc,
        });
    }
    Ok(dump)
}

/// Per-block records for one P frame. The DC flag is reported only for Intra_16x16.
pub fn frame_records(index: usize, frame: &CodedFrame) -> Vec<DumpRecord> {
    let cols = frame.mb_cols();
    let mut out = Vec::new();
    for (m, mb) in frame.macroblocks.iter().enumerate() {
        let intra16 = matches!(mb.mb_type, MbType::Intra16x16(_));
        let (mb_row, mb_col) = (m / cols, m % cols);
        match &mb.residuals {
            Residuals::T4(blocks) => {
                for (b, blk) in blocks.iter().enumerate() {
                    out.push(DumpRecord {
                        frame: index,
                        mb_row,
                        mb_col,
                        blk_idx: b,
                        transform: TransformSize::T4,
                        total_coeff: blk.total_coeff,
                        has_dc: intra16 && blk.has_nonzero_dc,
                    });
                }
            }
            Residuals::T8(blocks) => {
                for (b, blk) in blocks.iter().enumerate() {
                    out.push(DumpRecord {
                        frame: index,
                        mb_row,
                        mb_col,
                        blk_idx: b,
                        transform: TransformSize::T8,
                        total_coeff: blk.total_coeff,
                        has_dc: false,
                    });
                }
            }
        }
    }
    out
}

/// Builds a dump from a frame sequence. I-frame residuals are not emitted.
pub fn dump_frames<'a>(frames: impl IntoIterator<Item = &'a CodedFrame>) -> CoeffDump {
    let mut dump = CoeffDump::default();
    for (i, f) in frames.into_iter().enumerate() {
        dump.size.get_or_insert((f.width, f.height));
        match f.kind {
            FrameKind::I => {
                dump.intra_frames.insert(i);
            }
            FrameKind::P => dump.records.extend(frame_records(i, f)),
        }
    }
    dump
}

pub fn write_dump(dump: &CoeffDump) -> String {
    let mut s = String::new();
    if let Some((w, h)) = dump.size {
        let _ = writeln!(s, "# size {w} {h}");
    }
    for i in &dump.intra_frames {
        let _ = writeln!(s, "# I {i}");
    }
    for r in &dump.records {
        let t = match r.transform {
            TransformSize::T4 => 4,
            TransformSize::T8 => 8,
        };
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            r.frame,
            r.mb_row,
            r.mb_col,
            r.blk_idx,
            t,
            r.total_coeff,
            u8::from(r.has_dc)
        );
    }
    s
}

/// Rebuilds a frame sequence with the dumped nonzero counts. Coefficients
/// fill the first slots of each block with unit levels; macroblocks with a
/// DC flag become Intra_16x16, the rest zero-motion inter. I frames carry no
/// residual.
pub fn frames_from_dump(dump: &CoeffDump) -> Result<Vec<CodedFrame>, DumpError> {
    let err = |msg: String| DumpError { line: 0, msg };
    let (w, h) = dump.size.ok_or_else(|| err("missing `# size W H`".into()))?;
    if w == 0 || h == 0 || w % 16 != 0 || h % 16 != 0 {
        return Err(err(format!("frame size {w}x{h} is not a positive multiple of 16")));
    }
    let mut frames: Vec<CodedFrame> = (0..dump.frame_count())
        .map(|i| {
            let kind = if dump.intra_frames.contains(&i) {
                FrameKind::I
            } else {
                FrameKind::P
            };
            CodedFrame::blank(kind, w, h)
        })
        .collect();
    let (mb_cols, mb_rows) = (usize::from(w / 16), usize::from(h / 16));
    let mut transform: Vec<Vec<Option<TransformSize>>> = vec![vec![None; mb_cols * mb_rows]; frames.len()];
    for r in &dump.records {
        if dump.intra_frames.contains(&r.frame) {
            continue;
        }
        if r.mb_row >= mb_rows || r.mb_col >= mb_cols {
            return Err(err(format!(
                "macroblock ({}, {}) outside frame {}",
                r.mb_row, r.mb_col, r.frame
            )));
        }
        let m = r.mb_row * mb_cols + r.mb_col;
        let seen = transform[r.frame][m].get_or_insert(r.transform);
        if *seen != r.transform {
            return Err(err(format!(
                "mixed transform sizes in frame {} macroblock {m}",
                r.frame
            )));
        }
        let mb = &mut frames[r.frame].macroblocks[m];
        if mb.transform_size() != r.transform {
            mb.residuals = Residuals::empty(r.transform);
        }
        let count = usize::from(r.total_coeff);
        match &mut mb.residuals {
            Residuals::T4(blocks) => {
                blocks[r.blk_idx] = ResidualBlock::first_slots(count, std::iter::repeat(1));
                if r.has_dc {
                    blocks[r.blk_idx].has_nonzero_dc = true;
                    mb.mb_type = MbType::Intra16x16(0);
                    mb.mvds.clear();
                }
            }
            Residuals::T8(blocks) => {
                blocks[r.blk_idx] = ResidualBlock::first_slots(count, std::iter::repeat(1));
            }
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::random::random_frame;
    use rand::SeedableRng;

    #[test]
    fn dump_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let frames = vec![
            random_frame(&mut rng, FrameKind::I, 32, 32),
            random_frame(&mut rng, FrameKind::P, 32, 32),
        ];
        let dump = dump_frames(&frames);
        let text = write_dump(&dump);
        assert_eq!(parse_dump(&text).unwrap(), dump);
        assert_eq!(dump.frame_count(), 2);

        let rebuilt = frames_from_dump(&dump).unwrap();
        assert_eq!(rebuilt.len(), 2);
        assert_eq!(rebuilt[0].kind, FrameKind::I);
        assert_eq!(dump_frames(&rebuilt), dump);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(parse_dump("0 0 0 0 4 3").unwrap_err().line, 1);
        assert!(parse_dump("# x\n0 0 0 16 4 3 0").is_err());
        assert!(parse_dump("0 0 0 0 8 65 0").is_err());
        assert!(parse_dump("0 0 0 0 5 3 0").is_err());
        assert!(parse_dump("0 0 0 0 4 3 2").is_err());
        let ok = parse_dump("\n# size 16 16\n0 0 0 3 8 40 0\n").unwrap();
        assert_eq!(ok.records[0].total_coeff, 40);
        assert_eq!(ok.size, Some((16, 16)));
    }
}
