//! Macroblock syntax and frame records.
//!
//! A frame record is a 9-byte header (kind, width, height, payload bit
//! length; big-endian) followed by the MSB-first payload padded with zero
//! bits. Per macroblock the payload carries:
//!
//! ```text
//! ue(mb_type)
//! transform_8x8 bit              Inter and Intra NxN only
//! se(dx) se(dy)                  Inter only, one 16x16 partition
//! per IPM: mp flag [3 bits]      Intra NxN only, 16 (4x4) or 4 (8x8) entries
//! residual blocks                16 x 4x4 or 4 x 8x8, raster order inside the MB
//! ```
//!
//! mb_type code numbers follow H.264: in I frames 0 is I_NxN and
//! 1..=24 are Intra_16x16; in P frames 0 is the 16x16 inter partition, 5 is
//! I_NxN and 6..=29 are Intra_16x16.

use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter};
use super::map::{ElementClass, EncryptableBitMap};
use super::residual::{ResidualBlock4, ResidualBlock8};
use super::CodecError;

pub const FRAME_HEADER_LEN: usize = 9;
const HEADER_BITS: u64 = (FRAME_HEADER_LEN * 8) as u64;

/// P-frame mb_type codes of Intra_16x16 whose last bit may be flipped.
pub const P_INTRA16_ENCRYPTABLE: [u32; 12] = [7, 8, 11, 12, 15, 16, 19, 20, 23, 24, 27, 28];

const P_INTER_CODE: u32 = 0;
const P_NXN_CODE: u32 = 5;
const P_INTRA16_BASE: u32 = 6;
const I_NXN_CODE: u32 = 0;
const I_INTRA16_BASE: u32 = 1;
pub const INTRA16_TYPES: u8 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
}

impl FrameKind {
    pub fn byte(self) -> u8 {
        match self {
            FrameKind::I => b'I',
            FrameKind::P => b'P',
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'I' => Some(FrameKind::I),
            b'P' => Some(FrameKind::P),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MbType {
    Inter,
    Intra4x4,
    Intra8x8,
    /// Intra_16x16 with its type index 0..24 (prediction mode and CBP class).
    Intra16x16(u8),
}

impl MbType {
    pub fn is_intra(self) -> bool {
        !matches!(self, MbType::Inter)
    }

    pub fn code(self, kind: FrameKind) -> Result<u32, CodecError> {
        match (kind, self) {
            (FrameKind::I, MbType::Inter) => Err(CodecError::Invariant("inter macroblock in I frame")),
            (_, MbType::Intra16x16(i)) if i >= INTRA16_TYPES => {
                Err(CodecError::Invariant("Intra_16x16 index out of range"))
            }
            (FrameKind::I, MbType::Intra4x4 | MbType::Intra8x8) => Ok(I_NXN_CODE),
            (FrameKind::I, MbType::Intra16x16(i)) => Ok(I_INTRA16_BASE + u32::from(i)),
            (FrameKind::P, MbType::Inter) => Ok(P_INTER_CODE),
            (FrameKind::P, MbType::Intra4x4 | MbType::Intra8x8) => Ok(P_NXN_CODE),
            (FrameKind::P, MbType::Intra16x16(i)) => Ok(P_INTRA16_BASE + u32::from(i)),
        }
    }

    /// Whether the last bit of this type's codeword is selectable.
    pub fn last_bit_encryptable(self, kind: FrameKind) -> bool {
        match (kind, self) {
            (FrameKind::I, MbType::Intra16x16(_)) => true,
            (FrameKind::P, MbType::Intra16x16(_)) => self
                .code(kind)
                .map(|c| P_INTRA16_ENCRYPTABLE.contains(&c))
                .unwrap_or(false),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformSize {
    T4,
    T8,
}

/// Motion vector difference in quarter-pel units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Mvd {
    pub dx: i32,
    pub dy: i32,
}

/// Intra prediction mode code: most-probable flag, else a 3-bit remaining mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ipm {
    MostProbable,
    Remaining(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Residuals {
    T4(Vec<ResidualBlock4>),
    T8(Vec<ResidualBlock8>),
}

impl Residuals {
    pub fn empty(size: TransformSize) -> Self {
        match size {
            TransformSize::T4 => Residuals::T4(vec![ResidualBlock4::empty(); 16]),
            TransformSize::T8 => Residuals::T8(vec![ResidualBlock8::empty(); 4]),
        }
    }

    pub fn transform_size(&self) -> TransformSize {
        match self {
            Residuals::T4(_) => TransformSize::T4,
            Residuals::T8(_) => TransformSize::T8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Macroblock {
    pub mb_type: MbType,
    /// Exactly one entry for inter macroblocks, none for intra.
    pub mvds: Vec<Mvd>,
    pub ipms: Vec<Ipm>,
    pub residuals: Residuals,
}

impl Macroblock {
    /// Inter macroblock with no residual.
    pub fn skip_like(mvd: Mvd) -> Self {
        Self {
            mb_type: MbType::Inter,
            mvds: vec![mvd],
            ipms: Vec::new(),
            residuals: Residuals::empty(TransformSize::T4),
        }
    }

    pub fn transform_size(&self) -> TransformSize {
        self.residuals.transform_size()
    }

    pub fn validate(&self, kind: FrameKind) -> Result<(), CodecError> {
        self.mb_type.code(kind)?;
        let size = self.transform_size();
        match self.mb_type {
            MbType::Inter => {
                if self.mvds.len() != 1 || !self.ipms.is_empty() {
                    return Err(CodecError::Invariant("inter macroblock needs exactly one MVD"));
                }
            }
            MbType::Intra4x4 | MbType::Intra8x8 => {
                let (want_size, want_ipms) = if self.mb_type == MbType::Intra4x4 {
                    (TransformSize::T4, 16)
                } else {
                    (TransformSize::T8, 4)
                };
                if size != want_size {
                    return Err(CodecError::Invariant("intra NxN transform size mismatch"));
                }
                if self.ipms.len() != want_ipms || !self.mvds.is_empty() {
                    return Err(CodecError::Invariant("intra NxN IPM count mismatch"));
                }
                if self.ipms.iter().any(|m| matches!(m, Ipm::Remaining(r) if *r > 7)) {
                    return Err(CodecError::Invariant("remaining IPM exceeds 3 bits"));
                }
            }
            MbType::Intra16x16(_) => {
                if size != TransformSize::T4 || !self.ipms.is_empty() || !self.mvds.is_empty() {
                    return Err(CodecError::Invariant("Intra_16x16 layout mismatch"));
                }
            }
        }
        match &self.residuals {
            Residuals::T4(blocks) if blocks.len() != 16 => Err(CodecError::Invariant("T4 macroblock needs 16 blocks")),
            Residuals::T8(blocks) if blocks.len() != 4 => Err(CodecError::Invariant("T8 macroblock needs 4 blocks")),
            _ => Ok(()),
        }
    }

    fn write(
        &self,
        kind: FrameKind,
        w: &mut BitWriter,
        base: u64,
        map: &mut EncryptableBitMap,
    ) -> Result<(), CodecError> {
        self.validate(kind)?;
        let code = self.mb_type.code(kind)?;
        w.put_ue(code)?;
        if self.mb_type.last_bit_encryptable(kind) {
            map.push(base + w.bit_len() - 1, ElementClass::MbtypeLast);
        }
        if matches!(self.mb_type, MbType::Inter | MbType::Intra4x4 | MbType::Intra8x8) {
            w.put_bit(self.transform_size() == TransformSize::T8)?;
        }
        for mvd in &self.mvds {
            for c in [mvd.dx, mvd.dy] {
                w.put_se(c)?;
                if c != 0 {
                    map.push(base + w.bit_len() - 1, ElementClass::MvdLast);
                }
            }
        }
        for ipm in &self.ipms {
            match *ipm {
                Ipm::MostProbable => w.put_bit(true)?,
                Ipm::Remaining(m) => {
                    w.put_bit(false)?;
                    for i in 0..3 {
                        map.push(base + w.bit_len(), ElementClass::IpmBits);
                        w.put_bit((m >> (2 - i)) & 1 == 1)?;
                    }
                }
            }
        }
        let with_dc = matches!(self.mb_type, MbType::Intra16x16(_));
        match &self.residuals {
            Residuals::T4(blocks) => {
                for b in blocks {
                    b.write(w, with_dc, base, map)?;
                }
            }
            Residuals::T8(blocks) => {
                for b in blocks {
                    b.write(w, false, base, map)?;
                }
            }
        }
        Ok(())
    }

    fn read(
        kind: FrameKind,
        r: &mut BitReader<'_>,
        base: u64,
        map: &mut EncryptableBitMap,
    ) -> Result<Self, CodecError> {
        let code = r.get_ue()?;
        let code_end = base + r.position() - 1;
        let nxn_or_inter = |r: &mut BitReader<'_>| -> Result<TransformSize, CodecError> {
            Ok(if r.get_bit()? {
                TransformSize::T8
            } else {
                TransformSize::T4
            })
        };
        let (mb_type, size) = match (kind, code) {
            (FrameKind::I, I_NXN_CODE) | (FrameKind::P, P_NXN_CODE) => {
                let size = nxn_or_inter(r)?;
                let t = if size == TransformSize::T8 {
                    MbType::Intra8x8
                } else {
                    MbType::Intra4x4
                };
                (t, size)
            }
            (FrameKind::P, P_INTER_CODE) => (MbType::Inter, nxn_or_inter(r)?),
            (FrameKind::I, c) if (I_INTRA16_BASE..I_INTRA16_BASE + 24).contains(&c) => {
                (MbType::Intra16x16((c - I_INTRA16_BASE) as u8), TransformSize::T4)
            }
            (FrameKind::P, c) if (P_INTRA16_BASE..P_INTRA16_BASE + 24).contains(&c) => {
                (MbType::Intra16x16((c - P_INTRA16_BASE) as u8), TransformSize::T4)
            }
            _ => return Err(CodecError::Syntax("unknown mb_type")),
        };
        if mb_type.last_bit_encryptable(kind) {
            map.push(code_end, ElementClass::MbtypeLast);
        }
        let mut mvds = Vec::new();
        if mb_type == MbType::Inter {
            let dx = r.get_se()?;
            if dx != 0 {
                map.push(base + r.position() - 1, ElementClass::MvdLast);
            }
            let dy = r.get_se()?;
            if dy != 0 {
                map.push(base + r.position() - 1, ElementClass::MvdLast);
            }
            mvds.push(Mvd { dx, dy });
        }
        let n_ipms = match mb_type {
            MbType::Intra4x4 => 16,
            MbType::Intra8x8 => 4,
            _ => 0,
        };
        let mut ipms = Vec::with_capacity(n_ipms);
        for _ in 0..n_ipms {
            if r.get_bit()? {
                ipms.push(Ipm::MostProbable);
            } else {
                let mut m = 0u8;
                for _ in 0..3 {
                    map.push(base + r.position(), ElementClass::IpmBits);
                    m = (m << 1) | u8::from(r.get_bit()?);
                }
                ipms.push(Ipm::Remaining(m));
            }
        }
        let with_dc = matches!(mb_type, MbType::Intra16x16(_));
        let residuals = match size {
            TransformSize::T4 => Residuals::T4(
                (0..16)
                    .map(|_| ResidualBlock4::read(r, with_dc, base, map))
                    .collect::<Result<_, _>>()?,
            ),
            TransformSize::T8 => Residuals::T8(
                (0..4)
                    .map(|_| ResidualBlock8::read(r, false, base, map))
                    .collect::<Result<_, _>>()?,
            ),
        };
        Ok(Self {
            mb_type,
            mvds,
            ipms,
            residuals,
        })
    }
}

/// One coded picture: luma macroblocks in raster order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodedFrame {
    pub kind: FrameKind,
    pub width: u16,
    pub height: u16,
    pub macroblocks: Vec<Macroblock>,
}

impl CodedFrame {
    /// Frame of residual-free inter macroblocks with zero MVDs (or intra 4x4 for I frames).
    pub fn blank(kind: FrameKind, width: u16, height: u16) -> Self {
        let n = usize::from(width / 16) * usize::from(height / 16);
        let mb = match kind {
            FrameKind::P => Macroblock::skip_like(Mvd::default()),
            FrameKind::I => Macroblock {
                mb_type: MbType::Intra4x4,
                mvds: Vec::new(),
                ipms: vec![Ipm::MostProbable; 16],
                residuals: Residuals::empty(TransformSize::T4),
            },
        };
        Self {
            kind,
            width,
            height,
            macroblocks: vec![mb; n],
        }
    }

    pub fn mb_cols(&self) -> usize {
        usize::from(self.width / 16)
    }

    pub fn mb_rows(&self) -> usize {
        usize::from(self.height / 16)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        check_dims(self.width, self.height).ok_or(CodecError::Invariant("frame dimensions"))?;
        if self.macroblocks.len() != self.mb_cols() * self.mb_rows() {
            return Err(CodecError::Invariant("macroblock count mismatch"));
        }
        for mb in &self.macroblocks {
            mb.validate(self.kind)?;
        }
        Ok(())
    }
}

fn check_dims(width: u16, height: u16) -> Option<()> {
    (width > 0 && height > 0 && width.is_multiple_of(16) && height.is_multiple_of(16)).then_some(())
}

/// Serializes one frame record and lists its encryptable bits (absolute offsets).
pub fn serialize_frame(frame: &CodedFrame) -> Result<(Vec<u8>, EncryptableBitMap), CodecError> {
    frame.validate()?;
    let mut w = BitWriter::with_limit(u64::from(u32::MAX));
    let mut map = EncryptableBitMap::default();
    for mb in &frame.macroblocks {
        mb.write(frame.kind, &mut w, HEADER_BITS, &mut map)?;
    }
    let bits = w.bit_len() as u32;
    let payload = w.into_bytes();
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.push(frame.kind.byte());
    out.extend_from_slice(&frame.width.to_be_bytes());
    out.extend_from_slice(&frame.height.to_be_bytes());
    out.extend_from_slice(&bits.to_be_bytes());
    out.extend_from_slice(&payload);
    Ok((out, map))
}

/// Header fields of a frame record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub kind: FrameKind,
    pub width: u16,
    pub height: u16,
    pub payload_bits: u32,
}

impl RecordHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(CodecError::Truncated);
        }
        let kind = FrameKind::from_byte(bytes[0]).ok_or(CodecError::MalformedHeader("frame kind"))?;
        let width = u16::from_be_bytes([bytes[1], bytes[2]]);
        let height = u16::from_be_bytes([bytes[3], bytes[4]]);
        check_dims(width, height).ok_or(CodecError::MalformedHeader("frame dimensions"))?;
        let payload_bits = u32::from_be_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
        Ok(Self {
            kind,
            width,
            height,
            payload_bits,
        })
    }

    /// Total record length in bytes, header included.
    pub fn record_len(&self) -> usize {
        FRAME_HEADER_LEN + (self.payload_bits as usize).div_ceil(8)
    }
}

/// A parsed record together with its encryptable-bit map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFrame {
    pub frame: CodedFrame,
    pub map: EncryptableBitMap,
    pub record_len: usize,
}

/// Parses the frame record at the start of `bytes`; trailing bytes are ignored.
pub fn read_frame_record(bytes: &[u8]) -> Result<ParsedFrame, CodecError> {
    let header = RecordHeader::parse(bytes)?;
    let record_len = header.record_len();
    if bytes.len() < record_len {
        return Err(CodecError::Truncated);
    }
    let payload = &bytes[FRAME_HEADER_LEN..record_len];
    let mut r = BitReader::with_bit_len(payload, u64::from(header.payload_bits));
    let mut map = EncryptableBitMap::default();
    let n = usize::from(header.width / 16) * usize::from(header.height / 16);
    let mut macroblocks = Vec::with_capacity(n);
    for _ in 0..n {
        let mb = Macroblock::read(header.kind, &mut r, HEADER_BITS, &mut map).map_err(|e| match e {
            // running out of declared payload bits is a syntax error, not a short buffer
            CodecError::Truncated => CodecError::Syntax("payload ends inside a macroblock"),
            other => other,
        })?;
        macroblocks.push(mb);
    }
    if r.remaining() != 0 {
        return Err(CodecError::Syntax("unconsumed payload bits"));
    }
    let frame = CodedFrame {
        kind: header.kind,
        width: header.width,
        height: header.height,
        macroblocks,
    };
    frame.validate()?;
    Ok(ParsedFrame { frame, map, record_len })
}

/// Parses exactly one frame record.
pub fn parse_frame(bytes: &[u8]) -> Result<CodedFrame, CodecError> {
    let parsed = read_frame_record(bytes)?;
    if parsed.record_len != bytes.len() {
        return Err(CodecError::Syntax("bytes after frame record"));
    }
    Ok(parsed.frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::residual::Level;

    fn frame_with(kind: FrameKind, mb: Macroblock) -> CodedFrame {
        CodedFrame {
            kind,
            width: 16,
            height: 16,
            macroblocks: vec![mb],
        }
    }

    fn get_bit(bytes: &[u8], off: u64) -> bool {
        bytes[(off / 8) as usize] & (0x80 >> (off % 8)) != 0
    }

    #[test]
    fn blank_inter_frame_has_empty_map() {
        let f = CodedFrame::blank(FrameKind::P, 352, 288);
        let (bytes, map) = serialize_frame(&f).unwrap();
        assert!(map.is_empty());
        assert_eq!(&bytes[..5], &[b'P', 0x01, 0x60, 0x01, 0x20]);
        assert_eq!(parse_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn p_frame_intra16_type_codes() {
        for i in 0..INTRA16_TYPES {
            let mb = Macroblock {
                mb_type: MbType::Intra16x16(i),
                mvds: vec![],
                ipms: vec![],
                residuals: Residuals::empty(TransformSize::T4),
            };
            let (_, map) = serialize_frame(&frame_with(FrameKind::P, mb.clone())).unwrap();
            let code = 6 + u32::from(i);
            let expected = usize::from(P_INTRA16_ENCRYPTABLE.contains(&code));
            assert_eq!(map.count(ElementClass::MbtypeLast), expected, "code {code}");
            let (_, map) = serialize_frame(&frame_with(FrameKind::I, mb)).unwrap();
            assert_eq!(map.count(ElementClass::MbtypeLast), 1);
        }
        // code 6 (index 0) and code 9 (index 3) pair with non-Intra_16x16 or other-CBP codes
        assert!(!MbType::Intra16x16(0).last_bit_encryptable(FrameKind::P));
        assert!(!MbType::Intra16x16(3).last_bit_encryptable(FrameKind::P));
        assert!(MbType::Intra16x16(5).last_bit_encryptable(FrameKind::P));
    }

    #[test]
    fn single_level_offset_found_by_bit_scan() {
        let mut coeffs = [0i32; 16];
        coeffs[0] = 2;
        let mut blocks = vec![ResidualBlock4::empty(); 16];
        blocks[0] = ResidualBlock4::from_coefficients(&coeffs);
        assert_eq!(
            blocks[0].levels,
            vec![Level {
                magnitude: 2,
                negative: false
            }]
        );
        let mb = Macroblock {
            mb_type: MbType::Inter,
            mvds: vec![Mvd::default()],
            ipms: vec![],
            residuals: Residuals::T4(blocks),
        };
        let f = frame_with(FrameKind::P, mb);
        let (bytes, map) = serialize_frame(&f).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map.count(ElementClass::ResLevelLast), 1);

        // Brute-force scan: the one payload bit whose flip negates the level.
        let total_bits = (bytes.len() * 8) as u64;
        let mut hits = Vec::new();
        for off in 72..total_bits {
            let mut b = bytes.clone();
            b[(off / 8) as usize] ^= 0x80 >> (off % 8);
            if let Ok(g) = parse_frame(&b) {
                if let Residuals::T4(bl) = &g.macroblocks[0].residuals {
                    if bl[0].coefficients().unwrap()[0] == -2
                        && g.macroblocks[0].residuals != f.macroblocks[0].residuals
                    {
                        let mut rest = g.clone();
                        rest.macroblocks[0].residuals = f.macroblocks[0].residuals.clone();
                        if rest == f {
                            hits.push(off);
                        }
                    }
                }
            }
        }
        assert_eq!(hits, vec![map.entries()[0].offset]);
        assert!(!get_bit(&bytes, hits[0]));
    }

    #[test]
    fn mvd_and_ipm_bits_listed() {
        let mb = Macroblock {
            mb_type: MbType::Inter,
            mvds: vec![Mvd { dx: 3, dy: 0 }],
            ipms: vec![],
            residuals: Residuals::empty(TransformSize::T8),
        };
        let (_, map) = serialize_frame(&frame_with(FrameKind::P, mb)).unwrap();
        assert_eq!(map.count(ElementClass::MvdLast), 1);

        let mut ipms = vec![Ipm::MostProbable; 4];
        ipms[2] = Ipm::Remaining(5);
        let mb = Macroblock {
            mb_type: MbType::Intra8x8,
            mvds: vec![],
            ipms,
            residuals: Residuals::empty(TransformSize::T8),
        };
        let f = frame_with(FrameKind::I, mb);
        let (bytes, map) = serialize_frame(&f).unwrap();
        assert_eq!(map.count(ElementClass::IpmBits), 3);
        assert_eq!(parse_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let f = CodedFrame::blank(FrameKind::P, 32, 32);
        let (bytes, _) = serialize_frame(&f).unwrap();
        assert_eq!(parse_frame(&bytes[..bytes.len() - 1]), Err(CodecError::Truncated));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_frame(&bad), Err(CodecError::MalformedHeader(_))));
        let mut bad = bytes.clone();
        bad[2] = 17;
        assert!(matches!(parse_frame(&bad), Err(CodecError::MalformedHeader(_))));
        let inter_in_i = frame_with(FrameKind::I, Macroblock::skip_like(Mvd::default()));
        assert!(matches!(serialize_frame(&inter_in_i), Err(CodecError::Invariant(_))));
    }
}
