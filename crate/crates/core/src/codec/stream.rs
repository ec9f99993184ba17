//! Multi-frame ECV files: the magic `ECV1` followed by frame records.

use super::frame::{read_frame_record, serialize_frame, CodedFrame, ParsedFrame, RecordHeader};
use super::CodecError;

pub const STREAM_MAGIC: &[u8; 4] = b"ECV1";

pub fn write_stream<'a>(frames: impl IntoIterator<Item = &'a CodedFrame>) -> Result<Vec<u8>, CodecError> {
    let mut out = STREAM_MAGIC.to_vec();
    for f in frames {
        let (bytes, _) = serialize_frame(f)?;
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

/// Splits a stream into its frame records using only the record headers.
pub fn record_slices(bytes: &[u8]) -> Result<Vec<&[u8]>, CodecError> {
    let mut rest = strip_magic(bytes)?;
    let mut out = Vec::new();
    while !rest.is_empty() {
        let header = RecordHeader::parse(rest)?;
        let len = header.record_len();
        if rest.len() < len {
            return Err(CodecError::Truncated);
        }
        let (rec, tail) = rest.split_at(len);
        out.push(rec);
        rest = tail;
    }
    Ok(out)
}

pub fn parse_stream(bytes: &[u8]) -> Result<Vec<CodedFrame>, CodecError> {
    EcvReader::new(bytes)?.map(|r| r.map(|p| p.frame)).collect()
}

fn strip_magic(bytes: &[u8]) -> Result<&[u8], CodecError> {
    bytes.strip_prefix(STREAM_MAGIC.as_slice()).ok_or(CodecError::BadMagic)
}

/// Iterator over the parsed records of a stream.
pub struct EcvReader<'a> {
    rest: &'a [u8],
    failed: bool,
}

impl<'a> EcvReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, CodecError> {
        Ok(Self {
            rest: strip_magic(bytes)?,
            failed: false,
        })
    }
}

impl Iterator for EcvReader<'_> {
    type Item = Result<ParsedFrame, CodecError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.rest.is_empty() || self.failed {
            return None;
        }
        match read_frame_record(self.rest) {
            Ok(p) => {
                self.rest = &self.rest[p.record_len..];
                Some(Ok(p))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
