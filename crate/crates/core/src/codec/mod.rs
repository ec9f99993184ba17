//! ECV v1: an H.264-style coded-video container.
//!
//! ECV keeps exactly the syntax needed for selective encryption and for
//! residual-density analysis: mb_type, one MVD per inter macroblock, intra
//! prediction modes and luma residual blocks. CAVLC tables are replaced by
//! Exp-Golomb coding of the block counts, with every sign a single bit.

mod bits;
pub mod dump;
mod frame;
mod map;
pub mod random;
mod residual;
mod stream;

pub use bits::{
    code_to_signed, egk_decode, egk_encode, egk_len, signed_eg0_encode, signed_to_code, BitReader, BitWriter,
};
pub use dump::{dump_frames, frames_from_dump, parse_dump, write_dump, CoeffDump, DumpError};
pub use frame::{
    parse_frame, read_frame_record, serialize_frame, CodedFrame, FrameKind, Ipm, Macroblock, MbType, Mvd, ParsedFrame,
    RecordHeader, Residuals, TransformSize, FRAME_HEADER_LEN, INTRA16_TYPES, P_INTRA16_ENCRYPTABLE,
};
pub use map::{ElementClass, EncryptableBitMap, MapEntry};
pub use residual::{Level, ResidualBlock, ResidualBlock4, ResidualBlock8};
pub use stream::{parse_stream, record_slices, write_stream, EcvReader, STREAM_MAGIC};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("bit writer overflow past {limit} bits")]
    Overflow { limit: u64 },
    #[error("truncated stream")]
    Truncated,
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("bad stream magic")]
    BadMagic,
    #[error("syntax error: {0}")]
    Syntax(&'static str),
    #[error("invariant violation: {0}")]
    Invariant(&'static str),
}
