use serde::{Deserialize, Serialize};

/// Syntax element a selectable bit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ElementClass {
    /// Last bit of a nonzero MVD codeword.
    MvdLast,
    /// Sign of a trailing one.
    ResSign,
    /// Sign (level suffix) bit of a level.
    ResLevelLast,
    /// Fixed-length remaining-mode bits of an intra prediction mode.
    IpmBits,
    /// Last bit of an Intra_16x16 mb_type codeword.
    MbtypeLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MapEntry {
    /// Absolute bit offset, MSB-first.
    pub offset: u64,
    pub class: ElementClass,
}

/// Ordered list of bit positions that may be flipped without breaking the syntax.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncryptableBitMap {
    entries: Vec<MapEntry>,
}

impl EncryptableBitMap {
    pub(crate) fn push(&mut self, offset: u64, class: ElementClass) {
        debug_assert!(self.entries.last().is_none_or(|e| e.offset < offset));
        self.entries.push(MapEntry { offset, class });
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn offsets(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.offset)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: ElementClass) -> usize {
        self.entries.iter().filter(|e| e.class == class).count()
    }
}
