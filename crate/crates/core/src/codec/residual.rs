//! Residual coefficient blocks and their ECV v1 coding.
//!
//! Layout of one block:
//!
//! ```text
//! [dc bit]                       only inside Intra_16x16 macroblocks
//! ue(total_coeff) ue(trailing_ones)
//! trailing_ones x sign bit       1 = negative
//! per level: ue(magnitude - 1), sign bit
//! ue(total_zeros)                only when total_coeff > 0
//! ue(run_before)...              while zeros remain, for all but the last coefficient
//! ```
//!
//! Coefficient order follows CAVLC: trailing ones and levels are listed from
//! the highest scan position down.

use super::bits::{BitReader, BitWriter};
use super::map::{ElementClass, EncryptableBitMap};
use super::CodecError;

/// One non-trailing-one coefficient value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Level {
    pub magnitude: u16,
    pub negative: bool,
}

impl Level {
    pub fn value(self) -> i32 {
        let m = i32::from(self.magnitude);
        if self.negative {
            -m
        } else {
            m
        }
    }
}

/// A residual block with `N` coefficient slots (16 for 4x4, 64 for 8x8).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResidualBlock<const N: usize> {
    pub total_coeff: u8,
    pub trailing_ones: u8,
    /// One entry per trailing one; `true` means -1.
    pub trailing_signs: Vec<bool>,
    pub levels: Vec<Level>,
    pub total_zeros: u8,
    pub run_before: Vec<u8>,
    /// Only serialized (and only allowed to be set) inside Intra_16x16 macroblocks.
    pub has_nonzero_dc: bool,
}

pub type ResidualBlock4 = ResidualBlock<16>;
pub type ResidualBlock8 = ResidualBlock<64>;

impl<const N: usize> Default for ResidualBlock<N> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<const N: usize> ResidualBlock<N> {
    pub const SLOTS: usize = N;

    pub fn empty() -> Self {
        Self {
            total_coeff: 0,
            trailing_ones: 0,
            trailing_signs: Vec::new(),
            levels: Vec::new(),
            total_zeros: 0,
            run_before: Vec::new(),
            has_nonzero_dc: false,
        }
    }

    /// Builds the block that codes `coeffs` (scan order, lowest frequency first).
    pub fn from_coefficients(coeffs: &[i32; N]) -> Self {
        let nonzero: Vec<usize> = (0..N).filter(|&i| coeffs[i] != 0).collect();
        let total_coeff = nonzero.len();
        if total_coeff == 0 {
            return Self::empty();
        }
        // Highest frequency first.
        let values: Vec<i32> = nonzero.iter().rev().map(|&i| coeffs[i]).collect();
        let trailing_ones = values.iter().take(3).take_while(|v| v.abs() == 1).count();
        let trailing_signs = values[..trailing_ones].iter().map(|&v| v < 0).collect();
        let levels = values[trailing_ones..]
            .iter()
            .map(|&v| Level {
                magnitude: v.unsigned_abs() as u16,
                negative: v < 0,
            })
            .collect();
        let last = *nonzero.last().unwrap();
        let total_zeros = last + 1 - total_coeff;
        let mut run_before = Vec::new();
        let mut zeros_left = total_zeros;
        let positions: Vec<usize> = nonzero.iter().rev().copied().collect();
        for i in 0..total_coeff - 1 {
            if zeros_left == 0 {
                break;
            }
            let run = positions[i] - positions[i + 1] - 1;
            run_before.push(run as u8);
            zeros_left -= run;
        }
        Self {
            total_coeff: total_coeff as u8,
            trailing_ones: trailing_ones as u8,
            trailing_signs,
            levels,
            total_zeros: total_zeros as u8,
            run_before,
            has_nonzero_dc: false,
        }
    }

    /// Block whose first `count` scan slots hold nonzero values.
    pub fn first_slots(count: usize, values: impl IntoIterator<Item = i32>) -> Self {
        let mut coeffs = [0i32; N];
        let mut it = values.into_iter();
        for c in coeffs.iter_mut().take(count.min(N)) {
            *c = it.next().filter(|&v| v != 0).unwrap_or(1);
        }
        Self::from_coefficients(&coeffs)
    }

    /// Reconstructs the coefficient array in scan order.
    pub fn coefficients(&self) -> Result<[i32; N], CodecError> {
        self.validate()?;
        let mut out = [0i32; N];
        let tc = usize::from(self.total_coeff);
        if tc == 0 {
            return Ok(out);
        }
        let values: Vec<i32> = self
            .trailing_signs
            .iter()
            .map(|&neg| if neg { -1 } else { 1 })
            .chain(self.levels.iter().map(|l| l.value()))
            .collect();
        let mut runs = vec![0usize; tc];
        let mut zeros_left = usize::from(self.total_zeros);
        for (i, &r) in self.run_before.iter().enumerate() {
            runs[i] = usize::from(r);
            zeros_left -= usize::from(r);
        }
        runs[tc - 1] = zeros_left;
        let mut pos: isize = -1;
        for i in (0..tc).rev() {
            pos += runs[i] as isize + 1;
            out[pos as usize] = values[i];
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let tc = usize::from(self.total_coeff);
        let t1 = usize::from(self.trailing_ones);
        if tc > N {
            return Err(CodecError::Invariant("total_coeff exceeds block slots"));
        }
        if t1 > tc.min(3) {
            return Err(CodecError::Invariant("trailing_ones out of range"));
        }
        if self.trailing_signs.len() != t1 {
            return Err(CodecError::Invariant("trailing sign count mismatch"));
        }
        if self.levels.len() != tc - t1 {
            return Err(CodecError::Invariant("level count mismatch"));
        }
        if self.levels.iter().any(|l| l.magnitude == 0) {
            return Err(CodecError::Invariant("zero level magnitude"));
        }
        if tc == 0 && (self.total_zeros != 0 || !self.run_before.is_empty()) {
            return Err(CodecError::Invariant("zeros coded for an empty block"));
        }
        if tc + usize::from(self.total_zeros) > N {
            return Err(CodecError::Invariant("coefficients overflow block slots"));
        }
        if self.run_before.len() != expected_runs(tc, self.total_zeros, &self.run_before)? {
            return Err(CodecError::Invariant("run_before count mismatch"));
        }
        Ok(())
    }

    /// Writes the block, recording encryptable bits relative to `base`.
    pub fn write(
        &self,
        w: &mut BitWriter,
        with_dc: bool,
        base: u64,
        map: &mut EncryptableBitMap,
    ) -> Result<(), CodecError> {
        self.validate()?;
        if with_dc {
            w.put_bit(self.has_nonzero_dc)?;
        } else if self.has_nonzero_dc {
            return Err(CodecError::Invariant("dc flag outside Intra_16x16"));
        }
        w.put_ue(u32::from(self.total_coeff))?;
        w.put_ue(u32::from(self.trailing_ones))?;
        for &neg in &self.trailing_signs {
            map.push(base + w.bit_len(), ElementClass::ResSign);
            w.put_bit(neg)?;
        }
        for level in &self.levels {
            w.put_ue(u32::from(level.magnitude) - 1)?;
            map.push(base + w.bit_len(), ElementClass::ResLevelLast);
            w.put_bit(level.negative)?;
        }
        if self.total_coeff > 0 {
            w.put_ue(u32::from(self.total_zeros))?;
            for &r in &self.run_before {
                w.put_ue(u32::from(r))?;
            }
        }
        Ok(())
    }

    pub fn read(
        r: &mut BitReader<'_>,
        with_dc: bool,
        base: u64,
        map: &mut EncryptableBitMap,
    ) -> Result<Self, CodecError> {
        let has_nonzero_dc = with_dc && r.get_bit()?;
        let total_coeff = r.get_ue()?;
        if total_coeff as usize > N {
            return Err(CodecError::Invariant("total_coeff exceeds block slots"));
        }
        let trailing_ones = r.get_ue()?;
        if trailing_ones > total_coeff.min(3) {
            return Err(CodecError::Invariant("trailing_ones out of range"));
        }
        let mut trailing_signs = Vec::with_capacity(trailing_ones as usize);
        for _ in 0..trailing_ones {
            map.push(base + r.position(), ElementClass::ResSign);
            trailing_signs.push(r.get_bit()?);
        }
        let mut levels = Vec::with_capacity((total_coeff - trailing_ones) as usize);
        for _ in trailing_ones..total_coeff {
            let m = r.get_ue()?;
            let magnitude = u16::try_from(m + 1).map_err(|_| CodecError::Invariant("level magnitude overflow"))?;
            map.push(base + r.position(), ElementClass::ResLevelLast);
            let negative = r.get_bit()?;
            levels.push(Level { magnitude, negative });
        }
        let mut total_zeros = 0;
        let mut run_before = Vec::new();
        if total_coeff > 0 {
            let tz = r.get_ue()?;
            if (total_coeff + tz) as usize > N {
                return Err(CodecError::Invariant("coefficients overflow block slots"));
            }
            total_zeros = tz as u8;
            let mut zeros_left = tz;
            for _ in 0..total_coeff - 1 {
                if zeros_left == 0 {
                    break;
                }
                let run = r.get_ue()?;
                if run > zeros_left {
                    return Err(CodecError::Invariant("run_before exceeds zeros left"));
                }
                run_before.push(run as u8);
                zeros_left -= run;
            }
        }
        Ok(Self {
            total_coeff: total_coeff as u8,
            trailing_ones: trailing_ones as u8,
            trailing_signs,
            levels,
            total_zeros,
            run_before,
            has_nonzero_dc,
        })
    }
}

/// Number of run_before values the coding rule emits for these runs.
fn expected_runs(tc: usize, total_zeros: u8, runs: &[u8]) -> Result<usize, CodecError> {
    let mut zeros_left = usize::from(total_zeros);
    let mut coded = 0;
    for i in 0..tc.saturating_sub(1) {
        if zeros_left == 0 {
            break;
        }
        let Some(&r) = runs.get(i) else {
            return Err(CodecError::Invariant("run_before count mismatch"));
        };
        if usize::from(r) > zeros_left {
            return Err(CodecError::Invariant("run_before exceeds zeros left"));
        }
        zeros_left -= usize::from(r);
        coded += 1;
    }
    Ok(coded)
}
