//! MSB-first bit cursor and Exp-Golomb codes.

use super::CodecError;

/// Longest Exp-Golomb prefix accepted by the reader.
const MAX_PREFIX: u32 = 31;

/// Append-only bit sink, MSB-first within each byte.
#[derive(Debug, Clone)]
pub struct BitWriter {
    buf: Vec<u8>,
    len: u64,
    limit: u64,
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl BitWriter {
    pub fn new() -> Self {
        Self::with_limit(u64::MAX)
    }

    /// A writer that refuses to grow past `limit` bits.
    pub fn with_limit(limit: u64) -> Self {
        Self {
            buf: Vec::new(),
            len: 0,
            limit,
        }
    }

    /// Number of bits written so far.
    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn put_bit(&mut self, bit: bool) -> Result<(), CodecError> {
        if self.len >= self.limit {
            return Err(CodecError::Overflow { limit: self.limit });
        }
        if self.len.is_multiple_of(8) {
            self.buf.push(0);
        }
        if bit {
            let last = self.buf.len() - 1;
            self.buf[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
        Ok(())
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn put_bits(&mut self, value: u64, n: u32) -> Result<(), CodecError> {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.put_bit((value >> i) & 1 == 1)?;
        }
        Ok(())
    }

    /// k-th order Exp-Golomb: `m` zeros, a one, then `m + k` suffix bits.
    pub fn put_egk(&mut self, value: u32, k: u32) -> Result<(), CodecError> {
        let w = u64::from(value) + (1u64 << k);
        let width = 64 - w.leading_zeros();
        let m = width - 1 - k;
        for _ in 0..m {
            self.put_bit(false)?;
        }
        self.put_bits(w, width)
    }

    pub fn put_ue(&mut self, value: u32) -> Result<(), CodecError> {
        self.put_egk(value, 0)
    }

    pub fn put_se(&mut self, value: i32) -> Result<(), CodecError> {
        self.put_ue(signed_to_code(value))
    }

    /// Returns the bytes, zero-padded to a byte boundary.
    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Bit source over a byte slice, bounded by an explicit bit length.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
    end: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self::with_bit_len(data, data.len() as u64 * 8)
    }

    /// Reader limited to the first `bits` bits of `data`.
    pub fn with_bit_len(data: &'a [u8], bits: u64) -> Self {
        let end = bits.min(data.len() as u64 * 8);
        Self { data, pos: 0, end }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.end - self.pos
    }

    pub fn get_bit(&mut self) -> Result<bool, CodecError> {
        if self.pos >= self.end {
            return Err(CodecError::Truncated);
        }
        let byte = self.data[(self.pos / 8) as usize];
        let bit = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn get_bits(&mut self, n: u32) -> Result<u64, CodecError> {
        debug_assert!(n <= 64);
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.get_bit()?);
        }
        Ok(v)
    }

    pub fn get_egk(&mut self, k: u32) -> Result<u32, CodecError> {
        let mut m = 0;
        while !self.get_bit()? {
            m += 1;
            if m > MAX_PREFIX {
                return Err(CodecError::Syntax("exp-golomb prefix too long"));
            }
        }
        let suffix = self.get_bits(m + k)?;
        let w = (1u64 << (m + k)) | suffix;
        u32::try_from(w - (1u64 << k)).map_err(|_| CodecError::Syntax("exp-golomb value overflow"))
    }

    pub fn get_ue(&mut self) -> Result<u32, CodecError> {
        self.get_egk(0)
    }

    pub fn get_se(&mut self) -> Result<i32, CodecError> {
        let code = self.get_ue()?;
        Ok(code_to_signed(code))
    }
}

/// Signed mapping: v > 0 -> 2v - 1, v <= 0 -> -2v.
pub fn signed_to_code(v: i32) -> u32 {
    if v > 0 {
        (v as u32) * 2 - 1
    } else {
        v.unsigned_abs() * 2
    }
}

pub fn code_to_signed(code: u32) -> i32 {
    if code % 2 == 1 {
        ((code / 2) + 1) as i32
    } else {
        -((code / 2) as i32)
    }
}

/// Bit string of the EGk codeword for `value` (`'0'`/`'1'` chars).
pub fn egk_encode(value: u32, k: u32) -> String {
    let mut w = BitWriter::new();
    w.put_egk(value, k).expect("unbounded writer");
    bits_to_string(&w.into_bytes(), egk_len(value, k))
}

/// Decodes a single EGk codeword given as a bit string.
pub fn egk_decode(bits: &str, k: u32) -> Result<u32, CodecError> {
    let (bytes, n) = string_to_bits(bits);
    let mut r = BitReader::with_bit_len(&bytes, n);
    let v = r.get_egk(k)?;
    if r.remaining() != 0 {
        return Err(CodecError::Syntax("trailing bits after codeword"));
    }
    Ok(v)
}

pub fn signed_eg0_encode(v: i32) -> String {
    egk_encode(signed_to_code(v), 0)
}

/// Length in bits of the EGk codeword for `value`.
pub fn egk_len(value: u32, k: u32) -> u64 {
    let w = u64::from(value) + (1u64 << k);
    let width = u64::from(64 - w.leading_zeros());
    2 * width - 1 - u64::from(k)
}

fn bits_to_string(bytes: &[u8], n: u64) -> String {
    (0..n)
        .map(|i| {
            if bytes[(i / 8) as usize] & (0x80 >> (i % 8)) != 0 {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

fn string_to_bits(bits: &str) -> (Vec<u8>, u64) {
    let mut w = BitWriter::new();
    for c in bits.chars() {
        w.put_bit(c == '1').expect("unbounded writer");
    }
    let n = w.bit_len();
    (w.into_bytes(), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eg0_table() {
        assert_eq!(egk_encode(0, 0), "1");
        assert_eq!(egk_encode(1, 0), "010");
        assert_eq!(egk_encode(2, 0), "011");
        assert_eq!(egk_encode(6, 0), "00111");
        assert_eq!(egk_encode(0, 1), "10");
        assert_eq!(egk_encode(3, 1), "0101");
    }

    #[test]
    fn eg0_matches_prefix_enumeration() {
        // Every 3-bit string decodes to exactly one EG0 value or is a strict prefix/invalid.
        let mut found = Vec::new();
        for pattern in 0u8..8 {
            let s: String = (0..3)
                .map(|i| if pattern & (4 >> i) != 0 { '1' } else { '0' })
                .collect();
            if let Ok(v) = egk_decode(&s, 0) {
                found.push((s, v));
            }
        }
        assert_eq!(found, vec![("010".to_string(), 1), ("011".to_string(), 2)]);
    }

    #[test]
    fn signed_examples() {
        assert_eq!(signed_eg0_encode(0), "1");
        assert_eq!(signed_eg0_encode(1), "010");
        assert_eq!(signed_eg0_encode(-1), "011");
        assert_eq!(signed_eg0_encode(3), "00110");
        assert_eq!(signed_eg0_encode(-3), "00111");
    }

    #[test]
    fn last_bit_flip_negates() {
        for v in -64i32..=64 {
            if v == 0 {
                continue;
            }
            let mut s: Vec<char> = signed_eg0_encode(v).chars().collect();
            let last = s.len() - 1;
            s[last] = if s[last] == '0' { '1' } else { '0' };
            let flipped: String = s.into_iter().collect();
            let decoded = code_to_signed(egk_decode(&flipped, 0).unwrap());
            assert_eq!(decoded, -v, "v = {v}");
            assert_eq!(flipped.len(), signed_eg0_encode(v).len());
        }
    }

    #[test]
    fn eg0_prefix_free() {
        let words: Vec<String> = (0u32..1024).map(|v| egk_encode(v, 0)).collect();
        for (i, a) in words.iter().enumerate() {
            for (j, b) in words.iter().enumerate() {
                if i != j {
                    assert!(!b.starts_with(a.as_str()), "{a} prefixes {b}");
                }
            }
        }
    }

    #[test]
    fn writer_limit_overflows() {
        let mut w = BitWriter::with_limit(4);
        w.put_bits(0b1010, 4).unwrap();
        assert!(matches!(w.put_bit(true), Err(CodecError::Overflow { .. })));
    }

    #[test]
    fn reader_stops_at_bit_len() {
        let data = [0xFFu8];
        let mut r = BitReader::with_bit_len(&data, 3);
        assert_eq!(r.get_bits(3).unwrap(), 0b111);
        assert!(matches!(r.get_bit(), Err(CodecError::Truncated)));
    }

    proptest! {
        #[test]
        fn egk_round_trip(v in 0u32..=u32::MAX - 16, k in 0u32..4) {
            let s = egk_encode(v, k);
            prop_assert_eq!(s.len() as u64, egk_len(v, k));
            prop_assert_eq!(egk_decode(&s, k).unwrap(), v);
        }

        #[test]
        fn write_then_read_bits(words in proptest::collection::vec((any::<u64>(), 1u32..=64), 1..20)) {
            let mut w = BitWriter::new();
            for &(v, n) in &words {
                w.put_bits(v, n).unwrap();
            }
            let n = w.bit_len();
            let bytes = w.into_bytes();
            let mut r = BitReader::with_bit_len(&bytes, n);
            for &(v, n) in &words {
                let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
                prop_assert_eq!(r.get_bits(n).unwrap(), v & mask);
            }
        }
    }
}
