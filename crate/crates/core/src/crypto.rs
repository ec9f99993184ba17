//! Format-compliant selective encryption of ECV streams.
//!
//! Keystream bit `i` (ChaCha20, MSB-first within each keystream byte) is
//! XORed into the `i`-th listed bit of a frame's [`EncryptableBitMap`]. Each
//! frame uses the nonce with the frame index XORed into its last 8 bytes, so
//! frames decrypt independently.

use std::path::Path;

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use rand::Rng;
use rayon::prelude::*;

use crate::codec::{read_frame_record, record_slices, CodecError, EncryptableBitMap, STREAM_MAGIC};

pub const KEY_FILE_LEN: usize = 44;

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("bit offset {offset} outside a {len}-byte frame")]
    OffsetOutOfRange { offset: u64, len: usize },
    #[error("key file must be {KEY_FILE_LEN} bytes, got {0}")]
    KeyLength(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 256-bit key and 96-bit base nonce.
#[derive(Clone, PartialEq, Eq)]
pub struct CipherKey {
    pub key: [u8; 32],
    pub nonce: [u8; 12],
}

impl std::fmt::Debug for CipherKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CipherKey(..)")
    }
}

impl CipherKey {
    pub fn new(key: [u8; 32], nonce: [u8; 12]) -> Self {
        Self { key, nonce }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        let mut nonce = [0u8; 12];
        rng.fill(&mut key);
        rng.fill(&mut nonce);
        Self { key, nonce }
    }

    /// Parses the 44-byte key-file layout: key then nonce.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != KEY_FILE_LEN {
            return Err(CryptoError::KeyLength(bytes.len()));
        }
        let mut key = [0u8; 32];
        let mut nonce = [0u8; 12];
        key.copy_from_slice(&bytes[..32]);
        nonce.copy_from_slice(&bytes[32..]);
        Ok(Self { key, nonce })
    }

    pub fn to_bytes(&self) -> [u8; KEY_FILE_LEN] {
        let mut out = [0u8; KEY_FILE_LEN];
        out[..32].copy_from_slice(&self.key);
        out[32..].copy_from_slice(&self.nonce);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CryptoError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CryptoError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn frame_nonce(&self, frame_index: u64) -> [u8; 12] {
        let mut n = self.nonce;
        for (b, x) in n[4..].iter_mut().zip(frame_index.to_be_bytes()) {
            *b ^= x;
        }
        n
    }

    fn keystream_bytes(&self, frame_index: u64, n_bytes: usize) -> Vec<u8> {
        let mut buf = vec![0u8; n_bytes];
        let mut cipher = ChaCha20::new(&self.key.into(), &self.frame_nonce(frame_index).into());
        cipher.apply_keystream(&mut buf);
        buf
    }
}

/// The first `n_bits` keystream bits for a frame.
pub fn keystream(key: &CipherKey, frame_index: u64, n_bits: usize) -> Vec<bool> {
    let bytes = key.keystream_bytes(frame_index, n_bits.div_ceil(8));
    (0..n_bits).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect()
}

fn xor_bitmap(
    bytes: &[u8],
    bitmap: &EncryptableBitMap,
    key: &CipherKey,
    frame_index: u64,
) -> Result<Vec<u8>, CryptoError> {
    let total_bits = bytes.len() as u64 * 8;
    if let Some(bad) = bitmap.offsets().find(|&o| o >= total_bits) {
        return Err(CryptoError::OffsetOutOfRange {
            offset: bad,
            len: bytes.len(),
        });
    }
    let mut out = bytes.to_vec();
    let ks = key.keystream_bytes(frame_index, bitmap.len().div_ceil(8));
    for (i, off) in bitmap.offsets().enumerate() {
        if ks[i / 8] & (0x80 >> (i % 8)) != 0 {
            out[(off / 8) as usize] ^= 0x80 >> (off % 8);
        }
    }
    Ok(out)
}

/// Encrypts one frame record given its bitmap.
pub fn encrypt_frame(
    bytes: &[u8],
    bitmap: &EncryptableBitMap,
    key: &CipherKey,
    frame_index: u64,
) -> Result<Vec<u8>, CryptoError> {
    xor_bitmap(bytes, bitmap, key, frame_index)
}

/// Inverse of [`encrypt_frame`]; XOR is an involution.
pub fn decrypt_frame(
    bytes: &[u8],
    bitmap: &EncryptableBitMap,
    key: &CipherKey,
    frame_index: u64,
) -> Result<Vec<u8>, CryptoError> {
    xor_bitmap(bytes, bitmap, key, frame_index)
}

/// Toggles one record in place of its plaintext/ciphertext, re-deriving the
/// bitmap by parsing (codeword lengths survive encryption).
pub fn toggle_record(record: &[u8], key: &CipherKey, frame_index: u64) -> Result<Vec<u8>, CryptoError> {
    let parsed = read_frame_record(record)?;
    xor_bitmap(record, &parsed.map, key, frame_index)
}

/// Encrypts (or decrypts) every record of an ECV stream, in parallel.
pub fn toggle_stream(stream: &[u8], key: &CipherKey) -> Result<Vec<u8>, CryptoError> {
    let records = record_slices(stream)?;
    let done: Vec<Vec<u8>> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| toggle_record(rec, key, i as u64))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(stream.len());
    out.extend_from_slice(STREAM_MAGIC);
    for d in done {
        out.extend_from_slice(&d);
    }
    Ok(out)
}

pub fn encrypt_stream(stream: &[u8], key: &CipherKey) -> Result<Vec<u8>, CryptoError> {
    toggle_stream(stream, key)
}

pub fn decrypt_stream(stream: &[u8], key: &CipherKey) -> Result<Vec<u8>, CryptoError> {
    toggle_stream(stream, key)
}
