//! Encrypt a stream in place of its sign and suffix bits and check that it
//! still parses to the same structure.

use cryptotrack::codec::random::random_small_frame;
use cryptotrack::codec::{parse_stream, write_stream};
use cryptotrack::crypto::{decrypt_stream, encrypt_stream, CipherKey};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frames: Vec<_> = (0..8).map(|_| random_small_frame(&mut rng)).collect();
    let plain = write_stream(&frames)?;
    let key = CipherKey::random(&mut rng);

    let enc = encrypt_stream(&plain, &key)?;
    let changed = plain.iter().zip(&enc).map(|(a, b)| (a ^ b).count_ones()).sum::<u32>();
    println!(
        "{} bytes, {changed} bits flipped, same length: {}",
        plain.len(),
        plain.len() == enc.len()
    );

    let scrambled = parse_stream(&enc)?;
    for (a, b) in frames.iter().zip(&scrambled) {
        assert_eq!(a.macroblocks.len(), b.macroblocks.len());
    }
    assert_eq!(decrypt_stream(&enc, &key)?, plain);
    println!("encrypted stream parses; decryption restores it");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
