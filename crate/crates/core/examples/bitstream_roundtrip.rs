//! Serialize a frame, parse it back, and list which bits may be encrypted.

use cryptotrack::codec::random::random_frame;
use cryptotrack::codec::{parse_frame, serialize_frame, BitReader, BitWriter, ElementClass, FrameKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Exp-Golomb codes at the bit level
    let mut w = BitWriter::new();
    for v in [0, 1, 2, 7] {
        w.put_ue(v)?;
    }
    w.put_se(-3)?;
    let bits = w.bit_len();
    let bytes = w.into_bytes();
    let mut r = BitReader::with_bit_len(&bytes, bits);
    let back: Vec<u32> = (0..4).map(|_| r.get_ue()).collect::<Result<_, _>>()?;
    println!("ue round trip {back:?}, se {}", r.get_se()?);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frame = random_frame(&mut rng, FrameKind::P, 64, 48);
    let (record, map) = serialize_frame(&frame)?;
    assert_eq!(parse_frame(&record)?, frame);
    println!("{} macroblocks in {} bytes", frame.macroblocks.len(), record.len());
    for class in [
        ElementClass::MvdLast,
        ElementClass::ResSign,
        ElementClass::ResLevelLast,
        ElementClass::IpmBits,
        ElementClass::MbtypeLast,
    ] {
        println!("  {class:?}: {} bits", map.count(class));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
