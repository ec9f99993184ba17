//! Random valid frames covering every macroblock and block variant.
//!
//! Used by property tests, fuzz-style acceptance runs and the examples.

use rand::Rng;

use super::frame::{CodedFrame, FrameKind, Ipm, Macroblock, MbType, Mvd, Residuals, INTRA16_TYPES};
use super::residual::ResidualBlock;

/// Coefficient array with roughly `density` nonzero slots in expectation.
pub fn random_coefficients<const N: usize, R: Rng + ?Sized>(rng: &mut R, density: f64) -> [i32; N] {
    let mut c = [0i32; N];
    for v in c.iter_mut() {
        if rng.random_bool(density) {
            *v = match rng.random_range(0..4) {
                0 | 1 => {
                    if rng.random() {
                        1
                    } else {
                        -1
                    }
                }
                2 => rng.random_range(-6..=6),
                _ => rng.random_range(-400..=400),
            };
        }
    }
    c
}

pub fn random_block<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> ResidualBlock<N> {
    let density = match rng.random_range(0..4) {
        0 => 0.0,
        1 => 0.1,
        2 => 0.4,
        _ => 0.9,
    };
    ResidualBlock::from_coefficients(&random_coefficients::<N, R>(rng, density))
}

fn random_residuals<R: Rng + ?Sized>(rng: &mut R, t8: bool, with_dc: bool) -> Residuals {
    if t8 {
        Residuals::T8((0..4).map(|_| random_block::<64, R>(rng)).collect())
    } else {
        Residuals::T4(
            (0..16)
                .map(|_| {
                    let mut b = random_block::<16, R>(rng);
                    b.has_nonzero_dc = with_dc && rng.random();
                    b
                })
                .collect(),
        )
    }
}

fn random_ipms<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Ipm> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.4) {
                Ipm::MostProbable
            } else {
                Ipm::Remaining(rng.random_range(0..8))
            }
        })
        .collect()
}

pub fn random_macroblock<R: Rng + ?Sized>(rng: &mut R, kind: FrameKind) -> Macroblock {
    let choice = match kind {
        FrameKind::I => rng.random_range(1..4),
        FrameKind::P => rng.random_range(0..6).min(3),
    };
    match choice {
        0 => {
            let mvd = if rng.random_bool(0.3) {
                Mvd::default()
            } else {
                Mvd {
                    dx: rng.random_range(-128..=128),
                    dy: rng.random_range(-128..=128),
                }
            };
            Macroblock {
                mb_type: MbType::Inter,
                mvds: vec![mvd],
                ipms: Vec::new(),
                residuals: {
                    let t8 = rng.random_bool(0.3);
                    random_residuals(rng, t8, false)
                },
            }
        }
        1 => Macroblock {
            mb_type: MbType::Intra4x4,
            mvds: Vec::new(),
            ipms: random_ipms(rng, 16),
            residuals: random_residuals(rng, false, false),
        },
        2 => Macroblock {
            mb_type: MbType::Intra8x8,
            mvds: Vec::new(),
            ipms: random_ipms(rng, 4),
            residuals: random_residuals(rng, true, false),
        },
        _ => Macroblock {
            mb_type: MbType::Intra16x16(rng.random_range(0..INTRA16_TYPES)),
            mvds: Vec::new(),
            ipms: Vec::new(),
            residuals: random_residuals(rng, false, true),
        },
    }
}

/// Random frame of the given kind; dimensions are multiples of 16.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, kind: FrameKind, width: u16, height: u16) -> CodedFrame {
    let n = usize::from(width / 16) * usize::from(height / 16);
    CodedFrame {
        kind,
        width,
        height,
        macroblocks: (0..n).map(|_| random_macroblock(rng, kind)).collect(),
    }
}

/// Random frame with random kind and a small random size.
pub fn random_small_frame<R: Rng + ?Sized>(rng: &mut R) -> CodedFrame {
    let kind = if rng.random_bool(0.25) {
        FrameKind::I
    } else {
        FrameKind::P
    };
    let w = 16 * rng.random_range(1..=4);
    let h = 16 * rng.random_range(1..=3);
    random_frame(rng, kind, w, h)
}
