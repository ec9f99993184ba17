//! Feature heatmaps with track overlays, as binary PPM images.

use crate::clustering::BLOCK_PIXELS;
use crate::features::{FeatureImage, DNRC_CAP};
use crate::tracking::TrajectoryRow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = (y as usize * self.width + x as usize) * 3;
            self.data[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Black through red to yellow as the value approaches the cap.
pub fn heat(value: u8) -> [u8; 3] {
    let t = f64::from(value.min(DNRC_CAP)) / f64::from(DNRC_CAP);
    let r = (t * 2.0).min(1.0);
    let g = (t * 2.0 - 1.0).max(0.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0]
}

/// Distinct-ish color per track id.
pub fn id_color(id: u64) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 6] = [
        [0, 200, 255],
        [0, 255, 100],
        [255, 0, 200],
        [120, 120, 255],
        [255, 255, 255],
        [0, 160, 120],
    ];
    PALETTE[(id % PALETTE.len() as u64) as usize]
}

pub fn render_frame(img: &FeatureImage, rows: &[TrajectoryRow]) -> Rgb {
    let mut out = Rgb::new(img.cols * BLOCK_PIXELS, img.rows * BLOCK_PIXELS);
    for y in 0..out.height {
        for x in 0..out.width {
            let c = heat(img.get(y / BLOCK_PIXELS, x / BLOCK_PIXELS));
            out.put(x as i64, y as i64, c);
        }
    }
    for r in rows.iter().filter(|r| r.frame == img.frame_index) {
        let c = id_color(r.id);
        let (l, t) = (r.bbox.left().round() as i64, r.bbox.top().round() as i64);
        let (rt, b) = (r.bbox.right().round() as i64 - 1, r.bbox.bottom().round() as i64 - 1);
        for x in l..=rt {
            out.put(x, t, c);
            out.put(x, b, c);
        }
        for y in t..=b {
            out.put(l, y, c);
            out.put(rt, y, c);
        }
    }
    out
}
