//! Track two boxes with the Kalman tracker, including a frame where one
//! measurement is badly cropped.

use cryptotrack::bbox::{overlap_rate, BoundingBox};
use cryptotrack::features::FeatureImage;
use cryptotrack::tracking::{Thresholds, Tracker, TrackerConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("T_a' for (0.6, 0.8) = {:.4}", Thresholds::default().t_a_prime());
    let mut tracker = Tracker::new(352.0, 288.0, TrackerConfig::default());
    let features = FeatureImage::empty(0, 72, 88);
    for k in 0..30 {
        let a = BoundingBox::new(60.0 + 3.0 * k as f64, 100.0, 40.0, 40.0);
        let b = BoundingBox::new(280.0 - 2.0 * k as f64, 200.0, 32.0, 24.0);
        // frame 20 measures only the left half of object a
        let a_meas = if k == 20 {
            BoundingBox::new(a.cx - 10.0, a.cy, 20.0, 40.0)
        } else {
            a
        };
        let out = tracker.step(&[a_meas, b], &features);
        if k % 5 == 0 || k == 20 {
            let ious: Vec<String> = out
                .iter()
                .map(|o| {
                    format!(
                        "id {} iou {:.2}",
                        o.id,
                        overlap_rate(&o.bbox, if o.id == 0 { &a } else { &b })
                    )
                })
                .collect();
            println!("frame {k:2}: {}", ious.join(", "));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
