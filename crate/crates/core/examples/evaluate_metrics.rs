//! Segmentation, CLEAR-MOT and success/precision scores.

use cryptotrack::bbox::BoundingBox;
use cryptotrack::evaluation::{mot_metrics, seg_metrics, success_precision, Mask};
use cryptotrack::tracking::TrajectoryRow;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut gt_mask = Mask::new(8, 8);
    let mut pred_mask = Mask::new(8, 8);
    for y in 2..6 {
        for x in 2..6 {
            gt_mask.set(x, y, true);
            pred_mask.set(x + 1, y, true);
        }
    }
    let s = seg_metrics(&pred_mask, &gt_mask)?;
    println!("Pr {:.3} Re {:.3} F1 {:.3}", s.precision, s.recall, s.f1);

    let row = |frame, id, x: f64| TrajectoryRow {
        frame,
        id,
        bbox: BoundingBox::from_ltwh(x, 50.0, 40.0, 40.0),
    };
    let gt: Vec<_> = (0..50).map(|f| row(f, 1, 2.0 * f as f64)).collect();
    // offset by 10 px, and a new identity halfway
    let pred: Vec<_> = (0..50)
        .map(|f| row(f, if f < 25 { 7 } else { 8 }, 2.0 * f as f64 + 10.0))
        .collect();
    let m = mot_metrics(&pred, &gt);
    println!(
        "MOTA {:.3} MOTP {:.3} id switches {} at {:?}",
        m.mota, m.motp, m.id_switches, m.id_switch_frames
    );
    let sp = success_precision(&pred, &gt);
    println!("AUC {:.3} Pre20 {:.3}", sp.auc, sp.pre20);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
