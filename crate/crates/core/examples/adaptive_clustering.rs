//! Value-adaptive density clustering and the fragment merge.

use cryptotrack::bbox::BoundingBox;
use cryptotrack::clustering::{cluster_frame, eta, initial_boxes, merge_with_prior_boxes, ClusterParams};
use cryptotrack::features::build_feature_image;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (rows, cols) = (12, 16);
    let mut v = vec![0u8; rows * cols];
    // two halves of one object split by an empty column, plus isolated noise
    for r in 3..8 {
        for c in 2..5 {
            v[r * cols + c] = 4;
        }
        for c in 6..9 {
            v[r * cols + c] = 4;
        }
    }
    v[10 * cols + 14] = 9;
    let img = build_feature_image(0, rows, cols, v);
    for m in [1.0, 2.0, 4.0, 8.0] {
        println!("eta({m}) = {:.3}", eta(m));
    }

    let fixed = cluster_frame(
        &img,
        &ClusterParams {
            eta_override: Some(0.0),
            ..Default::default()
        },
    );
    let adaptive = cluster_frame(&img, &ClusterParams::default());
    println!(
        "plain 8-neighbour DBSCAN: {} clusters; adaptive (mean {:.2}): {} clusters, {} noise",
        fixed.clusters.len(),
        img.mean,
        adaptive.clusters.len(),
        adaptive.noise.len()
    );

    let prior = [BoundingBox::from_ltwh(4.0, 8.0, 40.0, 24.0)];
    let merged = merge_with_prior_boxes(fixed.clusters, &prior, rows, cols);
    for b in initial_boxes(&merged) {
        println!("box left {} top {} {}x{}", b.left(), b.top(), b.w, b.h);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
