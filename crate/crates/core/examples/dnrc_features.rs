//! Residual-density features: per-block counts, I-frame interpolation and
//! the temporal filter.

use cryptotrack::features::{dnrc_stream, extract_features, temporal_filter, FilterParams};
use cryptotrack::synthgen::{generate, NoiseSpec, ObjectSpec, SceneSpec, Waypoint};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let params = FilterParams::default();
    let series = [0, 0, 5, 0, 0, 0, 0, 3, 3, 0, 3, 3, 3, 3, 0, 0];
    println!("raw      {series:?}");
    println!("filtered {:?}", temporal_filter(&series, params));

    let spec = SceneSpec {
        width: 128,
        height: 96,
        frames: 26,
        intra_period: 12,
        objects: vec![ObjectSpec {
            id: 0,
            waypoints: vec![
                Waypoint {
                    frame: 0,
                    cx: 30.0,
                    cy: 48.0,
                    w: 24.0,
                    h: 24.0,
                },
                Waypoint {
                    frame: 25,
                    cx: 100.0,
                    cy: 48.0,
                    w: 24.0,
                    h: 24.0,
                },
            ],
            density: 5.0,
            shadow: 0.0,
        }],
        noise: NoiseSpec {
            spike_rate: 0.01,
            valley_rate: 0.05,
            jitter: 0,
        },
        seed: 3,
    };
    let scene = generate(&spec)?;
    let raw = dnrc_stream(&scene.stream)?;
    let images = extract_features(&scene.stream, params)?;
    for k in [11, 12, 13] {
        let nz_raw = raw[k].values.iter().filter(|&&v| v > 0).count();
        println!(
            "frame {k} ({:?}): {nz_raw} raw nonzero blocks, {} after filtering, mean {:.2}",
            raw[k].kind,
            images[k].nonzero().count(),
            images[k].mean
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
