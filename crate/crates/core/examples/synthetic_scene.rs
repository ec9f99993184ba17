//! Generate the bundled crossing scene and write it with its ground truth.

use cryptotrack::synthgen::{generate, SceneSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec::bundled();
    let scene = generate(&spec)?;
    let dir = std::env::temp_dir().join("cryptotrack-synthetic-scene");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("s.ecv"), &scene.stream)?;
    scene.gt.save(&dir.join("gt"))?;
    let intra = scene
        .frames
        .iter()
        .filter(|f| f.kind == cryptotrack::codec::FrameKind::I)
        .count();
    println!(
        "{}x{}, {} frames ({intra} intra), {} objects, {} bytes -> {}",
        spec.width,
        spec.height,
        spec.frames,
        spec.objects.len(),
        scene.stream.len(),
        dir.display()
    );
    println!("{} ground-truth boxes", scene.gt.boxes.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
