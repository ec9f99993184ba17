//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::codec::{frames_from_dump, parse_dump, write_stream};
use crate::crypto::{decrypt_stream, encrypt_stream, CipherKey};
use crate::evaluation::{evaluate_sequence, load_masks, save_masks, write_jsonl, GroundTruth};
use crate::features::{dnrc_from_dump, extract_features, feature_images, features_csv};
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
use crate::render::render_frame;
use crate::synthgen::{generate, SceneSpec};
use crate::tracking::{parse_trajectory_csv, trajectory_csv};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(
    name = "cryptotrack",
    version,
    about = "Motion tracking on selectively encrypted compressed video"
)]
pub struct Cli {
    /// JSON file overriding pipeline defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene spec into an ECV stream and ground truth.
    Synth {
        spec: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(short = 'g', long = "gt")]
        gt: PathBuf,
    },
    /// Build an ECV stream from a coefficient dump.
    Encode {
        dump: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Selectively encrypt a stream; creates the key file if it does not exist.
    Encrypt {
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Inverse of encrypt.
    Decrypt {
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write filtered feature images as CSV `frame,row,col,value`.
    ExtractFeatures {
        input: PathBuf,
        /// Read a coefficient dump instead of an ECV stream.
        #[arg(long)]
        dump: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Track objects in a (possibly encrypted) stream.
    Track {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Directory for per-frame motion masks (PGM).
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Score trajectories against a ground-truth directory.
    Evaluate {
        trajectories: PathBuf,
        gt: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Predicted mask directory for segmentation scores.
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Directory for success and precision curve CSVs.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long, default_value = "sequence")]
        name: String,
    },
    /// Feature heatmaps with trajectory boxes, one PPM per frame.
    Render {
        input: PathBuf,
        trajectories: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// synth, encrypt, track and evaluate in one go.
    Pipeline {
        spec: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Paths created by the running command, removed again if it fails.
#[derive(Default)]
struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn file(&mut self, p: &Path) -> PathBuf {
        if !p.exists() {
            self.0.push(p.to_path_buf());
        }
        p.to_path_buf()
    }

    fn dir(&mut self, p: &Path) -> std::io::Result<PathBuf> {
        if !p.exists() {
            self.0.push(p.to_path_buf());
        }
        std::fs::create_dir_all(p)?;
        Ok(p.to_path_buf())
    }

    fn remove_all(&self) {
        for p in self.0.iter().rev() {
            let _ = if p.is_dir() {
                std::fs::remove_dir_all(p)
            } else {
                std::fs::remove_file(p)
            };
        }
    }
}

fn read(p: &Path) -> Result<Vec<u8>, BoxError> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

fn read_text(p: &Path) -> Result<String, BoxError> {
    std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()).into())
}

fn report(what: &str, frames: usize, secs: f64) {
    println!(
        "{what}: {frames} frames in {secs:.3} s ({:.1} fps)",
        frames as f64 / secs.max(1e-9)
    );
}

fn write_tracks(
    out: &PipelineOutput,
    traj: &Path,
    masks: Option<&Path>,
    outputs: &mut Outputs,
) -> Result<(), BoxError> {
    std::fs::write(outputs.file(traj), trajectory_csv(&out.rows))?;
    if let (Some(dir), Some(m)) = (masks, &out.masks) {
        save_masks(&outputs.dir(dir)?, m)?;
    }
    Ok(())
}

fn load_key_or_create(path: &Path, outputs: &mut Outputs) -> Result<CipherKey, BoxError> {
    if path.exists() {
        return Ok(CipherKey::load(path)?);
    }
    let key = CipherKey::random(&mut rand::rng());
    key.save(outputs.file(path))?;
    eprintln!("wrote new key to {}", path.display());
    Ok(key)
}

fn execute(cli: &Cli, outputs: &mut Outputs) -> Result<(), BoxError> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Synth { spec, out, gt } => {
            let spec = SceneSpec::from_json(&read_text(spec)?)?;
            let g = generate(&spec)?;
            std::fs::write(outputs.file(out), &g.stream)?;
            g.gt.save(&outputs.dir(gt)?)?;
            println!("synth: {} frames, {} bytes", spec.frames, g.stream.len());
        }
        Command::Encode { dump, out } => {
            let dump = parse_dump(&read_text(dump)?)?;
            let frames = frames_from_dump(&dump)?;
            std::fs::write(outputs.file(out), write_stream(&frames)?)?;
            println!("encode: {} frames", frames.len());
        }
        Command::Encrypt { input, key, out } => {
            let data = read(input)?;
            let key = load_key_or_create(key, outputs)?;
            std::fs::write(outputs.file(out), encrypt_stream(&data, &key)?)?;
        }
        Command::Decrypt { input, key, out } => {
            let data = read(input)?;
            let key = CipherKey::load(key)?;
            std::fs::write(outputs.file(out), decrypt_stream(&data, &key)?)?;
        }
        Command::ExtractFeatures { input, dump, out } => {
            let start = Instant::now();
            let images = if *dump {
                let grids = dnrc_from_dump(&parse_dump(&read_text(input)?)?)?;
                feature_images(&grids, config.filter)?
            } else {
                extract_features(&read(input)?, config.filter)?
            };
            std::fs::write(outputs.file(out), features_csv(&images))?;
            report("extract-features", images.len(), start.elapsed().as_secs_f64());
        }
        Command::Track { input, out, masks } => {
            let result = run_pipeline(&read(input)?, &config, masks.is_some())?;
            write_tracks(&result, out, masks.as_deref(), outputs)?;
            report("track", result.frames, result.elapsed.as_secs_f64());
        }
        Command::Evaluate {
            trajectories,
            gt,
            out,
            masks,
            curves,
            name,
        } => {
            let rows = parse_trajectory_csv(&read_text(trajectories)?)?;
            let gt = GroundTruth::load(gt)?;
            let pred_masks = masks.as_ref().map(|d| load_masks(d, gt.masks.len())).transpose()?;
            let (metrics, sp) = evaluate_sequence(name, &rows, pred_masks.as_deref(), &gt)?;
            let mut file = std::fs::File::create(outputs.file(out))?;
            write_jsonl(std::slice::from_ref(&metrics), &mut file)?;
            if let Some(dir) = curves {
                let dir = outputs.dir(dir)?;
                std::fs::write(dir.join("success.csv"), sp.success.to_csv())?;
                std::fs::write(dir.join("precision.csv"), sp.precision.to_csv())?;
            }
            println!(
                "evaluate: MOTA {:.4} MOTP {:.4} AUC {:.4} Pre20 {:.4}",
                metrics.mot.mota, metrics.mot.motp, metrics.auc, metrics.pre20
            );
        }
        Command::Render {
            input,
            trajectories,
            out,
        } => {
            let images = extract_features(&read(input)?, config.filter)?;
            let rows = parse_trajectory_csv(&read_text(trajectories)?)?;
            let dir = outputs.dir(out)?;
            for img in &images {
                let path = dir.join(format!("{:05}.ppm", img.frame_index));
                std::fs::write(path, render_frame(img, &rows).to_ppm())?;
            }
            println!("render: {} frames", images.len());
        }
        Command::Pipeline { spec, out } => {
            let spec = SceneSpec::from_json(&read_text(spec)?)?;
            let dir = outputs.dir(out)?;
            let g = generate(&spec)?;
            std::fs::write(dir.join("s.ecv"), &g.stream)?;
            g.gt.save(&dir.join("gt"))?;
            let key = load_key_or_create(&dir.join("key.bin"), outputs)?;
            let enc = encrypt_stream(&g.stream, &key)?;
            std::fs::write(dir.join("e.ecv"), &enc)?;
            let result = run_pipeline(&enc, &config, true)?;
            write_tracks(&result, &dir.join("traj.csv"), Some(&dir.join("masks")), outputs)?;
            report("track", result.frames, result.elapsed.as_secs_f64());
            let (metrics, sp) = evaluate_sequence("pipeline", &result.rows, result.masks.as_deref(), &g.gt)?;
            let mut file = std::fs::File::create(dir.join("metrics.jsonl"))?;
            write_jsonl(std::slice::from_ref(&metrics), &mut file)?;
            std::fs::write(dir.join("success.csv"), sp.success.to_csv())?;
            std::fs::write(dir.join("precision.csv"), sp.precision.to_csv())?;
            println!(
                "evaluate: MOTA {:.4} MOTP {:.4} AUC {:.4} Pre20 {:.4}",
                metrics.mot.mota, metrics.mot.motp, metrics.auc, metrics.pre20
            );
        }
    }
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("CRYPTOTRACK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a processing error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let mut outputs = Outputs::default();
    match execute(&cli, &mut outputs) {
        Ok(()) => 0,
        Err(e) => {
            outputs.remove_all();
            eprintln!("error: {e}");
            1
        }
    }
}
