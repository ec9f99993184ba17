//! Acceptance suite: one pass/fail line per criterion.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cryptotrack::bbox::{overlap_rate, BoundingBox};
use cryptotrack::clustering::{cluster_frame, eta, ClusterParams};
use cryptotrack::codec::random::random_small_frame;
use cryptotrack::codec::{parse_frame, serialize_frame, CodedFrame, Residuals};
use cryptotrack::crypto::{decrypt_frame, encrypt_frame, encrypt_stream, CipherKey};
use cryptotrack::evaluation::{evaluate_sequence, majority_mapping, mot_metrics};
use cryptotrack::features::{build_feature_image, dnrc_stream, temporal_filter, FilterParams};
use cryptotrack::pipeline::{run_pipeline, PipelineConfig};
use cryptotrack::synthgen::{generate, SceneSpec};
use cryptotrack::tracking::{KalmanModel, KalmanParams, KalmanState, Thresholds, TrajectoryRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Cells = BTreeSet<(usize, usize)>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(
        t < limit,
        format!("took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs()),
    )
}

fn key(seed: u64) -> CipherKey {
    CipherKey::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn feature_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut frames = 0;
    for i in 0..50u64 {
        let spec = SceneSpec::random(&mut rng);
        let scene = generate(&spec).map_err(|e| e.to_string())?;
        let enc = encrypt_stream(&scene.stream, &key(i)).map_err(|e| e.to_string())?;
        let plain = dnrc_stream(&scene.stream).map_err(|e| e.to_string())?;
        let cipher = dnrc_stream(&enc).map_err(|e| e.to_string())?;
        ensure(plain == cipher, format!("sequence {i}: DNRC grids differ"))?;
        frames += plain.len();
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("50 sequences, {frames} frames identical"))
}

fn total_coeffs(f: &CodedFrame) -> Vec<u8> {
    f.macroblocks
        .iter()
        .flat_map(|mb| match &mb.residuals {
            Residuals::T4(bs) => bs.iter().map(|b| b.total_coeff).collect::<Vec<_>>(),
            Residuals::T8(bs) => bs.iter().map(|b| b.total_coeff).collect(),
        })
        .collect()
}

fn format_compliance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut flipped = 0usize;
    for i in 0..10_000 {
        let f = random_small_frame(&mut rng);
        let (bytes, map) = serialize_frame(&f).map_err(|e| e.to_string())?;
        let mut out = bytes.clone();
        for off in map.offsets() {
            out[(off / 8) as usize] ^= 0x80 >> (off % 8);
        }
        flipped += map.len();
        let g = parse_frame(&out).map_err(|e| format!("frame {i}: {e}"))?;
        let (again, _) = serialize_frame(&g).map_err(|e| e.to_string())?;
        ensure(again.len() == bytes.len(), format!("frame {i}: length changed"))?;
        ensure(
            total_coeffs(&g) == total_coeffs(&f),
            format!("frame {i}: totalCoeff changed"),
        )?;
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("10000 frames, {flipped} bits flipped"))
}

fn crypto_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let k = key(3);
    for i in 0..10_000u64 {
        let f = random_small_frame(&mut rng);
        let (bytes, map) = serialize_frame(&f).map_err(|e| e.to_string())?;
        let enc = encrypt_frame(&bytes, &map, &k, i).map_err(|e| e.to_string())?;
        let dec = decrypt_frame(&enc, &map, &k, i).map_err(|e| e.to_string())?;
        ensure(dec == bytes, format!("frame {i}: round trip differs"))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok("10000 frames bit-exact".into())
}

fn threshold_identity() -> Outcome {
    let th = Thresholds { t_ie: 0.6, t_a: 0.8 };
    let got = th.t_a_prime();
    ensure((got - 0.48 / 0.68).abs() <= 1e-12, format!("T_a' = {got}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..1000 {
        let t_ie = rng.random_range(0.01..0.98);
        let t_a = rng.random_range(t_ie..1.0);
        if t_a <= t_ie {
            continue;
        }
        let th = Thresholds { t_ie, t_a };
        ensure(th.t_a_prime() > t_ie, format!("T_a' <= T_ie for ({t_ie}, {t_a})"))?;
    }
    Ok(format!("T_a' = {got:.12}; 1000 random pairs ordered"))
}

fn eta_formula() -> Outcome {
    for (f, want) in [(1.0, 0.5), (8.0, 0.0), (64.0, 0.0)] {
        ensure((eta(f) - want).abs() <= 1e-12, format!("eta({f}) = {}", eta(f)))?;
    }
    let mut prev = eta(1.0);
    for i in 1..=25_500 {
        let f = 1.0 + i as f64 * 0.01;
        let e = eta(f);
        ensure(e <= prev, format!("eta increases at {f}"))?;
        prev = e;
    }
    Ok("exact values and monotone on [1, 256]".into())
}

/// Textbook DBSCAN over Euclidean cell distance, O(n^2), raster seed order.
fn dbscan_oracle(points: &[(usize, usize)], eps: f64, min_pts: usize) -> (Vec<Cells>, Cells) {
    let n = points.len();
    let region = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let dr = points[i].0 as f64 - points[j].0 as f64;
                let dc = points[i].1 as f64 - points[j].1 as f64;
                (dr * dr + dc * dc).sqrt() <= eps + 1e-9
            })
            .collect()
    };
    let mut label: Vec<Option<isize>> = vec![None; n];
    let mut c = 0isize;
    for i in 0..n {
        if label[i].is_some() {
            continue;
        }
        let nb = region(i);
        if nb.len() < min_pts {
            label[i] = Some(-1);
            continue;
        }
        label[i] = Some(c);
        let mut seeds: Vec<usize> = nb;
        let mut k = 0;
        while k < seeds.len() {
            let q = seeds[k];
            k += 1;
            match label[q] {
                Some(-1) => label[q] = Some(c),
                None => {
                    label[q] = Some(c);
                    let nq = region(q);
                    if nq.len() >= min_pts {
                        seeds.extend(nq);
                    }
                }
                _ => {}
            }
        }
        c += 1;
    }
    let mut clusters = vec![BTreeSet::new(); c as usize];
    let mut noise = BTreeSet::new();
    for (p, l) in points.iter().zip(label) {
        match l {
            Some(l) if l >= 0 => {
                clusters[l as usize].insert(*p);
            }
            _ => {
                noise.insert(*p);
            }
        }
    }
    (clusters, noise)
}

fn clustering_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let params = ClusterParams {
        min_pts: 3,
        eta_override: Some(0.0),
    };
    for g in 0..200 {
        let rows = rng.random_range(1..=32);
        let cols = rng.random_range(1..=32);
        let density = rng.random_range(0.05..0.6);
        let values: Vec<u8> = (0..rows * cols)
            .map(|_| {
                if rng.random_bool(density) {
                    rng.random_range(1..=16)
                } else {
                    0
                }
            })
            .collect();
        let img = build_feature_image(0, rows, cols, values);
        let points: Vec<(usize, usize)> = img.nonzero().map(|(r, c, _)| (r, c)).collect();
        let (want, want_noise) = dbscan_oracle(&points, 2f64.sqrt(), 3);
        let got = cluster_frame(&img, &params);
        let got_sets: HashSet<Cells> = got.clusters.iter().map(|c| c.cells.iter().copied().collect()).collect();
        let want_sets: HashSet<Cells> = want.into_iter().collect();
        ensure(
            got.clusters.len() == got_sets.len(),
            format!("grid {g}: duplicate clusters"),
        )?;
        ensure(got_sets == want_sets, format!("grid {g}: partitions differ"))?;
        let got_noise: Cells = got.noise.iter().copied().collect();
        ensure(got_noise == want_noise, format!("grid {g}: noise differs"))?;
    }
    within(start, Duration::from_secs(60))?;
    Ok("200 grids match up to relabelling".into())
}

/// Direct evaluation of the valley and spike rules, windows clipped at the ends.
fn filter_oracle(d: &[u8], mu: usize, delta: usize) -> Vec<u8> {
    let n = d.len() as isize;
    let at = |t: isize| d[t as usize];
    (0..n)
        .map(|k| {
            if at(k) == 0 && k >= 1 && k + 1 < n {
                let lo = (k - delta as isize).max(0);
                let hi = (k + delta as isize).min(n - 1);
                if (lo..=hi).filter(|&t| t != k).all(|t| at(t) > 0) {
                    return at(k + 1).min(at(k - 1));
                }
            }
            let mut sum = 0u64;
            for sigma in k - mu as isize..=k {
                let lo = sigma.max(0);
                let hi = (sigma + mu as isize).min(n - 1);
                if (lo..=hi).all(|t| at(t) > 0) {
                    sum += 1;
                }
            }
            if sum > 0 {
                at(k)
            } else {
                0
            }
        })
        .collect()
}

fn temporal_filter_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let params = FilterParams { delta: 1, mu: 5 };
    for s in 0..10_000 {
        let zero_rate = rng.random_range(0.05..0.6);
        let d: Vec<u8> = (0..100)
            .map(|_| {
                if rng.random_bool(zero_rate) {
                    0
                } else {
                    rng.random_range(1..=16)
                }
            })
            .collect();
        let got = temporal_filter(&d, params);
        ensure(got == filter_oracle(&d, 5, 1), format!("series {s} differs"))?;
    }
    Ok("10000 series match".into())
}

/// One coordinate of the constant-velocity filter as 2x2 algebra.
fn scalar_track(pos0: f64, zs: &[f64], q: (f64, f64), s: f64, p0: f64) -> (f64, f64) {
    let (mut x, mut v) = (pos0, 0.0);
    let mut p = [[p0, 0.0], [0.0, p0]];
    for &z in zs {
        x += v;
        p = [
            [p[0][0] + p[0][1] + p[1][0] + p[1][1] + q.0, p[0][1] + p[1][1]],
            [p[1][0] + p[1][1], p[1][1] + q.1],
        ];
        let denom = p[0][0] + s;
        let (k0, k1) = (p[0][0] / denom, p[1][0] / denom);
        let r = z - x;
        x += k0 * r;
        v += k1 * r;
        p = [
            [(1.0 - k0) * p[0][0], (1.0 - k0) * p[0][1]],
            [p[1][0] - k1 * p[0][0], p[1][1] - k1 * p[0][1]],
        ];
    }
    (x, v)
}

fn kalman_algebra() -> Outcome {
    let m = KalmanModel::default();
    let b0 = BoundingBox::new(100.0, 80.0, 32.0, 24.0);
    let zs = [
        BoundingBox::new(103.0, 81.0, 33.0, 24.0),
        BoundingBox::new(106.5, 82.5, 31.0, 25.0),
    ];
    let mut st = KalmanState::from_box(&b0, &m);
    for z in &zs {
        st.predict(&m);
        st.update_box(z, &m);
    }
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        let obs: Vec<f64> = zs.iter().map(|z| z.to_vector()[i]).collect();
        let (x, v) = scalar_track(b0.to_vector()[i], &obs, (1.0, 4.0), 4.0, 10.0);
        worst = worst.max((st.x[i] - x).abs()).max((st.x[i + 4] - v).abs());
    }
    ensure(worst <= 1e-9, format!("posterior off by {worst:e}"))?;

    let with_s = |s: f64| {
        KalmanModel::new(&KalmanParams {
            s_diag: [s; 4],
            ..Default::default()
        })
    };
    let b = BoundingBox::new(50.0, 50.0, 10.0, 10.0);
    let z = BoundingBox::new(60.0, 70.0, 12.0, 14.0);
    let exact = with_s(1e-12);
    let mut st = KalmanState::from_box(&b, &exact);
    st.predict(&exact);
    st.update_box(&z, &exact);
    let zero_err = st
        .bbox()
        .to_vector()
        .iter()
        .zip(z.to_vector())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(
        zero_err <= 1e-6,
        format!("S->0 posterior off measurement by {zero_err:e}"),
    )?;
    let ignore = with_s(1e15);
    let mut st = KalmanState::from_box(&b, &ignore);
    st.predict(&ignore);
    let prior = st.x;
    st.update_box(&z, &ignore);
    let inf_err = (st.x - prior).amax();
    ensure(inf_err <= 1e-6, format!("S->inf posterior moved by {inf_err:e}"))?;
    Ok(format!(
        "hand oracle {worst:.1e}, limits {zero_err:.1e} / {inf_err:.1e}"
    ))
}

/// Frames in which ground-truth boxes of different objects intersect.
fn occlusion_frames(gt: &[TrajectoryRow]) -> HashSet<usize> {
    let mut by: HashMap<usize, Vec<&TrajectoryRow>> = HashMap::new();
    for r in gt {
        by.entry(r.frame).or_default().push(r);
    }
    by.into_iter()
        .filter(|(_, rs)| {
            rs.iter()
                .enumerate()
                .any(|(i, a)| rs[i + 1..].iter().any(|b| a.bbox.intersection_area(&b.bbox) > 0.0))
        })
        .map(|(f, _)| f)
        .collect()
}

fn tracking_quality() -> Outcome {
    let scene = generate(&SceneSpec::bundled()).map_err(|e| e.to_string())?;
    let enc = encrypt_stream(&scene.stream, &key(9)).map_err(|e| e.to_string())?;
    let out = run_pipeline(&enc, &PipelineConfig::default(), false).map_err(|e| e.to_string())?;
    let gt = &scene.gt.boxes;
    let mot = mot_metrics(&out.rows, gt);
    let occluded = occlusion_frames(gt);
    let stray: Vec<usize> = mot
        .id_switch_frames
        .iter()
        .copied()
        .filter(|f| !occluded.contains(f))
        .collect();

    let mapping = majority_mapping(&out.rows, gt);
    let owner: HashMap<u64, u64> = mapping.iter().map(|(g, p)| (*p, *g)).collect();
    let gt_at: HashMap<(usize, u64), BoundingBox> = gt.iter().map(|r| ((r.frame, r.id), r.bbox)).collect();
    let (mut good, mut total) = (0usize, 0usize);
    for r in &out.rows {
        let Some(g) = owner.get(&r.id) else { continue };
        total += 1;
        if gt_at
            .get(&(r.frame, *g))
            .is_some_and(|b| overlap_rate(b, &r.bbox) >= 0.5)
        {
            good += 1;
        }
    }
    let frac = good as f64 / total.max(1) as f64;
    let detail = format!(
        "MOTA {:.4}, MOTP {:.4}, IDSW {} ({} outside occlusion), IoU>=0.5 on {:.1}% of {} confirmed frames",
        mot.mota,
        mot.motp,
        mot.id_switches,
        stray.len(),
        100.0 * frac,
        total
    );
    ensure(
        mot.mota >= 0.6 && mot.motp >= 0.6 && stray.is_empty() && total > 0 && frac >= 0.85,
        detail.clone(),
    )?;
    Ok(detail)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cryptotrack")
}

fn run_cli(args: &[&std::ffi::OsStr]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "cryptotrack {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Synthesizes the bundled scene and tracks it plain and encrypted through the CLI.
struct CliRun {
    fps: f64,
    frames: usize,
    plain_csv: Vec<u8>,
    enc_csv: Vec<u8>,
}

fn cli_run(dir: &Path) -> Result<CliRun, String> {
    let spec = dir.join("scene.json");
    std::fs::write(
        &spec,
        serde_json::to_string(&SceneSpec::bundled()).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let (s, gt, k, e) = (
        dir.join("s.ecv"),
        dir.join("gt"),
        dir.join("key.bin"),
        dir.join("e.ecv"),
    );
    let (tp, te) = (dir.join("plain.csv"), dir.join("enc.csv"));
    run_cli(&[
        "synth".as_ref(),
        spec.as_os_str(),
        "-o".as_ref(),
        s.as_os_str(),
        "-g".as_ref(),
        gt.as_os_str(),
    ])?;
    run_cli(&[
        "encrypt".as_ref(),
        s.as_os_str(),
        "--key".as_ref(),
        k.as_os_str(),
        "-o".as_ref(),
        e.as_os_str(),
    ])?;
    run_cli(&["track".as_ref(), s.as_os_str(), "-o".as_ref(), tp.as_os_str()])?;
    let report = run_cli(&["track".as_ref(), e.as_os_str(), "-o".as_ref(), te.as_os_str()])?;
    // "track: N frames in X s (Y fps)"
    let line = report.lines().find(|l| l.starts_with("track:")).ok_or("no rate line")?;
    let words: Vec<&str> = line.split_whitespace().collect();
    let frames = words
        .get(1)
        .and_then(|w| w.parse().ok())
        .ok_or("unparsable frame count")?;
    let fps = words
        .iter()
        .position(|w| *w == "fps)")
        .and_then(|i| words[i - 1].trim_start_matches('(').parse().ok())
        .ok_or("unparsable rate")?;
    Ok(CliRun {
        fps,
        frames,
        plain_csv: std::fs::read(&tp).map_err(|e| e.to_string())?,
        enc_csv: std::fs::read(&te).map_err(|e| e.to_string())?,
    })
}

fn throughput(run: &Result<CliRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let detail = format!("{:.1} fps over {} frames", run.fps, run.frames);
    ensure(run.frames >= 300 && run.fps >= 100.0, detail.clone())?;
    Ok(detail)
}

fn metric_self_consistency() -> Outcome {
    let scene = generate(&SceneSpec::bundled()).map_err(|e| e.to_string())?;
    let gt = &scene.gt;
    let (m, sp) = evaluate_sequence("self", &gt.boxes, Some(&gt.masks), gt).map_err(|e| e.to_string())?;
    let seg = m.segmentation.ok_or("no segmentation scores")?;
    let values = [
        ("Pr", seg.precision),
        ("Re", seg.recall),
        ("F1", seg.f1),
        ("MOTA", m.mot.mota),
        ("MOTP", m.mot.motp),
        ("AUC", sp.auc),
        ("Pre20", sp.pre20),
    ];
    for (name, v) in values {
        ensure(v == 1.0, format!("{name} = {v}"))?;
    }
    Ok("Pr, Re, F1, MOTA, MOTP, AUC, Pre20 all exactly 1".into())
}

fn encrypted_plain_equivalence(run: &Result<CliRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    ensure(!run.plain_csv.is_empty(), "empty trajectory file")?;
    ensure(run.plain_csv == run.enc_csv, "trajectory CSVs differ")?;
    let rows = run.plain_csv.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
    Ok(format!("{rows} rows byte-identical"))
}

fn main() {
    // libtest flags (e.g. --nocapture) are accepted and ignored.
    let dir = tempfile::tempdir().expect("temp dir");
    let cli = cli_run(dir.path());
    let criteria: Vec<(&str, Check)> = vec![
        ("feature invariance", Box::new(feature_invariance)),
        ("format compliance", Box::new(format_compliance)),
        ("crypto round trip", Box::new(crypto_round_trip)),
        ("threshold identity", Box::new(threshold_identity)),
        ("eta formula", Box::new(eta_formula)),
        ("clustering oracle", Box::new(clustering_oracle)),
        ("temporal filter oracle", Box::new(temporal_filter_oracle)),
        ("kalman algebra", Box::new(kalman_algebra)),
        ("synthetic tracking quality", Box::new(tracking_quality)),
        ("throughput", Box::new(|| throughput(&cli))),
        ("metric self-consistency", Box::new(metric_self_consistency)),
        (
            "encrypted/plain equivalence",
            Box::new(|| encrypted_plain_equivalence(&cli)),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {detail} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
