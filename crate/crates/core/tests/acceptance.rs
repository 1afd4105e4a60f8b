//! Acceptance checks. Each test prints one PASS/FAIL line and then asserts.
//! Run with `cargo test --release --test acceptance -- --nocapture`.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skinfit::geometry::Camera;
use skinfit::io::observations::KeypointObs;
use skinfit::metrics::{mpjpe, mpjtd, posed_keypoints, silhouette_iou};
use skinfit::model::quadruped::quadruped;
use skinfit::objective::terms::{
    loss_bones, loss_keypoint, loss_offset_smoothness, loss_photometric, loss_pose_prior, loss_silhouette, loss_temporal,
};
use skinfit::objective::{check_gradient, composite_loss, EvalConfig, LossWeights, Objective, ParamBlock, Params};
use skinfit::render::Raster;
use skinfit::solve::{fit_sequence, fit_shape, SequenceFitConfig, ShapeFitConfig};
use skinfit::synth::{
    generate_scene, run_ablation_study, run_triangulation_noise_study, Ablation, AblationRow, AblationStudySpec, Motion,
    NoiseSpec, NoiseStudySpec, SceneSpec, SyntheticScene,
};

/// Criteria run one at a time so their timings are not shared.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to stderr so the line shows even when output is captured.
fn report(id: u32, ok: bool, detail: &str) {
    let line = format!("criterion {id}: {} | {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.1} s (limit {} s)", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------- 1

fn gradient_scene(seed: u64, cameras: usize) -> SyntheticScene {
    generate_scene(&SceneSpec {
        cameras,
        frames: 2,
        motion: Motion::walk(),
        noise: NoiseSpec { keypoint_sigma: 3.0, ..NoiseSpec::default() },
        seed,
        crop_cap: 24,
        with_images: true,
        ..SceneSpec::default()
    })
    .unwrap()
}

fn perturbed(s: &SyntheticScene, rng: &mut ChaCha8Rng) -> Params {
    let mut p = Params { shape: s.shape.clone(), poses: s.poses.clone() };
    for a in &mut p.shape.bone_scales {
        *a = rng.random_range(0.7..1.3);
    }
    // Keep the bone term active.
    p.shape.bone_scales[0] = rng.random_range(1.21..1.3);
    for o in &mut p.shape.vertex_offsets {
        *o = Vector3::from_fn(|_, _| rng.random_range(-0.01..0.01));
    }
    for c in &mut p.shape.vertex_colors_raw {
        *c = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
    }
    p.shape.global_scale = rng.random_range(0.95..1.05);
    for pose in &mut p.poses {
        for t in pose.theta.iter_mut().chain([&mut pose.global_rot]) {
            *t += Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
        }
        pose.translation += Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02));
    }
    p
}

fn all_terms(rng: &mut ChaCha8Rng) -> LossWeights {
    LossWeights {
        pose_prior: rng.random_range(1.0..5.0),
        bones: rng.random_range(50.0..150.0),
        smoothness: rng.random_range(1.0..10.0),
        keypoints: rng.random_range(0.5..2.0),
        silhouette: rng.random_range(20.0..100.0),
        color: rng.random_range(0.5..2.0),
        temporal: rng.random_range(5.0..20.0),
        use_confidence: rng.random_bool(0.5),
        ..LossWeights::default()
    }
}

#[test]
fn criterion_1_composite_gradient() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut checked, mut all_active) = (0.0f64, 0usize, true);
    for config in 0..10u64 {
        let s = gradient_scene(config, 3 + (config as usize % 2));
        let p = perturbed(&s, &mut rng);
        let weights = all_terms(&mut rng);
        let frames: Vec<_> = s.observations.frames.iter().collect();
        let full = Objective::new(&s.rig, &s.cameras, frames.clone(), None, EvalConfig::new(weights.clone())).unwrap();
        let l = full.evaluate(&p, false).unwrap().loss;
        let active = [l.keypoints, l.silhouette, l.pose_prior, l.bones, l.smoothness, l.temporal, l.photometric];
        if !active.iter().all(|v| *v > 0.0) {
            println!("  config {config}: inactive term in {l:?}");
            all_active = false;
        }

        // Several coordinates from every block. The photometric gradient is
        // defined for vertex colors; geometric coordinates are checked with
        // every other term active.
        let mut colors = Vec::new();
        let mut geometry = Vec::new();
        for (b, r) in p.blocks() {
            for _ in 0..4 {
                let i = rng.random_range(r.clone());
                if b == ParamBlock::VertexColors { colors.push(i) } else { geometry.push(i) }
            }
        }
        let c = check_gradient(&full, &p, &colors, 1e-5, 1e-6).unwrap();
        let geo = Objective::new(&s.rig, &s.cameras, frames, None, EvalConfig::new(LossWeights { color: 0.0, ..weights })).unwrap();
        let g = check_gradient(&geo, &p, &geometry, 1e-5, 1e-6).unwrap();
        worst = worst.max(c.max_rel_error).max(g.max_rel_error);
        checked += colors.len() + geometry.len();
    }
    let (fast, time) = within(t, Duration::from_secs(120));
    let ok = worst < 1e-3 && all_active && fast;
    report(1, ok, &format!("10 configs, {checked} coordinates, max rel error {worst:.2e}, all terms active {all_active}, {time}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_noise_study() {
    let _g = serial();
    let t = Instant::now();
    let table = run_triangulation_noise_study(&NoiseStudySpec::default()).unwrap();
    let sigmas = [1.0, 2.0, 5.0, 10.0];
    let counts = [2, 3, 4];
    let m = |s: f64, c: usize| table.cell(s, c).unwrap().mean_mm;
    let in_sigma = counts.iter().all(|&c| sigmas.windows(2).all(|w| m(w[0], c) < m(w[1], c)));
    let in_cameras = sigmas.iter().all(|&s| counts.windows(2).all(|w| m(s, w[0]) > m(s, w[1])));
    let base = m(1.0, 2);
    let (fast, time) = within(t, Duration::from_secs(60));
    let ok = in_sigma && in_cameras && (0.5..=5.0).contains(&base) && fast;
    let rows: Vec<String> = sigmas
        .iter()
        .map(|&s| format!("s{s}: {}", counts.iter().map(|&c| format!("{:.2}", m(s, c))).collect::<Vec<_>>().join("/")))
        .collect();
    report(
        2,
        ok,
        &format!("monotone in sigma {in_sigma}, in cameras {in_cameras}, 1 px 2 cams {base:.2} mm; {}; {time}", rows.join(" ")),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_noiseless_walk() {
    let _g = serial();
    let t = Instant::now();
    let s = generate_scene(&SceneSpec { cameras: 6, frames: 200, motion: Motion::walk(), crop_cap: 32, ..SceneSpec::default() })
        .unwrap();
    let fit = fit_sequence(&s.rig, &s.cameras, &s.observations, &s.shape, &SequenceFitConfig::default()).unwrap();
    let gt = s.keypoints_3d();
    let pred = posed_keypoints(&s.rig, &s.shape, &fit.poses).unwrap();
    let reference: Vec<Vec<Option<Vector3<f64>>>> = gt.iter().map(|f| f.iter().copied().map(Some).collect()).collect();
    let err = mpjpe(&pred, &reference).unwrap().1.unwrap();
    let td = mpjtd(&pred.into_iter().map(Some).collect::<Vec<_>>()).unwrap();
    let gt_td = mpjtd(&gt.into_iter().map(Some).collect::<Vec<_>>()).unwrap();
    let ratio = td / gt_td;
    let (fast, time) = within(t, Duration::from_secs(30 * 60));
    let ok = err < 5.0 && (1.0 / 1.5..=1.5).contains(&ratio) && fast;
    report(3, ok, &format!("MPJPE {err:.3} mm, MPJTD {td:.3} vs ground truth {gt_td:.3} mm/frame (ratio {ratio:.3}), {time}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 4, 5

fn ablation_rows() -> &'static Vec<AblationRow> {
    static ROWS: OnceLock<Vec<AblationRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let mut settings = vec![Ablation::Full, Ablation::NoKeypoints, Ablation::NoSilhouette, Ablation::NoTemporal];
        settings.extend((2..6).map(Ablation::Views));
        let spec = AblationStudySpec { settings, ..AblationStudySpec::default() };
        let t = Instant::now();
        let rows = run_ablation_study(&spec).unwrap();
        println!("ablation study: {} rows in {:.1} s", rows.len(), t.elapsed().as_secs_f64());
        rows
    })
}

fn row<'a>(rows: &'a [AblationRow], seed: u64, setting: &str) -> &'a AblationRow {
    rows.iter().find(|r| r.seed == seed && r.setting == setting).unwrap()
}

#[test]
fn criterion_4_ablations() {
    let _g = serial();
    let rows = ablation_rows();
    let seeds: Vec<u64> = (0..5).collect();
    let count = |f: &dyn Fn(u64) -> bool| seeds.iter().filter(|&&s| f(s)).count();
    let kp = count(&|s| row(rows, s, "no-keypoints").mpjpe_mm > 5.0 * row(rows, s, "full").mpjpe_mm);
    let temporal = count(&|s| row(rows, s, "no-temporal").mpjtd_mm_per_frame > row(rows, s, "full").mpjtd_mm_per_frame);
    let sil = count(&|s| row(rows, s, "no-silhouette").mean_iou < row(rows, s, "full").mean_iou);
    let ok = kp >= 4 && temporal >= 4 && sil >= 4;
    for s in &seeds {
        let (f, k, n, tm) = (row(rows, *s, "full"), row(rows, *s, "no-keypoints"), row(rows, *s, "no-silhouette"), row(rows, *s, "no-temporal"));
        println!(
            "  seed {s}: full {:.2} mm {:.3} mm/f IoU {:.5} | no-kp {:.1} mm | no-temporal {:.3} mm/f | no-sil IoU {:.5}",
            f.mpjpe_mm, f.mpjtd_mm_per_frame, f.mean_iou, k.mpjpe_mm, tm.mpjtd_mm_per_frame, n.mean_iou
        );
    }
    report(4, ok, &format!("seeds holding: keypoints {kp}/5, temporal {temporal}/5, silhouette {sil}/5"));
    assert!(ok);
}

#[test]
fn criterion_5_views() {
    let _g = serial();
    let rows = ablation_rows();
    // Six views is the full setting.
    let labels = ["views-2", "views-3", "views-4", "views-5", "full"];
    let means: Vec<f64> = labels
        .iter()
        .map(|l| {
            let v: Vec<f64> = rows.iter().filter(|r| r.setting == *l).map(|r| r.mpjpe_mm).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let ok = means.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    report(5, ok, &format!("mean MPJPE for 2..6 views: {} mm", shown.join(", ")));
    assert!(ok);
}

// ---------------------------------------------------------------- 6

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn binary(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> Raster<bool> {
    let mut r = Raster::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            r.set(x, y, f(x, y));
        }
    }
    r
}

fn trivial_examples() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();

    let cam = Camera::look_at("a", Vector3::new(0.0, -3.0, 0.0), Vector3::zeros(), Vector3::z(), 500.0, 640, 480).unwrap();
    let pts: Vec<Vector3<f64>> = (0..20).map(|i| Vector3::new(0.05 * i as f64 - 0.5, 0.01 * i as f64, 0.02 * (i % 5) as f64)).collect();
    let exact: Vec<KeypointObs> = pts
        .iter()
        .map(|p| {
            let q = cam.project(p).unwrap();
            KeypointObs { u: q.x, v: q.y, confidence: 1.0 }
        })
        .collect();
    let kp = |obs: &[KeypointObs]| loss_keypoint(&cam, &pts, obs, &[1.0; 20], true).unwrap().value;
    out.push(("keypoint: exact projections give 0", kp(&exact) == 0.0));
    let mut off = exact.clone();
    off[7].u += 3.0;
    off[7].v += 4.0;
    out.push(("keypoint: one (3,4) px error of 20 gives 1.25", close(kp(&off), 1.25)));

    let s = binary(10, 10, |x, y| (x * 7 + y * 3) % 4 == 0);
    let inv = Raster::from_vec(10, 10, s.data.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()).unwrap();
    out.push(("silhouette: exact mask gives 0", loss_silhouette(&s.to_f64(), &s, 0.0, 10.0).unwrap().0 == 0.0));
    out.push(("silhouette: inverted 10x10 mask gives 1", close(loss_silhouette(&inv, &s, 0.0, 10.0).unwrap().0, 1.0)));
    let (v, g) = loss_silhouette(&inv, &s, 10.0 + 1e-9, 10.0).unwrap();
    out.push(("silhouette: keypoint loss above the gate gives 0 and no gradient", v == 0.0 && g.is_none()));

    let mut theta = vec![Vector3::zeros(); 27];
    let (v, g) = loss_pose_prior(&theta, &[1.0; 27]);
    out.push(("pose prior: rest pose gives 0", v == 0.0 && g.iter().all(|x| *x == Vector3::zeros())));
    theta[4] = Vector3::new(0.3, 0.4, 0.0);
    let (v1, _) = loss_pose_prior(&theta, &[1.0; 27]);
    out.push(("pose prior: one joint at norm 0.5 of 27 gives 0.5/27", close(v1, 0.5 / 27.0)));
    let (v2, _) = loss_pose_prior(&theta, &[2.0; 27]);
    out.push(("pose prior: doubling weights leaves the value unchanged", close(v1, v2)));

    let (v, g) = loss_bones(&[0.85, 1.0, 1.15], 0.8, 1.2);
    out.push(("bones: scales inside the bounds give 0 and zero gradient", v == 0.0 && g.iter().all(|x| *x == 0.0)));
    out.push(("bones: 1.3 against an upper bound of 1.179 gives 0.014641", close(loss_bones(&[1.0, 1.3], 0.8, 1.179).0, 0.014641)));

    let rig = quadruped();
    let n = rig.n_offset_groups();
    out.push(("offset smoothness: zero offsets give 0", loss_offset_smoothness(&rig, &vec![Vector3::zeros(); n]).0 == 0.0));
    out.push((
        "offset smoothness: a uniform offset gives 0",
        close(loss_offset_smoothness(&rig, &vec![Vector3::new(0.01, 0.0, -0.02); n]).0, 0.0),
    ));

    let dt = 0.025;
    let th = vec![vec![Vector3::new(0.1, 0.2, 0.3); 4]; 3];
    let r = vec![Vector3::new(0.0, 0.5, 0.0); 3];
    let still = vec![Vector3::new(0.2, -0.1, 0.0); 3];
    out.push(("temporal: a constant sequence gives 0", loss_temporal(&th, &r, &still, dt).unwrap().0 == 0.0));
    let drift: Vec<_> = (0..3).map(|k| Vector3::new(0.01 * k as f64, 0.0, 0.0)).collect();
    let (v, g) = loss_temporal(&th, &r, &drift, dt).unwrap();
    let rot_still = g.theta.iter().flatten().chain(&g.global_rot).all(|x| *x == Vector3::zeros());
    out.push(("temporal: 0.01 m/frame drift over 3 frames gives 1e-4, rotations 0", close(v, 1e-4) && rot_still));
    let (axis, step) = (Vector3::new(0.0, 0.6, 0.8), 0.05);
    let spin: Vec<Vec<Vector3<f64>>> = (0..5)
        .map(|k| {
            let mut f = vec![Vector3::zeros(); 4];
            f[1] = axis * (0.2 + step * k as f64);
            f
        })
        .collect();
    let (v, _) = loss_temporal(&spin, &[Vector3::zeros(); 5], &[Vector3::zeros(); 5], dt).unwrap();
    out.push(("temporal: one joint spinning about a fixed axis gives (dphi/dt)^2/J", close(v, (step / dt).powi(2) / 4.0)));

    let img = Raster::filled(4, 3, Vector3::new(10.0, 20.0, 30.0));
    let all = Raster::filled(4, 3, true);
    out.push(("photometric: identical images give 0", loss_photometric(&img, &img, &all).unwrap().0 == 0.0));
    let other = Raster::filled(4, 3, Vector3::new(200.0, 0.0, 1.0));
    out.push(("photometric: an empty mask gives 0", loss_photometric(&img, &other, &Raster::filled(4, 3, false)).unwrap().0 == 0.0));
    let mut shifted = img.clone();
    shifted.set(2, 1, Vector3::new(13.0, 24.0, 30.0));
    let mut one = Raster::filled(4, 3, false);
    one.set(2, 1, true);
    out.push(("photometric: one pixel off by (3,4,0) gives 5", close(loss_photometric(&shifted, &img, &one).unwrap().0, 5.0)));

    let s = gradient_scene(0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = perturbed(&s, &mut rng);
    let zero = LossWeights { sigma_kp: 10.0, ..LossWeights::default() };
    let (l, g) = composite_loss(&s.rig, &s.cameras, &s.observations.frames, &p, &EvalConfig::new(zero)).unwrap();
    out.push(("composite: all weights 0 give loss 0 and zero gradient", l.total == 0.0 && g.flatten().iter().all(|x| *x == 0.0)));
    out
}

#[test]
fn criterion_6_trivial_examples() {
    let _g = serial();
    let examples = trivial_examples();
    let failed: Vec<&str> = examples.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    for (name, ok) in &examples {
        println!("  {} {name}", if *ok { "ok  " } else { "FAIL" });
    }
    report(6, failed.is_empty(), &format!("{}/{} examples hold", examples.len() - failed.len(), examples.len()));
    assert!(failed.is_empty(), "{failed:?}");
}

// ---------------------------------------------------------------- 7

fn naive_mpjpe(pred: &[Vec<Vector3<f64>>], reference: &[Vec<Option<Vector3<f64>>>]) -> (Vec<Option<f64>>, Option<f64>) {
    let mut per = Vec::new();
    for f in 0..pred.len() {
        let mut sum = 0.0;
        let mut n = 0;
        for j in 0..pred[f].len() {
            if let Some(r) = reference[f][j] {
                let d = pred[f][j] - r;
                sum += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
                n += 1;
            }
        }
        per.push(if n == 0 { None } else { Some(1000.0 * sum / n as f64) });
    }
    let mut sum = 0.0;
    let mut n = 0;
    for v in per.iter().flatten() {
        sum += v;
        n += 1;
    }
    (per, if n == 0 { None } else { Some(sum / n as f64) })
}

fn naive_mpjtd(seq: &[Option<Vec<Vector3<f64>>>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for t in 1..seq.len() {
        if let (Some(a), Some(b)) = (&seq[t - 1], &seq[t]) {
            for j in 0..a.len() {
                let d = b[j] - a[j];
                sum += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
                n += 1;
            }
        }
    }
    if n == 0 { None } else { Some(1000.0 * sum / n as f64) }
}

fn naive_iou(a: &Raster<bool>, b: &Raster<bool>) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for y in 0..a.height {
        for x in 0..a.width {
            if *a.get(x, y) && *b.get(x, y) {
                inter += 1;
            }
            if *a.get(x, y) || *b.get(x, y) {
                union += 1;
            }
        }
    }
    if union == 0 { 1.0 } else { inter as f64 / union as f64 }
}

fn opt_close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-10,
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn criterion_7_metrics_match_naive() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..200 {
        let frames = rng.random_range(1..8);
        let joints = rng.random_range(1..30);
        let point = |rng: &mut ChaCha8Rng| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let pred: Vec<Vec<Vector3<f64>>> = (0..frames).map(|_| (0..joints).map(|_| point(&mut rng)).collect()).collect();
        let reference: Vec<Vec<Option<Vector3<f64>>>> = (0..frames)
            .map(|_| (0..joints).map(|_| rng.random_bool(0.8).then(|| point(&mut rng))).collect())
            .collect();
        let (per, mean) = mpjpe(&pred, &reference).unwrap();
        let (nper, nmean) = naive_mpjpe(&pred, &reference);
        ok &= per.iter().zip(&nper).all(|(a, b)| opt_close(*a, *b)) && opt_close(mean, nmean);
        if let (Some(a), Some(b)) = (mean, nmean) {
            worst = worst.max((a - b).abs());
        }

        let seq: Vec<Option<Vec<Vector3<f64>>>> = pred.iter().map(|p| rng.random_bool(0.85).then(|| p.clone())).collect();
        let (a, b) = (mpjtd(&seq), naive_mpjtd(&seq));
        ok &= opt_close(a, b);
        if let (Some(a), Some(b)) = (a, b) {
            worst = worst.max((a - b).abs());
        }

        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        let density = rng.random_range(0.0..1.0);
        let ma = Raster::from_vec(w, h, (0..w * h).map(|_| rng.random_bool(density)).collect()).unwrap();
        let mb = Raster::from_vec(w, h, (0..w * h).map(|_| rng.random_bool(density)).collect()).unwrap();
        let d = (silhouette_iou(&ma, &mb).unwrap() - naive_iou(&ma, &mb)).abs();
        worst = worst.max(d);
        ok &= d <= 1e-10;
    }
    let empty = Raster::filled(3, 3, false);
    ok &= silhouette_iou(&empty, &empty).unwrap() == naive_iou(&empty, &empty);
    report(7, ok, &format!("200 random cases of MPJPE, MPJTD and IoU, max difference {worst:.1e}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn skinfit(args: &[&str], dir: &Path) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_skinfit")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

#[test]
fn criterion_8_deterministic_cli() {
    let _g = serial();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("scene.json"),
        r#"{"format":"scene-spec","version":1,"units":"m","data":{"cameras":4,"frames":12,"crop_cap":24,"seed":3,
            "noise":{"keypoint_sigma":1.0,"corrupt_fraction":0.05},
            "motion":{"kind":"walk","radius":0.6,"arc_degrees":60.0,"stride_amplitude":0.3,"period_frames":40.0}}}"#,
    )
    .unwrap();
    let mut ok = skinfit(&["--config", "scene.json", "--out", "scene", "synth", "generate"], dir);
    for run in ["a", "b"] {
        ok &= skinfit(&["--config", "scene/run.json", "--out", run, "fit-sequence", "--shape", "scene/gt/shape.json"], dir);
    }
    let same = ok && std::fs::read(dir.join("a/poses.json")).unwrap() == std::fs::read(dir.join("b/poses.json")).unwrap();
    report(8, same, &format!("two fit-sequence runs exit cleanly {ok}, poses.json byte-identical {same}"));
    assert!(same);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_shape_recovery() {
    let _g = serial();
    let alpha = vec![1.08, 0.93, 1.1, 0.9, 1.04];
    let s = generate_scene(&SceneSpec {
        cameras: 6,
        frames: 40,
        motion: Motion::walk(),
        crop_cap: 32,
        bone_scales: Some(alpha.clone()),
        ..SceneSpec::default()
    })
    .unwrap();
    let keyframes: Vec<_> = s.observations.frames.iter().step_by(10).cloned().collect();
    let config = ShapeFitConfig::default();
    let fit = fit_shape(&s.rig, &s.cameras, &keyframes, &config).unwrap();
    let (lo, hi) = config.stages.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), st| {
        (lo.max(st.weights.alpha_min), hi.min(st.weights.alpha_max))
    });
    let got = &fit.shape.bone_scales;
    let err = got.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let inside = got.iter().all(|a| (lo..=hi).contains(a));
    let ok = err < 0.02 && inside && fit.converged;
    let shown: Vec<String> = got.iter().map(|a| format!("{a:.4}")).collect();
    report(
        9,
        ok,
        &format!("recovered [{}] vs {alpha:?}, max error {err:.4}, inside ({lo}, {hi}) {inside}, global scale {:.4}", shown.join(", "), fit.shape.global_scale),
    );
    assert!(ok);
}
