use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use skinfit::io::config::RUN_CONFIG;
use skinfit::io::documents::save_features;
use skinfit::io::format::{read_document, write_document};
use skinfit::io::qc::save_exclusion_log;
use skinfit::io::{
    load_calibration, load_detections, load_keypoints_3d, load_observations, load_poses, load_rig, load_shape,
    qc_filter, save_calibration, save_keypoints_3d, save_observations, save_poses, save_rig, save_shape, Keypoints3d,
    ObservationSet, PoseSequence, RunConfig,
};
use skinfit::metrics::evaluate_fit;
use skinfit::model::features::{export_pose_features, FeatureKind};
use skinfit::model::quadruped::quadruped;
use skinfit::model::RigModel;
use skinfit::solve::{fit_color, fit_sequence, fit_shape, triangulate_sequence, StageOutcome};
use skinfit::synth::{
    generate_scene, run_ablation_study, run_triangulation_noise_study, AblationStudySpec, NoiseStudySpec, SceneSpec,
};
use skinfit::{Error, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "skinfit", version, about = "Multi-view articulated mesh fitting")]
struct Cli {
    /// Run configuration (or study spec for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw detections into per-identity observations.
    Qc,
    /// Triangulate 3D keypoints and flag frames with large reprojection error.
    Triangulate,
    /// Fit bone scales, global scale and vertex offsets on keyframes.
    FitShape,
    /// Fit vertex colors on keyframes with geometry frozen.
    FitColor {
        #[arg(long)]
        shape: Option<PathBuf>,
        /// Keyframe poses, e.g. from `fit-shape`.
        #[arg(long)]
        poses: Option<PathBuf>,
    },
    /// Fit poses of the whole sequence with the shape fixed.
    FitSequence {
        #[arg(long)]
        shape: Option<PathBuf>,
    },
    /// Evaluate a fitted sequence.
    Eval {
        #[arg(long)]
        shape: Option<PathBuf>,
        #[arg(long)]
        poses: Option<PathBuf>,
    },
    /// Export per-frame pose features.
    ExportFeatures {
        #[arg(long)]
        shape: Option<PathBuf>,
        #[arg(long)]
        poses: Option<PathBuf>,
        /// rot-matrix, kp3d, kp2d or mesh.
        #[arg(long, default_value = "rot-matrix")]
        kind: String,
        /// Camera id for kp2d.
        #[arg(long)]
        camera: Option<String>,
    },
    /// Synthetic scenes and studies.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a synthetic scene in the solver's input formats plus ground truth.
    Generate,
    /// Triangulation error against pixel noise and camera count.
    NoiseStudy,
    /// Fit a synthetic sequence under each ablation setting.
    Ablate,
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            let line = json!({"level": record.level().as_str(), "target": record.target(), "message": record.args().to_string()});
            writeln!(buf, "{line}")
        })
        .init();
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        Error::Degenerate(_) => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}

/// Outcome of a command that may finish with unconverged results.
enum Status {
    Ok,
    NotConverged(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(Status::Ok)) => ExitCode::SUCCESS,
        Ok(Ok(Status::NotConverged(msg))) => {
            log::warn!("{msg}");
            ExitCode::from(EXIT_NON_CONVERGENCE)
        }
        Ok(Err(e)) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidArgument(format!("no {what} given in the run config or on the command line"))
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(c.seed);
    Ok(c.with_seed(seed))
}

fn load_rig_or_default(c: &RunConfig) -> Result<RigModel> {
    match &c.rig {
        Some(dir) => load_rig(dir),
        None => Ok(quadruped()),
    }
}

/// Observations from the config, QC'ing raw detections when needed.
fn observations(c: &RunConfig, rig: &RigModel, out: &Path) -> Result<ObservationSet> {
    if let Some(p) = &c.observations {
        return load_observations(p, Some(rig.n_keypoints()));
    }
    let (Some(det), Some(id)) = (&c.detections, &c.identity) else {
        return Err(missing("observations (or detections with an identity)"));
    };
    let known = if c.known_identities.is_empty() { vec![id.clone()] } else { c.known_identities.clone() };
    let qc = qc_filter(&load_detections(det)?, &known, c.duplicate_policy);
    save_exclusion_log(&out.join("exclusions.json"), &qc.log)?;
    qc.observations.get(id).cloned().ok_or_else(|| Error::InvalidArgument(format!("identity `{id}` is not among the known identities")))
}

/// Positions in `obs` of the configured keyframes.
fn keyframe_positions(c: &RunConfig, obs: &ObservationSet) -> Result<Vec<usize>> {
    match &c.keyframes {
        None => Ok((0..obs.len()).step_by(10).collect()),
        Some(ks) => ks
            .iter()
            .map(|k| obs.frames.iter().position(|f| f.frame == *k).ok_or_else(|| Error::InvalidArgument(format!("keyframe {k} not in observations"))))
            .collect(),
    }
}

fn outcome_json(o: &StageOutcome) -> serde_json::Value {
    json!({"iterations": o.iterations, "converged": o.converged, "initial_loss": o.history.first(), "final_loss": o.final_loss})
}

fn pick<'a>(flag: &'a Option<PathBuf>, config: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    flag.as_ref().or(config.as_ref()).ok_or_else(|| missing(what))
}

/// Poses aligned with the frames of `obs`.
fn aligned_poses(seq: PoseSequence, obs: &ObservationSet) -> Result<PoseSequence> {
    let frames: Vec<usize> = obs.frames.iter().map(|f| f.frame).collect();
    if seq.frames != frames {
        return Err(Error::InvalidArgument("pose frames do not match observation frames".into()));
    }
    Ok(seq)
}

fn run(cli: &Cli) -> Result<Status> {
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    match &cli.command {
        Command::Synth { command } => return synth(cli, command),
        Command::Qc => {
            let c = run_config(cli)?;
            let det = c.detections.as_ref().ok_or_else(|| missing("detections"))?;
            let known = if c.known_identities.is_empty() { c.identity.iter().cloned().collect() } else { c.known_identities.clone() };
            let qc = qc_filter(&load_detections(det)?, &known, c.duplicate_policy);
            save_exclusion_log(&out.join("exclusions.json"), &qc.log)?;
            for (id, obs) in &qc.observations {
                save_observations(&out.join(id), obs)?;
            }
            log::info!("qc: {} identities, {} exclusions", qc.observations.len(), qc.log.len());
            return Ok(Status::Ok);
        }
        _ => {}
    }
    let c = run_config(cli)?;
    let rig = load_rig_or_default(&c)?;
    let cameras = load_calibration(c.calibration.as_ref().ok_or_else(|| missing("calibration"))?)?;
    let obs = observations(&c, &rig, out)?;
    let names: Vec<String> = rig.keypoints().iter().map(|k| k.name.clone()).collect();
    match &cli.command {
        Command::Triangulate => {
            let t = triangulate_sequence(&cameras, &obs, c.triangulation, &c.shape_fit.ransac.into(), c.seed, c.reprojection_threshold);
            let kp = Keypoints3d { frames: t.iter().map(|f| f.frame).collect(), points: t.iter().map(|f| f.points.clone()).collect() };
            save_keypoints_3d(&out.join("keypoints3d.json"), &names, &kp)?;
            let qc: Vec<_> = t.iter().map(|f| json!({"frame": f.frame, "reprojection_px": f.reprojection_px, "flagged": f.flagged})).collect();
            write_document(&out.join("triangulation_qc.json"), "triangulation-qc", "px", &json!({"threshold_px": c.reprojection_threshold, "frames": qc}))?;
            log::info!("triangulated {} frames, {} flagged", t.len(), t.iter().filter(|f| f.flagged).count());
            Ok(Status::Ok)
        }
        Command::FitShape => {
            let keys = keyframe_positions(&c, &obs)?;
            let frames: Vec<_> = keys.iter().map(|&k| obs.frames[k].clone()).collect();
            let fit = fit_shape(&rig, &cameras, &frames, &c.shape_fit)?;
            save_shape(&out.join("shape.json"), &fit.shape)?;
            let seq = PoseSequence { frames: frames.iter().map(|f| f.frame).collect(), poses: fit.poses.clone(), converged: vec![fit.converged; frames.len()] };
            save_poses(&out.join("keyframe_poses.json"), &seq)?;
            write_document(&out.join("fit_shape_log.json"), "stage-log", "px^2", &fit.stages.iter().map(outcome_json).collect::<Vec<_>>())?;
            Ok(if fit.converged { Status::Ok } else { Status::NotConverged("shape fit did not converge".into()) })
        }
        Command::FitColor { shape, poses } => {
            let shape = load_shape(pick(shape, &c.shape, "shape")?, Some(&rig))?;
            let seq = load_poses(pick(poses, &c.poses, "keyframe poses")?, Some(&rig))?;
            let keys = keyframe_positions(&c, &obs)?;
            let mut frames = Vec::new();
            let mut kposes = Vec::new();
            for &k in &keys {
                let f = &obs.frames[k];
                let i = seq.frames.iter().position(|&n| n == f.frame).ok_or_else(|| Error::InvalidArgument(format!("no pose for keyframe {}", f.frame)))?;
                frames.push(f.clone());
                kposes.push(seq.poses[i].clone());
            }
            let fit = fit_color(&rig, &cameras, &frames, &shape, &kposes, &c.color.stage, c.color.light)?;
            save_shape(&out.join("shape.json"), &fit.shape)?;
            write_document(&out.join("fit_color_log.json"), "stage-log", "px^2", &vec![outcome_json(&fit.outcome)])?;
            Ok(if fit.outcome.converged { Status::Ok } else { Status::NotConverged("color fit did not converge".into()) })
        }
        Command::FitSequence { shape } => {
            let shape = load_shape(pick(shape, &c.shape, "shape")?, Some(&rig))?;
            let fit = fit_sequence(&rig, &cameras, &obs, &shape, &c.sequence)?;
            let seq = PoseSequence { frames: obs.frames.iter().map(|f| f.frame).collect(), poses: fit.poses, converged: fit.converged.clone() };
            save_poses(&out.join("poses.json"), &seq)?;
            let windows: Vec<_> = fit
                .windows
                .iter()
                .map(|(r, o)| json!({"start": r.start, "end": r.end, "outcome": o.as_ref().map(outcome_json)}))
                .collect();
            let selection: Vec<_> = seq.frames.iter().zip(&fit.selection).map(|(f, s)| json!({"frame": f, "cameras": s})).collect();
            write_document(&out.join("fit_sequence_log.json"), "sequence-log", "px^2", &json!({"windows": windows, "selection": selection}))?;
            let bad = fit.converged.iter().filter(|c| !**c).count();
            Ok(if bad == 0 { Status::Ok } else { Status::NotConverged(format!("{bad} frames did not converge")) })
        }
        Command::Eval { shape, poses } => {
            let shape = load_shape(pick(shape, &c.shape, "shape")?, Some(&rig))?;
            let seq = aligned_poses(load_poses(pick(poses, &c.poses, "poses")?, Some(&rig))?, &obs)?;
            let reference = match &c.reference {
                Some(p) => {
                    let (_, kp) = load_keypoints_3d(p)?;
                    let by_frame: BTreeMap<usize, _> = kp.frames.iter().copied().zip(kp.points).collect();
                    Some(obs.frames.iter().map(|f| by_frame.get(&f.frame).cloned().unwrap_or_else(|| vec![None; names.len()])).collect::<Vec<_>>())
                }
                None => None,
            };
            let report = evaluate_fit(&rig, &shape, &seq.poses, Some(&seq.converged), &cameras, &obs, reference.as_deref(), c.seed)?;
            write_document(&out.join("eval_report.json"), "eval-report", "mm", &report)?;
            let cams: Vec<&String> = report.iou.keys().collect();
            let mut csv = String::from("frame,mpjpe_mm");
            for cam in &cams {
                let _ = write!(csv, ",iou_{cam}");
            }
            csv.push('\n');
            let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            for (n, f) in obs.frames.iter().enumerate() {
                let _ = write!(csv, "{},{}", f.frame, cell(report.per_frame_mpjpe_mm[n]));
                for cam in &cams {
                    let _ = write!(csv, ",{}", cell(report.iou[*cam][n]));
                }
                csv.push('\n');
            }
            let p = out.join("per_frame.csv");
            std::fs::write(&p, csv).map_err(|e| Error::Io { path: p, source: e })?;
            log::info!("mpjpe {:?} mm, mpjtd {:?} mm/frame, mean iou {:?}", report.mpjpe_mm, report.mpjtd_mm_per_frame, report.mean_iou);
            Ok(Status::Ok)
        }
        Command::ExportFeatures { shape, poses, kind, camera } => {
            let shape = load_shape(pick(shape, &c.shape, "shape")?, Some(&rig))?;
            let seq = load_poses(pick(poses, &c.poses, "poses")?, Some(&rig))?;
            let k: FeatureKind = kind.parse()?;
            let cam = match camera {
                Some(id) => Some(&cameras.cameras[cameras.index_of(id).ok_or_else(|| Error::InvalidArgument(format!("unknown camera `{id}`")))?]),
                None => None,
            };
            let values = export_pose_features(&rig, &shape, &seq.poses, cam, k)?;
            save_features(&out.join("features.json"), kind, camera.as_deref(), &seq.frames, &values)?;
            Ok(Status::Ok)
        }
        Command::Synth { .. } | Command::Qc => unreachable!("handled above"),
    }
}

fn synth(cli: &Cli, command: &SynthCommand) -> Result<Status> {
    let out = &cli.out;
    match command {
        SynthCommand::Generate => {
            let mut spec: SceneSpec = match &cli.config {
                Some(p) => read_document(p, "scene-spec", "m")?,
                None => SceneSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let scene = generate_scene(&spec)?;
            save_rig(&out.join("rig"), &scene.rig)?;
            save_calibration(&out.join("calibration.json"), &scene.cameras)?;
            save_observations(out, &scene.observations)?;
            let frames: Vec<usize> = scene.observations.frames.iter().map(|f| f.frame).collect();
            save_shape(&out.join("gt/shape.json"), &scene.shape)?;
            save_poses(&out.join("gt/poses.json"), &PoseSequence { frames: frames.clone(), poses: scene.poses.clone(), converged: vec![true; frames.len()] })?;
            let names: Vec<String> = scene.rig.keypoints().iter().map(|k| k.name.clone()).collect();
            let points = scene.keypoints_3d().into_iter().map(|f| f.into_iter().map(Some).collect()).collect();
            save_keypoints_3d(&out.join("gt/keypoints3d.json"), &names, &Keypoints3d { frames, points })?;
            write_document(&out.join("gt/scene.json"), "scene-spec", "m", &spec)?;
            let run = RunConfig {
                rig: Some("rig".into()),
                calibration: Some("calibration.json".into()),
                observations: Some("observations.json".into()),
                reference: Some("gt/keypoints3d.json".into()),
                ..RunConfig::default()
            }
            .with_seed(spec.seed);
            write_document(&out.join("run.json"), RUN_CONFIG, "m", &run)?;
            log::info!("wrote {} frames from {} cameras to {}", spec.frames, spec.cameras, out.display());
        }
        SynthCommand::NoiseStudy => {
            let mut spec: NoiseStudySpec = match &cli.config {
                Some(p) => read_document(p, "noise-study-spec", "px")?,
                None => NoiseStudySpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let table = run_triangulation_noise_study(&spec)?;
            write_document(&out.join("noise_study.json"), "noise-study", "mm", &table)?;
            for c in &table.cells {
                log::info!("sigma {} px, {} cameras: {:.3} +- {:.3} mm", c.sigma_px, c.cameras, c.mean_mm, c.std_mm);
            }
        }
        SynthCommand::Ablate => {
            let mut spec: AblationStudySpec = match &cli.config {
                Some(p) => read_document(p, "ablation-spec", "m")?,
                None => AblationStudySpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.seeds = vec![s];
            }
            let rows = run_ablation_study(&spec)?;
            write_document(&out.join("ablation.json"), "ablation", "mm", &json!({"spec": spec, "rows": rows}))?;
        }
    }
    Ok(Status::Ok)
}
