//! Subcommands. Each stage reads the previous stage's files from the output
//! directory (unless given explicit paths), writes its own, and records a
//! manifest.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use pdrlab::classic::ThetaSource;
use pdrlab::evalkit::{
    classic_estimates, kf_estimates, pdrnn_estimates, position_errors, run_design, settling_time, simulate_subject, summarize_timed, Design,
    ErrorReport, Subject, SETTLING_HOLD,
};
use pdrlab::kalman::{kf_tune, KfRunOptions, KfTrainingSet};
use pdrlab::neuralnet::{build_examples, train, ModelCheckpoint, NetworkSpec, PredictOptions, Predictor, TrainConfig};
use pdrlab::pose::{read_estimates_csv, write_estimates_csv};
use pdrlab::simkit::abrupt_turn_events;
use pdrlab::streams::{make_windows, read_jsonl, stride_for, synchronize, write_jsonl};
use pdrlab::{ActivityKind, Error, ReferencePose, Result, Segment};
use serde::{Deserialize, Serialize};

use crate::manifest::{hash_inputs, hash_outputs, Manifest};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum Command {
    /// Simulate one subject: JSONL sensor streams plus the reference trajectory.
    Simulate {
        /// Overrides the scenario's activity.
        #[arg(long)]
        activity: Option<ActivityKind>,
    },
    /// Synchronize raw streams onto the uniform grid and report window counts.
    Pipeline {
        /// Radio stream [default: <out>/radio.jsonl].
        #[arg(long)]
        radio: Option<PathBuf>,
        /// Inertial stream [default: <out>/imu.jsonl].
        #[arg(long)]
        imu: Option<PathBuf>,
        /// Reference trajectory attached to the segment [default: <out>/reference.csv if present].
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Classical dead reckoning on a segment.
    Reconstruct {
        /// [default: <out>/segment.csv]
        #[arg(long)]
        segment: Option<PathBuf>,
        /// Heading source: ori, radio or ref.
        #[arg(long)]
        theta: Option<ThetaSource>,
        /// Recalibration interval, s.
        #[arg(long, allow_negative_numbers = true)]
        recal: Option<f64>,
    },
    /// Kalman filter over the raw streams of a simulated subject.
    Kf {
        /// Directory holding radio.jsonl, imu.jsonl and segment.csv.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Forecast horizon, s.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        horizon: f64,
        /// Grid-search the filter parameters on this recording first.
        #[arg(long)]
        tune: bool,
        /// Overrides the scenario's process-noise scale.
        #[arg(long, allow_negative_numbers = true)]
        #[serde(default)]
        q0: Option<f64>,
        /// Overrides the scenario's position measurement variance, m².
        #[arg(long, allow_negative_numbers = true)]
        #[serde(default)]
        r_pos: Option<f64>,
        /// Overrides the scenario's velocity measurement variance, (m/s)².
        #[arg(long, allow_negative_numbers = true)]
        #[serde(default)]
        r_vel: Option<f64>,
    },
    /// Train the network. A single segment is split in time, the last 20%
    /// serving as validation; with several, the last one validates.
    Train {
        /// Segment CSV; repeatable [default: <out>/segment.csv].
        #[arg(long = "segment")]
        segments: Vec<PathBuf>,
    },
    /// Run a trained network over a segment.
    Predict {
        /// Checkpoint [default: the scenario's `model`, else <out>/model.ckpt].
        #[arg(long)]
        model: Option<PathBuf>,
        /// [default: <out>/segment.csv]
        #[arg(long)]
        segment: Option<PathBuf>,
    },
    /// Score an estimate CSV against a reference (reference CSV or segment CSV).
    Evaluate {
        /// Estimate CSV with columns t, x, y (variances optional).
        #[arg(long)]
        estimates: PathBuf,
        /// Reference or segment CSV [default: <out>/segment.csv].
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Run an experiment design over the scenario's seeds.
    Exp {
        /// inputs, forecast, recal, activity or delta.
        #[arg(long)]
        design: Design,
        /// Also write one trajectory CSV per cell and subject.
        #[arg(long)]
        trajectories: bool,
    },
}

impl Command {
    pub fn stage_name(&self) -> String {
        match self {
            Command::Simulate { .. } => "simulate".into(),
            Command::Pipeline { .. } => "pipeline".into(),
            Command::Reconstruct { .. } => "reconstruct".into(),
            Command::Kf { .. } => "kf".into(),
            Command::Train { .. } => "train".into(),
            Command::Predict { .. } => "predict".into(),
            Command::Evaluate { estimates, .. } => {
                format!("evaluate-{}", estimates.file_stem().and_then(|s| s.to_str()).unwrap_or("estimates"))
            }
            Command::Exp { design, .. } => format!("exp-{}", design.name()),
        }
    }

    /// Fills default paths (relative to `out`) and makes every path absolute
    /// so the command can be replayed from anywhere.
    pub fn resolve(&self, out: &Path) -> Result<Command> {
        let abs = |p: PathBuf| -> Result<PathBuf> { Ok(if p.is_absolute() { p } else { std::env::current_dir()?.join(p) }) };
        let or = |p: &Option<PathBuf>, name: &str| abs(p.clone().unwrap_or_else(|| out.join(name)));
        Ok(match self {
            Command::Simulate { activity } => Command::Simulate { activity: *activity },
            Command::Pipeline { radio, imu, reference } => {
                let default_ref = out.join("reference.csv");
                let reference = match reference {
                    Some(r) => Some(abs(r.clone())?),
                    None if default_ref.exists() => Some(abs(default_ref)?),
                    None => None,
                };
                Command::Pipeline { radio: Some(or(radio, "radio.jsonl")?), imu: Some(or(imu, "imu.jsonl")?), reference }
            }
            Command::Reconstruct { segment, theta, recal } => Command::Reconstruct { segment: Some(or(segment, "segment.csv")?), theta: *theta, recal: *recal },
            Command::Kf { input, horizon, tune, q0, r_pos, r_vel } => Command::Kf {
                input: Some(abs(input.clone().unwrap_or_else(|| out.to_path_buf()))?),
                horizon: *horizon,
                tune: *tune,
                q0: *q0,
                r_pos: *r_pos,
                r_vel: *r_vel,
            },
            Command::Train { segments } => {
                let segments = if segments.is_empty() { vec![out.join("segment.csv")] } else { segments.clone() };
                Command::Train { segments: segments.into_iter().map(abs).collect::<Result<_>>()? }
            }
            Command::Predict { model, segment } => Command::Predict { model: Some(or(model, "model.ckpt")?), segment: Some(or(segment, "segment.csv")?) },
            Command::Evaluate { estimates, reference } => Command::Evaluate { estimates: abs(estimates.clone())?, reference: Some(or(reference, "segment.csv")?) },
            Command::Exp { design, trajectories } => Command::Exp { design: *design, trajectories: *trajectories },
        })
    }
}

/// Everything a stage needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ScenarioConfig,
    pub out: PathBuf,
    pub workers: usize,
}

/// Files a stage read (absolute) and wrote (relative to the output directory).
#[derive(Debug, Default)]
pub struct StageFiles {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn create(out: &Path, rel: &Path) -> Result<File> {
    let p = out.join(rel);
    if let Some(dir) = p.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(p)?)
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<PathBuf> {
    let rel = PathBuf::from(rel);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(&rel), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(rel)
}

pub fn write_reference_csv(w: impl std::io::Write, reference: &[ReferencePose]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in reference {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_reference_csv(r: impl std::io::Read) -> Result<Vec<ReferencePose>> {
    csv::Reader::from_reader(r).deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn read_segment(path: &Path) -> Result<Segment> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("segment");
    Segment::read_csv(id, open(path)?)
}

fn read_stream(path: &Path) -> Result<Vec<pdrlab::SensorSample>> {
    read_jsonl(BufReader::new(open(path)?))
}

/// Reference poses from either a reference CSV or a segment CSV with
/// reference columns.
fn read_any_reference(path: &Path) -> Result<Vec<ReferencePose>> {
    let header = {
        let mut rdr = csv::Reader::from_reader(open(path)?);
        rdr.headers()?.clone()
    };
    if header.iter().any(|h| h.starts_with("valid_")) {
        Ok(read_segment(path)?.reference()?.to_vec())
    } else {
        read_reference_csv(open(path)?)
    }
}

fn arg<'a>(p: &'a Option<PathBuf>) -> &'a Path {
    p.as_deref().expect("resolved command")
}

/// Runs an already resolved command.
pub fn execute(ctx: &Context, cmd: &Command) -> Result<StageFiles> {
    std::fs::create_dir_all(&ctx.out)?;
    let cfg = &ctx.config;
    let exp = &cfg.experiment;
    let out = &ctx.out;
    let mut files = StageFiles::default();
    match cmd {
        Command::Simulate { activity } => {
            let activity = activity.unwrap_or(cfg.activity);
            let s = simulate_subject(activity, cfg.seed, &exp.sim)?;
            write_jsonl(create(out, "radio.jsonl".as_ref())?, &s.radio)?;
            write_jsonl(create(out, "imu.jsonl".as_ref())?, &s.imu)?;
            write_reference_csv(create(out, "reference.csv".as_ref())?, &s.reference)?;
            files.outputs = vec!["radio.jsonl".into(), "imu.jsonl".into(), "reference.csv".into()];
            println!(
                "simulated {}: {} radio samples, {} imu samples, {} reference poses",
                s.id,
                s.radio.len(),
                s.imu.len(),
                s.reference.len()
            );
        }
        Command::Pipeline { radio, imu, reference } => {
            let radio_s = read_stream(arg(radio))?;
            let imu_s = read_stream(arg(imu))?;
            files.inputs = vec![arg(radio).into(), arg(imu).into()];
            let mut sync = exp.sim.sync.clone();
            let reference = match reference {
                Some(p) => {
                    files.inputs.push(p.clone());
                    Some(read_reference_csv(open(p)?)?)
                }
                None => None,
            };
            if let Some(r) = reference.as_ref().filter(|r| !r.is_empty()) {
                sync.t_start.get_or_insert(r[0].t);
                sync.t_end.get_or_insert(r[r.len() - 1].t);
            }
            let mut seg = synchronize(&[&radio_s, &imu_s], &sync)?;
            seg.id = "segment".into();
            if let Some(r) = &reference {
                seg.attach_reference(r)?;
            }
            seg.write_csv(create(out, "segment.csv".as_ref())?)?;
            let f = &exp.features;
            let windows = make_windows(&seg, f.window, f.overlap, f.horizon)?;
            #[derive(Serialize)]
            struct WindowReport {
                ticks: usize,
                fs: f64,
                window: usize,
                stride: usize,
                horizon: f64,
                windows: usize,
            }
            let report = WindowReport {
                ticks: seg.len,
                fs: seg.fs,
                window: f.window,
                stride: stride_for(f.window, f.overlap),
                horizon: f.horizon,
                windows: windows.len(),
            };
            files.outputs = vec!["segment.csv".into(), write_json(out, "windows.json", &report)?];
            println!("segment: {} ticks at {} Hz, {} windows", seg.len, seg.fs, windows.len());
        }
        Command::Reconstruct { segment, theta, recal } => {
            let seg = read_segment(arg(segment))?;
            files.inputs = vec![arg(segment).into()];
            let mut opts = exp.classic.clone();
            if let Some(t) = theta {
                opts.theta_source = *t;
            }
            if recal.is_some() {
                opts.recal_interval = *recal;
            }
            let est = classic_estimates(&seg, &opts)?;
            write_estimates_csv(create(out, "classic.csv".as_ref())?, &est)?;
            files.outputs = vec!["classic.csv".into()];
            println!("classic: {} estimates", est.len());
        }
        Command::Kf { input, horizon, tune, q0, r_pos, r_vel } => {
            let dir = arg(input);
            let (rp, ip, sp) = (dir.join("radio.jsonl"), dir.join("imu.jsonl"), dir.join("segment.csv"));
            let segment = read_segment(&sp)?;
            let subject = Subject {
                id: segment.id.clone(),
                activity: cfg.activity,
                seed: cfg.seed,
                reference: segment.reference.clone().unwrap_or_default(),
                radio: read_stream(&rp)?,
                imu: read_stream(&ip)?,
                segment,
            };
            files.inputs = vec![rp, ip, sp];
            let mut kf = cfg.kf;
            kf.q0 = q0.unwrap_or(kf.q0);
            kf.r_pos = r_pos.unwrap_or(kf.r_pos);
            kf.r_vel = r_vel.unwrap_or(kf.r_vel);
            kf.validate()?;
            if *tune {
                let set = KfTrainingSet {
                    inputs: subject.kf_inputs(exp.kf_calibration_window)?,
                    reference: subject.segment.reference()?.to_vec(),
                    output_times: subject.segment.times(),
                };
                let opts = KfRunOptions { horizon: *horizon, ..KfRunOptions::default() };
                let tuned = kf_tune(&[set], &exp.kf_grid, &kf, &opts)?;
                kf = tuned.config;
                files.outputs.push(write_json(out, "kf-tuned.json", &kf)?);
                println!("tuned kf: q0 {} r_pos {} r_vel {} (MAE {:.4} m)", kf.q0, kf.r_pos, kf.r_vel, tuned.loss);
            }
            let est = kf_estimates(&subject, &kf, *horizon, exp.kf_calibration_window)?;
            write_estimates_csv(create(out, "kf.csv".as_ref())?, &est)?;
            files.outputs.push("kf.csv".into());
            println!("kf: {} estimates", est.len());
        }
        Command::Train { segments } => {
            let segs = segments.iter().map(|p| read_segment(p)).collect::<Result<Vec<_>>>()?;
            files.inputs = segments.clone();
            let (train_segs, val_segs) = if segs.len() == 1 {
                let s = &segs[0];
                let cut = s.len * 4 / 5;
                (vec![s.slice(0, cut)], vec![s.slice(cut, s.len)])
            } else {
                let (last, rest) = segs.split_last().expect("non-empty");
                (rest.to_vec(), vec![last.clone()])
            };
            let f = &exp.features;
            let tr = build_examples(&train_segs, f, cfg.seed)?;
            let va = build_examples(&val_segs, f, cfg.seed.wrapping_add(1))?;
            let spec = NetworkSpec { input_dim: f.input_dim(), output_dim: 2, init_seed: cfg.seed, ..exp.network.clone() };
            let tc = TrainConfig { seed: cfg.seed, ..exp.train.clone() };
            let outcome = train(&tr, &va, &spec, f, &tc)?;
            let rel = PathBuf::from("model.ckpt");
            outcome.checkpoint.save(&out.join(&rel))?;
            files.outputs = vec![rel, write_json(out, "history.json", &outcome.history)?];
            let best = outcome.history.iter().map(|h| h.val_mse).fold(f64::INFINITY, f64::min);
            println!(
                "trained on {} windows ({} validation): {} epochs, best validation MSE {best:.4} m²",
                tr.len(),
                va.len(),
                outcome.history.len()
            );
        }
        Command::Predict { model, segment } => {
            let model_path = arg(model);
            let ckpt = ModelCheckpoint::load(model_path)?;
            let seg = read_segment(arg(segment))?;
            files.inputs = vec![model_path.into(), arg(segment).into()];
            let p = Predictor::new(ckpt)?;
            let opts = PredictOptions { stride: cfg.predict.stride, mc_passes: cfg.predict.mc_passes, seed: cfg.seed, start: None };
            let est = pdrnn_estimates(&seg, &p, &opts)?;
            write_estimates_csv(create(out, "pdrnn.csv".as_ref())?, &est)?;
            files.outputs = vec!["pdrnn.csv".into()];
            println!("pdrnn: {} estimates", est.len());
        }
        Command::Evaluate { estimates, reference } => {
            let est = read_estimates_csv(open(estimates)?, 0.0)?;
            let reference_path = arg(reference);
            let reference = read_any_reference(reference_path)?;
            files.inputs = vec![estimates.clone(), reference_path.into()];
            let errors = position_errors(&est, &reference)?;
            let report = summarize_timed(&errors)?;
            let events = abrupt_turn_events(&reference, exp.turn_min_angle, exp.turn_within);
            let settling = settling_time(&errors, exp.settling_eps, &events, SETTLING_HOLD);
            #[derive(Serialize)]
            struct Evaluation<'a> {
                estimates: String,
                report: &'a ErrorReport,
                settling_eps: f64,
                settling: Vec<Option<f64>>,
            }
            let name = estimates.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let stem = cmd.stage_name().replacen("evaluate-", "report-", 1);
            let eval = Evaluation { estimates: name, report: &report, settling_eps: exp.settling_eps, settling };
            files.outputs = vec![write_json(out, &format!("{stem}.json"), &eval)?];
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Exp { design, trajectories } => {
            let seeds = cfg.experiment_seeds();
            let res = run_design(*design, exp, &seeds, ctx.workers)?;
            let dir = PathBuf::from(design.name());
            std::fs::create_dir_all(out.join(&dir))?;
            res.write_csv(create(out, &dir.join("results.csv"))?)?;
            std::fs::write(out.join(dir.join("summary.json")), res.summary_json()?)?;
            files.outputs = vec![dir.join("results.csv"), dir.join("summary.json")];
            if *trajectories {
                for p in res.write_trajectories(&out.join(&dir).join("trajectories"))? {
                    files.outputs.push(p.strip_prefix(out).expect("inside out").to_path_buf());
                }
            }
            for g in res.groups() {
                let levels: Vec<String> = g.levels.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!(
                    "{:<8} {:<32} seeds {}  MAE {:.4}  CEP95 {:.4}{}",
                    g.estimator.name(),
                    levels.join(" "),
                    g.seeds,
                    g.median_mae,
                    g.median_cep95,
                    g.median_settling.map(|s| format!("  settle {s:.2} s")).unwrap_or_default()
                );
            }
            for n in &res.notes {
                println!("note: {n}");
            }
            for e in &res.excluded {
                println!("excluded: {e}");
            }
        }
    }
    Ok(files)
}

/// Resolves, executes and records a manifest for one stage.
pub fn run_stage(ctx: &Context, cmd: &Command) -> Result<Manifest> {
    let cmd = cmd.resolve(&ctx.out)?;
    let files = execute(ctx, &cmd)?;
    let manifest = Manifest {
        tool: "pdrlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: ctx.config.hash(),
        seed: ctx.config.seed,
        workers: ctx.workers,
        inputs: hash_inputs(&files.inputs)?,
        outputs: hash_outputs(&ctx.out, &files.outputs)?,
        command: cmd,
        config: ctx.config.clone(),
    };
    manifest.write(&ctx.out)?;
    Ok(manifest)
}

/// Outcome of replaying one manifest.
#[derive(Debug)]
pub struct VerifyReport {
    pub manifest: PathBuf,
    pub mismatches: Vec<String>,
    pub checked: usize,
}

/// Replays every manifest in `dir` into a scratch directory and compares
/// the recorded hashes with the regenerated bytes.
pub fn verify_dir(dir: &Path, workers: Option<usize>) -> Result<Vec<VerifyReport>> {
    let manifests = Manifest::find(dir)?;
    if manifests.is_empty() {
        return Err(Error::MissingArtifact(dir.join("manifest-*.json")));
    }
    let mut reports = Vec::new();
    for path in manifests {
        let m = Manifest::read(&path)?;
        let mut mismatches = Vec::new();
        if m.config.hash() != m.config_hash {
            mismatches.push(format!("config hash {} does not match the recorded config", m.config_hash));
        }
        for input in &m.inputs {
            let now = crate::manifest::sha256_file(Path::new(&input.path))?;
            if now != input.sha256 {
                mismatches.push(format!("input {} changed since the run", input.path));
            }
        }
        m.config.validate()?;
        let scratch = tempfile::tempdir()?;
        let ctx = Context { config: m.config.clone(), out: scratch.path().to_path_buf(), workers: workers.unwrap_or(m.workers) };
        let files = execute(&ctx, &m.command)?;
        let replayed = hash_outputs(scratch.path(), &files.outputs)?;
        if replayed.len() != m.outputs.len() {
            mismatches.push(format!("{} outputs recorded, {} regenerated", m.outputs.len(), replayed.len()));
        }
        for (rec, new) in m.outputs.iter().zip(&replayed) {
            if rec != new {
                mismatches.push(format!("output {} differs", rec.path));
            }
        }
        reports.push(VerifyReport { manifest: path, mismatches, checked: m.outputs.len() });
    }
    Ok(reports)
}
