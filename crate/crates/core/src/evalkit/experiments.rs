//! Scripted study designs. Every design expands into independent jobs (one
//! per seed, or per seed and factor level) that run on a bounded worker pool;
//! results are collected by job index so the output does not depend on the
//! number of workers.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{simulate_subject, SimulationConfig, Subject};
use super::estimators::{classic_estimates, kf_estimates, pdrnn_estimates, EstimatorKind};
use super::metrics::{median, median_settling, position_errors, settling_time, summarize, ErrorReport, TimedError, SETTLING_HOLD};
use super::pool::run_jobs;
use crate::classic::ClassicOptions;
use crate::error::{Error, Result};
use crate::kalman::{kf_tune, KfConfig, KfGrid, KfRunOptions, KfTrainingSet};
use crate::neuralnet::{build_examples, train, FeatureConfig, NetworkSpec, OutputMode, PredictOptions, Predictor, TrainConfig};
use crate::pose::PoseEstimate;
use crate::simkit::{abrupt_turn_events, ActivityKind};
use crate::streams::{synchronize, Channel, Modality, SensorSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Inputs,
    Forecast,
    Recal,
    Activity,
    Delta,
}

impl Design {
    pub const ALL: [Design; 5] = [Design::Inputs, Design::Forecast, Design::Recal, Design::Activity, Design::Delta];

    pub fn name(self) -> &'static str {
        match self {
            Design::Inputs => "inputs",
            Design::Forecast => "forecast",
            Design::Recal => "recal",
            Design::Activity => "activity",
            Design::Delta => "delta",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::config("design", format!("unknown design `{s}`")))
    }
}

/// Everything an experiment needs besides the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub sim: SimulationConfig,
    pub train_subjects: usize,
    pub val_subjects: usize,
    pub test_subjects: usize,
    pub train_activities: Vec<ActivityKind>,
    pub test_activity: ActivityKind,
    pub features: FeatureConfig,
    /// Network template; `input_dim` and `init_seed` are filled per job.
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub kf_grid: KfGrid,
    pub kf_calibration_window: f64,
    pub classic: ClassicOptions,
    /// Errors before this time are excluded so every estimator is scored on
    /// the same span, s.
    pub eval_warmup: f64,
    /// Window stride used when scoring the network, ticks.
    pub eval_stride: usize,
    pub settling_eps: f64,
    pub turn_min_angle: f64,
    pub turn_within: f64,
    /// Input sets of the input-variation design.
    pub input_sets: Vec<Vec<Channel>>,
    pub horizons: Vec<f64>,
    /// Sequence lengths of the forecast design, s.
    pub sequence_lengths: Vec<f64>,
    /// Horizons above this are listed as excluded instead of run, s.
    pub max_horizon: f64,
    /// Recalibration intervals, s; `null` is pure dead reckoning.
    pub recal_intervals: Vec<Option<f64>>,
    pub recal_estimators: Vec<EstimatorKind>,
    pub recal_activity: ActivityKind,
    pub recal_speed_bias: f64,
    /// Length of the recalibration design's test recordings, s.
    pub recal_duration: f64,
    pub activities: Vec<ActivityKind>,
    /// Also train a walking-only network and score it on the test activity.
    pub walking_only_arm: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let features = FeatureConfig {
            inputs: vec![Channel::PRadio, Channel::Speed, Channel::ThetaOri],
            window: 32,
            ..FeatureConfig::default()
        };
        Self {
            sim: SimulationConfig::default(),
            train_subjects: 5,
            val_subjects: 1,
            test_subjects: 2,
            train_activities: vec![ActivityKind::Walking, ActivityKind::Jogging, ActivityKind::Running],
            test_activity: ActivityKind::Random,
            network: NetworkSpec::desk(features.input_dim(), 2),
            features,
            train: TrainConfig::desk(),
            kf_grid: KfGrid::default(),
            kf_calibration_window: 10.0,
            classic: ClassicOptions::default(),
            eval_warmup: 3.0,
            eval_stride: 1,
            settling_eps: 0.3,
            turn_min_angle: std::f64::consts::FRAC_PI_2,
            turn_within: 0.5,
            input_sets: vec![
                vec![Channel::PRadio],
                vec![Channel::PRadio, Channel::Speed],
                vec![Channel::PRadio, Channel::Acc],
                vec![Channel::PRadio, Channel::Speed, Channel::ThetaOri],
            ],
            horizons: vec![0.0, 1.0, 2.0],
            sequence_lengths: vec![0.64, 1.28, 2.56],
            max_horizon: 2.0,
            recal_intervals: vec![Some(1.0), Some(30.0), Some(100.0), None],
            recal_estimators: vec![EstimatorKind::Classic, EstimatorKind::Kf, EstimatorKind::Pdrnn],
            recal_activity: ActivityKind::Random,
            recal_speed_bias: 0.05,
            recal_duration: 300.0,
            activities: ActivityKind::ALL.to_vec(),
            walking_only_arm: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        if self.train_subjects == 0 || self.val_subjects == 0 || self.test_subjects == 0 {
            return Err(Error::config("train_subjects", "need at least one train, validation and test subject"));
        }
        if self.train_activities.is_empty() {
            return Err(Error::config("train_activities", "must not be empty"));
        }
        if self.eval_stride == 0 {
            return Err(Error::config("eval_stride", "must be >= 1"));
        }
        if !(self.recal_duration > 0.0) {
            return Err(Error::config("recal_duration", "must be > 0"));
        }
        if !(self.settling_eps > 0.0) {
            return Err(Error::config("settling_eps", "must be > 0"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of this config and the seed list.
    pub fn hash(&self, seeds: &[u64]) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            config: &'a ExperimentConfig,
            seeds: &'a [u64],
        }
        let json = serde_json::to_vec(&Keyed { config: self, seeds }).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Settling behaviour after abrupt turns in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlingStats {
    pub eps: f64,
    pub events: usize,
    pub settled: usize,
    /// Median over events with unsettled events counted as +∞.
    pub median: Option<f64>,
    pub times: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub subject: String,
    pub estimates: Vec<PoseEstimate>,
}

/// One estimator × factor-level combination for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: EstimatorKind,
    pub levels: BTreeMap<String, String>,
    pub seed: u64,
    pub subjects: Vec<String>,
    pub report: ErrorReport,
    pub settling: Option<SettlingStats>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

impl Cell {
    pub fn level_key(&self) -> String {
        let mut key = self.estimator.name().to_string();
        for (k, v) in &self.levels {
            key.push_str(&format!(" {k}={v}"));
        }
        key
    }
}

/// Median statistics over seeds for one estimator × level combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub estimator: EstimatorKind,
    pub levels: BTreeMap<String, String>,
    pub seeds: usize,
    pub median_mae: f64,
    pub median_rmse: f64,
    pub median_cep95: f64,
    pub median_settling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub design: Design,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    /// Factor levels that were requested but not run.
    pub excluded: Vec<String>,
    /// Outcomes of soft trend checks, reported rather than enforced.
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    design: &'a str,
    estimator: &'a str,
    levels: String,
    seed: u64,
    subjects: String,
    n: usize,
    mae: f64,
    mse: f64,
    rmse: f64,
    cep95: f64,
    settle_events: Option<usize>,
    settle_settled: Option<usize>,
    settle_median: Option<f64>,
}

impl ExperimentResult {
    /// Cells matching an estimator and a set of level constraints.
    pub fn select<'a>(&'a self, estimator: EstimatorKind, levels: &'a [(&'a str, &'a str)]) -> impl Iterator<Item = &'a Cell> + 'a {
        self.cells.iter().filter(move |c| {
            c.estimator == estimator && levels.iter().all(|(k, v)| c.levels.get(*k).map(String::as_str) == Some(*v))
        })
    }

    /// Median over seeds of a per-cell statistic.
    pub fn median_of(&self, estimator: EstimatorKind, levels: &[(&str, &str)], stat: impl Fn(&Cell) -> f64) -> Option<f64> {
        let mut v: Vec<f64> = self.select(estimator, levels).map(stat).collect();
        median(&mut v)
    }

    pub fn groups(&self) -> Vec<GroupSummary> {
        let mut by: BTreeMap<(EstimatorKind, Vec<(String, String)>), Vec<&Cell>> = BTreeMap::new();
        for c in &self.cells {
            let levels: Vec<(String, String)> = c.levels.clone().into_iter().collect();
            by.entry((c.estimator, levels)).or_default().push(c);
        }
        by.into_iter()
            .map(|((estimator, levels), cells)| {
                let med = |f: &dyn Fn(&Cell) -> f64| {
                    let mut v: Vec<f64> = cells.iter().map(|c| f(c)).collect();
                    median(&mut v).unwrap_or(f64::NAN)
                };
                let mut settle: Vec<f64> = cells
                    .iter()
                    .filter_map(|c| c.settling.as_ref())
                    .map(|s| s.median.unwrap_or(f64::INFINITY))
                    .collect();
                GroupSummary {
                    estimator,
                    levels: levels.into_iter().collect(),
                    seeds: cells.len(),
                    median_mae: med(&|c| c.report.mae),
                    median_rmse: med(&|c| c.report.rmse),
                    median_cep95: med(&|c| c.report.cep95),
                    median_settling: median(&mut settle).filter(|m| m.is_finite()),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for c in &self.cells {
            wtr.serialize(CsvRow {
                design: self.design.name(),
                estimator: c.estimator.name(),
                levels: c.levels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
                seed: c.seed,
                subjects: c.subjects.join(";"),
                n: c.report.n,
                mae: c.report.mae,
                mse: c.report.mse,
                rmse: c.report.rmse,
                cep95: c.report.cep95,
                settle_events: c.settling.as_ref().map(|s| s.events),
                settle_settled: c.settling.as_ref().map(|s| s.settled),
                settle_median: c.settling.as_ref().and_then(|s| s.median),
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Deterministic JSON summary: groups, cells, exclusions and notes.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            design: Design,
            config_hash: &'a str,
            seeds: &'a [u64],
            groups: Vec<GroupSummary>,
            cells: &'a [Cell],
            excluded: &'a [String],
            notes: &'a [String],
        }
        let s = Summary {
            design: self.design,
            config_hash: &self.config_hash,
            seeds: &self.seeds,
            groups: self.groups(),
            cells: &self.cells,
            excluded: &self.excluded,
            notes: &self.notes,
        };
        Ok(serde_json::to_string_pretty(&s)? + "\n")
    }

    /// One CSV per cell trajectory, written as `<dir>/<design>_<estimator>_<levels>_s<seed>_<subject>.csv`.
    pub fn write_trajectories(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for c in &self.cells {
            let levels: String = c.levels.iter().map(|(k, v)| format!("{k}-{v}")).collect::<Vec<_>>().join("_");
            for t in &c.trajectories {
                let name = format!("{}_{}_{}_s{}_{}.csv", self.design.name(), c.estimator.name(), levels, c.seed, t.subject)
                    .replace(['/', ' ', '+'], "-");
                let path = dir.join(name);
                crate::pose::write_estimates_csv(std::fs::File::create(&path)?, &t.estimates)?;
                paths.push(path);
            }
        }
        Ok(paths)
    }
}

// ---------------------------------------------------------------------------
// shared building blocks

/// Simulated subjects of one seed; roles use disjoint simulator seeds.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub train: Vec<Subject>,
    pub val: Vec<Subject>,
    pub test: Vec<Subject>,
}

const VAL_OFFSET: u64 = 3_000;
const TEST_OFFSET: u64 = 6_000;

pub fn subject_seed(seed: u64, offset: u64, i: usize) -> u64 {
    seed.wrapping_mul(10_000).wrapping_add(offset + i as u64)
}

pub fn make_cohort(cfg: &ExperimentConfig, sim: &SimulationConfig, train_activities: &[ActivityKind], test_activity: ActivityKind, seed: u64) -> Result<Cohort> {
    let pick = |i: usize| train_activities[i % train_activities.len()];
    let train = (0..cfg.train_subjects)
        .map(|i| simulate_subject(pick(i), subject_seed(seed, 0, i), sim))
        .collect::<Result<Vec<_>>>()?;
    let val = (0..cfg.val_subjects)
        .map(|i| simulate_subject(pick(i + 1), subject_seed(seed, VAL_OFFSET, i), sim))
        .collect::<Result<Vec<_>>>()?;
    let test = test_subjects(cfg, sim, test_activity, seed)?;
    Ok(Cohort { train, val, test })
}

pub fn test_subjects(cfg: &ExperimentConfig, sim: &SimulationConfig, activity: ActivityKind, seed: u64) -> Result<Vec<Subject>> {
    (0..cfg.test_subjects)
        .map(|i| simulate_subject(activity, subject_seed(seed, TEST_OFFSET + 100 * activity as u64, i), sim))
        .collect()
}

/// Trains one network on the cohort's train/validation subjects.
pub fn train_network(cfg: &ExperimentConfig, cohort: &Cohort, features: &FeatureConfig, seed: u64) -> Result<Predictor> {
    let segs = |s: &[Subject]| s.iter().map(|x| x.segment.clone()).collect::<Vec<_>>();
    let tr = build_examples(&segs(&cohort.train), features, seed)?;
    let va = build_examples(&segs(&cohort.val), features, seed.wrapping_add(1))?;
    let spec = NetworkSpec { input_dim: features.input_dim(), output_dim: 2, init_seed: seed, ..cfg.network.clone() };
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let out = train(&tr, &va, &spec, features, &tc)?;
    log::info!(
        "trained network seed {seed}: {} epochs, best validation MSE {:.4}",
        out.history.len(),
        out.history.iter().map(|h| h.val_mse).fold(f64::INFINITY, f64::min)
    );
    Predictor::new(out.checkpoint)
}

/// Grid-searched filter parameters on the cohort's training subjects.
pub fn tune_kf(cfg: &ExperimentConfig, subjects: &[Subject], horizon: f64) -> Result<KfConfig> {
    let sets = subjects
        .iter()
        .map(|s| {
            Ok(KfTrainingSet {
                inputs: s.kf_inputs(cfg.kf_calibration_window)?,
                reference: s.reference.clone(),
                output_times: s.segment.times(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = KfRunOptions { horizon, ..KfRunOptions::default() };
    Ok(kf_tune(&sets, &cfg.kf_grid, &KfConfig::default(), &opts)?.config)
}

/// Scores estimates on a set of subjects and builds a cell.
fn score(
    cfg: &ExperimentConfig,
    estimator: EstimatorKind,
    levels: &[(&str, String)],
    seed: u64,
    per_subject: Vec<(&Subject, Vec<PoseEstimate>)>,
    with_settling: bool,
) -> Result<Cell> {
    let mut all: Vec<f64> = Vec::new();
    let mut times: Vec<Option<f64>> = Vec::new();
    let mut trajectories = Vec::new();
    for (subject, est) in per_subject {
        let mut errs: Vec<TimedError> = position_errors(&est, &subject.reference)?;
        errs.retain(|e| e.t >= subject.reference[0].t + cfg.eval_warmup);
        all.extend(errs.iter().map(|e| e.error));
        if with_settling {
            let events: Vec<f64> = abrupt_turn_events(&subject.reference, cfg.turn_min_angle, cfg.turn_within)
                .into_iter()
                .filter(|&t| t >= subject.reference[0].t + cfg.eval_warmup)
                .collect();
            times.extend(settling_time(&errs, cfg.settling_eps, &events, SETTLING_HOLD));
        }
        trajectories.push(Trajectory { subject: subject.id.clone(), estimates: est });
    }
    let report = summarize(&all)?;
    let settling = with_settling.then(|| SettlingStats {
        eps: cfg.settling_eps,
        events: times.len(),
        settled: times.iter().filter(|t| t.is_some()).count(),
        median: median_settling(&times),
        times,
    });
    Ok(Cell {
        estimator,
        levels: levels.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        seed,
        subjects: trajectories.iter().map(|t| t.subject.clone()).collect(),
        report,
        settling,
        trajectories,
    })
}

fn predict_options(cfg: &ExperimentConfig, seed: u64) -> PredictOptions {
    PredictOptions { stride: cfg.eval_stride, seed, ..PredictOptions::default() }
}

fn nn_on(cfg: &ExperimentConfig, p: &Predictor, subjects: &[Subject], seed: u64) -> Result<Vec<Vec<PoseEstimate>>> {
    subjects.iter().map(|s| pdrnn_estimates(&s.segment, p, &predict_options(cfg, seed))).collect()
}

fn kf_on(cfg: &ExperimentConfig, kf: &KfConfig, subjects: &[Subject], horizon: f64) -> Result<Vec<Vec<PoseEstimate>>> {
    subjects.iter().map(|s| kf_estimates(s, kf, horizon, cfg.kf_calibration_window)).collect()
}

fn classic_on(opts: &ClassicOptions, subjects: &[Subject]) -> Result<Vec<Vec<PoseEstimate>>> {
    subjects.iter().map(|s| classic_estimates(&s.segment, opts)).collect()
}

fn zip<'a>(subjects: &'a [Subject], est: Vec<Vec<PoseEstimate>>) -> Vec<(&'a Subject, Vec<PoseEstimate>)> {
    subjects.iter().zip(est).collect()
}

fn channels_label(c: &[Channel]) -> String {
    c.iter().map(|c| c.name()).collect::<Vec<_>>().join("+")
}

fn fmt_level(x: f64) -> String {
    format!("{x}")
}

fn finish(design: Design, cfg: &ExperimentConfig, seeds: &[u64], cells: Vec<Vec<Cell>>, excluded: Vec<String>) -> ExperimentResult {
    ExperimentResult {
        design,
        config_hash: cfg.hash(seeds),
        seeds: seeds.to_vec(),
        cells: cells.into_iter().flatten().collect(),
        excluded,
        notes: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// designs

/// One network per input set and seed, scored on held-out subjects.
pub fn run_input_variation(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let jobs: Vec<(u64, Vec<Channel>)> = seeds
        .iter()
        .flat_map(|&s| cfg.input_sets.iter().map(move |set| (s, set.clone())))
        .collect();
    let cells = run_jobs(&jobs, workers, |(seed, inputs)| {
        let features = FeatureConfig { inputs: inputs.clone(), ..cfg.features.clone() };
        features.validate()?;
        let cohort = make_cohort(cfg, &cfg.sim, &cfg.train_activities, cfg.test_activity, *seed)?;
        let p = train_network(cfg, &cohort, &features, *seed)?;
        let est = nn_on(cfg, &p, &cohort.test, *seed)?;
        Ok(vec![score(cfg, EstimatorKind::Pdrnn, &[("inputs", channels_label(inputs))], *seed, zip(&cohort.test, est), false)?])
    })?;
    let mut res = finish(Design::Inputs, cfg, seeds, cells, Vec::new());
    let meds: Vec<(String, f64)> = cfg
        .input_sets
        .iter()
        .map(|set| {
            let l = channels_label(set);
            let m = res.median_of(EstimatorKind::Pdrnn, &[("inputs", &l)], |c| c.report.mae).unwrap_or(f64::NAN);
            (l, m)
        })
        .collect();
    if let Some((best, m)) = meds.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        res.notes.push(format!("lowest median MAE: {best} ({m:.4} m)"));
    }
    Ok(res)
}

/// Full factorial over horizons × sequence lengths.
pub fn run_forecast_sweep(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut excluded = Vec::new();
    let horizons: Vec<f64> = cfg
        .horizons
        .iter()
        .copied()
        .filter(|&h| {
            let keep = h <= cfg.max_horizon + 1e-9;
            if !keep {
                excluded.push(format!("horizon={h} exceeds max_horizon={}", cfg.max_horizon));
            }
            keep
        })
        .collect();
    let mut jobs = Vec::new();
    for &s in seeds {
        for &h in &horizons {
            for &len in &cfg.sequence_lengths {
                jobs.push((s, h, len));
            }
        }
    }
    let cells = run_jobs(&jobs, workers, |&(seed, h, len)| {
        let window = (len * cfg.sim.sync.fs).round() as usize;
        let features = FeatureConfig { window, horizon: h, ..cfg.features.clone() };
        features.validate()?;
        let cohort = make_cohort(cfg, &cfg.sim, &cfg.train_activities, cfg.test_activity, seed)?;
        let p = train_network(cfg, &cohort, &features, seed)?;
        let est = nn_on(cfg, &p, &cohort.test, seed)?;
        let levels = [("horizon", fmt_level(h)), ("seq_len", fmt_level(len))];
        Ok(vec![score(cfg, EstimatorKind::Pdrnn, &levels, seed, zip(&cohort.test, est), false)?])
    })?;
    let mut res = finish(Design::Forecast, cfg, seeds, cells, excluded);
    // soft trend checks
    for &len in &cfg.sequence_lengths {
        let l = fmt_level(len);
        let meds: Vec<f64> = horizons
            .iter()
            .map(|&h| {
                let hl = fmt_level(h);
                res.median_of(EstimatorKind::Pdrnn, &[("horizon", &hl), ("seq_len", &l)], |c| c.report.mae).unwrap_or(f64::NAN)
            })
            .collect();
        let ok = meds.windows(2).all(|w| w[1] >= w[0]);
        res.notes.push(format!(
            "seq_len={l}: median MAE by horizon {meds:?} is {}non-decreasing",
            if ok { "" } else { "NOT " }
        ));
    }
    if horizons.iter().any(|&h| (h - 1.0).abs() < 1e-9) {
        let best = cfg
            .sequence_lengths
            .iter()
            .map(|&len| {
                let l = fmt_level(len);
                (len, res.median_of(EstimatorKind::Pdrnn, &[("horizon", "1"), ("seq_len", &l)], |c| c.report.mae).unwrap_or(f64::NAN))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((len, m)) = best {
            res.notes.push(format!("horizon=1: best sequence length {len} s (median MAE {m:.4} m)"));
        }
    }
    Ok(res)
}

/// Radio positions restricted to a recalibration schedule: the first fix,
/// then the first fix at or after each multiple of `interval`. `None` keeps
/// only the first fix.
pub fn thin_radio(radio: &[SensorSample], interval: Option<f64>) -> Vec<SensorSample> {
    let Some(first) = radio.iter().find(|s| s.modality == Modality::RadioPos) else {
        return Vec::new();
    };
    let t0 = first.t_meas;
    let mut out = vec![first.clone()];
    if let Some(iv) = interval {
        let mut next = t0 + iv;
        for s in radio.iter().filter(|s| s.modality == Modality::RadioPos) {
            if s.t_meas >= next - 1e-9 {
                out.push(s.clone());
                while next <= s.t_meas + 1e-9 {
                    next += iv;
                }
            }
        }
    }
    out
}

fn thinned_subject(cfg: &ExperimentConfig, s: &Subject, interval: Option<f64>) -> Result<Subject> {
    let radio = thin_radio(&s.radio, interval);
    let mut sync = cfg.sim.sync.clone();
    sync.t_start.get_or_insert(s.reference[0].t);
    sync.t_end.get_or_insert(s.reference[s.reference.len() - 1].t);
    let mut segment = synchronize(&[&radio, &s.imu], &sync)?;
    segment.id = s.id.clone();
    segment.attach_reference(&s.reference)?;
    Ok(Subject { radio, segment, ..s.clone() })
}

fn interval_label(i: Option<f64>) -> String {
    i.map(fmt_level).unwrap_or_else(|| "inf".into())
}

/// Recalibration intervals × estimators on speed-biased data. The classical
/// estimator overwrites its position with scheduled fixes; the filter and the
/// network only receive radio positions on the same schedule.
pub fn run_recal_sweep(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut sim = cfg.sim.clone();
    sim.noise.speed_bias = cfg.recal_speed_bias;
    let test_sim = SimulationConfig { duration: cfg.recal_duration, ..sim.clone() };
    let cells = run_jobs(seeds, workers, |&seed| {
        let test = test_subjects(cfg, &test_sim, cfg.recal_activity, seed)?;
        let wants = |e| cfg.recal_estimators.contains(&e);
        let (nn, kf) = if wants(EstimatorKind::Pdrnn) || wants(EstimatorKind::Kf) {
            let cohort = make_cohort(cfg, &sim, &cfg.train_activities, cfg.recal_activity, seed)?;
            let nn = if wants(EstimatorKind::Pdrnn) { Some(train_network(cfg, &cohort, &cfg.features, seed)?) } else { None };
            let kf = if wants(EstimatorKind::Kf) { Some(tune_kf(cfg, &cohort.train, 0.0)?) } else { None };
            (nn, kf)
        } else {
            (None, None)
        };
        let mut cells = Vec::new();
        for &iv in &cfg.recal_intervals {
            let level = [("interval", interval_label(iv))];
            if wants(EstimatorKind::Classic) {
                let opts = ClassicOptions { recal_interval: iv, ..cfg.classic.clone() };
                cells.push(score(cfg, EstimatorKind::Classic, &level, seed, zip(&test, classic_on(&opts, &test)?), false)?);
            }
            if nn.is_some() || kf.is_some() {
                let thinned = test.iter().map(|s| thinned_subject(cfg, s, iv)).collect::<Result<Vec<_>>>()?;
                if let Some(kf) = &kf {
                    cells.push(score(cfg, EstimatorKind::Kf, &level, seed, zip(&thinned, kf_on(cfg, kf, &thinned, 0.0)?), false)?);
                }
                if let Some(p) = &nn {
                    let est = nn_on(cfg, p, &thinned, seed)?;
                    cells.push(score(cfg, EstimatorKind::Pdrnn, &level, seed, zip(&thinned, est), false)?);
                }
            }
        }
        Ok(cells)
    })?;
    let mut res = finish(Design::Recal, cfg, seeds, cells, Vec::new());
    if cfg.recal_estimators.contains(&EstimatorKind::Classic) {
        let mut ordered: Vec<(Option<f64>, f64)> = cfg
            .recal_intervals
            .iter()
            .map(|&iv| {
                let l = interval_label(iv);
                (iv, res.median_of(EstimatorKind::Classic, &[("interval", &l)], |c| c.report.mae).unwrap_or(f64::NAN))
            })
            .collect();
        ordered.sort_by(|a, b| a.0.unwrap_or(f64::INFINITY).total_cmp(&b.0.unwrap_or(f64::INFINITY)));
        let ok = ordered.windows(2).all(|w| w[0].1 <= w[1].1);
        res.notes.push(format!(
            "classic: median MAE is {}non-increasing as the interval shrinks: {:?}",
            if ok { "" } else { "NOT " },
            ordered.iter().map(|(i, m)| format!("{}={m:.3}", interval_label(*i))).collect::<Vec<_>>()
        ));
    }
    Ok(res)
}

/// Network trained on the training activities versus the tuned filter and
/// pure dead reckoning on held-out subjects of each activity, with settling
/// times after abrupt turns.
pub fn run_activity_comparison(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let cells = run_jobs(seeds, workers, |&seed| {
        let cohort = make_cohort(cfg, &cfg.sim, &cfg.train_activities, cfg.test_activity, seed)?;
        let nn = train_network(cfg, &cohort, &cfg.features, seed)?;
        let kf = tune_kf(cfg, &cohort.train, 0.0)?;
        let classic = ClassicOptions { recal_interval: None, ..cfg.classic.clone() };
        let mut cells = Vec::new();
        for &act in &cfg.activities {
            let test = if act == cfg.test_activity { cohort.test.clone() } else { test_subjects(cfg, &cfg.sim, act, seed)? };
            let level = [("activity", act.name().to_string())];
            cells.push(score(cfg, EstimatorKind::Pdrnn, &level, seed, zip(&test, nn_on(cfg, &nn, &test, seed)?), true)?);
            cells.push(score(cfg, EstimatorKind::Kf, &level, seed, zip(&test, kf_on(cfg, &kf, &test, 0.0)?), true)?);
            cells.push(score(cfg, EstimatorKind::Classic, &level, seed, zip(&test, classic_on(&classic, &test)?), true)?);
        }
        if cfg.walking_only_arm {
            let walk = make_cohort(cfg, &cfg.sim, &[ActivityKind::Walking], cfg.test_activity, seed)?;
            let p = train_network(cfg, &walk, &cfg.features, seed)?;
            let level = [("activity", cfg.test_activity.name().to_string()), ("train", "walking".to_string())];
            cells.push(score(cfg, EstimatorKind::Pdrnn, &level, seed, zip(&walk.test, nn_on(cfg, &p, &walk.test, seed)?), true)?);
        }
        Ok(cells)
    })?;
    let mut res = finish(Design::Activity, cfg, seeds, cells, Vec::new());
    let act = cfg.test_activity.name();
    let cep = |e| res.median_of(e, &[("activity", act)], |c| c.report.cep95).unwrap_or(f64::NAN);
    let (n, k, c) = (cep(EstimatorKind::Pdrnn), cep(EstimatorKind::Kf), cep(EstimatorKind::Classic));
    res.notes.push(format!("{act}: median CEP95 pdrnn {n:.4}, kf {k:.4}, classic {c:.4}"));
    Ok(res)
}

/// Absolute versus delta output on the same held-out subjects.
pub fn run_delta_parity(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let jobs: Vec<(u64, OutputMode)> = seeds
        .iter()
        .flat_map(|&s| [(s, OutputMode::Absolute), (s, OutputMode::Delta)])
        .collect();
    let cells = run_jobs(&jobs, workers, |&(seed, mode)| {
        let features = FeatureConfig { output_mode: mode, ..cfg.features.clone() };
        features.validate()?;
        let cohort = make_cohort(cfg, &cfg.sim, &cfg.train_activities, cfg.test_activity, seed)?;
        let p = train_network(cfg, &cohort, &features, seed)?;
        let label = match mode {
            OutputMode::Absolute => "absolute",
            OutputMode::Delta => "delta",
        };
        let est = nn_on(cfg, &p, &cohort.test, seed)?;
        Ok(vec![score(cfg, EstimatorKind::Pdrnn, &[("output", label.to_string())], seed, zip(&cohort.test, est), false)?])
    })?;
    Ok(finish(Design::Delta, cfg, seeds, cells, Vec::new()))
}

pub fn run_design(design: Design, cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<ExperimentResult> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    match design {
        Design::Inputs => run_input_variation(cfg, seeds, workers),
        Design::Forecast => run_forecast_sweep(cfg, seeds, workers),
        Design::Recal => run_recal_sweep(cfg, seeds, workers),
        Design::Activity => run_activity_comparison(cfg, seeds, workers),
        Design::Delta => run_delta_parity(cfg, seeds, workers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny settings so a whole design runs in a couple of seconds.
    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.duration = 20.0;
        cfg.recal_duration = 20.0;
        cfg.train_subjects = 2;
        cfg.test_subjects = 1;
        cfg.features.window = 16;
        cfg.network = NetworkSpec { ff_in: vec![8], lstm_cells: 8, ..cfg.network };
        cfg.train.max_epochs = 2;
        cfg.kf_grid = KfGrid { q0: vec![0.1, 1.0], r_pos: vec![0.1], r_vel: vec![0.1] };
        cfg
    }

    #[test]
    fn single_input_set_single_seed_gives_one_cell() {
        let cfg = ExperimentConfig { input_sets: vec![vec![Channel::PRadio, Channel::Speed]], ..tiny() };
        let res = run_input_variation(&cfg, &[3], 1).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.cells[0].levels["inputs"], "p_radio+v");
        assert!(res.cells[0].report.mae.is_finite());
    }

    #[test]
    fn zero_velocity_channel_still_completes() {
        let mut cfg = ExperimentConfig { input_sets: vec![vec![Channel::PRadio, Channel::Speed]], ..tiny() };
        cfg.sim.noise.speed_bias = -1.0;
        cfg.sim.noise.speed_noise_std = 0.0;
        let res = run_input_variation(&cfg, &[1], 1).unwrap();
        assert!(res.cells[0].report.mae.is_finite());
    }

    #[test]
    fn long_horizons_are_excluded() {
        let cfg = ExperimentConfig { horizons: vec![0.0, 3.0], sequence_lengths: vec![0.64], ..tiny() };
        let res = run_forecast_sweep(&cfg, &[2], 1).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.excluded.len(), 1);
        assert!(res.excluded[0].contains("horizon=3"));
    }

    #[test]
    fn horizon_zero_cell_matches_direct_prediction() {
        let cfg = ExperimentConfig { horizons: vec![0.0], sequence_lengths: vec![0.64], ..tiny() };
        let res = run_forecast_sweep(&cfg, &[4], 1).unwrap();
        let features = FeatureConfig { window: 16, horizon: 0.0, ..cfg.features.clone() };
        let cohort = make_cohort(&cfg, &cfg.sim, &cfg.train_activities, cfg.test_activity, 4).unwrap();
        let p = train_network(&cfg, &cohort, &features, 4).unwrap();
        let direct = crate::neuralnet::predict_trajectory(&cohort.test[0].segment, &p, &predict_options(&cfg, 4)).unwrap();
        assert_eq!(res.cells[0].trajectories[0].estimates, direct);
    }

    #[test]
    fn infinite_interval_is_pure_dead_reckoning() {
        let cfg = ExperimentConfig {
            recal_intervals: vec![None],
            recal_estimators: vec![EstimatorKind::Classic],
            ..tiny()
        };
        let res = run_recal_sweep(&cfg, &[5], 1).unwrap();
        let mut sim = cfg.sim.clone();
        sim.noise.speed_bias = cfg.recal_speed_bias;
        sim.duration = cfg.recal_duration;
        let test = test_subjects(&cfg, &sim, cfg.recal_activity, 5).unwrap();
        let pure = classic_estimates(&test[0].segment, &ClassicOptions::default()).unwrap();
        assert_eq!(res.cells[0].trajectories[0].estimates, pure);
    }

    #[test]
    fn thinning_keeps_schedule() {
        let radio: Vec<SensorSample> = (0..50)
            .map(|k| SensorSample {
                t_meas: 0.1 * k as f64,
                t_avail: 0.1 * k as f64 + 0.1,
                modality: Modality::RadioPos,
                values: vec![k as f64, 0.0],
                source: "radio".into(),
            })
            .collect();
        let t: Vec<f64> = thin_radio(&radio, Some(1.0)).iter().map(|s| s.t_meas).collect();
        assert_eq!(t.len(), 5);
        assert!(t.iter().zip([0.0, 1.0, 2.0, 3.0, 4.0]).all(|(a, b)| (a - b).abs() < 1e-9));
        assert_eq!(thin_radio(&radio, None).len(), 1);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = ExperimentConfig { recal_intervals: vec![Some(5.0), None], recal_estimators: vec![EstimatorKind::Classic, EstimatorKind::Kf], ..tiny() };
        let a = run_recal_sweep(&cfg, &[1, 2, 3], 1).unwrap();
        let b = run_recal_sweep(&cfg, &[1, 2, 3], 3).unwrap();
        assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 3 * 2 * 2);
    }

    #[test]
    fn design_names_roundtrip() {
        for d in Design::ALL {
            assert_eq!(d.name().parse::<Design>().unwrap(), d);
        }
        assert!("bogus".parse::<Design>().is_err());
    }
}
