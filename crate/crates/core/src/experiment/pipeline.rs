//! The four-phase workflow: preprocess, train the scorer, train the agent,
//! detect and evaluate.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;

use super::config::{DataSource, ExperimentConfig, NormalizeOn};
use super::plot::{threshold_trace_svg, TraceRow};
use super::write_atomic;
use crate::agent::{self, Policy, TrainingLog};
use crate::baselines::{optimal_static_threshold, SpotState};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, subset_bounds, subset_robustness, wilcoxon_two_tailed};
use crate::eval::{DetectionResult, RobustnessReport, WilcoxonResult};
use crate::scorer::{train_ae, AutoEncoder, ScoredWindow, TrainReport};
use crate::synth;
use crate::timeseries::{load_csv, make_windows, MinMaxRecord, TimeSeries, WindowSequence};
use crate::Rng;

/// Independent random streams for the phases of one run.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Autoencoder = 1,
    Agent = 2,
}

fn phase_rng(seed: u64, stream: Stream) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Window index ranges of the three splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub ae_train: Range<usize>,
    pub adt_train: Range<usize>,
    pub test: Range<usize>,
}

/// Output of phase 1.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Normalized series.
    pub series: TimeSeries,
    pub normalization: MinMaxRecord,
    pub windows: WindowSequence,
    pub splits: SplitRanges,
}

pub fn load_series(cfg: &ExperimentConfig) -> Result<TimeSeries> {
    match &cfg.data {
        DataSource::Synth(s) => synth::generate(s),
        DataSource::Csv(src) => load_csv(&src.path, &src.schema),
    }
}

fn split_ranges(n: usize, cfg: &ExperimentConfig) -> Result<SplitRanges> {
    let ae_end = (cfg.splits.ae_train * n as f64).floor() as usize;
    let adt_end = ae_end + (cfg.splits.adt_train * n as f64).floor() as usize;
    if ae_end == 0 || adt_end - ae_end <= cfg.k || adt_end >= n {
        return Err(Error::DataQuality(format!(
            "{n} windows are too few for splits ae_train={} adt_train={} with k={}",
            cfg.splits.ae_train, cfg.splits.adt_train, cfg.k
        )));
    }
    Ok(SplitRanges {
        ae_train: 0..ae_end,
        adt_train: ae_end..adt_end,
        test: adt_end..n,
    })
}

/// Phase 1: normalize, window and split.
pub fn prepare(cfg: &ExperimentConfig, raw: &TimeSeries) -> Result<Prepared> {
    if raw.point_labels().is_none() {
        return Err(Error::DataQuality(
            "series has no labels; the agent and the evaluation both need them".into(),
        ));
    }
    if raw.len() < cfg.tau {
        return Err(Error::DataQuality(format!(
            "series of {} rows is shorter than tau={}",
            raw.len(),
            cfg.tau
        )));
    }
    let n_windows = raw.len() - cfg.tau + 1;
    let splits = split_ranges(n_windows, cfg)?;
    let normalization = match cfg.normalize_on {
        // rows touched by the autoencoder windows
        NormalizeOn::Train => MinMaxRecord::fit_rows(raw, 0..splits.ae_train.end + cfg.tau - 1)?,
        NormalizeOn::Full => MinMaxRecord::fit(raw)?,
    };
    let series = normalization.apply(raw)?;
    let windows = make_windows(&series, cfg.tau)?;
    let adt_labels = &windows.labels()[splits.adt_train.clone()];
    if !adt_labels.contains(&0) || !adt_labels.contains(&1) {
        return Err(Error::DataQuality(format!(
            "agent training windows {:?} hold a single class; move or widen splits.adt_train",
            splits.adt_train
        )));
    }
    Ok(Prepared {
        series,
        normalization,
        windows,
        splits,
    })
}

/// Phase 2: trains the autoencoder on the normal windows of the leading
/// split and fits the score normalizer on the agent's training segment.
pub fn train_scorer(cfg: &ExperimentConfig, data: &Prepared) -> Result<(AutoEncoder, TrainReport)> {
    let region = data.windows.slice(data.splits.ae_train.clone());
    let normal = region.filter(|w| w.label == 0);
    log::info!(
        "training autoencoder on {} normal windows ({} anomalous dropped)",
        normal.len(),
        region.len() - normal.len()
    );
    let (mut ae, report) = train_ae(
        &normal,
        &cfg.ae,
        &mut phase_rng(cfg.seed, Stream::Autoencoder),
    )?;
    ae.fit_normalizer(&data.windows.slice(data.splits.adt_train.clone()))?;
    Ok((ae, report))
}

/// Scores of the agent-training and test splits, with window indices
/// counted from the start of the series.
#[derive(Debug, Clone)]
pub struct ScoredSplits {
    pub adt_train: Vec<ScoredWindow>,
    pub test: Vec<ScoredWindow>,
}

pub fn score_splits(ae: &AutoEncoder, data: &Prepared) -> Result<ScoredSplits> {
    let scored = ae.score_all(&data.windows)?;
    Ok(ScoredSplits {
        adt_train: scored[data.splits.adt_train.clone()].to_vec(),
        test: scored[data.splits.test.clone()].to_vec(),
    })
}

/// Phase 3.
pub fn train_agent(
    cfg: &ExperimentConfig,
    segment: &[ScoredWindow],
) -> Result<(Policy, TrainingLog, Duration)> {
    let started = Instant::now();
    let (policy, log) = agent::train(
        segment,
        &cfg.agent_config(),
        cfg.env_config()?,
        &mut phase_rng(cfg.seed, Stream::Agent),
    )?;
    Ok((policy, log, started.elapsed()))
}

/// Per-window output of one thresholding method on the test split.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: &'static str,
    pub thresholds: Vec<f64>,
    pub result: DetectionResult,
    pub wall: Duration,
}

impl MethodRun {
    pub fn trace(&self, scored: &[ScoredWindow]) -> Vec<TraceRow> {
        scored
            .iter()
            .zip(&self.thresholds)
            .zip(&self.result.predictions)
            .map(|((w, &threshold), &prediction)| TraceRow {
                window_index: w.window_index,
                score: w.score,
                truth: w.truth,
                threshold,
                prediction,
            })
            .collect()
    }
}

fn truths(scored: &[ScoredWindow]) -> Vec<u8> {
    scored.iter().map(|w| w.truth).collect()
}

pub fn detect_adt(policy: &Policy, test: &[ScoredWindow], env_cfg: EnvConfig) -> Result<MethodRun> {
    let started = Instant::now();
    let out = agent::infer(policy, test, env_cfg)?;
    Ok(MethodRun {
        method: "adt",
        result: evaluate_run(&out.predictions, &truths(test))?,
        thresholds: out.thresholds,
        wall: started.elapsed(),
    })
}

/// Best fixed threshold chosen in hindsight on the test scores.
pub fn detect_static(test: &[ScoredWindow]) -> Result<MethodRun> {
    let started = Instant::now();
    let scores: Vec<f64> = test.iter().map(|w| w.score).collect();
    let best = optimal_static_threshold(&scores, &truths(test))?;
    let predictions: Vec<u8> = scores
        .iter()
        .map(|&s| u8::from(s > best.threshold))
        .collect();
    Ok(MethodRun {
        method: "static",
        result: evaluate_run(&predictions, &truths(test))?,
        thresholds: vec![best.threshold; test.len()],
        wall: started.elapsed(),
    })
}

/// DSPOT calibrated on `calibration` scores and then streamed over the test.
pub fn detect_dspot(
    calibration: &[ScoredWindow],
    test: &[ScoredWindow],
    cfg: crate::baselines::DspotConfig,
) -> Result<MethodRun> {
    let started = Instant::now();
    let init: Vec<f64> = calibration.iter().map(|w| w.score).collect();
    let mut spot = SpotState::init(&init, cfg)?;
    let scores: Vec<f64> = test.iter().map(|w| w.score).collect();
    let steps = spot.run(&scores)?;
    let predictions: Vec<u8> = steps.iter().map(|s| s.alarm).collect();
    Ok(MethodRun {
        method: "dspot",
        result: evaluate_run(&predictions, &truths(test))?,
        thresholds: steps.iter().map(|s| s.threshold).collect(),
        wall: started.elapsed(),
    })
}

/// Phase 4: runs every enabled method on the identical test scores.
pub fn detect_all(
    cfg: &ExperimentConfig,
    policy: &Policy,
    scored: &ScoredSplits,
) -> Result<Vec<MethodRun>> {
    let mut runs = vec![detect_adt(policy, &scored.test, cfg.env_config()?)?];
    if cfg.baselines.static_threshold {
        runs.push(detect_static(&scored.test)?);
    }
    if let Some(dspot) = cfg.baselines.dspot {
        runs.push(detect_dspot(&scored.adt_train, &scored.test, dspot)?);
    }
    Ok(runs)
}

/// Subset robustness of each method and, for the baselines, the Wilcoxon
/// test of ADT's subset F1 against theirs.
#[derive(Debug, Clone)]
pub struct Robustness {
    pub method: &'static str,
    pub report: RobustnessReport,
    /// `None` for ADT itself and when every subset F1 is tied.
    pub wilcoxon: Option<WilcoxonResult>,
}

pub fn robustness(runs: &[MethodRun], subsets: usize) -> Result<Vec<Robustness>> {
    let reports = runs
        .iter()
        .map(|r| subset_robustness(&r.result.predictions, &r.result.truths, subsets))
        .collect::<Result<Vec<_>>>()?;
    let adt = runs.iter().position(|r| r.method == "adt");
    runs.iter()
        .zip(&reports)
        .map(|(run, report)| {
            let wilcoxon = match adt {
                Some(a) if runs[a].method != run.method => {
                    match wilcoxon_two_tailed(&reports[a].f1s(), &report.f1s()) {
                        Ok(w) => Some(w),
                        Err(Error::Degenerate(_)) => None,
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            Ok(Robustness {
                method: run.method,
                report: report.clone(),
                wilcoxon,
            })
        })
        .collect()
}

/// Everything a full run produced, kept in memory for callers that want
/// more than the files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prepared: Prepared,
    pub ae_report: TrainReport,
    pub scored: ScoredSplits,
    pub training_log: TrainingLog,
    pub train_time: Duration,
    pub runs: Vec<MethodRun>,
    pub robustness: Vec<Robustness>,
}

impl RunOutput {
    pub fn run(&self, method: &str) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

fn timed<T>(
    timings: &mut Vec<(&'static str, Duration)>,
    phase: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let started = Instant::now();
    let out = f().map_err(|e| e.in_phase(phase))?;
    timings.push((phase, started.elapsed()));
    log::info!("phase {phase} done in {:.2?}", started.elapsed());
    Ok(out)
}

/// Runs all four phases and writes the result bundle to `cfg.output_dir`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut timings = Vec::new();
    let prepared = timed(&mut timings, "preprocess", || {
        prepare(cfg, &load_series(cfg)?)
    })?;
    let (ae, ae_report) = timed(&mut timings, "train-ae", || train_scorer(cfg, &prepared))?;
    let scored = timed(&mut timings, "score", || score_splits(&ae, &prepared))?;
    let (policy, training_log, train_time) = timed(&mut timings, "train-adt", || {
        train_agent(cfg, &scored.adt_train)
    })?;
    let runs = timed(&mut timings, "detect", || detect_all(cfg, &policy, &scored))?;
    let robustness = timed(&mut timings, "evaluate", || robustness(&runs, cfg.subsets))?;

    let out = RunOutput {
        prepared,
        ae_report,
        scored,
        training_log,
        train_time,
        runs,
        robustness,
    };
    let dir = &cfg.output_dir;
    (|| {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("config.json"), &serde_json::to_vec_pretty(cfg)?)?;
        write_normalizer(dir, &out.prepared.normalization)?;
        ae.save(&dir.join("ae.bin"))?;
        policy.save(&dir.join("policy.bin"))?;
        write_training_log(dir, &out.training_log)?;
        write_results(dir, cfg, &out.runs)?;
        write_robustness(dir, &out.robustness, out.scored.test.len(), cfg.subsets)?;
        for run in &out.runs {
            write_trace(dir, run, &out.scored.test)?;
        }
        if let Some(adt) = out.run("adt") {
            let svg = threshold_trace_svg(&adt.trace(&out.scored.test), "ADT threshold trace")?;
            write_atomic(&dir.join("threshold_trace.svg"), svg.as_bytes())?;
        }
        if cfg.report_wall_time {
            let mut text = String::from("phase,ms\n");
            for (phase, d) in &timings {
                writeln!(text, "{phase},{}", d.as_millis()).unwrap();
            }
            write_atomic(&dir.join("timings.csv"), text.as_bytes())?;
        }
        Ok(())
    })()
    .map_err(|e: Error| e.in_phase("write"))?;
    Ok(out)
}

pub fn write_normalizer(dir: &Path, record: &MinMaxRecord) -> Result<()> {
    write_atomic(
        &dir.join("normalizer.json"),
        &serde_json::to_vec_pretty(record)?,
    )
}

pub fn write_training_log(dir: &Path, log: &TrainingLog) -> Result<()> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    write_atomic(&dir.join("training_log.csv"), &buf)
}

/// `results.csv`: one row per method.
pub fn write_results(dir: &Path, cfg: &ExperimentConfig, runs: &[MethodRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "dataset", "split", "P", "R", "F1", "wall_ms"])?;
    for run in runs {
        let m = run.result.metrics;
        let wall = if cfg.report_wall_time {
            run.wall.as_millis().to_string()
        } else {
            String::new()
        };
        w.write_record([
            run.method.to_string(),
            cfg.name.clone(),
            "test".into(),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            wall,
        ])?;
    }
    write_atomic(
        &dir.join("results.csv"),
        &w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    )
}

/// `robustness.csv` (mean ± std per method with the Wilcoxon columns) and
/// `subsets.csv` (every subset's metrics).
pub fn write_robustness(dir: &Path, rows: &[Robustness], len: usize, subsets: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "P_mean",
        "P_std",
        "R_mean",
        "R_std",
        "F1_mean",
        "F1_std",
        "wilcoxon_W",
        "wilcoxon_p",
    ])?;
    for r in rows {
        let s = r.report.summary;
        let (stat, p) = r.wilcoxon.map_or((String::new(), String::new()), |w| {
            (format!("{}", w.statistic), format!("{:.6}", w.p_value))
        });
        w.write_record([
            r.method.to_string(),
            format!("{:.6}", s.mean.precision),
            format!("{:.6}", s.std.precision),
            format!("{:.6}", s.mean.recall),
            format!("{:.6}", s.std.recall),
            format!("{:.6}", s.mean.f1),
            format!("{:.6}", s.std.f1),
            stat,
            p,
        ])?;
    }
    write_atomic(
        &dir.join("robustness.csv"),
        &w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    )?;

    let bounds = subset_bounds(len, subsets)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "subset", "start", "end", "P", "R", "F1"])?;
    for r in rows {
        for (i, (m, b)) in r.report.subsets.iter().zip(&bounds).enumerate() {
            w.write_record([
                r.method.to_string(),
                i.to_string(),
                b.start.to_string(),
                b.end.to_string(),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
            ])?;
        }
    }
    write_atomic(
        &dir.join("subsets.csv"),
        &w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    )
}

pub fn write_trace(dir: &Path, run: &MethodRun, scored: &[ScoredWindow]) -> Result<()> {
    let mut buf = Vec::new();
    super::plot::write_trace(&run.trace(scored), &mut buf)?;
    write_atomic(&dir.join(format!("trace_{}.csv", run.method)), &buf)
}
