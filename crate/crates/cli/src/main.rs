//! `adt`: runs agent-based dynamic thresholding experiments.
//!
//! Log verbosity comes from `ADT_LOG` (for example `ADT_LOG=debug`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adt_core::agent::Policy;
use adt_core::experiment::pipeline::{
    self, detect_adt, load_series, prepare, score_splits, train_agent, train_scorer,
};
use adt_core::experiment::{
    read_trace, run_pipeline, run_sweep, threshold_trace_svg, write_atomic, write_sweep,
    DataSource, ExperimentConfig, SweepParam,
};
use adt_core::scorer::AutoEncoder;
use adt_core::timeseries::write_csv;
use adt_core::Error;
use anyhow::anyhow;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adt",
    version,
    about = "Agent-based dynamic thresholding for time-series anomaly detection"
)]
struct Cli {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Experiment seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Set any config value, e.g. `--override agent.episodes=500`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic series as `data.csv`.
    Synth,
    /// Phases 1-2: preprocess and train the autoencoder scorer.
    TrainAe,
    /// Phase 3: train the agent, reusing `ae.bin` from the output directory.
    TrainAdt,
    /// Phase 4: detect on the test split with the saved scorer and policy.
    Detect,
    /// All phases plus the baselines, robustness table and plots.
    Benchmark,
    /// One run per value of a parameter.
    Sweep {
        /// `l`, `k` or `alpha_beta` (values are α, with β = 1 − α).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Render a trace CSV as an SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// Chart title.
        #[arg(long, default_value = "threshold trace")]
        title: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADT_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        // quoted so the path is never parsed as a JSON number or literal
        let out = serde_json::to_string(&out.to_string_lossy())?;
        overrides.push(format!("output_dir={out}"));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
        .map_err(|e| anyhow!(e.in_phase("config")))
}

fn phase<T>(name: &'static str, r: adt_core::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| anyhow!(e.in_phase(name)))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Plot { trace, title } = &cli.command {
        return plot(trace, cli.out.as_deref(), title);
    }
    let cfg = load_config(&cli)?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| anyhow!("phase write: creating {}: {e}", dir.display()))?;
    let write = |r: adt_core::Result<()>| phase("write", r);

    match &cli.command {
        Command::Synth => {
            let DataSource::Synth(_) = &cfg.data else {
                return Err(anyhow!(Error::Config(
                    "synth needs a synthetic data source".into()
                )
                .in_phase("synth")));
            };
            let series = phase("synth", load_series(&cfg))?;
            let mut buf = Vec::new();
            write(write_csv(&series, &mut buf))?;
            write(write_atomic(&dir.join("data.csv"), &buf))?;
            log::info!(
                "wrote {} rows to {}",
                series.len(),
                dir.join("data.csv").display()
            );
        }
        Command::TrainAe => {
            let prepared = phase(
                "preprocess",
                load_series(&cfg).and_then(|s| prepare(&cfg, &s)),
            )?;
            let (ae, report) = phase("train-ae", train_scorer(&cfg, &prepared))?;
            write(ae.save(&dir.join("ae.bin")))?;
            write(pipeline::write_normalizer(&dir, &prepared.normalization))?;
            let mut losses = String::from("epoch,loss\n");
            for (i, l) in report.epoch_losses.iter().enumerate() {
                writeln!(losses, "{},{l}", i + 1).unwrap();
            }
            write(write_atomic(&dir.join("ae_loss.csv"), losses.as_bytes()))?;
            log::info!(
                "autoencoder mean error {:.5} -> {:.5}",
                report.initial_error,
                report.final_error
            );
        }
        Command::TrainAdt => {
            let prepared = phase(
                "preprocess",
                load_series(&cfg).and_then(|s| prepare(&cfg, &s)),
            )?;
            let ae = phase("train-adt", AutoEncoder::load(&dir.join("ae.bin")))?;
            let scored = phase("score", score_splits(&ae, &prepared))?;
            let (policy, log, took) = phase("train-adt", train_agent(&cfg, &scored.adt_train))?;
            write(policy.save(&dir.join("policy.bin")))?;
            write(pipeline::write_training_log(&dir, &log))?;
            log::info!(
                "trained agent for {} episodes in {took:.2?}",
                log.episodes.len()
            );
        }
        Command::Detect => {
            let prepared = phase(
                "preprocess",
                load_series(&cfg).and_then(|s| prepare(&cfg, &s)),
            )?;
            let ae = phase("detect", AutoEncoder::load(&dir.join("ae.bin")))?;
            let policy = phase("detect", Policy::load(&dir.join("policy.bin")))?;
            let scored = phase("score", score_splits(&ae, &prepared))?;
            let env_cfg = phase("detect", cfg.env_config())?;
            let run = phase("detect", detect_adt(&policy, &scored.test, env_cfg))?;
            write(pipeline::write_results(
                &dir,
                &cfg,
                std::slice::from_ref(&run),
            ))?;
            write(pipeline::write_trace(&dir, &run, &scored.test))?;
            let svg = phase(
                "plot",
                threshold_trace_svg(&run.trace(&scored.test), "ADT threshold trace"),
            )?;
            write(write_atomic(
                &dir.join("threshold_trace.svg"),
                svg.as_bytes(),
            ))?;
            print_metrics("adt", &run.result.metrics);
        }
        Command::Benchmark => {
            let out = run_pipeline(&cfg).map_err(|e| anyhow!(e))?;
            for run in &out.runs {
                print_metrics(run.method, &run.result.metrics);
            }
            for r in &out.robustness {
                let s = r.report.summary;
                let p = r
                    .wilcoxon
                    .map_or(String::from("-"), |w| format!("{:.4}", w.p_value));
                println!(
                    "{:<7} subset F1 {:.4} ± {:.4}  wilcoxon p vs adt {p}",
                    r.method, s.mean.f1, s.std.f1
                );
            }
        }
        Command::Sweep { param, values } => {
            let param: SweepParam = phase("config", param.parse())?;
            let rows = run_sweep(&cfg, param, values).map_err(|e| anyhow!(e))?;
            write(write_sweep(&cfg, param, &rows))?;
            for r in &rows {
                println!(
                    "{param}={:<6} F1 {:.4}  train {} ms",
                    r.value, r.metrics.f1, r.train_ms
                );
            }
        }
        Command::Plot { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn print_metrics(method: &str, m: &adt_core::eval::Metrics) {
    println!(
        "{method:<7} P {:.4}  R {:.4}  F1 {:.4}",
        m.precision, m.recall, m.f1
    );
}

fn plot(trace: &Path, out: Option<&Path>, title: &str) -> anyhow::Result<()> {
    let file = std::fs::File::open(trace)
        .map_err(|e| anyhow!("phase plot: opening {}: {e}", trace.display()))?;
    let rows = phase("plot", read_trace(file))?;
    let svg = phase("plot", threshold_trace_svg(&rows, title))?;
    let name = trace.with_extension("svg");
    let target = match out {
        Some(dir) => dir.join(name.file_name().unwrap_or_default()),
        None => name,
    };
    phase("write", write_atomic(&target, svg.as_bytes()))?;
    log::info!("wrote {}", target.display());
    Ok(())
}
