use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ecgsim::channel::{apply_channel, ChannelSpec, CHANNEL_PRESETS};
use ecgsim::container::{atomic_write, read_record, write_record, RecordContainer};
use ecgsim::dsp::artifact::FlaggedWindow;
use ecgsim::dsp::pipeline::{default_pipeline, parse_pipeline, run_pipeline, Stage};
use ecgsim::error::{Error, Result};
use ecgsim::experiment::{run_experiment_with, ExperimentConfig, EXPERIMENT_PRESETS};
use ecgsim::leads::LeadSystem;
use ecgsim::noise::{corrupt, NoiseSpec};
use ecgsim::record::{Event, EventKind, Units};
use ecgsim::rhythm::{
    build_rr, detect_r_peaks, hrv_metrics, mask_and_interpolate, match_peaks, DetectionParams,
    HrvSummary, MatchStats, PeakSource,
};
use ecgsim::rng::derive;
use ecgsim::synth::{synthesize, BeatParams};

#[derive(Parser)]
#[command(
    name = "ecgsim",
    version,
    about = "12-lead ECG synthesis, wearable channel simulation and recovery"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed. Required wherever randomness is drawn.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON document configuring the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `run`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a clean 12-lead record (config: beat parameters).
    Synth {
        #[arg(long, default_value = "fig2-default")]
        preset: String,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 1000.0)]
        rate: f64,
        /// Lead system JSON with custom chest-lead angles.
        #[arg(long)]
        lead_system: Option<PathBuf>,
    },
    /// Inject interference, optionally followed by a channel (config: noise spec).
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "resting")]
        noise: String,
        /// Channel preset applied after the noise.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Run a recovery pipeline (config: pipeline stage list).
    Filter {
        #[arg(long)]
        input: PathBuf,
        /// Pipeline stage list; same as --config.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        /// Also write one container per stage next to the output.
        #[arg(long)]
        keep_intermediates: bool,
    },
    /// Detect R peaks (config: detection parameters).
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        tolerance_ms: f64,
    },
    /// HRV summary with and without artifact masking.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Container whose annotations are the reference beats.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Full experiment (config: experiment config).
    Run {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        emit_plots: bool,
        #[arg(long)]
        keep_intermediates: bool,
    },
    /// Shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::config(format!("{what} {}: {e}", path.display())))
}

fn require_seed(c: &Common) -> Result<u64> {
    c.seed.ok_or_else(|| Error::config("--seed is required"))
}

fn require_out(c: &Common) -> Result<&Path> {
    c.out
        .as_deref()
        .ok_or_else(|| Error::config("--out is required"))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn flagged_windows(c: &RecordContainer) -> Vec<FlaggedWindow> {
    c.events
        .of_kind(EventKind::DetectedArtifact)
        .map(|e| FlaggedWindow {
            start: e.start,
            end: e.end,
        })
        .collect()
}

fn synth(
    c: &Common,
    preset: &str,
    duration: f64,
    rate: f64,
    lead_system: Option<&Path>,
) -> Result<()> {
    let seed = require_seed(c)?;
    let out = require_out(c)?;
    let beat = match &c.config {
        Some(p) => parse_json(p, "beat parameters")?,
        None => BeatParams::preset(preset)?,
    };
    let sys = match lead_system {
        Some(p) => LeadSystem::from_json(&read_text(p)?)?,
        None => LeadSystem::default(),
    };
    let synth_seed = derive(seed, "synth");
    let (rec, ann, _) = synthesize(&beat, &sys, duration, rate, synth_seed)?;
    let mut cont = RecordContainer::new(rec);
    cont.seeds.insert("master".into(), seed);
    cont.seeds.insert("synth".into(), synth_seed);
    cont.annotations = Some(ecgsim::rhythm::RPeakAnnotations::ground_truth(ann.r_peaks)?);
    write_record(out, &cont)?;
    Ok(())
}

fn corrupt_cmd(c: &Common, input: &Path, noise: &str, channel: Option<&str>) -> Result<()> {
    let seed = require_seed(c)?;
    let out = require_out(c)?;
    let mut cont = read_record(input)?;
    let noise_seed = derive(seed, "noise");
    let spec = match &c.config {
        Some(p) => NoiseSpec {
            seed: noise_seed,
            ..parse_json(p, "noise spec")?
        },
        None => NoiseSpec::preset(noise, noise_seed)?,
    };
    let corruption = corrupt(&cont.record, &spec).map_err(|e| e.in_stage("noise"))?;
    cont.record = corruption.record;
    cont.events.extend(corruption.events);
    cont.accel = Some(corruption.accel);
    cont.seeds.insert("noise".into(), noise_seed);
    if let Some(name) = channel {
        let channel_seed = derive(seed, "channel");
        let (raw, log) = apply_channel(&cont.record, &ChannelSpec::preset(name)?, channel_seed)
            .map_err(|e| e.in_stage("channel"))?;
        cont.record = raw;
        cont.events.extend(log);
        cont.seeds.insert("channel".into(), channel_seed);
    }
    let labels: Vec<String> = cont.record.labels().iter().map(|s| s.to_string()).collect();
    cont.events
        .sort_by_lead_order(&labels.iter().map(String::as_str).collect::<Vec<_>>());
    write_record(out, &cont)?;
    Ok(())
}

/// The default chain minus whatever the input cannot feed: calibration for
/// records already in mV, the canceller when there is no accelerometer.
fn default_for(cont: &RecordContainer) -> Vec<Stage> {
    default_pipeline()
        .into_iter()
        .filter(|s| match s {
            Stage::Calibrate(_) => cont.record.units() == Units::Counts,
            Stage::Adaptive(_) => cont.accel.is_some(),
            _ => true,
        })
        .collect()
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.json"))
}

fn filter(c: &Common, input: &Path, pipeline: Option<&Path>, keep: bool) -> Result<()> {
    let out = require_out(c)?;
    let cont = read_record(input)?;
    let stages = match (pipeline, c.config.as_deref()) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "give the pipeline with either --pipeline or --config",
            ))
        }
        (Some(p), None) | (None, Some(p)) => parse_pipeline(&read_text(p)?)?,
        (None, None) => default_for(&cont),
    };
    let result = run_pipeline(&cont.record, cont.accel.as_ref(), &stages, keep)?;
    let labels: Vec<String> = cont.record.labels().iter().map(|s| s.to_string()).collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    for (i, (name, rec)) in result.intermediates.iter().enumerate() {
        let mut part = cont.clone();
        part.record = rec.clone();
        part.extend_provenance(&result.provenance[..=i]);
        write_record(&sibling(out, &format!("stage{:02}_{name}", i + 1)), &part)?;
    }
    let mut done = cont;
    done.record = result.record;
    done.extend_provenance(&result.provenance);
    for w in &result.flagged {
        done.events.push(Event {
            start: w.start,
            end: w.end,
            kind: EventKind::DetectedArtifact,
            lead: None,
            magnitude: 1.0,
        });
    }
    done.events.sort_by_lead_order(&labels);
    write_record(out, &done)?;
    Ok(())
}

#[derive(Serialize)]
struct DetectSummary {
    lead: String,
    detected: usize,
    flagged_windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    against_truth: Option<MatchStats>,
}

fn detect(c: &Common, input: &Path, tolerance_ms: f64) -> Result<()> {
    let out = require_out(c)?;
    let params: DetectionParams = match &c.config {
        Some(p) => parse_json(p, "detection parameters")?,
        None => DetectionParams::default(),
    };
    let mut cont = read_record(input)?;
    let fs = cont.record.sample_rate_hz();
    let found = detect_r_peaks(&cont.record, &params)?;
    let truth = cont
        .annotations
        .as_ref()
        .filter(|a| a.source == PeakSource::GroundTruth)
        .map(|a| {
            match_peaks(
                &found.indices,
                &a.indices,
                (tolerance_ms * fs / 1000.0).round() as usize,
            )
        });
    let windows = flagged_windows(&cont);
    let rr = build_rr(&found, fs)?;
    cont.rr = Some(if windows.is_empty() {
        rr
    } else {
        mask_and_interpolate(&rr, &windows)?
    });
    let summary = DetectSummary {
        lead: params.lead.clone(),
        detected: found.len(),
        flagged_windows: windows.len(),
        against_truth: truth,
    };
    cont.annotations = Some(found);
    write_record(out, &cont)?;
    emit_json(&summary, None)
}

#[derive(Serialize)]
struct Analysis {
    beats: usize,
    flagged_windows: usize,
    unmasked: HrvSummary,
    masked: Option<HrvSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<HrvSummary>,
}

fn analyze(c: &Common, input: &Path, truth: Option<&Path>) -> Result<()> {
    let cont = read_record(input)?;
    let fs = cont.record.sample_rate_hz();
    let peaks = match &cont.annotations {
        Some(a) => a.clone(),
        None => {
            let params: DetectionParams = match &c.config {
                Some(p) => parse_json(p, "detection parameters")?,
                None => DetectionParams::default(),
            };
            detect_r_peaks(&cont.record, &params)?
        }
    };
    let rr = build_rr(&peaks, fs)?;
    let windows = flagged_windows(&cont);
    let masked = if windows.is_empty() {
        None
    } else {
        Some(hrv_metrics(&mask_and_interpolate(&rr, &windows)?)?)
    };
    let truth = match truth {
        Some(p) => {
            let t = read_record(p)?;
            let ann = t
                .annotations
                .ok_or_else(|| Error::invalid(format!("{} carries no annotations", p.display())))?;
            Some(hrv_metrics(&build_rr(&ann, t.record.sample_rate_hz())?)?)
        }
        None => None,
    };
    let report = Analysis {
        beats: peaks.len(),
        flagged_windows: windows.len(),
        unmasked: hrv_metrics(&rr)?,
        masked,
        truth,
    };
    emit_json(&report, c.out.as_deref())
}

fn run(c: &Common, preset: Option<&str>, emit_plots: bool, keep: bool) -> Result<()> {
    let dir = require_out(c)?;
    let mut cfg = match (preset, &c.config) {
        (Some(_), Some(_)) => {
            return Err(Error::config("give either --preset or --config, not both"))
        }
        (Some(name), None) => ExperimentConfig::preset(name, require_seed(c)?)?,
        (None, Some(p)) => ExperimentConfig::from_json(&read_text(p)?)?,
        (None, None) => return Err(Error::config("run needs --preset or --config")),
    };
    if let Some(seed) = c.seed {
        cfg.seed = Some(seed);
    }
    cfg.outputs.emit_plots |= emit_plots;
    cfg.outputs.keep_intermediates |= keep;
    fs::create_dir_all(dir)?;
    let outcome = run_experiment_with(&cfg, |name, cont| {
        write_record(&dir.join(format!("{name}.json")), cont).map(|_| ())
    })?;
    atomic_write(
        &dir.join("report.json"),
        outcome.report.to_json()?.as_bytes(),
    )?;
    if let Some(csv) = &outcome.plot_csv {
        atomic_write(&dir.join(cfg.plot_file()), csv.as_bytes())?;
    }
    let r = &outcome.report;
    eprintln!(
        "{}: output SNR {} dB, detection F1 {:.3}, {} flagged windows",
        r.name,
        r.output_snr_db.map_or("n/a".into(), |v| format!("{v:.2}")),
        r.detection.f1,
        r.artifacts.flagged_windows
    );
    Ok(())
}

#[derive(Serialize)]
struct PresetTable {
    beat: Vec<&'static str>,
    channel: Vec<&'static str>,
    noise: Vec<&'static str>,
    experiment: Vec<&'static str>,
}

fn presets(c: &Common) -> Result<()> {
    let table = PresetTable {
        beat: vec!["fig2-default"],
        channel: CHANNEL_PRESETS.to_vec(),
        noise: NoiseSpec::PRESETS.to_vec(),
        experiment: EXPERIMENT_PRESETS.to_vec(),
    };
    emit_json(&table, c.out.as_deref())
}

fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Synth {
            preset,
            duration,
            rate,
            lead_system,
        } => synth(c, &preset, duration, rate, lead_system.as_deref()),
        Command::Corrupt {
            input,
            noise,
            channel,
        } => corrupt_cmd(c, &input, &noise, channel.as_deref()),
        Command::Filter {
            input,
            pipeline,
            keep_intermediates,
        } => filter(c, &input, pipeline.as_deref(), keep_intermediates),
        Command::Detect {
            input,
            tolerance_ms,
        } => detect(c, &input, tolerance_ms),
        Command::Analyze { input, truth } => analyze(c, &input, truth.as_deref()),
        Command::Run {
            preset,
            emit_plots,
            keep_intermediates,
        } => run(c, preset.as_deref(), emit_plots, keep_intermediates),
        Command::Presets {
            action: PresetAction::List,
        } => presets(c),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
