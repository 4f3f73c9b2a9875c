//! End-to-end runs: synthesize, inject interference, pass through the
//! electrode/amplifier channel, recover, detect and summarize.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_channel, dc_range, ChannelSpec, DcRange};
use crate::container::RecordContainer;
use crate::dsp::artifact::FlaggedWindow;
use crate::dsp::pipeline::{default_pipeline, run_pipeline, Stage, StageProvenance};
use crate::error::{Error, Result};
use crate::leads::LeadSystem;
use crate::noise::{corrupt, snr_db, NoiseSpec};
use crate::record::{EventKind, MultiLeadRecord, Units};
use crate::rhythm::{
    build_rr, detect_r_peaks, hrv_metrics, mask_and_interpolate, match_peaks, DetectionParams,
    HrvSummary, RPeakAnnotations,
};
use crate::rng::derive;
use crate::synth::{synthesize, BeatParams};

/// A named preset or an inline specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PresetOr<T> {
    Preset(String),
    Inline(T),
}

fn default_beat() -> PresetOr<BeatParams> {
    PresetOr::Preset("fig2-default".into())
}

fn default_channel() -> PresetOr<ChannelSpec> {
    PresetOr::Preset("ideal".into())
}

fn default_noise() -> PresetOr<NoiseSpec> {
    PresetOr::Preset("none".into())
}

fn default_duration() -> f64 {
    60.0
}

fn default_rate() -> f64 {
    1000.0
}

fn default_tolerance() -> f64 {
    50.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Write the plot-ready trace CSV.
    pub emit_plots: bool,
    /// File name for the trace CSV; `<name>.csv` when absent.
    pub plot_file: Option<String>,
    /// Emit one container per pipeline stage.
    pub keep_intermediates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed. Required: there is no entropy fallback.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_beat")]
    pub beat: PresetOr<BeatParams>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_channel")]
    pub channel: PresetOr<ChannelSpec>,
    /// The spec's own `seed` field is replaced by one derived from the master seed.
    #[serde(default = "default_noise")]
    pub noise: PresetOr<NoiseSpec>,
    #[serde(default = "default_pipeline")]
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default = "default_tolerance")]
    pub match_tolerance_ms: f64,
    #[serde(default)]
    pub outputs: OutputSpec,
}

pub const EXPERIMENT_PRESETS: [&str; 3] = ["no-electrode", "with-electrode", "rest-to-motion"];

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed: Some(seed),
            beat: default_beat(),
            duration_s: default_duration(),
            sample_rate_hz: default_rate(),
            channel: default_channel(),
            noise: default_noise(),
            pipeline: default_pipeline(),
            detection: DetectionParams::default(),
            match_tolerance_ms: default_tolerance(),
            outputs: OutputSpec::default(),
        }
    }

    /// The three garment scenarios: dry contact and microneedle electrodes
    /// at rest, and microneedle electrodes going from rest into motion.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (channel, noise, plot) = match name {
            "no-electrode" => ("no-electrode", "resting", "fig8_no_electrode.csv"),
            "with-electrode" => ("with-electrode", "resting", "fig9_with_electrode.csv"),
            "rest-to-motion" => (
                "with-electrode",
                "rest-to-motion",
                "fig10_rest_to_motion.csv",
            ),
            other => {
                return Err(Error::config(format!(
                    "unknown experiment preset `{other}`"
                )))
            }
        };
        let mut cfg = Self::new(name, seed);
        cfg.channel = PresetOr::Preset(channel.into());
        cfg.noise = PresetOr::Preset(noise.into());
        cfg.outputs.plot_file = Some(plot.into());
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("experiment config: {e}")))
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("experiment config has no master seed"))
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configs always serialize");
        hex::encode(Sha256::digest(&json))
    }

    pub fn plot_file(&self) -> String {
        self.outputs
            .plot_file
            .clone()
            .unwrap_or_else(|| format!("{}.csv", self.name))
    }

    /// Resolves presets and checks everything that can be checked before running.
    pub fn resolve(&self) -> Result<Resolved> {
        let seed = self.master_seed()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("duration must be positive"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::config("sample rate must be positive"));
        }
        if !(self.match_tolerance_ms > 0.0) {
            return Err(Error::config("match tolerance must be positive"));
        }
        if self.pipeline.is_empty() {
            return Err(Error::config("pipeline has no stages"));
        }
        self.detection.validate()?;
        let beat = match &self.beat {
            PresetOr::Preset(name) => BeatParams::preset(name)?,
            PresetOr::Inline(b) => b.clone(),
        };
        beat.validate()?;
        let channel = match &self.channel {
            PresetOr::Preset(name) => ChannelSpec::preset(name)?,
            PresetOr::Inline(c) => c.clone(),
        };
        let noise_seed = derive(seed, "noise");
        let noise = match &self.noise {
            PresetOr::Preset(name) => NoiseSpec::preset(name, noise_seed)?,
            PresetOr::Inline(n) => NoiseSpec {
                seed: noise_seed,
                ..n.clone()
            },
        };
        noise.validate(self.sample_rate_hz)?;
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), seed);
        seeds.insert("synth".to_string(), derive(seed, "synth"));
        seeds.insert("noise".to_string(), noise_seed);
        seeds.insert("channel".to_string(), derive(seed, "channel"));
        Ok(Resolved {
            beat,
            channel,
            noise,
            seeds,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub beat: BeatParams,
    pub channel: ChannelSpec,
    pub noise: NoiseSpec,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnr {
    pub stage: String,
    /// `None` while the record is still in counts, or when exact.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub lead: String,
    pub tolerance_ms: f64,
    pub truth_beats: usize,
    pub detected: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactReport {
    pub injected_events: usize,
    pub flagged_windows: usize,
    pub events_flagged: usize,
    /// Share of injected motion events overlapped by a flagged window.
    pub flagged_event_fraction: Option<f64>,
    /// Windows that overlap no injected event.
    pub spurious_windows: usize,
    pub flagged_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvReport {
    pub truth: HrvSummary,
    pub unmasked: Option<HrvSummary>,
    pub masked: Option<HrvSummary>,
    /// Relative mean-HR error against the ground-truth series.
    pub unmasked_mean_hr_error: Option<f64>,
    pub masked_mean_hr_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub leads: Vec<String>,
    /// Clean against corrupted, before the channel.
    pub input_snr_db: Option<f64>,
    pub stage_snr: Vec<StageSnr>,
    pub output_snr_db: Option<f64>,
    pub dc_range: DcRange,
    pub detection: DetectionReport,
    pub artifacts: ArtifactReport,
    pub hrv: HrvReport,
    pub provenance: Vec<StageProvenance>,
}

impl Report {
    /// Canonical bytes: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: Report,
    /// Named containers in emission order: clean, corrupted, raw,
    /// per-stage intermediates when requested, recovered.
    pub containers: Vec<(String, RecordContainer)>,
    pub flagged: Vec<FlaggedWindow>,
    pub plot_csv: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn rel_error(a: f64, truth: f64) -> f64 {
    (a - truth).abs() / truth
}

/// Runs the experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(cfg, |_, _| Ok(()))
}

/// Like [`run_experiment`], handing each container to `emit` as soon as it
/// exists so a failure later on still leaves the earlier outputs behind.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut emit: F) -> Result<ExperimentOutcome>
where
    F: FnMut(&str, &RecordContainer) -> Result<()>,
{
    let r = cfg.resolve()?;
    let seed_of = |k: &str| r.seeds[k];
    let mut containers: Vec<(String, RecordContainer)> = Vec::new();
    let mut keep = |name: &str, c: RecordContainer| -> Result<()> {
        emit(name, &c)?;
        containers.push((name.to_string(), c));
        Ok(())
    };

    let (clean, truth, _) = synthesize(
        &r.beat,
        &LeadSystem::default(),
        cfg.duration_s,
        cfg.sample_rate_hz,
        seed_of("synth"),
    )
    .map_err(|e| e.in_stage("synth"))?;
    let truth_peaks = RPeakAnnotations::ground_truth(truth.r_peaks.clone())?;
    let mut c = RecordContainer::new(clean.clone());
    c.seeds.insert("synth".into(), seed_of("synth"));
    c.annotations = Some(truth_peaks.clone());
    keep("clean", c)?;

    let corruption = corrupt(&clean, &r.noise).map_err(|e| e.in_stage("noise"))?;
    let mut c = RecordContainer::new(corruption.record.clone());
    c.seeds.insert("synth".into(), seed_of("synth"));
    c.seeds.insert("noise".into(), seed_of("noise"));
    c.events = corruption.events.clone();
    c.accel = Some(corruption.accel.clone());
    keep("corrupted", c)?;

    let (raw, channel_events) = apply_channel(&corruption.record, &r.channel, seed_of("channel"))
        .map_err(|e| e.in_stage("channel"))?;
    let mut raw_c = RecordContainer::new(raw.clone());
    raw_c.seeds = r.seeds.clone();
    raw_c.events = corruption.events.clone();
    raw_c.events.extend(channel_events);
    raw_c.events.sort_by_lead_order(&raw.labels());
    raw_c.accel = Some(corruption.accel.clone());
    keep("raw", raw_c.clone())?;

    let out = run_pipeline(&raw, Some(&corruption.accel), &cfg.pipeline, true)?;
    let mut stage_snr = Vec::with_capacity(out.intermediates.len());
    for (i, (stage, rec)) in out.intermediates.iter().enumerate() {
        let snr = match rec.units() {
            Units::Millivolts => finite(snr_db(&clean, rec)?),
            Units::Counts => None,
        };
        stage_snr.push(StageSnr {
            stage: stage.clone(),
            snr_db: snr,
        });
        if cfg.outputs.keep_intermediates {
            let mut c = raw_c.clone();
            c.record = rec.clone();
            c.extend_provenance(&out.provenance[..=i]);
            keep(&format!("stage{:02}_{stage}", i + 1), c)?;
        }
    }
    let recovered = out.record.clone();
    let output_snr_db = match recovered.units() {
        Units::Millivolts => finite(snr_db(&clean, &recovered)?),
        Units::Counts => None,
    };

    let fs = cfg.sample_rate_hz;
    let detected = detect_r_peaks(&recovered, &cfg.detection).map_err(|e| e.in_stage("detect"))?;
    let tol = (cfg.match_tolerance_ms * fs / 1000.0).round() as usize;
    let m = match_peaks(&detected.indices, &truth_peaks.indices, tol);

    let truth_rr = build_rr(&truth_peaks, fs).map_err(|e| e.in_stage("hrv"))?;
    let truth_hrv = hrv_metrics(&truth_rr).map_err(|e| e.in_stage("hrv"))?;
    let unmasked_rr = build_rr(&detected, fs).ok();
    let masked_rr = unmasked_rr
        .as_ref()
        .and_then(|rr| mask_and_interpolate(rr, &out.flagged).ok());
    let unmasked = unmasked_rr.as_ref().and_then(|rr| hrv_metrics(rr).ok());
    let masked = masked_rr.as_ref().and_then(|rr| hrv_metrics(rr).ok());

    let motion: Vec<(usize, usize)> = corruption
        .events
        .of_kind(EventKind::Motion)
        .map(|e| (e.start, e.end))
        .collect();
    let events_flagged = motion
        .iter()
        .filter(|&&(a, b)| out.flagged.iter().any(|w| w.overlaps(a, b)))
        .count();
    let spurious_windows = out
        .flagged
        .iter()
        .filter(|w| !motion.iter().any(|&(a, b)| w.overlaps(a, b)))
        .count();

    let report = Report {
        name: cfg.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.config_hash(),
        seeds: r.seeds.clone(),
        sample_rate_hz: fs,
        duration_s: cfg.duration_s,
        leads: clean.labels().iter().map(|s| s.to_string()).collect(),
        input_snr_db: finite(snr_db(&clean, &corruption.record)?),
        stage_snr,
        output_snr_db,
        dc_range: dc_range(&raw)?,
        detection: DetectionReport {
            lead: cfg.detection.lead.clone(),
            tolerance_ms: cfg.match_tolerance_ms,
            truth_beats: truth_peaks.len(),
            detected: detected.len(),
            true_positives: m.true_positives,
            false_positives: m.false_positives,
            false_negatives: m.false_negatives,
            sensitivity: m.sensitivity(),
            precision: m.precision(),
            f1: m.f1(),
        },
        artifacts: ArtifactReport {
            injected_events: motion.len(),
            flagged_windows: out.flagged.len(),
            events_flagged,
            flagged_event_fraction: (!motion.is_empty())
                .then(|| events_flagged as f64 / motion.len() as f64),
            spurious_windows,
            flagged_seconds: out
                .flagged
                .iter()
                .map(|w| (w.end - w.start) as f64)
                .sum::<f64>()
                / fs,
        },
        hrv: HrvReport {
            truth: truth_hrv,
            unmasked,
            masked,
            unmasked_mean_hr_error: unmasked
                .map(|h| rel_error(h.mean_hr_bpm, truth_hrv.mean_hr_bpm)),
            masked_mean_hr_error: masked.map(|h| rel_error(h.mean_hr_bpm, truth_hrv.mean_hr_bpm)),
        },
        provenance: out.provenance.clone(),
    };

    let mut rc = raw_c;
    rc.record = recovered;
    rc.extend_provenance(&out.provenance);
    for w in &out.flagged {
        rc.events.push(crate::record::Event {
            start: w.start,
            end: w.end,
            kind: EventKind::DetectedArtifact,
            lead: None,
            magnitude: 1.0,
        });
    }
    rc.events.sort_by_lead_order(&clean.labels());
    rc.annotations = Some(detected);
    rc.rr = masked_rr.or(unmasked_rr);
    keep("recovered", rc)?;

    let plot_csv = if cfg.outputs.emit_plots {
        Some(plot_table(
            &clean,
            &raw,
            &out.record,
            &out.flagged,
            &cfg.detection.lead,
        )?)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        report,
        containers,
        flagged: out.flagged,
        plot_csv,
    })
}

/// Plot-ready traces: raw kCounts and recovered mV for every lead, the
/// clean detection lead and a 0/1 artifact flag.
fn plot_table(
    clean: &MultiLeadRecord,
    raw: &MultiLeadRecord,
    recovered: &MultiLeadRecord,
    flagged: &[FlaggedWindow],
    lead: &str,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let labels = raw.labels();
    let mut head = vec!["t_s".to_string()];
    head.extend(labels.iter().map(|l| format!("raw_kcounts_{l}")));
    head.extend(
        recovered
            .labels()
            .iter()
            .map(|l| format!("recovered_{}_{l}", recovered.units().as_str())),
    );
    head.push(format!("clean_mv_{lead}"));
    head.push("flagged".into());
    w.write_record(&head)?;
    let truth = clean.lead(lead)?;
    let fs = raw.sample_rate_hz();
    let scale = if raw.units() == Units::Counts {
        1e-3
    } else {
        1.0
    };
    let mut row: Vec<String> = Vec::with_capacity(head.len());
    for k in 0..raw.len() {
        row.clear();
        row.push(format!("{}", raw.t0_s() + k as f64 / fs));
        row.extend(
            raw.leads()
                .iter()
                .map(|l| format!("{}", l.samples[k] * scale)),
        );
        row.extend(
            recovered
                .leads()
                .iter()
                .map(|l| format!("{}", l.samples[k])),
        );
        row.push(format!("{}", truth[k]));
        row.push(
            if flagged.iter().any(|f| f.contains(k)) {
                "1"
            } else {
                "0"
            }
            .into(),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}
