//! Ordered recovery stages, loaded from a JSON list and run in sequence.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::artifact::{
    detect_common_mode, remove_level_shifts, template_reconstruct, CommonModeSpec, FlaggedWindow,
    LevelShiftSpec,
};
use super::emd::{emd_baseline_remove, EmdSpec};
use super::fir::{apply_fir, design_equiripple, FilterMode, FirDesignSpec, FirKind};
use super::nlms::{adaptive_cancel, AdaptiveSpec};
use super::wavelet::{wavelet_denoise, WaveletSpec};
use crate::error::{Error, Result};
use crate::noise::AccelStream;
use crate::record::{median, MultiLeadRecord, Units};
use crate::rhythm::{detect_r_peaks, DetectionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateSpec {
    pub gain_counts_per_mv: f64,
    /// Subtract each lead's median before scaling.
    pub remove_dc: bool,
}

impl Default for CalibrateSpec {
    fn default() -> Self {
        Self {
            gain_counts_per_mv: 1000.0,
            remove_dc: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotchStage {
    pub center_hz: f64,
    pub half_width_hz: f64,
    pub transition_hz: f64,
    pub passband_ripple_db: f64,
    pub stopband_atten_db: f64,
    pub max_taps: usize,
    pub mode: FilterMode,
}

impl Default for NotchStage {
    fn default() -> Self {
        let d = FirDesignSpec::default_notch(1000.0);
        Self {
            center_hz: 50.0,
            half_width_hz: 2.0,
            transition_hz: d.transition_hz,
            passband_ripple_db: d.passband_ripple_db,
            stopband_atten_db: d.stopband_atten_db,
            max_taps: d.max_taps,
            mode: FilterMode::ZeroPhase,
        }
    }
}

impl NotchStage {
    pub fn design_spec(&self, sample_rate_hz: f64) -> FirDesignSpec {
        FirDesignSpec {
            kind: FirKind::Notch,
            sample_rate_hz,
            band_hz: (
                self.center_hz - self.half_width_hz,
                self.center_hz + self.half_width_hz,
            ),
            transition_hz: self.transition_hz,
            passband_ripple_db: self.passband_ripple_db,
            stopband_atten_db: self.stopband_atten_db,
            max_taps: self.max_taps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandpassStage {
    pub low_hz: f64,
    pub high_hz: f64,
    pub transition_hz: f64,
    pub passband_ripple_db: f64,
    pub stopband_atten_db: f64,
    pub max_taps: usize,
    pub mode: FilterMode,
}

impl Default for BandpassStage {
    fn default() -> Self {
        let d = FirDesignSpec::default_bandpass(1000.0);
        Self {
            low_hz: d.band_hz.0,
            high_hz: d.band_hz.1,
            transition_hz: d.transition_hz,
            passband_ripple_db: d.passband_ripple_db,
            stopband_atten_db: d.stopband_atten_db,
            max_taps: d.max_taps,
            mode: FilterMode::ZeroPhase,
        }
    }
}

impl BandpassStage {
    pub fn design_spec(&self, sample_rate_hz: f64) -> FirDesignSpec {
        FirDesignSpec {
            kind: FirKind::Bandpass,
            sample_rate_hz,
            band_hz: (self.low_hz, self.high_hz),
            transition_hz: self.transition_hz,
            passband_ripple_db: self.passband_ripple_db,
            stopband_atten_db: self.stopband_atten_db,
            max_taps: self.max_taps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletStage {
    #[serde(flatten)]
    pub spec: WaveletSpec,
    /// Fixed noise σ in record units; per-level MAD estimate when absent.
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateStage {
    pub detection: DetectionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Calibrate(CalibrateSpec),
    LevelShift(LevelShiftSpec),
    Notch(NotchStage),
    Bandpass(BandpassStage),
    Wavelet(WaveletStage),
    EmdBaseline(EmdSpec),
    Adaptive(AdaptiveSpec),
    DetectCommonMode(CommonModeSpec),
    TemplateReconstruct(TemplateStage),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Calibrate(_) => "calibrate",
            Stage::LevelShift(_) => "level_shift",
            Stage::Notch(_) => "notch",
            Stage::Bandpass(_) => "bandpass",
            Stage::Wavelet(_) => "wavelet",
            Stage::EmdBaseline(_) => "emd_baseline",
            Stage::Adaptive(_) => "adaptive",
            Stage::DetectCommonMode(_) => "detect_common_mode",
            Stage::TemplateReconstruct(_) => "template_reconstruct",
        }
    }

    /// SHA-256 of the stage's canonical JSON.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("stage specs always serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Default chain for counts input: calibrate, flag co-modulated artifacts
/// while their onset edges are intact, undo microslip and discharge steps,
/// notch, band limit, remove baseline, cancel accelerometer-correlated noise
/// once the lead is zero-mean, then wavelet shrinkage.
pub fn default_pipeline() -> Vec<Stage> {
    vec![
        Stage::Calibrate(CalibrateSpec::default()),
        Stage::DetectCommonMode(CommonModeSpec::default()),
        Stage::LevelShift(LevelShiftSpec::default()),
        Stage::Notch(NotchStage::default()),
        Stage::Bandpass(BandpassStage::default()),
        Stage::EmdBaseline(EmdSpec::default()),
        Stage::Adaptive(AdaptiveSpec::default()),
        Stage::Wavelet(WaveletStage::default()),
    ]
}

pub fn parse_pipeline(json: &str) -> Result<Vec<Stage>> {
    let stages: Vec<Stage> =
        serde_json::from_str(json).map_err(|e| Error::config(format!("pipeline JSON: {e}")))?;
    if stages.is_empty() {
        return Err(Error::config("pipeline has no stages"));
    }
    Ok(stages)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProvenance {
    pub stage: String,
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub record: MultiLeadRecord,
    pub flagged: Vec<FlaggedWindow>,
    pub baseline: Option<MultiLeadRecord>,
    /// Output after each stage, when requested.
    pub intermediates: Vec<(String, MultiLeadRecord)>,
    pub provenance: Vec<StageProvenance>,
}

fn calibrate(rec: &MultiLeadRecord, spec: &CalibrateSpec) -> Result<MultiLeadRecord> {
    rec.require_units(Units::Counts)?;
    if !(spec.gain_counts_per_mv > 0.0) {
        return Err(Error::config("calibration gain must be positive"));
    }
    rec.map_leads(Units::Millivolts, |_, lead| {
        let dc = if spec.remove_dc {
            median(&lead.samples)
        } else {
            0.0
        };
        Ok(lead
            .samples
            .iter()
            .map(|v| (v - dc) / spec.gain_counts_per_mv)
            .collect())
    })
}

fn run_stage(
    stage: &Stage,
    rec: &MultiLeadRecord,
    accel: Option<&AccelStream>,
    out: &mut PipelineOutput,
) -> Result<MultiLeadRecord> {
    let fs = rec.sample_rate_hz();
    match stage {
        Stage::Calibrate(spec) => calibrate(rec, spec),
        Stage::LevelShift(spec) => remove_level_shifts(rec, spec),
        Stage::Notch(s) => {
            let taps = design_equiripple(&s.design_spec(fs))?;
            apply_fir(rec, &taps, s.mode)
        }
        Stage::Bandpass(s) => {
            let taps = design_equiripple(&s.design_spec(fs))?;
            apply_fir(rec, &taps, s.mode)
        }
        Stage::Wavelet(s) => wavelet_denoise(rec, &s.spec, s.noise_sigma),
        Stage::EmdBaseline(spec) => {
            let (clean, baseline) = emd_baseline_remove(rec, spec)?;
            out.baseline = Some(baseline);
            Ok(clean)
        }
        Stage::Adaptive(spec) => {
            let accel = accel
                .ok_or_else(|| Error::config("adaptive stage needs an accelerometer stream"))?;
            adaptive_cancel(rec, accel, spec)
        }
        Stage::DetectCommonMode(spec) => {
            let mut flags = detect_common_mode(rec, spec)?;
            out.flagged.append(&mut flags);
            out.flagged.sort_by_key(|w| (w.start, w.end));
            Ok(rec.clone())
        }
        Stage::TemplateReconstruct(s) => {
            let peaks = detect_r_peaks(rec, &s.detection)?;
            template_reconstruct(rec, &out.flagged, &peaks.indices)
        }
    }
}

/// Runs `stages` in order. Errors carry the failing stage's name.
pub fn run_pipeline(
    rec: &MultiLeadRecord,
    accel: Option<&AccelStream>,
    stages: &[Stage],
    keep_intermediates: bool,
) -> Result<PipelineOutput> {
    let mut out = PipelineOutput {
        record: rec.clone(),
        flagged: Vec::new(),
        baseline: None,
        intermediates: Vec::new(),
        provenance: Vec::new(),
    };
    for stage in stages {
        let current = std::mem::replace(
            &mut out.record,
            MultiLeadRecord::zeros(1.0, Units::Millivolts, &[], 0)?,
        );
        out.record =
            run_stage(stage, &current, accel, &mut out).map_err(|e| e.in_stage(stage.name()))?;
        out.provenance.push(StageProvenance {
            stage: stage.name().to_string(),
            config_sha256: stage.config_hash(),
        });
        if keep_intermediates {
            out.intermediates
                .push((stage.name().to_string(), out.record.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pipeline_round_trips_json() {
        let stages = default_pipeline();
        let json = serde_json::to_string(&stages).unwrap();
        assert_eq!(parse_pipeline(&json).unwrap(), stages);
        let minimal = r#"[{"stage":"notch"},{"stage":"wavelet","levels":4}]"#;
        let parsed = parse_pipeline(minimal).unwrap();
        assert_eq!(parsed[0], Stage::Notch(NotchStage::default()));
        match &parsed[1] {
            Stage::Wavelet(w) => assert_eq!(w.spec.levels, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_stage_is_config_error() {
        assert!(matches!(
            parse_pipeline(r#"[{"stage":"fft"}]"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(parse_pipeline("[]"), Err(Error::Config(_))));
    }

    #[test]
    fn stage_errors_are_tagged() {
        let rec = MultiLeadRecord::zeros(500.0, Units::Millivolts, &["II"], 100).unwrap();
        let err = run_pipeline(
            &rec,
            None,
            &[Stage::Calibrate(CalibrateSpec::default())],
            false,
        )
        .unwrap_err();
        match err {
            Error::Stage { stage, .. } => assert_eq!(stage, "calibrate"),
            other => panic!("{other:?}"),
        }
    }
}
