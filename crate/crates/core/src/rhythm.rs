//! R-peak detection, RR series with artifact masking, and HRV summaries.

use serde::{Deserialize, Serialize};

use crate::dsp::artifact::FlaggedWindow;
use crate::error::{Error, Result};
use crate::record::{percentile, MultiLeadRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakSource {
    GroundTruth,
    Detected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPeakAnnotations {
    pub indices: Vec<usize>,
    pub source: PeakSource,
    pub confidence: Vec<f64>,
}

impl RPeakAnnotations {
    pub fn ground_truth(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("R-peak indices must be strictly increasing"));
        }
        let confidence = vec![1.0; indices.len()];
        Ok(Self {
            indices,
            source: PeakSource::GroundTruth,
            confidence,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    pub lead: String,
    /// Threshold as a fraction of the running percentile.
    pub k: f64,
    pub percentile: f64,
    /// Running-percentile window, evaluated on a grid of `block_s` blocks.
    pub window_s: f64,
    pub block_s: f64,
    pub refractory_ms: f64,
    /// Caller asserts the record has been band-limited.
    pub bandpassed: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            lead: "II".into(),
            k: 0.6,
            percentile: 99.0,
            window_s: 8.0,
            block_s: 1.0,
            refractory_ms: 200.0,
            bandpassed: true,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(Error::config("threshold fraction k must lie in (0, 1)"));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::config("percentile must lie in (0, 100]"));
        }
        if !(self.window_s >= self.block_s && self.block_s > 0.0) {
            return Err(Error::config("need 0 < block ≤ window"));
        }
        if !(self.refractory_ms > 0.0) {
            return Err(Error::config("refractory period must be positive"));
        }
        if !self.bandpassed {
            return Err(Error::config(
                "detection expects a bandpass-filtered record",
            ));
        }
        Ok(())
    }
}

pub const MIN_DETECTION_S: f64 = 2.0;

/// Threshold per sample: `k` times the `percentile` of |x| over a window
/// centred on each block.
fn running_threshold(ax: &[f64], fs: f64, p: &DetectionParams) -> Vec<f64> {
    let n = ax.len();
    let block = ((p.block_s * fs).round() as usize).max(1);
    let half = ((p.window_s * fs / 2.0).round() as usize).max(1);
    let mut thr = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let centre = (start + end) / 2;
        let mut a = centre.saturating_sub(half);
        let mut b = (centre + half).min(n);
        // keep the window full-length at the record edges
        if b - a < 2 * half {
            if a == 0 {
                b = (2 * half).min(n);
            } else {
                a = n.saturating_sub(2 * half);
            }
        }
        let t = p.k * percentile(&ax[a..b], p.percentile);
        thr[start..end].iter_mut().for_each(|v| *v = t);
        start = end;
    }
    thr
}

pub fn detect_peaks_in(
    x: &[f64],
    sample_rate_hz: f64,
    params: &DetectionParams,
) -> Result<RPeakAnnotations> {
    params.validate()?;
    if (x.len() as f64) < MIN_DETECTION_S * sample_rate_hz {
        return Err(Error::invalid(format!(
            "detection needs at least {MIN_DETECTION_S} s, got {} samples at {sample_rate_hz} Hz",
            x.len()
        )));
    }
    let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let thr = running_threshold(&ax, sample_rate_hz, params);
    let refractory = (params.refractory_ms * sample_rate_hz / 1000.0).round() as usize;

    let mut peaks: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < ax.len() {
        if ax[i] <= thr[i] {
            i += 1;
            continue;
        }
        let mut best = i;
        while i < ax.len() && ax[i] > thr[i] {
            if ax[i] > ax[best] {
                best = i;
            }
            i += 1;
        }
        let conf = (ax[best] - thr[best]) / ax[best];
        match peaks.last_mut() {
            Some(last) if best - last.0 < refractory => {
                if ax[best] > ax[last.0] {
                    *last = (best, conf);
                }
            }
            _ => peaks.push((best, conf)),
        }
    }
    Ok(RPeakAnnotations {
        indices: peaks.iter().map(|p| p.0).collect(),
        confidence: peaks.iter().map(|p| p.1.clamp(0.0, 1.0)).collect(),
        source: PeakSource::Detected,
    })
}

pub fn detect_r_peaks(rec: &MultiLeadRecord, params: &DetectionParams) -> Result<RPeakAnnotations> {
    detect_peaks_in(rec.lead(&params.lead)?, rec.sample_rate_hz(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl MatchStats {
    pub fn sensitivity(&self) -> f64 {
        let d = self.true_positives + self.false_negatives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let d = self.true_positives + self.false_positives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (s, p) = (self.sensitivity(), self.precision());
        if s + p == 0.0 {
            0.0
        } else {
            2.0 * s * p / (s + p)
        }
    }

    pub fn merge(&mut self, other: MatchStats) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// One-to-one matching of sorted peak lists within ±`tolerance` samples.
pub fn match_peaks(detected: &[usize], truth: &[usize], tolerance: usize) -> MatchStats {
    let (mut i, mut j) = (0, 0);
    let mut tp = 0;
    while i < detected.len() && j < truth.len() {
        let (d, t) = (detected[i], truth[j]);
        if d.abs_diff(t) <= tolerance {
            tp += 1;
            i += 1;
            j += 1;
        } else if d < t {
            i += 1;
        } else {
            j += 1;
        }
    }
    MatchStats {
        true_positives: tp,
        false_positives: detected.len() - tp,
        false_negatives: truth.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RrFlag {
    Measured,
    Interpolated,
    Masked,
}

impl RrFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RrFlag::Measured => "measured",
            RrFlag::Interpolated => "interpolated",
            RrFlag::Masked => "masked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    pub intervals_ms: Vec<f64>,
    pub flags: Vec<RrFlag>,
    /// Peak sample indices bounding each interval.
    pub origins: Vec<(usize, usize)>,
}

pub const RR_MIN_MS: f64 = 240.0;
pub const RR_MAX_MS: f64 = 3000.0;

impl RrSeries {
    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn count(&self, flag: RrFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }
}

pub fn build_rr(peaks: &RPeakAnnotations, sample_rate_hz: f64) -> Result<RrSeries> {
    if peaks.indices.len() < 2 {
        return Err(Error::invalid("an RR series needs at least two peaks"));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let mut rr = RrSeries {
        intervals_ms: Vec::new(),
        flags: Vec::new(),
        origins: Vec::new(),
    };
    for w in peaks.indices.windows(2) {
        let ms = (w[1] as f64 - w[0] as f64) * 1000.0 / sample_rate_hz;
        rr.intervals_ms.push(ms);
        rr.flags.push(if ms > RR_MIN_MS && ms < RR_MAX_MS {
            RrFlag::Measured
        } else {
            RrFlag::Masked
        });
        rr.origins.push((w[0], w[1]));
    }
    Ok(rr)
}

/// Heart-rate predictor over measured intervals.
pub trait RrPredictor {
    /// Predicts entry `i` from the measured entries of `rr`.
    fn predict(&self, rr: &RrSeries, i: usize) -> Option<f64>;
}

/// Exponentially weighted mean of up to `span` measured neighbours, the
/// most recent weighted 1, then `lambda`, `lambda²`, … Looking both ways
/// and averaging the two one-sided estimates keeps a steady drift centred;
/// at the edges only one side is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ewma {
    pub span: usize,
    pub lambda: f64,
}

impl Default for Ewma {
    fn default() -> Self {
        Self {
            span: 8,
            lambda: 0.75,
        }
    }
}

impl Ewma {
    fn one_side(&self, rr: &RrSeries, idx: impl Iterator<Item = usize>) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut w = 1.0;
        for j in idx
            .filter(|&j| rr.flags[j] == RrFlag::Measured)
            .take(self.span)
        {
            num += w * rr.intervals_ms[j];
            den += w;
            w *= self.lambda;
        }
        (den > 0.0).then(|| num / den)
    }
}

impl RrPredictor for Ewma {
    fn predict(&self, rr: &RrSeries, i: usize) -> Option<f64> {
        let back = self.one_side(rr, (0..i).rev());
        let ahead = self.one_side(rr, i + 1..rr.len());
        match (back, ahead) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (a, b) => a.or(b),
        }
    }
}

pub fn mask_and_interpolate(rr: &RrSeries, windows: &[FlaggedWindow]) -> Result<RrSeries> {
    mask_and_interpolate_with(rr, windows, &Ewma::default())
}

/// Replaces intervals touched by any window by the predictor's estimate and
/// flags them interpolated. An interval is touched when a window overlaps
/// the span between its two peaks, bounds included, so beats missed inside
/// an artifact do not leave a stretched interval behind.
pub fn mask_and_interpolate_with(
    rr: &RrSeries,
    windows: &[FlaggedWindow],
    predictor: &dyn RrPredictor,
) -> Result<RrSeries> {
    if windows.is_empty() {
        return Ok(rr.clone());
    }
    let hit: Vec<bool> = rr
        .origins
        .iter()
        .map(|&(a, b)| windows.iter().any(|w| w.overlaps(a, b + 1)))
        .collect();
    let mut base = rr.clone();
    for (f, h) in base.flags.iter_mut().zip(&hit) {
        if *h && *f == RrFlag::Measured {
            *f = RrFlag::Masked;
        }
    }
    if base.count(RrFlag::Measured) == 0 {
        return Err(Error::invalid(
            "every RR interval is masked; nothing to predict from",
        ));
    }
    let mut out = base.clone();
    for i in 0..rr.len() {
        if hit[i] {
            let v = predictor
                .predict(&base, i)
                .ok_or_else(|| Error::invalid("no measured interval available for prediction"))?;
            out.intervals_ms[i] = v;
            out.flags[i] = RrFlag::Interpolated;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvSummary {
    pub mean_hr_bpm: f64,
    pub sdnn_ms: f64,
    pub rmssd_ms: f64,
    pub pnn50: f64,
    pub count_measured: usize,
    pub count_interpolated: usize,
}

pub fn hrv_metrics(rr: &RrSeries) -> Result<HrvSummary> {
    let usable: Vec<Option<f64>> = rr
        .intervals_ms
        .iter()
        .zip(&rr.flags)
        .map(|(v, f)| (*f != RrFlag::Masked).then_some(*v))
        .collect();
    let vals: Vec<f64> = usable.iter().flatten().copied().collect();
    if vals.len() < 2 {
        return Err(Error::invalid("HRV needs at least two usable intervals"));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sdnn = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let diffs: Vec<f64> = usable
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        })
        .collect();
    let (rmssd, pnn50) = if diffs.is_empty() {
        (0.0, 0.0)
    } else {
        let m = diffs.len() as f64;
        (
            (diffs.iter().map(|d| d * d).sum::<f64>() / m).sqrt(),
            diffs.iter().filter(|d| d.abs() > 50.0).count() as f64 / m,
        )
    };
    Ok(HrvSummary {
        mean_hr_bpm: 60_000.0 / mean,
        sdnn_ms: sdnn,
        rmssd_ms: rmssd,
        pnn50,
        count_measured: rr.count(RrFlag::Measured),
        count_interpolated: rr.count(RrFlag::Interpolated),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leads::LeadSystem;
    use crate::record::Units;
    use crate::synth::{synthesize, BeatParams};

    fn series(values: &[f64]) -> RrSeries {
        let mut at = 0usize;
        let mut peaks = vec![0];
        for v in values {
            at += *v as usize;
            peaks.push(at);
        }
        build_rr(&RPeakAnnotations::ground_truth(peaks).unwrap(), 1000.0).unwrap()
    }

    #[test]
    fn clean_sixty_bpm_detection() {
        let (rec, ann, _) = synthesize(
            &BeatParams::default(),
            &LeadSystem::default(),
            10.0,
            500.0,
            2,
        )
        .unwrap();
        let peaks = detect_r_peaks(&rec, &DetectionParams::default()).unwrap();
        assert_eq!(peaks.len(), 10);
        for (d, t) in peaks.indices.iter().zip(&ann.r_peaks) {
            assert!(d.abs_diff(*t) <= 5, "{d} vs {t}");
        }
        assert!(peaks.confidence.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn zero_record_and_short_record() {
        let z = MultiLeadRecord::zeros(500.0, Units::Millivolts, &["II"], 5000).unwrap();
        assert!(detect_r_peaks(&z, &DetectionParams::default())
            .unwrap()
            .is_empty());
        let short = MultiLeadRecord::zeros(500.0, Units::Millivolts, &["II"], 999).unwrap();
        assert!(detect_r_peaks(&short, &DetectionParams::default()).is_err());
    }

    #[test]
    fn build_rr_examples() {
        let p = RPeakAnnotations::ground_truth((0..6).map(|k| k * 500).collect()).unwrap();
        let rr = build_rr(&p, 500.0).unwrap();
        assert!(rr.intervals_ms.iter().all(|&v| v == 1000.0));
        let dbl = RPeakAnnotations::ground_truth(vec![0, 500, 550, 1000]).unwrap();
        let rr = build_rr(&dbl, 500.0).unwrap();
        assert_eq!(rr.flags[1], RrFlag::Masked);
        assert!(build_rr(&RPeakAnnotations::ground_truth(vec![3]).unwrap(), 500.0).is_err());
    }

    #[test]
    fn constant_series_interpolates_exactly() {
        let rr = series(&[1000.0; 12]);
        let w = FlaggedWindow {
            start: 4990,
            end: 5010,
        };
        let out = mask_and_interpolate(&rr, &[w]).unwrap();
        assert_eq!(out.flags[5], RrFlag::Interpolated);
        assert_eq!(out.intervals_ms[5], 1000.0);
        assert_eq!(mask_and_interpolate(&rr, &[]).unwrap(), rr);
    }

    #[test]
    fn linear_drift_gap() {
        let vals: Vec<f64> = (0..30).map(|k| 700.0 + 10.0 * k as f64).collect();
        let rr = series(&vals);
        let (a, b) = rr.origins[15];
        let out = mask_and_interpolate(
            &rr,
            &[FlaggedWindow {
                start: a + 1,
                end: b + 1,
            }],
        )
        .unwrap();
        // the window holds peak b, which bounds intervals 15 and 16
        for i in [15, 16] {
            assert_eq!(out.flags[i], RrFlag::Interpolated);
            assert!((out.intervals_ms[i] - vals[i]).abs() <= 25.0);
            assert!(out.intervals_ms[i] > vals[i - 1] && out.intervals_ms[i] < vals[i + 1]);
        }
        assert_eq!(
            mask_and_interpolate(
                &out,
                &[FlaggedWindow {
                    start: a + 1,
                    end: b + 1
                }]
            )
            .unwrap(),
            out
        );
    }

    #[test]
    fn everything_masked_errors() {
        let rr = series(&[1000.0; 3]);
        assert!(mask_and_interpolate(
            &rr,
            &[FlaggedWindow {
                start: 0,
                end: 10_000
            }]
        )
        .is_err());
    }

    #[test]
    fn hrv_closed_forms() {
        let h = hrv_metrics(&series(&[1000.0; 10])).unwrap();
        assert_eq!((h.sdnn_ms, h.rmssd_ms, h.pnn50), (0.0, 0.0, 0.0));
        assert!((h.mean_hr_bpm - 60.0).abs() < 1e-12);
        let alt: Vec<f64> = (0..20)
            .map(|k| if k % 2 == 0 { 900.0 } else { 1100.0 })
            .collect();
        let h = hrv_metrics(&series(&alt)).unwrap();
        assert!((h.rmssd_ms - 200.0).abs() < 1e-9);
        assert_eq!(h.pnn50, 1.0);
    }

    #[test]
    fn match_counts() {
        let s = match_peaks(&[100, 205, 400], &[100, 200, 300], 10);
        assert_eq!(
            (s.true_positives, s.false_positives, s.false_negatives),
            (2, 1, 1)
        );
    }
}
