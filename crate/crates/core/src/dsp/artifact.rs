//! Full-lead co-modulation detection of motion artifacts, level-shift
//! repair of electrode microslips and amplifier discharges, and the optional
//! template-reconstruction repair of flagged windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{median, MultiLeadRecord};
use crate::synth::ideal_pqrst_template;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommonModeSpec {
    /// Derivative-energy window.
    pub window_s: f64,
    /// Threshold multiple of the median per-second energy maximum.
    pub threshold_factor: f64,
    /// Fraction of leads that must exceed their threshold at once.
    pub lead_fraction: f64,
    /// Flags closer than this are merged.
    pub merge_gap_s: f64,
    /// Margin added on both sides of each window.
    pub pad_s: f64,
    pub min_leads: usize,
}

impl Default for CommonModeSpec {
    fn default() -> Self {
        Self {
            window_s: 0.005,
            threshold_factor: 4.0,
            lead_fraction: 0.8,
            merge_gap_s: 0.25,
            pad_s: 0.05,
            min_leads: 8,
        }
    }
}

impl CommonModeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.threshold_factor > 0.0) {
            return Err(Error::config(
                "window and threshold factor must be positive",
            ));
        }
        if !(self.lead_fraction > 0.0 && self.lead_fraction <= 1.0) {
            return Err(Error::config("lead fraction must lie in (0, 1]"));
        }
        if !(self.merge_gap_s >= 0.0 && self.pad_s >= 0.0) {
            return Err(Error::config("merge gap and pad must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelShiftSpec {
    /// Smallest sample-to-sample jump treated as a level shift.
    pub min_jump_mv: f64,
    /// A jump must also exceed this multiple of the robust σ of the lead's
    /// first difference.
    pub mad_factor: f64,
}

impl Default for LevelShiftSpec {
    fn default() -> Self {
        Self {
            min_jump_mv: 20.0,
            mad_factor: 50.0,
        }
    }
}

/// Removes single-sample jumps far above anything cardiac, keeping the
/// level before the first one. Microslip steps and post-saturation
/// discharges otherwise leave edges that every later stage smears out.
/// With three or more leads the cross-lead median jump is treated as
/// common-mode and left in place.
pub fn remove_level_shifts(
    rec: &MultiLeadRecord,
    spec: &LevelShiftSpec,
) -> Result<MultiLeadRecord> {
    if !(spec.min_jump_mv > 0.0 && spec.mad_factor > 0.0) {
        return Err(Error::config("level-shift thresholds must be positive"));
    }
    rec.require_units(crate::record::Units::Millivolts)?;
    let diffs: Vec<Vec<f64>> = rec
        .leads()
        .iter()
        .map(|l| l.samples.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let common = |k: usize| -> f64 {
        if diffs.len() < 3 {
            return 0.0;
        }
        median(&diffs.iter().map(|d| d[k]).collect::<Vec<_>>())
    };
    rec.map_leads(rec.units(), |i, lead| {
        let x = &lead.samples;
        if x.len() < 2 {
            return Ok(x.clone());
        }
        let d = &diffs[i];
        let centre = median(d);
        let mad = median(&d.iter().map(|v| (v - centre).abs()).collect::<Vec<_>>());
        let thr = spec.min_jump_mv.max(spec.mad_factor * 1.4826 * mad);
        let own = |k: usize| d[k] - common(k);
        let mut shift = 0.0;
        let mut y = Vec::with_capacity(x.len());
        y.push(x[0]);
        for k in 0..d.len() {
            if (d[k] - centre).abs() > thr {
                let jump = own(k);
                if jump.abs() > thr {
                    // keep the underlying slope, taken from the neighbouring differences
                    let before = if k > 0 { own(k - 1) } else { 0.0 };
                    let after = if k + 1 < d.len() { own(k + 1) } else { before };
                    let slope = if (before - centre).abs() > thr || (after - centre).abs() > thr {
                        centre
                    } else {
                        0.5 * (before + after)
                    };
                    shift += jump - slope;
                }
            }
            y.push(x[k + 1] - shift);
        }
        Ok(y)
    })
}

/// Inclusive-exclusive sample window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedWindow {
    pub start: usize,
    pub end: usize,
}

impl FlaggedWindow {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

/// Centred moving sum of squared first differences.
fn derivative_energy(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let mut d2 = vec![0.0; n];
    for i in 1..n {
        d2[i] = (x[i] - x[i - 1]).powi(2);
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + d2[i];
    }
    let half = width / 2;
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + width - half).min(n);
            prefix[b] - prefix[a]
        })
        .collect()
}

pub fn detect_common_mode(
    rec: &MultiLeadRecord,
    spec: &CommonModeSpec,
) -> Result<Vec<FlaggedWindow>> {
    spec.validate()?;
    if rec.lead_count() < spec.min_leads {
        return Err(Error::invalid(format!(
            "co-modulation needs at least {} leads, record has {}",
            spec.min_leads,
            rec.lead_count()
        )));
    }
    let fs = rec.sample_rate_hz();
    let n = rec.len();
    let width = ((spec.window_s * fs).round() as usize).max(1);
    let second = (fs.round() as usize).max(1);
    let required = (spec.lead_fraction * rec.lead_count() as f64).ceil() as usize;

    let mut votes = vec![0usize; n];
    for lead in rec.leads() {
        let e = derivative_energy(&lead.samples, width);
        let maxima: Vec<f64> = e
            .chunks(second)
            .map(|c| c.iter().cloned().fold(0.0, f64::max))
            .collect();
        let threshold = spec.threshold_factor * median(&maxima);
        if threshold <= 0.0 {
            continue;
        }
        for (v, ei) in votes.iter_mut().zip(&e) {
            if *ei > threshold {
                *v += 1;
            }
        }
    }

    let gap = (spec.merge_gap_s * fs).round() as usize;
    let pad = (spec.pad_s * fs).round() as usize;
    let mut windows: Vec<FlaggedWindow> = Vec::new();
    for (i, v) in votes.iter().enumerate() {
        if *v < required {
            continue;
        }
        let start = i.saturating_sub(pad);
        let end = (i + 1 + pad).min(n);
        match windows.last_mut() {
            Some(w) if start <= w.end + gap => w.end = w.end.max(end),
            _ => windows.push(FlaggedWindow { start, end }),
        }
    }
    Ok(windows)
}

/// Replaces each flagged window with the textbook beat, stretched to the
/// median RR of `r_peaks` outside the windows, phase-locked to the last
/// clean R peak before the window and scaled per lead to its median R
/// amplitude.
pub fn template_reconstruct(
    rec: &MultiLeadRecord,
    windows: &[FlaggedWindow],
    r_peaks: &[usize],
) -> Result<MultiLeadRecord> {
    if windows.is_empty() {
        return Ok(rec.clone());
    }
    let clean_peaks: Vec<usize> = r_peaks
        .iter()
        .copied()
        .filter(|&p| p < rec.len() && !windows.iter().any(|w| w.contains(p)))
        .collect();
    if clean_peaks.len() < 2 {
        return Err(Error::invalid(
            "template reconstruction needs at least two clean R peaks",
        ));
    }
    let rr: Vec<f64> = clean_peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    let period = median(&rr);
    let template = ideal_pqrst_template(rec.sample_rate_hz())?;
    let t_len = template.samples.len() as f64;
    let r_at = template.fiducials.r as f64;
    let sample_template = |pos: f64| {
        let p = pos.rem_euclid(t_len);
        let i = p.floor() as usize;
        let j = (i + 1) % template.samples.len();
        let f = p - i as f64;
        template.samples[i] * (1.0 - f) + template.samples[j] * f
    };
    rec.map_leads(rec.units(), |_, lead| {
        let x = &lead.samples;
        let scale = median(&clean_peaks.iter().map(|&p| x[p]).collect::<Vec<_>>());
        let mut y = x.clone();
        for w in windows {
            let anchor = clean_peaks
                .iter()
                .rev()
                .find(|&&p| p < w.start)
                .or(clean_peaks.first())
                .copied()
                .unwrap_or(0) as f64;
            for (i, v) in y.iter_mut().enumerate().take(w.end).skip(w.start) {
                let phase = (i as f64 - anchor).rem_euclid(period) / period;
                *v = scale * sample_template(r_at + phase * t_len);
            }
        }
        Ok(y)
    })
}
