//! Multi-channel sample carrier shared by every stage, plus the event log
//! that travels alongside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[serde(rename = "mV")]
    Millivolts,
    Counts,
}

impl Units {
    pub fn as_str(self) -> &'static str {
        match self {
            Units::Millivolts => "mV",
            Units::Counts => "counts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    pub label: String,
    pub samples: Vec<f64>,
}

/// Uniformly sampled multi-lead signal. Lead order is significant and
/// preserved by every operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLeadRecord {
    sample_rate_hz: f64,
    t0_s: f64,
    units: Units,
    leads: Vec<Lead>,
}

impl MultiLeadRecord {
    pub fn new(sample_rate_hz: f64, units: Units, leads: Vec<Lead>) -> Result<Self> {
        Self::with_start(sample_rate_hz, 0.0, units, leads)
    }

    pub fn with_start(
        sample_rate_hz: f64,
        t0_s: f64,
        units: Units,
        leads: Vec<Lead>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !t0_s.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        if let Some(first) = leads.first() {
            let n = first.samples.len();
            for lead in &leads {
                if lead.samples.len() != n {
                    return Err(Error::invalid(format!(
                        "lead {} has {} samples, expected {n}",
                        lead.label,
                        lead.samples.len()
                    )));
                }
                if lead.samples.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "lead {} contains non-finite samples",
                        lead.label
                    )));
                }
            }
        }
        for (i, a) in leads.iter().enumerate() {
            if leads[..i].iter().any(|b| b.label == a.label) {
                return Err(Error::invalid(format!("duplicate lead label {}", a.label)));
            }
        }
        Ok(Self {
            sample_rate_hz,
            t0_s,
            units,
            leads,
        })
    }

    /// Builds a record from `(label, samples)` pairs.
    pub fn from_columns<S: Into<String>>(
        sample_rate_hz: f64,
        units: Units,
        columns: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self> {
        let leads = columns
            .into_iter()
            .map(|(label, samples)| Lead {
                label: label.into(),
                samples,
            })
            .collect();
        Self::new(sample_rate_hz, units, leads)
    }

    pub fn zeros(sample_rate_hz: f64, units: Units, labels: &[&str], len: usize) -> Result<Self> {
        Self::from_columns(
            sample_rate_hz,
            units,
            labels.iter().map(|l| (*l, vec![0.0; len])),
        )
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn len(&self) -> usize {
        self.leads.first().map_or(0, |l| l.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0 || self.leads.is_empty()
    }

    pub fn lead_count(&self) -> usize {
        self.leads.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn leads(&self) -> &[Lead] {
        &self.leads
    }

    pub fn labels(&self) -> Vec<&str> {
        self.leads.iter().map(|l| l.label.as_str()).collect()
    }

    pub fn lead(&self, label: &str) -> Result<&[f64]> {
        self.leads
            .iter()
            .find(|l| l.label == label)
            .map(|l| l.samples.as_slice())
            .ok_or_else(|| Error::UnknownLead(label.to_string()))
    }

    pub fn lead_index(&self, label: &str) -> Option<usize> {
        self.leads.iter().position(|l| l.label == label)
    }

    pub fn require_units(&self, units: Units) -> Result<()> {
        if self.units != units {
            return Err(Error::UnitMismatch {
                expected: units.as_str(),
                found: self.units.as_str(),
            });
        }
        Ok(())
    }

    /// Applies `f` to every lead, keeping rate, start time and labels.
    pub fn map_leads<F>(&self, units: Units, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &Lead) -> Result<Vec<f64>>,
    {
        let mut leads = Vec::with_capacity(self.leads.len());
        for (i, lead) in self.leads.iter().enumerate() {
            leads.push(Lead {
                label: lead.label.clone(),
                samples: f(i, lead)?,
            });
        }
        Self::with_start(self.sample_rate_hz, self.t0_s, units, leads)
    }

    /// Parallel per-lead map. Results are collected in lead order.
    pub fn par_map_leads<F>(&self, units: Units, f: F) -> Result<Self>
    where
        F: Fn(usize, &Lead) -> Result<Vec<f64>> + Sync + Send,
    {
        use rayon::prelude::*;
        let columns: Result<Vec<Vec<f64>>> = self
            .leads
            .par_iter()
            .enumerate()
            .map(|(i, lead)| f(i, lead))
            .collect();
        let leads = self
            .leads
            .iter()
            .zip(columns?)
            .map(|(l, samples)| Lead {
                label: l.label.clone(),
                samples,
            })
            .collect();
        Self::with_start(self.sample_rate_hz, self.t0_s, units, leads)
    }

    /// Elementwise `self + other`; both records must share shape, labels and units.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        self.map_leads(self.units, |i, lead| {
            Ok(lead
                .samples
                .iter()
                .zip(&other.leads[i].samples)
                .map(|(a, b)| a + b)
                .collect())
        })
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        self.map_leads(self.units, |i, lead| {
            Ok(lead
                .samples
                .iter()
                .zip(&other.leads[i].samples)
                .map(|(a, b)| a - b)
                .collect())
        })
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map_leads(self.units, |_, lead| {
            Ok(lead.samples.iter().map(|v| v * factor).collect())
        })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.units != other.units {
            return Err(Error::UnitMismatch {
                expected: self.units.as_str(),
                found: other.units.as_str(),
            });
        }
        if self.len() != other.len() || self.lead_count() != other.lead_count() {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.lead_count(),
                self.len(),
                other.lead_count(),
                other.len()
            )));
        }
        for (a, b) in self.leads.iter().zip(&other.leads) {
            if a.label != b.label {
                return Err(Error::invalid(format!(
                    "lead order mismatch: {} vs {}",
                    a.label, b.label
                )));
            }
        }
        Ok(())
    }

    /// Sum of squares over every lead and sample.
    pub fn energy(&self) -> f64 {
        self.leads
            .iter()
            .flat_map(|l| l.samples.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    /// Keeps the listed leads, in the given order.
    pub fn select(&self, labels: &[&str]) -> Result<Self> {
        let mut leads = Vec::with_capacity(labels.len());
        for label in labels {
            leads.push(Lead {
                label: label.to_string(),
                samples: self.lead(label)?.to_vec(),
            });
        }
        Self::with_start(self.sample_rate_hz, self.t0_s, self.units, leads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Powerline,
    Emg,
    BaselineWander,
    Microslip,
    CommonMode,
    Microphonic,
    Motion,
    Saturation,
    Discharge,
    DetectedArtifact,
}

/// One timestamped event. `lead` is `None` for events that apply to every lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    pub kind: EventKind,
    pub lead: Option<String>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn extend(&mut self, other: EventLog) {
        self.events.extend(other.events);
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Stable ordering by (start sample, lead order, kind).
    pub fn sort_by_lead_order(&mut self, labels: &[&str]) {
        let rank = |lead: &Option<String>| match lead {
            None => 0,
            Some(l) => 1 + labels.iter().position(|x| x == l).unwrap_or(labels.len()),
        };
        self.events.sort_by(|a, b| {
            (a.start, rank(&a.lead), a.kind).cmp(&(b.start, rank(&b.lead), b.kind))
        });
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Pearson correlation; 0 when either side has no variance.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let (ma, mb) = (mean(&a[..n]), mean(&b[..n]));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Linear-interpolated percentile (`p` in [0, 100]) of an unsorted slice.
pub(crate) fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (p.clamp(0.0, 100.0) / 100.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    percentile(xs, 50.0)
}
