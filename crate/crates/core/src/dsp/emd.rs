//! Empirical mode decomposition by envelope sifting, and baseline removal
//! from its slow modes.

use serde::{Deserialize, Serialize};

use super::spectral::mean_instantaneous_frequency;
use crate::error::{Error, Result};
use crate::record::MultiLeadRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl Decomposition {
    /// Sum of all IMFs and the residue.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Reflect the two outermost extrema of each kind about the end samples.
    #[default]
    Mirror,
    /// Pin both envelopes to the end samples.
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmdSpec {
    pub max_imfs: usize,
    pub sd_threshold: f64,
    pub max_sifts: usize,
    pub boundary: BoundaryPolicy,
    /// IMFs with mean instantaneous frequency below this join the baseline.
    pub baseline_cutoff_hz: f64,
}

impl Default for EmdSpec {
    fn default() -> Self {
        Self {
            max_imfs: 12,
            sd_threshold: 0.3,
            max_sifts: 50,
            boundary: BoundaryPolicy::Mirror,
            baseline_cutoff_hz: 0.7,
        }
    }
}

impl EmdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd_threshold > 0.0 && self.sd_threshold < 1.0) {
            return Err(Error::config(format!(
                "SD threshold must lie in (0, 1), got {}",
                self.sd_threshold
            )));
        }
        if self.max_imfs < 1 {
            return Err(Error::config("max IMFs must be ≥ 1"));
        }
        if self.max_sifts < 1 {
            return Err(Error::config("max sifts must be ≥ 1"));
        }
        if !(self.baseline_cutoff_hz > 0.0) {
            return Err(Error::config("baseline cutoff must be positive"));
        }
        Ok(())
    }
}

struct Extrema {
    maxima: Vec<usize>,
    minima: Vec<usize>,
}

fn find_extrema(x: &[f64]) -> Extrema {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        // plateaus count once, at their centre
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let mid = (i + j) / 2;
        if x[i] > x[i - 1] && x[i] > x[j + 1] {
            maxima.push(mid);
        } else if x[i] < x[i - 1] && x[i] < x[j + 1] {
            minima.push(mid);
        }
        i = j + 1;
    }
    Extrema { maxima, minima }
}

/// Natural cubic spline through `(xs, ys)` evaluated at `0..n`.
fn natural_spline(xs: &[f64], ys: &[f64], n: usize) -> Vec<f64> {
    let m = xs.len();
    if m == 2 {
        let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return (0..n).map(|t| ys[0] + slope * (t as f64 - xs[0])).collect();
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives via the tridiagonal system, ends fixed at zero.
    let mut c = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 1..m - 1 {
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    for i in 2..m - 1 {
        let w = h[i - 1] / diag[i - 1];
        diag[i] -= w * h[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (1..m - 1).rev() {
        let upper = if i + 1 < m - 1 { h[i] * c[i + 1] } else { 0.0 };
        c[i] = (rhs[i] - upper) / diag[i];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        let tf = t as f64;
        while seg + 2 < m && tf > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let hh = x1 - x0;
        let a = (x1 - tf) / hh;
        let b = (tf - x0) / hh;
        out.push(
            a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * c[seg] + (b * b * b - b) * c[seg + 1]) * hh * hh / 6.0,
        );
    }
    out
}

fn envelope(x: &[f64], idx: &[usize], policy: BoundaryPolicy) -> Vec<f64> {
    let n = x.len();
    let last = (n - 1) as f64;
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(idx.len() + 4);
    match policy {
        BoundaryPolicy::Mirror => {
            for &i in idx.iter().take(2).rev() {
                knots.push((-(i as f64), x[i]));
            }
            knots.extend(idx.iter().map(|&i| (i as f64, x[i])));
            for &i in idx.iter().rev().take(2) {
                knots.push((2.0 * last - i as f64, x[i]));
            }
        }
        BoundaryPolicy::Endpoint => {
            knots.push((0.0, x[0]));
            knots.extend(
                idx.iter()
                    .filter(|&&i| i != 0 && i != n - 1)
                    .map(|&i| (i as f64, x[i])),
            );
            knots.push((last, x[n - 1]));
        }
    }
    knots.dedup_by(|b, a| b.0 == a.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    natural_spline(&xs, &ys, n)
}

fn is_monotonic_enough(e: &Extrema) -> bool {
    e.maxima.len() + e.minima.len() < 3 || e.maxima.is_empty() || e.minima.is_empty()
}

/// Full decomposition. Returns `EmdNonConvergence` with the IMFs found so
/// far (and the current remainder as residue) if sifting stalls.
pub fn emd(x: &[f64], spec: &EmdSpec) -> Result<Decomposition> {
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("EMD input must be finite"));
    }
    let n = x.len();
    let mut residue = x.to_vec();
    let mut imfs: Vec<Vec<f64>> = Vec::new();
    if n < 4 {
        return Ok(Decomposition { imfs, residue });
    }
    while imfs.len() < spec.max_imfs {
        if is_monotonic_enough(&find_extrema(&residue)) {
            break;
        }
        let mut h = residue.clone();
        let mut sifts = 0;
        loop {
            let ext = find_extrema(&h);
            if is_monotonic_enough(&ext) {
                break;
            }
            if sifts == spec.max_sifts {
                return Err(Error::EmdNonConvergence {
                    imf_index: imfs.len(),
                    sifts,
                    partial: Box::new(Decomposition { imfs, residue }),
                });
            }
            let upper = envelope(&h, &ext.maxima, spec.boundary);
            let lower = envelope(&h, &ext.minima, spec.boundary);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let mean = 0.5 * (upper[i] + lower[i]);
                num += mean * mean;
                den += h[i] * h[i];
                h[i] -= mean;
            }
            sifts += 1;
            if den == 0.0 || num / den < spec.sd_threshold {
                break;
            }
        }
        for (r, v) in residue.iter_mut().zip(&h) {
            *r -= v;
        }
        imfs.push(h);
    }
    Ok(Decomposition { imfs, residue })
}

/// Per-lead result of baseline removal.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSplit {
    pub corrected: Vec<f64>,
    pub baseline: Vec<f64>,
}

pub fn split_baseline(x: &[f64], sample_rate_hz: f64, spec: &EmdSpec) -> Result<BaselineSplit> {
    spec.validate()?;
    if let Some(&first) = x.first() {
        if x.iter().all(|&v| v == first) {
            return Ok(BaselineSplit {
                corrected: vec![0.0; x.len()],
                baseline: x.to_vec(),
            });
        }
    }
    let d = emd(x, spec)?;
    let mut baseline = d.residue.clone();
    for imf in &d.imfs {
        if mean_instantaneous_frequency(imf, sample_rate_hz) < spec.baseline_cutoff_hz {
            for (b, v) in baseline.iter_mut().zip(imf) {
                *b += v;
            }
        }
    }
    let corrected = x.iter().zip(&baseline).map(|(v, b)| v - b).collect();
    Ok(BaselineSplit {
        corrected,
        baseline,
    })
}

/// Returns `(rec − baseline, baseline)`.
pub fn emd_baseline_remove(
    rec: &MultiLeadRecord,
    spec: &EmdSpec,
) -> Result<(MultiLeadRecord, MultiLeadRecord)> {
    use rayon::prelude::*;
    spec.validate()?;
    let fs = rec.sample_rate_hz();
    let splits: Result<Vec<BaselineSplit>> = rec
        .leads()
        .par_iter()
        .map(|lead| split_baseline(&lead.samples, fs, spec))
        .collect();
    let splits = splits?;
    let corrected = rec.map_leads(rec.units(), |i, _| Ok(splits[i].corrected.clone()))?;
    let baseline = rec.map_leads(rec.units(), |i, _| Ok(splits[i].baseline.clone()))?;
    Ok((corrected, baseline))
}
