//! Equiripple notch/bandpass design against a ripple/attenuation spec, and
//! per-lead FIR application (causal or forward–backward zero-phase).

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::remez::{magnitude_at, remez, Band};
use crate::error::{Error, Result};
use crate::record::MultiLeadRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirKind {
    /// Stopband between the two edges, passbands on either side.
    Notch,
    /// Passband between the two edges. A stopband below the passband exists
    /// only if `band_hz.0 - transition_hz > 0`.
    Bandpass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirDesignSpec {
    pub kind: FirKind,
    pub sample_rate_hz: f64,
    /// Stopband (notch) or passband (bandpass) edges in Hz.
    pub band_hz: (f64, f64),
    pub transition_hz: f64,
    pub passband_ripple_db: f64,
    pub stopband_atten_db: f64,
    pub max_taps: usize,
}

impl FirDesignSpec {
    /// 48–52 Hz notch, ≥ 40 dB, 0.1 dB ripple.
    pub fn default_notch(sample_rate_hz: f64) -> Self {
        Self::notch(sample_rate_hz, 50.0)
    }

    pub fn notch(sample_rate_hz: f64, center_hz: f64) -> Self {
        Self {
            kind: FirKind::Notch,
            sample_rate_hz,
            band_hz: (center_hz - 2.0, center_hz + 2.0),
            transition_hz: 5.0,
            passband_ripple_db: 0.1,
            stopband_atten_db: 40.0,
            max_taps: 1201,
        }
    }

    /// Instrument band 0.05–150 Hz.
    pub fn default_bandpass(sample_rate_hz: f64) -> Self {
        Self {
            kind: FirKind::Bandpass,
            sample_rate_hz,
            band_hz: (0.05, 150.0),
            transition_hz: 20.0,
            passband_ripple_db: 0.1,
            stopband_atten_db: 40.0,
            max_taps: 1201,
        }
    }

    fn nyquist(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band_hz;
        let nyq = self.nyquist();
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Design("sample rate must be positive".into()));
        }
        if !(0.0 < lo && lo < hi && hi < nyq) {
            return Err(Error::Design(format!(
                "edges must satisfy 0 < {lo} < {hi} < Nyquist {nyq}"
            )));
        }
        if !(self.transition_hz > 0.0) {
            return Err(Error::Design("transition width must be positive".into()));
        }
        if !(self.stopband_atten_db > 0.0) {
            return Err(Error::Design(
                "stopband attenuation must be positive".into(),
            ));
        }
        if !(self.passband_ripple_db > 0.0) {
            return Err(Error::Design("passband ripple must be positive".into()));
        }
        if self.kind == FirKind::Notch
            && (lo - self.transition_hz <= 0.0 || hi + self.transition_hz >= nyq)
        {
            return Err(Error::Design(
                "notch transition bands leave no passband".into(),
            ));
        }
        if self.kind == FirKind::Bandpass
            && lo - self.transition_hz <= 0.0
            && hi + self.transition_hz >= nyq
        {
            return Err(Error::Design("bandpass has no stopband".into()));
        }
        Ok(())
    }

    fn pass_deviation(&self) -> f64 {
        let g = 10f64.powf(self.passband_ripple_db / 20.0);
        (g - 1.0) / (g + 1.0)
    }

    fn stop_deviation(&self) -> f64 {
        10f64.powf(-self.stopband_atten_db / 20.0)
    }

    /// Passbands and stopbands in Hz as (lo, hi, is_pass).
    pub fn bands_hz(&self) -> Vec<(f64, f64, bool)> {
        let (lo, hi) = self.band_hz;
        let tw = self.transition_hz;
        let nyq = self.nyquist();
        match self.kind {
            FirKind::Notch => vec![(0.0, lo - tw, true), (lo, hi, false), (hi + tw, nyq, true)],
            FirKind::Bandpass => {
                let mut b = Vec::new();
                if lo - tw > 0.0 {
                    b.push((0.0, lo - tw, false));
                    b.push((lo, hi, true));
                } else {
                    // Lower edge sits below the achievable resolution; the
                    // passband is DC-coupled.
                    b.push((0.0, hi, true));
                }
                if hi + tw < nyq {
                    b.push((hi + tw, nyq, false));
                }
                b
            }
        }
    }

    pub fn remez_bands(&self) -> Vec<Band> {
        let w_stop = self.pass_deviation() / self.stop_deviation();
        self.bands_hz()
            .into_iter()
            .map(|(lo, hi, pass)| Band {
                lo: lo / self.sample_rate_hz,
                hi: hi / self.sample_rate_hz,
                desired: if pass { 1.0 } else { 0.0 },
                weight: if pass { 1.0 } else { w_stop },
            })
            .collect()
    }

    /// Kaiser's length estimate for the narrowest transition.
    pub fn estimated_taps(&self) -> usize {
        let dp = self.pass_deviation();
        let ds = self.stop_deviation();
        let df = self.transition_hz / self.sample_rate_hz;
        let n = ((-20.0 * (dp * ds).sqrt().log10() - 13.0) / (14.6 * df)).ceil() as usize + 1;
        (n.max(3)) | 1
    }
}

/// Measured response of a designed filter, evaluated on a dense DFT grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseCheck {
    pub passband_ripple_db: f64,
    pub min_stopband_atten_db: f64,
}

pub fn measure_response(taps: &[f64], spec: &FirDesignSpec) -> ResponseCheck {
    const POINTS_PER_HZ: f64 = 8.0;
    let mut pass_min = f64::INFINITY;
    let mut pass_max: f64 = 0.0;
    let mut stop_max: f64 = 0.0;
    for (lo, hi, pass) in spec.bands_hz() {
        let count = (((hi - lo) * POINTS_PER_HZ).ceil() as usize).max(16);
        for k in 0..=count {
            let f = lo + (hi - lo) * k as f64 / count as f64;
            let m = magnitude_at(taps, f / spec.sample_rate_hz);
            if pass {
                pass_min = pass_min.min(m);
                pass_max = pass_max.max(m);
            } else {
                stop_max = stop_max.max(m);
            }
        }
    }
    ResponseCheck {
        passband_ripple_db: 20.0 * (pass_max / pass_min).log10(),
        min_stopband_atten_db: -20.0 * stop_max.max(1e-300).log10(),
    }
}

/// Designs the shortest odd-length equiripple filter (searching upward from
/// the Kaiser estimate) whose measured response meets the spec.
pub fn design_equiripple(spec: &FirDesignSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let bands = spec.remez_bands();
    let mut taps = spec.estimated_taps();
    if taps > spec.max_taps {
        return Err(Error::Design(format!(
            "estimated length {taps} exceeds max_taps {} (transition {} Hz too narrow for {} dB)",
            spec.max_taps, spec.transition_hz, spec.stopband_atten_db
        )));
    }
    let mut last = None;
    while taps <= spec.max_taps {
        let design = remez(taps, &bands)?;
        let check = measure_response(&design.taps, spec);
        if check.passband_ripple_db <= spec.passband_ripple_db
            && check.min_stopband_atten_db >= spec.stopband_atten_db
        {
            return Ok(design.taps);
        }
        last = Some(check);
        taps += 2 * (taps / 40).max(1);
    }
    let check = last.expect("loop ran at least once");
    let violated = if check.passband_ripple_db > spec.passband_ripple_db {
        format!(
            "passband ripple {:.3} dB > {} dB",
            check.passband_ripple_db, spec.passband_ripple_db
        )
    } else {
        format!(
            "stopband attenuation {:.1} dB < {} dB",
            check.min_stopband_atten_db, spec.stopband_atten_db
        )
    };
    Err(Error::Design(format!(
        "no design within {} taps: {violated}",
        spec.max_taps
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Causal,
    #[default]
    ZeroPhase,
}

const DIRECT_LIMIT: usize = 48;

/// Full linear convolution truncated to the input length (zero initial state).
fn convolve(x: &[f64], h: &[f64], fft: Option<&FftPair>) -> Vec<f64> {
    let n = x.len();
    match fft {
        None => {
            let mut y = vec![0.0; n];
            for (i, yi) in y.iter_mut().enumerate() {
                let kmax = h.len().min(i + 1);
                let mut acc = 0.0;
                for (k, hk) in h.iter().enumerate().take(kmax) {
                    acc += hk * x[i - k];
                }
                *yi = acc;
            }
            y
        }
        Some(p) => p.convolve(x, h),
    }
}

struct FftPair {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    fn convolve(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut a: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.size];
        let mut b = a.clone();
        for (ai, xi) in a.iter_mut().zip(x) {
            ai.re = *xi;
        }
        for (bi, hi) in b.iter_mut().zip(h) {
            bi.re = *hi;
        }
        self.forward.process(&mut a);
        self.forward.process(&mut b);
        for (ai, bi) in a.iter_mut().zip(&b) {
            *ai *= bi;
        }
        self.inverse.process(&mut a);
        let scale = 1.0 / self.size as f64;
        a[..x.len()].iter().map(|c| c.re * scale).collect()
    }
}

/// Filters one channel. Zero-phase mode pads both ends by odd reflection,
/// runs the filter forward and backward, and trims the padding.
pub fn filter_samples(x: &[f64], taps: &[f64], mode: FilterMode) -> Result<Vec<f64>> {
    let n = x.len();
    if taps.is_empty() {
        return Err(Error::invalid("empty filter"));
    }
    if n <= taps.len() {
        return Err(Error::invalid(format!(
            "record of {n} samples is not longer than the {}-tap filter",
            taps.len()
        )));
    }
    match mode {
        FilterMode::Causal => {
            let fft = (taps.len() > DIRECT_LIMIT)
                .then(|| FftPair::new((n + taps.len()).next_power_of_two()));
            Ok(convolve(x, taps, fft.as_ref()))
        }
        FilterMode::ZeroPhase => {
            let pad = (3 * taps.len()).min(n - 1);
            let mut ext = Vec::with_capacity(n + 2 * pad);
            for k in (1..=pad).rev() {
                ext.push(2.0 * x[0] - x[k]);
            }
            ext.extend_from_slice(x);
            for k in 1..=pad {
                ext.push(2.0 * x[n - 1] - x[n - 1 - k]);
            }
            let fft = (taps.len() > DIRECT_LIMIT)
                .then(|| FftPair::new((ext.len() + taps.len()).next_power_of_two()));
            let mut y = convolve(&ext, taps, fft.as_ref());
            y.reverse();
            let mut z = convolve(&y, taps, fft.as_ref());
            z.reverse();
            Ok(z[pad..pad + n].to_vec())
        }
    }
}

pub fn apply_fir(rec: &MultiLeadRecord, taps: &[f64], mode: FilterMode) -> Result<MultiLeadRecord> {
    rec.par_map_leads(rec.units(), |_, lead| {
        filter_samples(&lead.samples, taps, mode)
    })
}
