//! Discrete Meyer wavelet shrinkage.
//!
//! The lowpass filter is sampled from the Meyer scaling spectrum, truncated
//! to an FIR of configurable even length and then nudged onto the
//! orthonormality manifold `Σ h[n] h[n+2k] = δ_k` by minimum-norm
//! Gauss–Newton steps, so the periodized transform reconstructs exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{median, MultiLeadRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    #[default]
    DiscreteMeyer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Hard,
    Soft,
    #[default]
    Improved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    /// Even FIR length of the Meyer approximation.
    pub filter_len: usize,
    pub levels: usize,
    pub rule: ThresholdRule,
    /// Shape of the improved rule; larger values approach hard thresholding.
    pub alpha: f64,
    /// Multiplier on the universal threshold. Zero disables shrinkage.
    pub threshold_scale: f64,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: WaveletFamily::DiscreteMeyer,
            filter_len: 62,
            levels: 5,
            rule: ThresholdRule::Improved,
            alpha: 1.0,
            threshold_scale: 1.0,
        }
    }
}

impl WaveletSpec {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::config("wavelet levels must be ≥ 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("improved-threshold alpha must be > 0"));
        }
        if !(self.threshold_scale >= 0.0) || !self.threshold_scale.is_finite() {
            return Err(Error::config("threshold scale must be finite and ≥ 0"));
        }
        if self.filter_len < 8 || self.filter_len % 2 == 1 {
            return Err(Error::config(format!(
                "filter length must be even and ≥ 8, got {}",
                self.filter_len
            )));
        }
        if self.levels >= usize::BITS as usize || len < (1usize << self.levels) {
            return Err(Error::invalid(format!(
                "{len} samples are too few for {} decomposition levels",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Meyer auxiliary polynomial ν on [0, 1].
fn nu(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
}

/// `φ̂(2ω)` for ω in [0, π].
fn half_band(w: f64) -> f64 {
    if w <= PI / 3.0 {
        1.0
    } else if w <= 2.0 * PI / 3.0 {
        (PI / 2.0 * nu(3.0 * w / PI - 1.0)).cos()
    } else {
        0.0
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Ideal Meyer lowpass taps `h[n]`, n centred on zero.
fn meyer_tap(n: i64) -> f64 {
    let nf = n as f64;
    let flat = if n == 0 {
        PI / 3.0
    } else {
        (nf * PI / 3.0).sin() / nf
    };
    let roll = simpson(
        |w| half_band(w) * (w * nf).cos(),
        PI / 3.0,
        2.0 * PI / 3.0,
        4096,
    );
    2f64.sqrt() / PI * (flat + roll)
}

/// Double-shift orthonormality residuals followed by the Nyquist gain.
fn constraint_residual(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    let mut c: Vec<f64> = (0..l / 2)
        .map(|k| {
            let s: f64 = (0..l - 2 * k).map(|n| h[n] * h[n + 2 * k]).sum();
            s - if k == 0 { 1.0 } else { 0.0 }
        })
        .collect();
    c.push(
        h.iter()
            .enumerate()
            .map(|(n, v)| if n % 2 == 0 { *v } else { -v })
            .sum(),
    );
    c
}

/// Orthonormal discrete Meyer lowpass of even length `len`: a leading zero
/// followed by the `len - 1` centred Meyer taps, corrected to exact
/// double-shift orthonormality with a zero at Nyquist.
pub fn dmey_lowpass(len: usize) -> Result<Vec<f64>> {
    if len < 8 || len % 2 == 1 {
        return Err(Error::config(format!(
            "filter length must be even and ≥ 8, got {len}"
        )));
    }
    let half = (len as i64 - 2) / 2;
    let mut h: Vec<f64> = std::iter::once(0.0)
        .chain((-half..=half).map(meyer_tap))
        .collect();

    let m = len / 2;
    for _ in 0..50 {
        let c = constraint_residual(&h);
        if c.iter().all(|v| v.abs() < 1e-15) {
            return Ok(h);
        }
        let jac = DMatrix::from_fn(m + 1, len, |k, j| {
            if k == m {
                return if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            let up = if j + 2 * k < len { h[j + 2 * k] } else { 0.0 };
            let down = if j >= 2 * k { h[j - 2 * k] } else { 0.0 };
            up + down
        });
        let jjt = &jac * jac.transpose();
        let rhs = DVector::from_vec(c);
        let y = jjt.lu().solve(&rhs).ok_or_else(|| {
            Error::Numeric("singular system while orthogonalizing Meyer filter".into())
        })?;
        let step = jac.transpose() * y;
        for (hj, sj) in h.iter_mut().zip(step.iter()) {
            *hj -= sj;
        }
    }
    let worst = constraint_residual(&h)
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if worst < 1e-13 {
        Ok(h)
    } else {
        Err(Error::Numeric(format!(
            "Meyer filter orthogonalization stalled at residual {worst:e}"
        )))
    }
}

/// Quadrature-mirror highpass `g[n] = (-1)^n h[L-1-n]`.
pub fn qmf_highpass(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|n| {
            if n % 2 == 0 {
                h[l - 1 - n]
            } else {
                -h[l - 1 - n]
            }
        })
        .collect()
}

/// One periodized analysis step. `x.len()` must be even.
fn analysis(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (j, (hj, gj)) in h.iter().zip(g).enumerate() {
            let xv = x[(2 * k + j) % n];
            sa += hj * xv;
            sd += gj * xv;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for (j, (hj, gj)) in h.iter().zip(g).enumerate() {
            x[(2 * k + j) % n] += hj * a[k] + gj * d[k];
        }
    }
    x
}

/// Multilevel coefficients: `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
}

/// Forward transform. Length must be a multiple of `2^levels`.
pub fn dwt(x: &[f64], h: &[f64], levels: usize) -> Result<WaveletCoeffs> {
    if levels == 0 || x.len() % (1 << levels) != 0 || x.is_empty() {
        return Err(Error::invalid(format!(
            "length {} is not a positive multiple of 2^{levels}",
            x.len()
        )));
    }
    let g = qmf_highpass(h);
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis(&approx, h, &g);
        details.push(d);
        approx = a;
    }
    Ok(WaveletCoeffs { approx, details })
}

pub fn idwt(c: &WaveletCoeffs, h: &[f64]) -> Vec<f64> {
    let g = qmf_highpass(h);
    let mut x = c.approx.clone();
    for d in c.details.iter().rev() {
        x = synthesis(&x, d, h, &g);
    }
    x
}

pub fn threshold(w: f64, tau: f64, rule: ThresholdRule, alpha: f64) -> f64 {
    if tau <= 0.0 {
        return w;
    }
    let a = w.abs();
    let shrunk = match rule {
        ThresholdRule::Hard => {
            if a > tau {
                a
            } else {
                0.0
            }
        }
        ThresholdRule::Soft => (a - tau).max(0.0),
        ThresholdRule::Improved => (a - tau * (alpha * (1.0 - a / tau)).exp()).max(0.0),
    };
    shrunk.copysign(w)
}

/// Extends `x` by half-sample reflection to a multiple of `block`.
fn reflect_pad(x: &[f64], block: usize) -> Vec<f64> {
    let n = x.len();
    let target = n.div_ceil(block) * block;
    let mut out = x.to_vec();
    let mut i = 0;
    while out.len() < target {
        // mirror back from the end, bouncing if the pad exceeds the signal
        let period = 2 * n;
        let p = i % period;
        let idx = if p < n { n - 1 - p } else { p - n };
        out.push(x[idx]);
        i += 1;
    }
    out
}

/// Denoises one channel. `noise_sigma` overrides the per-level MAD estimate.
pub fn denoise_samples(
    x: &[f64],
    spec: &WaveletSpec,
    h: &[f64],
    noise_sigma: Option<f64>,
) -> Result<Vec<f64>> {
    spec.validate(x.len())?;
    let padded = reflect_pad(x, 1 << spec.levels);
    let mut c = dwt(&padded, h, spec.levels)?;
    if spec.threshold_scale > 0.0 {
        let universal = (2.0 * (padded.len() as f64).ln()).sqrt();
        for d in c.details.iter_mut() {
            let sigma = match noise_sigma {
                Some(s) => s,
                None => median(&d.iter().map(|v| v.abs()).collect::<Vec<_>>()) / 0.6745,
            };
            let tau = sigma * universal * spec.threshold_scale;
            for w in d.iter_mut() {
                *w = threshold(*w, tau, spec.rule, spec.alpha);
            }
        }
    }
    let mut y = idwt(&c, h);
    y.truncate(x.len());
    Ok(y)
}

pub fn wavelet_denoise(
    rec: &MultiLeadRecord,
    spec: &WaveletSpec,
    noise_sigma: Option<f64>,
) -> Result<MultiLeadRecord> {
    spec.validate(rec.len())?;
    if let Some(s) = noise_sigma {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::invalid("noise estimate must be finite and ≥ 0"));
        }
    }
    let h = match spec.family {
        WaveletFamily::DiscreteMeyer => dmey_lowpass(spec.filter_len)?,
    };
    rec.par_map_leads(rec.units(), |_, lead| {
        denoise_samples(&lead.samples, spec, &h, noise_sigma)
    })
}
