//! FFT helpers: analytic signal and instantaneous frequency.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::rng::Rng;

/// Analytic signal `x + i·H{x}` via the one-sided spectrum.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= gain / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Unwrapped phase advance of the analytic signal divided by 2π·duration.
pub fn mean_instantaneous_frequency(x: &[f64], sample_rate_hz: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let z = analytic_signal(x);
    let mut total = 0.0;
    for w in z.windows(2) {
        // principal angle of z[k+1]·conj(z[k])
        total += (w[1] * w[0].conj()).arg();
    }
    let duration = (x.len() - 1) as f64 / sample_rate_hz;
    (total / (2.0 * PI * duration)).abs()
}

/// Gaussian noise restricted (periodically, by an ideal FFT mask) to
/// `[lo_hz, hi_hz]` and scaled to unit RMS. Returns zeros if the band holds
/// no FFT bin.
pub fn band_limited_gaussian(
    n: usize,
    sample_rate_hz: f64,
    lo_hz: f64,
    hi_hz: f64,
    rng: &mut Rng,
) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut *rng), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = sample_rate_hz / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f < lo_hz || f > hi_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms == 0.0 {
        return out;
    }
    out.into_iter().map(|v| v / rms).collect()
}

/// Power in `[lo_hz, hi_hz]` from the raw periodogram.
pub fn band_power(x: &[f64], sample_rate_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = sample_rate_hz / n as f64;
    buf.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = (*k).min(n - k) as f64 * df;
            f >= lo_hz && f <= hi_hz
        })
        .map(|(_, c)| c.norm_sqr())
        .sum::<f64>()
        / (n as f64 * n as f64)
}
