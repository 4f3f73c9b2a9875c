//! Normalized LMS cancellation of motion noise with the three accelerometer
//! axes as reference inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::AccelStream;
use crate::record::MultiLeadRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveSpec {
    /// Taps per accelerometer axis.
    pub order: usize,
    pub mu: f64,
    pub epsilon: f64,
    /// Zero the weights and stop adapting while the lead sits on a flat
    /// (clipped) run of at least `saturation_run` samples.
    pub reset_on_saturation: bool,
    pub saturation_run: usize,
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        Self {
            order: 4,
            mu: 0.05,
            epsilon: 1.0,
            reset_on_saturation: true,
            saturation_run: 8,
        }
    }
}

impl AdaptiveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return Err(Error::config(format!(
                "NLMS step size {} outside the stable range (0, 2)",
                self.mu
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("NLMS regularization must be > 0"));
        }
        if self.order < 1 {
            return Err(Error::config("NLMS order must be ≥ 1"));
        }
        if self.saturation_run < 2 {
            return Err(Error::config("saturation run must be ≥ 2 samples"));
        }
        Ok(())
    }
}

/// Runs one lead through the canceller and returns the error signal.
pub fn nlms_cancel(x: &[f64], reference: &[[f64; 3]], spec: &AdaptiveSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let p = spec.order;
    let taps = 3 * p;
    let mut w = vec![0.0; taps];
    let mut u = vec![0.0; taps];
    let mut out = Vec::with_capacity(x.len());
    let mut flat = 1usize;
    for (n, &xn) in x.iter().enumerate() {
        // Delay line, axis-major: u[a*p + k] = accel[n-k][a].
        let now = reference.get(n).copied().unwrap_or([0.0; 3]);
        for a in 0..3 {
            let row = &mut u[a * p..(a + 1) * p];
            row.rotate_right(1);
            row[0] = now[a];
        }
        if n > 0 && xn == x[n - 1] {
            flat += 1;
        } else {
            flat = 1;
        }
        if spec.reset_on_saturation && flat >= spec.saturation_run {
            w.iter_mut().for_each(|v| *v = 0.0);
            out.push(xn);
            continue;
        }
        let y: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
        let e = xn - y;
        let norm: f64 = u.iter().map(|v| v * v).sum();
        let g = spec.mu * e / (spec.epsilon + norm);
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi += g * ui;
        }
        out.push(e);
    }
    Ok(out)
}

pub fn adaptive_cancel(
    rec: &MultiLeadRecord,
    accel: &AccelStream,
    spec: &AdaptiveSpec,
) -> Result<MultiLeadRecord> {
    spec.validate()?;
    accel.check_aligned(rec)?;
    rec.par_map_leads(rec.units(), |_, lead| {
        nlms_cancel(&lead.samples, &accel.samples, spec)
    })
}
