//! Interference injectors with ground truth: powerline, EMG, baseline
//! wander and motion events, plus the accelerometer stream that motion
//! produces.
//!
//! Every injector is additive. It returns the corrupted record, the exact
//! component it added, and the events it logged.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::spectral::band_limited_gaussian;
use crate::error::{Error, Result};
use crate::record::{Event, EventKind, EventLog, MultiLeadRecord, Units};
use crate::rng::{derive, derive_indexed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerlineSpec {
    pub freq_hz: f64,
    pub amplitude_mv: f64,
    /// Drawn from the seed when absent.
    pub phase_rad: Option<f64>,
}

impl Default for PowerlineSpec {
    fn default() -> Self {
        Self {
            freq_hz: 50.0,
            amplitude_mv: 0.0,
            phase_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgSpec {
    pub band_hz: (f64, f64),
    pub rms_mv: f64,
}

impl Default for EmgSpec {
    fn default() -> Self {
        Self {
            band_hz: (20.0, 300.0),
            rms_mv: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WanderComponent {
    pub freq_hz: f64,
    pub amplitude_mv: f64,
}

pub const MAX_WANDER_HZ: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MicrophonicBurst {
    pub band_hz: (f64, f64),
    pub rms_mv: f64,
}

impl Default for MicrophonicBurst {
    fn default() -> Self {
        Self {
            band_hz: (1.0, 10.0),
            rms_mv: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionEvent {
    pub onset_s: f64,
    pub duration_s: f64,
    /// Persistent polarization step on each affected lead.
    pub microslip_step_mv: f64,
    /// Transient applied identically to every lead.
    pub common_mode_mv: f64,
    pub cable_microphonic: MicrophonicBurst,
    pub affected_leads: Vec<String>,
    /// Peak acceleration of the half-sine signature.
    pub accel_peak_g: f64,
}

impl Default for MotionEvent {
    fn default() -> Self {
        Self {
            onset_s: 0.0,
            duration_s: 1.0,
            microslip_step_mv: 0.0,
            common_mode_mv: 0.0,
            cable_microphonic: MicrophonicBurst::default(),
            affected_leads: Vec::new(),
            accel_peak_g: 0.5,
        }
    }
}

impl MotionEvent {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::invalid("motion event duration must be positive"));
        }
        for (name, v) in [
            ("microslip step", self.microslip_step_mv),
            ("common-mode amplitude", self.common_mode_mv),
            ("onset", self.onset_s),
            ("accelerometer peak", self.accel_peak_g),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if !(self.cable_microphonic.rms_mv >= 0.0) || !(self.accel_peak_g >= 0.0) {
            return Err(Error::invalid(
                "microphonic RMS and accelerometer peak must be ≥ 0",
            ));
        }
        let (lo, hi) = self.cable_microphonic.band_hz;
        if !(0.0 <= lo && lo < hi) {
            return Err(Error::invalid("microphonic band must be increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub powerline: PowerlineSpec,
    pub emg: EmgSpec,
    pub baseline: Vec<WanderComponent>,
    pub motion_events: Vec<MotionEvent>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let nyq = sample_rate_hz / 2.0;
        if !(self.powerline.amplitude_mv >= 0.0) || !(self.emg.rms_mv >= 0.0) {
            return Err(Error::config("noise amplitudes must be ≥ 0"));
        }
        if self.powerline.amplitude_mv > 0.0
            && !(self.powerline.freq_hz > 0.0 && self.powerline.freq_hz < nyq)
        {
            return Err(Error::config(format!(
                "powerline frequency must lie in (0, {nyq}) Hz"
            )));
        }
        if self.emg.rms_mv > 0.0 {
            check_emg_band(self.emg.band_hz, sample_rate_hz).map_err(Error::as_config)?;
        }
        for c in &self.baseline {
            check_wander(c).map_err(Error::as_config)?;
        }
        for ev in &self.motion_events {
            ev.validate().map_err(Error::as_config)?;
        }
        Ok(())
    }

    /// Preset names understood by [`NoiseSpec::preset`].
    pub const PRESETS: [&'static str; 3] = ["none", "resting", "rest-to-motion"];

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "none" => Ok(NoiseSpec {
                seed,
                ..Default::default()
            }),
            "resting" => Ok(resting(seed)),
            "rest-to-motion" => Ok(rest_to_motion(seed)),
            other => Err(Error::config(format!("unknown noise preset `{other}`"))),
        }
    }
}

/// Tri-axial accelerometer samples in g on the record timebase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelStream {
    pub sample_rate_hz: f64,
    pub samples: Vec<[f64; 3]>,
}

impl AccelStream {
    pub fn zeros(sample_rate_hz: f64, len: usize) -> Self {
        Self {
            sample_rate_hz,
            samples: vec![[0.0; 3]; len],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn add_assign(&mut self, other: &AccelStream) -> Result<()> {
        if self.len() != other.len() || self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid(
                "accelerometer streams differ in rate or length",
            ));
        }
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        Ok(())
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        let s = self.samples[i];
        (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
    }

    /// Checks the stream matches `rec`'s rate and lasts as long within one sample.
    pub fn check_aligned(&self, rec: &MultiLeadRecord) -> Result<()> {
        if self.sample_rate_hz != rec.sample_rate_hz() {
            return Err(Error::invalid(format!(
                "accelerometer at {} Hz, record at {} Hz; resample first",
                self.sample_rate_hz,
                rec.sample_rate_hz()
            )));
        }
        if self.len().abs_diff(rec.len()) > 1 {
            return Err(Error::invalid(format!(
                "accelerometer has {} samples, record {}",
                self.len(),
                rec.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub record: MultiLeadRecord,
    /// Exactly what was added.
    pub component: MultiLeadRecord,
    pub events: EventLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionInjection {
    pub record: MultiLeadRecord,
    pub component: MultiLeadRecord,
    pub accel: AccelStream,
    pub events: EventLog,
}

fn injection(
    rec: &MultiLeadRecord,
    component: MultiLeadRecord,
    events: EventLog,
) -> Result<Injection> {
    Ok(Injection {
        record: rec.add(&component)?,
        component,
        events,
    })
}

fn whole_record_event(
    rec: &MultiLeadRecord,
    kind: EventKind,
    lead: Option<String>,
    magnitude: f64,
) -> Event {
    Event {
        start: 0,
        end: rec.len(),
        kind,
        lead,
        magnitude,
    }
}

/// Common-mode sinusoid, same phase on every lead.
pub fn add_powerline(rec: &MultiLeadRecord, spec: &PowerlineSpec, seed: u64) -> Result<Injection> {
    rec.require_units(Units::Millivolts)?;
    let nyq = rec.sample_rate_hz() / 2.0;
    if !(spec.freq_hz > 0.0 && spec.freq_hz < nyq) {
        return Err(Error::invalid(format!(
            "powerline {} Hz is not below Nyquist {nyq} Hz",
            spec.freq_hz
        )));
    }
    if !(spec.amplitude_mv >= 0.0) {
        return Err(Error::invalid("powerline amplitude must be ≥ 0"));
    }
    let phase = spec
        .phase_rad
        .unwrap_or_else(|| seeded(derive(seed, "powerline")).random_range(0.0..2.0 * PI));
    let fs = rec.sample_rate_hz();
    let wave: Vec<f64> = (0..rec.len())
        .map(|k| spec.amplitude_mv * (2.0 * PI * spec.freq_hz * k as f64 / fs + phase).sin())
        .collect();
    let component = rec.map_leads(Units::Millivolts, |_, _| Ok(wave.clone()))?;
    let mut events = EventLog::new();
    if spec.amplitude_mv > 0.0 {
        events.push(whole_record_event(
            rec,
            EventKind::Powerline,
            None,
            spec.amplitude_mv,
        ));
    }
    injection(rec, component, events)
}

fn check_emg_band(band: (f64, f64), sample_rate_hz: f64) -> Result<()> {
    let (lo, hi) = band;
    if !(lo < hi) {
        return Err(Error::invalid(format!("EMG band ({lo}, {hi}) is inverted")));
    }
    if !(lo > 0.0 && hi < sample_rate_hz / 2.0) {
        return Err(Error::invalid(format!(
            "EMG band ({lo}, {hi}) must lie inside (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    Ok(())
}

/// Independent band-limited Gaussian noise per lead, scaled to exact RMS.
pub fn add_emg(rec: &MultiLeadRecord, spec: &EmgSpec, seed: u64) -> Result<Injection> {
    rec.require_units(Units::Millivolts)?;
    check_emg_band(spec.band_hz, rec.sample_rate_hz())?;
    if !(spec.rms_mv >= 0.0) {
        return Err(Error::invalid("EMG RMS must be ≥ 0"));
    }
    let fs = rec.sample_rate_hz();
    let (lo, hi) = spec.band_hz;
    let component = rec.par_map_leads(Units::Millivolts, |i, lead| {
        if spec.rms_mv == 0.0 {
            return Ok(vec![0.0; lead.samples.len()]);
        }
        let mut rng = seeded(derive_indexed(seed, "emg", i));
        Ok(
            band_limited_gaussian(lead.samples.len(), fs, lo, hi, &mut rng)
                .into_iter()
                .map(|v| v * spec.rms_mv)
                .collect(),
        )
    })?;
    let mut events = EventLog::new();
    if spec.rms_mv > 0.0 {
        for lead in rec.labels() {
            events.push(whole_record_event(
                rec,
                EventKind::Emg,
                Some(lead.to_string()),
                spec.rms_mv,
            ));
        }
    }
    injection(rec, component, events)
}

fn check_wander(c: &WanderComponent) -> Result<()> {
    if !(c.freq_hz > 0.0 && c.freq_hz <= MAX_WANDER_HZ) {
        return Err(Error::invalid(format!(
            "wander frequency {} Hz outside (0, {MAX_WANDER_HZ}] Hz",
            c.freq_hz
        )));
    }
    if !(c.amplitude_mv >= 0.0) || !c.amplitude_mv.is_finite() {
        return Err(Error::invalid("wander amplitude must be finite and ≥ 0"));
    }
    Ok(())
}

/// Slow sum of sines with an independent random phase per lead and component.
pub fn add_baseline_wander(
    rec: &MultiLeadRecord,
    components: &[WanderComponent],
    seed: u64,
) -> Result<Injection> {
    rec.require_units(Units::Millivolts)?;
    for c in components {
        check_wander(c)?;
    }
    let fs = rec.sample_rate_hz();
    let component = rec.map_leads(Units::Millivolts, |i, lead| {
        let mut rng = seeded(derive_indexed(seed, "wander", i));
        let phases: Vec<f64> = components
            .iter()
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        Ok((0..lead.samples.len())
            .map(|k| {
                let t = k as f64 / fs;
                components
                    .iter()
                    .zip(&phases)
                    .map(|(c, p)| c.amplitude_mv * (2.0 * PI * c.freq_hz * t + p).sin())
                    .sum()
            })
            .collect())
    })?;
    let mut events = EventLog::new();
    for c in components.iter().filter(|c| c.amplitude_mv > 0.0) {
        events.push(whole_record_event(
            rec,
            EventKind::BaselineWander,
            None,
            c.amplitude_mv,
        ));
    }
    injection(rec, component, events)
}

/// Sample window `[start, end)` covered by an event.
pub fn event_window(ev: &MotionEvent, sample_rate_hz: f64, len: usize) -> Result<(usize, usize)> {
    ev.validate()?;
    let duration = len as f64 / sample_rate_hz;
    if ev.onset_s < 0.0 || ev.onset_s + ev.duration_s > duration + 1e-9 {
        return Err(Error::invalid(format!(
            "motion event [{}, {}] s outside the {duration} s record",
            ev.onset_s,
            ev.onset_s + ev.duration_s
        )));
    }
    let start = (ev.onset_s * sample_rate_hz).round() as usize;
    let end = (((ev.onset_s + ev.duration_s) * sample_rate_hz).round() as usize).min(len);
    if end <= start {
        return Err(Error::invalid("motion event shorter than one sample"));
    }
    Ok((start, end))
}

const COMMON_MODE_RING_HZ: f64 = 3.0;
const ACCEL_JITTER_FRACTION: f64 = 0.1;

/// Microslip step, common-mode transient and microphonic burst, with the
/// accelerometer signature of the movement.
pub fn add_motion_event(
    rec: &MultiLeadRecord,
    ev: &MotionEvent,
    seed: u64,
) -> Result<MotionInjection> {
    rec.require_units(Units::Millivolts)?;
    let fs = rec.sample_rate_hz();
    let n = rec.len();
    let (start, end) = event_window(ev, fs, n)?;
    for l in &ev.affected_leads {
        if rec.lead_index(l).is_none() {
            return Err(Error::UnknownLead(l.clone()));
        }
    }
    let span = end - start;
    let gate = |k: usize| (PI * (k - start) as f64 / span as f64).sin();

    // Instant jump, then a decaying ring that is spent by the end of the event.
    let common: Vec<f64> = (0..n)
        .map(|k| {
            if k < start || k >= end {
                return 0.0;
            }
            let t = (k - start) as f64 / fs;
            ev.common_mode_mv
                * (-5.0 * t / ev.duration_s).exp()
                * (2.0 * PI * COMMON_MODE_RING_HZ * t).cos()
        })
        .collect();

    let (mlo, mhi) = ev.cable_microphonic.band_hz;
    let component = rec.map_leads(Units::Millivolts, |i, lead| {
        let mut col = common.clone();
        if ev.affected_leads.iter().any(|l| *l == lead.label) {
            for v in col.iter_mut().skip(start) {
                *v += ev.microslip_step_mv;
            }
            if ev.cable_microphonic.rms_mv > 0.0 {
                let mut rng = seeded(derive_indexed(seed, "microphonic", i));
                let burst = band_limited_gaussian(span, fs, mlo, mhi, &mut rng);
                for (k, b) in burst.iter().enumerate() {
                    col[start + k] += ev.cable_microphonic.rms_mv * b * gate(start + k);
                }
            }
        }
        Ok(col)
    })?;

    let mut rng = seeded(derive(seed, "accel"));
    let mut accel = AccelStream::zeros(fs, n);
    let axis_gain: [f64; 3] = std::array::from_fn(|_| {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.random_range(0.5..=1.0)
    });
    for k in start..end {
        let g = gate(k);
        for (axis, a) in accel.samples[k].iter_mut().enumerate() {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            *a = ev.accel_peak_g * g * (axis_gain[axis] + ACCEL_JITTER_FRACTION * jitter);
        }
    }

    let mut events = EventLog::new();
    let mut push = |kind, lead: Option<String>, magnitude: f64, until: usize| {
        events.push(Event {
            start,
            end: until,
            kind,
            lead,
            magnitude,
        })
    };
    push(EventKind::Motion, None, ev.accel_peak_g, end);
    if ev.common_mode_mv != 0.0 {
        push(EventKind::CommonMode, None, ev.common_mode_mv, end);
    }
    for label in rec.labels() {
        if !ev.affected_leads.iter().any(|l| l == label) {
            continue;
        }
        if ev.microslip_step_mv != 0.0 {
            push(
                EventKind::Microslip,
                Some(label.to_string()),
                ev.microslip_step_mv,
                n,
            );
        }
        if ev.cable_microphonic.rms_mv > 0.0 {
            push(
                EventKind::Microphonic,
                Some(label.to_string()),
                ev.cable_microphonic.rms_mv,
                end,
            );
        }
    }
    Ok(MotionInjection {
        record: rec.add(&component)?,
        component,
        accel,
        events,
    })
}

/// `10·log10(P_clean / P_noise)` pooled over all leads; `+∞` when the two
/// records are identical.
pub fn snr_db(clean: &MultiLeadRecord, corrupted: &MultiLeadRecord) -> Result<f64> {
    clean.check_same_shape(corrupted)?;
    let mut ps = 0.0;
    let mut pn = 0.0;
    for (a, b) in clean.leads().iter().zip(corrupted.leads()) {
        for (x, y) in a.samples.iter().zip(&b.samples) {
            ps += x * x;
            pn += (y - x) * (y - x);
        }
    }
    if pn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// Ground-truth components of a full corruption pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseComponents {
    pub powerline: MultiLeadRecord,
    pub emg: MultiLeadRecord,
    pub wander: MultiLeadRecord,
    pub motion: MultiLeadRecord,
}

impl NoiseComponents {
    pub fn total(&self) -> Result<MultiLeadRecord> {
        self.powerline
            .add(&self.emg)?
            .add(&self.wander)?
            .add(&self.motion)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub record: MultiLeadRecord,
    pub components: NoiseComponents,
    pub accel: AccelStream,
    pub events: EventLog,
}

/// Applies every interference class in `spec`, each from its own derived seed.
pub fn corrupt(rec: &MultiLeadRecord, spec: &NoiseSpec) -> Result<Corruption> {
    rec.require_units(Units::Millivolts)?;
    spec.validate(rec.sample_rate_hz())?;
    let fs = rec.sample_rate_hz();
    let labels = rec.labels();
    let zero = MultiLeadRecord::zeros(fs, Units::Millivolts, &labels, rec.len())?;
    let mut events = EventLog::new();

    let powerline = if spec.powerline.amplitude_mv > 0.0 {
        let inj = add_powerline(&zero, &spec.powerline, derive(spec.seed, "powerline"))?;
        events.extend(inj.events);
        inj.component
    } else {
        zero.clone()
    };
    let emg = if spec.emg.rms_mv > 0.0 {
        let inj = add_emg(&zero, &spec.emg, derive(spec.seed, "emg"))?;
        events.extend(inj.events);
        inj.component
    } else {
        zero.clone()
    };
    let wander = {
        let inj = add_baseline_wander(&zero, &spec.baseline, derive(spec.seed, "wander"))?;
        events.extend(inj.events);
        inj.component
    };
    let mut motion = zero.clone();
    let mut accel = AccelStream::zeros(fs, rec.len());
    for (i, ev) in spec.motion_events.iter().enumerate() {
        let inj = add_motion_event(&zero, ev, derive_indexed(spec.seed, "motion", i))?;
        motion = motion.add(&inj.component)?;
        accel.add_assign(&inj.accel)?;
        events.extend(inj.events);
    }
    events.sort_by_lead_order(&labels);
    let components = NoiseComponents {
        powerline,
        emg,
        wander,
        motion,
    };
    Ok(Corruption {
        record: rec.add(&components.total()?)?,
        components,
        accel,
        events,
    })
}

pub const REST_TO_MOTION_DURATION_S: f64 = 60.0;
pub const REST_TO_MOTION_QUIET_S: f64 = 30.0;

/// Quiet first half, then a dense train of motion events. Microslip steps
/// are drawn from ±[100, 900] mV.
pub fn rest_to_motion(seed: u64) -> NoiseSpec {
    use crate::leads::LEAD_LABELS;
    let mut rng = seeded(derive(seed, "rest-to-motion"));
    let mut events = Vec::new();
    let mut t = REST_TO_MOTION_QUIET_S + rng.random_range(0.5..1.5);
    while t < REST_TO_MOTION_DURATION_S - 2.0 {
        let duration = rng.random_range(0.4..0.9);
        let affected = rng.random_range(1..=3);
        let mut leads: Vec<String> = Vec::new();
        while leads.len() < affected {
            let l = LEAD_LABELS[rng.random_range(0..LEAD_LABELS.len())].to_string();
            if !leads.contains(&l) {
                leads.push(l);
            }
        }
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        events.push(MotionEvent {
            onset_s: t,
            duration_s: duration,
            microslip_step_mv: sign * rng.random_range(100.0..900.0),
            common_mode_mv: rng.random_range(2.0..6.0)
                * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            cable_microphonic: MicrophonicBurst {
                band_hz: (1.0, 10.0),
                rms_mv: rng.random_range(0.1..0.4),
            },
            affected_leads: leads,
            accel_peak_g: rng.random_range(0.3..1.2),
        });
        t += duration + rng.random_range(1.2..2.6);
    }
    NoiseSpec {
        motion_events: events,
        ..resting(seed)
    }
}

/// Background interference of a wearer at rest: mains pickup, light EMG and
/// respiratory wander.
pub fn resting(seed: u64) -> NoiseSpec {
    NoiseSpec {
        powerline: PowerlineSpec {
            amplitude_mv: 0.1,
            ..Default::default()
        },
        emg: EmgSpec {
            band_hz: (20.0, 150.0),
            rms_mv: 0.02,
        },
        baseline: vec![WanderComponent {
            freq_hz: 0.2,
            amplitude_mv: 0.3,
        }],
        motion_events: Vec::new(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::spectral::band_power;
    use crate::record::rms;

    fn zero_rec(fs: f64, secs: f64) -> MultiLeadRecord {
        let labels = crate::leads::LEAD_LABELS;
        MultiLeadRecord::zeros(fs, Units::Millivolts, &labels, (fs * secs) as usize).unwrap()
    }

    fn carrier(fs: f64, secs: f64) -> MultiLeadRecord {
        zero_rec(fs, secs)
            .map_leads(Units::Millivolts, |i, l| {
                Ok((0..l.samples.len())
                    .map(|k| ((k * (i + 3)) as f64 * 0.013).sin())
                    .collect())
            })
            .unwrap()
    }

    #[test]
    fn powerline_rms_and_zero_amplitude() {
        let rec = zero_rec(500.0, 10.0);
        let spec = PowerlineSpec {
            amplitude_mv: 0.2,
            ..Default::default()
        };
        let out = add_powerline(&rec, &spec, 1).unwrap();
        for lead in out.record.leads() {
            assert!((rms(&lead.samples) - 0.2 / 2f64.sqrt()).abs() <= 0.01 * 0.1414);
        }
        let c = carrier(500.0, 2.0);
        let none = add_powerline(&c, &PowerlineSpec::default(), 1).unwrap();
        assert_eq!(none.record, c);
        assert!(add_powerline(
            &rec,
            &PowerlineSpec {
                freq_hz: 250.0,
                amplitude_mv: 1.0,
                phase_rad: None
            },
            1
        )
        .is_err());
    }

    #[test]
    fn emg_rms_and_band() {
        let fs = 1000.0;
        let rec = zero_rec(fs, 10.0);
        let out = add_emg(
            &rec,
            &EmgSpec {
                rms_mv: 0.05,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        for lead in out.record.leads() {
            assert!((rms(&lead.samples) - 0.05).abs() <= 0.05 * 0.05);
            let low = band_power(&lead.samples, fs, 0.0, 10.0);
            let inband = band_power(&lead.samples, fs, 20.0, 300.0);
            assert!(low <= inband / 1000.0);
        }
        assert!(add_emg(
            &rec,
            &EmgSpec {
                band_hz: (300.0, 20.0),
                rms_mv: 0.1
            },
            2
        )
        .is_err());
        let zero = add_emg(&rec, &EmgSpec::default(), 2).unwrap();
        assert_eq!(zero.record, rec);
    }

    #[test]
    fn wander_truth_is_sum_of_components() {
        let rec = carrier(250.0, 20.0);
        let a = WanderComponent {
            freq_hz: 0.3,
            amplitude_mv: 1.0,
        };
        let b = WanderComponent {
            freq_hz: 0.1,
            amplitude_mv: 0.5,
        };
        let both = add_baseline_wander(&rec, &[a, b], 9).unwrap();
        let diff = both.record.sub(&rec).unwrap();
        for (d, c) in diff.leads().iter().zip(both.component.leads()) {
            assert!(crate::record::correlation(&d.samples, &c.samples) > 0.999_999);
        }
        assert_eq!(add_baseline_wander(&rec, &[], 9).unwrap().record, rec);
        assert!(add_baseline_wander(
            &rec,
            &[WanderComponent {
                freq_hz: 0.6,
                amplitude_mv: 1.0
            }],
            9
        )
        .is_err());
    }

    #[test]
    fn microslip_shifts_dc_of_affected_lead() {
        let rec = zero_rec(500.0, 4.0);
        let ev = MotionEvent {
            onset_s: 1.0,
            duration_s: 0.5,
            microslip_step_mv: 300.0,
            affected_leads: vec!["V6".into()],
            ..Default::default()
        };
        let out = add_motion_event(&rec, &ev, 3).unwrap();
        let v6 = out.record.lead("V6").unwrap();
        assert_eq!(v6[400], 0.0);
        assert_eq!(v6[1900], 300.0);
        assert!(out.record.lead("V5").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_event_still_moves_accelerometer() {
        let rec = carrier(500.0, 4.0);
        let ev = MotionEvent {
            onset_s: 1.0,
            duration_s: 1.0,
            ..Default::default()
        };
        let out = add_motion_event(&rec, &ev, 3).unwrap();
        assert_eq!(out.record, rec);
        assert!((500..1000).any(|k| out.accel.magnitude(k) > 0.1));
        assert!((0..500)
            .chain(1000..2000)
            .all(|k| out.accel.magnitude(k) < 0.01));
    }

    #[test]
    fn common_mode_leaves_lead_differences() {
        let rec = carrier(500.0, 4.0);
        let ev = MotionEvent {
            onset_s: 1.0,
            duration_s: 1.0,
            common_mode_mv: 1.0,
            ..Default::default()
        };
        let out = add_motion_event(&rec, &ev, 3).unwrap();
        let first = out.component.leads()[0].samples.clone();
        assert!(first.iter().any(|&v| v != 0.0));
        for lead in out.component.leads() {
            assert_eq!(lead.samples, first);
        }
        let d_before: Vec<f64> = rec
            .lead("I")
            .unwrap()
            .iter()
            .zip(rec.lead("V2").unwrap())
            .map(|(a, b)| a - b)
            .collect();
        let d_after: Vec<f64> = out
            .record
            .lead("I")
            .unwrap()
            .iter()
            .zip(out.record.lead("V2").unwrap())
            .map(|(a, b)| a - b)
            .collect();
        for (a, b) in d_before.iter().zip(&d_after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_event_rejected() {
        let rec = zero_rec(500.0, 2.0);
        let ev = MotionEvent {
            onset_s: 1.5,
            duration_s: 1.0,
            ..Default::default()
        };
        assert!(add_motion_event(&rec, &ev, 0).is_err());
    }

    #[test]
    fn snr_examples() {
        let fs = 1000.0;
        let clean = MultiLeadRecord::from_columns(
            fs,
            Units::Millivolts,
            [(
                "II",
                (0..10_000)
                    .map(|k| (2.0 * PI * 5.0 * k as f64 / fs).sin())
                    .collect::<Vec<_>>(),
            )],
        )
        .unwrap();
        assert_eq!(snr_db(&clean, &clean).unwrap(), f64::INFINITY);
        let doubled = clean.scale(2.0).unwrap();
        assert!(snr_db(&clean, &doubled).unwrap().abs() < 1e-12);
        let mut rng = seeded(4);
        let target = 0.1 / 2f64.sqrt();
        let noise: Vec<f64> = (0..10_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let scale = target / rms(&noise);
        let noisy = clean
            .map_leads(Units::Millivolts, |_, l| {
                Ok(l.samples
                    .iter()
                    .zip(&noise)
                    .map(|(a, n)| a + n * scale)
                    .collect())
            })
            .unwrap();
        assert!((snr_db(&clean, &noisy).unwrap() - 20.0).abs() <= 0.1);
    }

    #[test]
    fn injectors_reject_counts() {
        let rec = zero_rec(500.0, 1.0).with_units(Units::Counts);
        assert!(matches!(
            add_powerline(&rec, &PowerlineSpec::default(), 0),
            Err(Error::UnitMismatch { .. })
        ));
    }

    #[test]
    fn rest_to_motion_is_quiet_then_busy() {
        let spec = rest_to_motion(7);
        assert!(spec.motion_events.len() >= 8);
        assert!(spec
            .motion_events
            .iter()
            .all(|e| e.onset_s >= REST_TO_MOTION_QUIET_S));
        spec.validate(1000.0).unwrap();
        assert_eq!(spec, rest_to_motion(7));
    }
}
