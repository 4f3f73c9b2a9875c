//! Electrode, wire and amplifier model turning a millivolt record into ADC
//! counts.
//!
//! Per lead: `v = gain·(mV + polarization) + bias + interface noise − discharge`,
//! then clamp to the rail and round. Polarization is a bounded random walk.
//! Interface noise has `σ = σ₀·√(Z / Z_wet)` where `Z` is contact impedance
//! plus wire resistance. When a clamped run ends, the amplifier discharges
//! by `discharge_jump_counts` toward zero and the offset persists.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Event, EventKind, EventLog, MultiLeadRecord, Units};
use crate::rng::{derive_indexed, seeded};

/// Microneedle array geometry. Recorded for reference only.
pub const MICRONEEDLE_RADIUS_UM: f64 = 500.0;
pub const MICRONEEDLE_HEIGHT_UM: f64 = 600.0;
pub const MICRONEEDLE_COUNT: usize = 46;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectrodeKind {
    Wet,
    Dry,
    Microneedle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CopperFilm,
    #[default]
    HumanSkin,
}

/// Contact impedance in ohms for a kind/scenario pair.
pub fn table_impedance_ohm(kind: ElectrodeKind, scenario: Scenario) -> f64 {
    match (scenario, kind) {
        (Scenario::HumanSkin, ElectrodeKind::Wet) => 550.0,
        (Scenario::HumanSkin, ElectrodeKind::Microneedle) => 600.0,
        (Scenario::HumanSkin, ElectrodeKind::Dry) => 700.0,
        (Scenario::CopperFilm, ElectrodeKind::Wet) => 10.0,
        (Scenario::CopperFilm, ElectrodeKind::Microneedle) => 1.0,
        (Scenario::CopperFilm, ElectrodeKind::Dry) => 0.1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeSpec {
    pub kind: ElectrodeKind,
    pub scenario: Scenario,
    pub contact_impedance_ohm: f64,
    /// Starting polarization offset.
    pub polarization_offset_mv: f64,
    /// Random-walk intensity in mV per √s.
    pub polarization_drift_mv: f64,
    /// The walk is reflected to stay within ±bound of the starting offset.
    pub polarization_bound_mv: f64,
    /// One-pole smoothing of the walk; keeps the drift below the ECG band.
    /// 0 leaves the raw walk.
    #[serde(default = "default_polarization_corner")]
    pub polarization_corner_hz: f64,
}

fn default_polarization_corner() -> f64 {
    0.2
}

impl ElectrodeSpec {
    pub fn new(kind: ElectrodeKind, scenario: Scenario) -> Self {
        Self {
            kind,
            scenario,
            contact_impedance_ohm: table_impedance_ohm(kind, scenario),
            polarization_offset_mv: 0.0,
            polarization_drift_mv: 0.0,
            polarization_bound_mv: 0.0,
            polarization_corner_hz: default_polarization_corner(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.contact_impedance_ohm > 0.0) || !self.contact_impedance_ohm.is_finite() {
            return Err(Error::config("contact impedance must be positive"));
        }
        if !(self.polarization_drift_mv >= 0.0 && self.polarization_bound_mv >= 0.0) {
            return Err(Error::config("polarization drift and bound must be ≥ 0"));
        }
        if !(self.polarization_corner_hz >= 0.0 && self.polarization_corner_hz.is_finite()) {
            return Err(Error::config("polarization corner must be ≥ 0"));
        }
        if !self.polarization_offset_mv.is_finite() {
            return Err(Error::config("polarization offset must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireShape {
    SShape,
    Linear,
}

impl WireShape {
    /// Fractional resistance growth per stretch cycle.
    pub fn default_growth_rate(self) -> f64 {
        match self {
            WireShape::SShape => 2e-5,
            WireShape::Linear => 4e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSpec {
    pub shape: WireShape,
    pub length_cm: f64,
    pub base_resistance_ohm_per_10cm: f64,
    pub stretch_cycles: u32,
    pub resistance_growth_rate: f64,
}

impl WireSpec {
    pub fn new(shape: WireShape, length_cm: f64, stretch_cycles: u32) -> Result<Self> {
        let w = Self {
            shape,
            length_cm,
            base_resistance_ohm_per_10cm: 0.05,
            stretch_cycles,
            resistance_growth_rate: shape.default_growth_rate(),
        };
        w.validate()?;
        Ok(w)
    }

    /// An S-shaped wire must grow more slowly than a straight one.
    pub fn validate(&self) -> Result<()> {
        if !(self.length_cm > 0.0) || !(self.base_resistance_ohm_per_10cm > 0.0) {
            return Err(Error::config(
                "wire length and base resistance must be positive",
            ));
        }
        if !(self.resistance_growth_rate >= 0.0) {
            return Err(Error::config("wire growth rate must be ≥ 0"));
        }
        let ok = match self.shape {
            WireShape::SShape => {
                self.resistance_growth_rate < WireShape::Linear.default_growth_rate()
            }
            WireShape::Linear => {
                self.resistance_growth_rate > WireShape::SShape.default_growth_rate()
            }
        };
        if !ok {
            return Err(Error::config(format!(
                "growth rate {} violates the S-shaped < linear ordering for a {:?} wire",
                self.resistance_growth_rate, self.shape
            )));
        }
        Ok(())
    }
}

impl Default for WireSpec {
    fn default() -> Self {
        Self::new(WireShape::SShape, 20.0, 0).expect("default wire is valid")
    }
}

pub fn wire_resistance(w: &WireSpec) -> f64 {
    let base = w.base_resistance_ohm_per_10cm * w.length_cm / 10.0;
    base * (1.0 + w.resistance_growth_rate).powi(w.stretch_cycles as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierSpec {
    pub gain_counts_per_mv: f64,
    pub rail_counts: f64,
    pub discharge_jump_counts: f64,
    pub adc_bits: u32,
    /// One value per lead, or a single value for all leads, or empty for none.
    pub dc_bias_counts: Vec<f64>,
}

impl Default for AmplifierSpec {
    fn default() -> Self {
        Self {
            gain_counts_per_mv: 1000.0,
            rail_counts: 8_000_000.0,
            discharge_jump_counts: 1_000_000.0,
            adc_bits: 24,
            dc_bias_counts: Vec::new(),
        }
    }
}

impl AmplifierSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_counts_per_mv > 0.0) {
            return Err(Error::config("amplifier gain must be positive"));
        }
        if !(2..=32).contains(&self.adc_bits) {
            return Err(Error::config("ADC bits must lie in 2..=32"));
        }
        let full_scale = 2f64.powi(self.adc_bits as i32 - 1);
        if !(self.rail_counts > 0.0 && self.rail_counts <= full_scale) {
            return Err(Error::config(format!(
                "rail {} must lie in (0, 2^(bits-1) = {full_scale}]",
                self.rail_counts
            )));
        }
        if !(self.discharge_jump_counts >= 0.0) {
            return Err(Error::config("discharge jump must be ≥ 0"));
        }
        if self.dc_bias_counts.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("DC bias must be finite"));
        }
        Ok(())
    }

    fn bias(&self, lead: usize) -> f64 {
        match self.dc_bias_counts.len() {
            0 => 0.0,
            1 => self.dc_bias_counts[0],
            _ => self.dc_bias_counts[lead],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// One electrode per lead, or a single electrode shared by all leads.
    pub electrodes: Vec<ElectrodeSpec>,
    pub wire: WireSpec,
    pub amplifier: AmplifierSpec,
    /// Interface noise σ₀ in counts at wet-electrode impedance.
    pub interface_noise_counts: f64,
}

/// Named presets understood by [`ChannelSpec::preset`].
pub const CHANNEL_PRESETS: [&str; 3] = ["ideal", "no-electrode", "with-electrode"];

// Per-lead DC bias in kCounts, lead order I II III aVR aVL aVF V1..V6.
const NO_ELECTRODE_BIAS_K: [f64; 12] = [
    -350.0, -120.0, 50.0, 400.0, -260.0, 180.0, 120.0, -60.0, 300.0, -200.0, 240.0, 20.0,
];
const WITH_ELECTRODE_BIAS_K: [f64; 12] = [
    -200.0, -70.0, 30.0, 220.0, -150.0, 100.0, 70.0, -30.0, 170.0, -110.0, 140.0, 10.0,
];

impl ChannelSpec {
    /// Unit gain path: no bias, noise, drift or saturation risk.
    pub fn ideal() -> Self {
        Self {
            electrodes: vec![ElectrodeSpec::new(ElectrodeKind::Wet, Scenario::HumanSkin)],
            wire: WireSpec::default(),
            amplifier: AmplifierSpec::default(),
            interface_noise_counts: 0.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let build = |kind, drift, bound, bias: &[f64; 12]| {
            let mut e = ElectrodeSpec::new(kind, Scenario::HumanSkin);
            e.polarization_drift_mv = drift;
            e.polarization_bound_mv = bound;
            Self {
                electrodes: vec![e],
                wire: WireSpec::default(),
                amplifier: AmplifierSpec {
                    dc_bias_counts: bias.iter().map(|k| k * 1000.0).collect(),
                    ..Default::default()
                },
                interface_noise_counts: 30.0,
            }
        };
        match name {
            "ideal" => Ok(Self::ideal()),
            "no-electrode" => Ok(build(ElectrodeKind::Dry, 2.0, 40.0, &NO_ELECTRODE_BIAS_K)),
            "with-electrode" => Ok(build(
                ElectrodeKind::Microneedle,
                0.5,
                10.0,
                &WITH_ELECTRODE_BIAS_K,
            )),
            other => Err(Error::config(format!("unknown channel preset `{other}`"))),
        }
    }

    pub fn validate(&self, lead_count: usize) -> Result<()> {
        if self.electrodes.is_empty()
            || (self.electrodes.len() != 1 && self.electrodes.len() != lead_count)
        {
            return Err(Error::config(format!(
                "need 1 or {lead_count} electrode specs, got {}",
                self.electrodes.len()
            )));
        }
        for e in &self.electrodes {
            e.validate()?;
        }
        self.wire.validate()?;
        self.amplifier.validate()?;
        let nb = self.amplifier.dc_bias_counts.len();
        if nb > 1 && nb != lead_count {
            return Err(Error::config(format!(
                "need 0, 1 or {lead_count} DC bias values, got {nb}"
            )));
        }
        if !(self.interface_noise_counts >= 0.0) {
            return Err(Error::config("interface noise σ₀ must be ≥ 0"));
        }
        Ok(())
    }

    fn electrode(&self, lead: usize) -> &ElectrodeSpec {
        if self.electrodes.len() == 1 {
            &self.electrodes[0]
        } else {
            &self.electrodes[lead]
        }
    }

    /// Interface noise σ in counts for a lead.
    pub fn interface_sigma(&self, lead: usize) -> f64 {
        let e = self.electrode(lead);
        let z = e.contact_impedance_ohm + wire_resistance(&self.wire);
        let z_wet = table_impedance_ohm(ElectrodeKind::Wet, e.scenario);
        self.interface_noise_counts * (z / z_wet).sqrt()
    }
}

fn channel_lead(
    x: &[f64],
    lead: usize,
    label: &str,
    spec: &ChannelSpec,
    sample_rate_hz: f64,
    seed: u64,
) -> (Vec<f64>, Vec<Event>) {
    let amp = &spec.amplifier;
    let e = spec.electrode(lead);
    let sigma = spec.interface_sigma(lead);
    let bias = amp.bias(lead);
    let mut rng = seeded(derive_indexed(seed, "channel", lead));
    let walk_step = e.polarization_drift_mv / sample_rate_hz.sqrt();
    let (lo, hi) = (
        e.polarization_offset_mv - e.polarization_bound_mv,
        e.polarization_offset_mv + e.polarization_bound_mv,
    );
    let mut pol = e.polarization_offset_mv;
    let mut smooth = pol;
    let alpha = if e.polarization_corner_hz > 0.0 {
        1.0 - (-2.0 * std::f64::consts::PI * e.polarization_corner_hz / sample_rate_hz).exp()
    } else {
        1.0
    };
    let mut discharge = 0.0;
    let mut episode: Option<(usize, f64)> = None;
    let mut out = Vec::with_capacity(x.len());
    let mut events = Vec::new();
    for (n, &mv) in x.iter().enumerate() {
        if walk_step > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            pol += walk_step * z;
            // reflect into the band
            if pol > hi {
                pol = (2.0 * hi - pol).max(lo);
            } else if pol < lo {
                pol = (2.0 * lo - pol).min(hi);
            }
        }
        smooth += alpha * (pol - smooth);
        let noise = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        } else {
            0.0
        };
        let mut v = amp.gain_counts_per_mv * (mv + smooth) + bias + noise - discharge;
        if v.abs() >= amp.rail_counts {
            if episode.is_none() {
                episode = Some((n, v.signum()));
            }
        } else if let Some((start, sign)) = episode.take() {
            events.push(Event {
                start,
                end: n,
                kind: EventKind::Saturation,
                lead: Some(label.to_string()),
                magnitude: sign * amp.rail_counts,
            });
            events.push(Event {
                start: n,
                end: n + 1,
                kind: EventKind::Discharge,
                lead: Some(label.to_string()),
                magnitude: amp.discharge_jump_counts,
            });
            discharge += sign * amp.discharge_jump_counts;
            v -= sign * amp.discharge_jump_counts;
        }
        out.push(v.clamp(-amp.rail_counts, amp.rail_counts).round());
    }
    if let Some((start, sign)) = episode {
        events.push(Event {
            start,
            end: x.len(),
            kind: EventKind::Saturation,
            lead: Some(label.to_string()),
            magnitude: sign * amp.rail_counts,
        });
    }
    (out, events)
}

/// Converts a millivolt record to counts. Deterministic per seed.
pub fn apply_channel(
    rec: &MultiLeadRecord,
    spec: &ChannelSpec,
    seed: u64,
) -> Result<(MultiLeadRecord, EventLog)> {
    use rayon::prelude::*;
    rec.require_units(Units::Millivolts)?;
    spec.validate(rec.lead_count())?;
    let fs = rec.sample_rate_hz();
    let per_lead: Vec<(Vec<f64>, Vec<Event>)> = rec
        .leads()
        .par_iter()
        .enumerate()
        .map(|(i, lead)| channel_lead(&lead.samples, i, &lead.label, spec, fs, seed))
        .collect();
    let mut log = EventLog::new();
    let mut columns = Vec::with_capacity(per_lead.len());
    for (col, events) in per_lead {
        columns.push(col);
        log.events.extend(events);
    }
    log.sort_by_lead_order(&rec.labels());
    let mut columns = columns.into_iter();
    let out = rec.map_leads(Units::Counts, |_, _| {
        Ok(columns.next().expect("one column per lead"))
    })?;
    Ok((out, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcRange {
    /// Largest single-lead `max − min`.
    pub per_lead_span: f64,
    /// `max − min` over every sample of every lead.
    pub all_lead_span: f64,
}

pub fn dc_range(rec: &MultiLeadRecord) -> Result<DcRange> {
    rec.require_units(Units::Counts)?;
    if rec.is_empty() || rec.lead_count() == 0 {
        return Err(Error::invalid("DC range of an empty record"));
    }
    let mut per_lead_span: f64 = 0.0;
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for lead in rec.leads() {
        let (mn, mx) = lead
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        per_lead_span = per_lead_span.max(mx - mn);
        gmin = gmin.min(mn);
        gmax = gmax.max(mx);
    }
    Ok(DcRange {
        per_lead_span,
        all_lead_span: gmax - gmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_lead(x: Vec<f64>) -> MultiLeadRecord {
        MultiLeadRecord::from_columns(500.0, Units::Millivolts, [("II", x)]).unwrap()
    }

    #[test]
    fn wire_examples() {
        let w = WireSpec::new(WireShape::SShape, 20.0, 0).unwrap();
        assert!((wire_resistance(&w) - 0.10).abs() < 1e-15);
        let s = WireSpec::new(WireShape::SShape, 20.0, 1000).unwrap();
        let l = WireSpec::new(WireShape::Linear, 20.0, 1000).unwrap();
        assert!(wire_resistance(&s) < wire_resistance(&l));
        let mut bad = s.clone();
        bad.resistance_growth_rate = 1e-3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_bias_and_gain() {
        let mut spec = ChannelSpec::ideal();
        spec.amplifier.dc_bias_counts = vec![400_000.0];
        let (out, _) = apply_channel(&one_lead(vec![0.0; 100]), &spec, 1).unwrap();
        assert!(out.lead("II").unwrap().iter().all(|&v| v == 400_000.0));
        let (out, _) = apply_channel(&one_lead(vec![1.0; 10]), &ChannelSpec::ideal(), 1).unwrap();
        assert!(out.lead("II").unwrap().iter().all(|&v| v == 1000.0));
        assert_eq!(out.units(), Units::Counts);
    }

    #[test]
    fn triangle_saturates_then_discharges() {
        let mut spec = ChannelSpec::ideal();
        spec.amplifier.rail_counts = 10_000.0;
        spec.amplifier.discharge_jump_counts = 3_000.0;
        // 0 → 20 mV → 0 in 0.1 mV steps: pre-clamp crosses 10 000 at k = 100.
        let x: Vec<f64> = (0..=400)
            .map(|k| {
                if k <= 200 {
                    k as f64 * 0.1
                } else {
                    (400 - k) as f64 * 0.1
                }
            })
            .collect();
        let (out, log) = apply_channel(&one_lead(x.clone()), &spec, 1).unwrap();
        let y = out.lead("II").unwrap();
        let sat: Vec<&Event> = log.of_kind(EventKind::Saturation).collect();
        assert_eq!(sat.len(), 1);
        assert_eq!((sat[0].start, sat[0].end), (100, 301));
        assert!(y[100..301].iter().all(|&v| v == 10_000.0));
        assert_eq!(y[301], (x[301] * 1000.0 - 3000.0).round());
        assert_eq!(log.of_kind(EventKind::Discharge).next().unwrap().start, 301);
    }

    #[test]
    fn round_trip_within_half_lsb() {
        let x: Vec<f64> = (0..500).map(|k| (k as f64 * 0.037).sin() * 2.5).collect();
        let (out, _) = apply_channel(&one_lead(x.clone()), &ChannelSpec::ideal(), 1).unwrap();
        for (a, b) in out.lead("II").unwrap().iter().zip(&x) {
            assert!((a / 1000.0 - b).abs() <= 0.5 / 1000.0 + 1e-15);
        }
    }

    #[test]
    fn noise_monotone_in_impedance() {
        let mut prev = 0.0;
        for kind in [
            ElectrodeKind::Wet,
            ElectrodeKind::Microneedle,
            ElectrodeKind::Dry,
        ] {
            let mut spec = ChannelSpec::ideal();
            spec.electrodes = vec![ElectrodeSpec::new(kind, Scenario::HumanSkin)];
            spec.interface_noise_counts = 5.0;
            let s = spec.interface_sigma(0);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn deterministic_and_rejects_counts() {
        let spec = ChannelSpec::preset("no-electrode").unwrap();
        let rec =
            MultiLeadRecord::zeros(500.0, Units::Millivolts, &crate::leads::LEAD_LABELS, 1000)
                .unwrap();
        let a = apply_channel(&rec, &spec, 3).unwrap();
        let b = apply_channel(&rec, &spec, 3).unwrap();
        assert_eq!(a, b);
        let counts = rec.with_units(Units::Counts);
        assert!(matches!(
            apply_channel(&counts, &spec, 3),
            Err(Error::UnitMismatch { .. })
        ));
    }

    #[test]
    fn dc_range_variants() {
        let rec = MultiLeadRecord::from_columns(
            500.0,
            Units::Counts,
            [("I", vec![0.0; 10]), ("II", vec![420_000.0; 10])],
        )
        .unwrap();
        let r = dc_range(&rec).unwrap();
        assert_eq!(r.per_lead_span, 0.0);
        assert_eq!(r.all_lead_span, 420_000.0);
    }

    #[test]
    fn presets_order_dc_span() {
        let rec =
            MultiLeadRecord::zeros(500.0, Units::Millivolts, &crate::leads::LEAD_LABELS, 2000)
                .unwrap();
        let off = apply_channel(&rec, &ChannelSpec::preset("no-electrode").unwrap(), 1)
            .unwrap()
            .0;
        let on = apply_channel(&rec, &ChannelSpec::preset("with-electrode").unwrap(), 1)
            .unwrap()
            .0;
        assert!(dc_range(&on).unwrap().all_lead_span < dc_range(&off).unwrap().all_lead_span);
    }
}
