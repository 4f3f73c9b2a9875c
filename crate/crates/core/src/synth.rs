//! Ground-truth cardiac dipole trajectories and clean 12-lead records.
//!
//! Each wave (P, QRS, T) is a sum of Gaussian bumps in cardiac phase; each
//! bump carries a 3-D amplitude so the dipole tip traces a closed loop per
//! wave. Phase runs from 0 at beat onset to 2π at the next onset, so wave
//! durations scale with the RR interval.

use std::f64::consts::TAU;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leads::{
    augmented_from_potentials, limb_leads_from_potentials, project_dipole, Dipole, LeadSystem,
    LEAD_LABELS,
};
use crate::record::{Lead, MultiLeadRecord, Units};
use crate::rng;

const FIG2_DEFAULT_JSON: &str = include_str!("../presets/beat_fig2_default.json");

/// Half-width of a labelled wave segment, in Gaussian widths.
const SEGMENT_HALF_WIDTHS: f64 = 2.5;
/// Gaussian bumps are evaluated out to this many widths.
const SUPPORT_WIDTHS: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center_rad: f64,
    pub width_rad: f64,
    pub amplitude_mv: Dipole,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WaveLoop {
    pub components: Vec<GaussianComponent>,
}

impl WaveLoop {
    fn span(&self) -> Option<(f64, f64)> {
        let lo = self
            .components
            .iter()
            .map(|c| c.center_rad - SEGMENT_HALF_WIDTHS * c.width_rad)
            .reduce(f64::min)?;
        let hi = self
            .components
            .iter()
            .map(|c| c.center_rad + SEGMENT_HALF_WIDTHS * c.width_rad)
            .reduce(f64::max)?;
        Some((lo, hi))
    }

    fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.center_rad)
    }

    pub fn negated(&self) -> Self {
        WaveLoop {
            components: self
                .components
                .iter()
                .map(|c| GaussianComponent {
                    amplitude_mv: c.amplitude_mv.map(|a| -a),
                    ..c.clone()
                })
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WaveLoop {
            components: self
                .components
                .iter()
                .map(|c| GaussianComponent {
                    amplitude_mv: c.amplitude_mv.map(|a| a * factor),
                    ..c.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatParams {
    pub heart_rate_bpm: f64,
    #[serde(default)]
    pub rr_jitter_fraction: f64,
    pub p: WaveLoop,
    pub qrs: WaveLoop,
    pub t: WaveLoop,
}

impl Default for BeatParams {
    fn default() -> Self {
        Self::fig2_default()
    }
}

impl BeatParams {
    /// The shipped "fig2-default" parameter set.
    pub fn fig2_default() -> Self {
        serde_json::from_str(FIG2_DEFAULT_JSON).expect("bundled beat preset parses")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig2-default" => Ok(Self::fig2_default()),
            other => Err(Error::config(format!("unknown beat preset `{other}`"))),
        }
    }

    pub fn rr_seconds(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.heart_rate_bpm > 20.0 && self.heart_rate_bpm < 250.0) {
            return Err(Error::config(format!(
                "heart rate {} outside (20, 250) bpm",
                self.heart_rate_bpm
            )));
        }
        if !(self.rr_jitter_fraction >= 0.0 && self.rr_jitter_fraction * 3.0 < 1.0) {
            return Err(Error::config("rr_jitter_fraction must be in [0, 1/3)"));
        }
        if self.qrs.components.is_empty() {
            return Err(Error::config("QRS loop needs at least one component"));
        }
        for c in self
            .p
            .components
            .iter()
            .chain(&self.qrs.components)
            .chain(&self.t.components)
        {
            if !(c.width_rad > 0.0 && c.width_rad.is_finite() && c.center_rad.is_finite()) {
                return Err(Error::config(
                    "component widths must be positive and centres finite",
                ));
            }
            if c.amplitude_mv.iter().any(|a| !a.is_finite()) {
                return Err(Error::config("component amplitudes must be finite"));
            }
        }
        let max = |w: &WaveLoop| w.centers().fold(f64::NEG_INFINITY, f64::max);
        let min = |w: &WaveLoop| w.centers().fold(f64::INFINITY, f64::min);
        if max(&self.p) >= min(&self.qrs) || max(&self.qrs) >= min(&self.t) {
            return Err(Error::config("wave centres must be ordered P < QRS < T"));
        }
        if min(&self.p).min(min(&self.qrs)) < 0.0 || max(&self.t).max(max(&self.qrs)) >= TAU {
            return Err(Error::config("wave centres must lie in [0, 2π)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Baseline,
    P,
    PQ,
    QRS,
    ST,
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleTrajectory {
    pub sample_rate_hz: f64,
    pub samples: Vec<Dipole>,
    pub segment_labels: Vec<Segment>,
    pub beat_onsets: Vec<usize>,
    /// RR interval of each beat in seconds (onset to the next scheduled onset).
    pub rr_s: Vec<f64>,
    /// Half-open sample span `[start, end)` of each beat's QRS segment.
    pub qrs_spans: Vec<(usize, usize)>,
}

impl DipoleTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        let d = self.samples[i];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Index of the largest dipole magnitude inside each QRS span.
    pub fn r_peaks(&self) -> Vec<usize> {
        self.qrs_spans
            .iter()
            .filter(|(s, e)| e > s)
            .map(|&(s, e)| {
                (s..e)
                    .max_by(|&a, &b| self.magnitude(a).total_cmp(&self.magnitude(b)))
                    .expect("non-empty span")
            })
            .collect()
    }

    /// Same timing and labels, all samples zero.
    pub fn zeroed(&self) -> Self {
        Self {
            samples: vec![[0.0; 3]; self.samples.len()],
            ..self.clone()
        }
    }
}

pub fn generate_dipole_trajectory(
    params: &BeatParams,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<DipoleTrajectory> {
    params.validate()?;
    if !(sample_rate_hz >= 100.0 && sample_rate_hz.is_finite()) {
        return Err(Error::config(format!(
            "sample rate {sample_rate_hz} Hz below 100 Hz"
        )));
    }
    let rr0 = params.rr_seconds();
    if !(duration_s >= rr0 && duration_s.is_finite()) {
        return Err(Error::config(format!(
            "duration {duration_s} s shorter than one beat ({rr0} s)"
        )));
    }

    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut jitter_rng = rng::seeded(rng::derive(seed, "rr-jitter"));
    let mut onsets_s = Vec::new();
    let mut rr_s = Vec::new();
    let mut t = 0.0;
    while t < duration_s - 1e-12 {
        let z: f64 = StandardNormal.sample(&mut jitter_rng);
        let rr = rr0 * (1.0 + params.rr_jitter_fraction * z.clamp(-3.0, 3.0));
        onsets_s.push(t);
        rr_s.push(rr);
        t += rr;
    }

    let mut samples = vec![[0.0f64; 3]; n];
    let mut labels = vec![Segment::Baseline; n];
    let mut qrs_spans = Vec::with_capacity(onsets_s.len());
    let to_index = |t: f64| (t * sample_rate_hz).round();

    for (&onset, &rr) in onsets_s.iter().zip(&rr_s) {
        let phase_to_s = |phase: f64| onset + phase / TAU * rr;

        for comp in params
            .p
            .components
            .iter()
            .chain(&params.qrs.components)
            .chain(&params.t.components)
        {
            let center = phase_to_s(comp.center_rad) * sample_rate_hz;
            let width = comp.width_rad / TAU * rr * sample_rate_hz;
            let lo = (center - SUPPORT_WIDTHS * width).floor().max(0.0) as usize;
            let hi = ((center + SUPPORT_WIDTHS * width).ceil().max(0.0) as usize).min(n);
            for (k, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                let u = (k as f64 - center) / width;
                let g = (-0.5 * u * u).exp();
                for axis in 0..3 {
                    s[axis] += comp.amplitude_mv[axis] * g;
                }
            }
        }

        let clamp = |x: f64| (x.max(0.0) as usize).min(n);
        let span_idx = |(a, b): (f64, f64)| {
            (
                clamp(to_index(phase_to_s(a))),
                clamp(to_index(phase_to_s(b))),
            )
        };
        let p = params.p.span().map(span_idx);
        let q = span_idx(params.qrs.span().expect("validated non-empty"));
        let t = params.t.span().map(span_idx);
        let mut mark = |(a, b): (usize, usize), seg: Segment| {
            for l in &mut labels[a..b.max(a)] {
                *l = seg;
            }
        };
        if let Some(p) = p {
            mark(p, Segment::P);
            mark((p.1, q.0), Segment::PQ);
        }
        mark(q, Segment::QRS);
        if let Some(t) = t {
            mark((q.1, t.0), Segment::ST);
            mark(t, Segment::T);
        }
        qrs_spans.push(q);
    }

    let beat_onsets = onsets_s
        .iter()
        .map(|&t| to_index(t) as usize)
        .filter(|&i| i < n)
        .collect::<Vec<_>>();
    rr_s.truncate(beat_onsets.len());
    qrs_spans.truncate(beat_onsets.len());

    Ok(DipoleTrajectory {
        sample_rate_hz,
        samples,
        segment_labels: labels,
        beat_onsets,
        rr_s,
        qrs_spans,
    })
}

/// Ground-truth beat annotations accompanying a synthesized record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub r_peaks: Vec<usize>,
    pub beat_onsets: Vec<usize>,
}

/// Projects every trajectory sample onto the 12 leads. Limb leads go through
/// electrode potentials so the Einthoven and Goldberger identities hold.
pub fn synthesize_record(
    traj: &DipoleTrajectory,
    sys: &LeadSystem,
) -> Result<(MultiLeadRecord, Annotations)> {
    if traj.samples.len() != traj.segment_labels.len() {
        return Err(Error::invalid("trajectory labels do not cover all samples"));
    }
    if traj.samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("trajectory contains non-finite samples"));
    }
    let n = traj.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 12];
    for d in &traj.samples {
        let p = sys.limb_potentials(d);
        let limb = limb_leads_from_potentials(p)?;
        let aug = augmented_from_potentials(p)?;
        for (col, v) in cols
            .iter_mut()
            .zip([limb.i, limb.ii, limb.iii, aug.avr, aug.avl, aug.avf])
        {
            col.push(v);
        }
        for (k, label) in LEAD_LABELS[6..].iter().enumerate() {
            cols[6 + k].push(project_dipole(d, sys, label)?);
        }
    }
    let leads = LEAD_LABELS
        .iter()
        .zip(cols)
        .map(|(l, samples)| Lead {
            label: l.to_string(),
            samples,
        })
        .collect();
    let rec = MultiLeadRecord::new(traj.sample_rate_hz, Units::Millivolts, leads)?;
    let ann = Annotations {
        r_peaks: traj.r_peaks(),
        beat_onsets: traj.beat_onsets.clone(),
    };
    Ok((rec, ann))
}

/// Convenience: generate and project in one call.
pub fn synthesize(
    params: &BeatParams,
    sys: &LeadSystem,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<(MultiLeadRecord, Annotations, DipoleTrajectory)> {
    let traj = generate_dipole_trajectory(params, duration_s, sample_rate_hz, seed)?;
    let (rec, ann) = synthesize_record(&traj, sys)?;
    Ok((rec, ann, traj))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fiducials {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqrstTemplate {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub fiducials: Fiducials,
}

/// Textbook single lead-II beat, one second long, R normalized to 1 mV.
pub fn ideal_pqrst_template(sample_rate_hz: f64) -> Result<PqrstTemplate> {
    if !(sample_rate_hz >= 100.0 && sample_rate_hz.is_finite()) {
        return Err(Error::config(
            "template sample rate must be at least 100 Hz",
        ));
    }
    // (centre s, width s, amplitude mV)
    const WAVES: [(f64, f64, f64); 5] = [
        (0.100, 0.025, 0.13),
        (0.245, 0.008, -0.09),
        (0.265, 0.010, 1.20),
        (0.285, 0.010, -0.19),
        (0.550, 0.050, 0.30),
    ];
    let n = sample_rate_hz.round() as usize;
    let mut x = vec![0.0; n];
    for (k, v) in x.iter_mut().enumerate() {
        let t = k as f64 / sample_rate_hz;
        *v = WAVES
            .iter()
            .map(|(c, w, a)| a * (-0.5 * ((t - c) / w).powi(2)).exp())
            .sum();
    }
    let idx = |t: f64| ((t * sample_rate_hz).round() as usize).min(n - 1);
    let argmax =
        |a: usize, b: usize, x: &[f64]| (a..b).max_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap();
    let argmin =
        |a: usize, b: usize, x: &[f64]| (a..b).min_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap();
    let r = argmax(idx(0.2), idx(0.33), &x);
    let peak = x[r];
    for v in &mut x {
        *v /= peak;
    }
    x[r] = 1.0;
    let fiducials = Fiducials {
        p: argmax(idx(0.03), idx(0.18), &x),
        q: argmin(idx(0.2), r, &x),
        r,
        s: argmin(r + 1, idx(0.33), &x),
        t: argmax(idx(0.4), idx(0.75), &x),
    };
    Ok(PqrstTemplate {
        sample_rate_hz,
        samples: x,
        fiducials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leads::einthoven_residual;
    use crate::record::correlation;

    fn default_record(duration: f64, fs: f64) -> (MultiLeadRecord, Annotations, DipoleTrajectory) {
        synthesize(
            &BeatParams::default(),
            &LeadSystem::default(),
            duration,
            fs,
            1,
        )
        .unwrap()
    }

    #[test]
    fn sixty_bpm_gives_ten_equally_spaced_onsets() {
        let traj = generate_dipole_trajectory(&BeatParams::default(), 10.0, 500.0, 3).unwrap();
        assert_eq!(traj.beat_onsets.len(), 10);
        for w in traj.beat_onsets.windows(2) {
            assert_eq!(w[1] - w[0], 500);
        }
    }

    #[test]
    fn zero_jitter_gives_equal_rr() {
        let mut p = BeatParams::default();
        p.heart_rate_bpm = 73.0;
        let traj = generate_dipole_trajectory(&p, 20.0, 500.0, 9).unwrap();
        assert!(traj.rr_s.iter().all(|&rr| rr == traj.rr_s[0]));
    }

    #[test]
    fn beat_count_matches_rate() {
        let mut p = BeatParams::default();
        p.rr_jitter_fraction = 0.05;
        for (hr, dur) in [(45.0, 30.0), (72.0, 17.0), (150.0, 9.0)] {
            p.heart_rate_bpm = hr;
            let traj = generate_dipole_trajectory(&p, dur, 500.0, 4).unwrap();
            let expected = (dur * hr / 60.0).floor() as i64;
            assert!(
                (traj.beat_onsets.len() as i64 - expected).abs() <= 1,
                "hr {hr}"
            );
            assert!(traj.beat_onsets.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn one_contiguous_qrs_per_beat() {
        let traj = generate_dipole_trajectory(&BeatParams::default(), 10.0, 500.0, 2).unwrap();
        let mut runs = 0;
        let mut prev = Segment::Baseline;
        for &s in &traj.segment_labels {
            if s == Segment::QRS && prev != Segment::QRS {
                runs += 1;
            }
            prev = s;
        }
        assert_eq!(runs, traj.beat_onsets.len());
    }

    #[test]
    fn qrs_dominates_p() {
        // Measured on the default parameter set.
        let traj = generate_dipole_trajectory(&BeatParams::default(), 5.0, 500.0, 0).unwrap();
        let peak_in = |seg: Segment| {
            (0..traj.len())
                .filter(|&i| traj.segment_labels[i] == seg)
                .map(|i| traj.magnitude(i))
                .fold(0.0, f64::max)
        };
        assert!(peak_in(Segment::QRS) > 5.0 * peak_in(Segment::P));
    }

    #[test]
    fn loop_closes_between_beats() {
        let traj = generate_dipole_trajectory(&BeatParams::default(), 10.0, 500.0, 0).unwrap();
        let peak = (0..traj.len())
            .map(|i| traj.magnitude(i))
            .fold(0.0, f64::max);
        for &onset in &traj.beat_onsets[1..] {
            assert!(traj.magnitude(onset) < 0.05 * peak);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut p = BeatParams::default();
        p.rr_jitter_fraction = 0.1;
        let a = generate_dipole_trajectory(&p, 12.0, 360.0, 77).unwrap();
        let b = generate_dipole_trajectory(&p, 12.0, 360.0, 77).unwrap();
        assert_eq!(a, b);
        let c = generate_dipole_trajectory(&p, 12.0, 360.0, 78).unwrap();
        assert_ne!(a.beat_onsets, c.beat_onsets);
    }

    #[test]
    fn config_errors() {
        let p = BeatParams::default();
        assert!(matches!(
            generate_dipole_trajectory(&p, 10.0, 50.0, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_dipole_trajectory(&p, 0.5, 500.0, 0),
            Err(Error::Config(_))
        ));
        let mut bad = p.clone();
        bad.heart_rate_bpm = 300.0;
        assert!(bad.validate().is_err());
        let mut swapped = p.clone();
        std::mem::swap(&mut swapped.p, &mut swapped.t);
        assert!(swapped.validate().is_err());
    }

    #[test]
    fn lead_ii_r_positive_and_largest_limb_lead() {
        let (rec, ann, _) = default_record(10.0, 500.0);
        let r = ann.r_peaks[3];
        let window = r.saturating_sub(25)..r + 25;
        let peak = |l: &str| {
            rec.lead(l).unwrap()[window.clone()]
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max)
        };
        let ii = peak("II");
        assert!(ii > 0.0);
        for l in ["I", "III", "aVR", "aVL", "aVF"] {
            assert!(ii > peak(l), "II {ii} vs {l} {}", peak(l));
        }
    }

    #[test]
    fn v1_negative_v6_positive_qrs_area() {
        let (rec, _, traj) = default_record(10.0, 500.0);
        let (s, e) = traj.qrs_spans[2];
        let area = |l: &str| rec.lead(l).unwrap()[s..e].iter().sum::<f64>();
        assert!(area("V1") < 0.0);
        assert!(area("V6") > 0.0);
    }

    #[test]
    fn zero_trajectory_gives_zero_record() {
        let traj = generate_dipole_trajectory(&BeatParams::default(), 3.0, 250.0, 0)
            .unwrap()
            .zeroed();
        let (rec, _) = synthesize_record(&traj, &LeadSystem::default()).unwrap();
        assert_eq!(rec.lead_count(), 12);
        assert_eq!(rec.energy(), 0.0);
    }

    #[test]
    fn limb_identities_in_synthesized_record() {
        let (rec, _, _) = default_record(8.0, 500.0);
        assert!(einthoven_residual(&rec)
            .unwrap()
            .iter()
            .all(|r| r.abs() <= 1e-9));
        let (avr, avl, avf) = (
            rec.lead("aVR").unwrap(),
            rec.lead("aVL").unwrap(),
            rec.lead("aVF").unwrap(),
        );
        let (i, ii) = (rec.lead("I").unwrap(), rec.lead("II").unwrap());
        for k in 0..rec.len() {
            assert!((avr[k] + avl[k] + avf[k]).abs() < 1e-9);
            assert!((avr[k] + (i[k] + ii[k]) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flipping_qrs_negates_qrs_deflection() {
        let mut only_qrs = BeatParams::default();
        only_qrs.p = WaveLoop::default();
        only_qrs.t = WaveLoop::default();
        let mut flipped = only_qrs.clone();
        flipped.qrs = only_qrs.qrs.negated();
        let sys = LeadSystem::default();
        let (a, _, _) = synthesize(&only_qrs, &sys, 4.0, 500.0, 1).unwrap();
        let (b, _, _) = synthesize(&flipped, &sys, 4.0, 500.0, 1).unwrap();
        for (la, lb) in a.leads().iter().zip(b.leads()) {
            for (x, y) in la.samples.iter().zip(&lb.samples) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn annotated_r_peaks_sit_in_qrs() {
        let mut p = BeatParams::default();
        p.rr_jitter_fraction = 0.08;
        let traj = generate_dipole_trajectory(&p, 30.0, 500.0, 21).unwrap();
        for r in traj.r_peaks() {
            assert_eq!(traj.segment_labels[r], Segment::QRS);
        }
    }

    #[test]
    fn template_fiducials_and_normalization() {
        let t = ideal_pqrst_template(500.0).unwrap();
        let f = t.fiducials;
        assert!(f.p < f.q && f.q < f.r && f.r < f.s && f.s < f.t);
        let max = t.samples.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        assert_eq!(t.samples[f.r], 1.0);
        assert!(ideal_pqrst_template(50.0).is_err());
    }

    #[test]
    fn template_matches_default_lead_ii_beat() {
        // Regression bound: computed against the default parameter set.
        let (rec, _, traj) = default_record(5.0, 500.0);
        let t = ideal_pqrst_template(500.0).unwrap();
        let start = traj.beat_onsets[1];
        let beat = &rec.lead("II").unwrap()[start..start + t.samples.len()];
        let c = correlation(beat, &t.samples);
        assert!(c >= 0.9, "correlation {c}");
    }
}
