//! End-to-end acceptance criteria. Runs as a plain binary so every
//! criterion prints one PASS/FAIL line with its measured values.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use ecgsim::container::write_record;
use ecgsim::dsp::emd::{emd, split_baseline, EmdSpec};
use ecgsim::dsp::fir::{apply_fir, design_equiripple, FilterMode, FirDesignSpec};
use ecgsim::dsp::nlms::{adaptive_cancel, AdaptiveSpec};
use ecgsim::dsp::pipeline::{run_pipeline, BandpassStage, NotchStage, Stage, WaveletStage};
use ecgsim::dsp::wavelet::{dmey_lowpass, dwt, idwt, wavelet_denoise, WaveletSpec};
use ecgsim::experiment::{run_experiment, run_experiment_with, ExperimentConfig, Report};
use ecgsim::leads::{
    augmented_from_potentials, limb_leads_from_potentials, LeadSystem, LimbPotentials,
};
use ecgsim::noise::{add_emg, snr_db, AccelStream, EmgSpec};
use ecgsim::record::{MultiLeadRecord, Units};
use ecgsim::rhythm::{detect_r_peaks, match_peaks, DetectionParams, MatchStats};
use ecgsim::rng::seeded;
use ecgsim::synth::{synthesize, Annotations, BeatParams};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn clean(duration_s: f64, fs: f64, seed: u64) -> (MultiLeadRecord, Annotations) {
    let (rec, ann, _) = synthesize(
        &BeatParams::fig2_default(),
        &LeadSystem::default(),
        duration_s,
        fs,
        seed,
    )
    .unwrap();
    (rec, ann)
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn snr(clean: &[f64], test: &[f64]) -> f64 {
    let noise: Vec<f64> = clean.iter().zip(test).map(|(a, b)| b - a).collect();
    10.0 * (power(clean) / power(&noise)).log10()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// |H(f)| by direct summation of the DTFT.
fn dtft_mag(taps: &[f64], f_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f_hz / fs;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (k, h)| {
            (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
        });
    re.hypot(im)
}

fn lead_identities() -> Outcome {
    let mut rng = seeded(20_240_501);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = LimbPotentials {
            ra: rng.random_range(-5.0..5.0),
            la: rng.random_range(-5.0..5.0),
            ll: rng.random_range(-5.0..5.0),
        };
        let limb = limb_leads_from_potentials(p).unwrap();
        let aug = augmented_from_potentials(p).unwrap();
        // Independent oracle: II is LL against RA.
        worst = worst
            .max((limb.ii - (p.ll - p.ra)).abs())
            .max((limb.ii - (limb.i + limb.iii)).abs())
            .max((aug.avr + aug.avl + aug.avf).abs());
    }
    for seed in 0..5 {
        let (rec, _) = clean(10.0, 500.0, seed);
        let lead = |l: &str| rec.lead(l).unwrap();
        for k in 0..rec.len() {
            worst = worst
                .max((lead("II")[k] - lead("I")[k] - lead("III")[k]).abs())
                .max((lead("aVR")[k] + lead("aVL")[k] + lead("aVF")[k]).abs());
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max identity residual {worst:.2e} mV (limit 1e-9)"),
    )
}

fn morphology() -> Outcome {
    let (rec, ann) = clean(10.0, 500.0, 1);
    let ii = rec.lead("II").unwrap();
    let (max, min) = ii
        .iter()
        .fold((f64::MIN, f64::MAX), |(a, b), v| (a.max(*v), b.min(*v)));
    // QRS net area over ±40 ms around each R peak.
    let half = 20;
    let area = |l: &str| -> f64 {
        let x = rec.lead(l).unwrap();
        ann.r_peaks
            .iter()
            .map(|&r| {
                x[r.saturating_sub(half)..(r + half).min(x.len())]
                    .iter()
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 500.0
    };
    let (v1, v6) = (area("V1"), area("V6"));
    outcome(
        max > 0.0 && max > -min && v1 < 0.0 && v6 > 0.0,
        format!("II peak +{max:.3}/{min:.3} mV, QRS area V1 {v1:.4} V6 {v6:.4} mV·s"),
    )
}

fn notch_efficacy() -> Outcome {
    let fs = 500.0;
    let (rec, _) = clean(20.0, fs, 3);
    let rec = rec.select(&["II", "V2", "V5"]).unwrap();
    let corrupted = rec
        .map_leads(Units::Millivolts, |_, lead| {
            let a = (2.0 * power(&lead.samples)).sqrt();
            Ok(lead
                .samples
                .iter()
                .enumerate()
                .map(|(k, v)| v + a * (2.0 * PI * 50.0 * k as f64 / fs + 0.3).sin())
                .collect())
        })
        .unwrap();
    let input = snr_db(&rec, &corrupted).unwrap();
    let spec = FirDesignSpec::default_notch(fs);
    let taps = design_equiripple(&spec).unwrap();
    let out = apply_fir(&corrupted, &taps, FilterMode::ZeroPhase).unwrap();
    let output = snr_db(&rec, &out).unwrap();
    let atten = -20.0 * dtft_mag(&taps, 50.0, fs).log10();
    let pass: Vec<f64> = (0..=2000)
        .map(|k| k as f64 * fs / 2.0 / 2000.0)
        .filter(|&f| f <= 48.0 - spec.transition_hz || f >= 52.0 + spec.transition_hz)
        .map(|f| dtft_mag(&taps, f, fs))
        .collect();
    let (lo, hi) = pass
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), m| (a.min(*m), b.max(*m)));
    let ripple = 20.0 * (hi / lo).log10();
    outcome(
        output >= 30.0 && atten >= 40.0 && ripple <= 1.0,
        format!(
            "SNR {input:.2} -> {output:.1} dB, |H(50 Hz)| -{atten:.1} dB, passband ripple {ripple:.3} dB, {} taps",
            taps.len()
        ),
    )
}

fn emd_baseline() -> Outcome {
    let fs = 250.0;
    let (rec, _) = clean(60.0, fs, 4);
    let ii = rec.lead("II").unwrap();
    let wander: Vec<f64> = (0..ii.len())
        .map(|k| (2.0 * PI * 0.3 * k as f64 / fs + 0.7).sin())
        .collect();
    let x: Vec<f64> = ii.iter().zip(&wander).map(|(a, b)| a + b).collect();
    let spec = EmdSpec::default();
    let split = split_baseline(&x, fs, &spec).unwrap();
    let corr = pearson(&split.baseline, &wander);
    let d = emd(&x, &spec).unwrap();
    let rebuilt = d.reconstruct();
    let num: f64 = rebuilt.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = x.iter().map(|v| v * v).sum();
    let completeness = (num / den).sqrt();
    outcome(
        corr >= 0.9 && completeness <= 1e-6,
        format!(
            "baseline correlation {corr:.4}, completeness {completeness:.2e}, {} IMFs",
            d.imfs.len()
        ),
    )
}

fn wavelet_denoising() -> Outcome {
    let h = dmey_lowpass(62).unwrap();
    let mut rng = seeded(8);
    let mut worst: f64 = 0.0;
    for p in 8..=14 {
        let x: Vec<f64> = (0..1usize << p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let y = idwt(&dwt(&x, &h, 5).unwrap(), &h);
        let num: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
        worst = worst.max((num / x.iter().map(|v| v * v).sum::<f64>()).sqrt());
    }
    let fs = 500.0;
    let mut gains = Vec::new();
    for seed in 0..5 {
        let (rec, _) = clean(16.384, fs, 100 + seed);
        let rms = (power(
            &rec.leads()
                .iter()
                .flat_map(|l| l.samples.clone())
                .collect::<Vec<_>>(),
        ))
        .sqrt();
        let emg = EmgSpec {
            band_hz: (20.0, 240.0),
            rms_mv: rms * 10f64.powf(-5.0 / 20.0),
        };
        let noisy = add_emg(&rec, &emg, 200 + seed).unwrap().record;
        let den = wavelet_denoise(&noisy, &WaveletSpec::default(), None).unwrap();
        gains.push(snr_db(&rec, &den).unwrap() - snr_db(&rec, &noisy).unwrap());
    }
    let min_gain = gains.iter().cloned().fold(f64::MAX, f64::min);
    outcome(
        worst <= 1e-8 && min_gain >= 5.0,
        format!(
            "round-trip {worst:.2e}, SNR gain at 5 dB input min {min_gain:.2} dB over {} seeds",
            gains.len()
        ),
    )
}

fn adaptive_cancellation() -> Outcome {
    let fs = 500.0;
    let (rec, _) = clean(30.0, fs, 6);
    let rec = rec.select(&["I", "II", "V1", "V4"]).unwrap();
    let n = rec.len();
    let mut rng = seeded(60);
    let mut s = [0.0; 3];
    let accel: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            for v in s.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = 0.9 * *v + 0.4 * z;
            }
            s
        })
        .collect();
    let stream = AccelStream {
        sample_rate_hz: fs,
        samples: accel.clone(),
    };
    let mix = [0.6, -0.4, 0.25];
    let noisy = rec
        .map_leads(Units::Millivolts, |i, lead| {
            let g = 1.0 + 0.2 * i as f64;
            Ok(lead
                .samples
                .iter()
                .zip(&accel)
                .map(|(v, a)| v + g * (mix[0] * a[0] + mix[1] * a[1] + mix[2] * a[2]))
                .collect())
        })
        .unwrap();
    let out = adaptive_cancel(&noisy, &stream, &AdaptiveSpec::default()).unwrap();
    let settle = (10.0 * fs) as usize;
    let mut worst_gain = f64::MAX;
    for ((c, x), y) in rec.leads().iter().zip(noisy.leads()).zip(out.leads()) {
        let gain = snr(&c.samples[settle..], &y.samples[settle..])
            - snr(&c.samples[settle..], &x.samples[settle..]);
        worst_gain = worst_gain.min(gain);
    }
    let quiet = AccelStream::zeros(fs, n);
    let passthrough = adaptive_cancel(&noisy, &quiet, &AdaptiveSpec::default()).unwrap();
    let exact = passthrough == noisy;
    outcome(
        worst_gain >= 15.0 && exact,
        format!("post-convergence SNR gain min {worst_gain:.1} dB, zero-reference passthrough bit-exact: {exact}"),
    )
}

fn mv_pipeline() -> Vec<Stage> {
    vec![
        Stage::Notch(NotchStage::default()),
        Stage::Bandpass(BandpassStage::default()),
        Stage::EmdBaseline(EmdSpec::default()),
        Stage::Wavelet(WaveletStage::default()),
    ]
}

fn detection() -> Outcome {
    let fs = 500.0;
    let tol = (0.050 * fs) as usize;
    let mut total = MatchStats::default();
    for seed in 0..20 {
        let (rec, ann) = clean(20.0, fs, 1000 + seed);
        let rms = power(
            &rec.leads()
                .iter()
                .flat_map(|l| l.samples.clone())
                .collect::<Vec<_>>(),
        )
        .sqrt();
        let emg = EmgSpec {
            band_hz: (20.0, 240.0),
            rms_mv: rms * 10f64.powf(-10.0 / 20.0),
        };
        let noisy = add_emg(&rec, &emg, 2000 + seed).unwrap().record;
        let cleaned = run_pipeline(&noisy, None, &mv_pipeline(), false)
            .unwrap()
            .record;
        let found = detect_r_peaks(&cleaned, &DetectionParams::default()).unwrap();
        total.merge(match_peaks(&found.indices, &ann.r_peaks, tol));
    }
    let (se, pp) = (total.sensitivity(), total.precision());
    outcome(
        se >= 0.95 && pp >= 0.95,
        format!(
            "sensitivity {se:.4}, precision {pp:.4} (TP {} FP {} FN {}) over 20 records",
            total.true_positives, total.false_positives, total.false_negatives
        ),
    )
}

fn scenario_orderings() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 1..=3 {
        let report = |name: &str| -> Report {
            run_experiment(&ExperimentConfig::preset(name, seed).unwrap())
                .unwrap()
                .report
        };
        let no = report("no-electrode");
        let with = report("with-electrode");
        let motion = report("rest-to-motion");
        let dc_ok = with.dc_range.all_lead_span < no.dc_range.all_lead_span;
        let snr_ok = matches!((with.output_snr_db, no.output_snr_db), (Some(a), Some(b)) if a > b);
        let flagged = motion.artifacts.flagged_event_fraction.unwrap_or(0.0);
        let masked = motion.hrv.masked_mean_hr_error.unwrap_or(f64::INFINITY);
        let unmasked = motion.hrv.unmasked_mean_hr_error.unwrap_or(f64::INFINITY);
        pass &= dc_ok && snr_ok && flagged >= 0.9 && masked <= 0.10 && unmasked > masked;
        lines.push(format!(
            "seed {seed}: DC range {:.0} vs {:.0} counts, output SNR {:.2} vs {:.2} dB, events flagged {:.0}%, \
             mean-HR error masked {:.2}% unmasked {:.2}%",
            with.dc_range.all_lead_span,
            no.dc_range.all_lead_span,
            with.output_snr_db.unwrap_or(f64::NAN),
            no.output_snr_db.unwrap_or(f64::NAN),
            100.0 * flagged,
            100.0 * masked,
            100.0 * unmasked
        ));
    }
    outcome(pass, lines.join("; "))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig::preset("rest-to-motion", 7).unwrap();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment_with(&cfg, |name, c| {
            write_record(&dir.path().join(format!("{name}.json")), c).map(|_| ())
        })
        .unwrap();
        std::fs::write(
            dir.path().join("report.json"),
            out.report.to_json().unwrap(),
        )
        .unwrap();
        dir_bytes(dir.path())
    };
    let (a, b) = (run(), run());
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    outcome(
        a == b,
        format!(
            "{} files, {bytes} bytes, identical across reruns: {}",
            a.len(),
            a == b
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Duration); 9] = [
        ("lead identities", lead_identities, Duration::from_secs(5)),
        ("morphology", morphology, Duration::from_secs(1)),
        ("notch efficacy", notch_efficacy, Duration::from_secs(5)),
        ("EMD baseline", emd_baseline, Duration::from_secs(30)),
        (
            "wavelet denoising",
            wavelet_denoising,
            Duration::from_secs(30),
        ),
        (
            "adaptive cancellation",
            adaptive_cancellation,
            Duration::from_secs(10),
        ),
        ("R-peak detection", detection, Duration::from_secs(60)),
        (
            "scenario orderings",
            scenario_orderings,
            Duration::from_secs(60),
        ),
        ("determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = check();
        let took = t0.elapsed();
        let ok = result.pass && took <= *budget;
        if !ok {
            failures += 1;
        }
        println!(
            "[{}] {}. {name}: {} ({:.2} s, budget {} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
