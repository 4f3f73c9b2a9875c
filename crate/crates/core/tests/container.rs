use std::fs;
use std::path::Path;

use ecgsim::container::{read_header, read_record, write_record, RecordContainer, FORMAT_VERSION};
use ecgsim::dsp::pipeline::default_pipeline;
use ecgsim::error::Error;
use ecgsim::experiment::{run_experiment, ExperimentConfig};
use ecgsim::leads::LeadSystem;
use ecgsim::noise::{corrupt, NoiseSpec};
use ecgsim::rhythm::{build_rr, RPeakAnnotations};
use ecgsim::synth::{synthesize, BeatParams};

fn full_container() -> RecordContainer {
    let (rec, ann, _) = synthesize(
        &BeatParams::fig2_default(),
        &LeadSystem::default(),
        5.0,
        500.0,
        4,
    )
    .unwrap();
    let noise = NoiseSpec::preset("resting", 9).unwrap();
    let c = corrupt(&rec, &noise).unwrap();
    let peaks = RPeakAnnotations::ground_truth(ann.r_peaks).unwrap();
    let mut out = RecordContainer::new(c.record);
    out.seeds.insert("synth".into(), 4);
    out.seeds.insert("noise".into(), 9);
    for stage in default_pipeline().iter().take(3) {
        out.push_stage(stage);
    }
    out.events = c.events;
    out.rr = Some(build_rr(&peaks, 500.0).unwrap());
    out.annotations = Some(peaks);
    out.accel = Some(c.accel);
    out
}

fn flip_byte(path: &Path, at: usize) {
    let mut bytes = fs::read(path).unwrap();
    bytes[at] ^= 0x01;
    fs::write(path, bytes).unwrap();
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let c = full_container();
    let path = write_record(&dir.path().join("rec.json"), &c).unwrap();
    let back = read_record(&path).unwrap();
    assert_eq!(back, c);
    for (a, b) in back.record.leads().iter().zip(c.record.leads()) {
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn every_experiment_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("with-electrode", 5).unwrap();
    cfg.duration_s = 12.0;
    let out = run_experiment(&cfg).unwrap();
    for (name, c) in &out.containers {
        let path = write_record(&dir.path().join(format!("{name}.json")), c).unwrap();
        assert_eq!(&read_record(&path).unwrap(), c, "{name}");
    }
}

#[test]
fn header_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = full_container();
    c.rr = None;
    assert_eq!(c.sidecar_count(), 3);
    let path = write_record(&dir.path().join("rec.json"), &c).unwrap();
    let h = read_header(&path).unwrap();
    assert_eq!(h.version, FORMAT_VERSION);
    assert_eq!(h.leads.len(), 12);
    assert_eq!(h.sidecars.len(), 3);
    assert_eq!(h.samples_per_lead, 2500);
    assert_eq!(h.payload.bytes, 12 * 2500 * 8);
    assert_eq!(h.provenance.len(), 3);
    let back = read_record(&path).unwrap();
    assert_eq!(back.record.lead_count(), h.leads.len());
    assert_eq!(back.sidecar_count(), 3);
}

#[test]
fn flipped_payload_byte_is_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_record(&dir.path().join("rec.json"), &full_container()).unwrap();
    flip_byte(&dir.path().join("rec.bin"), 1234);
    let err = read_record(&path).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn flipped_checksum_in_header_is_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_record(&dir.path().join("rec.json"), &full_container()).unwrap();
    let h = read_header(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let sum = &h.sidecars["events"].sha256;
    let flipped: String = sum
        .chars()
        .enumerate()
        .map(|(i, ch)| {
            if i == 0 {
                if ch == '0' {
                    '1'
                } else {
                    '0'
                }
            } else {
                ch
            }
        })
        .collect();
    fs::write(&path, text.replace(sum.as_str(), &flipped)).unwrap();
    assert!(matches!(read_record(&path), Err(Error::Integrity(_))));
}

#[test]
fn truncated_sidecar_is_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_record(&dir.path().join("rec.json"), &full_container()).unwrap();
    let accel = dir.path().join("rec.accel.csv");
    let bytes = fs::read(&accel).unwrap();
    fs::write(&accel, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(read_record(&path), Err(Error::Integrity(_))));
}

#[test]
fn version_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_record(&dir.path().join("rec.json"), &full_container()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace(FORMAT_VERSION, "ecgsim-record/99")).unwrap();
    match read_record(&path) {
        Err(Error::UnsupportedVersion(v)) => assert_eq!(v, "ecgsim-record/99"),
        other => panic!("expected version error, got {other:?}"),
    }
}

#[test]
fn rewrite_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let c = full_container();
    let path = dir.path().join("rec.json");
    write_record(&path, &c).unwrap();
    write_record(&path, &c).unwrap();
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1 + c.sidecar_count() + 1, "{names:?}");
    assert!(names.iter().all(|n| n.starts_with("rec.")));
}
