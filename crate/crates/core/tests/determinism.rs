use std::fs;

use ecgsim::container::write_record;
use ecgsim::experiment::{run_experiment, ExperimentConfig};

fn short(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("with-electrode", seed).unwrap();
    cfg.duration_s = 12.0;
    cfg.outputs.emit_plots = true;
    cfg
}

#[test]
fn same_seed_same_bytes() {
    let a = run_experiment(&short(21)).unwrap();
    let b = run_experiment(&short(21)).unwrap();
    assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
    assert_eq!(a.plot_csv, b.plot_csv);

    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    for ((name, ca), (_, cb)) in a.containers.iter().zip(&b.containers) {
        write_record(&da.path().join(format!("{name}.json")), ca).unwrap();
        write_record(&db.path().join(format!("{name}.json")), cb).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(da.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 8);
    for n in names {
        assert_eq!(
            fs::read(da.path().join(&n)).unwrap(),
            fs::read(db.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn different_seed_different_noise() {
    let a = run_experiment(&short(21)).unwrap();
    let b = run_experiment(&short(22)).unwrap();
    assert_ne!(a.containers[1].1.record, b.containers[1].1.record);
    assert_ne!(a.report.config_sha256, b.report.config_sha256);
}
