//! Python bindings. Structured results (reports, spans, match statistics)
//! cross the boundary as plain dicts; signals as lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ecgsim::channel::{apply_channel, dc_range, ChannelSpec, CHANNEL_PRESETS};
use ecgsim::container::{read_record, write_record, RecordContainer};
use ecgsim::dsp::pipeline::{default_pipeline, parse_pipeline, run_pipeline, Stage};
use ecgsim::error::Error;
use ecgsim::experiment::{run_experiment, ExperimentConfig, EXPERIMENT_PRESETS};
use ecgsim::leads::LeadSystem;
use ecgsim::noise::{self, NoiseSpec};
use ecgsim::record::{Event, EventKind, Units};
use ecgsim::rhythm::{self, DetectionParams, RPeakAnnotations};
use ecgsim::rng::derive;
use ecgsim::synth::{synthesize, BeatParams};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(
    py: Python<'_>,
    value: &Bound<'_, PyAny>,
    what: &str,
) -> PyResult<T> {
    let text: String = if let Ok(s) = value.extract::<String>() {
        s
    } else {
        py.import("json")?
            .call_method1("dumps", (value,))?
            .extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// A multi-lead record together with its seeds, provenance, events,
/// annotations, accelerometer stream and RR series.
#[pyclass(name = "Record", module = "ecgsim_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyRecord {
    inner: RecordContainer,
}

#[pymethods]
impl PyRecord {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_record(&path).map_err(py_err)?,
        })
    }

    /// Writes the container; returns the header path.
    fn save(&self, path: PathBuf) -> PyResult<PathBuf> {
        write_record(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.record.sample_rate_hz()
    }

    #[getter]
    fn units(&self) -> &'static str {
        self.inner.record.units().as_str()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner
            .record
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.record.len()
    }

    fn lead(&self, label: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.record.lead(label).map_err(py_err)?.to_vec())
    }

    /// R-peak sample indices, if the record carries annotations.
    #[getter]
    fn r_peaks(&self) -> Option<Vec<usize>> {
        self.inner.annotations.as_ref().map(|a| a.indices.clone())
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.events.events)
    }

    #[getter]
    fn seeds(&self) -> std::collections::BTreeMap<String, u64> {
        self.inner.seeds.clone()
    }

    #[getter]
    fn provenance(&self) -> Vec<String> {
        self.inner
            .provenance
            .iter()
            .map(|p| p.stage.clone())
            .collect()
    }

    #[getter]
    fn has_accel(&self) -> bool {
        self.inner.accel.is_some()
    }

    /// Largest single-lead span and widest spread of lead means.
    fn dc_range<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &dc_range(&self.inner.record).map_err(py_err)?)
    }

    fn __repr__(&self) -> String {
        let r = &self.inner.record;
        format!(
            "Record({} leads x {} samples @ {} Hz, {})",
            r.lead_count(),
            r.len(),
            r.sample_rate_hz(),
            r.units().as_str()
        )
    }
}

/// Clean 12-lead record with ground-truth R peaks.
#[pyfunction]
#[pyo3(signature = (seed, duration_s=10.0, sample_rate_hz=1000.0, preset="fig2-default"))]
fn synth(seed: u64, duration_s: f64, sample_rate_hz: f64, preset: &str) -> PyResult<PyRecord> {
    let beat = BeatParams::preset(preset).map_err(py_err)?;
    let synth_seed = derive(seed, "synth");
    let (rec, ann, _) = synthesize(
        &beat,
        &LeadSystem::default(),
        duration_s,
        sample_rate_hz,
        synth_seed,
    )
    .map_err(py_err)?;
    let mut inner = RecordContainer::new(rec);
    inner.seeds.insert("master".into(), seed);
    inner.seeds.insert("synth".into(), synth_seed);
    inner.annotations = Some(RPeakAnnotations::ground_truth(ann.r_peaks).map_err(py_err)?);
    Ok(PyRecord { inner })
}

/// Adds the named noise preset (or a noise spec dict), then optionally a channel preset.
#[pyfunction]
#[pyo3(signature = (record, seed, noise=None, channel=None))]
fn corrupt(
    py: Python<'_>,
    record: &PyRecord,
    seed: u64,
    noise: Option<&Bound<'_, PyAny>>,
    channel: Option<&str>,
) -> PyResult<PyRecord> {
    let noise_seed = derive(seed, "noise");
    let spec = match noise {
        None => NoiseSpec::preset("resting", noise_seed).map_err(py_err)?,
        Some(n) if n.extract::<String>().is_ok() => {
            NoiseSpec::preset(&n.extract::<String>()?, noise_seed).map_err(py_err)?
        }
        Some(noise) => NoiseSpec {
            seed: noise_seed,
            ..from_py(py, noise, "noise spec")?
        },
    };
    let mut inner = record.inner.clone();
    let c = noise::corrupt(&inner.record, &spec).map_err(py_err)?;
    inner.record = c.record;
    inner.events.extend(c.events);
    inner.accel = Some(c.accel);
    inner.seeds.insert("noise".into(), noise_seed);
    if let Some(name) = channel {
        let channel_seed = derive(seed, "channel");
        let spec = ChannelSpec::preset(name).map_err(py_err)?;
        let (raw, log) = apply_channel(&inner.record, &spec, channel_seed).map_err(py_err)?;
        inner.record = raw;
        inner.events.extend(log);
        inner.seeds.insert("channel".into(), channel_seed);
    }
    let labels = inner
        .record
        .labels()
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    inner
        .events
        .sort_by_lead_order(&labels.iter().map(String::as_str).collect::<Vec<_>>());
    Ok(PyRecord { inner })
}

/// Runs a pipeline given as a list of stage dicts (or JSON text). Without
/// one, the default chain adapted to the record's units and accelerometer.
#[pyfunction]
#[pyo3(signature = (record, pipeline=None))]
fn filter(
    py: Python<'_>,
    record: &PyRecord,
    pipeline: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyRecord> {
    let src = &record.inner;
    let stages: Vec<Stage> = match pipeline {
        Some(p) => {
            let text = match p.extract::<String>() {
                Ok(s) => s,
                Err(_) => py.import("json")?.call_method1("dumps", (p,))?.extract()?,
            };
            parse_pipeline(&text).map_err(py_err)?
        }
        None => default_pipeline()
            .into_iter()
            .filter(|s| match s {
                Stage::Calibrate(_) => src.record.units() == Units::Counts,
                Stage::Adaptive(_) => src.accel.is_some(),
                _ => true,
            })
            .collect(),
    };
    let out = py
        .detach(|| run_pipeline(&src.record, src.accel.as_ref(), &stages, false))
        .map_err(py_err)?;
    let mut inner = src.clone();
    inner.record = out.record;
    inner.extend_provenance(&out.provenance);
    for w in &out.flagged {
        inner.events.push(Event {
            start: w.start,
            end: w.end,
            kind: EventKind::DetectedArtifact,
            lead: None,
            magnitude: 1.0,
        });
    }
    Ok(PyRecord { inner })
}

/// R-peak sample indices. `params` is an optional detection-parameter dict.
#[pyfunction]
#[pyo3(signature = (record, params=None))]
fn detect(
    py: Python<'_>,
    record: &PyRecord,
    params: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<usize>> {
    let params: DetectionParams = match params {
        Some(p) => from_py(py, p, "detection parameters")?,
        None => DetectionParams::default(),
    };
    Ok(rhythm::detect_r_peaks(&record.inner.record, &params)
        .map_err(py_err)?
        .indices)
}

#[pyfunction]
fn match_peaks<'py>(
    py: Python<'py>,
    detected: Vec<usize>,
    truth: Vec<usize>,
    tolerance: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let m = rhythm::match_peaks(&detected, &truth, tolerance);
    let d = PyDict::new(py);
    d.set_item("true_positives", m.true_positives)?;
    d.set_item("false_positives", m.false_positives)?;
    d.set_item("false_negatives", m.false_negatives)?;
    d.set_item("sensitivity", m.sensitivity())?;
    d.set_item("precision", m.precision())?;
    d.set_item("f1", m.f1())?;
    Ok(d)
}

/// HRV summary from R-peak indices, masking RR intervals that touch any
/// (start, end) window.
#[pyfunction]
#[pyo3(signature = (peaks, sample_rate_hz, windows=Vec::new()))]
fn hrv<'py>(
    py: Python<'py>,
    peaks: Vec<usize>,
    sample_rate_hz: f64,
    windows: Vec<(usize, usize)>,
) -> PyResult<Bound<'py, PyAny>> {
    let ann = RPeakAnnotations::ground_truth(peaks).map_err(py_err)?;
    let mut rr = rhythm::build_rr(&ann, sample_rate_hz).map_err(py_err)?;
    if !windows.is_empty() {
        let w: Vec<_> = windows
            .into_iter()
            .map(|(start, end)| ecgsim::dsp::artifact::FlaggedWindow { start, end })
            .collect();
        rr = rhythm::mask_and_interpolate(&rr, &w).map_err(py_err)?;
    }
    to_py(py, &rhythm::hrv_metrics(&rr).map_err(py_err)?)
}

/// Output SNR in dB of `corrupted` against `clean`.
#[pyfunction]
fn snr_db(clean: &PyRecord, corrupted: &PyRecord) -> PyResult<f64> {
    noise::snr_db(&clean.inner.record, &corrupted.inner.record).map_err(py_err)
}

/// Runs a full experiment from a preset name or a config dict. Returns the
/// report and the named records.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn run<'py>(
    py: Python<'py>,
    config: &Bound<'py, PyAny>,
    seed: Option<u64>,
) -> PyResult<(Bound<'py, PyAny>, Vec<(String, PyRecord)>)> {
    let mut cfg = match config.extract::<String>() {
        Ok(name) => {
            let seed = seed.ok_or_else(|| PyValueError::new_err("a preset run needs a seed"))?;
            ExperimentConfig::preset(&name, seed).map_err(py_err)?
        }
        Err(_) => from_py(py, config, "experiment config")?,
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let out = py.detach(|| run_experiment(&cfg)).map_err(py_err)?;
    let records = out
        .containers
        .into_iter()
        .map(|(name, inner)| (name, PyRecord { inner }))
        .collect();
    Ok((to_py(py, &out.report)?, records))
}

#[pyfunction]
fn presets<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("beat", vec!["fig2-default"])?;
    d.set_item("channel", CHANNEL_PRESETS.to_vec())?;
    d.set_item("noise", NoiseSpec::PRESETS.to_vec())?;
    d.set_item("experiment", EXPERIMENT_PRESETS.to_vec())?;
    Ok(d)
}

#[pymodule]
fn ecgsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecord>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(filter, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(match_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(hrv, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
