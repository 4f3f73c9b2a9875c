//! On-disk record container: a JSON header next to a little-endian f64
//! payload (per-lead contiguous), plus CSV sidecars for events, R-peak
//! annotations, accelerometer samples and RR intervals. Every file is
//! written to a temporary name and renamed into place; the header goes last
//! so its presence marks a complete container.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::pipeline::{Stage, StageProvenance};
use crate::error::{Error, Result};
use crate::noise::AccelStream;
use crate::record::{Event, EventKind, EventLog, Lead, MultiLeadRecord, Units};
use crate::rhythm::{PeakSource, RPeakAnnotations, RrFlag, RrSeries};

pub const FORMAT_VERSION: &str = "ecgsim-record/1";

#[derive(Debug, Clone, PartialEq)]
pub struct RecordContainer {
    pub record: MultiLeadRecord,
    /// Named RNG streams that produced the record.
    pub seeds: BTreeMap<String, u64>,
    /// Stages applied so far, in order. Only ever appended to.
    pub provenance: Vec<StageProvenance>,
    pub events: EventLog,
    pub annotations: Option<RPeakAnnotations>,
    pub accel: Option<AccelStream>,
    pub rr: Option<RrSeries>,
}

impl RecordContainer {
    pub fn new(record: MultiLeadRecord) -> Self {
        Self {
            record,
            seeds: BTreeMap::new(),
            provenance: Vec::new(),
            events: EventLog::new(),
            annotations: None,
            accel: None,
            rr: None,
        }
    }

    pub fn push_stage(&mut self, stage: &Stage) {
        self.provenance.push(StageProvenance {
            stage: stage.name().to_string(),
            config_sha256: stage.config_hash(),
        });
    }

    pub fn extend_provenance(&mut self, chain: &[StageProvenance]) {
        self.provenance.extend_from_slice(chain);
    }

    /// Number of CSV sidecars this container writes (events are always written).
    pub fn sidecar_count(&self) -> usize {
        1 + usize::from(self.annotations.is_some())
            + usize::from(self.accel.is_some())
            + usize::from(self.rr.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
    pub units: Units,
    pub leads: Vec<String>,
    pub samples_per_lead: usize,
    pub seeds: BTreeMap<String, u64>,
    pub provenance: Vec<StageProvenance>,
    pub payload: FileEntry,
    /// Keyed by sidecar kind: events, annotations, accel, rr.
    pub sidecars: BTreeMap<String, FileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_source: Option<PeakSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_sample_rate_hz: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EventRow {
    start: usize,
    end: usize,
    kind: EventKind,
    lead: Option<String>,
    magnitude: f64,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRow {
    index: usize,
    value: f64,
    flag: PeakSource,
}

#[derive(Serialize, Deserialize)]
struct AccelRow {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct RrRow {
    index: usize,
    value: f64,
    flag: RrFlag,
    start_sample: usize,
    end_sample: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_rows<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn stem_of(header_path: &Path) -> Result<String> {
    header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", header_path.display())))
}

fn payload_bytes(rec: &MultiLeadRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(rec.lead_count() * rec.len() * 8);
    for lead in rec.leads() {
        for v in &lead.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes the container next to `header_path` (`name.json` gives
/// `name.bin`, `name.events.csv`, ...). Returns the header path.
pub fn write_record(header_path: &Path, c: &RecordContainer) -> Result<PathBuf> {
    let dir = header_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let stem = stem_of(header_path)?;

    let put = |suffix: &str, bytes: Vec<u8>| -> Result<FileEntry> {
        let file = format!("{stem}{suffix}");
        atomic_write(&dir.join(&file), &bytes)?;
        Ok(FileEntry {
            file,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        })
    };

    let payload = put(".bin", payload_bytes(&c.record))?;
    let mut sidecars = BTreeMap::new();
    sidecars.insert(
        "events".to_string(),
        put(
            ".events.csv",
            csv_bytes(c.events.events.iter().map(|e| EventRow {
                start: e.start,
                end: e.end,
                kind: e.kind,
                lead: e.lead.clone(),
                magnitude: e.magnitude,
            }))?,
        )?,
    );
    if let Some(a) = &c.annotations {
        let rows = a
            .indices
            .iter()
            .zip(&a.confidence)
            .map(|(&index, &value)| AnnotationRow {
                index,
                value,
                flag: a.source,
            });
        sidecars.insert(
            "annotations".to_string(),
            put(".annotations.csv", csv_bytes(rows)?)?,
        );
    }
    if let Some(acc) = &c.accel {
        let rows = acc.samples.iter().map(|s| AccelRow {
            x: s[0],
            y: s[1],
            z: s[2],
        });
        sidecars.insert("accel".to_string(), put(".accel.csv", csv_bytes(rows)?)?);
    }
    if let Some(rr) = &c.rr {
        let rows = (0..rr.len()).map(|i| RrRow {
            index: i,
            value: rr.intervals_ms[i],
            flag: rr.flags[i],
            start_sample: rr.origins[i].0,
            end_sample: rr.origins[i].1,
        });
        sidecars.insert("rr".to_string(), put(".rr.csv", csv_bytes(rows)?)?);
    }

    let header = Header {
        version: FORMAT_VERSION.to_string(),
        sample_rate_hz: c.record.sample_rate_hz(),
        t0_s: c.record.t0_s(),
        units: c.record.units(),
        leads: c.record.labels().iter().map(|s| s.to_string()).collect(),
        samples_per_lead: c.record.len(),
        seeds: c.seeds.clone(),
        provenance: c.provenance.clone(),
        payload,
        sidecars,
        annotation_source: c.annotations.as_ref().map(|a| a.source),
        accel_sample_rate_hz: c.accel.as_ref().map(|a| a.sample_rate_hz),
    };
    let mut json = serde_json::to_vec_pretty(&header)?;
    json.push(b'\n');
    atomic_write(header_path, &json)?;
    Ok(header_path.to_path_buf())
}

fn read_checked(dir: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    if entry.file.contains(['/', '\\']) {
        return Err(Error::Integrity(format!(
            "sidecar `{}` escapes the container directory",
            entry.file
        )));
    }
    let bytes = fs::read(dir.join(&entry.file))?;
    if bytes.len() as u64 != entry.bytes {
        return Err(Error::Integrity(format!(
            "{}: expected {} bytes, found {}",
            entry.file,
            entry.bytes,
            bytes.len()
        )));
    }
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Integrity(format!(
            "{}: checksum mismatch",
            entry.file
        )));
    }
    Ok(bytes)
}

pub fn read_header(header_path: &Path) -> Result<Header> {
    let text = fs::read(header_path)?;
    let value: serde_json::Value = serde_json::from_slice(&text)
        .map_err(|e| Error::Integrity(format!("unreadable header: {e}")))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
        None => return Err(Error::Integrity("header has no version string".into())),
    }
    serde_json::from_value(value).map_err(|e| Error::Integrity(format!("malformed header: {e}")))
}

pub fn read_record(header_path: &Path) -> Result<RecordContainer> {
    let header = read_header(header_path)?;
    let dir = header_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));

    let payload = read_checked(dir, &header.payload)?;
    let n = header.samples_per_lead;
    let expected = header.leads.len() * n * 8;
    if payload.len() != expected {
        return Err(Error::Integrity(format!(
            "payload holds {} bytes, header implies {expected} ({} leads × {n} samples)",
            payload.len(),
            header.leads.len()
        )));
    }
    let leads = header
        .leads
        .iter()
        .enumerate()
        .map(|(i, label)| Lead {
            label: label.clone(),
            samples: payload[i * n * 8..(i + 1) * n * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect(),
        })
        .collect();
    let record =
        MultiLeadRecord::with_start(header.sample_rate_hz, header.t0_s, header.units, leads)?;

    let sidecar = |kind: &str| -> Result<Option<Vec<u8>>> {
        header
            .sidecars
            .get(kind)
            .map(|e| read_checked(dir, e))
            .transpose()
    };

    let events = match sidecar("events")? {
        Some(bytes) => EventLog {
            events: csv_rows::<EventRow>(&bytes)?
                .into_iter()
                .map(|r| Event {
                    start: r.start,
                    end: r.end,
                    kind: r.kind,
                    lead: r.lead,
                    magnitude: r.magnitude,
                })
                .collect(),
        },
        None => EventLog::new(),
    };
    let annotations = match sidecar("annotations")? {
        Some(bytes) => {
            let rows = csv_rows::<AnnotationRow>(&bytes)?;
            let source = header
                .annotation_source
                .or_else(|| rows.first().map(|r| r.flag))
                .ok_or_else(|| Error::Integrity("annotation source missing".into()))?;
            Some(RPeakAnnotations {
                indices: rows.iter().map(|r| r.index).collect(),
                confidence: rows.iter().map(|r| r.value).collect(),
                source,
            })
        }
        None => None,
    };
    let accel = match sidecar("accel")? {
        Some(bytes) => {
            let rate = header
                .accel_sample_rate_hz
                .ok_or_else(|| Error::Integrity("accelerometer sample rate missing".into()))?;
            Some(AccelStream {
                sample_rate_hz: rate,
                samples: csv_rows::<AccelRow>(&bytes)?
                    .into_iter()
                    .map(|r| [r.x, r.y, r.z])
                    .collect(),
            })
        }
        None => None,
    };
    let rr = match sidecar("rr")? {
        Some(bytes) => {
            let rows = csv_rows::<RrRow>(&bytes)?;
            Some(RrSeries {
                intervals_ms: rows.iter().map(|r| r.value).collect(),
                flags: rows.iter().map(|r| r.flag).collect(),
                origins: rows
                    .iter()
                    .map(|r| (r.start_sample, r.end_sample))
                    .collect(),
            })
        }
        None => None,
    };

    Ok(RecordContainer {
        record,
        seeds: header.seeds,
        provenance: header.provenance,
        events,
        annotations,
        accel,
        rr,
    })
}
