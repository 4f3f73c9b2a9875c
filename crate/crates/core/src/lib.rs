//! Simulation and recovery toolkit for wearable 12-lead ECG.
//!
//! Ground truth comes from a cardiac dipole model ([`synth`]) projected onto
//! the standard leads ([`leads`]). The [`channel`] and [`noise`] modules
//! corrupt it the way a garment-mounted electrode/wire/amplifier chain does;
//! [`dsp`] and [`rhythm`] recover it; [`experiment`] and [`container`] tie
//! the stages into reproducible runs.

pub mod channel;
pub mod container;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod leads;
pub mod noise;
pub mod record;
pub mod rhythm;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use record::{Event, EventKind, EventLog, Lead, MultiLeadRecord, Units};
