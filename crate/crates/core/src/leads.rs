//! Einthoven/Goldberger limb leads and the precordial leads, as projection
//! axes for a cardiac dipole.
//!
//! Body frame: `x` points to the subject's left, `y` is inferior (feet),
//! `z` is anterior. Frontal-plane angles follow the hexaxial convention
//! (0° = lead I, +90° = aVF); horizontal-plane angles are measured from the
//! left-pointing axis toward anterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::MultiLeadRecord;

pub type Dipole = [f64; 3];

pub const LEAD_LABELS: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

pub const FRONTAL_ANGLES_DEG: [f64; 6] = [0.0, 60.0, 120.0, -150.0, -30.0, 90.0];
pub const DEFAULT_HORIZONTAL_ANGLES_DEG: [f64; 6] = [120.0, 94.0, 82.0, 60.0, 30.0, 0.0];

/// Magnitude of an augmented lead vector relative to the bipolar leads
/// (aVR = -(I + II)/2 has |·| = √3/2 for unit bipolar axes).
pub const AUGMENTED_GAIN: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Frontal,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadAxis {
    pub label: &'static str,
    pub plane: Plane,
    pub angle_deg: f64,
    /// Unit direction in the body frame.
    pub direction: Dipole,
    /// Lead-vector magnitude: 1 for I/II/III and V1–V6, √3/2 for aVR/aVL/aVF.
    pub gain: f64,
}

/// The twelve standard lead axes.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadSystem {
    axes: Vec<LeadAxis>,
}

#[derive(Serialize, Deserialize)]
struct AxisDoc {
    label: String,
    angle_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct LeadSystemDoc {
    frontal: Vec<AxisDoc>,
    horizontal: Vec<AxisDoc>,
}

fn frontal_direction(angle_deg: f64) -> Dipole {
    let a = angle_deg.to_radians();
    [a.cos(), a.sin(), 0.0]
}

fn horizontal_direction(angle_deg: f64) -> Dipole {
    let a = angle_deg.to_radians();
    [a.cos(), 0.0, a.sin()]
}

fn dot(a: &Dipole, b: &Dipole) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Default for LeadSystem {
    fn default() -> Self {
        Self::with_horizontal_angles(DEFAULT_HORIZONTAL_ANGLES_DEG)
            .expect("default angles are finite")
    }
}

impl LeadSystem {
    pub fn with_horizontal_angles(angles_deg: [f64; 6]) -> Result<Self> {
        if angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("chest lead angles must be finite"));
        }
        let mut axes = Vec::with_capacity(12);
        for (i, &angle) in FRONTAL_ANGLES_DEG.iter().enumerate() {
            axes.push(LeadAxis {
                label: LEAD_LABELS[i],
                plane: Plane::Frontal,
                angle_deg: angle,
                direction: frontal_direction(angle),
                gain: if i < 3 { 1.0 } else { AUGMENTED_GAIN },
            });
        }
        for (i, &angle) in angles_deg.iter().enumerate() {
            axes.push(LeadAxis {
                label: LEAD_LABELS[6 + i],
                plane: Plane::Horizontal,
                angle_deg: angle,
                direction: horizontal_direction(angle),
                gain: 1.0,
            });
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[LeadAxis] {
        &self.axes
    }

    pub fn labels(&self) -> [&'static str; 12] {
        LEAD_LABELS
    }

    pub fn axis(&self, label: &str) -> Result<&LeadAxis> {
        self.axes
            .iter()
            .find(|a| a.label == label)
            .ok_or_else(|| Error::UnknownLead(label.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = LeadSystemDoc {
            frontal: self.axes[..6]
                .iter()
                .map(|a| AxisDoc {
                    label: a.label.into(),
                    angle_deg: a.angle_deg,
                })
                .collect(),
            horizontal: self.axes[6..]
                .iter()
                .map(|a| AxisDoc {
                    label: a.label.into(),
                    angle_deg: a.angle_deg,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a lead-system document. Frontal angles must be the hexaxial
    /// ones; chest angles are free.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LeadSystemDoc = serde_json::from_str(text)?;
        if doc.frontal.len() != 6 || doc.horizontal.len() != 6 {
            return Err(Error::config(
                "lead system needs 6 frontal and 6 horizontal axes",
            ));
        }
        for (i, axis) in doc.frontal.iter().enumerate() {
            if axis.label != LEAD_LABELS[i] || (axis.angle_deg - FRONTAL_ANGLES_DEG[i]).abs() > 1e-9
            {
                return Err(Error::config(format!(
                    "frontal axis {} must be {} at {}°",
                    i, LEAD_LABELS[i], FRONTAL_ANGLES_DEG[i]
                )));
            }
        }
        let mut angles = [0.0; 6];
        for (i, axis) in doc.horizontal.iter().enumerate() {
            if axis.label != LEAD_LABELS[6 + i] {
                return Err(Error::config(format!(
                    "expected {} got {}",
                    LEAD_LABELS[6 + i],
                    axis.label
                )));
            }
            angles[i] = axis.angle_deg;
        }
        Self::with_horizontal_angles(angles)
    }

    /// Potentials of RA, LA, LL for a dipole at the centre of an equilateral
    /// Einthoven triangle. Only the frontal components contribute.
    pub fn limb_potentials(&self, d: &Dipole) -> LimbPotentials {
        let s = 1.0 / 3f64.sqrt();
        let at = |deg: f64| {
            let v = frontal_direction(deg);
            [v[0] * s, v[1] * s, 0.0]
        };
        LimbPotentials {
            ra: dot(&at(-150.0), d),
            la: dot(&at(-30.0), d),
            ll: dot(&at(90.0), d),
        }
    }
}

/// Electrode potentials in mV. RL is the ground reference and carries no value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbPotentials {
    pub ra: f64,
    pub la: f64,
    pub ll: f64,
}

impl LimbPotentials {
    fn check(&self) -> Result<()> {
        if self.ra.is_finite() && self.la.is_finite() && self.ll.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("limb potentials must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbLeads {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedLeads {
    pub avr: f64,
    pub avl: f64,
    pub avf: f64,
}

/// Bipolar limb leads. II is formed as I + III so the Einthoven closure is
/// exact in floating point.
pub fn limb_leads_from_potentials(p: LimbPotentials) -> Result<LimbLeads> {
    p.check()?;
    let i = p.la - p.ra;
    let iii = p.ll - p.la;
    Ok(LimbLeads {
        i,
        ii: i + iii,
        iii,
    })
}

/// Goldberger augmented leads: each electrode against the mean of the other two.
pub fn augmented_from_potentials(p: LimbPotentials) -> Result<AugmentedLeads> {
    p.check()?;
    Ok(AugmentedLeads {
        avr: p.ra - 0.5 * (p.la + p.ll),
        avl: p.la - 0.5 * (p.ra + p.ll),
        avf: p.ll - 0.5 * (p.ra + p.la),
    })
}

/// Signed projection of a dipole onto one lead. Frontal leads see the
/// frontal-plane component, chest leads the horizontal-plane component.
pub fn project_dipole(d: &Dipole, sys: &LeadSystem, lead: &str) -> Result<f64> {
    let axis = sys.axis(lead)?;
    Ok(axis.gain * dot(&axis.direction, d))
}

/// Per-sample `I + III - II`. Zero for any internally consistent record.
pub fn einthoven_residual(rec: &MultiLeadRecord) -> Result<Vec<f64>> {
    let i = rec.lead("I")?;
    let ii = rec.lead("II")?;
    let iii = rec.lead("III")?;
    Ok(i.iter()
        .zip(iii)
        .zip(ii)
        .map(|((a, c), b)| a + c - b)
        .collect())
}
