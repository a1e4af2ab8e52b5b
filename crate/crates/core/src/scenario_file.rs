//! JSON scenario documents. Units are fixed: metres, m/s and seconds.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Emitter, GeometryError, Observation, ReceiverPair, ReceiverState, Scenario, Vec3};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("measurement {index}: {source}")]
    Measurement { index: usize, source: GeometryError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverEntry {
    /// Receiver identity; defaults to the slot name (`rx1` or `rx2`).
    /// Measurements that share a receiver at one epoch must use the same id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub pos: [f64; 3],
    pub vel: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub epoch: i64,
    pub rx1: ReceiverEntry,
    pub rx2: ReceiverEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdoa_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdoa_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub measurements: Vec<MeasurementEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<[f64; 3]>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioFileError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(ScenarioFileError::Version(file.format_version));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn to_scenario(&self, rng_seed: u64) -> Result<Scenario, ScenarioFileError> {
        let mut observations = Vec::with_capacity(self.measurements.len());
        for (index, m) in self.measurements.iter().enumerate() {
            let wrap = |source| ScenarioFileError::Measurement { index, source };
            let rx = |e: &ReceiverEntry, slot: &str| {
                ReceiverState::new(
                    e.id.clone().unwrap_or_else(|| slot.to_string()),
                    m.epoch,
                    Vec3::from(e.pos),
                    Vec3::from(e.vel),
                )
            };
            let pair =
                ReceiverPair::new(rx(&m.rx1, "rx1").map_err(wrap)?, rx(&m.rx2, "rx2").map_err(wrap)?).map_err(wrap)?;
            observations.push(Observation {
                pair,
                fdoa: m.fdoa_mps,
                tdoa: m.tdoa_s,
            });
        }
        let truth = self.truth.map(|t| Emitter::new(Vec3::from(t))).transpose()?;
        Ok(Scenario::new(observations, truth, rng_seed)?)
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        let entry = |rx: &ReceiverState, slot: &str| ReceiverEntry {
            id: (rx.id != slot).then(|| rx.id.clone()),
            pos: rx.position.into(),
            vel: rx.velocity.into(),
        };
        Self {
            format_version: FORMAT_VERSION,
            measurements: scenario
                .observations
                .iter()
                .map(|o| MeasurementEntry {
                    epoch: o.pair.epoch(),
                    rx1: entry(&o.pair.reference, "rx1"),
                    rx2: entry(&o.pair.other, "rx2"),
                    fdoa_mps: o.fdoa,
                    tdoa_s: o.tdoa,
                })
                .collect(),
            truth: scenario.truth.map(|e| e.position.into()),
        }
    }
}
