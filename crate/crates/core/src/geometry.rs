//! Receivers, emitters and the FDOA/TDOA forward models.
//!
//! All FDOA values are range-rate differences in m/s: the carrier factor
//! `f0 / c` is removed when measurements are ingested, so a measured
//! frequency difference `df` (Hz) maps to `df * c / f0`.

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Propagation speed used by the TDOA model, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are treated as coincident points.
const COINCIDENCE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("emitter coincides with receiver `{0}`")]
    Coincident(String),
    #[error("pair mixes epochs {0} and {1}")]
    EpochMismatch(i64, i64),
    #[error("pair uses the same receiver state `{0}` twice")]
    DegeneratePair(String),
    #[error("scenario has no measurements")]
    Empty,
}

/// Convert a frequency difference in Hz to the normalized range-rate form.
pub fn normalize_fdoa_hz(frequency_difference_hz: f64, carrier_hz: f64) -> f64 {
    frequency_difference_hz * SPEED_OF_LIGHT / carrier_hz
}

/// One receiver at one measurement epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverState {
    pub id: String,
    pub epoch: i64,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl ReceiverState {
    pub fn new(id: impl Into<String>, epoch: i64, position: Vec3, velocity: Vec3) -> Result<Self, GeometryError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("receiver position"));
        }
        if !velocity.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("receiver velocity"));
        }
        Ok(Self {
            id: id.into(),
            epoch,
            position,
            velocity,
        })
    }

    /// Identity used to decide whether two measurements share a range unknown.
    pub fn key(&self) -> ReceiverKey {
        ReceiverKey {
            id: self.id.clone(),
            epoch: self.epoch,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn range_to(&self, point: &Vec3) -> f64 {
        (self.position - point).norm()
    }

    /// Rate of change of the receiver-to-point range.
    pub fn range_rate(&self, point: &Vec3) -> Result<f64, GeometryError> {
        let los = self.position - point;
        let range = los.norm();
        if range <= COINCIDENCE_EPS {
            return Err(GeometryError::Coincident(self.id.clone()));
        }
        Ok(self.velocity.dot(&los) / range)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReceiverKey {
    pub id: String,
    pub epoch: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    pub position: Vec3,
}

impl Emitter {
    pub fn new(position: Vec3) -> Result<Self, GeometryError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("emitter position"));
        }
        Ok(Self { position })
    }
}

/// Two receiver states observed at the same epoch. `reference` plays the
/// role of receiver 1 in the difference `other - reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverPair {
    pub reference: ReceiverState,
    pub other: ReceiverState,
}

impl ReceiverPair {
    pub fn new(reference: ReceiverState, other: ReceiverState) -> Result<Self, GeometryError> {
        if reference.epoch != other.epoch {
            return Err(GeometryError::EpochMismatch(reference.epoch, other.epoch));
        }
        if reference.key() == other.key() {
            return Err(GeometryError::DegeneratePair(reference.id.clone()));
        }
        Ok(Self { reference, other })
    }

    pub fn epoch(&self) -> i64 {
        self.reference.epoch
    }

    /// Largest physically realizable |FDOA| for this pair.
    pub fn fdoa_bound(&self) -> f64 {
        self.reference.speed() + self.other.speed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdoaMeasurement {
    pub pair: ReceiverPair,
    /// Range-rate difference, m/s.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdoaMeasurement {
    pub pair: ReceiverPair,
    /// Arrival-time difference, s.
    pub value: f64,
}

/// FDOA of an emitter at `emitter` seen by `pair`, in m/s:
/// `v_o . (x_o - x) / |x_o - x| - v_r . (x_r - x) / |x_r - x|`.
pub fn fdoa_forward(emitter: &Vec3, pair: &ReceiverPair) -> Result<f64, GeometryError> {
    Ok(pair.other.range_rate(emitter)? - pair.reference.range_rate(emitter)?)
}

/// TDOA in seconds: `(|x_o - x| - |x_r - x|) / c`.
pub fn tdoa_forward(emitter: &Vec3, pair: &ReceiverPair) -> Result<f64, GeometryError> {
    if !emitter.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("emitter position"));
    }
    Ok((pair.other.range_to(emitter) - pair.reference.range_to(emitter)) / SPEED_OF_LIGHT)
}

/// One row of a scenario: a receiver pair with an FDOA and/or TDOA value.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pair: ReceiverPair,
    pub fdoa: Option<f64>,
    pub tdoa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub observations: Vec<Observation>,
    pub truth: Option<Emitter>,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn new(observations: Vec<Observation>, truth: Option<Emitter>, rng_seed: u64) -> Result<Self, GeometryError> {
        if observations.iter().all(|o| o.fdoa.is_none() && o.tdoa.is_none()) {
            return Err(GeometryError::Empty);
        }
        for o in &observations {
            if o.fdoa.is_some_and(|v| !v.is_finite()) || o.tdoa.is_some_and(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite("measurement value"));
            }
        }
        Ok(Self {
            observations,
            truth,
            rng_seed,
        })
    }

    /// FDOA measurements in observation order.
    pub fn fdoa_measurements(&self) -> Vec<FdoaMeasurement> {
        self.observations
            .iter()
            .filter_map(|o| {
                o.fdoa.map(|value| FdoaMeasurement {
                    pair: o.pair.clone(),
                    value,
                })
            })
            .collect()
    }

    pub fn tdoa_measurements(&self) -> Vec<TdoaMeasurement> {
        self.observations
            .iter()
            .filter_map(|o| {
                o.tdoa.map(|value| TdoaMeasurement {
                    pair: o.pair.clone(),
                    value,
                })
            })
            .collect()
    }

    /// Every distinct receiver state, in first-appearance order.
    pub fn receivers(&self) -> Vec<&ReceiverState> {
        let mut seen = Vec::<&ReceiverState>::new();
        for o in &self.observations {
            for rx in [&o.pair.reference, &o.pair.other] {
                if !seen.iter().any(|s| s.key() == rx.key()) {
                    seen.push(rx);
                }
            }
        }
        seen
    }
}
