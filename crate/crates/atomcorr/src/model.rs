//! Shared domain types, physical constants and unit conventions.
//!
//! Everything is SI internally (seconds, meters, kilograms); file formats
//! carry SI values as well. The vertical convention used by every module:
//! +z is up, the detector sits below the source, and the equivalent
//! vertical position `z_equiv` increases with arrival time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fundamental constants entering the kinematics. CODATA-derived defaults,
/// configurable for tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity_g: f64,
    /// Mass of a helium-4 atom (kg).
    pub mass_he4: f64,
    /// Mass of a helium-3 atom (kg).
    pub mass_he3: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            hbar: 1.054_571_817e-34,
            gravity_g: 9.81,
            mass_he4: 6.646_473_1e-27,
            mass_he3: 5.008_234_3e-27,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if self.hbar > 0.0 && self.gravity_g > 0.0 && self.mass_he4 > 0.0 && self.mass_he3 > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain("all physical constants must be strictly positive".into()))
        }
    }

    pub fn mass_of(&self, mass_ref: MassRef) -> f64 {
        match mass_ref {
            MassRef::He4 => self.mass_he4,
            MassRef::He3 => self.mass_he3,
        }
    }
}

/// Which quantum statistics the source obeys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Boson,
    Fermion,
}

/// Which mass constant applies to the species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassRef {
    He4,
    He3,
}

/// Species descriptor: statistics plus the mass constant it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesTag {
    pub statistics: Statistics,
    pub mass_ref: MassRef,
}

impl SpeciesTag {
    pub const HE4_BOSON: SpeciesTag =
        SpeciesTag { statistics: Statistics::Boson, mass_ref: MassRef::He4 };
    pub const HE3_FERMION: SpeciesTag =
        SpeciesTag { statistics: Statistics::Fermion, mass_ref: MassRef::He3 };
}

/// RMS source sizes per axis (m). Anisotropy is permitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceGeometry {
    pub s_x: f64,
    pub s_y: f64,
    pub s_z: f64,
}

impl SourceGeometry {
    pub fn isotropic(s: f64) -> Self {
        SourceGeometry { s_x: s, s_y: s, s_z: s }
    }

    pub fn sizes(&self) -> [f64; 3] {
        [self.s_x, self.s_y, self.s_z]
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes().iter().all(|&s| s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("source RMS sizes must be strictly positive".into()))
        }
    }
}

/// The trapped cloud acting as the source of the time-of-flight expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSource {
    pub species: SpeciesTag,
    pub geometry: SourceGeometry,
    /// Mean number of atoms emitted toward the detector per shot.
    pub mean_atoms_per_shot: f64,
    /// Cap on the number of single-particle modes retained per axis when a
    /// discrete mode spectrum is built (fermion sampling).
    #[serde(default = "default_mode_count")]
    pub mode_count_per_axis: usize,
    /// Phenomenological stand-in for the phase-space density of the source,
    /// in (0, 1]: the ratio of correlation length to cloud size at the
    /// detector, per axis.
    pub degeneracy_parameter: f64,
}

fn default_mode_count() -> usize {
    32
}

impl TrapSource {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.mean_atoms_per_shot > 0.0) {
            return Err(Error::Domain("mean_atoms_per_shot must be > 0".into()));
        }
        if self.mode_count_per_axis < 1 {
            return Err(Error::Domain("mode_count_per_axis must be >= 1".into()));
        }
        if !(self.degeneracy_parameter > 0.0 && self.degeneracy_parameter <= 1.0) {
            return Err(Error::Domain("degeneracy_parameter must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Time-of-flight configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofConfig {
    /// Free expansion time from release to detector passage (s).
    pub fall_time: f64,
    /// Whether free fall displaces the cloud center during expansion.
    #[serde(default)]
    pub include_gravity: bool,
}

impl TofConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fall_time > 0.0 && self.fall_time.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain("fall_time must be strictly positive".into()))
        }
    }
}

/// Delay-line MCP detector response parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Probability that an arriving atom yields a recorded event.
    pub quantum_efficiency: f64,
    /// Timing resolution, RMS (s).
    pub sigma_t: f64,
    /// Transverse resolution, RMS (m).
    pub sigma_xy: f64,
    /// Active area diameter (m).
    pub aperture_diameter: f64,
    /// Nominal arrival velocity used to convert times to vertical positions (m/s).
    pub v_arrival: f64,
    /// Fractional RMS spread of the true arrival velocity over the sample.
    pub v_spread_fraction: f64,
    /// Time offset of the cloud center's arrival (s).
    pub t_ref: f64,
    /// Minimum time between two events in the same transverse resolution
    /// cell; the later event is dropped. 0 disables.
    pub dead_time: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            quantum_efficiency: 0.05,
            sigma_t: 1e-9,
            sigma_xy: 5e-4,
            aperture_diameter: 0.08,
            v_arrival: 3.5,
            v_spread_fraction: 0.005,
            t_ref: 0.0,
            dead_time: 0.0,
        }
    }
}

impl DetectorConfig {
    /// Perfect detector: every atom recorded exactly where it lands.
    pub fn ideal() -> Self {
        DetectorConfig {
            quantum_efficiency: 1.0,
            sigma_t: 0.0,
            sigma_xy: 0.0,
            aperture_diameter: f64::INFINITY,
            v_arrival: 3.5,
            v_spread_fraction: 0.0,
            t_ref: 0.0,
            dead_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::Domain("quantum_efficiency must lie in [0, 1]".into()));
        }
        if self.sigma_t < 0.0 || self.sigma_xy < 0.0 || self.dead_time < 0.0 {
            return Err(Error::Domain("resolutions and dead_time must be >= 0".into()));
        }
        if !(self.aperture_diameter > 0.0) {
            return Err(Error::Domain("aperture_diameter must be > 0".into()));
        }
        if !(self.v_arrival > 0.0) {
            return Err(Error::Domain("v_arrival must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.v_spread_fraction) {
            return Err(Error::Domain("v_spread_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One recorded atom: arrival time, transverse position, and the derived
/// vertical position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub shot_id: u64,
    /// Arrival time relative to the run origin (s).
    pub t: f64,
    /// Transverse position on the detector (m).
    pub x: f64,
    pub y: f64,
    /// Equivalent vertical position, v_arrival * (t - t_ref) (m).
    pub z_equiv: f64,
}

impl DetectionEvent {
    /// Build an event with `z_equiv` derived from the detector calibration.
    pub fn from_time(shot_id: u64, t: f64, x: f64, y: f64, config: &DetectorConfig) -> Self {
        DetectionEvent { shot_id, t, x, y, z_equiv: time_to_vertical(t, config) }
    }
}

/// Seed record carried with every shot so a run can be reproduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: u64,
    pub shot_id: u64,
    /// Short description of the generating source.
    pub source: String,
}

/// One experimental realization: all events recorded in a single release.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub shot_id: u64,
    /// Events sorted ascending by arrival time.
    pub events: Vec<DetectionEvent>,
    pub provenance: Provenance,
}

impl Shot {
    pub fn new(shot_id: u64, mut events: Vec<DetectionEvent>, provenance: Provenance) -> Self {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Shot { shot_id, events, provenance }
    }
}

/// Correlation length after time of flight: hbar * t / (m * s).
pub fn correlation_length(
    constants: &PhysicalConstants,
    mass: f64,
    fall_time: f64,
    source_size: f64,
) -> Result<f64> {
    if !(mass > 0.0 && fall_time > 0.0 && source_size > 0.0 && constants.hbar > 0.0) {
        return Err(Error::Domain(format!(
            "correlation_length requires positive inputs (m={mass}, t={fall_time}, s={source_size})"
        )));
    }
    Ok(constants.hbar * fall_time / (mass * source_size))
}

/// Convert an arrival time into the equivalent vertical position using the
/// nominal arrival velocity.
pub fn time_to_vertical(event_time: f64, config: &DetectorConfig) -> f64 {
    config.v_arrival * (event_time - config.t_ref)
}
