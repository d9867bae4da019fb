//! Per-shot atom configurations with exact quantum statistics.
//!
//! Chaotic bosons are sampled as a Cox (permanental) process driven by a
//! complex Gaussian speckle field; ideal fermions as a determinantal point
//! process built from the discretized Gaussian Schell-model kernel. The
//! closed-form pair correlation and the two-amplitude interference
//! probability live here as well, serving as independent references for
//! everything the samplers produce.

mod dpp;
mod grid;
mod speckle;

pub use dpp::{FermionSampler, OccupationSpectrum};
pub use grid::{Grid, SamplerConfig};
pub use speckle::BosonSampler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    correlation_length, PhysicalConstants, SpeciesTag, Statistics, TofConfig, TrapSource,
};

/// Gaussian Schell-model description of the cloud at the detector plane:
/// a Gaussian intensity envelope of RMS widths `W_i` carrying Gaussian
/// coherence of 1/e half-lengths `l_i` (the convention used by the fitter:
/// g2 - 1 = exp(-sum delta_i^2 / l_i^2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFieldModel {
    /// Cloud RMS sizes at the detector (m).
    pub envelope_widths: [f64; 3],
    /// Correlation lengths at the detector (m).
    pub coherence_lengths: [f64; 3],
    /// Mean atom count reaching the detector plane per shot.
    pub mean_detected_atoms: f64,
}

impl FarFieldModel {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let (l, w) = (self.coherence_lengths[i], self.envelope_widths[i]);
            if !(l > 0.0 && w > 0.0 && l <= w) {
                return Err(Error::Domain(format!(
                    "far-field model requires 0 < l <= W per axis (axis {i}: l={l}, W={w})"
                )));
            }
        }
        if !(self.mean_detected_atoms > 0.0) {
            return Err(Error::Domain("mean_detected_atoms must be > 0".into()));
        }
        Ok(())
    }
}

/// Far-field (post time-of-flight) model of a trapped source.
///
/// Coherence lengths follow l_i = hbar t / (m s_i). Envelope widths are
/// ballistic, W_i = sigma_v t, with the velocity spread chosen so that
/// l_i / W_i equals the degeneracy parameter per axis; a source larger than
/// its ballistic expansion keeps its own size.
pub fn build_far_field(
    source: &TrapSource,
    tof: &TofConfig,
    constants: &PhysicalConstants,
) -> Result<FarFieldModel> {
    source.validate()?;
    tof.validate()?;
    let mass = constants.mass_of(source.species.mass_ref);
    let sizes = source.geometry.sizes();
    let mut coherence_lengths = [0.0; 3];
    let mut envelope_widths = [0.0; 3];
    for i in 0..3 {
        let l = correlation_length(constants, mass, tof.fall_time, sizes[i])?;
        coherence_lengths[i] = l;
        envelope_widths[i] = (l / source.degeneracy_parameter).max(sizes[i]);
    }
    let model = FarFieldModel {
        envelope_widths,
        coherence_lengths,
        mean_detected_atoms: source.mean_atoms_per_shot,
    };
    model.validate()?;
    Ok(model)
}

/// Idealized, detector-blur-free second-order correlation at displacement
/// `delta`: 1 + exp(-sum delta_i^2/l_i^2) for bosons, minus for fermions.
pub fn reference_g2(model: &FarFieldModel, species: SpeciesTag, delta: [f64; 3]) -> f64 {
    let mut arg = 0.0;
    for i in 0..3 {
        let l = model.coherence_lengths[i];
        arg += delta[i] * delta[i] / (l * l);
    }
    match species.statistics {
        Statistics::Boson => 1.0 + (-arg).exp(),
        Statistics::Fermion => 1.0 - (-arg).exp(),
    }
}

/// Joint detection probability for the two-amplitude picture: source points
/// A, B and detectors C, D with single-path phases. Normalized so the
/// phase-averaged value is 1 (independent detections).
pub fn fano_joint_probability(
    species: SpeciesTag,
    phase_ac: f64,
    phase_ad: f64,
    phase_bc: f64,
    phase_bd: f64,
) -> f64 {
    let interference = (phase_ac + phase_bd - phase_ad - phase_bc).cos();
    match species.statistics {
        Statistics::Boson => 1.0 + interference,
        Statistics::Fermion => 1.0 - interference,
    }
}
