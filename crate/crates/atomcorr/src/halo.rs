//! s-wave collision halo between two condensates.
//!
//! Two Raman momentum classes collide with a relative velocity of twice the
//! recoil velocity; scattered pairs populate a spherical shell of radius
//! hbar k in the center-of-mass frame, back to back up to the source's
//! momentum spread, on top of the two unscattered clouds.

use rand::Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detector::IdealAtom;
use crate::error::{Error, Result};
use crate::model::{DetectionEvent, PhysicalConstants, SourceGeometry};

/// Optional colinear (p, p) bunching: each scattered atom is duplicated
/// into a thermal multiplet with geometrically distributed multiplicity,
/// each copy jittered by the colinear coherence widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColinearBunching {
    /// Mean multiplicity (>= 1; 1 disables in practice).
    pub mean_multiplicity: f64,
    /// Momentum coherence widths of the multiplet per axis (kg m/s).
    pub coherence_widths: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaloConfig {
    /// Recoil wavenumber (1/m).
    pub k_recoil: f64,
    /// Mass of the colliding species (kg).
    pub species_mass: f64,
    /// Mean scattered pairs per shot.
    pub mean_pairs_per_shot: f64,
    /// Momentum-sum RMS widths per axis (kg m/s); the back-to-back blur.
    pub pair_sum_widths: [f64; 3],
    /// Fractional RMS radial broadening of the shell (mean-field energy
    /// acquired leaving the condensates), drawn per atom.
    #[serde(default)]
    pub mean_field_broadening: f64,
    /// Fraction of all atoms that are scattered out of the condensates.
    pub scattered_fraction: f64,
    /// Atoms remaining in the two unscattered clouds per shot; 0 means
    /// "derive from scattered_fraction".
    #[serde(default)]
    pub condensate_atoms_per_shot: f64,
    /// RMS momentum width of each unscattered cloud (kg m/s), display
    /// realism for the slice rendering.
    #[serde(default)]
    pub condensate_momentum_width: f64,
    /// Whether the unscattered clouds are emitted at all.
    #[serde(default = "default_true")]
    pub include_condensates: bool,
    #[serde(default)]
    pub colinear_bunching: Option<ColinearBunching>,
}

fn default_true() -> bool {
    true
}

impl HaloConfig {
    /// Construct with the pair-sum widths tied to the parent source:
    /// sigma_i = hbar / s_i (Heisenberg-limited source momentum spread).
    pub fn from_source(
        geometry: &SourceGeometry,
        constants: &PhysicalConstants,
        k_recoil: f64,
        species_mass: f64,
        mean_pairs_per_shot: f64,
        scattered_fraction: f64,
    ) -> Result<HaloConfig> {
        geometry.validate()?;
        let sizes = geometry.sizes();
        let config = HaloConfig {
            k_recoil,
            species_mass,
            mean_pairs_per_shot,
            pair_sum_widths: core::array::from_fn(|i| constants.hbar / sizes[i]),
            mean_field_broadening: 0.0,
            scattered_fraction,
            condensate_atoms_per_shot: 0.0,
            condensate_momentum_width: 0.0,
            include_condensates: true,
            colinear_bunching: None,
        };
        config.validated()
    }

    /// Validate and fill derived fields.
    pub fn validated(mut self) -> Result<HaloConfig> {
        if !(self.k_recoil > 0.0 && self.species_mass > 0.0 && self.mean_pairs_per_shot > 0.0) {
            return Err(Error::Domain(
                "k_recoil, species_mass and mean_pairs_per_shot must be positive".into(),
            ));
        }
        if !(self.scattered_fraction > 0.0 && self.scattered_fraction <= 0.1) {
            return Err(Error::Domain(format!(
                "scattered_fraction {} must lie in (0, 0.1] (spontaneous regime)",
                self.scattered_fraction
            )));
        }
        if self.pair_sum_widths.iter().any(|&s| s < 0.0) || self.mean_field_broadening < 0.0 {
            return Err(Error::Domain("widths must be non-negative".into()));
        }
        if let Some(cb) = &self.colinear_bunching {
            if cb.mean_multiplicity < 1.0 {
                return Err(Error::Domain("mean_multiplicity must be >= 1".into()));
            }
        }
        if self.condensate_atoms_per_shot == 0.0 {
            // scattered / total = f  =>  condensate = scattered (1 - f) / f
            let scattered = 2.0 * self.mean_pairs_per_shot;
            self.condensate_atoms_per_shot =
                scattered * (1.0 - self.scattered_fraction) / self.scattered_fraction;
        }
        Ok(self)
    }

    /// Momentum of the shell in the center-of-mass frame (kg m/s).
    pub fn shell_momentum(&self, constants: &PhysicalConstants) -> f64 {
        constants.hbar * self.k_recoil
    }

    /// The two Raman momentum classes, hbar k (+-e_x + e_z).
    pub fn momentum_classes(&self, constants: &PhysicalConstants) -> [[f64; 3]; 2] {
        let p = self.shell_momentum(constants);
        [[p, 0.0, p], [-p, 0.0, p]]
    }

    /// Center-of-mass momentum per atom, hbar k e_z.
    pub fn com_momentum(&self, constants: &PhysicalConstants) -> [f64; 3] {
        [0.0, 0.0, self.shell_momentum(constants)]
    }
}

/// One scattered pair, momenta in the center-of-mass frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomPair {
    pub p1: [f64; 3],
    pub p2: [f64; 3],
}

/// Shell radius after flight time t: (hbar k / m) t.
pub fn shell_radius(config: &HaloConfig, constants: &PhysicalConstants, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain("time must be non-negative".into()));
    }
    Ok(constants.hbar * config.k_recoil * t / config.species_mass)
}

/// Draw the scattered pairs of one shot (center-of-mass frame momenta).
///
/// Directions are uniform on the sphere (s-wave isotropy); each atom's
/// radial magnitude carries its own mean-field broadening; the pair-sum
/// offset delta is an anisotropic Gaussian with the configured widths.
pub fn sample_pairs<R: Rng>(
    config: &HaloConfig,
    constants: &PhysicalConstants,
    rng: &mut R,
) -> Vec<AtomPair> {
    let p_shell = config.shell_momentum(constants);
    let n_pairs = rng.sample(Poisson::new(config.mean_pairs_per_shot).expect("positive mean")) as usize;
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u = random_unit_vector(rng);
        let radial = |rng: &mut R| {
            if config.mean_field_broadening > 0.0 {
                p_shell
                    * (1.0 + config.mean_field_broadening * rng.sample::<f64, _>(StandardNormal))
            } else {
                p_shell
            }
        };
        let r1 = radial(rng);
        let r2 = radial(rng);
        let mut delta = [0.0; 3];
        for i in 0..3 {
            if config.pair_sum_widths[i] > 0.0 {
                delta[i] = config.pair_sum_widths[i] * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let p1: [f64; 3] = core::array::from_fn(|i| r1 * u[i] + delta[i] / 2.0);
        let p2: [f64; 3] = core::array::from_fn(|i| -r2 * u[i] + delta[i] / 2.0);
        pairs.push(AtomPair { p1, p2 });
    }
    pairs
}

/// Full momentum-space sample of one shot, lab frame: scattered pairs (with
/// optional colinear multiplets) plus the two unscattered clouds.
pub fn sample_halo_shot<R: Rng>(
    config: &HaloConfig,
    constants: &PhysicalConstants,
    shot_id: u64,
    rng: &mut R,
) -> Vec<IdealAtom> {
    let com = config.com_momentum(constants);
    let mut atoms = Vec::new();
    let emit = |p_com_frame: [f64; 3], rng: &mut R, atoms: &mut Vec<IdealAtom>| {
        let lab: [f64; 3] = core::array::from_fn(|i| p_com_frame[i] + com[i]);
        atoms.push(IdealAtom::at_momentum(shot_id, lab));
        if let Some(cb) = &config.colinear_bunching {
            // Extra thermal copies: geometric multiplicity, mean cb.mean_multiplicity.
            let p_stop = 1.0 / cb.mean_multiplicity;
            while rng.gen_range(0.0..1.0) > p_stop {
                let jittered: [f64; 3] = core::array::from_fn(|i| {
                    lab[i] + cb.coherence_widths[i] * rng.sample::<f64, _>(StandardNormal)
                });
                atoms.push(IdealAtom::at_momentum(shot_id, jittered));
            }
        }
    };
    for pair in sample_pairs(config, constants, rng) {
        emit(pair.p1, rng, &mut atoms);
        emit(pair.p2, rng, &mut atoms);
    }
    if config.include_condensates {
        let per_class = config.condensate_atoms_per_shot / 2.0;
        for class in config.momentum_classes(constants) {
            let n = rng.sample(Poisson::new(per_class.max(1e-12)).expect("positive mean")) as usize;
            for _ in 0..n {
                let p: [f64; 3] = core::array::from_fn(|i| {
                    class[i]
                        + config.condensate_momentum_width * rng.sample::<f64, _>(StandardNormal)
                });
                atoms.push(IdealAtom::at_momentum(shot_id, p));
            }
        }
    }
    atoms
}

fn random_unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    // Marsaglia: uniform z, uniform azimuth.
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// One (x, y) histogram of the events inside a single arrival-time slab.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2d {
    pub t_start: f64,
    pub t_end: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major counts, x outer.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Partition events into consecutive arrival-time slabs and histogram each
/// slab in the transverse plane (the detector-passage movie of the cloud).
/// Empty input produces an empty stack.
pub fn render_slices(
    events: &[DetectionEvent],
    slice_thickness: f64,
    bounds: &SliceBounds,
) -> Result<Vec<Slice2d>> {
    if !(slice_thickness > 0.0) {
        return Err(Error::Domain("slice_thickness must be positive".into()));
    }
    if bounds.nx == 0 || bounds.ny == 0 || bounds.x_max <= bounds.x_min || bounds.y_max <= bounds.y_min
    {
        return Err(Error::Domain("slice bounds must span a positive area".into()));
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }
    let t0 = events.iter().map(|e| e.t).fold(f64::INFINITY, f64::min);
    let t1 = events.iter().map(|e| e.t).fold(f64::NEG_INFINITY, f64::max);
    let n_slices = ((t1 - t0) / slice_thickness).floor() as usize + 1;
    let wx = (bounds.x_max - bounds.x_min) / bounds.nx as f64;
    let wy = (bounds.y_max - bounds.y_min) / bounds.ny as f64;
    let mut slices: Vec<Slice2d> = (0..n_slices)
        .map(|s| Slice2d {
            t_start: t0 + s as f64 * slice_thickness,
            t_end: t0 + (s + 1) as f64 * slice_thickness,
            nx: bounds.nx,
            ny: bounds.ny,
            counts: vec![0; bounds.nx * bounds.ny],
        })
        .collect();
    for e in events {
        let s = (((e.t - t0) / slice_thickness).floor() as usize).min(n_slices - 1);
        let ix = ((e.x - bounds.x_min) / wx).floor();
        let iy = ((e.y - bounds.y_min) / wy).floor();
        if ix < 0.0 || iy < 0.0 || ix >= bounds.nx as f64 || iy >= bounds.ny as f64 {
            continue;
        }
        slices[s].counts[ix as usize * bounds.ny + iy as usize] += 1;
    }
    Ok(slices)
}
