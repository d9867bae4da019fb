//! Free-fall kinematics and the delay-line MCP detector response.
//!
//! Geometry convention (shared by all modules): +z is up, the detector
//! plane lies below the source, and z is measured relative to the cloud
//! center at release. An atom higher in the cloud has farther to fall and
//! arrives later, so z_equiv increases with arrival time.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    DetectionEvent, DetectorConfig, PhysicalConstants, Provenance, Shot, TofConfig,
};

/// Pre-detector atom record, in exactly one of the two representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealAtom {
    pub shot_id: u64,
    pub state: AtomState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomState {
    /// 3-vector momentum (kg m/s), before time of flight.
    Momentum([f64; 3]),
    /// 3-vector far-field position (m), at detector passage.
    Position([f64; 3]),
}

impl IdealAtom {
    pub fn at_momentum(shot_id: u64, p: [f64; 3]) -> Self {
        IdealAtom { shot_id, state: AtomState::Momentum(p) }
    }

    pub fn at_position(shot_id: u64, r: [f64; 3]) -> Self {
        IdealAtom { shot_id, state: AtomState::Position(r) }
    }

    pub fn position(&self) -> Option<[f64; 3]> {
        match self.state {
            AtomState::Position(r) => Some(r),
            AtomState::Momentum(_) => None,
        }
    }

    pub fn momentum(&self) -> Option<[f64; 3]> {
        match self.state {
            AtomState::Momentum(p) => Some(p),
            AtomState::Position(_) => None,
        }
    }
}

/// Ballistic propagation of a momentum-space atom to the detector plane:
/// r = (p/m) t, with the vertical coordinate displaced by -g t^2 / 2 when
/// gravity is on.
pub fn propagate_to_detector(
    atom: &IdealAtom,
    tof: &TofConfig,
    constants: &PhysicalConstants,
    mass: f64,
) -> Result<IdealAtom> {
    let p = atom
        .momentum()
        .ok_or_else(|| Error::Domain("propagate_to_detector requires momentum representation".into()))?;
    tof.validate()?;
    if !(mass > 0.0) {
        return Err(Error::Domain("mass must be positive".into()));
    }
    let t = tof.fall_time;
    let mut r: [f64; 3] = core::array::from_fn(|i| p[i] / mass * t);
    if tof.include_gravity {
        r[2] -= 0.5 * constants.gravity_g * t * t;
    }
    Ok(IdealAtom::at_position(atom.shot_id, r))
}

/// Bookkeeping from one pass of the detector model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorStats {
    pub input_atoms: usize,
    pub after_thinning: usize,
    pub clipped_by_aperture: usize,
    pub dropped_by_dead_time: usize,
    pub detected: usize,
}

/// Apply the full detector response to the position-space atoms of one shot:
/// quantum-efficiency thinning, arrival-velocity conversion of z into time,
/// Gaussian timing and transverse blur, aperture clipping, and dead time.
pub fn apply_detector<R: Rng>(
    atoms: &[IdealAtom],
    config: &DetectorConfig,
    provenance: Provenance,
    rng: &mut R,
) -> Result<(Shot, DetectorStats)> {
    config.validate()?;
    let shot_id = provenance.shot_id;
    let mut stats = DetectorStats { input_atoms: atoms.len(), ..DetectorStats::default() };
    let aperture_r2 = if config.aperture_diameter.is_finite() {
        let r = config.aperture_diameter / 2.0;
        r * r
    } else {
        f64::INFINITY
    };

    let mut events = Vec::new();
    for atom in atoms {
        let r = atom
            .position()
            .ok_or_else(|| Error::Domain("apply_detector requires position representation".into()))?;
        if !rng.gen_bool(config.quantum_efficiency) {
            continue;
        }
        stats.after_thinning += 1;
        // True arrival velocity varies over the sample within a bounded
        // fractional band (uniform in +-v_spread_fraction); the conversion
        // back to z_equiv always uses the nominal calibration.
        let v_true = if config.v_spread_fraction > 0.0 {
            config.v_arrival
                * (1.0 + rng.gen_range(-config.v_spread_fraction..config.v_spread_fraction))
        } else {
            config.v_arrival
        };
        let mut t = config.t_ref + r[2] / v_true;
        if config.sigma_t > 0.0 {
            t += config.sigma_t * rng.sample::<f64, _>(StandardNormal);
        }
        let mut x = r[0];
        let mut y = r[1];
        if config.sigma_xy > 0.0 {
            x += config.sigma_xy * rng.sample::<f64, _>(StandardNormal);
            y += config.sigma_xy * rng.sample::<f64, _>(StandardNormal);
        }
        if x * x + y * y > aperture_r2 {
            stats.clipped_by_aperture += 1;
            continue;
        }
        events.push(DetectionEvent::from_time(shot_id, t, x, y, config));
    }

    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    if config.dead_time > 0.0 {
        events = apply_dead_time(events, config, &mut stats);
    }
    stats.detected = events.len();
    Ok((Shot { shot_id, events, provenance }, stats))
}

/// Drop the later of two events that hit the same transverse resolution
/// cell within the dead time. With zero transverse resolution the whole
/// plate acts as a single cell.
fn apply_dead_time(
    events: Vec<DetectionEvent>,
    config: &DetectorConfig,
    stats: &mut DetectorStats,
) -> Vec<DetectionEvent> {
    use std::collections::HashMap;
    let pitch = config.sigma_xy;
    let cell_of = |e: &DetectionEvent| -> (i64, i64) {
        if pitch > 0.0 {
            ((e.x / pitch).floor() as i64, (e.y / pitch).floor() as i64)
        } else {
            (0, 0)
        }
    };
    let mut last_hit: HashMap<(i64, i64), f64> = HashMap::new();
    let mut kept = Vec::with_capacity(events.len());
    for e in events {
        let cell = cell_of(&e);
        match last_hit.get(&cell) {
            Some(&t_prev) if e.t - t_prev < config.dead_time => {
                stats.dropped_by_dead_time += 1;
            }
            _ => {
                last_hit.insert(cell, e.t);
                kept.push(e);
            }
        }
    }
    kept
}
