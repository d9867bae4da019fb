//! Pair-correlation measurement from event streams.
//!
//! Raw same-shot pair histograms normalized by mixed-event (cross-shot)
//! pairs, in difference coordinates (colinear / HBT), sum coordinates
//! (back-to-back), radially projected sum coordinate, or raw arrival-time
//! difference. Counting has a naive O(N^2) oracle and a cell-list fast path
//! that must agree bit-exactly.

mod counting;
mod fit;

pub use counting::{pair_histogram_fast, pair_histogram_naive};
pub use fit::{fit_gaussian_peak, signal_to_noise, GaussianFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DetectionEvent;

/// Which pair coordinate the histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    /// (dx, dy, dz_equiv): colinear / HBT coordinates (3 axes).
    Difference,
    /// (Sx, Sy, Sz) relative to `center`: back-to-back coordinates (3 axes).
    Sum,
    /// Sum coordinate projected on the pair axis (1 axis).
    SumRadial,
    /// Raw arrival-time difference dt (1 axis).
    TimeDifference,
}

impl CoordKind {
    pub fn n_axes(&self) -> usize {
        match self {
            CoordKind::Difference | CoordKind::Sum => 3,
            CoordKind::SumRadial | CoordKind::TimeDifference => 1,
        }
    }

    /// Coordinates that change sign when the pair is swapped. Histograms of
    /// these are symmetrized: every pair is recorded at +d and -d, so each
    /// unordered pair contributes two (mirrored) counts.
    pub fn sign_odd(&self) -> bool {
        matches!(
            self,
            CoordKind::Difference | CoordKind::TimeDifference | CoordKind::SumRadial
        )
    }
}

/// One histogram axis, symmetric about zero: `n_bins` bins covering
/// [-half_range, half_range). The half range doubles as the pair window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub n_bins: usize,
    pub half_range: f64,
}

impl AxisSpec {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_range / self.n_bins as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -self.half_range + (i as f64 + 0.5) * self.bin_width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub kind: CoordKind,
    pub axes: Vec<AxisSpec>,
    /// Partner shots per shot for the mixed-event normalization.
    #[serde(default = "default_mixing")]
    pub mixing_factor: usize,
    /// Reference point for sum coordinates (ignored otherwise).
    #[serde(default)]
    pub center: [f64; 3],
}

fn default_mixing() -> usize {
    4
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.len() != self.kind.n_axes() {
            return Err(Error::Config(format!(
                "{:?} coordinates need {} axes, got {}",
                self.kind,
                self.kind.n_axes(),
                self.axes.len()
            )));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.n_bins == 0 || !(axis.half_range > 0.0) {
                return Err(Error::Config(format!(
                    "axis {i}: n_bins and half_range must be positive"
                )));
            }
        }
        if self.mixing_factor == 0 {
            return Err(Error::Config("mixing_factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_bins(&self) -> usize {
        self.axes.iter().map(|a| a.n_bins).product()
    }

    /// Flat bin index (row-major, first axis slowest) of a coordinate
    /// vector, or None when any component falls outside its range.
    pub fn bin_of(&self, values: &[f64]) -> Option<usize> {
        let mut flat = 0usize;
        for (axis, &v) in self.axes.iter().zip(values) {
            if v < -axis.half_range || v >= axis.half_range {
                return None;
            }
            let i = (((v + axis.half_range) / axis.bin_width()) as usize).min(axis.n_bins - 1);
            flat = flat * axis.n_bins + i;
        }
        Some(flat)
    }

    /// Bin-center coordinates of a flat index.
    pub fn centers_of(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut idx = vec![0usize; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            idx[i] = rem % axis.n_bins;
            rem /= axis.n_bins;
        }
        idx.iter().zip(&self.axes).map(|(&i, a)| a.bin_center(i)).collect()
    }

    /// Pair coordinate of the ordered pair (a, b); None when the pair has no
    /// defined coordinate (coincident events in radial projection).
    pub fn pair_coordinate(&self, a: &DetectionEvent, b: &DetectionEvent) -> Option<[f64; 3]> {
        match self.kind {
            CoordKind::Difference => {
                Some([b.x - a.x, b.y - a.y, b.z_equiv - a.z_equiv])
            }
            CoordKind::Sum => Some([
                (a.x - self.center[0]) + (b.x - self.center[0]),
                (a.y - self.center[1]) + (b.y - self.center[1]),
                (a.z_equiv - self.center[2]) + (b.z_equiv - self.center[2]),
            ]),
            CoordKind::SumRadial => {
                let d = [b.x - a.x, b.y - a.y, b.z_equiv - a.z_equiv];
                let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if norm == 0.0 {
                    return None;
                }
                let s = [
                    (a.x - self.center[0]) + (b.x - self.center[0]),
                    (a.y - self.center[1]) + (b.y - self.center[1]),
                    (a.z_equiv - self.center[2]) + (b.z_equiv - self.center[2]),
                ];
                Some([(s[0] * d[0] + s[1] * d[1] + s[2] * d[2]) / norm, 0.0, 0.0])
            }
            CoordKind::TimeDifference => Some([b.t - a.t, 0.0, 0.0]),
        }
    }

    /// Bin of the ordered pair (a, b).
    pub fn pair_bin(&self, a: &DetectionEvent, b: &DetectionEvent) -> Option<usize> {
        let coords = self.pair_coordinate(a, b)?;
        self.bin_of(&coords[..self.axes.len()])
    }
}

/// Binned pair counts: same-shot (signal) and mixed-event (normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistogram {
    pub spec: HistogramSpec,
    pub same_shot: Vec<u64>,
    pub mixed: Vec<u64>,
    pub n_shots: u64,
    pub n_events_total: u64,
}

impl PairHistogram {
    pub fn empty(spec: &HistogramSpec) -> PairHistogram {
        PairHistogram {
            spec: spec.clone(),
            same_shot: vec![0; spec.total_bins()],
            mixed: vec![0; spec.total_bins()],
            n_shots: 0,
            n_events_total: 0,
        }
    }

    /// Associative, commutative merge of partial histograms.
    pub fn merge(mut self, other: PairHistogram) -> PairHistogram {
        for (a, b) in self.same_shot.iter_mut().zip(&other.same_shot) {
            *a += b;
        }
        for (a, b) in self.mixed.iter_mut().zip(&other.mixed) {
            *a += b;
        }
        self.n_shots += other.n_shots;
        self.n_events_total += other.n_events_total;
        self
    }

    pub fn same_total(&self) -> u64 {
        self.same_shot.iter().sum()
    }

    pub fn mixed_total(&self) -> u64 {
        self.mixed.iter().sum()
    }
}

/// Normalized correlation function with per-bin counting errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub spec: HistogramSpec,
    pub g2: Vec<f64>,
    pub err: Vec<f64>,
    /// Bins with nonzero mixed counts; others are never divided.
    pub valid: Vec<bool>,
    pub same_shot: Vec<u64>,
    pub mixed: Vec<u64>,
    pub fit: Option<GaussianFit>,
}

/// Mixed-event normalization: g2 = (same/sum_same) / (mixed/sum_mixed),
/// unity meaning no correlation.
pub fn normalize(hist: &PairHistogram) -> Result<CorrelationResult> {
    let same_total = hist.same_total();
    let mixed_total = hist.mixed_total();
    if mixed_total == 0 {
        return Err(Error::Domain(
            "cannot normalize: mixed-event histogram is empty (need >= 2 shots with events)".into(),
        ));
    }
    if same_total == 0 {
        return Err(Error::Domain("cannot normalize: no same-shot pairs in the window".into()));
    }
    let scale = mixed_total as f64 / same_total as f64;
    // Symmetrized histograms carry two counts per unordered pair; use the
    // independent-pair counts when propagating Poisson errors.
    let dup = if hist.spec.kind.sign_odd() { 2.0 } else { 1.0 };
    let n = hist.same_shot.len();
    let mut g2 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let m = hist.mixed[i];
        if m == 0 {
            continue;
        }
        valid[i] = true;
        let s = hist.same_shot[i];
        g2[i] = scale * s as f64 / m as f64;
        // Poisson propagation; for empty signal bins quote the one-count scale.
        let s_eff = (s as f64 / dup).max(1.0);
        let m_eff = m as f64 / dup;
        err[i] = scale * s_eff.sqrt() / m_eff * (1.0 + s_eff / m_eff).sqrt();
    }
    Ok(CorrelationResult {
        spec: hist.spec.clone(),
        g2,
        err,
        valid,
        same_shot: hist.same_shot.clone(),
        mixed: hist.mixed.clone(),
        fit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectorConfig, Provenance, Shot};
    use crate::rng::shot_rng;
    use rand::Rng;

    fn spec_diff(n_bins: usize, hr: f64) -> HistogramSpec {
        HistogramSpec {
            kind: CoordKind::Difference,
            axes: vec![AxisSpec { n_bins, half_range: hr }; 3],
            mixing_factor: 4,
            center: [0.0; 3],
        }
    }

    fn make_shot(shot_id: u64, positions: &[[f64; 3]]) -> Shot {
        // Keeps the given event order (t plays the role of z here).
        let config = DetectorConfig { v_arrival: 1.0, t_ref: 0.0, ..DetectorConfig::default() };
        let events = positions
            .iter()
            .map(|r| crate::model::DetectionEvent::from_time(shot_id, r[2], r[0], r[1], &config))
            .collect();
        Shot {
            shot_id,
            events,
            provenance: Provenance { master_seed: 0, shot_id, source: "test".into() },
        }
    }

    #[test]
    fn two_events_one_pair_in_mirrored_bins() {
        let spec = spec_diff(5, 1.0);
        let shot = make_shot(0, &[[0.0, 0.0, 0.0], [0.3, -0.3, 0.1]]);
        let hist = pair_histogram_naive(&[shot], &spec).unwrap();
        // Sign-odd coordinate: the pair lands once in each orientation.
        assert_eq!(hist.same_total(), 2);
        assert_eq!(hist.same_shot[spec.bin_of(&[0.3, -0.3, 0.1]).unwrap()], 1);
        assert_eq!(hist.same_shot[spec.bin_of(&[-0.3, 0.3, -0.1]).unwrap()], 1);
    }

    #[test]
    fn two_singleton_shots_make_only_mixed_pairs() {
        let spec = spec_diff(5, 1.0);
        let shots =
            vec![make_shot(0, &[[0.0, 0.0, 0.0]]), make_shot(1, &[[0.1, 0.1, 0.1]])];
        let hist = pair_histogram_naive(&shots, &spec).unwrap();
        assert_eq!(hist.same_total(), 0);
        assert!(hist.mixed_total() >= 1);
    }

    #[test]
    fn proportional_histograms_normalize_to_unity() {
        let spec = spec_diff(3, 1.0);
        let mut hist = PairHistogram::empty(&spec);
        for i in 0..hist.same_shot.len() {
            hist.same_shot[i] = (i as u64 + 1) * 10;
            hist.mixed[i] = (i as u64 + 1) * 70;
        }
        let result = normalize(&hist).unwrap();
        for (i, &g) in result.g2.iter().enumerate() {
            assert!(result.valid[i]);
            assert!((g - 1.0).abs() < 1e-12, "bin {i}: g2 = {g}");
        }
    }

    #[test]
    fn all_zero_mixed_is_an_error() {
        let spec = spec_diff(3, 1.0);
        let mut hist = PairHistogram::empty(&spec);
        hist.same_shot[0] = 5;
        assert!(normalize(&hist).is_err());
    }

    #[test]
    fn reversing_pair_orientation_mirrors_the_histogram() {
        // Difference coordinates are antisymmetric under swapping the pair,
        // so reversing event order within each shot mirrors every axis.
        let spec = spec_diff(7, 1.0);
        let mut rng = shot_rng(61, 0);
        let clouds: Vec<Vec<[f64; 3]>> = (0..20)
            .map(|_| {
                (0..30).map(|_| core::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect()
            })
            .collect();
        let shots: Vec<Shot> =
            clouds.iter().enumerate().map(|(s, c)| make_shot(s as u64, c)).collect();
        let reversed: Vec<Shot> = clouds
            .iter()
            .enumerate()
            .map(|(s, c)| {
                let mut c = c.clone();
                c.reverse();
                make_shot(s as u64, &c)
            })
            .collect();
        let h = pair_histogram_naive(&shots, &spec).unwrap();
        let hr = pair_histogram_naive(&reversed, &spec).unwrap();
        let n = spec.total_bins();
        for i in 0..n {
            assert_eq!(h.same_shot[i], hr.same_shot[n - 1 - i], "bin {i}");
        }
    }

    #[test]
    fn shuffled_assignments_give_flat_g2() {
        // Destroying shot structure must produce g2 = 1 within errors.
        let mut rng = shot_rng(62, 0);
        let n_shots = 60;
        let per_shot = 40;
        let shots: Vec<Shot> = (0..n_shots)
            .map(|s| {
                let positions: Vec<[f64; 3]> = (0..per_shot)
                    .map(|_| core::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                    .collect();
                make_shot(s, &positions)
            })
            .collect();
        let spec = spec_diff(5, 0.8);
        let hist = pair_histogram_naive(&shots, &spec).unwrap();
        let result = normalize(&hist).unwrap();
        // Aggregate checks: per-bin errors are estimated from the observed
        // counts, so sparse bins can show inflated pulls individually.
        let mut sum = 0.0;
        let mut n_used = 0usize;
        let mut outliers = 0usize;
        for i in 0..spec.total_bins() {
            if result.valid[i] && result.mixed[i] >= 10 {
                sum += result.g2[i];
                n_used += 1;
                if (result.g2[i] - 1.0).abs() > 4.0 * result.err[i] {
                    outliers += 1;
                }
            }
        }
        assert!(n_used > 100);
        let mean = sum / n_used as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean g2 {mean}");
        assert!(outliers <= 2, "{outliers}/{n_used} bins deviate by > 4 sigma");
    }
}
