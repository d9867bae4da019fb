//! Pair counting engines.
//!
//! `pair_histogram_naive` is the quadratic reference; `pair_histogram_fast`
//! prunes candidates with transverse cell lists and sorted sweeps but bins
//! every surviving pair through the same code path, so the two agree
//! bit-exactly by construction.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{DetectionEvent, Shot};

use super::{CoordKind, HistogramSpec, PairHistogram};

/// Shot pairs used for mixed-event normalization: each shot is paired with
/// the next `mixing_factor` shots (cyclically), duplicates removed.
fn mixed_shot_pairs(n_shots: usize, mixing_factor: usize) -> Vec<(usize, usize)> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for s in 0..n_shots {
        for j in 1..=mixing_factor {
            let u = (s + j) % n_shots;
            if u == s {
                break;
            }
            let key = (s.min(u), s.max(u));
            if seen.insert(key) {
                pairs.push(key);
            }
        }
    }
    pairs
}

/// Bins one unordered pair. Sign-odd coordinates are symmetrized: both
/// orientations are recorded, so the histogram is mirror-symmetric and
/// independent of any storage or shot ordering convention.
fn record_pair(spec: &HistogramSpec, a: &DetectionEvent, b: &DetectionEvent, counts: &mut [u64]) {
    if let Some(bin) = spec.pair_bin(a, b) {
        counts[bin] += 1;
    }
    if spec.kind.sign_odd() {
        if let Some(bin) = spec.pair_bin(b, a) {
            counts[bin] += 1;
        }
    }
}

/// Reference engine: every pair, O(N^2) per shot / shot pair.
pub fn pair_histogram_naive(shots: &[Shot], spec: &HistogramSpec) -> Result<PairHistogram> {
    spec.validate()?;
    let mut hist = PairHistogram::empty(spec);
    hist.n_shots = shots.len() as u64;
    hist.n_events_total = shots.iter().map(|s| s.events.len() as u64).sum();
    for shot in shots {
        let ev = &shot.events;
        for i in 0..ev.len() {
            for j in (i + 1)..ev.len() {
                record_pair(spec, &ev[i], &ev[j], &mut hist.same_shot);
            }
        }
    }
    for (s, u) in mixed_shot_pairs(shots.len(), spec.mixing_factor) {
        for a in &shots[s].events {
            for b in &shots[u].events {
                record_pair(spec, a, b, &mut hist.mixed);
            }
        }
    }
    Ok(hist)
}

/// Per-shot search structure: events bucketed on a transverse grid with the
/// window size as pitch, each bucket ordered by (z_equiv, storage index).
/// Any pair within the histogram window is found within the 3x3 cell
/// neighborhood; the exact window test is left to the shared bin function.
struct ShotIndex<'a> {
    events: &'a [DetectionEvent],
    cells: HashMap<(i64, i64), Vec<(f64, u32)>>,
    /// (t, storage index), ascending; used for time-difference sweeps.
    by_time: Vec<(f64, u32)>,
}

impl<'a> ShotIndex<'a> {
    fn build(shot: &'a Shot, spec: &HistogramSpec) -> ShotIndex<'a> {
        let mut cells: HashMap<(i64, i64), Vec<(f64, u32)>> = HashMap::new();
        let mut by_time = Vec::new();
        match spec.kind {
            CoordKind::Difference | CoordKind::Sum => {
                let (hx, hy) = (spec.axes[0].half_range, spec.axes[1].half_range);
                for (i, e) in shot.events.iter().enumerate() {
                    let key = ((e.x / hx).floor() as i64, (e.y / hy).floor() as i64);
                    cells.entry(key).or_default().push((e.z_equiv, i as u32));
                }
                for list in cells.values_mut() {
                    list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                }
            }
            CoordKind::TimeDifference => {
                by_time = shot.events.iter().enumerate().map(|(i, e)| (e.t, i as u32)).collect();
                by_time.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            CoordKind::SumRadial => unreachable!("radial projection has no fast path"),
        }
        ShotIndex { events: &shot.events, cells, by_time }
    }

    /// Entries in a sorted list with sort key strictly greater than
    /// (z0, i0) and z no larger than hi.
    fn after<'b>(list: &'b [(f64, u32)], z0: f64, i0: u32, hi: f64) -> &'b [(f64, u32)] {
        let start = list.partition_point(|&(z, i)| match z.total_cmp(&z0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => i <= i0,
            std::cmp::Ordering::Greater => false,
        });
        let end = start + list[start..].partition_point(|&(z, _)| z <= hi);
        &list[start..end]
    }

    /// Entries with z in [lo, hi].
    fn range<'b>(list: &'b [(f64, u32)], lo: f64, hi: f64) -> &'b [(f64, u32)] {
        let start = list.partition_point(|&(z, _)| z < lo);
        let end = start + list[start..].partition_point(|&(z, _)| z <= hi);
        &list[start..end]
    }
}

fn count_same_shot(index: &ShotIndex, spec: &HistogramSpec, counts: &mut [u64]) {
    let ev = index.events;
    match spec.kind {
        CoordKind::Difference => {
            let (hx, hy, hz) =
                (spec.axes[0].half_range, spec.axes[1].half_range, spec.axes[2].half_range);
            for (i, e) in ev.iter().enumerate() {
                let (cx, cy) = ((e.x / hx).floor() as i64, (e.y / hy).floor() as i64);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(list) = index.cells.get(&(cx + dx, cy + dy)) else { continue };
                        for &(_, j) in ShotIndex::after(list, e.z_equiv, i as u32, e.z_equiv + hz)
                        {
                            record_pair(spec, e, &ev[j as usize], counts);
                        }
                    }
                }
            }
        }
        CoordKind::Sum => {
            let (hx, hy, hz) =
                (spec.axes[0].half_range, spec.axes[1].half_range, spec.axes[2].half_range);
            let c = spec.center;
            for (i, e) in ev.iter().enumerate() {
                // Partners cluster around the point reflecting e through the
                // center; the window condition is symmetric, so counting
                // only j > i sees each pair once.
                let (rx, ry, rz) = (2.0 * c[0] - e.x, 2.0 * c[1] - e.y, 2.0 * c[2] - e.z_equiv);
                let (cx, cy) = ((rx / hx).floor() as i64, (ry / hy).floor() as i64);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(list) = index.cells.get(&(cx + dx, cy + dy)) else { continue };
                        for &(_, j) in ShotIndex::range(list, rz - hz, rz + hz) {
                            let j = j as usize;
                            if j <= i {
                                continue;
                            }
                            record_pair(spec, e, &ev[j], counts);
                        }
                    }
                }
            }
        }
        CoordKind::TimeDifference => {
            let ht = spec.axes[0].half_range;
            let list = &index.by_time;
            for k in 0..list.len() {
                let (t0, i) = list[k];
                for &(_, j) in list[(k + 1)..].iter().take_while(|&&(t, _)| t <= t0 + ht) {
                    record_pair(spec, &ev[i as usize], &ev[j as usize], counts);
                }
            }
        }
        CoordKind::SumRadial => unreachable!(),
    }
}

fn count_mixed(a: &ShotIndex, b: &ShotIndex, spec: &HistogramSpec, counts: &mut [u64]) {
    match spec.kind {
        CoordKind::Difference => {
            let (hx, hy, hz) =
                (spec.axes[0].half_range, spec.axes[1].half_range, spec.axes[2].half_range);
            for e in a.events {
                let (cx, cy) = ((e.x / hx).floor() as i64, (e.y / hy).floor() as i64);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(list) = b.cells.get(&(cx + dx, cy + dy)) else { continue };
                        for &(_, j) in ShotIndex::range(list, e.z_equiv - hz, e.z_equiv + hz) {
                            record_pair(spec, e, &b.events[j as usize], counts);
                        }
                    }
                }
            }
        }
        CoordKind::Sum => {
            let (hx, hy, hz) =
                (spec.axes[0].half_range, spec.axes[1].half_range, spec.axes[2].half_range);
            let c = spec.center;
            for e in a.events {
                let (rx, ry, rz) = (2.0 * c[0] - e.x, 2.0 * c[1] - e.y, 2.0 * c[2] - e.z_equiv);
                let (cx, cy) = ((rx / hx).floor() as i64, (ry / hy).floor() as i64);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(list) = b.cells.get(&(cx + dx, cy + dy)) else { continue };
                        for &(_, j) in ShotIndex::range(list, rz - hz, rz + hz) {
                            record_pair(spec, e, &b.events[j as usize], counts);
                        }
                    }
                }
            }
        }
        CoordKind::TimeDifference => {
            let ht = spec.axes[0].half_range;
            for e in a.events {
                for &(_, j) in ShotIndex::range(&b.by_time, e.t - ht, e.t + ht) {
                    record_pair(spec, e, &b.events[j as usize], counts);
                }
            }
        }
        CoordKind::SumRadial => unreachable!(),
    }
}

enum Work {
    Same(usize),
    Mixed(usize, usize),
}

/// Production engine. Bit-identical to `pair_histogram_naive` and to itself
/// under any thread count: bin counts are u64 sums, so the parallel merge
/// order cannot change the result.
pub fn pair_histogram_fast(shots: &[Shot], spec: &HistogramSpec) -> Result<PairHistogram> {
    spec.validate()?;
    if spec.kind == CoordKind::SumRadial {
        // The projected coordinate depends on the pair direction, not on
        // proximity, so no spatial pruning applies; defer to the reference
        // loops (still parallelized below would gain nothing extra here).
        return pair_histogram_naive(shots, spec);
    }
    let indexes: Vec<ShotIndex> = shots.iter().map(|s| ShotIndex::build(s, spec)).collect();
    let mut work: Vec<Work> = (0..shots.len()).map(Work::Same).collect();
    work.extend(
        mixed_shot_pairs(shots.len(), spec.mixing_factor)
            .into_iter()
            .map(|(s, u)| Work::Mixed(s, u)),
    );
    let mut hist = work
        .par_iter()
        .fold(
            || PairHistogram::empty(spec),
            |mut acc, item| {
                match *item {
                    Work::Same(s) => count_same_shot(&indexes[s], spec, &mut acc.same_shot),
                    Work::Mixed(s, u) => {
                        count_mixed(&indexes[s], &indexes[u], spec, &mut acc.mixed)
                    }
                }
                acc
            },
        )
        .reduce(|| PairHistogram::empty(spec), PairHistogram::merge);
    hist.n_shots = shots.len() as u64;
    hist.n_events_total = shots.iter().map(|s| s.events.len() as u64).sum();
    Ok(hist)
}
