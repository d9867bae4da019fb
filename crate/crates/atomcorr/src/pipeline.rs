//! Experiment pipelines: simulate → detect, and correlate → fit.
//!
//! Shots are simulated in parallel; every shot owns an RNG substream keyed
//! by (master_seed, shot_id), so the output is a pure function of the
//! config and seed, never of the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::correlator::{
    fit_gaussian_peak, normalize, pair_histogram_fast, pair_histogram_naive, signal_to_noise,
    CorrelationResult, HistogramSpec,
};
use crate::detector::{apply_detector, propagate_to_detector, DetectorStats, IdealAtom};
use crate::error::{Error, Result};
use crate::halo::sample_halo_shot;
use crate::model::{Provenance, Shot};
use crate::rng::shot_rng;
use crate::sources::{build_far_field, BosonSampler, FermionSampler};

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub experiment: String,
    pub n_shots: u64,
    pub master_seed: u64,
    pub generated_atoms: u64,
    pub after_thinning: u64,
    pub clipped_by_aperture: u64,
    pub dropped_by_dead_time: u64,
    pub detected: u64,
    pub detected_fraction: f64,
    pub wall_seconds: f64,
}

enum Generator<'a> {
    Boson(BosonSampler),
    Fermion(FermionSampler),
    Halo(&'a RunConfig),
}

/// Run the configured experiment end to end and return the detected shots.
pub fn run_simulation(config: &RunConfig) -> Result<(Vec<Shot>, SimulationSummary)> {
    config.validate()?;
    let start = Instant::now();
    let generator = match config.experiment {
        Experiment::HbtBoson | Experiment::HbtFermion => {
            let source = config.source.as_ref().expect("validated");
            let tof = config.tof.as_ref().expect("validated");
            let model = build_far_field(source, tof, &config.constants)?;
            match config.experiment {
                Experiment::HbtBoson => {
                    Generator::Boson(BosonSampler::new(&model, &config.sampler)?)
                }
                _ => Generator::Fermion(FermionSampler::new(
                    &model,
                    &config.sampler,
                    source.mode_count_per_axis,
                )?),
            }
        }
        Experiment::Halo => Generator::Halo(config),
        Experiment::FanoDemo => {
            return Err(Error::Config(
                "fano_demo produces no event stream; use the `reference` command".into(),
            ))
        }
    };

    let run_shot = |shot_id: u64| -> Result<(Shot, DetectorStats)> {
        let mut rng = shot_rng(config.master_seed, shot_id);
        let atoms: Vec<IdealAtom> = match &generator {
            Generator::Boson(sampler) => sampler.sample_shot(shot_id, &mut rng),
            Generator::Fermion(sampler) => sampler.sample_shot(shot_id, &mut rng)?,
            Generator::Halo(config) => {
                let halo = config.halo.as_ref().expect("validated");
                let tof = config.tof.as_ref().expect("validated");
                sample_halo_shot(halo, &config.constants, shot_id, &mut rng)
                    .iter()
                    .map(|a| {
                        propagate_to_detector(a, tof, &config.constants, halo.species_mass)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let provenance = Provenance {
            master_seed: config.master_seed,
            shot_id,
            source: config.experiment.name().to_string(),
        };
        apply_detector(&atoms, &config.detector, provenance, &mut rng)
    };

    let per_shot: Vec<(Shot, DetectorStats)> = (0..config.n_shots)
        .into_par_iter()
        .map(run_shot)
        .collect::<Result<Vec<_>>>()?;

    let mut totals = DetectorStats::default();
    let mut shots = Vec::with_capacity(per_shot.len());
    for (shot, stats) in per_shot {
        totals.input_atoms += stats.input_atoms;
        totals.after_thinning += stats.after_thinning;
        totals.clipped_by_aperture += stats.clipped_by_aperture;
        totals.dropped_by_dead_time += stats.dropped_by_dead_time;
        totals.detected += stats.detected;
        shots.push(shot);
    }
    let summary = SimulationSummary {
        experiment: config.experiment.name().to_string(),
        n_shots: config.n_shots,
        master_seed: config.master_seed,
        generated_atoms: totals.input_atoms as u64,
        after_thinning: totals.after_thinning as u64,
        clipped_by_aperture: totals.clipped_by_aperture as u64,
        dropped_by_dead_time: totals.dropped_by_dead_time as u64,
        detected: totals.detected as u64,
        detected_fraction: if totals.input_atoms > 0 {
            totals.detected as f64 / totals.input_atoms as f64
        } else {
            0.0
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((shots, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Fast,
    Naive,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationSummary {
    pub n_shots: u64,
    pub n_events: u64,
    pub same_shot_pairs: u64,
    pub mixed_pairs: u64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_amplitude_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_widths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_goodness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_to_noise: Option<f64>,
}

/// Count pairs, normalize, and (optionally) fit the Gaussian peak model.
pub fn correlate_shots(
    shots: &[Shot],
    spec: &HistogramSpec,
    engine: Engine,
    with_fit: bool,
) -> Result<(CorrelationResult, CorrelationSummary)> {
    let start = Instant::now();
    if shots.iter().all(|s| s.events.is_empty()) {
        return Err(Error::Domain("event stream is empty; nothing to correlate".into()));
    }
    let hist = match engine {
        Engine::Fast => pair_histogram_fast(shots, spec)?,
        Engine::Naive => pair_histogram_naive(shots, spec)?,
    };
    let mut result = normalize(&hist)?;
    let mut summary = CorrelationSummary {
        n_shots: hist.n_shots,
        n_events: hist.n_events_total,
        same_shot_pairs: hist.same_total(),
        mixed_pairs: hist.mixed_total(),
        wall_seconds: 0.0,
        fit_amplitude: None,
        fit_amplitude_sigma: None,
        fit_offset: None,
        fit_widths: None,
        fit_goodness: None,
        signal_to_noise: None,
    };
    if with_fit {
        let fit = fit_gaussian_peak(&result)?;
        summary.signal_to_noise = Some(signal_to_noise(&result, &fit));
        summary.fit_amplitude = Some(fit.amplitude);
        summary.fit_amplitude_sigma = Some(fit.amplitude_sigma);
        summary.fit_offset = Some(fit.offset);
        summary.fit_widths = Some(fit.widths.clone());
        summary.fit_goodness = Some(fit.goodness);
        result.fit = Some(fit);
    }
    summary.wall_seconds = start.elapsed().as_secs_f64();
    Ok((result, summary))
}

/// Human-readable lines followed by a machine-readable TOML block.
pub fn render_report<T: Serialize>(title: &str, lines: &[String], machine: &T) -> String {
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    for line in lines {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("--- machine-readable (toml) ---\n");
    out.push_str(&toml::to_string(machine).expect("summary serializes"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::correlator::{AxisSpec, CoordKind};

    fn boson_config(n_shots: u64, seed: u64) -> RunConfig {
        RunConfig::parse(&format!(
            r#"
experiment = "hbt_boson"
n_shots = {n_shots}
master_seed = {seed}

[source]
mean_atoms_per_shot = 60.0
degeneracy_parameter = 0.5

[source.species]
statistics = "boson"
mass_ref = "he4"

[source.geometry]
s_x = 1e-4
s_y = 1e-4
s_z = 1e-4

[tof]
fall_time = 0.32

[detector]
quantum_efficiency = 1.0
sigma_t = 0.0
sigma_xy = 0.0
aperture_diameter = inf
v_spread_fraction = 0.0
"#
        ))
        .unwrap()
    }

    #[test]
    fn simulation_is_reproducible_and_counts_add_up() {
        let config = boson_config(8, 11);
        let (shots_a, summary) = run_simulation(&config).unwrap();
        let (shots_b, _) = run_simulation(&config).unwrap();
        assert_eq!(shots_a, shots_b);
        assert_eq!(summary.n_shots, 8);
        let detected: usize = shots_a.iter().map(|s| s.events.len()).sum();
        assert_eq!(detected as u64, summary.detected);
        assert_eq!(
            summary.generated_atoms,
            summary.detected
                + summary.clipped_by_aperture
                + summary.dropped_by_dead_time
                + (summary.generated_atoms - summary.after_thinning)
        );
    }

    #[test]
    fn different_seeds_differ() {
        let (a, _) = run_simulation(&boson_config(3, 1)).unwrap();
        let (b, _) = run_simulation(&boson_config(3, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn correlate_rejects_empty_streams() {
        let spec = HistogramSpec {
            kind: CoordKind::Difference,
            axes: vec![AxisSpec { n_bins: 5, half_range: 1e-4 }; 3],
            mixing_factor: 4,
            center: [0.0; 3],
        };
        let err = correlate_shots(&[], &spec, Engine::Fast, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fano_demo_cannot_simulate() {
        let config = RunConfig::parse(
            "experiment = \"fano_demo\"\nn_shots = 1\nmaster_seed = 0\n",
        )
        .unwrap();
        assert!(run_simulation(&config).is_err());
    }
}
