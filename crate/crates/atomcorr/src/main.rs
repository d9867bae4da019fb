use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use atomcorr::config::{Experiment, RunConfig};
use atomcorr::correlator::{AxisSpec, CoordKind, HistogramSpec};
use atomcorr::error::{Error, Result};
use atomcorr::io::{read_events, write_events, write_histogram_csv, EventFileHeader};
use atomcorr::model::{SpeciesTag, Statistics};
use atomcorr::pipeline::{correlate_shots, render_report, run_simulation, Engine};
use atomcorr::rng::shot_rng;
use atomcorr::sources::{build_far_field, fano_joint_probability, reference_g2};

/// Monte Carlo simulation and correlation analysis of cold-atom detection.
///
/// Exit codes: 0 success, 2 configuration or physics-domain error,
/// 3 I/O or parse error, 4 fit failure.
#[derive(Parser)]
#[command(name = "atomcorr", version, about, verbatim_doc_comment)]
struct Cli {
    /// Worker threads (default: all cores). Output never depends on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Fast,
    Naive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CoordsArg {
    /// Pair separation (dx, dy, dz): colinear / HBT analysis.
    Difference,
    /// Pair sum relative to a center: back-to-back analysis.
    Sum,
    /// Pair sum projected on the pair axis (1D).
    SumRadial,
    /// Raw arrival-time difference (1D).
    Time,
}

impl CoordsArg {
    fn kind(self) -> CoordKind {
        match self {
            CoordsArg::Difference => CoordKind::Difference,
            CoordsArg::Sum => CoordKind::Sum,
            CoordsArg::SumRadial => CoordKind::SumRadial,
            CoordsArg::Time => CoordKind::TimeDifference,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write an event file.
    Simulate {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override master_seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Event file path (overrides [output].events).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build pair histograms and fit g2 from an event file.
    Correlate {
        /// Event file produced by `simulate`.
        #[arg(long)]
        events: PathBuf,
        /// Optional run config; supplies [histogram] defaults and the
        /// digest check against the event-file header.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fast")]
        engine: EngineArg,
        #[arg(long, value_enum)]
        coords: Option<CoordsArg>,
        /// Bins per axis.
        #[arg(long)]
        bins: Option<usize>,
        /// Half-range per axis (m or s); one value or one per axis.
        #[arg(long, value_delimiter = ',')]
        half_range: Vec<f64>,
        /// Partner shots per shot in the mixed-event normalization.
        #[arg(long)]
        mixing: Option<usize>,
        /// Center for sum coordinates: x,y,z.
        #[arg(long, value_delimiter = ',')]
        center: Vec<f64>,
        /// Histogram CSV path (overrides [output].histogram).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Skip the Gaussian peak fit.
        #[arg(long)]
        no_fit: bool,
    },
    /// Print the analytic predictions for a config (no simulation).
    Reference {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time the fast vs naive pair counters on synthetic data.
    Bench {
        #[arg(long, default_value_t = 40)]
        shots: usize,
        #[arg(long, default_value_t = 2000)]
        events_per_shot: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool configured before first use");
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, seed, output } => cmd_simulate(&config, seed, output),
        Command::Correlate {
            events,
            config,
            engine,
            coords,
            bins,
            half_range,
            mixing,
            center,
            output,
            no_fit,
        } => cmd_correlate(CorrelateArgs {
            events,
            config,
            engine,
            coords,
            bins,
            half_range,
            mixing,
            center,
            output,
            no_fit,
        }),
        Command::Reference { config } => cmd_reference(&config),
        Command::Bench { shots, events_per_shot } => cmd_bench(shots, events_per_shot),
    }
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, output: Option<PathBuf>) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if config.experiment == Experiment::FanoDemo {
        // No event stream: report the interference oracle instead.
        return print_fano_demo(&config);
    }
    let (shots, summary) = run_simulation(&config)?;
    let path = output
        .or_else(|| config.output.events.clone())
        .unwrap_or_else(|| PathBuf::from("events.csv"));
    let header = EventFileHeader::new(config.digest(), config.master_seed);
    write_events(&path, &header, &shots)?;
    let lines = vec![
        format!("shots:               {}", summary.n_shots),
        format!("atoms generated:     {}", summary.generated_atoms),
        format!("after QE thinning:   {}", summary.after_thinning),
        format!("clipped by aperture: {}", summary.clipped_by_aperture),
        format!("lost to dead time:   {}", summary.dropped_by_dead_time),
        format!(
            "detected:            {} ({:.2}% of generated)",
            summary.detected,
            100.0 * summary.detected_fraction
        ),
        format!("wall time:           {:.2} s", summary.wall_seconds),
        format!("events written to:   {}", path.display()),
    ];
    println!("{}", render_report(&format!("simulate: {}", summary.experiment), &lines, &summary));
    Ok(())
}

struct CorrelateArgs {
    events: PathBuf,
    config: Option<PathBuf>,
    engine: EngineArg,
    coords: Option<CoordsArg>,
    bins: Option<usize>,
    half_range: Vec<f64>,
    mixing: Option<usize>,
    center: Vec<f64>,
    output: Option<PathBuf>,
    no_fit: bool,
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let (header, shots) = read_events(&args.events)?;
    let config = args.config.as_deref().map(RunConfig::load).transpose()?;
    if let Some(config) = &config {
        let digest = config.digest();
        if !header.config_digest.is_empty() && header.config_digest != digest {
            eprintln!(
                "warning: event file was produced by a different config \
                 (file digest {}, config digest {})",
                &header.config_digest[..16.min(header.config_digest.len())],
                &digest[..16]
            );
        }
    }
    let spec = resolve_spec(&args, config.as_ref())?;
    let engine = match args.engine {
        EngineArg::Fast => Engine::Fast,
        EngineArg::Naive => Engine::Naive,
    };
    let (result, summary) = correlate_shots(&shots, &spec, engine, !args.no_fit)?;
    let path = args
        .output
        .or_else(|| config.as_ref().and_then(|c| c.output.histogram.clone()))
        .unwrap_or_else(|| PathBuf::from("histogram.csv"));
    write_histogram_csv(&path, &result)?;
    let mut lines = vec![
        format!("events:          {} in {} shots", summary.n_events, summary.n_shots),
        format!("same-shot pairs: {}", summary.same_shot_pairs),
        format!("mixed pairs:     {}", summary.mixed_pairs),
        format!("histogram:       {}", path.display()),
    ];
    if let Some(fit) = &result.fit {
        lines.push(format!(
            "fit: amplitude = {:.4} ± {:.4}, offset = {:.4}, reduced chi2 = {:.2}",
            fit.amplitude, fit.amplitude_sigma, fit.offset, fit.goodness
        ));
        let widths: Vec<String> = fit.widths.iter().map(|w| format!("{w:.4e}")).collect();
        lines.push(format!("fit widths (1/e): {}", widths.join(", ")));
        if let Some(snr) = summary.signal_to_noise {
            lines.push(format!("signal-to-noise: {snr:.2}"));
        }
    }
    println!("{}", render_report("correlate", &lines, &summary));
    Ok(())
}

fn resolve_spec(args: &CorrelateArgs, config: Option<&RunConfig>) -> Result<HistogramSpec> {
    let base = config.and_then(|c| c.histogram.clone());
    let kind = args
        .coords
        .map(CoordsArg::kind)
        .or(base.as_ref().map(|b| b.kind))
        .unwrap_or(CoordKind::Difference);
    let n_axes = kind.n_axes();
    // Axes come from flags when given, otherwise from the config spec (only
    // if its coordinate kind matches the requested one).
    let axes: Vec<AxisSpec> = if !args.half_range.is_empty() || args.bins.is_some() {
        let ranges: Vec<f64> = match args.half_range.len() {
            0 => {
                return Err(Error::Config(
                    "--bins requires --half-range when no [histogram] config applies".into(),
                ))
            }
            1 => vec![args.half_range[0]; n_axes],
            n if n == n_axes => args.half_range.clone(),
            n => {
                return Err(Error::Config(format!(
                    "--half-range needs 1 or {n_axes} values, got {n}"
                )))
            }
        };
        let bins = args.bins.unwrap_or(11);
        ranges.into_iter().map(|hr| AxisSpec { n_bins: bins, half_range: hr }).collect()
    } else if let Some(base) = &base {
        if base.kind != kind {
            return Err(Error::Config(format!(
                "[histogram] config is for {:?}; pass --half-range to use {:?}",
                base.kind, kind
            )));
        }
        base.axes.clone()
    } else {
        return Err(Error::Config(
            "no histogram window: pass --half-range (and --bins) or a config with [histogram]"
                .into(),
        ));
    };
    let center = match args.center.len() {
        0 => base.as_ref().map(|b| b.center).unwrap_or([0.0; 3]),
        3 => [args.center[0], args.center[1], args.center[2]],
        n => return Err(Error::Config(format!("--center needs 3 values, got {n}"))),
    };
    let spec = HistogramSpec {
        kind,
        axes,
        mixing_factor: args
            .mixing
            .or(base.as_ref().map(|b| b.mixing_factor))
            .unwrap_or(4),
        center,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct ReferenceSummary {
    experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence_lengths: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    envelope_widths: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g2_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g2_zero_blurred: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shell_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    free_fall_displacement: Option<f64>,
}

fn cmd_reference(config_path: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let mut lines = Vec::new();
    let mut summary = ReferenceSummary {
        experiment: config.experiment.name().to_string(),
        coherence_lengths: None,
        envelope_widths: None,
        g2_zero: None,
        g2_zero_blurred: None,
        shell_radius: None,
        free_fall_displacement: None,
    };
    match config.experiment {
        Experiment::HbtBoson | Experiment::HbtFermion => {
            let source = config.source.as_ref().expect("validated");
            let tof = config.tof.as_ref().expect("validated");
            let model = build_far_field(source, tof, &config.constants)?;
            let axis_names = ["x", "y", "z"];
            for i in 0..3 {
                lines.push(format!(
                    "axis {}: source size {:.4e} m -> correlation length {:.4e} m, envelope {:.4e} m",
                    axis_names[i],
                    source.geometry.sizes()[i],
                    model.coherence_lengths[i],
                    model.envelope_widths[i]
                ));
            }
            let sign = match source.species.statistics {
                Statistics::Boson => 1.0,
                Statistics::Fermion => -1.0,
            };
            let g2_zero = 1.0 + sign;
            // Detector blur adds variance 2 d^2 to each pair-difference
            // axis; the Gaussian peak keeps its area, so the amplitude
            // scales by l / sqrt(l^2 + 4 d^2) per axis.
            let d = config.detector;
            let blur = [d.sigma_xy, d.sigma_xy, d.sigma_t * d.v_arrival];
            let mut contrast = 1.0;
            for i in 0..3 {
                let l = model.coherence_lengths[i];
                contrast *= l / (l * l + 4.0 * blur[i] * blur[i]).sqrt();
            }
            let g2_blurred = 1.0 + sign * contrast;
            lines.push(format!("g2(0) ideal detector: {g2_zero:.4}"));
            lines.push(format!(
                "g2(0) with blur ({:.2e}, {:.2e}, {:.2e}) m: {:.4}",
                blur[0], blur[1], blur[2], g2_blurred
            ));
            lines.push("g2 profile along x (ideal):".to_string());
            for mult in [0.0, 0.5, 1.0, 2.0, 3.0] {
                let delta = [mult * model.coherence_lengths[0], 0.0, 0.0];
                let g2 = reference_g2(&model, source.species, delta);
                lines.push(format!("  dx = {:.4e} m -> g2 = {:.6}", delta[0], g2));
            }
            summary.coherence_lengths = Some(model.coherence_lengths);
            summary.envelope_widths = Some(model.envelope_widths);
            summary.g2_zero = Some(g2_zero);
            summary.g2_zero_blurred = Some(g2_blurred);
        }
        Experiment::Halo => {
            let halo = config.halo.as_ref().expect("validated");
            let tof = config.tof.as_ref().expect("validated");
            let t = tof.fall_time;
            for mult in [0.5, 1.0, 1.5] {
                let r = atomcorr::halo::shell_radius(halo, &config.constants, mult * t)?;
                lines.push(format!("t = {:.4e} s -> shell radius {:.4e} m", mult * t, r));
            }
            let radius = atomcorr::halo::shell_radius(halo, &config.constants, t)?;
            let drop = 0.5 * config.constants.gravity_g * t * t;
            lines.push(format!("free-fall displacement at t = {t:.4e} s: {drop:.4e} m"));
            summary.shell_radius = Some(radius);
            summary.free_fall_displacement = Some(drop);
        }
        Experiment::FanoDemo => {
            return print_fano_demo(&config);
        }
    }
    println!(
        "{}",
        render_report(&format!("reference: {}", config.experiment.name()), &lines, &summary)
    );
    Ok(())
}

#[derive(Serialize)]
struct FanoSummary {
    boson_zero_phase: f64,
    fermion_zero_phase: f64,
    boson_random_phase_mean: f64,
    fermion_random_phase_mean: f64,
    draws: u64,
}

/// Two-amplitude interference oracle: joint detection probabilities
/// (relative to independent particles) at zero phase and averaged over
/// random phases.
fn print_fano_demo(config: &RunConfig) -> Result<()> {
    let boson = SpeciesTag::HE4_BOSON;
    let fermion = SpeciesTag::HE3_FERMION;
    let zero_b = fano_joint_probability(boson, 0.0, 0.0, 0.0, 0.0);
    let zero_f = fano_joint_probability(fermion, 0.0, 0.0, 0.0, 0.0);
    let draws = 100_000u64;
    let mut rng = shot_rng(config.master_seed, 0);
    let mut sum_b = 0.0;
    let mut sum_f = 0.0;
    for _ in 0..draws {
        let ph: [f64; 4] = core::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        sum_b += fano_joint_probability(boson, ph[0], ph[1], ph[2], ph[3]);
        sum_f += fano_joint_probability(fermion, ph[0], ph[1], ph[2], ph[3]);
    }
    let summary = FanoSummary {
        boson_zero_phase: zero_b,
        fermion_zero_phase: zero_f,
        boson_random_phase_mean: sum_b / draws as f64,
        fermion_random_phase_mean: sum_f / draws as f64,
        draws,
    };
    let lines = vec![
        format!("zero phase: boson {zero_b:.4}, fermion {zero_f:.4}"),
        format!(
            "random phases ({draws} draws): boson mean {:.4}, fermion mean {:.4}",
            summary.boson_random_phase_mean, summary.fermion_random_phase_mean
        ),
    ];
    println!("{}", render_report("fano_demo", &lines, &summary));
    Ok(())
}

fn cmd_bench(n_shots: usize, events_per_shot: usize) -> Result<()> {
    use atomcorr::correlator::{pair_histogram_fast, pair_histogram_naive};
    use atomcorr::model::{DetectionEvent, DetectorConfig, Provenance, Shot};

    let config = DetectorConfig { v_arrival: 1.0, t_ref: 0.0, ..DetectorConfig::default() };
    let mut rng = shot_rng(0, 0);
    let shots: Vec<Shot> = (0..n_shots as u64)
        .map(|s| {
            let events = (0..events_per_shot)
                .map(|_| {
                    DetectionEvent::from_time(
                        s,
                        rng.gen_range(-1.0..1.0f64),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        &config,
                    )
                })
                .collect();
            Shot::new(s, events, Provenance { master_seed: 0, shot_id: s, source: "bench".into() })
        })
        .collect();
    let spec = HistogramSpec {
        kind: CoordKind::Difference,
        axes: vec![AxisSpec { n_bins: 11, half_range: 0.1 }; 3],
        mixing_factor: 4,
        center: [0.0; 3],
    };
    let start = std::time::Instant::now();
    let fast = pair_histogram_fast(&shots, &spec)?;
    let t_fast = start.elapsed().as_secs_f64();
    let start = std::time::Instant::now();
    let naive = pair_histogram_naive(&shots, &spec)?;
    let t_naive = start.elapsed().as_secs_f64();
    println!("bench: {n_shots} shots x {events_per_shot} events");
    println!("  fast:  {t_fast:.3} s");
    println!("  naive: {t_naive:.3} s ({:.1}x)", t_naive / t_fast.max(1e-9));
    println!("  identical: {}", fast == naive);
    if fast != naive {
        return Err(Error::Domain("fast and naive histograms differ".into()));
    }
    Ok(())
}
