//! Run configuration: strict TOML parsing, validation, and a stable digest
//! that event files carry so analysis can detect config drift.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correlator::HistogramSpec;
use crate::error::{Error, Result};
use crate::halo::HaloConfig;
use crate::model::{
    DetectorConfig, PhysicalConstants, Statistics, TofConfig, TrapSource,
};
use crate::sources::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Chaotic (thermal) bosons: bunching.
    HbtBoson,
    /// Ideal degenerate fermions: antibunching.
    HbtFermion,
    /// s-wave collision halo: back-to-back pairs.
    Halo,
    /// Two-amplitude interference oracle; produces no events.
    FanoDemo,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::HbtBoson => "hbt_boson",
            Experiment::HbtFermion => "hbt_fermion",
            Experiment::Halo => "halo",
            Experiment::FanoDemo => "fano_demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Event file path; defaults to `events.csv` in the working directory.
    pub events: Option<PathBuf>,
    /// Histogram CSV path for `correlate`.
    pub histogram: Option<PathBuf>,
}

/// Complete description of one run. Unknown keys are fatal everywhere:
/// a silently ignored typo in a physics parameter is worse than an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub n_shots: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub constants: PhysicalConstants,
    #[serde(default)]
    pub tof: Option<TofConfig>,
    #[serde(default)]
    pub source: Option<TrapSource>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub halo: Option<HaloConfig>,
    #[serde(default)]
    pub histogram: Option<HistogramSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            return Err(Error::Config("n_shots must be >= 1".into()));
        }
        self.constants.validate()?;
        self.detector.validate()?;
        self.sampler.validate()?;
        if let Some(tof) = &self.tof {
            tof.validate()?;
        }
        if let Some(source) = &self.source {
            source.validate()?;
        }
        if let Some(halo) = &self.halo {
            halo.clone().validated()?;
        }
        if let Some(hist) = &self.histogram {
            hist.validate()?;
        }
        match self.experiment {
            Experiment::HbtBoson | Experiment::HbtFermion => {
                let source = self.source.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "experiment {} requires a [source] section",
                        self.experiment.name()
                    ))
                })?;
                if self.tof.is_none() {
                    return Err(Error::Config(format!(
                        "experiment {} requires a [tof] section",
                        self.experiment.name()
                    )));
                }
                let want = match self.experiment {
                    Experiment::HbtBoson => Statistics::Boson,
                    _ => Statistics::Fermion,
                };
                if source.species.statistics != want {
                    return Err(Error::Config(format!(
                        "experiment {} needs {:?} statistics in [source.species]",
                        self.experiment.name(),
                        want
                    )));
                }
            }
            Experiment::Halo => {
                if self.halo.is_none() {
                    return Err(Error::Config(
                        "experiment halo requires a [halo] section".into(),
                    ));
                }
                if self.tof.is_none() {
                    return Err(Error::Config("experiment halo requires a [tof] section".into()));
                }
            }
            Experiment::FanoDemo => {}
        }
        Ok(())
    }

    /// SHA-256 over the canonical (re-serialized) form, hex-encoded. Stable
    /// against formatting and comment changes in the source file.
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}
