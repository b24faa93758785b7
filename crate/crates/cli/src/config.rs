use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use combmem::profiles::PulseTrainProfile;
use combmem::spopo_source::SpopoSource;

use crate::error::CliError;

/// Everything a run needs. Every field has a default, so `{}` is a valid
/// document and reproduces the headline parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_pulses: usize,
    pub pulse_duration: f64,
    pub period: f64,
    pub length: f64,
    pub kappa_t: f64,
    /// Depth nodes for every kernel integral. Deliberately not range-checked
    /// here: `verify` reports a bad value as a failed check.
    pub quadrature_nodes: usize,
    pub phase_shifters: bool,
    pub supermodes: SupermodeConfig,
    /// Schmidt modes kept in the output spectrum.
    pub retained: usize,
    /// Input squeezing per supermode, in dB. Required by `squeezing`; its
    /// length sets how many supermodes are analysed.
    pub input_db: Option<Vec<f64>>,
    pub spectrum: GridConfig,
    pub stage: StageArg,
    pub n_range: NRange,
    pub lengths: Vec<f64>,
    pub oracle: OracleConfig,
    pub seed: u64,
    /// Left out of reports so they do not depend on where they are written.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_pulses: 90,
            pulse_duration: 0.1,
            period: 10_000.0,
            length: 10.0,
            kappa_t: 0.1,
            quadrature_nodes: combmem::kernels::DEFAULT_QUADRATURE_NODES,
            phase_shifters: false,
            supermodes: SupermodeConfig::default(),
            retained: 6,
            input_db: None,
            spectrum: GridConfig::default(),
            stage: StageArg::In,
            n_range: NRange {
                start: 1,
                end: 600,
                step: 1,
            },
            lengths: vec![10.0, 30.0, 50.0],
            oracle: OracleConfig::default(),
            seed: 20_240_101,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupermodeKindArg {
    Hermite,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupermodeConfig {
    pub kind: SupermodeKindArg,
    /// Hermite width in pulses.
    pub width: f64,
}

impl Default for SupermodeConfig {
    fn default() -> Self {
        Self {
            kind: SupermodeKindArg::Hermite,
            width: 10.0,
        }
    }
}

/// Frequency window: `points` samples over `lines` comb spacings centered
/// on zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
    pub lines: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: combmem::spectra::DEFAULT_SPECTRUM_POINTS,
            lines: combmem::spectra::DEFAULT_SPECTRUM_LINES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub depth_cells: usize,
    pub pulse_cells: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            depth_cells: combmem::oracle::DEFAULT_DEPTH_CELLS,
            pulse_cells: combmem::oracle::DEFAULT_PULSE_CELLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StageArg {
    In,
    Out,
}

/// Inclusive range `start:end:step` of train lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl NRange {
    pub fn values(&self) -> Vec<usize> {
        if self.step == 0 || self.start > self.end {
            return Vec::new();
        }
        (self.start..=self.end).step_by(self.step).collect()
    }
}

impl FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (*a, *b, "1"),
            [a, b, c] => (*a, *b, *c),
            _ => return Err(format!("expected A:B or A:B:STEP, got {s:?}")),
        };
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad number {x:?} in range {s:?}: {e}"))
        };
        Ok(Self {
            start: parse(a)?,
            end: parse(b)?,
            step: parse(step)?,
        })
    }
}

impl fmt::Display for NRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

impl Serialize for NRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite and positive, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Range checks that do not need the physics. Node counts are left to
    /// the core, which rejects them where they are used.
    pub fn validate(&self) -> Result<(), CliError> {
        PulseTrainProfile::new(self.n_pulses, self.pulse_duration, self.period)
            .map_err(|e| CliError::Config(e.to_string()))?;
        positive("length", self.length)?;
        if !(self.kappa_t.is_finite() && self.kappa_t >= 0.0) {
            return Err(CliError::Config(format!("kappa_t must be finite and non-negative, got {}", self.kappa_t)));
        }
        if self.retained == 0 || self.retained > self.n_pulses {
            return Err(CliError::Config(format!(
                "retained must lie in 1..={}, got {}",
                self.n_pulses, self.retained
            )));
        }
        positive("supermodes.width", self.supermodes.width)?;
        if self.spectrum.points < 3 {
            return Err(CliError::Config("spectrum.points must be at least 3".into()));
        }
        positive("spectrum.lines", self.spectrum.lines)?;
        if self.n_range.values().is_empty() {
            return Err(CliError::Config(format!("n_range {} is empty", self.n_range)));
        }
        if self.n_range.start == 0 {
            return Err(CliError::Config("n_range must start at 1 or above".into()));
        }
        if self.lengths.is_empty() {
            return Err(CliError::Config("lengths must not be empty".into()));
        }
        for &l in &self.lengths {
            positive("lengths", l)?;
        }
        if self.oracle.depth_cells == 0 || self.oracle.pulse_cells == 0 {
            return Err(CliError::Config("oracle cell counts must be positive".into()));
        }
        if let Some(db) = &self.input_db {
            if db.is_empty() || db.len() > self.n_pulses {
                return Err(CliError::Config(format!(
                    "input_db needs 1..={} entries, one per supermode, got {}",
                    self.n_pulses,
                    db.len()
                )));
            }
            if let Some(bad) = db.iter().find(|d| !(d.is_finite() && **d <= 0.0)) {
                return Err(CliError::Config(format!("input_db values must be finite and <= 0, got {bad}")));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> PulseTrainProfile {
        PulseTrainProfile::new(self.n_pulses, self.pulse_duration, self.period).expect("validated")
    }

    pub fn source(&self) -> SpopoSource {
        SpopoSource::new(self.kappa_t, self.profile()).expect("validated")
    }
}
