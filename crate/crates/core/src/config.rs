//! Experiment configuration, read from TOML. Every field has a default, so
//! an empty file is a valid 𝒩 = 2000, 16×16, 40 μs run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glauber::BathParameters;
use crate::lattice::{Boundary, LatticeGeometry};
use crate::oracle::MAX_EVOLVE_SITES;
use crate::schedule::{DirectPath, FieldPath, PresetParams};
use crate::sqa::{DEFAULT_BX_FLOOR, DEFAULT_TROTTER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    ClassicalBit,
    QuantumBit,
    ClassicalCooperative,
    QuantumCooperative,
    JcScan,
    StabilityHold,
    OracleSuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ClassicalBit,
        ExperimentKind::QuantumBit,
        ExperimentKind::ClassicalCooperative,
        ExperimentKind::QuantumCooperative,
        ExperimentKind::JcScan,
        ExperimentKind::StabilityHold,
        ExperimentKind::OracleSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ClassicalBit => "classical_bit",
            ExperimentKind::QuantumBit => "quantum_bit",
            ExperimentKind::ClassicalCooperative => "classical_cooperative",
            ExperimentKind::QuantumCooperative => "quantum_cooperative",
            ExperimentKind::JcScan => "jc_scan",
            ExperimentKind::StabilityHold => "stability_hold",
            ExperimentKind::OracleSuite => "oracle_suite",
        }
    }

    /// One of the four erasure protocols.
    pub fn is_protocol(self) -> bool {
        matches!(
            self,
            ExperimentKind::ClassicalBit
                | ExperimentKind::QuantumBit
                | ExperimentKind::ClassicalCooperative
                | ExperimentKind::QuantumCooperative
        )
    }

    pub fn is_cooperative(self) -> bool {
        matches!(
            self,
            ExperimentKind::ClassicalCooperative | ExperimentKind::QuantumCooperative
        )
    }

    pub fn is_quantum(self) -> bool {
        matches!(
            self,
            ExperimentKind::QuantumBit | ExperimentKind::QuantumCooperative
        )
    }

    pub fn default_preset(self) -> PresetName {
        if self.is_quantum() {
            PresetName::Quantum
        } else {
            PresetName::Classical
        }
    }

    pub fn default_engine(self) -> EngineKind {
        if self.is_quantum() {
            EngineKind::Sqa
        } else {
            EngineKind::Glauber
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Glauber,
    Sqa,
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glauber" => Ok(EngineKind::Glauber),
            "sqa" => Ok(EngineKind::Sqa),
            _ => Err(Error::Config(format!("unknown engine '{s}' (glauber|sqa)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Classical,
    Quantum,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(PresetName::Classical),
            "quantum" => Ok(PresetName::Quantum),
            _ => Err(Error::Config(format!("unknown preset '{s}' (classical|quantum)"))),
        }
    }
}

/// How the per-time histograms are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Each replica is recorded along its whole trajectory.
    #[default]
    Trajectory,
    /// Every sample time gets fresh runs from the same initial
    /// configurations, as with a destructive measurement.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
    pub boundary: Boundary,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            boundary: Boundary::Open,
        }
    }
}

impl LatticeConfig {
    pub fn geometry(&self) -> Result<LatticeGeometry> {
        LatticeGeometry::new(self.rows, self.cols, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Preset cycle; follows the experiment when absent.
    pub preset: Option<PresetName>,
    pub duration_us: f64,
    pub params: PresetParams,
    /// Explicit breakpoints; replaces the preset when present. Sampled at
    /// `params.dt`.
    pub inline: Option<DirectPath>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            preset: None,
            duration_us: 40.0,
            params: PresetParams::default(),
            inline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrerunConfig {
    /// TV distance between the last two histograms below which the
    /// relaxation counts as converged.
    pub tolerance_tv: f64,
    /// Noise allowance in multinomial standard deviations.
    pub noise_sigmas: f64,
}

impl Default for PrerunConfig {
    fn default() -> Self {
        Self {
            tolerance_tv: 0.02,
            noise_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JcScanConfig {
    /// Final effective coupling grid, GHz.
    pub j_min_ghz: f64,
    pub j_max_ghz: f64,
    pub points: usize,
    /// Forward-ramp duration, μs.
    pub tau_us: f64,
    /// Ramps per grid point; `None` uses `replicas`.
    pub samples: Option<usize>,
    /// Repeat the scan at 2τ and report the largest change in units of σ.
    pub check_slowness: bool,
    /// Device curves CSV (`s,A_GHz,B_GHz`); the bundled synthetic pair when absent.
    pub curves: Option<PathBuf>,
}

impl Default for JcScanConfig {
    fn default() -> Self {
        Self {
            j_min_ghz: 0.1,
            j_max_ghz: 0.7,
            points: 25,
            tau_us: 1000.0,
            samples: None,
            check_slowness: false,
            curves: None,
        }
    }
}

impl JcScanConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if self.points < 3 || !(self.j_max_ghz > self.j_min_ghz) || !(self.j_min_ghz > 0.0) {
            return Err(Error::Config(
                "jc_scan needs points ≥ 3 and 0 < j_min_ghz < j_max_ghz".into(),
            ));
        }
        let m = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|k| (self.j_min_ghz * (m - k as f64) + self.j_max_ghz * k as f64) / m)
            .map(|j| (j * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    /// Protocol whose final ensemble is held.
    pub source: ExperimentKind,
    pub hold_us: f64,
    pub sample_every_us: f64,
    /// Stability tolerance in multinomial standard deviations of TV.
    pub tolerance_sigmas: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            source: ExperimentKind::QuantumCooperative,
            hold_us: 2000.0,
            sample_every_us: 100.0,
            tolerance_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSuiteConfig {
    /// Number of randomized driven cycles.
    pub paths: usize,
    /// Chains of 1..=max_sites spins.
    pub max_sites: usize,
    /// Range of bath coupling rates, 1/μs.
    pub gamma_range: (f64, f64),
    /// Range of cycle durations, μs.
    pub duration_range: (f64, f64),
    /// Samples per cycle.
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for OracleSuiteConfig {
    fn default() -> Self {
        Self {
            paths: 20,
            max_sites: 4,
            gamma_range: (0.2, 5.0),
            duration_range: (0.5, 5.0),
            samples: 40,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub lattice: LatticeConfig,
    pub schedule: ScheduleConfig,
    /// Temperature and sweep calibration; `rng_seed` is ignored, all seeds
    /// derive from `master_seed`.
    pub bath: BathParameters,
    pub replicas: usize,
    /// Follows the experiment when absent.
    pub engine: Option<EngineKind>,
    pub trotter_p: usize,
    pub bx_floor: f64,
    pub thresholds: Vec<f64>,
    /// Threshold used for the erasure action; 0.5 for the bit protocols and
    /// the largest threshold for the cooperative ones when absent.
    pub headline_threshold: Option<f64>,
    pub readout: ReadoutMode,
    pub bootstrap_resamples: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub prerun: PrerunConfig,
    pub jc_scan: JcScanConfig,
    pub stability: StabilityConfig,
    pub oracle: OracleSuiteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            lattice: LatticeConfig::default(),
            schedule: ScheduleConfig::default(),
            bath: BathParameters::default(),
            replicas: 2000,
            engine: None,
            trotter_p: DEFAULT_TROTTER,
            bx_floor: DEFAULT_BX_FLOOR,
            thresholds: vec![0.5, 0.98, 0.99, 0.998],
            headline_threshold: None,
            readout: ReadoutMode::Trajectory,
            bootstrap_resamples: 200,
            output_dir: PathBuf::from("out"),
            master_seed: 0,
            prerun: PrerunConfig::default(),
            jc_scan: JcScanConfig::default(),
            stability: StabilityConfig::default(),
            oracle: OracleSuiteConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn engine(&self) -> EngineKind {
        self.engine.unwrap_or_else(|| self.protocol().default_engine())
    }

    /// The erasure protocol this run executes (the source protocol for a
    /// stability hold).
    pub fn protocol(&self) -> ExperimentKind {
        match self.experiment {
            ExperimentKind::StabilityHold => self.stability.source,
            k => k,
        }
    }

    pub fn headline_threshold(&self) -> f64 {
        self.headline_threshold.unwrap_or_else(|| {
            if self.protocol().is_cooperative() {
                self.thresholds.iter().cloned().fold(f64::NAN, f64::max)
            } else {
                0.5
            }
        })
    }

    pub fn field_path(&self) -> Result<FieldPath> {
        let s = &self.schedule;
        if let Some(inline) = &s.inline {
            return inline.compile(s.params.dt);
        }
        match s.preset.unwrap_or_else(|| self.protocol().default_preset()) {
            PresetName::Classical => s.params.classical(s.duration_us),
            PresetName::Quantum => s.params.quantum(s.duration_us),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::Config("replicas must be ≥ 1".into()));
        }
        self.bath.validate()?;
        self.lattice.geometry()?;
        if self.thresholds.is_empty() || self.thresholds.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::Config("thresholds must be a non-empty list in (0, 1)".into()));
        }
        let h = self.headline_threshold();
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Config(format!("headline threshold {h} outside (0, 1)")));
        }
        match self.experiment {
            ExperimentKind::JcScan => {
                self.jc_scan.grid()?;
                if self.engine() != EngineKind::Glauber {
                    return Err(Error::Config("jc_scan runs on the glauber engine".into()));
                }
            }
            ExperimentKind::OracleSuite => {
                let o = &self.oracle;
                if o.paths == 0 || o.max_sites == 0 || o.max_sites > MAX_EVOLVE_SITES || o.samples < 2 {
                    return Err(Error::Config(format!(
                        "oracle suite needs paths ≥ 1, 1 ≤ max_sites ≤ {MAX_EVOLVE_SITES}, samples ≥ 2"
                    )));
                }
            }
            ExperimentKind::StabilityHold => {
                if !self.stability.source.is_protocol() {
                    return Err(Error::Config("stability source must be an erasure protocol".into()));
                }
                if !(self.stability.hold_us > 0.0 && self.stability.sample_every_us > 0.0) {
                    return Err(Error::Config("hold and sample spacing must be positive".into()));
                }
            }
            _ => {}
        }
        if self.protocol().is_protocol() {
            if self.bootstrap_resamples < 2 {
                return Err(Error::Config("bootstrap_resamples must be ≥ 2".into()));
            }
            if self.replicas < 2 {
                return Err(Error::Config("erasure protocols need at least 2 replicas".into()));
            }
            if !self.protocol().is_cooperative() && !self.replicas.is_multiple_of(2) {
                return Err(Error::Config(
                    "bit protocols pair each configuration with its mirror: replicas must be even".into(),
                ));
            }
            if self.engine() == EngineKind::Sqa && self.trotter_p < 2 {
                return Err(Error::Config("trotter_p must be ≥ 2".into()));
            }
            self.field_path()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c.replicas, 2000);
        assert_eq!((c.lattice.rows, c.lattice.cols), (16, 16));
        assert_eq!(c.thresholds, vec![0.5, 0.98, 0.99, 0.998]);
        let path = c.field_path().unwrap();
        assert_eq!(path.len(), 41);
        assert_eq!(path.duration(), 40.0);
        c.validate().unwrap();
    }

    #[test]
    fn engine_and_preset_follow_experiment() {
        let q = ExperimentConfig::for_experiment(ExperimentKind::QuantumCooperative);
        assert_eq!(q.engine(), EngineKind::Sqa);
        assert!(q.field_path().unwrap().max_bx() > 0.1);
        let c = ExperimentConfig::for_experiment(ExperimentKind::ClassicalCooperative);
        assert_eq!(c.engine(), EngineKind::Glauber);
        assert!(c.field_path().unwrap().max_bx() <= 0.02);
        assert_eq!(q.headline_threshold(), 0.998);
        let b = ExperimentConfig::for_experiment(ExperimentKind::QuantumBit);
        assert_eq!(b.headline_threshold(), 0.5);
    }

    #[test]
    fn toml_round_trip() {
        let src = r#"
            experiment = "quantum_bit"
            replicas = 10
            master_seed = 7
            engine = "glauber"
            [lattice]
            rows = 4
            cols = 5
            boundary = "periodic"
            [schedule.params]
            bx_peak = 0.8
            [bath]
            temperature_mk = 20.0
        "#;
        let c = ExperimentConfig::from_toml_str(src).unwrap();
        assert_eq!(c.experiment, ExperimentKind::QuantumBit);
        assert_eq!(c.lattice.boundary, Boundary::Periodic);
        assert_eq!(c.schedule.params.bx_peak, 0.8);
        assert_eq!(c.schedule.params.j_high, 0.70);
        assert_eq!(c.bath.temperature_mk, 20.0);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig {
            replicas: 0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.replicas = 3;
        assert!(c.validate().is_err(), "odd replica count for a bit protocol");
        c.experiment = ExperimentKind::ClassicalCooperative;
        c.validate().unwrap();
        c.thresholds = vec![1.0];
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"nope\"").is_err());
        assert!("jc-scan".parse::<ExperimentKind>().is_ok());
    }
}
