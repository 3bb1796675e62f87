//! Run directories: content-hashed outputs, the manifest, verification and
//! run-to-run comparison.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ReadoutMode};
use crate::error::{Error, Result};
use crate::estimators::{total_variation, tv_noise_sigma, MagnetizationHistogram};
use crate::runner::{load_protocol_report, stream, stream_seed};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENGINE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub config: ExperimentConfig,
    pub readout: ReadoutMode,
    /// Master seed of each derived stream, by name.
    pub seed_streams: BTreeMap<String, u64>,
    pub replica_seeds: Vec<u64>,
    /// Main-ensemble seeds of the source protocol of a stability hold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_replica_seeds: Vec<u64>,
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub threads: usize,
    pub complete: bool,
    pub error: Option<String>,
    /// sha256 of every emitted file except the manifest itself.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?)
    }
}

/// Load a configuration from a TOML file, or from a run manifest when the
/// file is JSON.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let m: RunManifest = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok(m.config)
    } else {
        ExperimentConfig::load(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into a fresh run directory and records their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    started: Instant,
    pub manifest: RunManifest,
}

impl ArtifactWriter {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        if dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
            return Err(Error::Config(format!(
                "output directory {} is not empty",
                dir.display()
            )));
        }
        std::fs::create_dir_all(dir)?;
        let m = config.master_seed;
        let seed_streams = [
            ("main", stream::MAIN),
            ("prerun", stream::PRERUN),
            ("init", stream::INIT),
            ("bootstrap", stream::BOOTSTRAP),
            ("resample", stream::RESAMPLE),
            ("hold", stream::HOLD),
            ("scan", stream::SCAN),
            ("oracle", stream::ORACLE),
        ]
        .into_iter()
        .map(|(name, s)| (name.to_string(), stream_seed(m, s)))
        .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            manifest: RunManifest {
                engine_version: ENGINE_VERSION.to_string(),
                config: config.clone(),
                readout: config.readout,
                seed_streams,
                replica_seeds: Vec::new(),
                source_replica_seeds: Vec::new(),
                started_unix_s: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
                elapsed_s: 0.0,
                threads: rayon::current_num_threads(),
                complete: false,
                error: None,
                files: BTreeMap::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.manifest.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(mut self, error: Option<String>) -> Result<RunManifest> {
        self.manifest.complete = error.is_none();
        self.manifest.error = error;
        self.manifest.elapsed_s = self.started.elapsed().as_secs_f64();
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join(MANIFEST_FILE), bytes)?;
        Ok(self.manifest)
    }
}

/// Re-hash every file listed in the manifest. Returns the number checked.
pub fn verify(dir: &Path) -> Result<usize> {
    let manifest = RunManifest::load(dir)?;
    if !manifest.complete {
        return Err(Error::Verification {
            path: dir.join(MANIFEST_FILE),
            reason: format!(
                "run is marked incomplete: {}",
                manifest.error.as_deref().unwrap_or("no error recorded")
            ),
        });
    }
    for (name, expected) in &manifest.files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::Verification {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let got = sha256_hex(&bytes);
        if &got != expected {
            return Err(Error::Verification {
                path,
                reason: format!("hash {got} does not match manifest {expected}"),
            });
        }
    }
    Ok(manifest.files.len())
}

/// Read a `t_us,m_z,probability` file back into histograms of `total`
/// samples on `n_sites` spins.
pub fn read_histograms_csv(text: &str, n_sites: usize, total: u64) -> Result<Vec<MagnetizationHistogram>> {
    let mut out: Vec<MagnetizationHistogram> = Vec::new();
    let mut lines = text.lines();
    if lines.next() != Some("t_us,m_z,probability") {
        return Err(Error::Parse("histogram file lacks the t_us,m_z,probability header".into()));
    }
    for (k, line) in lines.enumerate() {
        let bad = || Error::Parse(format!("histogram line {}: '{line}'", k + 2));
        let mut it = line.split(',');
        let mut next = || -> Result<f64> { it.next().ok_or_else(bad)?.parse::<f64>().map_err(|_| bad()) };
        let (t, m, p) = (next()?, next()?, next()?);
        if out.last().is_none_or(|h| h.t != t) {
            out.push(MagnetizationHistogram {
                t,
                n_sites,
                counts: BTreeMap::new(),
                total,
            });
        }
        let h = out.last_mut().unwrap();
        let sum = (m * n_sites as f64).round() as i64;
        h.counts.insert(sum, (p * total as f64).round() as u64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompareMetric {
    #[default]
    All,
    TotalVariation,
    Switching,
    Ledger,
}

impl std::str::FromStr for CompareMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "all" => Ok(CompareMetric::All),
            "total_variation" | "tv" => Ok(CompareMetric::TotalVariation),
            "switching" => Ok(CompareMetric::Switching),
            "ledger" => Ok(CompareMetric::Ledger),
            _ => Err(Error::Config(format!("unknown metric '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvPoint {
    pub t_us: f64,
    pub tv: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingDelta {
    pub delta: f64,
    pub a_us: Option<f64>,
    pub b_us: Option<f64>,
    /// b / a.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerDelta {
    /// W_exp of run b minus run a, erg.
    pub w_exp_difference: f64,
    pub combined_stderr: f64,
    pub delta_w_a: f64,
    pub delta_w_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: PathBuf,
    pub run_b: PathBuf,
    pub total_variation: Option<Vec<TvPoint>>,
    pub max_tv: Option<f64>,
    pub switching: Option<Vec<SwitchingDelta>>,
    pub ledger: Option<LedgerDelta>,
}

/// Compare two protocol runs (or the source runs of stability holds).
pub fn compare_runs(a: &Path, b: &Path, metric: CompareMetric) -> Result<ComparisonReport> {
    let ra = load_protocol_report(a)?;
    let rb = load_protocol_report(b)?;
    if ra.n_sites != rb.n_sites {
        return Err(Error::Incompatible(format!(
            "lattices of {} and {} sites",
            ra.n_sites, rb.n_sites
        )));
    }
    let want = |m: CompareMetric| metric == CompareMetric::All || metric == m;

    let total_variation_series = if want(CompareMetric::TotalVariation) {
        let ha = read_histograms_csv(&std::fs::read_to_string(a.join("histograms.csv"))?, ra.n_sites, ra.replicas as u64)?;
        let hb = read_histograms_csv(&std::fs::read_to_string(b.join("histograms.csv"))?, rb.n_sites, rb.replicas as u64)?;
        if ha.len() != hb.len() || ha.iter().zip(&hb).any(|(x, y)| x.t != y.t) {
            return Err(Error::Incompatible("sample-time grids differ".into()));
        }
        Some(
            ha.iter()
                .zip(&hb)
                .map(|(x, y)| {
                    Ok(TvPoint {
                        t_us: x.t,
                        tv: total_variation(x, y)?,
                        noise_sigma: tv_noise_sigma(x, y),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let max_tv = total_variation_series
        .as_ref()
        .map(|s| s.iter().map(|p| p.tv).fold(0.0, f64::max));

    let switching = want(CompareMetric::Switching).then(|| {
        ra.switching
            .iter()
            .filter_map(|sa| {
                let sb = rb.switching.iter().find(|s| s.delta == sa.delta)?;
                Some(SwitchingDelta {
                    delta: sa.delta,
                    a_us: sa.time_us,
                    b_us: sb.time_us,
                    ratio: match (sa.time_us, sb.time_us) {
                        (Some(x), Some(y)) if x > 0.0 => Some(y / x),
                        _ => None,
                    },
                })
            })
            .collect()
    });

    let ledger = want(CompareMetric::Ledger).then(|| LedgerDelta {
        w_exp_difference: rb.ledger.w_exp - ra.ledger.w_exp,
        combined_stderr: (ra.ledger.stderr_w_exp.powi(2) + rb.ledger.stderr_w_exp.powi(2)).sqrt(),
        delta_w_a: ra.ledger.delta_w,
        delta_w_b: rb.ledger.delta_w,
    });

    Ok(ComparisonReport {
        run_a: a.to_path_buf(),
        run_b: b.to_path_buf(),
        total_variation: total_variation_series,
        max_tv,
        switching,
        ledger,
    })
}
