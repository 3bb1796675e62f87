//! Experiment orchestration: initial ensembles, engine dispatch, estimator
//! reductions, the work ledger, and the per-run artifact directory.
//!
//! Seeds are derived from the master seed through fixed stream tags, so the
//! configuration alone determines every emitted byte:
//!
//! | stream | use |
//! |---|---|
//! | `MAIN` | replica `i` of the main ensemble |
//! | `PRERUN` | replica `i` of the steady-state pre-run |
//! | `INIT` | flat initial configuration of replica `i` |
//! | `BOOTSTRAP` | force-series bootstrap |
//! | `RESAMPLE` | sample time `k`, then replica `i`, in resample readout |
//! | `HOLD` | replica `i` of the stability hold |
//! | `SCAN` | grid point `k` of the critical-point scan |
//! | `ORACLE` | randomized oracle cycles |

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::{ArtifactWriter, RunManifest};
use crate::config::{EngineKind, ExperimentConfig, ExperimentKind, ReadoutMode};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_critical_point, force_series, histogram_series, mean_mz_series, success_rate,
    switching_subensemble, switching_time, temperature_from_jc, total_variation, tv_noise_sigma,
    write_histograms_csv, write_scan_csv, BootstrapOptions, CriticalPointEstimate, ForceSeries,
    MagnetizationHistogram, ScanPoint, SwitchConvention,
};
use crate::glauber::{sample_equilibrium_ramp, GlauberEngine, ReplicaTrajectory};
use crate::lattice::{magnetization_density, LatticeGeometry, SpinConfiguration};
use crate::oracle::{
    bloch_components, build_hamiltonian, free_energy, lindblad_evolve, thermal_state,
    LindbladOptions,
};
use crate::schedule::{DeviceCurves, FieldPath, FieldSample};
use crate::seeding::{derive_seed, replica_seeds, rng_from_seed, splitmix64};
use crate::sqa::SqaEngine;
use crate::thermo::{
    erasure_action, landauer_reference, path_work, quench_correction, total_work,
    transverse_work_bound, ErasureReport, LandauerReference, WorkLedger, WorkMode,
};

pub mod stream {
    pub const MAIN: u64 = 1;
    pub const PRERUN: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const RESAMPLE: u64 = 5;
    pub const HOLD: u64 = 6;
    pub const SCAN: u64 = 7;
    pub const ORACLE: u64 = 8;
}

/// Master seed of one derived stream.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(0xA24B_AED4_963E_E407)))
}

/// The configured dynamics, dispatched by engine kind.
pub enum Engine<'g> {
    Glauber(GlauberEngine<'g>),
    Sqa(SqaEngine<'g>),
}

impl<'g> Engine<'g> {
    pub fn from_config(config: &ExperimentConfig, geometry: &'g LatticeGeometry) -> Result<Self> {
        Ok(match config.engine() {
            EngineKind::Glauber => Engine::Glauber(GlauberEngine::new(geometry)),
            EngineKind::Sqa => Engine::Sqa(SqaEngine::new(geometry, config.trotter_p, config.bx_floor)?),
        })
    }

    pub fn run_ensemble(
        &self,
        initials: &[SpinConfiguration],
        path: &FieldPath,
        bath: &crate::glauber::BathParameters,
        seeds: &[u64],
    ) -> Result<Vec<ReplicaTrajectory>> {
        match self {
            Engine::Glauber(e) => e.run_ensemble(initials, path, bath, seeds),
            Engine::Sqa(e) => e.run_ensemble(initials, path, bath, seeds),
        }
    }
}

/// Initial configurations for one of the erasure protocols.
///
/// Bit protocols interleave a source with its global flip: replica `2i + 1`
/// is source `i` and replica `2i` its mirror. The classical bit takes its
/// sources from `steady_state_source` (the relaxed logical-1 ensemble); the
/// quantum bit uses all-up. Cooperative protocols draw each spin
/// independently, replica `i` from seed `derive_seed(init_seed, i)`.
pub fn prepare_initial_ensemble(
    experiment: ExperimentKind,
    replicas: usize,
    n_sites: usize,
    steady_state_source: Option<&[SpinConfiguration]>,
    init_seed: u64,
) -> Result<Vec<SpinConfiguration>> {
    let paired = |sources: &[SpinConfiguration]| -> Result<Vec<SpinConfiguration>> {
        if !replicas.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "even combination needs an even replica count, got {replicas}"
            )));
        }
        if sources.len() < replicas / 2 {
            return Err(Error::MissingInput(format!(
                "steady-state source has {} configurations, {} needed",
                sources.len(),
                replicas / 2
            )));
        }
        let mut out = Vec::with_capacity(replicas);
        for s in &sources[..replicas / 2] {
            if s.len() != n_sites {
                return Err(Error::InvalidConfiguration(format!(
                    "source configuration has {} spins, lattice has {n_sites}",
                    s.len()
                )));
            }
            out.push(s.inverted());
            out.push(s.clone());
        }
        Ok(out)
    };
    match experiment {
        ExperimentKind::ClassicalBit => {
            let src = steady_state_source.ok_or_else(|| {
                Error::MissingInput("classical bit needs a steady-state source run".into())
            })?;
            paired(src)
        }
        ExperimentKind::QuantumBit => paired(&vec![SpinConfiguration::all_up(n_sites); replicas / 2]),
        ExperimentKind::ClassicalCooperative | ExperimentKind::QuantumCooperative => Ok((0..replicas)
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(init_seed, i as u64));
                SpinConfiguration::random(n_sites, &mut rng)
            })
            .collect()),
        other => Err(Error::InvalidParameter(format!("{other} is not an erasure protocol"))),
    }
}

/// Convergence of the relaxation pre-run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrerunReport {
    pub replicas: usize,
    /// TV distance between the last two sample-time histograms.
    pub tv_last: f64,
    pub noise_sigma: f64,
    /// max(tolerance_tv, noise_sigmas·σ).
    pub threshold: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRecord {
    pub delta: f64,
    /// Replicas averaged (the switching subensemble for bit protocols).
    pub members: usize,
    /// Start of the interval for the onset convention, μs.
    pub onset_us: Option<f64>,
    /// `None` when the mean never reaches +Δ.
    pub time_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRecord {
    pub delta: f64,
    pub qubit_fraction: f64,
    pub replica_fraction: f64,
}

/// Summary of one erasure protocol run. Times in μs, energies in erg,
/// actions in erg·s per bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub experiment: ExperimentKind,
    pub engine: EngineKind,
    pub readout: ReadoutMode,
    pub replicas: usize,
    pub n_sites: usize,
    pub temperature_mk: f64,
    pub prerun: Option<PrerunReport>,
    pub initial_mean_mz: f64,
    pub final_mean_mz: f64,
    pub final_mean_mz_stderr: f64,
    /// TV distance between the t = 0 histogram and its mirror image.
    pub initial_asymmetry_tv: f64,
    pub switching: Vec<SwitchingRecord>,
    pub success: Vec<SuccessRecord>,
    pub ledger: WorkLedger,
    pub bits: u64,
    pub landauer: LandauerReference,
    pub headline_threshold: f64,
    /// Absent when the headline threshold is not reached.
    pub erasure: Option<ErasureReport>,
    pub units: Units,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub time: String,
    pub field: String,
    pub energy: String,
    pub action: String,
    pub temperature: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            time: "us".into(),
            field: "GHz".into(),
            energy: "erg".into(),
            action: "erg s per bit".into(),
            temperature: "mK".into(),
        }
    }
}

/// In-memory result of an erasure protocol.
pub struct ProtocolOutcome {
    pub path: FieldPath,
    pub ensemble: Vec<ReplicaTrajectory>,
    pub histograms: Vec<MagnetizationHistogram>,
    pub forces: ForceSeries,
    pub report: ProtocolReport,
    pub replica_seeds: Vec<u64>,
}

fn histogram_mean_stderr(h: &MagnetizationHistogram) -> f64 {
    let n = h.total as f64;
    if h.total < 2 {
        return 0.0;
    }
    let mean = h.mean_mz();
    let var = h
        .counts
        .iter()
        .map(|(&s, &c)| c as f64 * (s as f64 / h.n_sites as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (var / n).sqrt()
}

fn run_resampled(
    engine: &Engine,
    initials: &[SpinConfiguration],
    path: &FieldPath,
    config: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<ReplicaTrajectory>> {
    let times = path.times();
    let mut snapshots: Vec<Vec<SpinConfiguration>> = initials.iter().map(|c| vec![c.clone()]).collect();
    let base = stream_seed(config.master_seed, stream::RESAMPLE);
    for k in 1..times.len() {
        let prefix = FieldPath::new(times[..=k].to_vec(), path.fields()[..=k].to_vec())?;
        let k_seeds = replica_seeds(derive_seed(base, k as u64), initials.len());
        let runs = engine
            .run_ensemble(initials, &prefix, &config.bath, &k_seeds)
            .map_err(|e| match e {
                Error::Replica { replica, source, .. } => Error::Replica {
                    replica,
                    t: times[k],
                    source,
                },
                e => e,
            })?;
        for (s, r) in snapshots.iter_mut().zip(runs) {
            s.push(r.last().clone());
        }
    }
    Ok(snapshots
        .into_iter()
        .zip(seeds)
        .map(|(snapshots, &seed)| ReplicaTrajectory {
            seed,
            times: times.to_vec(),
            snapshots,
        })
        .collect())
}

/// Relaxation pre-run for the classical bit: the protocol itself, started
/// all-down, harvested at the final time.
fn prerun(
    engine: &Engine,
    geometry: &LatticeGeometry,
    path: &FieldPath,
    config: &ExperimentConfig,
) -> Result<(Vec<SpinConfiguration>, PrerunReport)> {
    let n = config.replicas / 2;
    let initials = vec![SpinConfiguration::all_down(geometry.n_sites()); n];
    let seeds = replica_seeds(stream_seed(config.master_seed, stream::PRERUN), n);
    let runs = engine.run_ensemble(&initials, path, &config.bath, &seeds)?;
    let hist = histogram_series(&runs)?;
    let (a, b) = (&hist[hist.len() - 2], &hist[hist.len() - 1]);
    let tv_last = total_variation(a, b)?;
    let noise_sigma = tv_noise_sigma(a, b);
    let threshold = config.prerun.tolerance_tv.max(config.prerun.noise_sigmas * noise_sigma);
    let report = PrerunReport {
        replicas: n,
        tv_last,
        noise_sigma,
        threshold,
        converged: tv_last < threshold,
    };
    Ok((runs.iter().map(|r| r.last().clone()).collect(), report))
}

/// Run one of the four erasure protocols in memory.
pub fn run_protocol(config: &ExperimentConfig) -> Result<ProtocolOutcome> {
    let kind = config.protocol();
    if !kind.is_protocol() {
        return Err(Error::Config(format!("{kind} is not an erasure protocol")));
    }
    let geometry = config.lattice.geometry()?;
    let n_sites = geometry.n_sites();
    let path = config.field_path()?;
    let engine = Engine::from_config(config, &geometry)?;

    let (source, prerun_report) = if kind == ExperimentKind::ClassicalBit {
        let (s, r) = prerun(&engine, &geometry, &path, config)?;
        (Some(s), Some(r))
    } else {
        (None, None)
    };
    let initials = prepare_initial_ensemble(
        kind,
        config.replicas,
        n_sites,
        source.as_deref(),
        stream_seed(config.master_seed, stream::INIT),
    )?;
    let seeds = replica_seeds(stream_seed(config.master_seed, stream::MAIN), config.replicas);
    let ensemble = match config.readout {
        ReadoutMode::Trajectory => engine.run_ensemble(&initials, &path, &config.bath, &seeds)?,
        ReadoutMode::Resample => run_resampled(&engine, &initials, &path, config, &seeds)?,
    };

    let histograms = histogram_series(&ensemble)?;
    let bootstrap = BootstrapOptions {
        resamples: config.bootstrap_resamples,
        seed: stream_seed(config.master_seed, stream::BOOTSTRAP),
    };
    let forces = force_series(&ensemble, &geometry, &bootstrap)?;

    let onset = if kind.is_cooperative() {
        Some(path.bx_pulse_onset().unwrap_or(0.0))
    } else {
        None
    };
    let everyone: Vec<usize> = (0..ensemble.len()).collect();
    let switching = config
        .thresholds
        .iter()
        .map(|&delta| -> Result<SwitchingRecord> {
            let (members, convention) = match onset {
                Some(t_on) => (everyone.clone(), SwitchConvention::FromOnset(t_on)),
                None => (switching_subensemble(&ensemble, delta), SwitchConvention::Crossing),
            };
            let time_us = if members.is_empty() {
                None
            } else {
                switching_time(&mean_mz_series(&ensemble, &members)?, delta, convention)?.value()
            };
            Ok(SwitchingRecord {
                delta,
                members: members.len(),
                onset_us: onset,
                time_us,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let first = &histograms[0];
    let last = &histograms[histograms.len() - 1];
    let success = config
        .thresholds
        .iter()
        .map(|&delta| {
            success_rate(last, delta).map(|s| SuccessRecord {
                delta,
                qubit_fraction: s.qubit_fraction,
                replica_fraction: s.replica_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let work = path_work(&path, &forces)?;
    let delta_w = transverse_work_bound(&path, &forces)?;
    let (mode, u_f, bits) = if kind.is_cooperative() {
        let finals: Vec<SpinConfiguration> = ensemble.iter().map(|r| r.last().clone()).collect();
        let u = quench_correction(&finals, path.last(), &geometry)?;
        (WorkMode::Cooperative, Some(u), n_sites as u64)
    } else {
        (WorkMode::Cycle, None, 1)
    };
    let ledger = total_work(&work, delta_w, u_f, mode)?;
    let landauer = landauer_reference(config.bath.temperature_mk, bits)?;

    let headline = config.headline_threshold();
    let headline_time = if let Some(r) = switching.iter().find(|r| r.delta == headline) {
        r.time_us
    } else {
        let members = match onset {
            Some(_) => everyone.clone(),
            None => switching_subensemble(&ensemble, headline),
        };
        let convention = onset.map_or(SwitchConvention::Crossing, SwitchConvention::FromOnset);
        if members.is_empty() {
            None
        } else {
            switching_time(&mean_mz_series(&ensemble, &members)?, headline, convention)?.value()
        }
    };
    let erasure = match headline_time {
        Some(t) => Some(erasure_action(
            ledger.w_exp / bits as f64,
            t,
            success_rate(last, headline)?.qubit_fraction,
        )?),
        None => None,
    };

    let report = ProtocolReport {
        experiment: kind,
        engine: config.engine(),
        readout: config.readout,
        replicas: config.replicas,
        n_sites,
        temperature_mk: config.bath.temperature_mk,
        prerun: prerun_report,
        initial_mean_mz: first.mean_mz(),
        final_mean_mz: last.mean_mz(),
        final_mean_mz_stderr: histogram_mean_stderr(last),
        initial_asymmetry_tv: total_variation(first, &first.mirrored())?,
        switching,
        success,
        ledger,
        bits,
        landauer,
        headline_threshold: headline,
        erasure,
        units: Units::default(),
    };
    Ok(ProtocolOutcome {
        path,
        ensemble,
        histograms,
        forces,
        report,
        replica_seeds: seeds,
    })
}

/// Result of holding a finished ensemble under its endpoint Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub source: ProtocolReport,
    pub hold_us: f64,
    pub endpoint: FieldSample,
    pub initial_mean_mz: f64,
    pub final_mean_mz: f64,
    /// TV distance between the first and last hold histograms.
    pub tv: f64,
    pub noise_sigma: f64,
    pub tolerance_sigmas: f64,
    pub stable: bool,
    pub units: Units,
}

pub struct StabilityOutcome {
    pub source: ProtocolOutcome,
    pub hold: Vec<ReplicaTrajectory>,
    pub histograms: Vec<MagnetizationHistogram>,
    pub report: StabilityReport,
    pub replica_seeds: Vec<u64>,
}

/// Run the source protocol, then hold its final ensemble.
pub fn run_stability(config: &ExperimentConfig) -> Result<StabilityOutcome> {
    let source = run_protocol(config)?;
    let geometry = config.lattice.geometry()?;
    let engine = Engine::from_config(config, &geometry)?;
    let endpoint = *source.path.last();
    let s = &config.stability;
    let hold_path = FieldPath::constant(endpoint, s.hold_us, s.sample_every_us)?;
    let finals: Vec<SpinConfiguration> = source.ensemble.iter().map(|r| r.last().clone()).collect();
    let seeds = replica_seeds(stream_seed(config.master_seed, stream::HOLD), finals.len());
    let hold = engine.run_ensemble(&finals, &hold_path, &config.bath, &seeds)?;
    let histograms = histogram_series(&hold)?;
    let (a, b) = (&histograms[0], &histograms[histograms.len() - 1]);
    let tv = total_variation(a, b)?;
    let noise_sigma = tv_noise_sigma(a, b);
    let report = StabilityReport {
        source: source.report.clone(),
        hold_us: s.hold_us,
        endpoint,
        initial_mean_mz: a.mean_mz(),
        final_mean_mz: b.mean_mz(),
        tv,
        noise_sigma,
        tolerance_sigmas: s.tolerance_sigmas,
        stable: tv < s.tolerance_sigmas * noise_sigma,
        units: Units::default(),
    };
    Ok(StabilityOutcome {
        source,
        hold,
        histograms,
        report,
        replica_seeds: seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub temperature_mk: f64,
    pub tau_us: f64,
    pub samples: usize,
    pub curve: Vec<ScanPoint>,
    pub estimate: Option<CriticalPointEstimate>,
    /// Why no estimate was produced.
    pub estimate_error: Option<String>,
    pub inferred_temperature_mk: Option<f64>,
    pub inferred_temperature_uncertainty_mk: Option<f64>,
    /// Largest |Δ⟨|m_z|⟩| / σ between τ and 2τ, when checked.
    pub slowness_max_sigma: Option<f64>,
    pub units: Units,
}

fn scan_curve(
    config: &ExperimentConfig,
    geometry: &LatticeGeometry,
    curves: &DeviceCurves,
    tau: f64,
) -> Result<Vec<ScanPoint>> {
    let scan = &config.jc_scan;
    let samples = scan.samples.unwrap_or(config.replicas);
    let b_end = curves.at(1.0).1;
    let base = stream_seed(config.master_seed, stream::SCAN);
    scan.grid()?
        .into_iter()
        .enumerate()
        .map(|(k, j)| {
            let bath = config.bath.with_seed(derive_seed(base, k as u64));
            let finals = sample_equilibrium_ramp(geometry, curves, 2.0 * j / b_end, tau, &bath, samples)?;
            let abs: Vec<f64> = finals.iter().map(|c| magnetization_density(c).abs()).collect();
            ScanPoint::from_samples(j, &abs)
        })
        .collect()
}

/// Critical-point scan: |m_z| after slow forward ramps over a grid of
/// final couplings, then 𝒥_C and the inferred temperature.
pub fn run_jc_scan(config: &ExperimentConfig) -> Result<ScanReport> {
    let geometry = config.lattice.geometry()?;
    let scan = &config.jc_scan;
    let curves = match &scan.curves {
        Some(p) => DeviceCurves::from_csv(std::fs::File::open(p)?)?,
        None => DeviceCurves::synthetic(),
    };
    let curve = scan_curve(config, &geometry, &curves, scan.tau_us)?;
    let slowness_max_sigma = if scan.check_slowness {
        let slow = scan_curve(config, &geometry, &curves, 2.0 * scan.tau_us)?;
        Some(
            curve
                .iter()
                .zip(&slow)
                .map(|(a, b)| {
                    (a.mean_abs_mz - b.mean_abs_mz).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt().max(1e-300)
                })
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    let (estimate, estimate_error) = match estimate_critical_point(&curve) {
        Ok(e) => (Some(e), None),
        Err(e @ Error::NoEstimate(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let inferred = estimate
        .as_ref()
        .map(|e| temperature_from_jc(e.j_c, e.j_c_uncertainty))
        .transpose()?;
    Ok(ScanReport {
        temperature_mk: config.bath.temperature_mk,
        tau_us: scan.tau_us,
        samples: scan.samples.unwrap_or(config.replicas),
        curve,
        estimate,
        estimate_error,
        inferred_temperature_mk: inferred.map(|t| t.0),
        inferred_temperature_uncertainty_mk: inferred.map(|t| t.1),
        slowness_max_sigma,
        units: Units::default(),
    })
}

/// One randomized driven cycle checked against the exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub sites: usize,
    pub gamma: f64,
    pub duration_us: f64,
    /// Exact transverse work, erg.
    pub w_x: f64,
    /// Bloch-vector bound on |W_x|, erg.
    pub delta_w: f64,
    pub bound_holds: bool,
    /// Total work, erg.
    pub work: f64,
    pub delta_f: f64,
    pub second_law_holds: bool,
    /// max |ΔU − W − Q| relative to the largest of |ΔU|, |W|, |Q|.
    pub first_law_relative: f64,
    pub first_law_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSuiteReport {
    pub temperature_mk: f64,
    pub cases: Vec<OracleCase>,
    pub all_pass: bool,
    pub units: Units,
}

/// Relative first-law tolerance.
pub const FIRST_LAW_TOLERANCE: f64 = 1e-6;

/// A random closed cycle on `duration`: unimodal B_x returning to its
/// start value, B_z and 𝒥 through two random waypoints.
pub fn random_cycle<R: Rng>(rng: &mut R, duration: f64, samples: usize) -> Result<FieldPath> {
    let bx0 = rng.random_range(0.0..0.2);
    let peak = bx0 + rng.random_range(0.1..1.0);
    let t_peak = duration * rng.random_range(0.2..0.8);
    let bz: [f64; 3] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
    let j: [f64; 3] = [rng.random_range(-0.3..0.6), rng.random_range(-0.3..0.6), rng.random_range(-0.3..0.6)];
    let times: Vec<f64> = (0..samples).map(|k| duration * k as f64 / (samples - 1) as f64).collect();
    let wave = |v: &[f64; 3], t: f64| -> f64 {
        let pts = [(0.0, v[0]), (duration / 3.0, v[1]), (2.0 * duration / 3.0, v[2]), (duration, v[0])];
        let k = pts.iter().rposition(|p| p.0 <= t).unwrap().min(2);
        let (a, b) = (pts[k], pts[k + 1]);
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    };
    let fields = times
        .iter()
        .map(|&t| {
            let bx = if t <= t_peak {
                bx0 + (peak - bx0) * t / t_peak
            } else {
                peak + (bx0 - peak) * (t - t_peak) / (duration - t_peak)
            };
            FieldSample::new(bx, wave(&bz, t), wave(&j, t))
        })
        .collect();
    FieldPath::new(times, fields)
}

/// Check one cycle from the thermal state: the transverse-work bound, the
/// first law and W ≥ ΔF.
pub fn oracle_case(
    geometry: &LatticeGeometry,
    path: &FieldPath,
    kt: f64,
    options: &LindbladOptions,
) -> Result<OracleCase> {
    let h0 = build_hamiltonian(path.first(), geometry)?;
    let h1 = build_hamiltonian(path.last(), geometry)?;
    let rho0 = thermal_state(&h0, kt)?;
    let run = lindblad_evolve(&rho0, geometry, path, kt, options)?;
    let n = path.len();
    let mstar: Vec<f64> = run
        .bloch
        .iter()
        .map(|b| b.iter().map(|v| (1.0 - v[2] * v[2]).max(0.0).sqrt()).sum())
        .collect();
    let mz: Vec<f64> = run.bloch.iter().map(|b| b.iter().map(|v| v[2]).sum()).collect();
    // only M_* enters the bound
    let forces = ForceSeries {
        times: path.times().to_vec(),
        mz,
        k: vec![0.0; n],
        mstar,
        stderr_mz: vec![0.0; n],
        stderr_k: vec![0.0; n],
        stderr_mstar: vec![0.0; n],
    };
    debug_assert_eq!(bloch_components(&run.state).len(), geometry.n_sites());
    let delta_w = transverse_work_bound(path, &forces)?;
    let w_x = run.work_parts[n - 1].x;
    let rec = &run.record;
    let du = rec.internal_energy[n - 1] - rec.internal_energy[0];
    let work = rec.work[n - 1];
    let scale = du.abs().max(work.abs()).max(rec.heat[n - 1].abs()).max(f64::MIN_POSITIVE);
    let first_law_relative = rec.first_law_residual() / scale;
    let delta_f = free_energy(&h1, kt)? - free_energy(&h0, kt)?;
    Ok(OracleCase {
        sites: geometry.n_sites(),
        gamma: options.gamma,
        duration_us: path.duration(),
        w_x,
        delta_w,
        bound_holds: w_x.abs() <= delta_w,
        work,
        delta_f,
        second_law_holds: work >= delta_f - 1e-6 * work.abs(),
        first_law_relative,
        first_law_holds: first_law_relative < FIRST_LAW_TOLERANCE,
    })
}

pub fn run_oracle_suite(config: &ExperimentConfig) -> Result<OracleSuiteReport> {
    let o = &config.oracle;
    let kt = config.bath.kt();
    let base = stream_seed(config.master_seed, stream::ORACLE);
    let cases = (0..o.paths)
        .map(|k| -> Result<OracleCase> {
            let mut rng = rng_from_seed(derive_seed(base, k as u64));
            let sites = rng.random_range(1..=o.max_sites);
            let geometry = LatticeGeometry::new(1, sites, crate::lattice::Boundary::Open)?;
            let duration = rng.random_range(o.duration_range.0..=o.duration_range.1);
            let gamma = rng.random_range(o.gamma_range.0..=o.gamma_range.1);
            let path = random_cycle(&mut rng, duration, o.samples)?;
            let options = LindbladOptions {
                gamma,
                tolerance: o.tolerance,
                ..LindbladOptions::default()
            };
            oracle_case(&geometry, &path, kt, &options)
        })
        .collect::<Result<Vec<_>>>()?;
    let all_pass = cases
        .iter()
        .all(|c| c.bound_holds && c.first_law_holds && c.second_law_holds);
    Ok(OracleSuiteReport {
        temperature_mk: config.bath.temperature_mk,
        cases,
        all_pass,
        units: Units::default(),
    })
}

fn write_oracle_csv(report: &OracleSuiteReport) -> Vec<u8> {
    let mut s = String::from("case,sites,gamma_per_us,duration_us,W_x_erg,dW_erg,W_erg,dF_erg,first_law_rel\n");
    for (k, c) in report.cases.iter().enumerate() {
        s.push_str(&format!(
            "{k},{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
            c.sites, c.gamma, c.duration_us, c.w_x, c.delta_w, c.work, c.delta_f, c.first_law_relative
        ));
    }
    s.into_bytes()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn protocol_files(out: &mut ArtifactWriter, o: &ProtocolOutcome) -> Result<()> {
    out.write("histograms.csv", &csv_bytes(|w| write_histograms_csv(&o.histograms, w))?)?;
    out.write("forces.csv", &csv_bytes(|w| o.forces.write_csv(w))?)?;
    let column = vec![(o.report.experiment.as_str().to_string(), o.report.ledger)];
    out.write(
        "ledger.csv",
        &csv_bytes(|w| crate::thermo::write_ledger_csv(&column, &o.report.landauer, w))?,
    )?;
    Ok(())
}

fn execute(config: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    match config.experiment {
        k if k.is_protocol() => {
            let o = run_protocol(config)?;
            out.manifest.replica_seeds = o.replica_seeds.clone();
            protocol_files(out, &o)?;
            out.write_json("report.json", &o.report)?;
        }
        ExperimentKind::StabilityHold => {
            let o = run_stability(config)?;
            out.manifest.replica_seeds = o.replica_seeds.clone();
            out.manifest.source_replica_seeds = o.source.replica_seeds.clone();
            protocol_files(out, &o.source)?;
            out.write("hold_histograms.csv", &csv_bytes(|w| write_histograms_csv(&o.histograms, w))?)?;
            out.write_json("report.json", &o.report)?;
        }
        ExperimentKind::JcScan => {
            let r = run_jc_scan(config)?;
            out.write("scan.csv", &csv_bytes(|w| write_scan_csv(&r.curve, w))?)?;
            out.write_json("report.json", &r)?;
        }
        ExperimentKind::OracleSuite => {
            let r = run_oracle_suite(config)?;
            out.write("oracle.csv", &write_oracle_csv(&r))?;
            out.write_json("report.json", &r)?;
        }
        _ => unreachable!("all experiment kinds are handled above"),
    }
    Ok(())
}

/// Run the configured experiment into `config.output_dir` and return the
/// manifest. The directory must not exist or be empty. On failure the
/// manifest is still written, marked incomplete, with whatever files were
/// produced.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let mut out = ArtifactWriter::create(&config.output_dir, config)?;
    let result = execute(config, &mut out);
    let error = result.as_ref().err().map(|e| e.to_string());
    let manifest = out.finish(error)?;
    result.map(|_| manifest)
}

/// Load a run's report.json as a protocol report.
pub fn load_protocol_report(dir: &Path) -> Result<ProtocolReport> {
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json"))?)?;
    // a stability report nests the protocol report of its source
    let v = match v.get("source") {
        Some(s) if v.get("hold_us").is_some() => s.clone(),
        _ => v,
    };
    Ok(serde_json::from_value(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_experiment(kind);
        c.lattice.rows = 4;
        c.lattice.cols = 4;
        c.replicas = 20;
        c.bootstrap_resamples = 10;
        c.trotter_p = 4;
        c.master_seed = 11;
        c
    }

    #[test]
    fn quantum_bit_halves() {
        let e = prepare_initial_ensemble(ExperimentKind::QuantumBit, 10, 9, None, 0).unwrap();
        assert_eq!(e.len(), 10);
        assert_eq!(e.iter().filter(|c| c.sum_z() == 9).count(), 5);
        assert_eq!(e.iter().filter(|c| c.sum_z() == -9).count(), 5);
        for i in 0..5 {
            assert_eq!(e[2 * i], e[2 * i + 1].inverted());
        }
    }

    #[test]
    fn classical_bit_needs_source() {
        let err = prepare_initial_ensemble(ExperimentKind::ClassicalBit, 4, 4, None, 0).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
        let src = vec![SpinConfiguration::all_up(4); 2];
        let e = prepare_initial_ensemble(ExperimentKind::ClassicalBit, 4, 4, Some(&src), 0).unwrap();
        assert_eq!(e.iter().filter(|c| c.sum_z() == 4).count(), 2);
        assert_eq!(e.iter().filter(|c| c.sum_z() == -4).count(), 2);
    }

    #[test]
    fn cooperative_is_flat() {
        let e = prepare_initial_ensemble(ExperimentKind::QuantumCooperative, 400, 25, None, 3).unwrap();
        let up = e.iter().flat_map(|c| c.spins()).filter(|&&s| s == 1).count() as f64;
        let frac = up / (400.0 * 25.0);
        // 10⁴ fair coins: σ = 0.005
        assert!((frac - 0.5).abs() < 0.025, "{frac}");
        let again = prepare_initial_ensemble(ExperimentKind::QuantumCooperative, 400, 25, None, 3).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn protocols_run_and_mirror_symmetric() {
        for kind in [
            ExperimentKind::ClassicalBit,
            ExperimentKind::QuantumBit,
            ExperimentKind::ClassicalCooperative,
            ExperimentKind::QuantumCooperative,
        ] {
            let o = run_protocol(&small(kind)).unwrap();
            assert_eq!(o.histograms.len(), 41);
            assert_eq!(o.report.switching.len(), 4);
            if !kind.is_cooperative() {
                assert_eq!(o.report.initial_asymmetry_tv, 0.0, "{kind}");
                assert!(o.report.ledger.u_f.is_none());
            } else {
                assert!(o.report.ledger.u_f.is_some());
            }
            assert_eq!(o.report.prerun.is_some(), kind == ExperimentKind::ClassicalBit);
        }
    }

    #[test]
    fn resample_mode_keeps_initials() {
        let mut c = small(ExperimentKind::QuantumBit);
        c.engine = Some(EngineKind::Glauber);
        c.schedule.duration_us = 10.0;
        c.readout = ReadoutMode::Resample;
        let o = run_protocol(&c).unwrap();
        assert_eq!(o.ensemble[0].snapshots.len(), 11);
        assert_eq!(o.report.initial_asymmetry_tv, 0.0);
    }

    #[test]
    fn stability_on_small_lattice() {
        let mut c = small(ExperimentKind::StabilityHold);
        c.stability.hold_us = 50.0;
        c.stability.sample_every_us = 10.0;
        let o = run_stability(&c).unwrap();
        assert_eq!(o.histograms.len(), 6);
        assert!(o.report.tv >= 0.0 && o.report.noise_sigma > 0.0);
    }

    #[test]
    fn oracle_suite_passes_on_small_cycles() {
        let mut c = ExperimentConfig::for_experiment(ExperimentKind::OracleSuite);
        c.oracle.paths = 4;
        c.oracle.max_sites = 2;
        let r = run_oracle_suite(&c).unwrap();
        assert_eq!(r.cases.len(), 4);
        assert!(r.all_pass, "{:?}", r.cases);
    }

    #[test]
    fn random_cycles_are_closed_and_unimodal() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let p = random_cycle(&mut rng, 2.0, 30).unwrap();
            assert!(p.is_closed_cycle());
            let bx: Vec<f64> = p.fields().iter().map(|f| f.bx).collect();
            let peak = bx.iter().cloned().fold(f64::MIN, f64::max);
            let k = bx.iter().position(|&b| b == peak).unwrap();
            assert!(bx[..=k].windows(2).all(|w| w[1] >= w[0]));
            assert!(bx[k..].windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn tiny_scan_runs() {
        let mut c = ExperimentConfig::for_experiment(ExperimentKind::JcScan);
        c.lattice = crate::config::LatticeConfig {
            rows: 4,
            cols: 4,
            boundary: Boundary::Periodic,
        };
        c.replicas = 4;
        c.jc_scan.points = 3;
        c.jc_scan.tau_us = 100.0;
        let r = run_jc_scan(&c).unwrap();
        assert_eq!(r.curve.len(), 3);
    }
}
