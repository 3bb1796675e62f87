//! Reductions of trajectory ensembles: magnetisation histograms, force
//! expectations with bootstrap errors, switching times, success rates and
//! the critical coupling of a 𝒥 scan.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glauber::ReplicaTrajectory;
use crate::lattice::{LatticeGeometry, SpinConfiguration};
use crate::schedule::CYCLE_TOLERANCE;
use crate::seeding::rng_from_seed;
use crate::units::{BOLTZMANN, PLANCK};

/// Sample times shared by every replica.
pub fn shared_times(ensemble: &[ReplicaTrajectory]) -> Result<&[f64]> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::EnsembleMismatch("empty ensemble".into()))?;
    for (i, r) in ensemble.iter().enumerate() {
        if r.snapshots.len() != r.times.len() {
            return Err(Error::EnsembleMismatch(format!(
                "replica {i} has {} snapshots for {} times",
                r.snapshots.len(),
                r.times.len()
            )));
        }
        if r.times.len() != first.times.len()
            || r.times
                .iter()
                .zip(&first.times)
                .any(|(a, b)| (a - b).abs() > CYCLE_TOLERANCE)
        {
            return Err(Error::EnsembleMismatch(format!(
                "replica {i} does not share the sample grid of replica 0"
            )));
        }
    }
    let n = first.initial().len();
    if let Some(i) = ensemble.iter().position(|r| r.snapshots.iter().any(|c| c.len() != n)) {
        return Err(Error::EnsembleMismatch(format!("replica {i} changes lattice size")));
    }
    Ok(&first.times)
}

/// Counts on the exact magnetisation grid, keyed by Σσᶻ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationHistogram {
    pub t: f64,
    pub n_sites: usize,
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
}

impl MagnetizationHistogram {
    pub fn from_configs<'a>(t: f64, configs: impl IntoIterator<Item = &'a SpinConfiguration>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        let mut n_sites = None;
        for c in configs {
            match n_sites {
                None => n_sites = Some(c.len()),
                Some(n) if n != c.len() => {
                    return Err(Error::EnsembleMismatch("configurations of different sizes".into()))
                }
                _ => {}
            }
            *counts.entry(c.sum_z()).or_insert(0) += 1;
            total += 1;
        }
        let n_sites = n_sites.ok_or_else(|| Error::EnsembleMismatch("no configurations".into()))?;
        Ok(Self {
            t,
            n_sites,
            counts,
            total,
        })
    }

    /// (m_z, probability) in increasing m_z.
    pub fn probabilities(&self) -> Vec<(f64, f64)> {
        self.counts
            .iter()
            .map(|(&s, &c)| (s as f64 / self.n_sites as f64, c as f64 / self.total as f64))
            .collect()
    }

    pub fn probability_of_sum(&self, sum_z: i64) -> f64 {
        self.counts.get(&sum_z).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    pub fn mean_mz(&self) -> f64 {
        self.counts
            .iter()
            .map(|(&s, &c)| s as f64 * c as f64)
            .sum::<f64>()
            / (self.total as f64 * self.n_sites as f64)
    }

    /// Histogram of the globally flipped ensemble.
    pub fn mirrored(&self) -> Self {
        Self {
            counts: self.counts.iter().map(|(&s, &c)| (-s, c)).collect(),
            ..self.clone()
        }
    }
}

pub fn histogram_series(ensemble: &[ReplicaTrajectory]) -> Result<Vec<MagnetizationHistogram>> {
    let times = shared_times(ensemble)?;
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| MagnetizationHistogram::from_configs(t, ensemble.iter().map(|r| &r.snapshots[k])))
        .collect()
}

pub fn write_histograms_csv<W: Write>(series: &[MagnetizationHistogram], mut w: W) -> Result<()> {
    writeln!(w, "t_us,m_z,probability")?;
    for h in series {
        for (m, p) in h.probabilities() {
            writeln!(w, "{},{},{}", h.t, m, p)?;
        }
    }
    Ok(())
}

/// Total-variation distance ½ Σ |p − q| over the union of supports.
pub fn total_variation(a: &MagnetizationHistogram, b: &MagnetizationHistogram) -> Result<f64> {
    if a.n_sites != b.n_sites {
        return Err(Error::Incompatible(format!(
            "histograms on {} and {} sites",
            a.n_sites, b.n_sites
        )));
    }
    let keys: std::collections::BTreeSet<i64> = a.counts.keys().chain(b.counts.keys()).copied().collect();
    Ok(0.5
        * keys
            .iter()
            .map(|&k| (a.probability_of_sum(k) - b.probability_of_sum(k)).abs())
            .sum::<f64>())
}

/// Standard deviation of the TV distance between two independent
/// multinomial samples of a common distribution, estimated from the pooled
/// bins: `½ Σ_k sqrt(p̂_k(1 − p̂_k)(1/𝒩_a + 1/𝒩_b))`.
pub fn tv_noise_sigma(a: &MagnetizationHistogram, b: &MagnetizationHistogram) -> f64 {
    let total = (a.total + b.total) as f64;
    let scale = 1.0 / a.total as f64 + 1.0 / b.total as f64;
    let keys: std::collections::BTreeSet<i64> = a.counts.keys().chain(b.counts.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| {
            let p = (a.counts.get(k).copied().unwrap_or(0) + b.counts.get(k).copied().unwrap_or(0)) as f64 / total;
            (p * (1.0 - p) * scale).sqrt()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            resamples: 200,
            seed: 0xB007,
        }
    }
}

/// Ensemble forces per sample time with bootstrap standard errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceSeries {
    pub times: Vec<f64>,
    pub mz: Vec<f64>,
    pub k: Vec<f64>,
    pub mstar: Vec<f64>,
    pub stderr_mz: Vec<f64>,
    pub stderr_k: Vec<f64>,
    pub stderr_mstar: Vec<f64>,
}

impl ForceSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_us,Mz,K,Mstar,stderr_Mz,stderr_K,stderr_Mstar")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.times[i],
                self.mz[i],
                self.k[i],
                self.mstar[i],
                self.stderr_mz[i],
                self.stderr_k[i],
                self.stderr_mstar[i]
            )?;
        }
        Ok(())
    }
}

/// (M_z, K, M_*) of a weighted ensemble at one time.
fn forces_at(configs: &[&SpinConfiguration], bonds: &[i64], weights: Option<&[u32]>) -> [f64; 3] {
    let n = configs[0].len();
    let mut site = vec![0i64; n];
    let mut sum_zz = 0i64;
    let mut total = 0i64;
    for (r, c) in configs.iter().enumerate() {
        let w = weights.map_or(1, |w| w[r] as i64);
        if w == 0 {
            continue;
        }
        for (acc, &s) in site.iter_mut().zip(c.spins()) {
            *acc += w * s as i64;
        }
        sum_zz += w * bonds[r];
        total += w;
    }
    let norm = total as f64;
    let mz = site.iter().sum::<i64>() as f64 / norm;
    let mstar = site
        .iter()
        .map(|&s| {
            let m = s as f64 / norm;
            (1.0 - m * m).max(0.0).sqrt()
        })
        .sum();
    [mz, sum_zz as f64 / norm, mstar]
}

/// Forces from per-site replica means; standard errors from a replica-level
/// bootstrap whose resample draws are shared by all sample times.
pub fn force_series(
    ensemble: &[ReplicaTrajectory],
    geometry: &LatticeGeometry,
    bootstrap: &BootstrapOptions,
) -> Result<ForceSeries> {
    let times = shared_times(ensemble)?;
    let n_rep = ensemble.len();
    if n_rep < 2 {
        return Err(Error::EnsembleMismatch("force estimates need at least 2 replicas".into()));
    }
    if ensemble[0].initial().len() != geometry.n_sites() {
        return Err(Error::EnsembleMismatch("ensemble does not match the lattice".into()));
    }
    let mut rng = rng_from_seed(bootstrap.seed);
    let draws: Vec<Vec<u32>> = (0..bootstrap.resamples)
        .map(|_| {
            let mut w = vec![0u32; n_rep];
            for _ in 0..n_rep {
                w[rng.random_range(0..n_rep)] += 1;
            }
            w
        })
        .collect();

    let rows: Vec<([f64; 3], [f64; 3])> = (0..times.len())
        .into_par_iter()
        .map(|k| {
            let configs: Vec<&SpinConfiguration> = ensemble.iter().map(|r| &r.snapshots[k]).collect();
            let bonds: Vec<i64> = configs.iter().map(|c| geometry.bond_sum(c.spins())).collect();
            let point = forces_at(&configs, &bonds, None);
            let mut se = [0.0; 3];
            if draws.len() > 1 {
                let samples: Vec<[f64; 3]> = draws.iter().map(|w| forces_at(&configs, &bonds, Some(w))).collect();
                for (q, out) in se.iter_mut().enumerate() {
                    let mean = samples.iter().map(|s| s[q]).sum::<f64>() / samples.len() as f64;
                    let var = samples.iter().map(|s| (s[q] - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
                    *out = var.sqrt();
                }
            }
            (point, se)
        })
        .collect();

    let mut out = ForceSeries {
        times: times.to_vec(),
        ..Default::default()
    };
    for (p, se) in rows {
        out.mz.push(p[0]);
        out.k.push(p[1]);
        out.mstar.push(p[2]);
        out.stderr_mz.push(se[0]);
        out.stderr_k.push(se[1]);
        out.stderr_mstar.push(se[2]);
    }
    Ok(out)
}

/// Replicas whose initial magnetisation density is ≤ −Δ.
pub fn switching_subensemble(ensemble: &[ReplicaTrajectory], delta: f64) -> Vec<usize> {
    ensemble
        .iter()
        .enumerate()
        .filter(|(_, r)| crate::lattice::magnetization_density(r.initial()) <= -delta)
        .map(|(i, _)| i)
        .collect()
}

/// (t, mean m_z) over the selected replicas.
pub fn mean_mz_series(ensemble: &[ReplicaTrajectory], members: &[usize]) -> Result<Vec<(f64, f64)>> {
    let times = shared_times(ensemble)?;
    if members.is_empty() {
        return Err(Error::EnsembleMismatch("empty subensemble".into()));
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let m = members
                .iter()
                .map(|&i| crate::lattice::magnetization_density(&ensemble[i].snapshots[k]))
                .sum::<f64>()
                / members.len() as f64;
            (t, m)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchConvention {
    /// From the last downward crossing of −Δ to the first crossing of +Δ.
    Crossing,
    /// From the given transverse-pulse onset (μs) to the first crossing of +Δ.
    FromOnset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingTime {
    Switched(f64),
    NoSwitch,
}

impl SwitchingTime {
    pub fn value(&self) -> Option<f64> {
        match self {
            SwitchingTime::Switched(t) => Some(*t),
            SwitchingTime::NoSwitch => None,
        }
    }
}

fn crossing(a: (f64, f64), b: (f64, f64), level: f64) -> f64 {
    if b.1 == a.1 {
        return b.0;
    }
    a.0 + (level - a.1) * (b.0 - a.0) / (b.1 - a.1)
}

pub fn switching_time(series: &[(f64, f64)], delta: f64, convention: SwitchConvention) -> Result<SwitchingTime> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must lie in (0, 1), got {delta}")));
    }
    let Some(up) = series.iter().position(|&(_, m)| m >= delta) else {
        return Ok(SwitchingTime::NoSwitch);
    };
    let t_up = if up == 0 {
        series[0].0
    } else {
        crossing(series[up - 1], series[up], delta)
    };
    let start = match convention {
        SwitchConvention::FromOnset(t_on) => t_on,
        SwitchConvention::Crossing => {
            let Some(down) = series[..up].iter().rposition(|&(_, m)| m <= -delta) else {
                return Ok(SwitchingTime::NoSwitch);
            };
            crossing(series[down], series[down + 1], -delta)
        }
    };
    Ok(SwitchingTime::Switched(t_up - start))
}

/// Two readings of the success of a reset to logical 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    /// (1 + ⟨m_z⟩)/2: fraction of qubits pointing up.
    pub qubit_fraction: f64,
    /// Fraction of replicas with m_z ≥ Δ.
    pub replica_fraction: f64,
}

pub fn success_rate(hist: &MagnetizationHistogram, delta: f64) -> Result<SuccessRate> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must lie in (0, 1], got {delta}")));
    }
    let n = hist.n_sites as f64;
    let hits: u64 = hist
        .counts
        .iter()
        .filter(|(&s, _)| s as f64 >= delta * n - 1e-9)
        .map(|(_, &c)| c)
        .sum();
    Ok(SuccessRate {
        qubit_fraction: 0.5 * (1.0 + hist.mean_mz()),
        replica_fraction: hits as f64 / hist.total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub j: f64,
    pub mean_abs_mz: f64,
    pub stderr: f64,
}

impl ScanPoint {
    /// Mean and standard error of |m_z| over independent samples.
    pub fn from_samples(j: f64, abs_mz: &[f64]) -> Result<Self> {
        let n = abs_mz.len();
        if n < 2 {
            return Err(Error::NoEstimate("need at least two samples per coupling".into()));
        }
        let mean = abs_mz.iter().sum::<f64>() / n as f64;
        let var = abs_mz.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            j,
            mean_abs_mz: mean,
            stderr: (var / n as f64).sqrt(),
        })
    }
}

pub fn write_scan_csv<W: Write>(curve: &[ScanPoint], mut w: W) -> Result<()> {
    writeln!(w, "J_GHz,mean_abs_mz,stderr")?;
    for p in curve {
        writeln!(w, "{},{},{}", p.j, p.mean_abs_mz, p.stderr)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointEstimate {
    pub j_c: f64,
    pub j_c_uncertainty: f64,
    pub j_low: f64,
    pub j_high: f64,
    pub curve: Vec<ScanPoint>,
    /// Baseline |m_z| at the lowest coupling, subtracted before analysis.
    pub offset: f64,
}

/// Noise band, in combined standard errors, for a rise to count.
pub const ONSET_SIGMAS: f64 = 3.0;

/// Locate the growth region of a |m_z|(𝒥) scan.
///
/// The curve is offset by its value at the lowest coupling. The steepest
/// grid interval is found, and the growth region is the contiguous run of
/// intervals around it whose rise exceeds both half the steepest rise and
/// the noise band. 𝒥_C is the middle of that region and the uncertainty its
/// half-width.
pub fn estimate_critical_point(curve: &[ScanPoint]) -> Result<CriticalPointEstimate> {
    if curve.len() < 3 {
        return Err(Error::NoEstimate("scan needs at least three couplings".into()));
    }
    if curve.windows(2).any(|w| !(w[1].j > w[0].j)) {
        return Err(Error::NoEstimate("couplings must be strictly increasing".into()));
    }
    let offset = curve[0].mean_abs_mz;
    let y: Vec<f64> = curve.iter().map(|p| p.mean_abs_mz - offset).collect();
    let rise = |k: usize| y[k + 1] - y[k];
    let noise = |k: usize| ONSET_SIGMAS * (curve[k].stderr.powi(2) + curve[k + 1].stderr.powi(2)).sqrt();
    let significant = |k: usize| rise(k) > noise(k);

    let (steepest, max_rise) = (0..curve.len() - 1)
        .map(|k| (k, rise(k)))
        .filter(|&(k, _)| significant(k))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NoEstimate("no significant growth: curve is flat".into()))?;
    let in_run = |k: usize| significant(k) && rise(k) >= 0.5 * max_rise;
    let mut lo = steepest;
    while lo > 0 && in_run(lo - 1) {
        lo -= 1;
    }
    let mut hi = steepest;
    while hi + 2 < curve.len() && in_run(hi + 1) {
        hi += 1;
    }
    if lo == 0 {
        return Err(Error::NoEstimate(
            "growth starts at the lowest coupling: scan does not cover the disordered phase".into(),
        ));
    }
    let j_low = curve[lo].j;
    let j_high = curve[hi + 1].j;
    Ok(CriticalPointEstimate {
        j_c: 0.5 * (j_low + j_high),
        j_c_uncertainty: 0.5 * (j_high - j_low),
        j_low,
        j_high,
        curve: curve.to_vec(),
        offset,
    })
}

/// ln(1 + √2).
pub fn onsager_constant() -> f64 {
    (1.0 + SQRT_2).ln()
}

/// T = 2h𝒥_C/(k ln(1+√2)) in mK, with linear error propagation.
pub fn temperature_from_jc(j_c: f64, uncertainty: f64) -> Result<(f64, f64)> {
    if !(j_c > 0.0) {
        return Err(Error::InvalidParameter(format!("critical coupling must be positive, got {j_c}")));
    }
    let per_ghz = 2.0 * PLANCK * 1e9 / (BOLTZMANN * onsager_constant()) * 1e3;
    Ok((per_ghz * j_c, per_ghz * uncertainty.abs()))
}

/// 𝒥_C = kT ln(1+√2)/(2h) in GHz for T in mK.
pub fn jc_from_temperature(temperature_mk: f64) -> f64 {
    BOLTZMANN * temperature_mk * 1e-3 * onsager_constant() / (2.0 * PLANCK * 1e9)
}
