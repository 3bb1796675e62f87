//! Single-spin-flip stochastic dynamics at fixed bath temperature under a
//! time-dependent diagonal Hamiltonian.
//!
//! Between consecutive path samples `t_k → t_{k+1}` the engine performs
//! `round(sweeps_per_microsecond · (t_{k+1} − t_k))` sweeps. A sweep is N
//! flip attempts at uniformly random sites, all evaluated with the fields
//! interpolated at the sweep's midpoint time. The configuration is recorded
//! at every sample time.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, SpinConfiguration};
use crate::schedule::{compile_path, ControlProgram, DeviceCurves, FieldPath, FieldSample};
use crate::seeding::{derive_seed, rng_from_seed};
use crate::units::{ghz_to_erg, kt_erg};

pub const DEFAULT_SWEEPS_PER_MICROSECOND: f64 = 1.35;

/// Bath temperature, the sweep ↔ μs calibration, and the RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BathParameters {
    pub temperature_mk: f64,
    pub sweeps_per_microsecond: f64,
    pub rng_seed: u64,
}

impl Default for BathParameters {
    fn default() -> Self {
        Self {
            temperature_mk: 39.0,
            // classical preset on 16×16 switches in ≈5 μs at this rate
            sweeps_per_microsecond: DEFAULT_SWEEPS_PER_MICROSECOND,
            rng_seed: 0,
        }
    }
}

impl BathParameters {
    pub fn kt(&self) -> f64 {
        kt_erg(self.temperature_mk)
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self { rng_seed, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_mk > 0.0) || !self.temperature_mk.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {} mK",
                self.temperature_mk
            )));
        }
        if !(self.sweeps_per_microsecond > 0.0) || !self.sweeps_per_microsecond.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sweeps_per_microsecond must be positive, got {}",
                self.sweeps_per_microsecond
            )));
        }
        Ok(())
    }

    /// Number of sweeps between two sample times. Sweep counts are rounded
    /// on the absolute time axis so fractional rates are exact on average.
    pub fn sweeps_between(&self, t0: f64, t1: f64) -> u64 {
        let a = (self.sweeps_per_microsecond * t0).round();
        let b = (self.sweeps_per_microsecond * t1).round();
        (b - a).max(0.0) as u64
    }
}

/// Heat-bath (Glauber) acceptance `1 / (1 + exp(ΔE/kT))`.
#[inline]
pub fn glauber_flip_probability(delta_e: f64, kt: f64) -> f64 {
    let x = delta_e / kt;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Metropolis acceptance `min(1, exp(−ΔE/kT))`.
#[inline]
pub fn metropolis_acceptance(delta_e: f64, kt: f64) -> f64 {
    if delta_e <= 0.0 {
        1.0
    } else {
        (-delta_e / kt).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    #[default]
    Glauber,
    Metropolis,
}

impl UpdateRule {
    #[inline]
    pub fn probability(self, delta_e: f64, kt: f64) -> f64 {
        match self {
            UpdateRule::Glauber => glauber_flip_probability(delta_e, kt),
            UpdateRule::Metropolis => metropolis_acceptance(delta_e, kt),
        }
    }
}

/// Measured configurations at the path's sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaTrajectory {
    pub seed: u64,
    pub times: Vec<f64>,
    pub snapshots: Vec<SpinConfiguration>,
}

impl ReplicaTrajectory {
    pub fn initial(&self) -> &SpinConfiguration {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &SpinConfiguration {
        &self.snapshots[self.snapshots.len() - 1]
    }

    /// Trajectory dump: one `t_us=<t> <spins>` line per sample.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (t, c) in self.times.iter().zip(&self.snapshots) {
            out.push_str(&format!("t_us={t} {c}\n"));
        }
        out
    }
}

/// Flip-probability table indexed by `(spin, neighbour sum)`.
struct FlipTable {
    offset: i32,
    width: usize,
    probs: Vec<f64>,
}

impl FlipTable {
    fn new(max_degree: usize) -> Self {
        let width = 2 * max_degree + 1;
        Self {
            offset: max_degree as i32,
            width,
            probs: vec![0.0; 2 * width],
        }
    }

    fn fill(&mut self, fields: &FieldSample, kt: f64, rule: UpdateRule) {
        for (si, s) in [-1.0f64, 1.0].into_iter().enumerate() {
            for k in 0..self.width {
                let nn = k as f64 - self.offset as f64;
                let de = ghz_to_erg(2.0 * s * (fields.bz + fields.j * nn));
                self.probs[si * self.width + k] = rule.probability(de, kt);
            }
        }
    }

    #[inline]
    fn get(&self, s: i8, nn: i32) -> f64 {
        let si = (s > 0) as usize;
        self.probs[si * self.width + (nn + self.offset) as usize]
    }
}

/// Single-flip kinetic Ising dynamics on a fixed lattice.
#[derive(Debug, Clone)]
pub struct GlauberEngine<'g> {
    geometry: &'g LatticeGeometry,
    rule: UpdateRule,
}

impl<'g> GlauberEngine<'g> {
    pub fn new(geometry: &'g LatticeGeometry) -> Self {
        Self {
            geometry,
            rule: UpdateRule::Glauber,
        }
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        self.geometry
    }

    /// One sweep of N random-site attempts with a prepared table.
    #[inline]
    fn sweep<R: Rng>(&self, spins: &mut [i8], table: &FlipTable, rng: &mut R) {
        let n = spins.len();
        for _ in 0..n {
            let site = rng.random_range(0..n);
            let nn = self.geometry.local_field_sum(spins, site);
            let p = table.get(spins[site], nn);
            if rng.random::<f64>() < p {
                spins[site] = -spins[site];
            }
        }
    }

    /// Evolve `spins` through `sweeps` sweeps spread evenly over `[t0, t1]`.
    #[allow(clippy::too_many_arguments)]
    fn advance<R: Rng>(
        &self,
        spins: &mut [i8],
        path: &FieldPath,
        t0: f64,
        t1: f64,
        sweeps: u64,
        kt: f64,
        table: &mut FlipTable,
        rng: &mut R,
    ) {
        let span = t1 - t0;
        for j in 0..sweeps {
            let tm = t0 + (j as f64 + 0.5) * span / sweeps as f64;
            table.fill(&path.at(tm), kt, self.rule);
            self.sweep(spins, table, rng);
        }
    }

    pub fn run_replica(
        &self,
        initial: &SpinConfiguration,
        path: &FieldPath,
        bath: &BathParameters,
    ) -> Result<ReplicaTrajectory> {
        bath.validate()?;
        if path.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        if initial.len() != self.geometry.n_sites() {
            return Err(Error::InvalidConfiguration(format!(
                "initial configuration has {} spins, lattice has {}",
                initial.len(),
                self.geometry.n_sites()
            )));
        }
        let mut rng = rng_from_seed(bath.rng_seed);
        let kt = bath.kt();
        let mut table = FlipTable::new(self.geometry.max_degree());
        let mut spins = initial.spins().to_vec();
        let times = path.times();
        let mut snapshots = Vec::with_capacity(times.len());
        snapshots.push(initial.clone());
        for w in times.windows(2) {
            let sweeps = bath.sweeps_between(w[0], w[1]);
            self.advance(&mut spins, path, w[0], w[1], sweeps, kt, &mut table, &mut rng);
            snapshots.push(SpinConfiguration::from_raw(spins.clone()));
        }
        Ok(ReplicaTrajectory {
            seed: bath.rng_seed,
            times: times.to_vec(),
            snapshots,
        })
    }

    /// Run one replica per initial configuration, replica `i` seeded with
    /// `seeds[i]`. Output order matches input order.
    pub fn run_ensemble(
        &self,
        initials: &[SpinConfiguration],
        path: &FieldPath,
        bath: &BathParameters,
        seeds: &[u64],
    ) -> Result<Vec<ReplicaTrajectory>> {
        if initials.len() != seeds.len() {
            return Err(Error::InvalidParameter(format!(
                "{} initial configurations but {} seeds",
                initials.len(),
                seeds.len()
            )));
        }
        initials
            .par_iter()
            .zip(seeds.par_iter())
            .enumerate()
            .map(|(i, (init, &seed))| {
                self.run_replica(init, path, &bath.with_seed(seed))
                    .map_err(|e| Error::Replica {
                        replica: i,
                        t: 0.0,
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    /// Evolve a configuration under static fields for `sweeps` sweeps and
    /// return the visited configurations after each sweep. Used for
    /// equilibrium checks.
    pub fn static_chain<R: Rng>(
        &self,
        initial: &SpinConfiguration,
        fields: &FieldSample,
        kt: f64,
        sweeps: usize,
        rng: &mut R,
        mut visit: impl FnMut(&[i8]),
    ) {
        let mut table = FlipTable::new(self.geometry.max_degree());
        table.fill(fields, kt, self.rule);
        let mut spins = initial.spins().to_vec();
        for _ in 0..sweeps {
            self.sweep(&mut spins, &table, rng);
            visit(&spins);
        }
    }
}

/// Minimum ramp duration, μs, for the forward ramp to count as slow.
pub const MIN_RAMP_TAU: f64 = 100.0;

/// Final configurations of `n_samples` independent forward ramps
/// `s(t) = t/τ` at `g = 0`, each starting from a uniformly random
/// configuration. Replica `i` uses seed `derive_seed(bath.rng_seed, i)` both
/// for its initial configuration and its dynamics.
pub fn sample_equilibrium_ramp(
    geometry: &LatticeGeometry,
    curves: &DeviceCurves,
    j_coupler: f64,
    tau: f64,
    bath: &BathParameters,
    n_samples: usize,
) -> Result<Vec<SpinConfiguration>> {
    if !(tau >= MIN_RAMP_TAU) {
        return Err(Error::InvalidParameter(format!(
            "ramp time {tau} us is shorter than the {MIN_RAMP_TAU} us slowness threshold"
        )));
    }
    let program = ControlProgram::forward_ramp(tau, j_coupler)?;
    let path = compile_path(curves, &program, 1.0)?;
    let engine = GlauberEngine::new(geometry);
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(bath.rng_seed, i as u64);
            let mut rng = rng_from_seed(seed ^ 0x5EED_1A11_0000_0001);
            let init = SpinConfiguration::random(geometry.n_sites(), &mut rng);
            engine
                .run_replica(&init, &path, &bath.with_seed(seed))
                .map(|traj| traj.last().clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{magnetization_density, Boundary};
    use crate::units::PLANCK;

    #[test]
    fn flip_probability_examples() {
        let kt = 1.3e-18;
        assert_eq!(glauber_flip_probability(0.0, kt), 0.5);
        assert!((glauber_flip_probability(kt * 3f64.ln(), kt) - 0.25).abs() < 1e-15);
        assert_eq!(glauber_flip_probability(1e4 * kt, kt), 0.0);
        assert_eq!(glauber_flip_probability(-1e4 * kt, kt), 1.0);
        assert_eq!(glauber_flip_probability(f64::INFINITY, kt), 0.0);
        assert_eq!(glauber_flip_probability(f64::NEG_INFINITY, kt), 1.0);
        let mut prev = 1.0;
        for k in -50..=50 {
            let p = glauber_flip_probability(k as f64 * 0.3 * kt, kt);
            assert!(p <= prev && (0.0..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn detailed_balance_ratio() {
        let kt = 2.0;
        for rule in [UpdateRule::Glauber, UpdateRule::Metropolis] {
            for de in [-5.0, -1.0, -0.1, 0.0, 0.3, 2.0, 7.5] {
                let ratio = rule.probability(de, kt) / rule.probability(-de, kt);
                assert!((ratio - (-de / kt).exp()).abs() < 1e-12 * ratio.max(1.0));
            }
        }
    }

    #[test]
    fn zero_duration_path_returns_initial() {
        let g = LatticeGeometry::new(3, 3, Boundary::Open).unwrap();
        let path = FieldPath::new(vec![0.0], vec![FieldSample::new(0.0, 0.1, 0.5)]).unwrap();
        let init: SpinConfiguration = "+-+-+-+-+".parse().unwrap();
        let traj = GlauberEngine::new(&g)
            .run_replica(&init, &path, &BathParameters::default())
            .unwrap();
        assert_eq!(traj.snapshots, vec![init]);
        assert_eq!(traj.times, vec![0.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let g = LatticeGeometry::new(6, 6, Boundary::Open).unwrap();
        let path = crate::schedule::classical_preset(10.0).unwrap();
        let init = SpinConfiguration::all_down(36);
        let eng = GlauberEngine::new(&g);
        let bath = BathParameters {
            rng_seed: 99,
            ..Default::default()
        };
        let a = eng.run_replica(&init, &path, &bath).unwrap();
        let b = eng.run_replica(&init, &path, &bath).unwrap();
        assert_eq!(a, b);
        let c = eng.run_replica(&init, &path, &bath.with_seed(100)).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
        assert_eq!(a.times, path.times());
    }

    #[test]
    fn free_spins_average_to_zero() {
        let g = LatticeGeometry::new(4, 4, Boundary::Open).unwrap();
        let path = FieldPath::constant(FieldSample::default(), 2000.0, 1.0).unwrap();
        let traj = GlauberEngine::new(&g)
            .run_replica(&SpinConfiguration::all_up(16), &path, &BathParameters::default())
            .unwrap();
        let ms: Vec<f64> = traj.snapshots[1..].iter().map(magnetization_density).collect();
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        // free spins: each snapshot independent-ish, var(m) = 1/N
        let sigma = (1.0 / 16.0 / ms.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma * 1.5, "mean {mean}");
    }

    #[test]
    fn ramp_without_coupling_gives_binomial_abs_magnetization() {
        let g = LatticeGeometry::new(4, 4, Boundary::Open).unwrap();
        let n = 16usize;
        // E|m| for N fair coins: Σ_k C(N,k) |2k−N| / (N·2^N)
        let mut binom = 1.0f64;
        let mut expected = 0.0;
        for k in 0..=n {
            expected += binom * (2.0 * k as f64 - n as f64).abs();
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        expected /= n as f64 * 2f64.powi(n as i32);
        let bath = BathParameters {
            rng_seed: 5,
            ..Default::default()
        };
        let samples = 2000;
        let finals =
            sample_equilibrium_ramp(&g, &DeviceCurves::synthetic(), 0.0, 100.0, &bath, samples)
                .unwrap();
        assert_eq!(finals.len(), samples);
        let abs: Vec<f64> = finals.iter().map(|c| magnetization_density(c).abs()).collect();
        let mean = abs.iter().sum::<f64>() / samples as f64;
        let var = abs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let se = (var / samples as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected} ± {se}");
    }

    #[test]
    fn strong_coupling_ramp_orders() {
        let g = LatticeGeometry::new(8, 8, Boundary::Periodic).unwrap();
        // 𝒥_final = B(1)·J/2 = 4.5·J GHz; J = 0.2 puts 𝒥 = 0.9 GHz ≫ 𝒥_C ≈ 0.36
        let finals = sample_equilibrium_ramp(
            &g,
            &DeviceCurves::synthetic(),
            0.2,
            100.0,
            &BathParameters::default(),
            100,
        )
        .unwrap();
        let mean = finals
            .iter()
            .map(|c| magnetization_density(c).abs())
            .sum::<f64>()
            / 100.0;
        assert!(mean > 0.9, "mean |m| = {mean}");
    }

    #[test]
    fn ramp_requires_slowness() {
        let g = LatticeGeometry::new(2, 2, Boundary::Open).unwrap();
        assert!(sample_equilibrium_ramp(
            &g,
            &DeviceCurves::synthetic(),
            0.1,
            50.0,
            &BathParameters::default(),
            1
        )
        .is_err());
    }

    #[test]
    fn static_chain_matches_two_spin_boltzmann() {
        // two coupled spins: states ++, +-, -+, -- ; exact weights by hand
        let g = LatticeGeometry::new(1, 2, Boundary::Open).unwrap();
        let f = FieldSample::new(0.0, 0.2, 0.3);
        let kt = crate::units::kt_erg(39.0);
        let h = PLANCK * 1e9;
        let energy = |s0: f64, s1: f64| -h * (f.bz * (s0 + s1) + f.j * s0 * s1);
        let states = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        let w: Vec<f64> = states.iter().map(|&(a, b)| (-energy(a, b) / kt).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut counts = [0usize; 4];
        let mut rng = rng_from_seed(3);
        let sweeps = 200_000;
        GlauberEngine::new(&g).static_chain(
            &SpinConfiguration::all_up(2),
            &f,
            kt,
            sweeps,
            &mut rng,
            |s| {
                let idx = ((s[0] < 0) as usize) * 2 + (s[1] < 0) as usize;
                counts[idx] += 1;
            },
        );
        for k in 0..4 {
            let p = w[k] / z;
            let phat = counts[k] as f64 / sweeps as f64;
            assert!((phat - p).abs() < 0.01, "state {k}: {phat} vs {p}");
        }
    }
}
