//! Discrete-time path-integral Monte Carlo for the transverse-field Ising
//! model at bath temperature T.
//!
//! The quantum register of N sites is mapped onto P coupled copies (Trotter
//! slices) of the classical lattice, periodic in imaginary time, with weight
//! `exp(k_space Σ_k Σ_⟨ij⟩ s_i^k s_j^k + k_field Σ_k Σ_i s_i^k
//!      + k_tau Σ_k Σ_i s_i^k s_i^{k+1})`.
//!
//! One sweep is N·P single-site Metropolis updates at random (slice, site)
//! positions followed by N heat-bath world-line updates that flip a site in
//! every slice at once. World-line moves leave the imaginary-time bonds
//! unchanged, so when the slices are locked (small B_x) they reproduce the
//! Glauber kinetics of the classical engine sweep for sweep.
//!
//! The measurement outcome at each sample time is slice 0, the image of a
//! projective σᶻ readout.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glauber::{BathParameters, ReplicaTrajectory};
use crate::lattice::{LatticeGeometry, SpinConfiguration};
use crate::schedule::{FieldPath, FieldSample};
use crate::seeding::rng_from_seed;
use crate::units::ghz_to_erg;

/// Default Trotter number.
pub const DEFAULT_TROTTER: usize = 32;

/// Default transverse-field floor, GHz.
pub const DEFAULT_BX_FLOOR: f64 = 0.01;

/// Dimensionless couplings of the (2+1)-dimensional classical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrotterCouplings {
    pub k_space: f64,
    pub k_field: f64,
    pub k_tau: f64,
}

/// Suzuki–Trotter couplings for fields (GHz), `kT` (erg) and P slices:
/// `k_space = (β/P)h𝒥`, `k_field = (β/P)hB_z`, `k_tau = ½ ln coth((β/P)hB_x)`.
pub fn trotter_couplings(fields: &FieldSample, kt: f64, p: usize) -> Result<TrotterCouplings> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("Trotter number must be ≥ 2, got {p}")));
    }
    if !(kt > 0.0) {
        return Err(Error::InvalidParameter(format!("kT must be positive, got {kt}")));
    }
    if !(fields.bx > 0.0) {
        return Err(Error::ClassicalLimit {
            bx: fields.bx,
            floor: 0.0,
        });
    }
    let scale = 1.0 / (kt * p as f64);
    let x = scale * ghz_to_erg(fields.bx);
    Ok(TrotterCouplings {
        k_space: scale * ghz_to_erg(fields.j),
        k_field: scale * ghz_to_erg(fields.bz),
        // ½ ln coth x = −½ ln tanh x
        k_tau: -0.5 * x.tanh().ln(),
    })
}

/// Acceptance table for local moves indexed by (spin, neighbour sum, sum of
/// the two imaginary-time neighbours).
struct LocalTable {
    offset: i32,
    width: usize,
    probs: Vec<f64>,
}

impl LocalTable {
    fn new(max_degree: usize) -> Self {
        let width = 2 * max_degree + 1;
        Self {
            offset: max_degree as i32,
            width,
            probs: vec![0.0; 2 * width * 3],
        }
    }

    fn fill(&mut self, c: &TrotterCouplings) {
        for (si, s) in [-1.0f64, 1.0].into_iter().enumerate() {
            for k in 0..self.width {
                let nn = k as f64 - self.offset as f64;
                for (ti, tsum) in [-2.0f64, 0.0, 2.0].into_iter().enumerate() {
                    let ds = 2.0 * s * (c.k_space * nn + c.k_field + c.k_tau * tsum);
                    let p = if ds <= 0.0 { 1.0 } else { (-ds).exp() };
                    self.probs[(si * self.width + k) * 3 + ti] = p;
                }
            }
        }
    }

    #[inline]
    fn get(&self, s: i8, nn: i32, tsum: i32) -> f64 {
        let si = (s > 0) as usize;
        self.probs[(si * self.width + (nn + self.offset) as usize) * 3 + ((tsum + 2) / 2) as usize]
    }
}

/// P coupled replicas of the lattice, stored slice-major.
#[derive(Debug, Clone)]
pub struct SqaState<'g> {
    geometry: &'g LatticeGeometry,
    p: usize,
    spins: Vec<i8>,
}

impl<'g> SqaState<'g> {
    /// All slices initialised as copies of `initial`.
    pub fn new(geometry: &'g LatticeGeometry, p: usize, initial: &SpinConfiguration) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!("Trotter number must be ≥ 2, got {p}")));
        }
        if initial.len() != geometry.n_sites() {
            return Err(Error::InvalidConfiguration(format!(
                "initial configuration has {} spins, lattice has {}",
                initial.len(),
                geometry.n_sites()
            )));
        }
        let spins = initial.spins().repeat(p);
        Ok(Self { geometry, p, spins })
    }

    pub fn trotter(&self) -> usize {
        self.p
    }

    pub fn slice(&self, k: usize) -> &[i8] {
        let n = self.geometry.n_sites();
        &self.spins[k * n..(k + 1) * n]
    }

    pub fn slice_config(&self, k: usize) -> SpinConfiguration {
        SpinConfiguration::from_raw(self.slice(k).to_vec())
    }

    /// ⟨σᶻ_i⟩ estimated by averaging over slices.
    pub fn slice_mean_sz(&self, site: usize) -> f64 {
        let n = self.geometry.n_sites();
        (0..self.p).map(|k| self.spins[k * n + site] as f64).sum::<f64>() / self.p as f64
    }

    /// Σ_⟨ij⟩ s_i s_j averaged over slices.
    pub fn slice_mean_bond_sum(&self) -> f64 {
        (0..self.p)
            .map(|k| self.geometry.bond_sum(self.slice(k)) as f64)
            .sum::<f64>()
            / self.p as f64
    }

    /// Fraction of imaginary-time bonds whose two ends disagree.
    pub fn inter_slice_disagreement(&self) -> f64 {
        let n = self.geometry.n_sites();
        let mut count = 0usize;
        for k in 0..self.p {
            let next = (k + 1) % self.p;
            for i in 0..n {
                if self.spins[k * n + i] != self.spins[next * n + i] {
                    count += 1;
                }
            }
        }
        count as f64 / (n * self.p) as f64
    }

    #[inline]
    fn spatial_sum(&self, k: usize, site: usize) -> i32 {
        let n = self.geometry.n_sites();
        let base = k * n;
        self.geometry
            .neighbors(site)
            .iter()
            .map(|&j| self.spins[base + j as usize] as i32)
            .sum()
    }

    fn sweep_with_table<R: Rng>(&mut self, c: &TrotterCouplings, table: &LocalTable, rng: &mut R) {
        let n = self.geometry.n_sites();
        let p = self.p;
        let total = n * p;
        for _ in 0..total {
            let idx = rng.random_range(0..total);
            let k = idx / n;
            let site = idx - k * n;
            let up = if k + 1 == p { site } else { idx + n };
            let down = if k == 0 { (p - 1) * n + site } else { idx - n };
            let tsum = self.spins[up] as i32 + self.spins[down] as i32;
            let nn = self.spatial_sum(k, site);
            let prob = table.get(self.spins[idx], nn, tsum);
            if prob >= 1.0 || rng.random::<f64>() < prob {
                self.spins[idx] = -self.spins[idx];
            }
        }
        for _ in 0..n {
            let site = rng.random_range(0..n);
            let mut ds = 0.0;
            for k in 0..p {
                let s = self.spins[k * n + site] as f64;
                ds += 2.0 * s * (c.k_space * self.spatial_sum(k, site) as f64 + c.k_field);
            }
            let accept = crate::glauber::glauber_flip_probability(ds, 1.0);
            if rng.random::<f64>() < accept {
                for k in 0..p {
                    self.spins[k * n + site] = -self.spins[k * n + site];
                }
            }
        }
    }

    /// One sweep at fixed couplings.
    pub fn sweep<R: Rng>(&mut self, c: &TrotterCouplings, rng: &mut R) {
        let mut table = LocalTable::new(self.geometry.max_degree());
        table.fill(c);
        self.sweep_with_table(c, &table, rng);
    }

    /// Run `sweeps` sweeps at fixed couplings, calling `visit` after each.
    pub fn run_static<R: Rng>(
        &mut self,
        c: &TrotterCouplings,
        sweeps: usize,
        rng: &mut R,
        mut visit: impl FnMut(&Self),
    ) {
        let mut table = LocalTable::new(self.geometry.max_degree());
        table.fill(c);
        for _ in 0..sweeps {
            self.sweep_with_table(c, &table, rng);
            visit(self);
        }
    }
}

/// Path-integral engine with fixed Trotter number and transverse-field floor.
#[derive(Debug, Clone)]
pub struct SqaEngine<'g> {
    geometry: &'g LatticeGeometry,
    trotter: usize,
    bx_floor: f64,
}

impl<'g> SqaEngine<'g> {
    pub fn new(geometry: &'g LatticeGeometry, trotter: usize, bx_floor: f64) -> Result<Self> {
        if trotter < 2 {
            return Err(Error::InvalidParameter(format!(
                "Trotter number must be ≥ 2, got {trotter}"
            )));
        }
        if !(bx_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "transverse-field floor must be positive, got {bx_floor}"
            )));
        }
        Ok(Self {
            geometry,
            trotter,
            bx_floor,
        })
    }

    pub fn trotter(&self) -> usize {
        self.trotter
    }

    pub fn bx_floor(&self) -> f64 {
        self.bx_floor
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
        if let Some(f) = path.fields().iter().find(|f| f.bx < self.bx_floor) {
            return Err(Error::ClassicalLimit {
                bx: f.bx,
                floor: self.bx_floor,
            });
        }
        let mut state = SqaState::new(self.geometry, self.trotter, initial)?;
        let mut rng = rng_from_seed(bath.rng_seed);
        let kt = bath.kt();
        let mut table = LocalTable::new(self.geometry.max_degree());
        let times = path.times();
        let mut snapshots = Vec::with_capacity(times.len());
        snapshots.push(state.slice_config(0));
        for w in times.windows(2) {
            let sweeps = bath.sweeps_between(w[0], w[1]);
            let span = w[1] - w[0];
            for j in 0..sweeps {
                let tm = w[0] + (j as f64 + 0.5) * span / sweeps as f64;
                let c = trotter_couplings(&path.at(tm), kt, self.trotter)?;
                table.fill(&c);
                state.sweep_with_table(&c, &table, &mut rng);
            }
            snapshots.push(state.slice_config(0));
        }
        Ok(ReplicaTrajectory {
            seed: bath.rng_seed,
            times: times.to_vec(),
            snapshots,
        })
    }

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
}
