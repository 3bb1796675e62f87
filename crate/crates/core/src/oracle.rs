//! Dense density-matrix ground truth for registers of a few sites.
//!
//! Basis index bit `i` = 0 means site `i` points up (σᶻ = +1). Energies are
//! in erg, time in μs.
//!
//! Driven open-system evolution uses a quench–relax splitting: over each
//! substep the Hamiltonian is frozen at its midpoint value. Switching the
//! Hamiltonian is a quench that adds `Tr[ρ(H_new − H_old)]` to the work;
//! the state then evolves exactly under the frozen `H` with a Davies
//! generator whose jump rates between eigenstates `b → a` are
//! `γ Σ_i Σ_α |⟨a|σᵅ_i|b⟩|² / (1 + exp((E_a − E_b)/kT))` (α = x, y, z). The energy change
//! during relaxation is heat. The first law closes by construction and the
//! Gibbs state of every frozen Hamiltonian is stationary.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, SpinConfiguration};
use crate::schedule::{FieldPath, FieldSample};
use crate::units::{GHZ, PLANCK};

/// Largest register for which operators are built.
pub const MAX_ORACLE_SITES: usize = 8;
/// Largest register for driven open-system evolution.
pub const MAX_EVOLVE_SITES: usize = 6;

const STATE_TOLERANCE: f64 = 1e-10;
const DRIFT_TOLERANCE: f64 = 1e-9;

fn check_size(geometry: &LatticeGeometry, max: usize) -> Result<usize> {
    let n = geometry.n_sites();
    if n > max {
        return Err(Error::TooLarge { n, max });
    }
    Ok(n)
}

#[inline]
fn spin(basis: usize, site: usize) -> f64 {
    if basis >> site & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonals of Σσᶻ and Σ_⟨ij⟩σᶻσᶻ in the computational basis.
fn diagonal_terms(geometry: &LatticeGeometry) -> (Vec<f64>, Vec<f64>) {
    let n = geometry.n_sites();
    let dim = 1usize << n;
    let mut z = vec![0.0; dim];
    let mut zz = vec![0.0; dim];
    for b in 0..dim {
        z[b] = (0..n).map(|i| spin(b, i)).sum();
        zz[b] = geometry
            .pairs()
            .iter()
            .map(|&(i, j)| spin(b, i as usize) * spin(b, j as usize))
            .sum();
    }
    (z, zz)
}

fn real_hamiltonian(fields: &FieldSample, geometry: &LatticeGeometry) -> DMatrix<f64> {
    let n = geometry.n_sites();
    let dim = 1usize << n;
    let (z, zz) = diagonal_terms(geometry);
    let scale = -PLANCK * GHZ;
    let mut h = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        h[(b, b)] = scale * (fields.bz * z[b] + fields.j * zz[b]);
        if fields.bx != 0.0 {
            for i in 0..n {
                h[(b ^ (1 << i), b)] += scale * fields.bx;
            }
        }
    }
    h
}

/// `−h[B_x Σσˣ + B_z Σσᶻ + 𝒥 Σ_⟨ij⟩σᶻσᶻ]` as a dense matrix in erg.
pub fn build_hamiltonian(fields: &FieldSample, geometry: &LatticeGeometry) -> Result<DMatrix<Complex64>> {
    check_size(geometry, MAX_ORACLE_SITES)?;
    Ok(real_hamiltonian(fields, geometry).map(|x| Complex64::new(x, 0.0)))
}

fn is_hermitian(m: &DMatrix<Complex64>, tol: f64) -> bool {
    let d = m.nrows();
    (0..d).all(|a| (a..d).all(|b| (m[(a, b)] - m[(b, a)].conj()).norm() <= tol))
}

/// A validated density operator on `2^N` states.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperatorState {
    n_sites: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseOperatorState {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || !dim.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "density matrix must be square with power-of-two dimension, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n_sites = dim.trailing_zeros() as usize;
        if n_sites > MAX_ORACLE_SITES {
            return Err(Error::TooLarge {
                n: n_sites,
                max: MAX_ORACLE_SITES,
            });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STATE_TOLERANCE || tr.im.abs() > STATE_TOLERANCE {
            return Err(Error::InvalidParameter(format!("trace {tr} is not 1")));
        }
        if !is_hermitian(&matrix, STATE_TOLERANCE) {
            return Err(Error::InvalidParameter("matrix is not Hermitian".into()));
        }
        let min = SymmetricEigen::new(matrix.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -STATE_TOLERANCE {
            return Err(Error::InvalidParameter(format!("negative eigenvalue {min}")));
        }
        Ok(Self { n_sites, matrix })
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        if n_sites > MAX_ORACLE_SITES {
            return Err(Error::TooLarge {
                n: n_sites,
                max: MAX_ORACLE_SITES,
            });
        }
        let dim = 1usize << n_sites;
        Ok(Self {
            n_sites,
            matrix: DMatrix::identity(dim, dim).map(|x: f64| Complex64::new(x / dim as f64, 0.0)),
        })
    }

    /// Projector on a computational basis state.
    pub fn basis_state(config: &SpinConfiguration) -> Result<Self> {
        Self::classical_mixture(&[(config.clone(), 1.0)])
    }

    /// Diagonal mixture of basis states with the given weights (normalised).
    pub fn classical_mixture(parts: &[(SpinConfiguration, f64)]) -> Result<Self> {
        let n_sites = parts
            .first()
            .map(|(c, _)| c.len())
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        if n_sites > MAX_ORACLE_SITES {
            return Err(Error::TooLarge {
                n: n_sites,
                max: MAX_ORACLE_SITES,
            });
        }
        let total: f64 = parts.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || parts.iter().any(|(c, w)| c.len() != n_sites || *w < 0.0) {
            return Err(Error::InvalidParameter("invalid mixture weights".into()));
        }
        let dim = 1usize << n_sites;
        let mut m = DMatrix::zeros(dim, dim);
        for (c, w) in parts {
            let idx = c
                .spins()
                .iter()
                .enumerate()
                .fold(0usize, |acc, (i, &s)| if s < 0 { acc | 1 << i } else { acc });
            m[(idx, idx)] += Complex64::new(w / total, 0.0);
        }
        Ok(Self { n_sites, matrix: m })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Tr[ρ A]` for Hermitian `A`.
    pub fn expectation(&self, op: &DMatrix<Complex64>) -> f64 {
        trace_product(&self.matrix, op)
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = &self.matrix - &other.matrix;
        0.5 * SymmetricEigen::new(diff).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Populations of the computational basis states.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn sz(&self, site: usize) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(b, p)| p * spin(b, site))
            .sum()
    }

    pub fn szz(&self, i: usize, j: usize) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(b, p)| p * spin(b, i) * spin(b, j))
            .sum()
    }

    /// Σ_i ⟨σˣ_i⟩.
    pub fn total_sx(&self) -> f64 {
        bloch_components(self).iter().map(|v| v[0]).sum()
    }
}

fn trace_product(rho: &DMatrix<Complex64>, op: &DMatrix<Complex64>) -> f64 {
    let d = rho.nrows();
    let mut acc = 0.0;
    for a in 0..d {
        for b in 0..d {
            acc += (rho[(a, b)] * op[(b, a)]).re;
        }
    }
    acc
}

/// Per-site Bloch vectors (⟨σˣ⟩, ⟨σʸ⟩, ⟨σᶻ⟩).
pub fn bloch_components(state: &DenseOperatorState) -> Vec<[f64; 3]> {
    let m = &state.matrix;
    let dim = m.nrows();
    (0..state.n_sites)
        .map(|i| {
            let mask = 1usize << i;
            let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
            for a in 0..dim {
                z += m[(a, a)].re * spin(a, i);
                if a & mask == 0 {
                    let c = m[(a, a | mask)];
                    x += 2.0 * c.re;
                    y -= 2.0 * c.im;
                }
            }
            [x, y, z]
        })
        .collect()
}

/// Gibbs state `exp(−H/kT)/Z`.
pub fn thermal_state(hamiltonian: &DMatrix<Complex64>, kt: f64) -> Result<DenseOperatorState> {
    if !(kt > 0.0) {
        return Err(Error::InvalidParameter(format!("kT must be positive, got {kt}")));
    }
    let eig = SymmetricEigen::new(hamiltonian.clone());
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = eig.eigenvalues.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    let diag = DVector::from_iterator(w.len(), w.iter().map(|x| Complex64::new(x / z, 0.0)));
    let v = &eig.eigenvectors;
    let matrix = v * DMatrix::from_diagonal(&diag) * v.adjoint();
    let matrix = (&matrix + matrix.adjoint()).scale(0.5);
    DenseOperatorState::new(matrix)
}

/// `−kT ln Z`, erg.
pub fn free_energy(hamiltonian: &DMatrix<Complex64>, kt: f64) -> Result<f64> {
    if !(kt > 0.0) {
        return Err(Error::InvalidParameter(format!("kT must be positive, got {kt}")));
    }
    let eig = SymmetricEigen::new(hamiltonian.clone());
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let z: f64 = eig.eigenvalues.iter().map(|e| (-(e - e0) / kt).exp()).sum();
    Ok(e0 - kt * z.ln())
}

/// Internal energy, cumulative work and cumulative heat at each path sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThermoRecord {
    pub t: Vec<f64>,
    pub internal_energy: Vec<f64>,
    pub work: Vec<f64>,
    pub heat: Vec<f64>,
}

impl ThermoRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Largest `|ΔU − W − Q|` over the record.
    pub fn first_law_residual(&self) -> f64 {
        let u0 = self.internal_energy.first().copied().unwrap_or(0.0);
        (0..self.len())
            .map(|k| (self.internal_energy[k] - u0 - self.work[k] - self.heat[k]).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_us,U_erg,W_erg,Q_erg")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{:e},{:e},{:e}",
                self.t[k], self.internal_energy[k], self.work[k], self.heat[k]
            )?;
        }
        Ok(())
    }
}

/// Work split by control field, cumulative, erg.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkParts {
    pub x: f64,
    pub z: f64,
    pub zz: f64,
}

impl WorkParts {
    pub fn total(&self) -> f64 {
        self.x + self.z + self.zz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladOptions {
    /// Coupling rate, 1/μs.
    pub gamma: f64,
    /// Local error tolerance on ρ (Frobenius norm) per substep.
    pub tolerance: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            tolerance: 1e-7,
            initial_step: 1e-3,
            min_step: 1e-9,
            max_step: 1.0,
        }
    }
}

/// Result of a driven evolution sampled at the path times.
#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub state: DenseOperatorState,
    pub record: ThermoRecord,
    pub work_parts: Vec<WorkParts>,
    pub bloch: Vec<Vec<[f64; 3]>>,
    pub accepted_steps: usize,
}

struct Frozen {
    fields: FieldSample,
    energies: Vec<f64>,
    basis: DMatrix<Complex64>,
    rates: DMatrix<f64>,
    outflow: Vec<f64>,
}

struct Propagator<'g> {
    geometry: &'g LatticeGeometry,
    kt: f64,
    gamma: f64,
    cache: Vec<Frozen>,
}

impl<'g> Propagator<'g> {
    fn frozen(&mut self, fields: FieldSample) -> usize {
        if let Some(i) = self.cache.iter().position(|f| f.fields == fields) {
            return i;
        }
        let h = real_hamiltonian(&fields, self.geometry);
        let eig = SymmetricEigen::new(h);
        let dim = eig.eigenvalues.len();
        let v = &eig.eigenvectors;
        let n = self.geometry.n_sites();
        let mut rates = DMatrix::zeros(dim, dim);
        if self.gamma > 0.0 {
            // Σ_i Σ_α |⟨a|σᵅ_i|b⟩|²; eigenvectors are real, σʸ contributes
            // through the real matrix −iσʸ
            let mut coupling = DMatrix::<f64>::zeros(dim, dim);
            let vt = v.transpose();
            for i in 0..n {
                let mut flipped = DMatrix::<f64>::zeros(dim, dim);
                let mut flipped_y = DMatrix::<f64>::zeros(dim, dim);
                let mut signed = DMatrix::<f64>::zeros(dim, dim);
                for r in 0..dim {
                    let src = v.row(r ^ (1 << i));
                    flipped.row_mut(r).copy_from(&src);
                    flipped_y.row_mut(r).copy_from(&(src * -spin(r, i)));
                    signed.row_mut(r).copy_from(&(v.row(r) * spin(r, i)));
                }
                for op in [flipped, flipped_y, signed] {
                    coupling += (&vt * op).map(|x| x * x);
                }
            }
            for a in 0..dim {
                for b in 0..dim {
                    if a != b {
                        let de = eig.eigenvalues[a] - eig.eigenvalues[b];
                        rates[(a, b)] =
                            self.gamma * coupling[(a, b)] * crate::glauber::glauber_flip_probability(de, self.kt);
                    }
                }
            }
        }
        let outflow: Vec<f64> = (0..dim).map(|b| rates.column(b).sum()).collect();
        for b in 0..dim {
            rates[(b, b)] = -outflow[b];
        }
        if self.cache.len() >= 8 {
            self.cache.remove(0);
        }
        self.cache.push(Frozen {
            fields,
            energies: eig.eigenvalues.iter().cloned().collect(),
            basis: v.map(|x| Complex64::new(x, 0.0)),
            rates,
            outflow,
        });
        self.cache.len() - 1
    }

    /// Exact evolution for `dt` under the frozen generator; returns heat.
    fn relax(&mut self, rho: &mut DMatrix<Complex64>, fields: FieldSample, dt: f64) -> f64 {
        let idx = self.frozen(fields);
        let f = &self.cache[idx];
        let dim = f.energies.len();
        let mut r = f.basis.adjoint() * &*rho * &f.basis;
        let p: DVector<f64> = DVector::from_iterator(dim, (0..dim).map(|a| r[(a, a)].re));
        let p_new = if self.gamma > 0.0 {
            (&f.rates * dt).exp() * &p
        } else {
            p.clone()
        };
        let hbar = PLANCK / (2.0 * std::f64::consts::PI);
        for c in 0..dim {
            for d in 0..dim {
                if c == d {
                    r[(c, c)] = Complex64::new(p_new[c], 0.0);
                } else {
                    let omega = (f.energies[c] - f.energies[d]) / hbar * 1e-6;
                    let decay = 0.5 * (f.outflow[c] + f.outflow[d]);
                    r[(c, d)] *= Complex64::new(-decay * dt, -omega * dt).exp();
                }
            }
        }
        *rho = &f.basis * r * f.basis.adjoint();
        (0..dim).map(|a| (p_new[a] - p[a]) * f.energies[a]).sum()
    }
}

/// Cumulative bookkeeping carried across substeps.
#[derive(Clone)]
struct Ledger {
    rho: DMatrix<Complex64>,
    current: FieldSample,
    work: WorkParts,
    heat: f64,
}

fn quench(ledger: &mut Ledger, to: FieldSample, z_diag: &[f64], zz_diag: &[f64]) {
    if ledger.current == to {
        return;
    }
    let dim = ledger.rho.nrows();
    let n = dim.trailing_zeros() as usize;
    let (mut sz, mut szz, mut sx) = (0.0, 0.0, 0.0);
    for a in 0..dim {
        let p = ledger.rho[(a, a)].re;
        sz += p * z_diag[a];
        szz += p * zz_diag[a];
        for i in 0..n {
            sx += ledger.rho[(a, a ^ (1 << i))].re;
        }
    }
    let scale = -PLANCK * GHZ;
    ledger.work.x += scale * (to.bx - ledger.current.bx) * sx;
    ledger.work.z += scale * (to.bz - ledger.current.bz) * sz;
    ledger.work.zz += scale * (to.j - ledger.current.j) * szz;
    ledger.current = to;
}

/// Driven open-system evolution of `initial` along `path` at `kT` (erg).
pub fn lindblad_evolve(
    initial: &DenseOperatorState,
    geometry: &LatticeGeometry,
    path: &FieldPath,
    kt: f64,
    options: &LindbladOptions,
) -> Result<LindbladRun> {
    let n = check_size(geometry, MAX_EVOLVE_SITES)?;
    if initial.n_sites != n {
        return Err(Error::InvalidParameter(format!(
            "state has {} sites, lattice has {n}",
            initial.n_sites
        )));
    }
    if !(options.gamma >= 0.0) || !(kt > 0.0) {
        return Err(Error::InvalidParameter("gamma must be ≥ 0 and kT > 0".into()));
    }
    if !(options.tolerance > 0.0 && options.min_step > 0.0 && options.max_step >= options.min_step) {
        return Err(Error::InvalidParameter("invalid step control".into()));
    }
    if path.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    let (z_diag, zz_diag) = diagonal_terms(geometry);
    let mut prop = Propagator {
        geometry,
        kt,
        gamma: options.gamma,
        cache: Vec::new(),
    };
    let h_of = |f: &FieldSample| real_hamiltonian(f, geometry).map(|x| Complex64::new(x, 0.0));

    let times = path.times();
    let mut ledger = Ledger {
        rho: initial.matrix.clone(),
        current: *path.first(),
        work: WorkParts::default(),
        heat: 0.0,
    };
    let mut record = ThermoRecord::default();
    let mut parts = Vec::with_capacity(times.len());
    let mut bloch = Vec::with_capacity(times.len());
    let mut accepted = 0usize;
    let mut step = options.initial_step.clamp(options.min_step, options.max_step);

    let mut push = |ledger: &Ledger, t: f64, record: &mut ThermoRecord| -> Result<()> {
        let state = DenseOperatorState {
            n_sites: n,
            matrix: ledger.rho.clone(),
        };
        record.t.push(t);
        record
            .internal_energy
            .push(trace_product(&ledger.rho, &h_of(&ledger.current)));
        record.work.push(ledger.work.total());
        record.heat.push(ledger.heat);
        parts.push(ledger.work);
        bloch.push(bloch_components(&state));
        Ok(())
    };
    push(&ledger, times[0], &mut record)?;

    let substep = |ledger: &mut Ledger, prop: &mut Propagator, t: f64, dt: f64| {
        let mid = path.at(t + 0.5 * dt);
        quench(ledger, mid, &z_diag, &zz_diag);
        ledger.heat += prop.relax(&mut ledger.rho, mid, dt);
    };

    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut t = t0;
        // segments with constant fields need a single exact step
        let f0 = path.at(t0);
        let static_segment = path.at(t1) == f0 && path.at(0.5 * (t0 + t1)) == f0;
        while t < t1 {
            let remaining = t1 - t;
            if static_segment {
                substep(&mut ledger, &mut prop, t, remaining);
                accepted += 1;
                break;
            }
            let dt = step.min(remaining);
            let mut coarse = ledger.clone();
            substep(&mut coarse, &mut prop, t, dt);
            let mut fine = ledger.clone();
            substep(&mut fine, &mut prop, t, 0.5 * dt);
            substep(&mut fine, &mut prop, t + 0.5 * dt, 0.5 * dt);
            let err = (&coarse.rho - &fine.rho).norm();
            if err <= options.tolerance || dt <= options.min_step {
                if err > options.tolerance {
                    return Err(Error::StepSizeFailure { t, step: dt, error: err });
                }
                let tr = fine.rho.trace();
                if (tr.re - 1.0).abs() > DRIFT_TOLERANCE || !is_hermitian(&fine.rho, DRIFT_TOLERANCE) {
                    return Err(Error::StepSizeFailure {
                        t,
                        step: dt,
                        error: (tr.re - 1.0).abs(),
                    });
                }
                ledger = fine;
                t = if dt >= remaining { t1 } else { t + dt };
                accepted += 1;
                let grow = if err > 0.0 {
                    (0.9 * (options.tolerance / err).powf(1.0 / 3.0)).min(2.0)
                } else {
                    2.0
                };
                if dt < remaining || grow < 1.0 {
                    step = (dt * grow).clamp(options.min_step, options.max_step);
                }
            } else {
                let shrink = (0.9 * (options.tolerance / err).powf(1.0 / 3.0)).max(0.1);
                step = (dt * shrink).max(options.min_step);
            }
        }
        // keep ρ Hermitian against round-off accumulation
        ledger.rho = (&ledger.rho + ledger.rho.adjoint()).scale(0.5);
        quench(&mut ledger, path.at(t1), &z_diag, &zz_diag);
        push(&ledger, t1, &mut record)?;
    }

    Ok(LindbladRun {
        state: DenseOperatorState {
            n_sites: n,
            matrix: ledger.rho,
        },
        record,
        work_parts: parts,
        bloch,
        accepted_steps: accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use crate::units::kt_erg;

    fn chain(n: usize) -> LatticeGeometry {
        LatticeGeometry::new(1, n, Boundary::Open).unwrap()
    }

    fn eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn zeeman_and_tilted_spectra() {
        let g = chain(1);
        let hg = PLANCK * GHZ;
        let e = eigenvalues(&build_hamiltonian(&FieldSample::new(0.0, 1.0, 0.0), &g).unwrap());
        assert!((e[0] + hg).abs() < 1e-12 * hg && (e[1] - hg).abs() < 1e-12 * hg);
        let e = eigenvalues(&build_hamiltonian(&FieldSample::new(1.0, 1.0, 0.0), &g).unwrap());
        let r = 2f64.sqrt() * hg;
        assert!((e[0] + r).abs() < 1e-12 * hg && (e[1] - r).abs() < 1e-12 * hg);
        let h0 = build_hamiltonian(&FieldSample::new(0.0, 0.0, 0.0), &chain(3)).unwrap();
        assert!(h0.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        assert!(matches!(
            build_hamiltonian(&FieldSample::default(), &LatticeGeometry::new(3, 3, Boundary::Open).unwrap()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn thermal_states() {
        let g = chain(2);
        let kt = kt_erg(39.0);
        let h0 = build_hamiltonian(&FieldSample::default(), &g).unwrap();
        let rho = thermal_state(&h0, kt).unwrap();
        assert!(rho.trace_distance(&DenseOperatorState::maximally_mixed(2).unwrap()) < 1e-12);

        // ferromagnetic pair: aligned states weigh e^{2βh𝒥} relative to anti-aligned
        let j = 0.3;
        let h = build_hamiltonian(&FieldSample::new(0.0, 0.0, j), &g).unwrap();
        let p = thermal_state(&h, kt).unwrap().populations();
        let r = (2.0 * PLANCK * GHZ * j / kt).exp();
        let z = 2.0 * r + 2.0;
        let expect = [r / z, 1.0 / z, 1.0 / z, r / z];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }

        // cold Zeeman spin collapses on the ground state
        let h1 = build_hamiltonian(&FieldSample::new(0.0, 1.0, 0.0), &chain(1)).unwrap();
        let cold = thermal_state(&h1, kt_erg(0.1)).unwrap();
        assert!((cold.populations()[0] - 1.0).abs() < 1e-12);
        assert!(thermal_state(&h1, 0.0).is_err());
    }

    #[test]
    fn bloch_vectors() {
        let mixed = DenseOperatorState::maximally_mixed(3).unwrap();
        for v in bloch_components(&mixed) {
            assert!(v.iter().all(|x| x.abs() < 1e-15));
        }
        let up = DenseOperatorState::basis_state(&SpinConfiguration::all_up(2)).unwrap();
        for v in bloch_components(&up) {
            assert_eq!(v, [0.0, 0.0, 1.0]);
        }
        let kt = kt_erg(39.0);
        let bz = 0.4;
        let h = build_hamiltonian(&FieldSample::new(0.0, bz, 0.0), &chain(1)).unwrap();
        let v = bloch_components(&thermal_state(&h, kt).unwrap())[0];
        assert!((v[2] - (PLANCK * GHZ * bz / kt).tanh()).abs() < 1e-10);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);

        // tilted field: Bloch vector along (B_x, 0, B_z)
        let f = FieldSample::new(0.3, 0.4, 0.0);
        let v = bloch_components(&thermal_state(&build_hamiltonian(&f, &chain(1)).unwrap(), kt).unwrap())[0];
        let len = (PLANCK * GHZ * 0.5 / kt).tanh();
        assert!((v[0] - 0.6 * len).abs() < 1e-10 && (v[2] - 0.8 * len).abs() < 1e-10);
    }

    #[test]
    fn state_validation() {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(DenseOperatorState::new(m.clone()).is_err());
        m[(1, 1)] = Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(DenseOperatorState::new(m.clone()).is_err());
        m[(1, 0)] = Complex64::new(0.1, 0.0);
        assert!(DenseOperatorState::new(m.clone()).is_ok());
        m[(0, 1)] = Complex64::new(0.9, 0.0);
        m[(1, 0)] = Complex64::new(0.9, 0.0);
        assert!(DenseOperatorState::new(m).is_err());
        assert!(DenseOperatorState::new(DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn closed_system_conserves_purity() {
        let g = chain(2);
        let kt = kt_erg(39.0);
        let path = crate::schedule::DirectPath {
            bx: crate::schedule::PiecewiseLinear::new(vec![(0.0, 0.5), (2.0, 0.1)]).unwrap(),
            bz: crate::schedule::PiecewiseLinear::new(vec![(0.0, 0.0), (2.0, 0.3)]).unwrap(),
            j: crate::schedule::PiecewiseLinear::constant(0.2, 2.0),
        }
        .compile(0.5)
        .unwrap();
        let init = DenseOperatorState::basis_state(&SpinConfiguration::new(vec![1, -1]).unwrap()).unwrap();
        let opts = LindbladOptions {
            gamma: 0.0,
            ..Default::default()
        };
        let run = lindblad_evolve(&init, &g, &path, kt, &opts).unwrap();
        assert!((run.state.purity() - 1.0).abs() < 1e-8);
        assert!(run.record.first_law_residual() < 1e-6 * PLANCK * GHZ);
        assert!(run.record.heat.iter().all(|q| q.abs() < 1e-30));
    }

    #[test]
    fn static_relaxation_reaches_gibbs() {
        let g = chain(2);
        let kt = kt_erg(39.0);
        let f = FieldSample::new(0.3, 0.2, 0.25);
        let path = FieldPath::constant(f, 200.0, 50.0).unwrap();
        let init = DenseOperatorState::basis_state(&SpinConfiguration::all_down(2)).unwrap();
        let run = lindblad_evolve(&init, &g, &path, kt, &LindbladOptions::default()).unwrap();
        let gibbs = thermal_state(&build_hamiltonian(&f, &g).unwrap(), kt).unwrap();
        let d = run.state.trace_distance(&gibbs);
        assert!(d < 1e-6, "{d}");
        assert!(run.record.work.iter().all(|w| *w == 0.0));
        let residual = run.record.first_law_residual();
        assert!(residual < 1e-6 * PLANCK * GHZ, "{residual}");
    }

    #[test]
    fn gibbs_is_stationary() {
        let g = chain(3);
        let kt = kt_erg(39.0);
        let f = FieldSample::new(0.2, 0.1, 0.3);
        let gibbs = thermal_state(&build_hamiltonian(&f, &g).unwrap(), kt).unwrap();
        let mut prop = Propagator {
            geometry: &g,
            kt,
            gamma: 1.0,
            cache: Vec::new(),
        };
        let mut rho = gibbs.matrix.clone();
        prop.relax(&mut rho, f, 0.7);
        assert!((&rho - gibbs.matrix()).norm() < 1e-8);
    }

    #[test]
    fn null_path_does_nothing() {
        let g = chain(2);
        let path = FieldPath::constant(FieldSample::default(), 5.0, 1.0).unwrap();
        let init = DenseOperatorState::basis_state(&SpinConfiguration::all_up(2)).unwrap();
        let run = lindblad_evolve(&init, &g, &path, kt_erg(39.0), &LindbladOptions::default()).unwrap();
        assert!(run.record.work.iter().all(|w| *w == 0.0));
        assert!(run.record.heat.iter().all(|q| *q == 0.0));
    }

    #[test]
    fn thermo_csv_schema() {
        let rec = ThermoRecord {
            t: vec![0.0, 1.0],
            internal_energy: vec![0.0, 1e-18],
            work: vec![0.0, 2e-18],
            heat: vec![0.0, -1e-18],
        };
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t_us,U_erg,W_erg,Q_erg\n0,"));
        assert_eq!(s.lines().count(), 3);
    }
}
