//! Work bookkeeping along a control path: work from the measurable forces,
//! the bound on the transverse work, the quench correction, the Landauer
//! reference and erasure-action figures of merit. Energies are in erg.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ForceSeries;
use crate::lattice::{LatticeGeometry, SpinConfiguration};
use crate::schedule::{FieldPath, FieldSample, CLASSICAL_BX_CAP, CYCLE_TOLERANCE};
use crate::units::{ghz_to_erg, kt_erg};

fn check_grid(path: &FieldPath, forces: &ForceSeries) -> Result<()> {
    if path.len() != forces.len()
        || path
            .times()
            .iter()
            .zip(&forces.times)
            .any(|(a, b)| (a - b).abs() > CYCLE_TOLERANCE)
    {
        return Err(Error::EnsembleMismatch(
            "path and force series do not share sample times".into(),
        ));
    }
    Ok(())
}

/// Midpoint-rule integral `Σ_k ½(f_k + f_{k+1})·Δx_k` and its standard
/// error from independent per-sample errors.
fn midpoint_integral(f: &[f64], se: &[f64], x: impl Fn(usize) -> f64, abs_step: bool) -> (f64, f64) {
    let n = f.len();
    let dx = |k: usize| {
        let d = x(k + 1) - x(k);
        if abs_step {
            d.abs()
        } else {
            d
        }
    };
    let mut value = 0.0;
    let mut var = 0.0;
    for k in 0..n {
        // weight of sample k collects half of each adjacent interval
        let mut c = 0.0;
        if k > 0 {
            c += 0.5 * dx(k - 1);
        }
        if k + 1 < n {
            c += 0.5 * dx(k);
        }
        value += c * f[k];
        var += (c * se[k]).powi(2);
    }
    (value, var.sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathWork {
    pub w_z: f64,
    pub w_zz: f64,
    pub stderr_w_z: f64,
    pub stderr_w_zz: f64,
}

/// `W_z = −hΣ M̄_z ΔB_z`, `W_zz = −hΣ K̄ Δ𝒥` with midpoint forces.
pub fn path_work(path: &FieldPath, forces: &ForceSeries) -> Result<PathWork> {
    check_grid(path, forces)?;
    let f = path.fields();
    let (wz, sz) = midpoint_integral(&forces.mz, &forces.stderr_mz, |k| f[k].bz, false);
    let (wzz, szz) = midpoint_integral(&forces.k, &forces.stderr_k, |k| f[k].j, false);
    Ok(PathWork {
        w_z: -ghz_to_erg(wz),
        w_zz: -ghz_to_erg(wzz),
        stderr_w_z: ghz_to_erg(sz),
        stderr_w_zz: ghz_to_erg(szz),
    })
}

/// Index of the single B_x maximum; rejects profiles that rise again after
/// falling.
fn unimodal_peak(path: &FieldPath) -> Result<usize> {
    let bx: Vec<f64> = path.fields().iter().map(|f| f.bx).collect();
    let peak = bx
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > bx[best] { k } else { best });
    let tol = 1e-12 * bx[peak].abs().max(1.0);
    if let Some(k) = (0..peak).find(|&k| bx[k + 1] < bx[k] - tol) {
        return Err(Error::NonUnimodal(format!(
            "B_x decreases at t = {} before its maximum at t = {}",
            path.times()[k + 1],
            path.times()[peak]
        )));
    }
    if let Some(k) = (peak..bx.len() - 1).find(|&k| bx[k + 1] > bx[k] + tol) {
        return Err(Error::NonUnimodal(format!(
            "B_x rises again at t = {} after its maximum at t = {}",
            path.times()[k + 1],
            path.times()[peak]
        )));
    }
    Ok(peak)
}

/// `δW = h[∫_fwd M_* dB_x + ∫_bwd M_* |dB_x|]`, so that `|W_x| ≤ δW`.
pub fn transverse_work_bound(path: &FieldPath, forces: &ForceSeries) -> Result<f64> {
    check_grid(path, forces)?;
    unimodal_peak(path)?;
    let f = path.fields();
    let zeros = vec![0.0; forces.len()];
    let (v, _) = midpoint_integral(&forces.mstar, &zeros, |k| f[k].bx, true);
    Ok(ghz_to_erg(v))
}

/// Mean diagonal energy of the final ensemble, `U_f`, with its standard error.
///
/// The final Hamiltonian must be classical up to the transverse-field floor;
/// the floor itself carries no diagonal energy and is ignored.
pub fn quench_correction(
    final_configs: &[SpinConfiguration],
    final_fields: &FieldSample,
    geometry: &LatticeGeometry,
) -> Result<(f64, f64)> {
    if final_fields.bx > CLASSICAL_BX_CAP {
        return Err(Error::InvalidParameter(format!(
            "final transverse field {} GHz exceeds the classical cap {CLASSICAL_BX_CAP} GHz",
            final_fields.bx
        )));
    }
    if final_configs.is_empty() {
        return Err(Error::MissingInput("no final configurations".into()));
    }
    let e: Vec<f64> = final_configs
        .iter()
        .map(|c| geometry.diagonal_energy(c, final_fields))
        .collect::<Result<_>>()?;
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let se = if e.len() > 1 {
        (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkMode {
    /// Closed cycle: no quench correction.
    Cycle,
    /// Opening and closing quenches from/to the null Hamiltonian.
    Cooperative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkLedger {
    pub mode: WorkMode,
    pub w_z: f64,
    pub w_zz: f64,
    pub delta_w: f64,
    pub u_f: Option<f64>,
    pub w_exp: f64,
    pub stderr_w_z: f64,
    pub stderr_w_zz: f64,
    pub stderr_u_f: Option<f64>,
    pub stderr_w_exp: f64,
}

impl WorkLedger {
    /// Interval `[W_exp − δW, W_exp + δW]`.
    pub fn interval(&self) -> (f64, f64) {
        (self.w_exp - self.delta_w, self.w_exp + self.delta_w)
    }
}

/// `W_exp = (−U_f in cooperative mode) + W_z + W_zz`, with `±δW` kept apart.
pub fn total_work(work: &PathWork, delta_w: f64, u_f: Option<(f64, f64)>, mode: WorkMode) -> Result<WorkLedger> {
    if !(delta_w >= 0.0) {
        return Err(Error::InvalidParameter(format!("δW must be non-negative, got {delta_w}")));
    }
    let (quench, quench_se, u) = match (mode, u_f) {
        (WorkMode::Cooperative, Some((u, se))) => (-u, se, Some((u, se))),
        (WorkMode::Cooperative, None) => {
            return Err(Error::MissingInput(
                "cooperative accounting needs the final-configuration energy".into(),
            ))
        }
        (WorkMode::Cycle, _) => (0.0, 0.0, None),
    };
    Ok(WorkLedger {
        mode,
        w_z: work.w_z,
        w_zz: work.w_zz,
        delta_w,
        u_f: u.map(|x| x.0),
        w_exp: quench + work.w_z + work.w_zz,
        stderr_w_z: work.stderr_w_z,
        stderr_w_zz: work.stderr_w_zz,
        stderr_u_f: u.map(|x| x.1),
        stderr_w_exp: (work.stderr_w_z.powi(2) + work.stderr_w_zz.powi(2) + quench_se.powi(2)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandauerReference {
    pub kt: f64,
    pub per_bit: f64,
    pub n_bits: u64,
    pub total: f64,
}

/// `kT ln 2` per bit at `temperature_mk`.
pub fn landauer_reference(temperature_mk: f64, n_bits: u64) -> Result<LandauerReference> {
    if !(temperature_mk > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {temperature_mk} mK"
        )));
    }
    let kt = kt_erg(temperature_mk);
    let per_bit = kt * std::f64::consts::LN_2;
    Ok(LandauerReference {
        kt,
        per_bit,
        n_bits,
        total: n_bits as f64 * per_bit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErasureReport {
    pub switching_time_us: f64,
    pub success_rate: f64,
    /// erg per bit.
    pub work_per_bit: f64,
    /// erg·s per bit.
    pub action_a: f64,
    pub action_a_star: f64,
}

/// `A = w·𝒯` (𝒯 in seconds) and `A* = A(1 − R)`.
pub fn erasure_action(work_per_bit: f64, switching_time_us: f64, success_rate: f64) -> Result<ErasureReport> {
    if !work_per_bit.is_finite() || !switching_time_us.is_finite() {
        return Err(Error::InvalidParameter("work and switching time must be finite".into()));
    }
    if !(0.0..=1.0).contains(&success_rate) {
        return Err(Error::InvalidParameter(format!(
            "success rate must lie in [0, 1], got {success_rate}"
        )));
    }
    let action_a = work_per_bit * switching_time_us * 1e-6;
    Ok(ErasureReport {
        switching_time_us,
        success_rate,
        work_per_bit,
        action_a,
        action_a_star: action_a * (1.0 - success_rate),
    })
}

/// Table of ledgers in units of 10⁻¹⁸ erg, one column per experiment.
pub fn write_ledger_csv<W: Write>(
    columns: &[(String, WorkLedger)],
    landauer: &LandauerReference,
    mut w: W,
) -> Result<()> {
    let scale = 1e18;
    let header: Vec<&str> = columns.iter().map(|(n, _)| n.as_str()).collect();
    writeln!(w, "quantity,{}", header.join(","))?;
    let row = |w: &mut W, name: &str, f: &dyn Fn(&WorkLedger) -> Option<f64>| -> Result<()> {
        let cells: Vec<String> = columns
            .iter()
            .map(|(_, l)| f(l).map(|v| format!("{}", v * scale)).unwrap_or_default())
            .collect();
        writeln!(w, "{name},{}", cells.join(","))?;
        Ok(())
    };
    row(&mut w, "W_z", &|l| Some(l.w_z))?;
    row(&mut w, "W_zz", &|l| Some(l.w_zz))?;
    row(&mut w, "δW", &|l| Some(l.delta_w))?;
    row(&mut w, "U_f", &|l| l.u_f)?;
    row(&mut w, "W_exp", &|l| Some(l.w_exp))?;
    row(&mut w, "W_L", &|_| Some(landauer.total))?;
    Ok(())
}
