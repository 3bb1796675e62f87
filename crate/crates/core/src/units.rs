//! Physical constants in CGS units, plus the frequency/energy conversions the
//! rest of the crate relies on. Fields are carried in GHz, times in
//! microseconds, energies in erg.

/// Planck constant, erg·s.
pub const PLANCK: f64 = 6.62607015e-27;

/// Boltzmann constant, erg/K.
pub const BOLTZMANN: f64 = 1.380649e-16;

/// One GHz in Hz.
pub const GHZ: f64 = 1e9;

/// Energy in erg of a frequency given in GHz, `h·f`.
#[inline]
pub fn ghz_to_erg(f_ghz: f64) -> f64 {
    PLANCK * GHZ * f_ghz
}

/// Frequency in GHz of an energy given in erg.
#[inline]
pub fn erg_to_ghz(e: f64) -> f64 {
    e / (PLANCK * GHZ)
}

/// `k·T` in erg for a temperature in millikelvin.
#[inline]
pub fn kt_erg(temperature_mk: f64) -> f64 {
    BOLTZMANN * temperature_mk * 1e-3
}

/// Angular frequency in rad/μs of an energy in GHz units (`2π·f·10³`).
#[inline]
pub fn ghz_to_rad_per_us(f_ghz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_ghz * 1e3
}
