//! Control protocols: device curves A(s), B(s), user programs s(t), g(t), and
//! the effective field paths (B_x, B_z, 𝒥)(t) that the engines consume.
//!
//! Two construction modes exist. In device mode a [`ControlProgram`] is
//! composed with [`DeviceCurves`] through
//! `B_x = A(s)/2, B_z = B(s)·g/2, 𝒥 = B(s)·J/2`. In direct mode the three
//! channels are given as breakpoint lists ([`DirectPath`]), which is how the
//! erasure presets are built.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance (GHz) for declaring a path closed.
pub const CYCLE_TOLERANCE: f64 = 1e-12;

/// Effective fields at one instant, all in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSample {
    pub bx: f64,
    pub bz: f64,
    pub j: f64,
}

impl FieldSample {
    pub fn new(bx: f64, bz: f64, j: f64) -> Self {
        Self { bx, bz, j }
    }

    pub fn lerp(&self, other: &FieldSample, w: f64) -> FieldSample {
        FieldSample {
            bx: self.bx + (other.bx - self.bx) * w,
            bz: self.bz + (other.bz - self.bz) * w,
            j: self.j + (other.j - self.j) * w,
        }
    }

    fn max_abs_diff(&self, other: &FieldSample) -> f64 {
        (self.bx - other.bx)
            .abs()
            .max((self.bz - other.bz).abs())
            .max((self.j - other.j).abs())
    }
}

/// Piecewise-linear function given by breakpoints `(t, value)`, held constant
/// outside the breakpoint range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidProgram("no breakpoints".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidProgram("non-finite breakpoint".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidProgram(
                "breakpoint times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64, duration: f64) -> Self {
        Self {
            points: vec![(0.0, value), (duration, value)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = pts.partition_point(|p| p.0 <= t) - 1;
        let (t0, v0) = pts[k];
        let (t1, v1) = pts[k + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = Error;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

/// Tabulated device curves A(s), B(s) in GHz, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCurves {
    samples: Vec<CurvePoint>,
}

const SYNTHETIC_CURVES: &str = include_str!("../data/device_curves_synthetic.csv");

impl DeviceCurves {
    pub fn new(samples: Vec<CurvePoint>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidCurves(format!(
                "need at least 2 rows, got {}",
                samples.len()
            )));
        }
        for p in &samples {
            if !(0.0..=1.0).contains(&p.s) {
                return Err(Error::InvalidCurves(format!("s = {} outside [0, 1]", p.s)));
            }
            if !(p.a >= 0.0 && p.b >= 0.0) || !p.a.is_finite() || !p.b.is_finite() {
                return Err(Error::InvalidCurves(format!(
                    "negative or non-finite frequency at s = {}",
                    p.s
                )));
            }
        }
        if samples.windows(2).any(|w| w[1].s <= w[0].s) {
            return Err(Error::InvalidCurves("s must be strictly increasing".into()));
        }
        if samples[0].s != 0.0 || samples[samples.len() - 1].s != 1.0 {
            return Err(Error::InvalidCurves("s must span exactly [0, 1]".into()));
        }
        if samples.windows(2).any(|w| w[1].a > w[0].a) {
            return Err(Error::InvalidCurves("A(s) must be non-increasing".into()));
        }
        if samples.windows(2).any(|w| w[1].b < w[0].b) {
            return Err(Error::InvalidCurves("B(s) must be non-decreasing".into()));
        }
        Ok(Self { samples })
    }

    /// Parse CSV rows `s,A_GHz,B_GHz` after a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            samples.push(CurvePoint {
                s: num(cols[0])?,
                a: num(cols[1])?,
                b: num(cols[2])?,
            });
        }
        Self::new(samples)
    }

    /// The synthetic monotone curve pair shipped with the crate
    /// (A: 6 → 0.01 GHz, B: 0.1 → 9 GHz).
    pub fn synthetic() -> Self {
        Self::from_csv(SYNTHETIC_CURVES.as_bytes()).expect("bundled curves are valid")
    }

    pub fn samples(&self) -> &[CurvePoint] {
        &self.samples
    }

    /// (A(s), B(s)) by linear interpolation; s is clamped to [0, 1].
    pub fn at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        let pts = &self.samples;
        let k = (pts.partition_point(|p| p.s <= s)).clamp(1, pts.len() - 1) - 1;
        let (p0, p1) = (pts[k], pts[k + 1]);
        let w = (s - p0.s) / (p1.s - p0.s);
        (p0.a + (p1.a - p0.a) * w, p0.b + (p1.b - p0.b) * w)
    }
}

/// User-programmable schedule: s(t), g(t) and a fixed coupler value J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProgram {
    pub s_of_t: PiecewiseLinear,
    pub g_of_t: PiecewiseLinear,
    pub j_coupler: f64,
    pub duration: f64,
}

impl ControlProgram {
    pub fn new(
        s_of_t: PiecewiseLinear,
        g_of_t: PiecewiseLinear,
        j_coupler: f64,
        duration: f64,
    ) -> Result<Self> {
        let program = Self {
            s_of_t,
            g_of_t,
            j_coupler,
            duration,
        };
        program.validate()?;
        Ok(program)
    }

    /// Forward anneal s(t) = t/τ at g = 0.
    pub fn forward_ramp(tau: f64, j_coupler: f64) -> Result<Self> {
        Self::new(
            PiecewiseLinear::new(vec![(0.0, 0.0), (tau, 1.0)])?,
            PiecewiseLinear::constant(0.0, tau),
            j_coupler,
            tau,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidProgram(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.j_coupler.is_finite() {
            return Err(Error::InvalidProgram("non-finite coupler".into()));
        }
        for (name, f) in [("s(t)", &self.s_of_t), ("g(t)", &self.g_of_t)] {
            if f.start() != 0.0 || f.end() != self.duration {
                return Err(Error::InvalidProgram(format!(
                    "{name} breakpoints must span [0, {}], got [{}, {}]",
                    self.duration,
                    f.start(),
                    f.end()
                )));
            }
        }
        if self
            .s_of_t
            .points()
            .iter()
            .any(|&(_, s)| !(0.0..=1.0).contains(&s))
        {
            return Err(Error::InvalidProgram("s(t) must stay within [0, 1]".into()));
        }
        Ok(())
    }

    /// Device-mode composition at time t.
    pub fn fields_at(&self, curves: &DeviceCurves, t: f64) -> FieldSample {
        let (a, b) = curves.at(self.s_of_t.eval(t));
        FieldSample {
            bx: a / 2.0,
            bz: b * self.g_of_t.eval(t) / 2.0,
            j: b * self.j_coupler / 2.0,
        }
    }
}

/// Sample times 0, dt, 2dt, …, with the final sample exactly at `duration`.
fn sample_times(duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if duration == 0.0 {
        return Ok(vec![0.0]);
    }
    if dt > duration {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} us exceeds duration {duration} us"
        )));
    }
    let steps = duration / dt;
    let n = steps.round();
    let mut times: Vec<f64> = if (steps - n).abs() < 1e-9 * steps.max(1.0) {
        (0..=n as usize).map(|k| k as f64 * dt).collect()
    } else {
        let mut v: Vec<f64> = (0..=steps.floor() as usize).map(|k| k as f64 * dt).collect();
        v.push(duration);
        v
    };
    let last = times.len() - 1;
    times[last] = duration;
    Ok(times)
}

/// Compile a device-mode program into a sampled field path.
pub fn compile_path(curves: &DeviceCurves, program: &ControlProgram, dt: f64) -> Result<FieldPath> {
    program.validate()?;
    let times = sample_times(program.duration, dt)?;
    let fields = times.iter().map(|&t| program.fields_at(curves, t)).collect();
    FieldPath::new(times, fields)
}

/// Direct-mode breakpoints for each channel (times in μs, values in GHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectPath {
    pub bx: PiecewiseLinear,
    pub bz: PiecewiseLinear,
    pub j: PiecewiseLinear,
}

impl DirectPath {
    pub fn duration(&self) -> f64 {
        self.bx.end().max(self.bz.end()).max(self.j.end())
    }

    pub fn fields_at(&self, t: f64) -> FieldSample {
        FieldSample {
            bx: self.bx.eval(t),
            bz: self.bz.eval(t),
            j: self.j.eval(t),
        }
    }

    pub fn compile(&self, dt: f64) -> Result<FieldPath> {
        let times = sample_times(self.duration(), dt)?;
        let fields = times.iter().map(|&t| self.fields_at(t)).collect();
        FieldPath::new(times, fields)
    }
}

/// Time-discretized effective field schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPath {
    times: Vec<f64>,
    fields: Vec<FieldSample>,
}

impl FieldPath {
    pub fn new(times: Vec<f64>, fields: Vec<FieldSample>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        if times.len() != fields.len() {
            return Err(Error::InvalidPath(format!(
                "{} times but {} field samples",
                times.len(),
                fields.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!("path must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath("times must be strictly increasing".into()));
        }
        if fields
            .iter()
            .any(|f| !f.bx.is_finite() || !f.bz.is_finite() || !f.j.is_finite())
        {
            return Err(Error::InvalidPath("non-finite field value".into()));
        }
        if fields.iter().any(|f| f.bx < 0.0) {
            return Err(Error::InvalidPath("transverse field must be non-negative".into()));
        }
        Ok(Self { times, fields })
    }

    /// Constant fields held from 0 to `duration`, sampled every `dt`.
    pub fn constant(fields: FieldSample, duration: f64, dt: f64) -> Result<Self> {
        let times = sample_times(duration, dt)?;
        let n = times.len();
        Self::new(times, vec![fields; n])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[FieldSample] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn first(&self) -> &FieldSample {
        &self.fields[0]
    }

    pub fn last(&self) -> &FieldSample {
        &self.fields[self.fields.len() - 1]
    }

    /// Piecewise-linear interpolation, clamped at the ends.
    pub fn at(&self, t: f64) -> FieldSample {
        if t <= self.times[0] {
            return self.fields[0];
        }
        if t >= self.duration() {
            return *self.last();
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.fields[k].lerp(&self.fields[k + 1], w)
    }

    pub fn is_closed_cycle(&self) -> bool {
        self.first().max_abs_diff(self.last()) <= CYCLE_TOLERANCE
    }

    pub fn max_bx(&self) -> f64 {
        self.fields.iter().map(|f| f.bx).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_bx(&self) -> f64 {
        self.fields.iter().map(|f| f.bx).fold(f64::INFINITY, f64::min)
    }

    /// Time at which the transverse field starts rising towards its global
    /// maximum: the last sample before the maximum whose B_x still equals the
    /// path's minimum. `None` when B_x never rises.
    pub fn bx_pulse_onset(&self) -> Option<f64> {
        let min = self.min_bx();
        let max = self.max_bx();
        if max - min <= CYCLE_TOLERANCE {
            return None;
        }
        let kmax = self.fields.iter().position(|f| f.bx == max)?;
        (0..=kmax)
            .rev()
            .find(|&k| self.fields[k].bx - min <= CYCLE_TOLERANCE)
            .map(|k| self.times[k])
    }

    /// A copy of this path with B_x clamped from below.
    pub fn with_bx_floor(&self, floor: f64) -> FieldPath {
        FieldPath {
            times: self.times.clone(),
            fields: self
                .fields
                .iter()
                .map(|f| FieldSample { bx: f.bx.max(floor), ..*f })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_us,Bx_GHz,Bz_GHz,J_GHz")?;
        for (t, f) in self.times.iter().zip(&self.fields) {
            writeln!(w, "{t},{},{},{}", f.bx, f.bz, f.j)?;
        }
        Ok(())
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut fields = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", lineno + 1)));
            }
            times.push(vals[0]);
            fields.push(FieldSample::new(vals[1], vals[2], vals[3]));
        }
        Self::new(times, fields)
    }
}

/// Parameters of the erasure presets. Breakpoint positions are fractions of
/// the protocol duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetParams {
    /// Coupling at the start and end of the cycle (ferromagnetic side), GHz.
    pub j_high: f64,
    /// Coupling at the turning point (paramagnetic side), GHz.
    pub j_low: f64,
    /// 𝒥 holds at `j_high` until this fraction of the duration …
    pub j_drop: f64,
    /// … reaches `j_low` here …
    pub j_turn: f64,
    /// … and is back at `j_high` from here on.
    pub j_back: f64,
    /// Longitudinal field peak, GHz.
    pub bz_peak: f64,
    /// B_z is zero before this fraction of the duration …
    pub bz_on: f64,
    /// … peaks here …
    pub bz_top: f64,
    /// … and is back to zero from here on.
    pub bz_off: f64,
    /// Transverse field outside the quantum pulse (also the classical value), GHz.
    pub bx_floor: f64,
    /// Quantum pulse peak, GHz.
    pub bx_peak: f64,
    /// Pulse window as fractions of the duration; the peak sits at its centre.
    pub pulse_window: (f64, f64),
    /// Sample spacing of the compiled preset, μs.
    pub dt: f64,
}

/// Classical presets keep B_x at or below this value.
pub const CLASSICAL_BX_CAP: f64 = 0.02;

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            j_high: 0.70,
            j_low: 0.15,
            j_drop: 0.3,
            j_turn: 0.5,
            j_back: 0.7,
            bz_peak: 0.20,
            bz_on: 0.3,
            bz_top: 0.5,
            bz_off: 0.9,
            bx_floor: 0.01,
            bx_peak: 0.50,
            pulse_window: (0.3, 0.7),
            dt: 1.0,
        }
    }
}

impl PresetParams {
    fn check(&self, duration: f64) -> Result<()> {
        if !(duration >= 10.0) {
            return Err(Error::InvalidParameter(format!(
                "preset duration must be at least 10 us, got {duration}"
            )));
        }
        let fracs = [
            self.j_drop,
            self.j_turn,
            self.j_back,
            self.bz_on,
            self.bz_top,
            self.bz_off,
            self.pulse_window.0,
            self.pulse_window.1,
        ];
        if fracs.iter().any(|f| !(0.0 < *f && *f < 1.0)) {
            return Err(Error::InvalidParameter(
                "preset breakpoint fractions must lie in (0, 1)".into(),
            ));
        }
        if !(self.bz_on < self.bz_top && self.bz_top < self.bz_off)
            || !(self.j_drop < self.j_turn && self.j_turn < self.j_back)
            || !(self.pulse_window.0 < self.pulse_window.1)
        {
            return Err(Error::InvalidParameter("preset breakpoints out of order".into()));
        }
        if !(self.bx_floor > 0.0 && self.bx_floor <= CLASSICAL_BX_CAP) {
            return Err(Error::InvalidParameter(format!(
                "bx_floor must lie in (0, {CLASSICAL_BX_CAP}] GHz"
            )));
        }
        Ok(())
    }

    fn shared_channels(&self, duration: f64) -> Result<(PiecewiseLinear, PiecewiseLinear)> {
        let d = duration;
        let j = PiecewiseLinear::new(vec![
            (0.0, self.j_high),
            (self.j_drop * d, self.j_high),
            (self.j_turn * d, self.j_low),
            (self.j_back * d, self.j_high),
            (d, self.j_high),
        ])?;
        let bz = PiecewiseLinear::new(vec![
            (0.0, 0.0),
            (self.bz_on * d, 0.0),
            (self.bz_top * d, self.bz_peak),
            (self.bz_off * d, 0.0),
            (d, 0.0),
        ])?;
        Ok((j, bz))
    }

    pub fn classical_direct(&self, duration: f64) -> Result<DirectPath> {
        self.check(duration)?;
        let (j, bz) = self.shared_channels(duration)?;
        Ok(DirectPath {
            bx: PiecewiseLinear::constant(self.bx_floor, duration),
            bz,
            j,
        })
    }

    pub fn quantum_direct(&self, duration: f64) -> Result<DirectPath> {
        self.check(duration)?;
        let (j, bz) = self.shared_channels(duration)?;
        let (lo, hi) = self.pulse_window;
        let bx = PiecewiseLinear::new(vec![
            (0.0, self.bx_floor),
            (lo * duration, self.bx_floor),
            (0.5 * (lo + hi) * duration, self.bx_peak),
            (hi * duration, self.bx_floor),
            (duration, self.bx_floor),
        ])?;
        Ok(DirectPath { bx, bz, j })
    }

    pub fn classical(&self, duration: f64) -> Result<FieldPath> {
        self.classical_direct(duration)?.compile(self.dt)
    }

    pub fn quantum(&self, duration: f64) -> Result<FieldPath> {
        self.quantum_direct(duration)?.compile(self.dt)
    }
}

/// Classical erasure cycle with default parameters.
pub fn classical_preset(duration: f64) -> Result<FieldPath> {
    PresetParams::default().classical(duration)
}

/// Quantum erasure cycle with default parameters.
pub fn quantum_preset(duration: f64) -> Result<FieldPath> {
    PresetParams::default().quantum(duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{kt_erg, PLANCK};

    /// Critical coupling of the square-lattice Ising model at the default
    /// bath temperature (39 mK), from kT = 2h𝒥_C / ln(1+√2).
    fn jc_at_39mk() -> f64 {
        kt_erg(39.0) * (1.0 + 2f64.sqrt()).ln() / (2.0 * PLANCK * 1e9)
    }

    #[test]
    fn minimal_curves_load() {
        let c = DeviceCurves::from_csv("s,A,B\n0,6,0.1\n1,0.01,9\n".as_bytes()).unwrap();
        assert_eq!(c.samples().len(), 2);
        let (a, b) = c.at(0.5);
        assert!((a - 3.005).abs() < 1e-12 && (b - 4.55).abs() < 1e-12);
    }

    #[test]
    fn curve_validation_errors() {
        let bad = |s: &str| DeviceCurves::from_csv(s.as_bytes()).is_err();
        assert!(bad("s,A,B\n0,6,0.1\n0.5,5,1\n0.4,4,2\n1,0.01,9\n"));
        assert!(bad("s,A,B\n0,6,0.1\n"));
        assert!(bad("s,A,B\n0,6,-0.1\n1,0.01,9\n"));
        assert!(bad("s,A,B\n-0.1,6,0.1\n1,0.01,9\n"));
        assert!(bad("s,A,B\n0,6,0.1\n1.2,0.01,9\n"));
    }

    #[test]
    fn shipped_curves_have_annealer_shape() {
        let c = DeviceCurves::synthetic();
        let (a0, b0) = c.at(0.0);
        let (a1, b1) = c.at(1.0);
        assert!(a0 > a1 && b1 > b0);
        assert_eq!((a0, b0, a1, b1), (6.0, 0.1, 0.01, 9.0));
    }

    #[test]
    fn constant_program_compiles_to_constant_fields() {
        let curves = DeviceCurves::synthetic();
        let j = 0.1;
        let p = ControlProgram::new(
            PiecewiseLinear::constant(1.0, 5.0),
            PiecewiseLinear::constant(0.0, 5.0),
            j,
            5.0,
        )
        .unwrap();
        let path = compile_path(&curves, &p, 0.5).unwrap();
        assert_eq!(path.len(), 11);
        let (a1, b1) = curves.at(1.0);
        for f in path.fields() {
            assert_eq!(*f, FieldSample::new(a1 / 2.0, 0.0, b1 * j / 2.0));
        }
    }

    #[test]
    fn forward_ramp_is_monotone() {
        let curves = DeviceCurves::synthetic();
        let p = ControlProgram::forward_ramp(200.0, 0.08).unwrap();
        let path = compile_path(&curves, &p, 1.0).unwrap();
        assert_eq!(path.len(), 201);
        for w in path.fields().windows(2) {
            assert!(w[1].bx <= w[0].bx);
            assert!(w[1].j >= w[0].j);
            assert_eq!(w[1].bz, 0.0);
        }
    }

    #[test]
    fn compile_rejects_bad_dt() {
        let curves = DeviceCurves::synthetic();
        let p = ControlProgram::forward_ramp(10.0, 0.1).unwrap();
        assert!(compile_path(&curves, &p, 20.0).is_err());
        assert!(compile_path(&curves, &p, 0.0).is_err());
    }

    #[test]
    fn device_identity_holds() {
        let curves = DeviceCurves::synthetic();
        let j = 0.25;
        let p = ControlProgram::new(
            PiecewiseLinear::new(vec![(0.0, 0.2), (4.0, 0.9), (10.0, 0.5)]).unwrap(),
            PiecewiseLinear::new(vec![(0.0, 0.0), (3.0, 0.3), (10.0, -0.2)]).unwrap(),
            j,
            10.0,
        )
        .unwrap();
        let path = compile_path(&curves, &p, 0.25).unwrap();
        for (t, f) in path.times().iter().zip(path.fields()) {
            let (a, b) = curves.at(p.s_of_t.eval(*t));
            assert_eq!(f.bx, a / 2.0);
            assert_eq!(f.bz, b * p.g_of_t.eval(*t) / 2.0);
            assert_eq!(f.j, b * j / 2.0);
            let ratio = f.bz / f.j;
            assert!((ratio - p.g_of_t.eval(*t) / j).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_agrees_at_coarse_times() {
        let curves = DeviceCurves::synthetic();
        let p = ControlProgram::forward_ramp(37.0, 0.3).unwrap();
        let coarse = compile_path(&curves, &p, 0.5).unwrap();
        let fine = compile_path(&curves, &p, 0.25).unwrap();
        let again = compile_path(&curves, &p, 0.5).unwrap();
        assert_eq!(coarse, again);
        for (t, f) in coarse.times().iter().zip(coarse.fields()) {
            assert_eq!(fine.at(*t), *f);
        }
    }

    #[test]
    fn classical_preset_shape() {
        let path = classical_preset(40.0).unwrap();
        assert_eq!(path.len(), 41);
        assert!(path.times().windows(2).all(|w| w[1] - w[0] == 1.0));
        assert!(path.is_closed_cycle());
        assert!(path.max_bx() <= CLASSICAL_BX_CAP);
        let jc = jc_at_39mk();
        let f0 = path.first();
        assert_eq!(f0.bz, 0.0);
        assert!(f0.j > jc);
        assert!(path.last().j > jc);
        let jmin = path.fields().iter().map(|f| f.j).fold(f64::INFINITY, f64::min);
        assert!(jmin < jc);
        // B_z peaks where 𝒥 is smallest and is positive whenever 𝒥 crosses 𝒥_C
        let kpeak = path
            .fields()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.bz.total_cmp(&b.1.bz))
            .unwrap()
            .0;
        let kmin = path
            .fields()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.j.total_cmp(&b.1.j))
            .unwrap()
            .0;
        assert!((kpeak as i64 - kmin as i64).abs() <= 2);
        for w in path.fields().windows(2) {
            if (w[0].j - jc) * (w[1].j - jc) <= 0.0 {
                assert!(w[0].bz > 0.0 && w[1].bz > 0.0);
            }
        }
    }

    #[test]
    fn quantum_preset_shape() {
        let c = classical_preset(40.0).unwrap();
        let q = quantum_preset(40.0).unwrap();
        assert!(q.is_closed_cycle());
        assert!(q.first().bx <= 0.02 && q.last().bx <= 0.02);
        assert!(q.max_bx() > 10.0 * c.max_bx());
        for (fc, fq) in c.fields().iter().zip(q.fields()) {
            assert!((fc.j - fq.j).abs() <= 0.05 * fc.j.abs());
            assert!((fc.bz - fq.bz).abs() <= 0.05 * fc.bz.abs().max(1e-12));
        }
        assert_eq!(q.bx_pulse_onset(), Some(12.0));
        assert_eq!(c.bx_pulse_onset(), None);
        // pulse confined to the middle window
        for (t, f) in q.times().iter().zip(q.fields()) {
            if *t <= 12.0 || *t >= 28.0 {
                assert_eq!(f.bx, 0.01);
            }
        }
    }

    #[test]
    fn presets_reject_short_duration() {
        assert!(classical_preset(5.0).is_err());
        assert!(quantum_preset(9.99).is_err());
    }

    #[test]
    fn path_csv_round_trip() {
        let q = quantum_preset(20.0).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_us,Bx_GHz,Bz_GHz,J_GHz\n"));
        assert_eq!(FieldPath::from_csv(buf.as_slice()).unwrap(), q);
    }

    #[test]
    fn path_validation() {
        assert!(FieldPath::new(vec![], vec![]).is_err());
        assert!(FieldPath::new(vec![1.0], vec![FieldSample::default()]).is_err());
        assert!(FieldPath::new(
            vec![0.0, 1.0, 1.0],
            vec![FieldSample::default(); 3]
        )
        .is_err());
    }
}
