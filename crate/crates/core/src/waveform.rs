//! Triangular-sweep FMCW transmit waveform at complex baseband.
//!
//! The carrier is removed: the simulated waveform is `A_tx * exp(j*phi(t))`
//! whose instantaneous frequency rises linearly from `-B/2` to `+B/2` over the
//! first half of the sweep period and falls back over the second half. The
//! carrier frequency only enters through Doppler.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::signal::ComplexSignal;
use crate::Complex64;

/// Radar timing and amplitude parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarParams {
    /// Carrier frequency, Hz.
    pub fc_hz: f64,
    /// Sweep bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Full triangular period (upsweep plus downsweep), s.
    pub sweep_period_s: f64,
    /// Waveform sample rate, Hz.
    pub fs_hz: f64,
    /// Beat-processing sample rate, Hz. Must divide `fs_hz` by an integer.
    pub fs_beat_hz: f64,
    pub tx_amplitude: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            fc_hz: 4.3e9,
            bandwidth_hz: 7.5e6,
            sweep_period_s: 1e-3,
            fs_hz: 7.5e6,
            fs_beat_hz: 7.5e6,
            tx_amplitude: 1.0,
        }
    }
}

impl RadarParams {
    /// Sweep slope in Hz/s; `B` is swept in half a period.
    pub fn sweep_slope(&self) -> f64 {
        2.0 * self.bandwidth_hz / self.sweep_period_s
    }

    pub fn samples_per_chirp(&self) -> usize {
        (self.fs_hz * self.sweep_period_s).round() as usize
    }

    pub fn samples_per_half(&self) -> usize {
        self.samples_per_chirp() / 2
    }

    /// Integer decimation factor between the waveform and beat sample rates.
    pub fn decimation(&self) -> usize {
        (self.fs_hz / self.fs_beat_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fc_hz", self.fc_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("sweep_period_s", self.sweep_period_s),
            ("fs_hz", self.fs_hz),
            ("fs_beat_hz", self.fs_beat_hz),
            ("tx_amplitude", self.tx_amplitude),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.fs_hz < self.bandwidth_hz {
            return Err(invalid(format!(
                "sample rate {} Hz does not cover sweep bandwidth {} Hz",
                self.fs_hz, self.bandwidth_hz
            )));
        }
        let n = self.samples_per_chirp();
        if n < 4 || n % 2 != 0 {
            return Err(invalid(format!(
                "samples per chirp must be even and at least 4, got {n}"
            )));
        }
        let d = self.decimation();
        if d == 0 || (self.fs_hz / self.fs_beat_hz - d as f64).abs() > 1e-9 {
            return Err(invalid(format!(
                "fs_beat_hz {} must divide fs_hz {} by an integer",
                self.fs_beat_hz, self.fs_hz
            )));
        }
        if (n / 2) % d != 0 {
            return Err(invalid(format!(
                "half-sweep length {} is not a multiple of decimation {d}",
                n / 2
            )));
        }
        Ok(())
    }
}

fn check_time(t: f64, sweep_period: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(invalid(format!("time must be finite, got {t}")));
    }
    if !(sweep_period.is_finite() && sweep_period > 0.0) {
        return Err(invalid(format!("sweep period must be positive, got {sweep_period}")));
    }
    Ok(())
}

/// `+1` during the upsweep half of the period, `-1` during the downsweep.
pub fn sweep_sign(t: f64, sweep_period: f64) -> Result<f64> {
    check_time(t, sweep_period)?;
    let k = (t.rem_euclid(sweep_period) / (sweep_period / 2.0)).floor() as i64;
    Ok(if k % 2 == 0 { 1.0 } else { -1.0 })
}

/// Time since the start of the current half-sweep, in `[0, T_sw/2)`.
pub fn t_fold(t: f64, sweep_period: f64) -> Result<f64> {
    check_time(t, sweep_period)?;
    let half = sweep_period / 2.0;
    let f = t.rem_euclid(sweep_period).rem_euclid(half);
    // rem_euclid may round up to the modulus itself for tiny negative inputs
    Ok(if f >= half { 0.0 } else { f })
}

/// Baseband phase of the triangular sweep at time `t`, radians.
///
/// Within each half sweep the phase is `sign * 2*pi * (alpha/2 * u^2 - B/2 * u)`
/// with `u = t_fold(t)`; it is zero at every fold, so the waveform is continuous
/// and periodic.
pub fn chirp_phase(t: f64, params: &RadarParams) -> Result<f64> {
    let sign = sweep_sign(t, params.sweep_period_s)?;
    let u = t_fold(t, params.sweep_period_s)?;
    let alpha = params.sweep_slope();
    Ok(sign * 2.0 * PI * (0.5 * alpha * u * u - 0.5 * params.bandwidth_hz * u))
}

/// One full triangular period, upsweep first, `samples_per_chirp` samples.
pub fn generate_chirp(params: &RadarParams) -> Result<ComplexSignal> {
    params.validate()?;
    let n = params.samples_per_chirp();
    let samples = (0..n)
        .map(|i| {
            let phase = chirp_phase(i as f64 / params.fs_hz, params)?;
            Ok(Complex64::from_polar(params.tx_amplitude, phase))
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexSignal::new(samples, params.fs_hz)
}

/// Finite-difference frequency estimate between consecutive samples, Hz.
///
/// Element `n` is the frequency between samples `n` and `n + 1`, computed from
/// the wrapped phase increment, so the result has `len - 1` entries and is
/// valid for increments strictly inside `(-pi, pi)`.
pub fn instantaneous_frequency(sig: &ComplexSignal) -> Result<Vec<f64>> {
    let s = sig.samples();
    if s.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    if let Some(i) = s.iter().position(|x| x.norm_sqr() == 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "zero-magnitude sample at index {i} has no phase"
        )));
    }
    Ok(s.windows(2)
        .map(|w| (w[1] * w[0].conj()).arg() * sig.fs() / (2.0 * PI))
        .collect())
}
