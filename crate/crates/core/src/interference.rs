//! Interference generators: multi-tone, RRC-shaped QPSK bursts and a CP-OFDM
//! surrogate for a 5G downlink, plus SIR scaling and temporal gating.
//!
//! Generators return unit-power records; [`scale_to_sir`] sets the final level
//! against a clean reference and [`apply_overlap`] restricts the active window.

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{invalid, Result};
use crate::rng::{rng_from_seed, SimRng};
use crate::signal::{db_to_linear, power, ComplexSignal};
use crate::Complex64;

/// Continuous-wave tones on a uniform grid across the sweep band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub n_tones: usize,
    pub sir_db: f64,
    /// Band the grid spans, normally the sweep bandwidth.
    pub band_hz: f64,
    /// Explicit tone frequencies; overrides the grid when present.
    #[serde(default)]
    pub frequencies_hz: Option<Vec<f64>>,
    pub seed: u64,
}

impl ToneSpec {
    /// Grid cell centres `-B/2 + (k + 1/2) B / n`, all strictly inside the band.
    pub fn frequencies(&self) -> Vec<f64> {
        match &self.frequencies_hz {
            Some(f) => f.clone(),
            None => (0..self.n_tones)
                .map(|k| {
                    -self.band_hz / 2.0 + (k as f64 + 0.5) * self.band_hz / self.n_tones as f64
                })
                .collect(),
        }
    }
}

/// Root-raised-cosine QPSK burst at symbol rate equal to its bandwidth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpskBurstSpec {
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub center_hz: f64,
    /// Active length, samples.
    pub duration: usize,
    #[serde(default)]
    pub start_offset: usize,
    pub sir_db: f64,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_span")]
    pub span_symbols: usize,
    pub seed: u64,
}

fn default_rolloff() -> f64 {
    0.35
}

fn default_span() -> usize {
    8
}

/// Cyclic-prefix OFDM with QPSK on every active subcarrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSpec {
    #[serde(default = "default_scs")]
    pub subcarrier_spacing_hz: f64,
    pub channel_bw_hz: f64,
    #[serde(default = "default_ofdm_fs")]
    pub sample_rate_hz: f64,
    /// Number of OFDM symbols; `None` fills the record.
    #[serde(default)]
    pub n_symbols: Option<usize>,
    #[serde(default = "default_cp")]
    pub cp_fraction: f64,
    pub sir_db: f64,
    pub seed: u64,
}

fn default_scs() -> f64 {
    15e3
}

fn default_ofdm_fs() -> f64 {
    7.5e6
}

fn default_cp() -> f64 {
    0.07
}

const MAX_OFDM_SAMPLES: usize = 1 << 24;

impl OfdmSpec {
    pub fn fft_size(&self) -> usize {
        (self.sample_rate_hz / self.subcarrier_spacing_hz).round() as usize
    }

    /// Active subcarriers, forced even so they can be centred.
    pub fn active_subcarriers(&self) -> usize {
        let k = (self.channel_bw_hz.min(self.sample_rate_hz) / self.subcarrier_spacing_hz).floor()
            as usize;
        k - k % 2
    }

    pub fn cp_len(&self) -> usize {
        (self.cp_fraction * self.fft_size() as f64).round() as usize
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size() + self.cp_len()
    }
}

/// Fraction of the chirp during which an interferer is active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapSpec {
    pub fraction: f64,
}

impl OverlapSpec {
    pub fn full() -> Self {
        Self { fraction: 1.0 }
    }

    pub fn active_len(&self, len: usize) -> usize {
        ((self.fraction * len as f64).round() as usize).min(len)
    }
}

/// Which samples the interference power is averaged over when scaling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SirReference {
    /// Both powers averaged over the whole record.
    #[default]
    FullRecord,
    /// Interference power averaged over its nonzero samples only.
    ActiveWindow,
}

/// Any of the supported interferers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterferenceSpec {
    Tones(ToneSpec),
    Qpsk(QpskBurstSpec),
    Ofdm(OfdmSpec),
}

impl InterferenceSpec {
    pub fn sir_db(&self) -> f64 {
        match self {
            Self::Tones(s) => s.sir_db,
            Self::Qpsk(s) => s.sir_db,
            Self::Ofdm(s) => s.sir_db,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Tones(_) => "tones",
            Self::Qpsk(_) => "qpsk",
            Self::Ofdm(_) => "ofdm",
        }
    }

    /// Unit-power record of `len` samples before SIR scaling and gating.
    pub fn generate(&self, len: usize, fs: f64) -> Result<ComplexSignal> {
        match self {
            Self::Tones(s) => gen_tones(s, len, fs),
            Self::Qpsk(s) => gen_qpsk_burst(s, len, fs),
            Self::Ofdm(s) => {
                if (s.sample_rate_hz - fs).abs() > 1e-6 * fs {
                    return Err(invalid(format!(
                        "OFDM sample rate {} differs from record rate {fs}",
                        s.sample_rate_hz
                    )));
                }
                gen_ofdm_burst(s, len)
            }
        }
    }
}

fn normalize_over(samples: &mut [Complex64], active: Range<usize>) -> Result<()> {
    let p = power(&samples[active]);
    if !(p > 0.0) {
        return Err(invalid("generated interference has zero power"));
    }
    let g = p.sqrt().recip();
    samples.iter_mut().for_each(|s| *s *= g);
    Ok(())
}

/// Sum of complex exponentials with independent uniform phases, unit power.
pub fn gen_tones(spec: &ToneSpec, len: usize, fs: f64) -> Result<ComplexSignal> {
    if len == 0 {
        return Err(invalid("record length must be positive"));
    }
    let freqs = spec.frequencies();
    if freqs.is_empty() {
        return Err(invalid("at least one tone is required"));
    }
    for &f in &freqs {
        if !(f.abs() < fs / 2.0) {
            return Err(invalid(format!("tone at {f} Hz is not below fs/2 = {}", fs / 2.0)));
        }
        if spec.frequencies_hz.is_none() && !(f.abs() < spec.band_hz / 2.0) {
            return Err(invalid(format!("tone at {f} Hz outside the sweep band")));
        }
    }
    let mut rng = rng_from_seed(spec.seed);
    let phases: Vec<f64> = freqs.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let mut samples: Vec<Complex64> = (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            freqs
                .iter()
                .zip(&phases)
                .map(|(&f, &ph)| Complex64::from_polar(1.0, 2.0 * PI * f * t + ph))
                .sum()
        })
        .collect();
    normalize_over(&mut samples, 0..len)?;
    ComplexSignal::new(samples, fs)
}

/// Root-raised-cosine impulse response at time `t` in symbol periods.
pub fn rrc_pulse(t: f64, rolloff: f64) -> f64 {
    let b = rolloff;
    if t.abs() < 1e-12 {
        return 1.0 + b * (4.0 / PI - 1.0);
    }
    if b > 0.0 && (t.abs() - 1.0 / (4.0 * b)).abs() < 1e-9 {
        let a = PI / (4.0 * b);
        return b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
    let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
    num / den
}

fn qpsk_symbol(rng: &mut SimRng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bits: u8 = rng.random_range(0..4);
    Complex64::new(
        if bits & 1 == 0 { s } else { -s },
        if bits & 2 == 0 { s } else { -s },
    )
}

/// RRC-shaped QPSK burst, frequency-shifted to `center_hz` and zero outside
/// `[start_offset, start_offset + duration)`. Unit power over the active window.
pub fn gen_qpsk_burst(spec: &QpskBurstSpec, len: usize, fs: f64) -> Result<ComplexSignal> {
    if !(spec.bandwidth_hz > 0.0) || spec.bandwidth_hz > fs {
        return Err(invalid(format!(
            "QPSK bandwidth {} Hz must be in (0, fs = {fs}]",
            spec.bandwidth_hz
        )));
    }
    if spec.duration == 0 || spec.start_offset + spec.duration > len {
        return Err(invalid(format!(
            "burst window [{}, {}) does not fit a record of {len}",
            spec.start_offset,
            spec.start_offset + spec.duration
        )));
    }
    if !(0.0..=1.0).contains(&spec.rolloff) || spec.span_symbols == 0 {
        return Err(invalid("RRC roll-off must be in [0, 1] with a positive span"));
    }
    let sps = fs / spec.bandwidth_hz;
    let half_span = spec.span_symbols as f64 / 2.0;
    let n_sym = (spec.duration as f64 / sps).ceil() as i64;
    let first = -(half_span.ceil() as i64);
    let last = n_sym + half_span.ceil() as i64;
    let mut rng = rng_from_seed(spec.seed);
    let symbols: Vec<Complex64> = (first..=last).map(|_| qpsk_symbol(&mut rng)).collect();

    let mut samples = vec![Complex64::new(0.0, 0.0); len];
    for i in 0..spec.duration {
        let t_sym = i as f64 / sps;
        let lo = ((t_sym - half_span).ceil() as i64).max(first);
        let hi = ((t_sym + half_span).floor() as i64).min(last);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in lo..=hi {
            acc += symbols[(k - first) as usize] * rrc_pulse(t_sym - k as f64, spec.rolloff);
        }
        let n = spec.start_offset + i;
        let shift = Complex64::from_polar(1.0, 2.0 * PI * spec.center_hz * n as f64 / fs);
        samples[n] = acc * shift;
    }
    normalize_over(&mut samples, spec.start_offset..spec.start_offset + spec.duration)?;
    ComplexSignal::new(samples, fs)
}

/// CP-OFDM record truncated or zero-padded to `len`; unit power over the
/// portion occupied by symbols.
pub fn gen_ofdm_burst(spec: &OfdmSpec, len: usize) -> Result<ComplexSignal> {
    if len == 0 {
        return Err(invalid("record length must be positive"));
    }
    if !(spec.subcarrier_spacing_hz > 0.0 && spec.sample_rate_hz > 0.0 && spec.channel_bw_hz > 0.0)
    {
        return Err(invalid("OFDM rates and bandwidth must be positive"));
    }
    let n_fft = spec.fft_size();
    if (n_fft as f64 * spec.subcarrier_spacing_hz - spec.sample_rate_hz).abs()
        > 1e-6 * spec.sample_rate_hz
    {
        return Err(invalid("sample rate must be an integer multiple of the subcarrier spacing"));
    }
    if !(0.0..1.0).contains(&spec.cp_fraction) {
        return Err(invalid("cyclic prefix fraction must be in [0, 1)"));
    }
    let k_active = spec.active_subcarriers();
    if k_active == 0 {
        return Err(invalid("channel bandwidth leaves no active subcarriers"));
    }
    let sym_len = spec.symbol_len();
    let n_symbols = spec.n_symbols.unwrap_or_else(|| len.div_ceil(sym_len));
    if n_symbols == 0 || n_symbols.saturating_mul(sym_len) > MAX_OFDM_SAMPLES {
        return Err(invalid(format!(
            "{n_symbols} symbols of {sym_len} samples exceeds the {MAX_OFDM_SAMPLES}-sample bound"
        )));
    }
    let cp = spec.cp_len();
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let mut rng = rng_from_seed(spec.seed);
    let mut out = Vec::with_capacity(n_symbols * sym_len);
    let mut grid = vec![Complex64::new(0.0, 0.0); n_fft];
    for _ in 0..n_symbols {
        grid.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        for j in 0..k_active {
            let k = j as i64 - (k_active / 2) as i64;
            grid[k.rem_euclid(n_fft as i64) as usize] = qpsk_symbol(&mut rng);
        }
        ifft.process(&mut grid);
        out.extend_from_slice(&grid[n_fft - cp..]);
        out.extend_from_slice(&grid);
    }
    let active = out.len().min(len);
    out.resize(len, Complex64::new(0.0, 0.0));
    normalize_over(&mut out, 0..active)?;
    ComplexSignal::new(out, spec.sample_rate_hz)
}

/// Gain that brings `intf` to the requested SIR against `clean`.
pub fn sir_gain(
    clean: &ComplexSignal,
    intf: &ComplexSignal,
    sir_db: f64,
    reference: SirReference,
) -> Result<f64> {
    clean.check_compatible(intf)?;
    if !sir_db.is_finite() {
        return Err(invalid(format!("SIR must be finite, got {sir_db}")));
    }
    let p_intf = match reference {
        SirReference::FullRecord => intf.power(),
        SirReference::ActiveWindow => {
            let active: Vec<Complex64> =
                intf.samples().iter().copied().filter(|s| s.norm_sqr() > 0.0).collect();
            power(&active)
        }
    };
    if !(p_intf > 0.0) {
        return Err(invalid("interference has zero power"));
    }
    Ok((clean.power() / (p_intf * db_to_linear(sir_db))).sqrt())
}

/// Scales `intf` so that `power(clean) / power(g * intf) = 10^(sir_db/10)`,
/// with both powers averaged over the full record.
pub fn scale_to_sir(clean: &ComplexSignal, intf: &ComplexSignal, sir_db: f64) -> Result<ComplexSignal> {
    scale_to_sir_with(clean, intf, sir_db, SirReference::FullRecord)
}

pub fn scale_to_sir_with(
    clean: &ComplexSignal,
    intf: &ComplexSignal,
    sir_db: f64,
    reference: SirReference,
) -> Result<ComplexSignal> {
    let g = sir_gain(clean, intf, sir_db, reference)?;
    Ok(intf.scaled(g))
}

/// Contiguous window of `round(fraction * len)` samples at a uniformly drawn start.
pub fn overlap_window(len: usize, spec: &OverlapSpec, rng: &mut SimRng) -> Result<Range<usize>> {
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(invalid(format!(
            "overlap fraction must be in [0, 1], got {}",
            spec.fraction
        )));
    }
    let active = spec.active_len(len);
    let start = if active < len { rng.random_range(0..=len - active) } else { 0 };
    Ok(start..start + active)
}

/// Zeroes the interference outside a random window covering the requested
/// fraction of the record.
pub fn apply_overlap(
    intf: &ComplexSignal,
    spec: &OverlapSpec,
    rng: &mut SimRng,
) -> Result<ComplexSignal> {
    let window = overlap_window(intf.len(), spec, rng)?;
    gate(intf, window)
}

pub fn gate(intf: &ComplexSignal, window: Range<usize>) -> Result<ComplexSignal> {
    let samples = intf
        .samples()
        .iter()
        .enumerate()
        .map(|(n, &s)| if window.contains(&n) { s } else { Complex64::new(0.0, 0.0) })
        .collect();
    ComplexSignal::new(samples, intf.fs())
}
