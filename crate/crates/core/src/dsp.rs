//! Conventional altimeter processor: sweep split, dechirp, range profiles,
//! CA-CFAR detection and up/down averaging, plus PSLR, STFT and frame
//! segmentation diagnostics.
//!
//! Dechirping multiplies the received half-sweep by the conjugate of the
//! matching reference half. A ground return delayed by `tau` then appears at
//! beat frequency `-alpha * tau` on the upsweep and `+alpha * tau` on the
//! downsweep; range profiles fold the sign so both index positive range.
//! A Doppler shift `f_d` moves both beats by `+f_d`, which biases the two range
//! estimates in opposite directions and cancels in their average.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::signal::ComplexSignal;
use crate::waveform::{generate_chirp, RadarParams};
use crate::{Complex64, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[serde(alias = "none")]
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileOptions {
    pub window: Window,
    /// FFT length as a multiple of the beat length (zero padding).
    pub pad_factor: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { window: Window::Hann, pad_factor: 1 }
    }
}

/// Magnitude-squared spectrum of one dechirped half sweep over non-negative range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeProfile {
    pub magnitudes: Vec<f64>,
    /// Metres per bin, `c * fs_beat / (2 * alpha * n_fft)`.
    pub bin_spacing_m: f64,
    pub sweep_kind: SweepKind,
}

impl RangeProfile {
    pub fn range_of_bin(&self, bin: f64) -> f64 {
        bin * self.bin_spacing_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfarConfig {
    /// Training cells per side.
    pub n_train: usize,
    /// Guard cells per side.
    pub n_guard: usize,
    pub pfa: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self { n_train: 16, n_guard: 4, pfa: 1e-4 }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(invalid("CFAR needs at least one training cell per side"));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(invalid(format!("pfa must be in (0, 1), got {}", self.pfa)));
        }
        Ok(())
    }
}

/// Threshold multiplier `N (pfa^(-1/N) - 1)` for `N` averaged exponential cells.
pub fn cfar_scale(n_cells: usize, pfa: f64) -> f64 {
    let n = n_cells as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bin: usize,
    /// Range after parabolic sub-bin refinement.
    pub range_m: f64,
    pub power: f64,
    /// Cell power over the training-cell mean, dB.
    pub snr_est_db: f64,
}

/// How the altitude picks one detection per sweep when CFAR reports several.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Strongest,
    Nearest,
}

/// Upsweep and downsweep halves, in that order.
pub fn split_sweeps(rx: &ComplexSignal, params: &RadarParams) -> Result<(ComplexSignal, ComplexSignal)> {
    let n = params.samples_per_chirp();
    if rx.len() != n {
        return Err(invalid(format!("expected {n} samples per chirp, got {}", rx.len())));
    }
    Ok((rx.slice(0, n / 2)?, rx.slice(n / 2, n / 2)?))
}

/// `rx[n] * conj(ref[n])`.
pub fn dechirp(rx_half: &ComplexSignal, ref_half: &ComplexSignal) -> Result<ComplexSignal> {
    if rx_half.len() != ref_half.len() {
        return Err(invalid(format!(
            "dechirp length mismatch: {} vs {}",
            rx_half.len(),
            ref_half.len()
        )));
    }
    ComplexSignal::new(
        rx_half
            .samples()
            .iter()
            .zip(ref_half.samples())
            .map(|(r, x)| r * x.conj())
            .collect(),
        rx_half.fs(),
    )
}

/// Windowed-sinc low-pass followed by keeping every `factor`-th sample.
pub fn decimate(sig: &ComplexSignal, factor: usize) -> Result<ComplexSignal> {
    if factor == 0 {
        return Err(invalid("decimation factor must be positive"));
    }
    if factor == 1 {
        return Ok(sig.clone());
    }
    let half = 8 * factor;
    let cutoff = 0.5 / factor as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 { 2.0 * cutoff } else { (2.0 * PI * cutoff * m).sin() / (PI * m) };
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (2 * half) as f64).cos();
            sinc * w
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    let s = sig.samples();
    let out = (0..s.len() / factor)
        .map(|k| {
            let c = k * factor;
            taps.iter()
                .enumerate()
                .filter_map(|(i, t)| {
                    let j = c as i64 + i as i64 - half as i64;
                    (0..s.len() as i64).contains(&j).then(|| s[j as usize] * (t / gain))
                })
                .sum()
        })
        .collect();
    ComplexSignal::new(out, sig.fs() / factor as f64)
}

/// Windowed FFT power spectrum of a beat signal, mapped to range
/// `R = c f_beat / (2 alpha)`. The upsweep profile reads the negative-frequency
/// half so that both sweeps index positive range.
pub fn range_profile(
    beat: &ComplexSignal,
    params: &RadarParams,
    sweep: SweepKind,
    opts: ProfileOptions,
) -> Result<RangeProfile> {
    if beat.len() < 16 {
        return Err(invalid(format!("beat signal too short: {}", beat.len())));
    }
    if opts.pad_factor == 0 {
        return Err(invalid("pad_factor must be positive"));
    }
    let n = beat.len();
    let n_fft = n * opts.pad_factor;
    let w = opts.window.coefficients(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, (s, wi)) in buf.iter_mut().zip(beat.samples().iter().zip(&w)) {
        *b = s * wi;
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let magnitudes = (0..n_fft / 2)
        .map(|k| match sweep {
            SweepKind::Down => buf[k].norm_sqr(),
            SweepKind::Up => buf[(n_fft - k) % n_fft].norm_sqr(),
        })
        .collect();
    Ok(RangeProfile {
        magnitudes,
        bin_spacing_m: SPEED_OF_LIGHT * beat.fs() / (2.0 * params.sweep_slope() * n_fft as f64),
        sweep_kind: sweep,
    })
}

/// Training-cell mean for cell `i`. Windows that run off either end of the
/// profile are moved to the other side so the cell count stays `2 * n_train`
/// whenever the profile allows it.
fn training_mean(m: &[f64], i: usize, cfg: &CfarConfig) -> (f64, usize) {
    let len = m.len();
    let (t, g) = (cfg.n_train, cfg.n_guard);
    let left_avail = i.saturating_sub(g).min(t);
    let right_avail = len.saturating_sub(i + g + 1).min(t);
    let mut left = left_avail;
    let mut right = right_avail;
    if left < t {
        right = (right + t - left).min(len.saturating_sub(i + g + 1));
    }
    if right_avail < t {
        left = (left + t - right_avail).min(i.saturating_sub(g));
    }
    let mut sum = 0.0;
    for j in 0..left {
        sum += m[i - g - 1 - j];
    }
    for j in 0..right {
        sum += m[i + g + 1 + j];
    }
    let count = left + right;
    (if count > 0 { sum / count as f64 } else { 0.0 }, count)
}

/// Per-cell threshold crossings `m[i] > scale(N) * mean(training cells)`.
pub fn cfar_crossings(magnitudes: &[f64], cfg: &CfarConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let min_len = 2 * (cfg.n_train + cfg.n_guard) + 1;
    if magnitudes.len() <= min_len {
        return Err(invalid(format!(
            "profile of {} cells is too short for CFAR window of {min_len}",
            magnitudes.len()
        )));
    }
    Ok((0..magnitudes.len())
        .map(|i| {
            let (mean, n) = training_mean(magnitudes, i, cfg);
            n > 0 && magnitudes[i] > cfar_scale(n, cfg.pfa) * mean
        })
        .collect())
}

/// Offset of the vertex of the parabola through three dB values, in bins.
fn parabolic_offset(m: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= m.len() {
        return 0.0;
    }
    let (a, b, c) = (m[i - 1], m[i], m[i + 1]);
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return 0.0;
    }
    let (a, b, c) = (a.log10(), b.log10(), c.log10());
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

/// Cell-averaging CFAR. Each threshold crossing that is also a local maximum
/// becomes one detection with a parabolic sub-bin range estimate.
pub fn ca_cfar(profile: &RangeProfile, cfg: &CfarConfig) -> Result<Vec<Detection>> {
    let m = &profile.magnitudes;
    let hits = cfar_crossings(m, cfg)?;
    let mut out = Vec::new();
    for (i, &hit) in hits.iter().enumerate() {
        if !hit {
            continue;
        }
        let left_ok = i == 0 || m[i] >= m[i - 1];
        let right_ok = i + 1 == m.len() || m[i] > m[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let (mean, _) = training_mean(m, i, cfg);
        out.push(Detection {
            bin: i,
            range_m: profile.range_of_bin(i as f64 + parabolic_offset(m, i)),
            power: m[i],
            snr_est_db: 10.0 * (m[i] / mean).log10(),
        });
    }
    Ok(out)
}

fn select(dets: &[Detection], how: Selection, sweep: &'static str) -> Result<Detection> {
    let pick = match how {
        Selection::Strongest => dets.iter().max_by(|a, b| a.power.total_cmp(&b.power)),
        Selection::Nearest => dets.iter().min_by(|a, b| a.range_m.total_cmp(&b.range_m)),
    };
    pick.copied().ok_or(Error::NoDetection(sweep))
}

/// Mean of the selected upsweep and downsweep ranges.
pub fn estimate_altitude(up: &[Detection], down: &[Detection], how: Selection) -> Result<f64> {
    let u = select(up, how, "up")?;
    let d = select(down, how, "down")?;
    Ok(0.5 * (u.range_m + d.range_m))
}

/// Peak-to-sidelobe ratio in dB. The main lobe extends from the global peak to
/// the first local minimum on each side; the sidelobe is the largest local
/// maximum outside it.
pub fn pslr(profile: &RangeProfile) -> Result<f64> {
    let m = &profile.magnitudes;
    if m.len() < 3 {
        return Err(Error::UndefinedPslr("profile too short".into()));
    }
    let peak = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
    if !(m[peak] > 0.0) {
        return Err(Error::UndefinedPslr("profile has no energy".into()));
    }
    let mut lo = peak;
    while lo > 0 && m[lo - 1] <= m[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < m.len() && m[hi + 1] <= m[hi] {
        hi += 1;
    }
    let side = (1..m.len() - 1)
        .filter(|&i| (i < lo || i > hi) && m[i] > m[i - 1] && m[i] >= m[i + 1])
        .map(|i| m[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if side == f64::NEG_INFINITY {
        return Err(Error::UndefinedPslr("no sidelobe outside the main lobe".into()));
    }
    if side <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (m[peak] / side).log10())
}

/// Short-time Fourier transform with frames of `n_fft` samples every `hop`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stft {
    pub n_fft: usize,
    pub hop: usize,
    pub fs: f64,
    pub frames: Vec<Vec<Complex64>>,
}

impl Stft {
    /// Frequency of bin `k` in Hz, in `[-fs/2, fs/2)`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        let k = if k < self.n_fft / 2 { k as f64 } else { k as f64 - self.n_fft as f64 };
        k * self.fs / self.n_fft as f64
    }

    /// `|X|^2` in dB per frame, bins ordered from `-fs/2` upward.
    pub fn magnitude_db(&self) -> Vec<Vec<f64>> {
        let half = self.n_fft / 2;
        self.frames
            .iter()
            .map(|f| {
                (0..self.n_fft)
                    .map(|i| 10.0 * (f[(i + half) % self.n_fft].norm_sqr() + 1e-30).log10())
                    .collect()
            })
            .collect()
    }

    /// Frequency of the strongest bin in each frame.
    pub fn ridge(&self) -> Vec<f64> {
        self.frames
            .iter()
            .map(|f| {
                let k = (0..f.len()).max_by(|&a, &b| f[a].norm_sqr().total_cmp(&f[b].norm_sqr())).unwrap();
                self.bin_frequency(k)
            })
            .collect()
    }
}

pub fn stft(sig: &ComplexSignal, n_fft: usize, hop: usize, window: Window) -> Result<Stft> {
    if n_fft == 0 || hop == 0 {
        return Err(invalid("n_fft and hop must be positive"));
    }
    if sig.len() < n_fft {
        return Err(invalid(format!("signal of {} samples shorter than n_fft {n_fft}", sig.len())));
    }
    let w = window.coefficients(n_fft);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let s = sig.samples();
    let frames = (0..=(s.len() - n_fft) / hop)
        .map(|f| {
            let mut buf: Vec<Complex64> =
                s[f * hop..f * hop + n_fft].iter().zip(&w).map(|(x, wi)| x * wi).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    Ok(Stft { n_fft, hop, fs: sig.fs(), frames })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    /// Peaks below this fraction of the strongest peak are ignored.
    pub relative_threshold: f64,
    /// Minimum peak spacing as a fraction of the reference length.
    pub min_separation: f64,
    /// Minimum normalized correlation coefficient for any frame.
    pub min_correlation: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { relative_threshold: 0.5, min_separation: 0.9, min_correlation: 0.3 }
    }
}

/// Normalized cross-correlation magnitude between `stream[k..k+m]` and `reference`
/// for every full-overlap lag `k`.
pub fn normalized_xcorr(stream: &ComplexSignal, reference: &ComplexSignal) -> Result<Vec<f64>> {
    let n = stream.len();
    let m = reference.len();
    if n < m {
        return Err(invalid(format!("stream of {n} samples shorter than reference of {m}")));
    }
    let mut planner = FftPlanner::new();
    let mut a = stream.samples().to_vec();
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    b[..m].copy_from_slice(reference.samples());
    planner.plan_fft_forward(n).process(&mut a);
    planner.plan_fft_forward(n).process(&mut b);
    let mut c: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect();
    planner.plan_fft_inverse(n).process(&mut c);

    let ref_energy: f64 = reference.samples().iter().map(|x| x.norm_sqr()).sum();
    let mut prefix = vec![0.0; n + 1];
    for (i, s) in stream.samples().iter().enumerate() {
        prefix[i + 1] = prefix[i] + s.norm_sqr();
    }
    Ok((0..=n - m)
        .map(|k| {
            let e = (prefix[k + m] - prefix[k]).max(0.0);
            let den = (e * ref_energy).sqrt();
            if den > 0.0 { c[k].norm() / n as f64 / den } else { 0.0 }
        })
        .collect())
}

/// Frame start offsets found by correlating the stream with the reference chirp.
pub fn segment_frames(
    stream: &ComplexSignal,
    reference: &ComplexSignal,
    cfg: &SegmentConfig,
) -> Result<Vec<usize>> {
    let rho = normalized_xcorr(stream, reference)?;
    let max = rho.iter().cloned().fold(0.0, f64::max);
    if max < cfg.min_correlation {
        return Ok(Vec::new());
    }
    let floor = (cfg.relative_threshold * max).max(cfg.min_correlation);
    let mut cand: Vec<usize> = (0..rho.len())
        .filter(|&k| {
            rho[k] >= floor
                && (k == 0 || rho[k] >= rho[k - 1])
                && (k + 1 == rho.len() || rho[k] > rho[k + 1])
        })
        .collect();
    cand.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]));
    let sep = (cfg.min_separation * reference.len() as f64).ceil() as usize;
    let mut picked: Vec<usize> = Vec::new();
    for k in cand {
        if picked.iter().all(|&p| p.abs_diff(k) >= sep) {
            picked.push(k);
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Result of processing one received chirp.
#[derive(Clone, Debug)]
pub struct ChirpReport {
    pub up_profile: RangeProfile,
    pub down_profile: RangeProfile,
    pub up_detections: Vec<Detection>,
    pub down_detections: Vec<Detection>,
    /// `None` when either sweep produced no detection.
    pub altitude_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessorConfig {
    pub profile: ProfileOptions,
    pub cfar: CfarConfig,
    pub selection: Selection,
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        Self {
            profile: ProfileOptions::default(),
            cfar: CfarConfig::default(),
            selection: Selection::Strongest,
        }
    }
}

/// Full processing chain against a fixed transmit reference.
#[derive(Clone, Debug)]
pub struct AltimeterProcessor {
    params: RadarParams,
    cfg: ProcessorConfig,
    ref_up: ComplexSignal,
    ref_down: ComplexSignal,
}

impl AltimeterProcessor {
    pub fn new(params: RadarParams, cfg: ProcessorConfig) -> Result<Self> {
        cfg.cfar.validate()?;
        let chirp = generate_chirp(&params)?;
        let (ref_up, ref_down) = split_sweeps(&chirp, &params)?;
        Ok(Self { params, cfg, ref_up, ref_down })
    }

    pub fn params(&self) -> &RadarParams {
        &self.params
    }

    pub fn process(&self, rx: &ComplexSignal) -> Result<ChirpReport> {
        let (up, down) = split_sweeps(rx, &self.params)?;
        let dec = self.params.decimation();
        let up_beat = decimate(&dechirp(&up, &self.ref_up)?, dec)?;
        let down_beat = decimate(&dechirp(&down, &self.ref_down)?, dec)?;
        let up_profile = range_profile(&up_beat, &self.params, SweepKind::Up, self.cfg.profile)?;
        let down_profile = range_profile(&down_beat, &self.params, SweepKind::Down, self.cfg.profile)?;
        let up_detections = ca_cfar(&up_profile, &self.cfg.cfar)?;
        let down_detections = ca_cfar(&down_profile, &self.cfg.cfar)?;
        let altitude_m = estimate_altitude(&up_detections, &down_detections, self.cfg.selection).ok();
        Ok(ChirpReport { up_profile, down_profile, up_detections, down_detections, altitude_m })
    }
}
