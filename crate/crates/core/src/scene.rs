//! Received-signal composition: delayed and Doppler-shifted ground return,
//! point-scatterer clutter, multipath fading envelope, AWGN and additive
//! interference.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::interference::{gate, overlap_window, InterferenceSpec, OverlapSpec, SirReference};
use crate::rng::{derive_named, derive_seed, rng_from_seed, SimRng};
use crate::signal::{db_to_linear, ComplexSignal};
use crate::waveform::RadarParams;
use crate::{Complex64, SPEED_OF_LIGHT};

/// Band-limited Gaussian amplitude fluctuation applied to the radar return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingConfig {
    /// Process bandwidth as a fraction of the sweep bandwidth.
    pub bw_fraction: f64,
    pub sigma: f64,
    /// Lower clip of the envelope.
    pub floor: f64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self { bw_fraction: 0.10, sigma: 0.3, floor: 0.05 }
    }
}

impl FadingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bw_fraction > 0.0 && self.bw_fraction < 1.0) {
            return Err(invalid(format!("fading bw_fraction must be in (0, 1), got {}", self.bw_fraction)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("fading sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Point scatterers behind the nadir return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterConfig {
    pub n_scatterers: usize,
    /// Scatterer delays are uniform in `(tau, tau + delay_spread_s]`.
    pub delay_spread_s: f64,
    /// Mean Rayleigh amplitude relative to the ground return.
    pub amplitude_scale: f64,
    /// Scatterer Doppler offsets are uniform in `+-doppler_spread_hz`.
    pub doppler_spread_hz: f64,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            n_scatterers: 8,
            delay_spread_s: 1e-6,
            amplitude_scale: 0.2,
            doppler_spread_hz: 200.0,
        }
    }
}

/// One interferer with its temporal overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererConfig {
    pub spec: InterferenceSpec,
    pub overlap: OverlapSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub altitude_m: f64,
    #[serde(default)]
    pub descent_rate_mps: f64,
    /// `None` means no thermal noise.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub clutter: Option<ClutterConfig>,
    #[serde(default)]
    pub fading: Option<FadingConfig>,
    #[serde(default)]
    pub interference: Vec<InterfererConfig>,
    #[serde(default)]
    pub sir_reference: SirReference,
}

impl SceneConfig {
    /// Bare ground return: no clutter, fading, noise or interference.
    pub fn clear(altitude_m: f64) -> Self {
        Self {
            altitude_m,
            descent_rate_mps: 0.0,
            snr_db: None,
            clutter: None,
            fading: None,
            interference: Vec::new(),
            sir_reference: SirReference::FullRecord,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfererMeta {
    pub kind: String,
    pub sir_db: f64,
    pub overlap: f64,
    pub window_start: usize,
    pub window_len: usize,
}

/// Ground truth attached to an example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub seed: u64,
    pub altitude_m: f64,
    /// Altitude implied by the whole-sample delay actually simulated.
    pub effective_altitude_m: f64,
    pub delay_samples: usize,
    pub descent_rate_mps: f64,
    pub doppler_hz: f64,
    pub snr_db: Option<f64>,
    pub interferers: Vec<InterfererMeta>,
}

/// A training or evaluation record. `clean` is the faded target plus clutter;
/// `dirty` adds noise and interference.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub clean: ComplexSignal,
    pub dirty: ComplexSignal,
    pub meta: ExampleMeta,
}

/// An [`Example`] together with the additive components it was built from.
#[derive(Clone, Debug)]
pub struct SceneRecord {
    pub example: Example,
    pub noise: ComplexSignal,
    pub interference: ComplexSignal,
}

pub fn delay_samples(altitude_m: f64, fs: f64) -> f64 {
    2.0 * altitude_m / SPEED_OF_LIGHT * fs
}

pub fn doppler_hz(descent_rate_mps: f64, fc: f64) -> f64 {
    2.0 * descent_rate_mps * fc / SPEED_OF_LIGHT
}

/// Altitude corresponding to a whole-sample round-trip delay.
pub fn altitude_of_delay(delay: usize, fs: f64) -> f64 {
    delay as f64 * SPEED_OF_LIGHT / (2.0 * fs)
}

/// `amplitude * chirp[n - delay] * exp(j 2 pi f_d n / fs)`, zero for `n < delay`.
fn delayed_copy(chirp: &ComplexSignal, delay: usize, doppler: f64, amplitude: Complex64) -> Vec<Complex64> {
    let fs = chirp.fs();
    let s = chirp.samples();
    (0..s.len())
        .map(|n| {
            if n < delay {
                Complex64::new(0.0, 0.0)
            } else {
                amplitude * s[n - delay] * Complex64::from_polar(1.0, 2.0 * PI * doppler * n as f64 / fs)
            }
        })
        .collect()
}

/// Ground return at round-trip delay `2h/c` (rounded to whole samples) with
/// Doppler `2 v f_c / c` for a descent rate `v` toward the ground.
pub fn target_return(
    chirp: &ComplexSignal,
    params: &RadarParams,
    altitude_m: f64,
    descent_rate_mps: f64,
) -> Result<ComplexSignal> {
    let d = checked_delay(chirp.len(), chirp.fs(), altitude_m)?;
    let fd = doppler_hz(descent_rate_mps, params.fc_hz);
    ComplexSignal::new(delayed_copy(chirp, d, fd, Complex64::new(1.0, 0.0)), chirp.fs())
}

fn checked_delay(len: usize, fs: f64, altitude_m: f64) -> Result<usize> {
    if !(altitude_m.is_finite() && altitude_m > 0.0) {
        return Err(invalid(format!("altitude must be positive, got {altitude_m}")));
    }
    let d = delay_samples(altitude_m, fs).round() as usize;
    if d < 1 || d > len / 4 {
        return Err(invalid(format!(
            "altitude {altitude_m} m gives a delay of {d} samples, outside [1, {}]",
            len / 4
        )));
    }
    Ok(d)
}

fn clutter_return(
    chirp: &ComplexSignal,
    nadir_delay_s: f64,
    platform_doppler: f64,
    cfg: &ClutterConfig,
    rng: &mut SimRng,
) -> Vec<Complex64> {
    let fs = chirp.fs();
    let max_delay = chirp.len() / 4;
    let sigma = cfg.amplitude_scale / (PI / 2.0).sqrt();
    let mut acc = vec![Complex64::new(0.0, 0.0); chirp.len()];
    for _ in 0..cfg.n_scatterers {
        // (0, 1] so the scatterer is never nearer than the ground
        let u = 1.0 - rng.random::<f64>();
        let delay_s = nadir_delay_s + u * cfg.delay_spread_s;
        let d = ((delay_s * fs).round() as usize).min(max_delay);
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        let amp = Complex64::new(e1, e2) * sigma;
        let fd = platform_doppler + (2.0 * rng.random::<f64>() - 1.0) * cfg.doppler_spread_hz;
        for (a, v) in acc.iter_mut().zip(delayed_copy(chirp, d, fd, amp)) {
            *a += v;
        }
    }
    acc
}

/// Envelope `max(floor, 1 + g)` where `g` is white Gaussian noise brick-wall
/// low-passed to `bw_fraction * band_hz` and rescaled to standard deviation
/// `sigma`.
pub fn fading_envelope(
    len: usize,
    fs: f64,
    band_hz: f64,
    cfg: &FadingConfig,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    Ok(fading_process(len, fs, band_hz, cfg, rng)?
        .into_iter()
        .map(|g| (1.0 + g).max(cfg.floor))
        .collect())
}

/// The zero-mean Gaussian process `g` behind [`fading_envelope`], unclipped.
pub fn fading_process(
    len: usize,
    fs: f64,
    band_hz: f64,
    cfg: &FadingConfig,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if len == 0 {
        return Err(invalid("envelope length must be positive"));
    }
    if cfg.sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let cutoff = cfg.bw_fraction * band_hz;
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 } * fs / len as f64;
        if f.abs() > cutoff {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    // symmetric mask keeps the process real up to rounding
    let g: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = g.iter().sum::<f64>() / len as f64;
    let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64;
    if !(var > 0.0) {
        return Ok(vec![0.0; len]);
    }
    let scale = cfg.sigma / var.sqrt();
    Ok(g.into_iter().map(|x| (x - mean) * scale).collect())
}

/// Circular complex Gaussian noise of the given mean power.
pub fn awgn(len: usize, noise_power: f64, rng: &mut SimRng) -> Vec<Complex64> {
    let sd = (noise_power / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// Adds noise so that `power(sig) / power(noise) = 10^(snr_db/10)`; `None`
/// leaves the signal unchanged.
pub fn add_awgn(sig: &ComplexSignal, snr_db: Option<f64>, rng: &mut SimRng) -> Result<ComplexSignal> {
    let Some(snr) = snr_db else {
        return Ok(sig.clone());
    };
    let p = sig.power();
    if !(p > 0.0) {
        return Err(invalid("cannot set SNR of a zero-power signal"));
    }
    let noise = awgn(sig.len(), p / db_to_linear(snr), rng);
    ComplexSignal::new(
        sig.samples().iter().zip(&noise).map(|(s, n)| s + n).collect(),
        sig.fs(),
    )
}

/// Builds the received signal for one scene. All randomness derives from `seed`.
pub fn compose_scene(
    chirp: &ComplexSignal,
    params: &RadarParams,
    scene: &SceneConfig,
    seed: u64,
) -> Result<SceneRecord> {
    let len = chirp.len();
    let fs = chirp.fs();
    let d = checked_delay(len, fs, scene.altitude_m)?;
    let fd = doppler_hz(scene.descent_rate_mps, params.fc_hz);
    let mut rx = target_return(chirp, params, scene.altitude_m, scene.descent_rate_mps)?.into_samples();

    if let Some(clutter) = &scene.clutter {
        let mut rng = rng_from_seed(derive_named(seed, "clutter"));
        let tau = delay_samples(scene.altitude_m, fs) / fs;
        let c = clutter_return(chirp, tau, fd, clutter, &mut rng);
        rx.iter_mut().zip(c).for_each(|(r, c)| *r += c);
    }
    if let Some(fading) = &scene.fading {
        let mut rng = rng_from_seed(derive_named(seed, "fading"));
        let env = fading_envelope(len, fs, params.bandwidth_hz, fading, &mut rng)?;
        rx.iter_mut().zip(env).for_each(|(r, e)| *r *= e);
    }
    let clean = ComplexSignal::new(rx, fs)?;

    let mut intf = vec![Complex64::new(0.0, 0.0); len];
    let mut interferers = Vec::with_capacity(scene.interference.len());
    for (i, cfg) in scene.interference.iter().enumerate() {
        let raw = cfg.spec.generate(len, fs)?;
        let mut rng = rng_from_seed(derive_seed(derive_named(seed, "overlap"), i as u64));
        let window = overlap_window(len, &cfg.overlap, &mut rng)?;
        let gated = gate(&raw, window.clone())?;
        if gated.support() > 0 {
            let scaled = crate::interference::scale_to_sir_with(
                &clean,
                &gated,
                cfg.spec.sir_db(),
                scene.sir_reference,
            )?;
            intf.iter_mut().zip(scaled.samples()).for_each(|(a, s)| *a += s);
        }
        interferers.push(InterfererMeta {
            kind: cfg.spec.kind().to_string(),
            sir_db: cfg.spec.sir_db(),
            overlap: cfg.overlap.fraction,
            window_start: window.start,
            window_len: window.len(),
        });
    }

    let noise = match scene.snr_db {
        Some(snr) => {
            let p = clean.power();
            if !(p > 0.0) {
                return Err(invalid("clean return has zero power"));
            }
            let mut rng = rng_from_seed(derive_named(seed, "noise"));
            awgn(len, p / db_to_linear(snr), &mut rng)
        }
        None => vec![Complex64::new(0.0, 0.0); len],
    };
    let dirty: Vec<Complex64> = clean
        .samples()
        .iter()
        .zip(&noise)
        .zip(&intf)
        .map(|((c, n), i)| c + n + i)
        .collect();

    let meta = ExampleMeta {
        seed,
        altitude_m: scene.altitude_m,
        effective_altitude_m: altitude_of_delay(d, fs),
        delay_samples: d,
        descent_rate_mps: scene.descent_rate_mps,
        doppler_hz: fd,
        snr_db: scene.snr_db,
        interferers,
    };
    Ok(SceneRecord {
        example: Example { clean, dirty: ComplexSignal::new(dirty, fs)?, meta },
        noise: ComplexSignal::new(noise, fs)?,
        interference: ComplexSignal::new(intf, fs)?,
    })
}

/// `clean = envelope * (target + clutter)`, `dirty = clean + noise + interference`.
pub fn compose_received(
    chirp: &ComplexSignal,
    params: &RadarParams,
    scene: &SceneConfig,
    seed: u64,
) -> Result<Example> {
    compose_scene(chirp, params, scene, seed).map(|r| r.example)
}
