//! Block LMS adaptive filter adapting the received signal toward the clean
//! transmitted chirp.
//!
//! Weights are frozen within a block; the accumulated gradient
//! `sum e[n] conj(rx[n-k])` is applied once at the block boundary, scaled by
//! `mu / block_size`. A trailing partial block is filtered and updated with
//! the same scale.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::ComplexSignal;
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmsConfig {
    pub filter_len: usize,
    pub block_size: usize,
    pub mu: f64,
    /// Carry weights from one chirp to the next instead of resetting.
    pub persist_weights: bool,
}

impl Default for LmsConfig {
    fn default() -> Self {
        Self { filter_len: 32, block_size: 100, mu: 1e-4, persist_weights: false }
    }
}

impl LmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 || self.block_size == 0 {
            return Err(invalid("filter_len and block_size must be at least 1"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be finite and non-negative, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Stateful filter; `filter` resets or keeps the weights according to the config.
#[derive(Clone, Debug)]
pub struct BlockLms {
    cfg: LmsConfig,
    weights: Vec<Complex64>,
}

impl BlockLms {
    pub fn new(cfg: LmsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { weights: vec![Complex64::new(0.0, 0.0); cfg.filter_len], cfg })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = Complex64::new(0.0, 0.0));
    }

    pub fn filter(&mut self, rx: &ComplexSignal, desired: &ComplexSignal) -> Result<ComplexSignal> {
        rx.check_compatible(desired)?;
        if rx.len() < self.cfg.block_size {
            return Err(invalid(format!(
                "signal of {} samples shorter than one block of {}",
                rx.len(),
                self.cfg.block_size
            )));
        }
        if !self.cfg.persist_weights {
            self.reset();
        }
        let x = rx.samples();
        let d = desired.samples();
        let taps = self.cfg.filter_len;
        let scale = self.cfg.mu / self.cfg.block_size as f64;
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        let mut grad = vec![Complex64::new(0.0, 0.0); taps];
        for start in (0..x.len()).step_by(self.cfg.block_size) {
            let end = (start + self.cfg.block_size).min(x.len());
            grad.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
            for n in start..end {
                let kmax = taps.min(n + 1);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..kmax {
                    acc += self.weights[k] * x[n - k];
                }
                y[n] = acc;
                let e = d[n] - acc;
                for k in 0..kmax {
                    grad[k] += e * x[n - k].conj();
                }
            }
            for (w, g) in self.weights.iter_mut().zip(&grad) {
                *w += g * scale;
            }
        }
        let out = ComplexSignal::new(y, rx.fs());
        if out.is_err() || self.weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(crate::Error::NumericalDegeneracy("LMS weights diverged".into()));
        }
        out
    }
}

/// Single-shot block LMS from zero weights, returning the output and final weights.
pub fn block_lms(
    rx: &ComplexSignal,
    desired: &ComplexSignal,
    cfg: &LmsConfig,
) -> Result<(ComplexSignal, Vec<Complex64>)> {
    let mut f = BlockLms::new(LmsConfig { persist_weights: false, ..*cfg })?;
    let y = f.filter(rx, desired)?;
    Ok((y, f.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scene::awgn;
    use crate::waveform::{generate_chirp, RadarParams};
    use proptest::prelude::*;

    /// Per-sample LMS whose updates are staged and only committed at block ends.
    fn sample_accumulate_oracle(
        x: &[Complex64],
        d: &[Complex64],
        taps: usize,
        block: usize,
        mu: f64,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut w = vec![Complex64::new(0.0, 0.0); taps];
        let mut pending = w.clone();
        let mut y = Vec::with_capacity(x.len());
        for n in 0..x.len() {
            let tap = |k: usize| if n >= k { x[n - k] } else { Complex64::new(0.0, 0.0) };
            let yn: Complex64 = (0..taps).map(|k| w[k] * tap(k)).sum();
            let e = d[n] - yn;
            for k in 0..taps {
                pending[k] += mu / block as f64 * e * tap(k).conj();
            }
            y.push(yn);
            if (n + 1) % block == 0 || n + 1 == x.len() {
                w = pending.clone();
            }
        }
        (y, w)
    }

    fn sig(v: Vec<Complex64>) -> ComplexSignal {
        ComplexSignal::new(v, 7.5e6).unwrap()
    }

    #[test]
    fn zero_input_and_zero_step() {
        let c = generate_chirp(&RadarParams::default()).unwrap();
        let zero = ComplexSignal::zeros(c.len(), c.fs()).unwrap();
        let (y, w) = block_lms(&zero, &c, &LmsConfig::default()).unwrap();
        assert!(y.samples().iter().all(|v| v.norm() == 0.0));
        assert!(w.iter().all(|v| v.norm() == 0.0));

        let (y, w) = block_lms(&c, &c, &LmsConfig { mu: 0.0, ..Default::default() }).unwrap();
        assert!(y.samples().iter().all(|v| v.norm() == 0.0));
        assert!(w.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = ComplexSignal::zeros(200, 7.5e6).unwrap();
        let b = ComplexSignal::zeros(201, 7.5e6).unwrap();
        assert!(block_lms(&a, &b, &LmsConfig::default()).is_err());
        let short = ComplexSignal::zeros(50, 7.5e6).unwrap();
        assert!(block_lms(&short, &short, &LmsConfig::default()).is_err());
        assert!(BlockLms::new(LmsConfig { filter_len: 0, ..Default::default() }).is_err());
        assert!(BlockLms::new(LmsConfig { mu: f64::NAN, ..Default::default() }).is_err());
    }

    #[test]
    fn stable_on_unit_power_chirp() {
        let c = generate_chirp(&RadarParams::default()).unwrap();
        let mut rng = rng_from_seed(1);
        let rx = c.try_add(&sig(awgn(c.len(), 1.0, &mut rng))).unwrap();
        let (_, w) = block_lms(&rx, &c, &LmsConfig::default()).unwrap();
        let norm: f64 = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm.is_finite() && norm < 10.0);
    }

    #[test]
    fn error_shrinks_on_near_identity_channel() {
        let c = generate_chirp(&RadarParams::default()).unwrap();
        let mut rng = rng_from_seed(2);
        let rx = c.try_add(&sig(awgn(c.len(), 0.01, &mut rng))).unwrap();
        let (y, _) = block_lms(&rx, &c, &LmsConfig::default()).unwrap();
        let e: Vec<f64> = y.samples().iter().zip(c.samples()).map(|(y, d)| (d - y).norm()).collect();
        let first = e[..100].iter().sum::<f64>() / 100.0;
        let last = e[e.len() - 100..].iter().sum::<f64>() / 100.0;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn persistence_carries_weights() {
        let c = generate_chirp(&RadarParams::default()).unwrap();
        let cfg = LmsConfig { persist_weights: true, ..Default::default() };
        let mut f = BlockLms::new(cfg).unwrap();
        let y1 = f.filter(&c, &c).unwrap();
        let y2 = f.filter(&c, &c).unwrap();
        assert!(y2.rmse(&c).unwrap() < y1.rmse(&c).unwrap());

        let mut g = BlockLms::new(LmsConfig::default()).unwrap();
        let z1 = g.filter(&c, &c).unwrap();
        let z2 = g.filter(&c, &c).unwrap();
        assert_eq!(z1, z2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_sample_accumulate_oracle(
            seed in any::<u64>(),
            taps in 1usize..12,
            block in 1usize..40,
            extra in 0usize..150,
            mu in 1e-4f64..0.05,
        ) {
            let len = block + extra;
            let mut rng = rng_from_seed(seed);
            let x = awgn(len, 1.0, &mut rng);
            let d = awgn(len, 1.0, &mut rng);
            let cfg = LmsConfig { filter_len: taps, block_size: block, mu, persist_weights: false };
            let (y, w) = block_lms(&sig(x.clone()), &sig(d.clone()), &cfg).unwrap();
            let (yo, wo) = sample_accumulate_oracle(&x, &d, taps, block, mu);
            for (a, b) in y.samples().iter().zip(&yo) {
                prop_assert!((a - b).norm() < 1e-9);
            }
            for (a, b) in w.iter().zip(&wo) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
