//! Complex baseband IQ records.

use crate::error::{invalid, Result};
use crate::Complex64;

/// A finite sequence of complex baseband samples at a fixed sample rate.
///
/// Construction through [`ComplexSignal::new`] guarantees a non-empty record of
/// finite samples and a positive, finite sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    fs: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, fs: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(invalid(format!("sample rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], fs)
    }

    /// Builds a signal from separate I and Q channels.
    pub fn from_iq(i: &[f64], q: &[f64], fs: f64) -> Result<Self> {
        if i.len() != q.len() {
            return Err(invalid(format!(
                "I/Q channel lengths differ: {} vs {}",
                i.len(),
                q.len()
            )));
        }
        Self::new(
            i.iter().zip(q).map(|(&re, &im)| Complex64::new(re, im)).collect(),
            fs,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared magnitude, `mean(|s[n]|^2)`.
    pub fn power(&self) -> f64 {
        power(&self.samples)
    }

    /// Number of nonzero samples.
    pub fn support(&self) -> usize {
        self.samples.iter().filter(|s| s.norm_sqr() > 0.0).count()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            fs: self.fs,
        }
    }

    /// Sample-wise sum; both records must share length and sample rate.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            fs: self.fs,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            fs: self.fs,
        })
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(invalid(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        if self.fs != other.fs {
            return Err(invalid(format!(
                "sample rate mismatch: {} vs {}",
                self.fs, other.fs
            )));
        }
        Ok(())
    }

    /// Sub-record `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(invalid(format!(
                "slice [{start}, {}) exceeds record of {}",
                start + len,
                self.len()
            )));
        }
        Self::new(self.samples[start..start + len].to_vec(), self.fs)
    }

    /// Root-mean-square of the sample-wise difference.
    pub fn rmse(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let sum: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((sum / self.len() as f64).sqrt())
    }
}

pub fn power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ComplexSignal::new(vec![], 1.0).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(f64::NAN, 0.0)], 1.0).is_err());
        assert!(ComplexSignal::new(vec![Complex64::new(1.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn power_is_mean_squared_magnitude() {
        let s = ComplexSignal::new(
            vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)],
            1.0,
        )
        .unwrap();
        assert_eq!(s.power(), 12.5);
        assert_eq!(s.support(), 1);
    }
}
