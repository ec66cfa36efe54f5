//! Per-channel unit-peak scaling between complex signals and model tensors.

use radalt_core::{Complex64, ComplexSignal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcnError};
use crate::model::Model;

/// Multipliers applied to the I and Q channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub i: f64,
    pub q: f64,
}

/// Splits into `[I..., Q...]` scaled so each channel peaks at magnitude 1.
pub fn normalize_example(sig: &ComplexSignal) -> Result<(Vec<f64>, Scales)> {
    let s = sig.samples();
    let pi = s.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let pq = s.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if pi == 0.0 || pq == 0.0 {
        return Err(TcnError::DegenerateInput(format!(
            "cannot normalize an all-zero {} channel",
            if pi == 0.0 { "I" } else { "Q" }
        )));
    }
    let scales = Scales { i: 1.0 / pi, q: 1.0 / pq };
    Ok((apply_scales(sig, scales), scales))
}

/// Channel split with given multipliers.
pub fn apply_scales(sig: &ComplexSignal, scales: Scales) -> Vec<f64> {
    let s = sig.samples();
    let mut out = Vec::with_capacity(2 * s.len());
    out.extend(s.iter().map(|v| v.re * scales.i));
    out.extend(s.iter().map(|v| v.im * scales.q));
    out
}

pub fn denormalize(values: &[f64], scales: Scales, fs: f64) -> Result<ComplexSignal> {
    if values.is_empty() || values.len() % 2 != 0 {
        return Err(TcnError::InvalidArgument(format!(
            "two-channel array needs an even, non-zero length, got {}",
            values.len()
        )));
    }
    let n = values.len() / 2;
    let samples = (0..n)
        .map(|k| Complex64::new(values[k] / scales.i, values[n + k] / scales.q))
        .collect();
    Ok(ComplexSignal::new(samples, fs)?)
}

/// Input/label tensors for one example. The label uses the dirty signal's
/// scales so the model output de-normalizes with the same factors.
pub fn training_pair(dirty: &ComplexSignal, clean: &ComplexSignal) -> Result<(Vec<f32>, Vec<f32>)> {
    dirty.check_compatible(clean)?;
    let (x, scales) = normalize_example(dirty)?;
    let y = apply_scales(clean, scales);
    Ok((to_f32(&x), to_f32(&y)))
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Normalize, run the model in inference mode, and undo the scaling.
pub fn denoise(model: &Model<f32>, rx: &ComplexSignal) -> Result<ComplexSignal> {
    let want = model.geometry().input_len;
    if rx.len() != want {
        return Err(TcnError::InvalidArgument(format!(
            "denoise expects frames of {want} samples, got {}",
            rx.len()
        )));
    }
    let (x, scales) = normalize_example(rx)?;
    let y = model.forward(&to_f32(&x))?;
    let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    denormalize(&y, scales, rx.fs())
}
