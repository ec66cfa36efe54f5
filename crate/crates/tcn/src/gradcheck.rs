//! Central-difference audit of the analytic gradients on a tiny model.

use rand::Rng;
use radalt_core::rng::rng_from_seed;

use crate::config::{ModelConfig, Variant, GROUPS};
use crate::error::Result;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupCheck {
    pub group: &'static str,
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)` in the group.
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
}

/// Checks every parameter of `ModelConfig::tiny()` (dropout 0.2, fixed masks)
/// against central differences with step `h`, in f64.
pub fn gradient_check(variant: Variant, seed: u64, h: f64) -> Result<Vec<GroupCheck>> {
    let cfg = ModelConfig { dropout: 0.2, variant, ..ModelConfig::tiny() };
    let model: Model<f64> = Model::build(cfg, seed)?;
    let mut rng = rng_from_seed(seed ^ 0xabc);
    let n = model.example_len();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let masks = model.sample_masks(&mut rng);

    let mut grad = vec![0.0; model.n_params()];
    model.loss_and_grad(&x, &y, Some(&masks), 1.0, &mut grad)?;

    let mut probe = model.clone();
    let mut scratch = vec![0.0; model.n_params()];
    let mut loss_at = |i: usize, v: f64, probe: &mut Model<f64>| -> Result<f64> {
        let old = probe.params()[i];
        probe.params_mut()[i] = v;
        let l = probe.loss_and_grad(&x, &y, Some(&masks), 0.0, &mut scratch);
        probe.params_mut()[i] = old;
        l
    };

    let mut out = Vec::new();
    for (gi, (_, off, len)) in model.geometry().groups().into_iter().enumerate() {
        let mut worst = 0.0f64;
        let mut largest = 0.0f64;
        for i in off..off + len {
            let p = model.params()[i];
            let num = (loss_at(i, p + h, &mut probe)? - loss_at(i, p - h, &mut probe)?) / (2.0 * h);
            worst = worst.max((grad[i] - num).abs() / grad[i].abs().max(num.abs()).max(1e-6));
            largest = largest.max(grad[i].abs());
        }
        out.push(GroupCheck { group: GROUPS[gi], max_rel_err: worst, max_abs_grad: largest });
    }
    Ok(out)
}
