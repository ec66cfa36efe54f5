//! Parameter storage, forward pass and reverse-mode gradients.
//!
//! Layout per example is channel-major `[channel][time]`. The encoder is three
//! dilated convolutions, each followed by ReLU and (in training) inverted
//! dropout; a linear layer maps the flattened features to the latent vector and
//! another maps it to the decoder seed. Three transpose convolutions with ReLU
//! between them upsample the seed, and linear resampling trims the result to
//! the input length.

use rand::Rng;

use crate::config::{ConvGeom, Geometry, LinearGeom, ModelConfig, IO_CHANNELS};
use crate::error::{Result, TcnError};
use crate::float::Real;
use crate::ops::{gather, scatter_add, Interp};

#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    config: ModelConfig,
    geometry: Geometry,
    interp: Interp,
    params: Vec<T>,
}

/// Dropout masks for the three encoder activations, already scaled by `1/(1-p)`.
pub type DropoutMasks<T> = [Vec<T>; 3];

/// Intermediate values kept for the backward pass.
struct Tape<T> {
    cols: [Vec<T>; 3],
    pre: [Vec<T>; 3],
    acts: [Vec<T>; 3],
    latent: Vec<T>,
    seed: Vec<T>,
    dec_pre: [Vec<T>; 3],
    dec_act: [Vec<T>; 2],
    out: Vec<T>,
}

impl<T: Real> Model<T> {
    /// Fresh model with weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let geometry = Geometry::new(&config)?;
        let mut rng = radalt_core::rng::rng_from_seed(seed);
        let mut params = vec![T::zero(); geometry.n_params];
        for (gi, (_, off, len)) in geometry.groups().into_iter().enumerate() {
            let bound = 1.0 / (geometry.fan_in(gi) as f64).sqrt();
            for p in &mut params[off..off + len] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(Self::assemble(config, geometry, params))
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        let geometry = Geometry::new(&config)?;
        if params.len() != geometry.n_params {
            return Err(TcnError::InvalidArgument(format!(
                "expected {} parameters, got {}",
                geometry.n_params,
                params.len()
            )));
        }
        Ok(Self::assemble(config, geometry, params))
    }

    fn assemble(config: ModelConfig, geometry: Geometry, params: Vec<T>) -> Self {
        let interp = Interp::new(geometry.decoder_out_len(), geometry.input_len);
        Self { config, geometry, interp, params }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Values per example: `2 * input_len`.
    pub fn example_len(&self) -> usize {
        IO_CHANNELS * self.geometry.input_len
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            geometry: self.geometry.clone(),
            interp: self.interp.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.example_len() {
            return Err(TcnError::InvalidArgument(format!(
                "expected input of shape (2, {}) = {} values, got {}",
                self.geometry.input_len,
                self.example_len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Inference forward pass on one example; dropout disabled.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.run(x, None).out)
    }

    /// Inference on `n` concatenated examples.
    pub fn forward_batch(&self, xs: &[T], n: usize) -> Result<Vec<T>> {
        let m = self.example_len();
        if xs.len() != n * m {
            return Err(TcnError::InvalidArgument(format!(
                "batch of {n} needs {} values, got {}",
                n * m,
                xs.len()
            )));
        }
        let mut out = Vec::with_capacity(xs.len());
        for x in xs.chunks(m) {
            out.extend(self.run(x, None).out);
        }
        Ok(out)
    }

    /// Training-mode masks drawn from `rng`. All ones when dropout is zero.
    pub fn sample_masks<R: Rng>(&self, rng: &mut R) -> DropoutMasks<T> {
        let p = self.config.dropout;
        let keep = T::from_f64(1.0 / (1.0 - p));
        // drop when a uniform u32 falls below p * 2^32
        let threshold = (p * 4294967296.0).round().min(u32::MAX as f64) as u32;
        let mk = |g: &ConvGeom, rng: &mut R| -> Vec<T> {
            (0..g.c_out * g.l_out)
                .map(|_| if rng.next_u32() < threshold { T::zero() } else { keep })
                .collect()
        };
        let e = &self.geometry.enc;
        [mk(&e[0], rng), mk(&e[1], rng), mk(&e[2], rng)]
    }

    /// Mean squared error of one example and its gradient, accumulated into
    /// `grad` with weight `scale` (so a batch mean uses `scale = 1/n`).
    pub fn loss_and_grad(
        &self,
        x: &[T],
        target: &[T],
        masks: Option<&DropoutMasks<T>>,
        scale: T,
        grad: &mut [T],
    ) -> Result<T> {
        self.check_input(x)?;
        self.check_input(target)?;
        if grad.len() != self.params.len() {
            return Err(TcnError::InvalidArgument("gradient buffer has the wrong length".into()));
        }
        let tape = self.run(x, masks);
        let n = T::from_f64(target.len() as f64);
        let loss = loss_mse(&tape.out, target)?;
        let two = T::from_f64(2.0);
        let dout: Vec<T> = tape.out.iter().zip(target).map(|(&p, &t)| two * (p - t) * scale / n).collect();
        self.backward(&tape, masks, &dout, grad);
        Ok(loss)
    }

    fn conv_forward(&self, g: &ConvGeom, x: &[T], col: &mut Vec<T>) -> Vec<T> {
        let ck = g.c_in * g.k;
        col.resize(ck * g.l_out, T::zero());
        gather(x, g.c_in, g.l_in, g.k, g.stride, g.padding, g.dilation, g.l_out, col);
        let mut y = bias_rows(&self.params[g.b_off..g.b_off + g.c_out], g.l_out);
        T::gemm(false, false, g.c_out, g.l_out, ck, T::one(), &self.params[g.w_off..g.w_off + g.c_out * ck], col, T::one(), &mut y);
        y
    }

    fn tconv_forward(&self, g: &ConvGeom, x: &[T]) -> Vec<T> {
        let ok = g.c_out * g.k;
        let mut cols = vec![T::zero(); ok * g.l_in];
        T::gemm(true, false, ok, g.l_in, g.c_in, T::one(), &self.params[g.w_off..g.w_off + g.c_in * ok], x, T::zero(), &mut cols);
        let mut y = bias_rows(&self.params[g.b_off..g.b_off + g.c_out], g.l_out);
        scatter_add(&cols, g.c_out, g.l_out, g.k, g.stride, g.padding, g.dilation, g.l_in, &mut y);
        y
    }

    fn linear_forward(&self, g: &LinearGeom, x: &[T]) -> Vec<T> {
        let mut y = self.params[g.b_off..g.b_off + g.n_out].to_vec();
        T::gemm(false, false, g.n_out, 1, g.n_in, T::one(), &self.params[g.w_off..g.w_off + g.n_in * g.n_out], x, T::one(), &mut y);
        y
    }

    fn run(&self, x: &[T], masks: Option<&DropoutMasks<T>>) -> Tape<T> {
        let geo = &self.geometry;
        let mut cols: [Vec<T>; 3] = Default::default();
        let mut pre: [Vec<T>; 3] = Default::default();
        let mut acts: [Vec<T>; 3] = Default::default();
        for i in 0..3 {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let z = self.conv_forward(&geo.enc[i], input, &mut cols[i]);
            let mut a: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            if let Some(m) = masks {
                a.iter_mut().zip(&m[i]).for_each(|(a, &m)| *a = *a * m);
            }
            pre[i] = z;
            acts[i] = a;
        }
        let latent = self.linear_forward(&geo.fc_enc, &acts[2]);
        let seed = self.linear_forward(&geo.fc_dec, &latent);

        let y1 = self.tconv_forward(&geo.dec[0], &seed);
        let a1: Vec<T> = y1.iter().map(|&v| v.max(T::zero())).collect();
        let y2 = self.tconv_forward(&geo.dec[1], &a1);
        let a2: Vec<T> = y2.iter().map(|&v| v.max(T::zero())).collect();
        let y3 = self.tconv_forward(&geo.dec[2], &a2);
        let mut out = vec![T::zero(); self.example_len()];
        self.interp.forward(&y3, IO_CHANNELS, &mut out);
        Tape { cols, pre, acts, latent, seed, dec_pre: [y1, y2, y3], dec_act: [a1, a2], out }
    }

    fn backward(&self, tape: &Tape<T>, masks: Option<&DropoutMasks<T>>, dout: &[T], grad: &mut [T]) {
        let geo = &self.geometry;
        let mut dy = vec![T::zero(); IO_CHANNELS * geo.decoder_out_len()];
        self.interp.backward(dout, IO_CHANNELS, &mut dy);

        // transpose convolutions, last to first
        for i in (0..3).rev() {
            let g = &geo.dec[i];
            let input: &[T] = if i == 0 { &tape.seed } else { &tape.dec_act[i - 1] };
            let dx = self.tconv_backward(g, input, &dy, grad);
            dy = if i == 0 {
                dx
            } else {
                dx.iter().zip(&tape.dec_pre[i - 1]).map(|(&d, &z)| if z > T::zero() { d } else { T::zero() }).collect()
            };
        }

        let dlatent = self.linear_backward(&geo.fc_dec, &tape.latent, &dy, grad);
        let mut da = self.linear_backward(&geo.fc_enc, &tape.acts[2], &dlatent, grad);

        for i in (0..3).rev() {
            let g = &geo.enc[i];
            let dz: Vec<T> = match masks {
                Some(m) => da
                    .iter()
                    .zip(&tape.pre[i])
                    .zip(&m[i])
                    .map(|((&d, &z), &m)| if z > T::zero() { d * m } else { T::zero() })
                    .collect(),
                None => da.iter().zip(&tape.pre[i]).map(|(&d, &z)| if z > T::zero() { d } else { T::zero() }).collect(),
            };
            let ck = g.c_in * g.k;
            T::gemm(false, true, g.c_out, ck, g.l_out, T::one(), &dz, &tape.cols[i], T::one(), &mut grad[g.w_off..g.w_off + g.c_out * ck]);
            add_row_sums(&dz, g.c_out, g.l_out, &mut grad[g.b_off..g.b_off + g.c_out]);
            if i > 0 {
                let mut dcol = vec![T::zero(); ck * g.l_out];
                T::gemm(true, false, ck, g.l_out, g.c_out, T::one(), &self.params[g.w_off..g.w_off + g.c_out * ck], &dz, T::zero(), &mut dcol);
                let mut dx = vec![T::zero(); g.c_in * g.l_in];
                scatter_add(&dcol, g.c_in, g.l_in, g.k, g.stride, g.padding, g.dilation, g.l_out, &mut dx);
                da = dx;
            }
        }
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    fn tconv_backward(&self, g: &ConvGeom, x: &[T], dy: &[T], grad: &mut [T]) -> Vec<T> {
        let ok = g.c_out * g.k;
        add_row_sums(dy, g.c_out, g.l_out, &mut grad[g.b_off..g.b_off + g.c_out]);
        let mut dcols = vec![T::zero(); ok * g.l_in];
        gather(dy, g.c_out, g.l_out, g.k, g.stride, g.padding, g.dilation, g.l_in, &mut dcols);
        T::gemm(false, true, g.c_in, ok, g.l_in, T::one(), x, &dcols, T::one(), &mut grad[g.w_off..g.w_off + g.c_in * ok]);
        let mut dx = vec![T::zero(); g.c_in * g.l_in];
        T::gemm(false, false, g.c_in, g.l_in, ok, T::one(), &self.params[g.w_off..g.w_off + g.c_in * ok], &dcols, T::zero(), &mut dx);
        dx
    }

    fn linear_backward(&self, g: &LinearGeom, x: &[T], dy: &[T], grad: &mut [T]) -> Vec<T> {
        T::gemm(false, false, g.n_out, g.n_in, 1, T::one(), dy, x, T::one(), &mut grad[g.w_off..g.w_off + g.n_in * g.n_out]);
        for (b, &d) in grad[g.b_off..g.b_off + g.n_out].iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![T::zero(); g.n_in];
        T::gemm(true, false, g.n_in, 1, g.n_out, T::one(), &self.params[g.w_off..g.w_off + g.n_in * g.n_out], dy, T::zero(), &mut dx);
        dx
    }
}

fn bias_rows<T: Real>(b: &[T], len: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(b.len() * len);
    for &v in b {
        y.extend(std::iter::repeat_n(v, len));
    }
    y
}

fn add_row_sums<T: Real>(m: &[T], rows: usize, cols: usize, out: &mut [T]) {
    for r in 0..rows {
        out[r] += m[r * cols..(r + 1) * cols].iter().copied().sum::<T>();
    }
}

/// Mean over all elements of the squared difference.
pub fn loss_mse<T: Real>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(TcnError::InvalidArgument(format!(
            "loss needs equal non-empty shapes, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let s: f64 = pred.iter().zip(target).map(|(&p, &t)| (p - t).as_f64().powi(2)).sum();
    Ok(T::from_f64(s / pred.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use radalt_core::rng::rng_from_seed;

    fn tiny() -> Model<f64> {
        Model::build(ModelConfig::tiny(), 11).unwrap()
    }

    fn input(m: &Model<f64>, phase: f64) -> Vec<f64> {
        (0..m.example_len()).map(|i| (i as f64 * 0.37 + phase).sin()).collect()
    }

    #[test]
    fn output_shape_and_eval_determinism() {
        let m = tiny();
        let x = input(&m, 0.0);
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a.len(), 128);
        assert_eq!(a, b);
        assert!(m.forward(&x[..100]).is_err());
        let batch: Vec<f64> = x.iter().chain(&input(&m, 1.0)).copied().collect();
        let out = m.forward_batch(&batch, 2).unwrap();
        assert_eq!(&out[..128], &a[..]);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut m = tiny();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert!(m.forward(&input(&m, 0.3)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn build_is_seed_reproducible_and_bounded() {
        let a = tiny();
        let b = tiny();
        assert_eq!(a.params(), b.params());
        let c: Model<f64> = Model::build(ModelConfig::tiny(), 12).unwrap();
        assert_ne!(a.params(), c.params());
        let g = a.geometry().clone();
        for (gi, (_, off, len)) in g.groups().into_iter().enumerate() {
            let bound = 1.0 / (g.fan_in(gi) as f64).sqrt();
            assert!(a.params()[off..off + len].iter().all(|p| p.abs() <= bound));
        }
    }

    #[test]
    fn loss_examples() {
        let p = [1.0f64, 2.0, 3.0];
        assert_eq!(loss_mse(&p, &p).unwrap(), 0.0);
        let t: Vec<f64> = p.iter().map(|v| v - 1.0).collect();
        assert_eq!(loss_mse(&p, &t).unwrap(), 1.0);
        assert!(loss_mse(&p, &t[..2]).is_err());
        let mut rng = rng_from_seed(4);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let mut naive = 0.0;
        for i in 0..a.len() {
            naive += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert!((loss_mse(&a, &b).unwrap() - naive / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn masks_scale_kept_units() {
        let m = Model::<f64>::build(ModelConfig { dropout: 0.5, ..ModelConfig::tiny() }, 0).unwrap();
        let mut rng = rng_from_seed(1);
        let masks = m.sample_masks(&mut rng);
        assert!(masks.iter().flatten().all(|&v| v == 0.0 || v == 2.0));
        let none = Model::<f64>::build(ModelConfig { dropout: 0.0, ..ModelConfig::tiny() }, 0).unwrap();
        assert!(none.sample_masks(&mut rng).iter().flatten().all(|&v| v == 1.0));
    }
}
