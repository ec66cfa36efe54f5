//! Model hyperparameters and the layer geometry derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcnError};

/// Reference decoder seed length at `input_len = 7500`.
pub const DEC_L0_REF: usize = 117;
pub const REF_INPUT_LEN: usize = 7500;
pub const IO_CHANNELS: usize = 2;

/// Encoder stride reading.
///
/// `Literal` keeps stride 1 in every encoder layer, which leaves a ~31M
/// parameter bottleneck layer. `ParameterMatched` uses strides (3, 5, 5),
/// mirroring the decoder, for ~0.98M parameters in total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Literal,
    #[default]
    ParameterMatched,
}

impl Variant {
    pub fn encoder_strides(&self) -> [usize; 3] {
        match self {
            Variant::Literal => [1, 1, 1],
            Variant::ParameterMatched => [3, 5, 5],
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = TcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Variant::Literal),
            "parameter_matched" => Ok(Variant::ParameterMatched),
            other => Err(TcnError::InvalidArgument(format!(
                "unknown variant '{other}' (expected literal or parameter_matched)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_len: usize,
    pub latent_dim: usize,
    /// Encoder output channels; the decoder mirrors them in reverse.
    pub enc_channels: [usize; 3],
    pub enc_kernel: usize,
    pub enc_padding: usize,
    pub enc_dilations: [usize; 3],
    pub variant: Variant,
    /// Decoder seed length; `None` scales the reference value with `input_len`.
    pub dec_l0: Option<usize>,
    pub dec_kernels: [usize; 3],
    pub dec_strides: [usize; 3],
    pub dec_padding: usize,
    /// Dropout after each encoder convolution, training only.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: REF_INPUT_LEN,
            latent_dim: 128,
            enc_channels: [128, 64, 32],
            enc_kernel: 3,
            enc_padding: 2,
            enc_dilations: [1, 2, 4],
            variant: Variant::ParameterMatched,
            dec_l0: None,
            dec_kernels: [3, 6, 6],
            dec_strides: [3, 5, 5],
            dec_padding: 1,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    /// Small model used for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_len: 64,
            latent_dim: 4,
            enc_channels: [4, 3, 2],
            dec_l0: Some(2),
            ..Self::default()
        }
    }

    pub fn resolved_dec_l0(&self) -> usize {
        self.dec_l0.unwrap_or_else(|| {
            ((DEC_L0_REF as f64 * self.input_len as f64 / REF_INPUT_LEN as f64).round() as usize).max(1)
        })
    }

    pub fn compression_ratio(&self) -> f64 {
        self.latent_dim as f64 / self.input_len as f64
    }
}

/// `floor((l + 2p - d(k-1) - 1) / s) + 1`, or `None` if the kernel does not fit.
pub fn conv_out_len(l: usize, k: usize, s: usize, p: usize, d: usize) -> Option<usize> {
    let span = d * (k - 1) + 1;
    (l + 2 * p).checked_sub(span).map(|n| n / s + 1)
}

/// `(l - 1) s - 2p + d(k-1) + 1`, or `None` if non-positive.
pub fn tconv_out_len(l: usize, k: usize, s: usize, p: usize, d: usize) -> Option<usize> {
    ((l - 1) * s + d * (k - 1) + 1).checked_sub(2 * p).filter(|&n| n > 0)
}

/// One convolution or transpose convolution. Weights are stored as
/// `c_out x (c_in k)` for convolutions and `c_in x (c_out k)` for transposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub l_in: usize,
    pub l_out: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl ConvGeom {
    pub fn n_weights(&self) -> usize {
        self.c_in * self.c_out * self.k
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.c_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LinearGeom {
    pub n_in: usize,
    pub n_out: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl LinearGeom {
    pub fn n_params(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

/// Parameter group names in storage order.
pub const GROUPS: [&str; 16] = [
    "enc1.weight", "enc1.bias", "enc2.weight", "enc2.bias", "enc3.weight", "enc3.bias",
    "fc_enc.weight", "fc_enc.bias", "fc_dec.weight", "fc_dec.bias",
    "dec1.weight", "dec1.bias", "dec2.weight", "dec2.bias", "dec3.weight", "dec3.bias",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Geometry {
    pub input_len: usize,
    pub enc: [ConvGeom; 3],
    pub fc_enc: LinearGeom,
    pub fc_dec: LinearGeom,
    pub dec_l0: usize,
    pub dec: [ConvGeom; 3],
    pub n_params: usize,
}

impl Geometry {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let bad = |m: String| Err(TcnError::InvalidConfig(m));
        if cfg.input_len == 0 || cfg.latent_dim == 0 {
            return bad("input_len and latent_dim must be positive".into());
        }
        if cfg.enc_channels.contains(&0) || cfg.enc_kernel == 0 || cfg.enc_dilations.contains(&0) {
            return bad("encoder channels, kernel and dilations must be positive".into());
        }
        if cfg.dec_kernels.contains(&0) || cfg.dec_strides.contains(&0) {
            return bad("decoder kernels and strides must be positive".into());
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", cfg.dropout));
        }

        let mut off = 0;
        let mut alloc = |n: usize| {
            let o = off;
            off += n;
            o
        };

        let strides = cfg.variant.encoder_strides();
        let mut c_in = IO_CHANNELS;
        let mut l = cfg.input_len;
        let mut enc = Vec::with_capacity(3);
        for i in 0..3 {
            let (k, s, p, d) = (cfg.enc_kernel, strides[i], cfg.enc_padding, cfg.enc_dilations[i]);
            let Some(l_out) = conv_out_len(l, k, s, p, d) else {
                return bad(format!("encoder layer {} collapses a length-{l} input", i + 1));
            };
            let c_out = cfg.enc_channels[i];
            let w_off = alloc(c_out * c_in * k);
            let b_off = alloc(c_out);
            enc.push(ConvGeom { c_in, c_out, k, stride: s, padding: p, dilation: d, l_in: l, l_out, w_off, b_off });
            c_in = c_out;
            l = l_out;
        }

        let flat = c_in * l;
        let fc_enc = LinearGeom { n_in: flat, n_out: cfg.latent_dim, w_off: alloc(flat * cfg.latent_dim), b_off: 0 };
        let fc_enc = LinearGeom { b_off: alloc(cfg.latent_dim), ..fc_enc };

        let dec_l0 = cfg.resolved_dec_l0();
        let c0 = cfg.enc_channels[2];
        let n_seed = c0 * dec_l0;
        let fc_dec = LinearGeom { n_in: cfg.latent_dim, n_out: n_seed, w_off: alloc(n_seed * cfg.latent_dim), b_off: 0 };
        let fc_dec = LinearGeom { b_off: alloc(n_seed), ..fc_dec };

        let dec_channels = [cfg.enc_channels[2], cfg.enc_channels[1], cfg.enc_channels[0], IO_CHANNELS];
        let mut l = dec_l0;
        let mut dec = Vec::with_capacity(3);
        for i in 0..3 {
            let (k, s, p) = (cfg.dec_kernels[i], cfg.dec_strides[i], cfg.dec_padding);
            let Some(l_out) = tconv_out_len(l, k, s, p, 1) else {
                return bad(format!("decoder layer {} produces no output from length {l}", i + 1));
            };
            let (ci, co) = (dec_channels[i], dec_channels[i + 1]);
            let w_off = alloc(ci * co * k);
            let b_off = alloc(co);
            dec.push(ConvGeom { c_in: ci, c_out: co, k, stride: s, padding: p, dilation: 1, l_in: l, l_out, w_off, b_off });
            l = l_out;
        }
        if l < cfg.input_len {
            return bad(format!(
                "decoder reaches only {l} samples, below input_len {}; raise dec_l0",
                cfg.input_len
            ));
        }

        Ok(Self {
            input_len: cfg.input_len,
            enc: [enc[0], enc[1], enc[2]],
            fc_enc,
            fc_dec,
            dec_l0,
            dec: [dec[0], dec[1], dec[2]],
            n_params: off,
        })
    }

    pub fn encoder_lengths(&self) -> [usize; 4] {
        [self.enc[0].l_in, self.enc[0].l_out, self.enc[1].l_out, self.enc[2].l_out]
    }

    /// Seed length, each transpose output, then the interpolated output length.
    pub fn decoder_lengths(&self) -> [usize; 5] {
        [self.dec_l0, self.dec[0].l_out, self.dec[1].l_out, self.dec[2].l_out, self.input_len]
    }

    pub fn decoder_out_len(&self) -> usize {
        self.dec[2].l_out
    }

    /// `(name, offset, len)` for every parameter group in storage order.
    pub fn groups(&self) -> Vec<(&'static str, usize, usize)> {
        let mut v = Vec::with_capacity(16);
        let mut names = GROUPS.iter();
        let push_conv = |g: &ConvGeom, v: &mut Vec<_>, names: &mut std::slice::Iter<&'static str>| {
            v.push((*names.next().unwrap(), g.w_off, g.n_weights()));
            v.push((*names.next().unwrap(), g.b_off, g.c_out));
        };
        for g in &self.enc {
            push_conv(g, &mut v, &mut names);
        }
        for g in [&self.fc_enc, &self.fc_dec] {
            v.push((*names.next().unwrap(), g.w_off, g.n_in * g.n_out));
            v.push((*names.next().unwrap(), g.b_off, g.n_out));
        }
        for g in &self.dec {
            push_conv(g, &mut v, &mut names);
        }
        v
    }

    /// Inputs feeding each output of the group's layer, for uniform init bounds.
    pub(crate) fn fan_in(&self, group: usize) -> usize {
        match group / 2 {
            0..=2 => {
                let g = &self.enc[group / 2];
                g.c_in * g.k
            }
            3 => self.fc_enc.n_in,
            4 => self.fc_dec.n_in,
            _ => {
                let g = &self.dec[group / 2 - 5];
                g.c_in * g.k
            }
        }
    }
}
