//! Layer specifications and their affine kernels.
//!
//! Every layer computes `z = affine(x)` followed by an elementwise activation.
//! Multi-channel signals are stored channel-major (`x[c * len + t]`), which is
//! also the flatten order between convolutional and dense layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convolution kernel width and stride (valid padding).
pub const KERNEL: usize = 3;
pub const STRIDE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Linear,
    Elu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Softplus => sigmoid(z),
        }
    }

    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 0.0,
            Activation::Elu => {
                if z > 0.0 {
                    0.0
                } else {
                    z.exp()
                }
            }
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Elu => 1,
            Activation::Softplus => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Elu),
            2 => Some(Activation::Softplus),
            _ => None,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Dense,
    Conv1d,
    Conv1dTranspose,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Dense => 0,
            LayerKind::Conv1d => 1,
            LayerKind::Conv1dTranspose => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LayerKind::Dense),
            1 => Some(LayerKind::Conv1d),
            2 => Some(LayerKind::Conv1dTranspose),
            _ => None,
        }
    }
}

/// Shape and activation of one layer. Dense layers use a single channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub in_len: usize,
    pub out_channels: usize,
    pub out_len: usize,
    pub activation: Activation,
}

/// `⌊(len − kernel)/stride⌋ + 1`, or `None` when the input is shorter than the kernel.
pub fn conv_output_len(in_len: usize) -> Option<usize> {
    (in_len >= KERNEL).then(|| (in_len - KERNEL) / STRIDE + 1)
}

impl LayerSpec {
    pub fn dense(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense, in_channels: 1, in_len: n_in, out_channels: 1, out_len: n_out, activation }
    }

    pub fn conv(in_channels: usize, in_len: usize, filters: usize, activation: Activation) -> Result<Self> {
        let out_len = conv_output_len(in_len)
            .ok_or_else(|| Error::invalid(format!("conv input length {in_len} shorter than kernel {KERNEL}")))?;
        Ok(Self { kind: LayerKind::Conv1d, in_channels, in_len, out_channels: filters, out_len, activation })
    }

    /// Transposed convolution producing exactly `out_len` samples; the trailing
    /// `out_len − stride·in_len` positions (at most `stride − 1`) carry only the bias.
    pub fn conv_transpose(
        in_channels: usize,
        in_len: usize,
        filters: usize,
        out_len: usize,
        activation: Activation,
    ) -> Result<Self> {
        let base = STRIDE * in_len;
        if out_len < base || out_len >= base + STRIDE {
            return Err(Error::invalid(format!(
                "transposed conv from length {in_len} cannot produce length {out_len}"
            )));
        }
        Ok(Self { kind: LayerKind::Conv1dTranspose, in_channels, in_len, out_channels: filters, out_len, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.in_channels * self.in_len
    }

    pub fn out_dim(&self) -> usize {
        self.out_channels * self.out_len
    }

    pub fn n_weights(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.in_len * self.out_len,
            LayerKind::Conv1d | LayerKind::Conv1dTranspose => self.in_channels * self.out_channels * KERNEL,
        }
    }

    pub fn n_bias(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.out_len,
            _ => self.out_channels,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.n_bias()
    }

    /// `(fan_in, fan_out)` for Glorot initialization.
    pub fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense => (self.in_len, self.out_len),
            _ => (self.in_channels * KERNEL, self.out_channels * KERNEL),
        }
    }

    /// `z = affine(x)` with this layer's parameter slice `p` (weights, then biases).
    pub fn affine(&self, p: &[f64], x: &[f64], z: &mut [f64]) {
        let (w, b) = p.split_at(self.n_weights());
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.in_len;
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    *zo = b[o] + dot(row, x);
                }
            }
            LayerKind::Conv1d => {
                let (ci, li, lo) = (self.in_channels, self.in_len, self.out_len);
                for f in 0..self.out_channels {
                    for t in 0..lo {
                        let mut acc = b[f];
                        for c in 0..ci {
                            let wk = &w[(f * ci + c) * KERNEL..(f * ci + c + 1) * KERNEL];
                            let xs = &x[c * li + STRIDE * t..c * li + STRIDE * t + KERNEL];
                            acc += wk[0] * xs[0] + wk[1] * xs[1] + wk[2] * xs[2];
                        }
                        z[f * lo + t] = acc;
                    }
                }
            }
            LayerKind::Conv1dTranspose => {
                let (co, li, lo) = (self.out_channels, self.in_len, self.out_len);
                for f in 0..co {
                    z[f * lo..(f + 1) * lo].fill(b[f]);
                }
                for c in 0..self.in_channels {
                    for f in 0..co {
                        let wk = &w[(c * co + f) * KERNEL..(c * co + f + 1) * KERNEL];
                        let zf = &mut z[f * lo..(f + 1) * lo];
                        for t in 0..li {
                            let xv = x[c * li + t];
                            for k in 0..KERNEL {
                                zf[STRIDE * t + k] += wk[k] * xv;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Reverse of [`affine`](Self::affine): accumulates `∂/∂p` into `gp` and `∂/∂x` into `gx`.
    pub fn affine_backward(&self, p: &[f64], x: &[f64], zbar: &[f64], gp: &mut [f64], gx: &mut [f64]) {
        let nw = self.n_weights();
        let w = &p[..nw];
        let (gw, gb) = gp.split_at_mut(nw);
        match self.kind {
            LayerKind::Dense => {
                let n_in = self.in_len;
                for (o, &zb) in zbar.iter().enumerate() {
                    if zb == 0.0 {
                        continue;
                    }
                    gb[o] += zb;
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += zb * x[i];
                        gx[i] += zb * row[i];
                    }
                }
            }
            LayerKind::Conv1d => {
                let (ci, li, lo) = (self.in_channels, self.in_len, self.out_len);
                for f in 0..self.out_channels {
                    for t in 0..lo {
                        let zb = zbar[f * lo + t];
                        gb[f] += zb;
                        for c in 0..ci {
                            let base = (f * ci + c) * KERNEL;
                            let xo = c * li + STRIDE * t;
                            for k in 0..KERNEL {
                                gw[base + k] += zb * x[xo + k];
                                gx[xo + k] += zb * w[base + k];
                            }
                        }
                    }
                }
            }
            LayerKind::Conv1dTranspose => {
                let (co, li, lo) = (self.out_channels, self.in_len, self.out_len);
                for f in 0..co {
                    gb[f] += zbar[f * lo..(f + 1) * lo].iter().sum::<f64>();
                }
                for c in 0..self.in_channels {
                    for f in 0..co {
                        let base = (c * co + f) * KERNEL;
                        let zf = &zbar[f * lo..(f + 1) * lo];
                        for t in 0..li {
                            let xv = x[c * li + t];
                            let mut acc = 0.0;
                            for k in 0..KERNEL {
                                let zb = zf[STRIDE * t + k];
                                gw[base + k] += zb * xv;
                                acc += zb * w[base + k];
                            }
                            gx[c * li + t] += acc;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
