//! Channels-last convolution and max-pooling kernels.
//!
//! Inputs are `(T, H, W, C_in)` and kernels `(KT, KH, KW, C_in, C_out)`. Both the
//! forward pass and the weight gradient scatter from non-zero input entries, which
//! keeps the mostly-empty tarmac frames cheap. The input gradient gathers only over
//! output positions with a non-zero upstream gradient.

use super::{NnError, Tensor};

/// Shape bookkeeping for one 3-D convolution. 1-D convolutions use `H = W = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_dims: [usize; 3],
    pub in_channels: usize,
    pub kernel: [usize; 3],
    pub out_channels: usize,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn out_dims(&self) -> Result<[usize; 3], NnError> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = self.in_dims[a] + 2 * self.padding[a];
            if self.kernel[a] == 0 || self.stride[a] == 0 || padded < self.kernel[a] {
                return Err(NnError::Shape(format!(
                    "axis {a}: input {} with padding {} cannot fit kernel {} at stride {}",
                    self.in_dims[a], self.padding[a], self.kernel[a], self.stride[a]
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    pub fn in_len(&self) -> usize {
        self.in_dims.iter().product::<usize>() * self.in_channels
    }

    pub fn weight_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels * self.out_channels
    }

    pub fn out_len(&self) -> Result<usize, NnError> {
        Ok(self.out_dims()?.iter().product::<usize>() * self.out_channels)
    }

    /// For each axis and input coordinate `p`, the `(k, o)` pairs with
    /// `o * stride + k - padding == p`.
    fn taps(&self, out: [usize; 3]) -> [Vec<Vec<(usize, usize)>>; 3] {
        std::array::from_fn(|a| {
            (0..self.in_dims[a])
                .map(|p| {
                    (0..self.kernel[a])
                        .filter_map(|k| {
                            let q = p + self.padding[a];
                            if q < k || (q - k) % self.stride[a] != 0 {
                                return None;
                            }
                            let o = (q - k) / self.stride[a];
                            (o < out[a]).then_some((k, o))
                        })
                        .collect()
                })
                .collect()
        })
    }
}

pub fn conv_forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: &[f64]) -> Result<Vec<f64>, NnError> {
    let out_dims = g.out_dims()?;
    if input.len() != g.in_len() || weight.len() != g.weight_len() || bias.len() != g.out_channels {
        return Err(NnError::Shape("convolution operand lengths do not match geometry".into()));
    }
    let (ci_n, co_n) = (g.in_channels, g.out_channels);
    let [_, ih, iw] = g.in_dims;
    let [_, oh, ow] = out_dims;
    let [_, kh, kw] = g.kernel;
    let mut out = vec![0.0; out_dims.iter().product::<usize>() * co_n];
    for row in out.chunks_exact_mut(co_n) {
        row.copy_from_slice(bias);
    }
    let taps = g.taps(out_dims);
    for (pt, tt) in taps[0].iter().enumerate() {
        for (ph, th) in taps[1].iter().enumerate() {
            for (pw, tw) in taps[2].iter().enumerate() {
                let x = &input[((pt * ih + ph) * iw + pw) * ci_n..][..ci_n];
                if x.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for &(kt, ot) in tt {
                    for &(kh_, oh_) in th {
                        for &(kw_, ow_) in tw {
                            let y = &mut out[((ot * oh + oh_) * ow + ow_) * co_n..][..co_n];
                            let wbase = ((kt * kh + kh_) * kw + kw_) * ci_n * co_n;
                            for (ci, &xv) in x.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let wrow = &weight[wbase + ci * co_n..][..co_n];
                                for (yv, wv) in y.iter_mut().zip(wrow) {
                                    *yv += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients, and the input gradient when requested.
pub fn conv_backward(
    g: &ConvGeometry,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) -> Result<(), NnError> {
    let out_dims = g.out_dims()?;
    let (ci_n, co_n) = (g.in_channels, g.out_channels);
    if dout.len() != out_dims.iter().product::<usize>() * co_n
        || dweight.len() != g.weight_len()
        || dbias.len() != co_n
        || dinput.as_ref().is_some_and(|d| d.len() != g.in_len())
    {
        return Err(NnError::Shape("convolution gradient lengths do not match geometry".into()));
    }
    let [_, ih, iw] = g.in_dims;
    let [_, oh, ow] = out_dims;
    let [_, kh, kw] = g.kernel;
    let live: Vec<bool> = dout
        .chunks_exact(co_n)
        .map(|row| row.iter().any(|v| *v != 0.0))
        .collect();
    for (row, &alive) in dout.chunks_exact(co_n).zip(&live) {
        if alive {
            for (b, d) in dbias.iter_mut().zip(row) {
                *b += d;
            }
        }
    }
    let taps = g.taps(out_dims);
    for (pt, tt) in taps[0].iter().enumerate() {
        for (ph, th) in taps[1].iter().enumerate() {
            for (pw, tw) in taps[2].iter().enumerate() {
                let pos = ((pt * ih + ph) * iw + pw) * ci_n;
                let x = &input[pos..][..ci_n];
                let x_zero = x.iter().all(|v| *v == 0.0);
                if x_zero && dinput.is_none() {
                    continue;
                }
                for &(kt, ot) in tt {
                    for &(kh_, oh_) in th {
                        for &(kw_, ow_) in tw {
                            let o = (ot * oh + oh_) * ow + ow_;
                            if !live[o] {
                                continue;
                            }
                            let dy = &dout[o * co_n..][..co_n];
                            let wbase = ((kt * kh + kh_) * kw + kw_) * ci_n * co_n;
                            if let Some(dx) = dinput.as_deref_mut() {
                                let dx = &mut dx[pos..][..ci_n];
                                for (ci, dxv) in dx.iter_mut().enumerate() {
                                    let wrow = &weight[wbase + ci * co_n..][..co_n];
                                    *dxv += wrow.iter().zip(dy).map(|(w, d)| w * d).sum::<f64>();
                                }
                            }
                            if x_zero {
                                continue;
                            }
                            for (ci, &xv) in x.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let dw = &mut dweight[wbase + ci * co_n..][..co_n];
                                for (dwv, d) in dw.iter_mut().zip(dy) {
                                    *dwv += xv * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Non-overlapping max pooling with window = stride; trailing remainders are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub in_dims: [usize; 3],
    pub channels: usize,
    pub window: [usize; 3],
}

impl PoolGeometry {
    pub fn out_dims(&self) -> Result<[usize; 3], NnError> {
        let mut out = [0; 3];
        for a in 0..3 {
            if self.window[a] == 0 || self.in_dims[a] < self.window[a] {
                return Err(NnError::Shape(format!(
                    "axis {a}: pool window {} larger than input {}",
                    self.window[a], self.in_dims[a]
                )));
            }
            out[a] = self.in_dims[a] / self.window[a];
        }
        Ok(out)
    }

    pub fn is_identity(&self) -> bool {
        self.window == [1, 1, 1]
    }
}

/// Returns pooled values and, per output entry, the flat input index of its maximum
/// (the first one in scan order on ties).
pub fn max_pool_forward(g: &PoolGeometry, input: &[f64]) -> Result<(Vec<f64>, Vec<u32>), NnError> {
    let od = g.out_dims()?;
    let c_n = g.channels;
    let [_, ih, iw] = g.in_dims;
    let [_, oh, ow] = od;
    let n_out = od.iter().product::<usize>() * c_n;
    let mut out = vec![f64::NEG_INFINITY; n_out];
    let mut arg = vec![0u32; n_out];
    for ot in 0..od[0] {
        for oh_ in 0..oh {
            for ow_ in 0..ow {
                let obase = ((ot * oh + oh_) * ow + ow_) * c_n;
                for dt in 0..g.window[0] {
                    for dh in 0..g.window[1] {
                        for dw in 0..g.window[2] {
                            let (t, h, w) = (ot * g.window[0] + dt, oh_ * g.window[1] + dh, ow_ * g.window[2] + dw);
                            let ibase = ((t * ih + h) * iw + w) * c_n;
                            for c in 0..c_n {
                                let v = input[ibase + c];
                                if v > out[obase + c] {
                                    out[obase + c] = v;
                                    arg[obase + c] = (ibase + c) as u32;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool_backward(argmax: &[u32], dout: &[f64], in_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; in_len];
    for (&i, &d) in argmax.iter().zip(dout) {
        dx[i as usize] += d;
    }
    dx
}

/// 3-D cross-correlation of a `(T, H, W, C_in)` input with a
/// `(KT, KH, KW, C_in, C_out)` kernel.
pub fn conv3d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: [usize; 3],
    padding: [usize; 3],
) -> Result<Tensor, NnError> {
    let (&[t, h, w, ci], &[kt, kh, kw, kci, co]) = (input.shape(), kernel.shape()) else {
        return Err(NnError::Shape("conv3d expects a rank-4 input and a rank-5 kernel".into()));
    };
    if kci != ci {
        return Err(NnError::Shape(format!("kernel expects {kci} input channels, input has {ci}")));
    }
    let g = ConvGeometry {
        in_dims: [t, h, w],
        in_channels: ci,
        kernel: [kt, kh, kw],
        out_channels: co,
        stride,
        padding,
    };
    let od = g.out_dims()?;
    let out = conv_forward(&g, input.data(), kernel.data(), bias)?;
    Tensor::new(vec![od[0], od[1], od[2], co], out)
}

/// 1-D cross-correlation of a `(T, C_in)` input with a `(K, C_in, C_out)` kernel.
pub fn conv1d(input: &Tensor, kernel: &Tensor, bias: &[f64], stride: usize, padding: usize) -> Result<Tensor, NnError> {
    let (&[t, ci], &[k, kci, co]) = (input.shape(), kernel.shape()) else {
        return Err(NnError::Shape("conv1d expects a rank-2 input and a rank-3 kernel".into()));
    };
    if kci != ci {
        return Err(NnError::Shape(format!("kernel expects {kci} input channels, input has {ci}")));
    }
    let g = ConvGeometry {
        in_dims: [t, 1, 1],
        in_channels: ci,
        kernel: [k, 1, 1],
        out_channels: co,
        stride: [stride, 1, 1],
        padding: [padding, 0, 0],
    };
    let od = g.out_dims()?;
    let out = conv_forward(&g, input.data(), kernel.data(), bias)?;
    Tensor::new(vec![od[0], co], out)
}
