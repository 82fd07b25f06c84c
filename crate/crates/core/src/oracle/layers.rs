use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution kernels `weights[n][m][i][j]` plus one bias per output kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub filter: (usize, usize),
    pub stride: (usize, usize),
    pub pad: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        filter: (usize, usize),
        stride: (usize, usize),
        pad: usize,
    ) -> Result<Self> {
        if filter.0 == 0 || filter.1 == 0 {
            return Err(Error::config("kernel extents must be >= 1"));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::config("stride components must be >= 1"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            filter,
            stride,
            pad,
            weights: vec![0.0; out_channels * in_channels * filter.0 * filter.1],
            bias: vec![0.0; out_channels],
        })
    }

    /// Square filter, unit stride, "same" padding.
    pub fn same(in_channels: usize, out_channels: usize, filter: usize) -> Result<Self> {
        Self::zeros(in_channels, out_channels, (filter, filter), (1, 1), (filter - 1) / 2)
    }

    #[inline]
    pub fn index(&self, n: usize, m: usize, i: usize, j: usize) -> usize {
        ((n * self.in_channels + m) * self.filter.0 + i) * self.filter.1 + j
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.filter.0 {
            return Err(Error::shape("padded input height", self.filter.0, ph));
        }
        if pw < self.filter.1 {
            return Err(Error::shape("padded input width", self.filter.1, pw));
        }
        Ok((
            (ph - self.filter.0) / self.stride.0 + 1,
            (pw - self.filter.1) / self.stride.1 + 1,
        ))
    }

    /// Input coordinate read by output row `y` and kernel row `i`, or
    /// `None` when it falls in the zero padding.
    #[inline]
    pub fn source_row(&self, y: usize, i: usize, h: usize) -> Option<usize> {
        (y * self.stride.0 + i).checked_sub(self.pad).filter(|&r| r < h)
    }

    #[inline]
    pub fn source_col(&self, x: usize, j: usize, w: usize) -> Option<usize> {
        (x * self.stride.1 + j).checked_sub(self.pad).filter(|&c| c < w)
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != self.in_channels {
            return Err(Error::shape("conv input channels", self.in_channels, c));
        }
        Ok((c, h, w))
    }
}

/// Fully connected layer, `weights` row-major `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let outputs = rows.len();
        let inputs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::config("ragged weight matrix"));
        }
        if bias.len() != outputs {
            return Err(Error::shape("dense bias", outputs, bias.len()));
        }
        Ok(Self {
            inputs,
            outputs,
            weights: rows.concat(),
            bias,
        })
    }
}

pub fn conv2d(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let (_, h, w) = layer.check_input(input)?;
    let (oh, ow) = layer.output_hw(h, w)?;
    let x = input.data();
    let mut out = vec![0.0; layer.out_channels * oh * ow];
    for n in 0..layer.out_channels {
        let plane = &mut out[n * oh * ow..(n + 1) * oh * ow];
        plane.fill(layer.bias[n]);
        for m in 0..layer.in_channels {
            let src = &x[m * h * w..(m + 1) * h * w];
            for i in 0..layer.filter.0 {
                for j in 0..layer.filter.1 {
                    let k = layer.weights[layer.index(n, m, i, j)];
                    if k == 0.0 {
                        continue;
                    }
                    for y in 0..oh {
                        let Some(r) = layer.source_row(y, i, h) else { continue };
                        let row = &src[r * w..(r + 1) * w];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (xo, d) in dst.iter_mut().enumerate() {
                            if let Some(c) = layer.source_col(xo, j, w) {
                                *d += k * row[c];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![layer.out_channels, oh, ow], out)
}

/// Gradients of a convolution given `grad_out = dC/dz`.
pub struct ConvGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Tensor,
}

pub fn conv2d_backward(input: &Tensor, layer: &ConvLayer, grad_out: &Tensor) -> Result<ConvGrad> {
    let (c, h, w) = layer.check_input(input)?;
    let (oh, ow) = layer.output_hw(h, w)?;
    let expected = layer.out_channels * oh * ow;
    if grad_out.len() != expected {
        return Err(Error::shape("conv output gradient", expected, grad_out.len()));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut gw = vec![0.0; layer.weights.len()];
    let mut gb = vec![0.0; layer.out_channels];
    let mut gin = vec![0.0; c * h * w];
    for n in 0..layer.out_channels {
        let plane = &g[n * oh * ow..(n + 1) * oh * ow];
        gb[n] = plane.iter().sum();
        for m in 0..layer.in_channels {
            let src = &x[m * h * w..(m + 1) * h * w];
            let dst = &mut gin[m * h * w..(m + 1) * h * w];
            for i in 0..layer.filter.0 {
                for j in 0..layer.filter.1 {
                    let idx = layer.index(n, m, i, j);
                    let k = layer.weights[idx];
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let Some(r) = layer.source_row(y, i, h) else { continue };
                        for xo in 0..ow {
                            if let Some(col) = layer.source_col(xo, j, w) {
                                let d = plane[y * ow + xo];
                                acc += d * src[r * w + col];
                                dst[r * w + col] += k * d;
                            }
                        }
                    }
                    gw[idx] = acc;
                }
            }
        }
    }
    Ok(ConvGrad {
        weights: gw,
        bias: gb,
        input: Tensor::new(vec![c, h, w], gin)?,
    })
}

pub fn relu(z: &Tensor) -> Tensor {
    z.map(|x| x.max(0.0))
}

/// 1 where `z > 0`, else 0 (including at exactly zero).
pub fn relu_derivative(z: &Tensor) -> Tensor {
    z.map(|x| if x > 0.0 { 1.0 } else { 0.0 })
}

/// Output of a 2x2 / stride-2 max-pool. `argmax[o]` is the flat input
/// index that won output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn pooled_hw(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(2), w.div_ceil(2))
}

/// Flat input indices of the window feeding pooled cell `(ch, y, x)`, in
/// scan order. Positions past an odd edge are omitted: they act as a
/// sentinel that never wins.
pub fn pool_window(ch: usize, y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(move |(dy, dx)| (2 * y + dy, 2 * x + dx))
        .filter(move |&(r, c)| r < h && c < w)
        .map(move |(r, c)| (ch * h + r) * w + c)
}

pub fn maxpool2x2(input: &Tensor) -> Result<Pooled> {
    let (c, h, w) = input.chw()?;
    let (oh, ow) = pooled_hw(h, w);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = usize::MAX;
                for idx in pool_window(ch, y, xo, h, w) {
                    if best == usize::MAX || x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

/// Scatter pooled-output gradients back onto the winning inputs.
pub fn maxpool2x2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape("pool gradient", argmax.len(), grad_out.len()));
    }
    let mut g = Tensor::zeros(input_shape);
    let dst = g.data_mut();
    for (&idx, &d) in argmax.iter().zip(grad_out.data()) {
        dst[idx] += d;
    }
    Ok(g)
}

/// `W x + b`.
pub fn fc(input: &Tensor, layer: &DenseLayer) -> Result<Tensor> {
    if input.len() != layer.inputs {
        return Err(Error::shape("dense input length", layer.inputs, input.len()));
    }
    let x = input.data();
    let out = layer
        .weights
        .chunks_exact(layer.inputs.max(1))
        .take(layer.outputs)
        .zip(&layer.bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::vector(out))
}

pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Tensor,
}

pub fn fc_backward(input: &Tensor, layer: &DenseLayer, grad_out: &Tensor) -> Result<DenseGrad> {
    if grad_out.len() != layer.outputs {
        return Err(Error::shape("dense output gradient", layer.outputs, grad_out.len()));
    }
    if input.len() != layer.inputs {
        return Err(Error::shape("dense input length", layer.inputs, input.len()));
    }
    let x = input.data();
    let d = grad_out.data();
    let mut gw = vec![0.0; layer.weights.len()];
    let mut gin = vec![0.0; layer.inputs];
    for (o, &dk) in d.iter().enumerate() {
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
        for j in 0..layer.inputs {
            grow[j] = dk * x[j];
            gin[j] += row[j] * dk;
        }
    }
    Ok(DenseGrad {
        weights: gw,
        bias: d.to_vec(),
        input: Tensor::vector(gin),
    })
}
