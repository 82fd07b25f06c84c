use serde::{Deserialize, Serialize};

use crate::arch::NetworkConfig;
use crate::error::Result;

pub const OPS_PER_MAC: u64 = 2;
/// Backward and update passes are charged twice the forward work.
pub const TRAINING_MULTIPLIER: u64 = 3;

pub const OP_COUNT_METHOD: &str = "one multiply-accumulate = 2 ops; one comparison or activation = 1 op; \
pooling costs (window size - 1) comparisons; a training step costs 3x the forward ops";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    pub conv_macs: u64,
    pub dense_macs: u64,
    pub activations: u64,
    pub comparisons: u64,
}

impl OpCount {
    pub fn forward(&self) -> u64 {
        OPS_PER_MAC * (self.conv_macs + self.dense_macs) + self.activations + self.comparisons
    }

    pub fn training(&self) -> u64 {
        TRAINING_MULTIPLIER * self.forward()
    }
}

/// Ops of one conv layer on an `in_h x in_w` map with symmetric padding `pad`.
pub fn conv_ops(in_channels: usize, out_channels: usize, filter: usize, in_h: usize, in_w: usize, pad: usize) -> u64 {
    let oh = (in_h + 2 * pad + 1).saturating_sub(filter);
    let ow = (in_w + 2 * pad + 1).saturating_sub(filter);
    OPS_PER_MAC * (out_channels * oh * ow * in_channels * filter * filter) as u64
}

fn pool_comparisons(h: usize, w: usize) -> u64 {
    let rows: Vec<usize> = (0..h.div_ceil(2)).map(|y| (h - 2 * y).min(2)).collect();
    let cols: Vec<usize> = (0..w.div_ceil(2)).map(|x| (w - 2 * x).min(2)).collect();
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r * c - 1) as u64))
        .sum()
}

/// Per-sample op count for `net` at its configured input size.
pub fn count_ops(net: &NetworkConfig) -> Result<OpCount> {
    let shapes = net.stage_shapes()?;
    let mut ops = OpCount::default();
    for (stage, shape) in net.fe.iter().zip(&shapes) {
        let [mut channels, h, w] = shape.input;
        for (filter, width) in stage.conv_layers() {
            ops.conv_macs += (width * h * w * channels * filter * filter) as u64;
            channels = width;
        }
        let [c, oh, ow] = shape.conv_output;
        ops.activations += (c * oh * ow) as u64;
        ops.comparisons += c as u64 * pool_comparisons(oh, ow);
    }
    let mut inputs = net.feature_count()?;
    for outputs in net.dense_widths() {
        ops.dense_macs += (inputs * outputs) as u64;
        ops.activations += outputs as u64;
        inputs = outputs;
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_conv_is_one_mac() {
        assert_eq!(conv_ops(1, 1, 1, 1, 1, 0), 2);
    }

    #[test]
    fn valid_conv_closed_form() {
        assert_eq!(conv_ops(1, 1, 3, 28, 28, 0), 12168);
    }

    #[test]
    fn odd_pool_has_short_windows() {
        // 3x3: one full window, two pairs, one single.
        assert_eq!(pool_comparisons(3, 3), 3 + 1 + 1);
        assert_eq!(pool_comparisons(4, 4), 12);
    }
}
