//! Temporal convolutional network: residual blocks of two causal dilated
//! convolutions, dilation doubling per block, and a 1x1 output projection.

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tape::{ConvRef, DenseRef, Tape, Var};
use crate::nn::Activation;
use crate::{Error, Result};

/// Number of past instants that can influence one output: `1 + 2 (k - 1) (2^B - 1)`.
pub fn receptive_field(kernel: usize, blocks: usize) -> usize {
    1 + 2 * kernel.saturating_sub(1) * ((1usize << blocks) - 1)
}

/// Smallest block count whose receptive field covers `history` instants.
pub fn min_blocks(kernel: usize, history: usize) -> Result<usize> {
    if kernel < 2 && history > 1 {
        return Err(Error::InvalidInput(format!("kernel size {kernel} cannot cover a history of {history}")));
    }
    let mut b = 1;
    while receptive_field(kernel, b) < history {
        b += 1;
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnBlock {
    pub dilation: usize,
    pub conv1: ConvRef,
    pub conv2: ConvRef,
    /// 1x1 projection on the skip path, present when the channel count changes.
    pub skip: Option<ConvRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tcn {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub out_channels: usize,
    pub blocks: Vec<TcnBlock>,
    pub output: ConvRef,
}

fn alloc_conv(store: &mut ParameterStore, name: &str, in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> ConvRef {
    let fan_in = in_channels * kernel;
    let weight = store.alloc(format!("{name}.weight"), out_channels * in_channels * kernel, fan_in);
    let bias = store.alloc(format!("{name}.bias"), out_channels, fan_in);
    ConvRef { weight, bias, in_channels, out_channels, kernel, dilation }
}

impl Tcn {
    pub fn new(
        store: &mut ParameterStore,
        prefix: &str,
        in_channels: usize,
        hidden_channels: usize,
        blocks: usize,
        kernel: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if blocks == 0 || kernel == 0 || in_channels == 0 || hidden_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidInput("TCN dimensions must all be positive".into()));
        }
        let blocks = (0..blocks)
            .map(|b| {
                let dilation = 1usize << b;
                let cin = if b == 0 { in_channels } else { hidden_channels };
                let name = format!("{prefix}.block{b}");
                let conv1 = alloc_conv(store, &format!("{name}.conv1"), cin, hidden_channels, kernel, dilation);
                let conv2 = alloc_conv(store, &format!("{name}.conv2"), hidden_channels, hidden_channels, kernel, dilation);
                let skip = (cin != hidden_channels).then(|| alloc_conv(store, &format!("{name}.skip"), cin, hidden_channels, 1, 1));
                TcnBlock { dilation, conv1, conv2, skip }
            })
            .collect();
        let output = alloc_conv(store, &format!("{prefix}.output"), hidden_channels, out_channels, 1, 1);
        Ok(Self { in_channels, hidden_channels, kernel, out_channels, blocks, output })
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.kernel, self.blocks.len())
    }

    fn body(&self, tape: &mut Tape<'_>, x: Var, len: usize) -> Var {
        let mut h = x;
        for block in &self.blocks {
            let a = tape.conv(h, block.conv1, len);
            let a = tape.activation(a, Activation::Relu);
            let a = tape.conv(a, block.conv2, len);
            let a = tape.activation(a, Activation::Relu);
            let skip = match block.skip {
                Some(p) => tape.conv(h, p, len),
                None => h,
            };
            h = tape.add(skip, a);
        }
        h
    }

    /// Full output sequence, `[out_channels][len]`, for a `[in_channels][len]` input.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, len: usize) -> Var {
        let h = self.body(tape, x, len);
        tape.conv(h, self.output, len)
    }

    /// Output at the final instant only.
    pub fn forward_last(&self, tape: &mut Tape<'_>, x: Var, len: usize) -> Var {
        let h = self.body(tape, x, len);
        let idx: Vec<usize> = (0..self.hidden_channels).map(|c| c * len + len - 1).collect();
        let last = tape.gather(h, &idx);
        let o = self.output;
        tape.dense(last, DenseRef { weight: o.weight, bias: o.bias, rows: o.out_channels, cols: o.in_channels })
    }
}

/// Evaluates the TCN on a channel-major sequence.
pub fn tcn_forward(net: &Tcn, params: &[f64], seq: &[f64], len: usize) -> Result<Vec<f64>> {
    if seq.len() != net.in_channels * len {
        return Err(Error::DimensionMismatch { context: "TCN input", expected: net.in_channels * len, actual: seq.len() });
    }
    let mut tape = Tape::new(params);
    let x = tape.input(seq.to_vec());
    let y = net.forward(&mut tape, x, len);
    Ok(tape.value(y).to_vec())
}

/// One causal dilated convolution of a channel-major sequence.
pub fn causal_conv1d(params: &[f64], conv: ConvRef, seq: &[f64], len: usize) -> Result<Vec<f64>> {
    if seq.len() != conv.in_channels * len {
        return Err(Error::DimensionMismatch { context: "convolution input", expected: conv.in_channels * len, actual: seq.len() });
    }
    let mut tape = Tape::new(params);
    let x = tape.input(seq.to_vec());
    let y = tape.conv(x, conv, len);
    Ok(tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn receptive_field_values() {
        assert_eq!(receptive_field(2, 6), 127);
        assert_eq!(receptive_field(3, 1), 5);
        assert_eq!(receptive_field(2, 3), 15);
        assert_eq!(min_blocks(2, 64).unwrap(), 6);
        assert_eq!(min_blocks(2, 32).unwrap(), 5);
        assert_eq!(min_blocks(2, 8).unwrap(), 3);
        assert!(min_blocks(1, 4).is_err());
    }

    fn single_channel(w: [f64; 2]) -> (Vec<f64>, ConvRef) {
        let conv = ConvRef { weight: 0, bias: 2, in_channels: 1, out_channels: 1, kernel: 2, dilation: 1 };
        (vec![w[0], w[1], 0.0], conv)
    }

    #[test]
    fn identity_and_delay_kernels() {
        let seq = [1.0, 2.0, 3.0, 4.0];
        let (p, c) = single_channel([1.0, 0.0]);
        assert_eq!(causal_conv1d(&p, c, &seq, 4).unwrap(), seq.to_vec());
        let (p, c) = single_channel([0.0, 1.0]);
        assert_eq!(causal_conv1d(&p, c, &seq, 4).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert!(causal_conv1d(&p, c, &seq, 3).is_err());
    }

    #[test]
    fn conv_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cin, cout, k, d, len) = (3, 2, 3, 2, 8);
        let conv = ConvRef { weight: 0, bias: cout * cin * k, in_channels: cin, out_channels: cout, kernel: k, dilation: d };
        let params: Vec<f64> = (0..cout * cin * k + cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seq: Vec<f64> = (0..cin * len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = causal_conv1d(&params, conv, &seq, len).unwrap();
        for o in 0..cout {
            for t in 0..len {
                let mut acc = params[conv.bias + o];
                for i in 0..cin {
                    for j in 0..k {
                        if t >= d * j {
                            acc += params[(o * cin + i) * k + j] * seq[i * len + t - d * j];
                        }
                    }
                }
                assert!((out[o * len + t] - acc).abs() < 1e-14);
            }
        }
    }
}
