//! Reverse-mode differentiation over vector-valued operations.
//!
//! A [`Tape`] records the forward evaluation as a sequence of nodes, each holding
//! its value and the operation that produced it. Parameters are addressed by
//! offset into a flat parameter slice, so every operation that reads weights
//! accumulates into the matching range of a caller-supplied gradient buffer
//! during [`Tape::backward`]. Operations are coarse (a dense layer, a causal
//! convolution, an activation) which keeps one node per layer rather than one
//! per scalar.

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::{Error, Result};

/// Handle to a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense layer `y = W x + b` with `W` stored row-major, `rows x cols`, at `weight`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseRef {
    pub weight: usize,
    pub bias: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Causal 1-D convolution. Kernel layout is `[out][in][tap]`; sequences are
/// channel-major, `[channel][time]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvRef {
    pub weight: usize,
    pub bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param { offset: usize },
    Dense { x: Var, layer: DenseRef },
    Act { x: Var, act: Activation },
    LinComb { terms: Vec<(Var, f64)> },
    Concat { parts: Vec<Var> },
    Gather { x: Var, idx: Vec<usize> },
    Conv { x: Var, conv: ConvRef, len: usize },
    SquaredError { x: Var, target: Vec<f64> },
    SumSquares { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Forward recording over a borrowed parameter vector.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
    recording: bool,
}

/// Adjoints of every node reached by a backward pass.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Gradient of the seeded scalar with respect to `var`, if it influenced it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self { params, nodes: Vec::new(), recording: true }
    }

    pub fn with_capacity(params: &'p [f64], capacity: usize) -> Self {
        Self { params, nodes: Vec::with_capacity(capacity), recording: true }
    }

    /// Forward-only tape: values are computed by the same code as a recording
    /// tape, but no operation graph is kept and `backward` is refused.
    pub fn inference(params: &'p [f64]) -> Self {
        Self { params, nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let op = if self.recording { op } else { Op::Input };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf. Its adjoint is still available after `backward`.
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf reading `len` parameters starting at `offset`.
    pub fn param(&mut self, offset: usize, len: usize) -> Var {
        let value = self.params[offset..offset + len].to_vec();
        self.push(value, Op::Param { offset })
    }

    pub fn dense(&mut self, x: Var, layer: DenseRef) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), layer.cols, "dense layer input width");
        let w = &self.params[layer.weight..layer.weight + layer.rows * layer.cols];
        let b = &self.params[layer.bias..layer.bias + layer.rows];
        let value = w
            .chunks_exact(layer.cols)
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(xv).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        self.push(value, Op::Dense { x, layer })
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let value = self.nodes[x.0].value.iter().map(|&z| act.apply(z)).collect();
        self.push(value, Op::Act { x, act })
    }

    /// `sum_k c_k * x_k` over equally sized operands.
    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Var {
        let n = self.nodes[terms[0].0 .0].value.len();
        let mut value = vec![0.0; n];
        for &(v, c) in terms {
            let src = &self.nodes[v.0].value;
            assert_eq!(src.len(), n, "lincomb operand length");
            for (d, s) in value.iter_mut().zip(src) {
                *d += c * s;
            }
        }
        self.push(value, Op::LinComb { terms: terms.to_vec() })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.lincomb(&[(a, 1.0), (b, 1.0)])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        self.push(value, Op::Concat { parts: parts.to_vec() })
    }

    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Var {
        let src = &self.nodes[x.0].value;
        let value = idx.iter().map(|&i| src[i]).collect();
        self.push(value, Op::Gather { x, idx: idx.to_vec() })
    }

    /// Causal dilated convolution of a `[in][len]` sequence with zero left padding.
    pub fn conv(&mut self, x: Var, conv: ConvRef, len: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), conv.in_channels * len, "conv input shape");
        let w = &self.params[conv.weight..conv.weight + conv.out_channels * conv.in_channels * conv.kernel];
        let b = &self.params[conv.bias..conv.bias + conv.out_channels];
        let mut value = vec![0.0; conv.out_channels * len];
        for o in 0..conv.out_channels {
            let out = &mut value[o * len..(o + 1) * len];
            out.fill(b[o]);
            for i in 0..conv.in_channels {
                let xi = &xv[i * len..(i + 1) * len];
                for j in 0..conv.kernel {
                    let wij = w[(o * conv.in_channels + i) * conv.kernel + j];
                    let shift = conv.dilation * j;
                    if shift >= len {
                        continue;
                    }
                    for (dst, src) in out[shift..].iter_mut().zip(&xi[..len - shift]) {
                        *dst += wij * src;
                    }
                }
            }
        }
        self.push(value, Op::Conv { x, conv, len })
    }

    /// Scalar `sum_i (x_i - target_i)^2`.
    pub fn squared_error(&mut self, x: Var, target: &[f64]) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), target.len(), "squared error operand length");
        let s = xv.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        self.push(vec![s], Op::SquaredError { x, target: target.to_vec() })
    }

    /// Scalar `sum_i x_i^2`.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.iter().map(|a| a * a).sum();
        self.push(vec![s], Op::SumSquares { x })
    }

    /// Propagates `seed * d(root)` backwards. Parameter gradients are added into
    /// `param_grad`, which must have the length of the parameter vector.
    pub fn backward(&self, root: Var, seed: f64, param_grad: &mut [f64]) -> Result<Adjoints> {
        if root.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward(root.0));
        }
        if !self.recording {
            return Err(Error::InvalidInput("backward on an inference tape".into()));
        }
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::InvalidInput("backward root must be a scalar".into()));
        }
        if param_grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch { context: "gradient buffer", expected: self.params.len(), actual: param_grad.len() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![seed]);

        for id in (0..=root.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param { offset } => {
                    for (d, g) in param_grad[*offset..*offset + gy.len()].iter_mut().zip(&gy) {
                        *d += g;
                    }
                }
                Op::Dense { x, layer } => {
                    let xv = &self.nodes[x.0].value;
                    let w = &self.params[layer.weight..layer.weight + layer.rows * layer.cols];
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    for (r, &g) in gy.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let row = &w[r * layer.cols..(r + 1) * layer.cols];
                        for (d, a) in gx.iter_mut().zip(row) {
                            *d += a * g;
                        }
                    }
                    let gw = &mut param_grad[layer.weight..layer.weight + layer.rows * layer.cols];
                    for (r, &g) in gy.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        for (d, a) in gw[r * layer.cols..(r + 1) * layer.cols].iter_mut().zip(xv) {
                            *d += g * a;
                        }
                    }
                    for (d, g) in param_grad[layer.bias..layer.bias + layer.rows].iter_mut().zip(&gy) {
                        *d += g;
                    }
                }
                Op::Act { x, act } => {
                    let act = *act;
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    let xv = &self.nodes[x.0].value;
                    for ((d, g), z) in gx.iter_mut().zip(&gy).zip(xv) {
                        *d += g * act.derivative(*z);
                    }
                }
                Op::LinComb { terms } => {
                    for &(v, c) in terms {
                        let gx = accumulator(&mut grads, &self.nodes, v);
                        for (d, g) in gx.iter_mut().zip(&gy) {
                            *d += c * g;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut at = 0;
                    for &p in parts {
                        let gx = accumulator(&mut grads, &self.nodes, p);
                        let n = gx.len();
                        for (d, g) in gx.iter_mut().zip(&gy[at..at + n]) {
                            *d += g;
                        }
                        at += n;
                    }
                }
                Op::Gather { x, idx } => {
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    for (&i, g) in idx.iter().zip(&gy) {
                        gx[i] += g;
                    }
                }
                Op::Conv { x, conv, len } => {
                    let (conv, len) = (*conv, *len);
                    let xv = &self.nodes[x.0].value;
                    let wlen = conv.out_channels * conv.in_channels * conv.kernel;
                    let w = &self.params[conv.weight..conv.weight + wlen];
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    for o in 0..conv.out_channels {
                        let go = &gy[o * len..(o + 1) * len];
                        for i in 0..conv.in_channels {
                            let gxi = &mut gx[i * len..(i + 1) * len];
                            for j in 0..conv.kernel {
                                let shift = conv.dilation * j;
                                if shift >= len {
                                    continue;
                                }
                                let wij = w[(o * conv.in_channels + i) * conv.kernel + j];
                                for (d, g) in gxi[..len - shift].iter_mut().zip(&go[shift..]) {
                                    *d += wij * g;
                                }
                            }
                        }
                    }
                    let gw = &mut param_grad[conv.weight..conv.weight + wlen];
                    for o in 0..conv.out_channels {
                        let go = &gy[o * len..(o + 1) * len];
                        for i in 0..conv.in_channels {
                            let xi = &xv[i * len..(i + 1) * len];
                            for j in 0..conv.kernel {
                                let shift = conv.dilation * j;
                                if shift >= len {
                                    continue;
                                }
                                gw[(o * conv.in_channels + i) * conv.kernel + j] +=
                                    go[shift..].iter().zip(&xi[..len - shift]).map(|(g, a)| g * a).sum::<f64>();
                            }
                        }
                    }
                    for (o, d) in param_grad[conv.bias..conv.bias + conv.out_channels].iter_mut().enumerate() {
                        *d += gy[o * len..(o + 1) * len].iter().sum::<f64>();
                    }
                }
                Op::SquaredError { x, target } => {
                    let g = gy[0];
                    let xv = &self.nodes[x.0].value;
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    for ((d, a), t) in gx.iter_mut().zip(xv).zip(target) {
                        *d += 2.0 * g * (a - t);
                    }
                }
                Op::SumSquares { x } => {
                    let g = gy[0];
                    let xv = &self.nodes[x.0].value;
                    let gx = accumulator(&mut grads, &self.nodes, *x);
                    for (d, a) in gx.iter_mut().zip(xv) {
                        *d += 2.0 * g * a;
                    }
                }
            }
            grads[id] = Some(gy);
        }
        Ok(Adjoints { grads })
    }
}

fn accumulator<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], var: Var) -> &'g mut Vec<f64> {
    grads[var.0].get_or_insert_with(|| vec![0.0; nodes[var.0].value.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let theta = [1.5, -2.0, 0.25];
        let tape = {
            let mut t = Tape::new(&theta);
            let p = t.param(0, 3);
            t.sum_squares(p);
            t
        };
        let mut g = vec![0.0; 3];
        tape.backward(Var(1), 1.0, &mut g).unwrap();
        assert_eq!(g, vec![3.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_before_forward() {
        let theta = [0.0];
        let tape = Tape::new(&theta);
        let mut g = vec![0.0];
        assert!(matches!(tape.backward(Var(0), 1.0, &mut g), Err(Error::BackwardBeforeForward(0))));
    }

    #[test]
    fn input_adjoints_available() {
        let theta = [2.0, 0.5];
        let mut t = Tape::new(&theta);
        let x = t.input(vec![3.0]);
        let layer = DenseRef { weight: 0, bias: 1, rows: 1, cols: 1 };
        let y = t.dense(x, layer);
        let z = t.concat(&[y, x]);
        let s = t.gather(z, &[0, 1, 1]);
        let loss = t.sum_squares(s);
        // loss = (2x + 0.5)^2 + 2 x^2
        let mut g = vec![0.0; 2];
        let adj = t.backward(loss, 1.0, &mut g).unwrap();
        let expected_dx = 2.0 * (2.0 * 3.0 + 0.5) * 2.0 + 4.0 * 3.0;
        assert!((adj.get(x).unwrap()[0] - expected_dx).abs() < 1e-12);
        assert!((g[0] - 2.0 * 6.5 * 3.0).abs() < 1e-12);
        assert!((g[1] - 2.0 * 6.5).abs() < 1e-12);
    }
}
