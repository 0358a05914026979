use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::params::ParameterStore;
use super::tape::{DenseRef, Tape, Var};
use crate::{Error, Result};

/// Fully connected network: affine layers with an activation between them and
/// none after the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first, output last.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<DenseRef>,
}

impl Mlp {
    /// Allocates parameters for the given widths under `prefix`.
    pub fn new(store: &mut ParameterStore, prefix: &str, widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!("MLP needs at least one layer of non-zero width, got {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (cols, rows) = (w[0], w[1]);
                let weight = store.alloc(format!("{prefix}.layer{l}.weight"), rows * cols, cols);
                let bias = store.alloc(format!("{prefix}.layer{l}.bias"), rows, cols);
                DenseRef { weight, bias, rows, cols }
            })
            .collect();
        Ok(Self { widths: widths.to_vec(), activation, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn last_layer(&self) -> &DenseRef {
        self.layers.last().expect("non-empty layers")
    }

    /// Records the forward pass on `tape`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = tape.dense(h, *layer);
            if l + 1 < self.layers.len() {
                h = tape.activation(h, self.activation);
            }
        }
        h
    }
}

/// Evaluates the network on one input vector.
pub fn mlp_forward(net: &Mlp, params: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != net.input_dim() {
        return Err(Error::DimensionMismatch { context: "MLP input", expected: net.input_dim(), actual: xi.len() });
    }
    let mut tape = Tape::new(params);
    let x = tape.input(xi.to_vec());
    let y = net.forward(&mut tape, x);
    Ok(tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_single_layer() {
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, "f", &[3, 3], Activation::Silu).unwrap();
        let l = net.layers[0];
        for i in 0..3 {
            store.values[l.weight + i * 3 + i] = 1.0;
        }
        assert_eq!(mlp_forward(&net, &store.values, &[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, "f", &[2, 5, 2], Activation::Gelu).unwrap();
        let last = *net.last_layer();
        store.values[last.bias] = 0.3;
        store.values[last.bias + 1] = -1.2;
        assert_eq!(mlp_forward(&net, &store.values, &[4.0, 1.0]).unwrap(), vec![0.3, -1.2]);
    }

    #[test]
    fn dimension_mismatch() {
        let mut store = ParameterStore::new();
        let net = Mlp::new(&mut store, "f", &[2, 2], Activation::Relu).unwrap();
        assert!(mlp_forward(&net, &store.values, &[1.0]).is_err());
        assert!(Mlp::new(&mut store, "g", &[2], Activation::Relu).is_err());
    }
}
