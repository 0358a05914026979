use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named contiguous range of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// Fan-in used to bound the uniform initialization.
    pub fan_in: usize,
    /// Extra multiplier applied after drawing (1.0 for most slices).
    pub init_scale: f64,
}

/// Flat double-precision parameter vector, its gradient buffer and the slice table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grads: Vec<f64>,
    pub slices: Vec<ParamSlice>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `len` zeroed parameters and returns their offset.
    pub fn alloc(&mut self, name: impl Into<String>, len: usize, fan_in: usize) -> usize {
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.grads.resize(offset + len, 0.0);
        self.slices.push(ParamSlice { name: name.into(), offset, len, fan_in, init_scale: 1.0 });
        offset
    }

    pub fn set_init_scale(&mut self, offset: usize, scale: f64) {
        if let Some(s) = self.slices.iter_mut().find(|s| s.offset == offset) {
            s.init_scale = scale;
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.grads.resize(self.values.len(), 0.0);
    }

    /// Draws every slice uniformly in `+- sqrt(1 / fan_in)` times its init scale.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &self.slices {
            let bound = (1.0 / s.fan_in.max(1) as f64).sqrt();
            for v in &mut self.values[s.offset..s.offset + s.len] {
                *v = s.init_scale * rng.random_range(-bound..bound);
            }
        }
        self.zero_grad();
    }
}
