use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "ReLU")]
    Relu,
    Softplus,
    #[serde(rename = "GELU")]
    Gelu,
    #[serde(rename = "SiLU")]
    Silu,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Relu, Activation::Softplus, Activation::Gelu, Activation::Silu];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Gelu => 0.5 * z * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Silu => z * sigmoid(z),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                cdf + z * FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "ReLU",
            Activation::Softplus => "Softplus",
            Activation::Gelu => "GELU",
            Activation::Silu => "SiLU",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown activation '{s}'")))
    }
}

/// Evaluates a named activation.
pub fn activation(name: &str, z: f64) -> Result<f64, Error> {
    Ok(name.parse::<Activation>()?.apply(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
        assert!((Activation::Softplus.apply(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(Activation::Gelu.apply(0.0), 0.0);
        // Phi(1) = 0.841344746...
        assert!((Activation::Gelu.apply(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!(Activation::Softplus.apply(800.0).is_finite());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = 1e-5;
        for act in Activation::ALL {
            for _ in 0..100 {
                let mut z: f64 = rng.random_range(-4.0..4.0);
                if act == Activation::Relu && z.abs() < 1e-3 {
                    z += 0.01;
                }
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act} at {z}");
            }
        }
    }

    #[test]
    fn names() {
        assert_eq!("silu".parse::<Activation>().unwrap(), Activation::Silu);
        assert!(activation("tanh", 0.0).is_err());
        assert_eq!(serde_json::to_string(&Activation::Gelu).unwrap(), "\"GELU\"");
    }
}
