use std::fmt;

use serde::{Deserialize, Serialize};

/// Scalar activations used by the dense layers and the distribution head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Elu,
    Softplus,
    #[serde(alias = "softplus+1")]
    SoftplusPlusOne,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
            Activation::Softplus => softplus(x),
            Activation::SoftplusPlusOne => softplus_plus_one(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Softplus | Activation::SoftplusPlusOne => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// Infimum of the output range; outputs are strictly above it except for
    /// `Elu`/`Tanh` which can reach −1 only in the limit.
    pub fn lower_bound(self) -> f64 {
        match self {
            Activation::Elu | Activation::Tanh => -1.0,
            Activation::Softplus | Activation::Sigmoid => 0.0,
            Activation::SoftplusPlusOne => 1.0,
            Activation::Identity => f64::NEG_INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Softplus => "softplus",
            Activation::SoftplusPlusOne => "softplus-plus-one",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Activation on the LSTM output gate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Sigmoid,
    Tanh,
}

impl GateActivation {
    pub fn as_activation(self) -> Activation {
        match self {
            GateActivation::Sigmoid => Activation::Sigmoid,
            GateActivation::Tanh => Activation::Tanh,
        }
    }
}

pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// `ln(1 + eˣ)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_plus_one(x: f64) -> f64 {
    softplus(x) + 1.0
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
