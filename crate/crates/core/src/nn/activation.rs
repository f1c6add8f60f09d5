use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

const LEAK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    Identity,
    /// Leaky rectifier with slope 0.01 below zero.
    #[default]
    LeakyRelu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu => {
                if z > T::zero() {
                    z
                } else {
                    z * T::lit(LEAK)
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::LeakyRelu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAK)
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "linear",
            Activation::LeakyRelu => "leaky",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "identity" => Ok(Activation::Identity),
            "leaky" | "leaky_relu" => Ok(Activation::LeakyRelu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}
