use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean absolute error.
    L1,
    /// Mean squared error.
    L2,
}

impl Loss {
    /// Mean loss over all elements and its gradient with respect to `pred`.
    /// The L1 subgradient at ties is 0.
    pub fn eval<T: Real>(self, pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
        if pred.len() != target.len() {
            return Err(Error::shape(format!(
                "loss operands differ in size: {} vs {}",
                pred.len(),
                target.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::shape("loss over an empty tensor"));
        }
        let n = T::of_usize(pred.len());
        let mut total = T::zero();
        let grad = pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let d = p - t;
                match self {
                    Loss::L1 => {
                        total += d.abs();
                        if d > T::zero() {
                            T::one() / n
                        } else if d < T::zero() {
                            -T::one() / n
                        } else {
                            T::zero()
                        }
                    }
                    Loss::L2 => {
                        total += d * d;
                        T::lit(2.0) * d / n
                    }
                }
            })
            .collect();
        Ok((total / n, grad))
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::L1 => "l1",
            Loss::L2 => "l2",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Loss::L1),
            "l2" => Ok(Loss::L2),
            other => Err(Error::invalid(format!("unknown loss `{other}` (expected l1 or l2)"))),
        }
    }
}
