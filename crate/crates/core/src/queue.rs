//! Mean queue length as a static function of the arrival rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Increasing, continuously differentiable map from aggregate arrival rate
/// to mean queue length, with `p(0) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum QueueFunction {
    /// `p ≡ 0`.
    #[default]
    Zero,
    /// `p(y) = k y`.
    Linear { k: f64 },
    /// `p(y) = k y^m`, `m ≥ 1`.
    Power { k: f64, m: f64 },
    /// `p(y) = k y / (C - y)` on `[0, C)`.
    #[serde(rename = "mm1_scaled")]
    Mm1Scaled { k: f64, capacity: f64 },
}

impl QueueFunction {
    /// Upper end of the domain, if it is bounded.
    pub fn pole(&self) -> Option<f64> {
        match *self {
            QueueFunction::Mm1Scaled { capacity, .. } => Some(capacity),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, QueueFunction::Zero)
    }

    fn check_domain(&self, y: f64) -> Result<()> {
        if !(y >= 0.0) {
            return Err(Error::QueueDomain { y, pole: self.pole().unwrap_or(f64::INFINITY) });
        }
        if let Some(pole) = self.pole() {
            if y >= pole {
                return Err(Error::QueueDomain { y, pole });
            }
        }
        Ok(())
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        Ok(match *self {
            QueueFunction::Zero => 0.0,
            QueueFunction::Linear { k } => k * y,
            QueueFunction::Power { k, m } => k * y.powf(m),
            QueueFunction::Mm1Scaled { k, capacity } => k * y / (capacity - y),
        })
    }

    pub fn eval_derivative(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        Ok(match *self {
            QueueFunction::Zero => 0.0,
            QueueFunction::Linear { k } => k,
            QueueFunction::Power { k, m } => {
                if m == 1.0 {
                    k
                } else {
                    k * m * y.powf(m - 1.0)
                }
            }
            QueueFunction::Mm1Scaled { k, capacity } => {
                let gap = capacity - y;
                k * capacity / (gap * gap)
            }
        })
    }

    /// `γ = y p'(y) / p(y)`.
    pub fn elasticity(&self, y: f64) -> Result<f64> {
        match *self {
            QueueFunction::Zero => Err(Error::ElasticityUndefined("zero queue family")),
            QueueFunction::Linear { .. } => {
                self.positive_point(y)?;
                Ok(1.0)
            }
            QueueFunction::Power { m, .. } => {
                self.positive_point(y)?;
                Ok(m)
            }
            QueueFunction::Mm1Scaled { capacity, .. } => {
                self.positive_point(y)?;
                // y p'/p = C / (C - y)
                Ok(capacity / (capacity - y))
            }
        }
    }

    fn positive_point(&self, y: f64) -> Result<()> {
        self.check_domain(y)?;
        if y > 0.0 && self.eval(y)? > 0.0 {
            Ok(())
        } else {
            Err(Error::ElasticityUndefined("queue is empty at this rate"))
        }
    }

    /// Parameter errors, if any.
    pub fn parameter_problems(&self) -> Option<String> {
        match *self {
            QueueFunction::Zero => None,
            QueueFunction::Linear { k } if !(k > 0.0) => Some(format!("linear slope k must be > 0, got {k}")),
            QueueFunction::Power { k, m } if !(k > 0.0) || !(m >= 1.0) => {
                Some(format!("power family needs k > 0 and m >= 1, got k={k}, m={m}"))
            }
            QueueFunction::Mm1Scaled { k, capacity } if !(k > 0.0) || !(capacity > 0.0) => {
                Some(format!("mm1_scaled needs k > 0 and C > 0, got k={k}, C={capacity}"))
            }
            _ => None,
        }
    }
}
