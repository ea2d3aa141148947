//! Homogeneous two-exponent collision kernel
//!
//! ```text
//! Φ(x, y) = x^λ1 y^λ2 + x^λ2 y^λ1,      λ = λ1 + λ2
//! Φ_n(x, y) = Φ(x, y) 1_(1/n, n)(x) 1_(1/n, n)(y)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::power::pow;

/// Admissible range for each exponent. The existence and non-existence hypotheses are narrower and are
/// checked by [`crate::bounds`], not here.
pub const EXPONENT_RANGE: (f64, f64) = (-2.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    lambda1: f64,
    lambda2: f64,
    truncation: Option<u32>,
}

impl KernelSpec {
    /// Builds a kernel, swapping the exponents if they are given in
    /// decreasing order.
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !v.is_finite() || v < EXPONENT_RANGE.0 || v > EXPONENT_RANGE.1 {
                return Err(Error::Domain(format!(
                    "kernel exponent {name} = {v} outside [{}, {}]",
                    EXPONENT_RANGE.0, EXPONENT_RANGE.1
                )));
            }
        }
        let (lambda1, lambda2) = if lambda1 <= lambda2 {
            (lambda1, lambda2)
        } else {
            (lambda2, lambda1)
        };
        Ok(Self {
            lambda1,
            lambda2,
            truncation: None,
        })
    }

    /// Restricts the kernel to `(1/n, n)^2`.
    pub fn truncated(mut self, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("truncation index must be positive".into()));
        }
        self.truncation = Some(n);
        Ok(self)
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Homogeneity degree λ1 + λ2.
    pub fn homogeneity(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    pub fn truncation(&self) -> Option<u32> {
        self.truncation
    }

    /// The same kernel without the truncation indicator.
    pub fn untruncated(&self) -> Self {
        Self {
            truncation: None,
            ..*self
        }
    }

    /// True when `x` lies in the open window `(1/n, n)`, or always when the
    /// kernel is not truncated.
    pub fn in_window(&self, x: f64) -> bool {
        match self.truncation {
            None => true,
            Some(n) => {
                let n = f64::from(n);
                x > 1.0 / n && x < n
            }
        }
    }

    /// Φ(x, y), or Φ_n(x, y) when a truncation is set.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::Domain(format!(
                "collision kernel needs positive sizes, got ({x}, {y})"
            )));
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        if !(self.in_window(x) && self.in_window(y)) {
            return 0.0;
        }
        // Summing the two products in a size-ordered way keeps Φ(x, y) and
        // Φ(y, x) bitwise equal.
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        pow(a, self.lambda1) * pow(b, self.lambda2) + pow(a, self.lambda2) * pow(b, self.lambda1)
    }

    /// Φ(x, y) <= 2 (x^k0 + x)(y^k0 + y), valid for k0 <= λ1 <= λ2 <= 1.
    pub fn bound_check(&self, k0: f64, x: f64, y: f64) -> bool {
        let phi = self.untruncated().eval_unchecked(x, y);
        phi <= 2.0 * (pow(x, k0) + x) * (pow(y, k0) + y)
    }
}
