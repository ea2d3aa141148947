//! Power-law daughter distribution
//!
//! ```text
//! β*(s, x, y) = (ν + 2) s^ν x^(-ν-1) 1_(0,x)(s),    ν ∈ (-2, 0]
//! β(s, x, y)  = β*(s, x, y) + β*(s, y, x)
//! ```
//!
//! There is no mass transfer between collision partners: each parent `x`
//! redistributes exactly its own mass over `(0, x)`. For `ν <= -1` the number
//! of fragments per breakup is infinite while every moment of order
//! `k > -ν - 1` stays finite; `k0` is the reference order of that regime.
//!
//! All integrals are closed form. Divergent ones are reported as errors
//! rather than infinities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::power::pow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DaughterLaw {
    nu: f64,
    k0: f64,
}

impl DaughterLaw {
    pub fn new(nu: f64, k0: f64) -> Result<Self> {
        if !(nu > -2.0 && nu <= 0.0) {
            return Err(Error::Domain(format!(
                "daughter exponent nu = {nu} outside (-2, 0]"
            )));
        }
        let k0_min = (-nu - 1.0).max(0.0);
        if !(k0 > k0_min && k0 < 1.0) {
            return Err(Error::Domain(format!(
                "k0 = {k0} outside ({k0_min}, 1); need k0 > |nu| - 1 and 0 < k0 < 1"
            )));
        }
        Ok(Self { nu, k0 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Lowest moment order with a finite fragment moment, `|ν| - 1`.
    /// Moments of order `k` are finite iff `k > moment_threshold()`.
    pub fn moment_threshold(&self) -> f64 {
        -self.nu - 1.0
    }

    /// True when a breakup produces infinitely many fragments (`ν <= -1`).
    pub fn is_non_integrable(&self) -> bool {
        self.nu <= -1.0
    }

    /// Supremum `(k0 + 1)/|ν|` of the exponents `p` for which `E_{k0,p}` is
    /// finite; `+inf` when `ν = 0`.
    pub fn p_max(&self) -> f64 {
        if self.nu == 0.0 {
            f64::INFINITY
        } else {
            (self.k0 + 1.0) / -self.nu
        }
    }

    /// Upper end of the window `p0 ∈ (1, 1 + k0)` used by the general
    /// existence theory; reported next to [`Self::p_max`].
    pub fn p0_window(&self) -> f64 {
        1.0 + self.k0
    }

    /// Density β*(s, x, ·) of fragments of size `s` from a parent of size `x`.
    /// The partner size does not enter.
    pub fn density(&self, s: f64, parent: f64, _partner: f64) -> f64 {
        if !(s > 0.0 && s < parent) {
            return 0.0;
        }
        (self.nu + 2.0) * pow(s, self.nu) * pow(parent, -self.nu - 1.0)
    }

    fn check_window(parent: f64, a: f64, b: f64) -> Result<()> {
        if !(parent > 0.0) {
            return Err(Error::Domain(format!("parent size must be positive, got {parent}")));
        }
        if !(a >= 0.0 && a <= b) {
            return Err(Error::Domain(format!("need 0 <= a <= b, got a = {a}, b = {b}")));
        }
        if b > parent {
            return Err(Error::Domain(format!(
                "fragment window ({a}, {b}) exceeds the parent size {parent}"
            )));
        }
        Ok(())
    }

    /// `∫_a^b s^k β*(s, x, ·) ds`.
    pub fn partial_moment(&self, k: f64, parent: f64, a: f64, b: f64) -> Result<f64> {
        Self::check_window(parent, a, b)?;
        let q = k + self.nu + 1.0;
        let scale = (self.nu + 2.0) * pow(parent, -self.nu - 1.0);
        if a == 0.0 {
            if q <= 0.0 {
                return Err(Error::DivergentMoment { k, nu: self.nu });
            }
            return Ok(scale * pow(b, q) / q);
        }
        if q == 0.0 {
            return Ok(scale * (b / a).ln());
        }
        Ok(scale * (pow(b, q) - pow(a, q)) / q)
    }

    /// Mass `∫_a^b s β*(s, x, ·) ds = x^(-ν-1) (b^(ν+2) - a^(ν+2))` deposited
    /// in `(a, b)` by a parent of size `x`. Finite for every admissible ν.
    pub fn cell_mass_deposit(&self, parent: f64, a: f64, b: f64) -> Result<f64> {
        Self::check_window(parent, a, b)?;
        let e = self.nu + 2.0;
        Ok(pow(parent, -self.nu - 1.0) * (pow(b, e) - pow(a, e)))
    }

    /// Sharp constant `E_{k0,p} = (ν+2)^p / (k0 + pν + 1)` in
    /// `∫_0^x s^k0 β*(s, x, ·)^p ds = E_{k0,p} x^(k0+1-p)`.
    pub fn e_constant(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("E_(k0,p) needs p >= 1, got {p}")));
        }
        let denom = self.k0 + p * self.nu + 1.0;
        if p >= self.p_max() || denom <= 0.0 {
            return Err(Error::DivergentConstant {
                p,
                p_max: self.p_max(),
            });
        }
        Ok(pow(self.nu + 2.0, p) / denom)
    }

    /// `E_{k0} = E_{k0,1} + 1`, the constant controlling `|Υ_ς|` for
    /// k0-Hölder test functions with unit seminorm.
    pub fn e_k0(&self) -> f64 {
        self.e_constant(1.0)
            .expect("p = 1 is always below the integrability threshold")
            + 1.0
    }

    /// Coefficient `(1 - k)/(k + ν + 1)` of the collision-averaged change of
    /// the `k`-th moment.
    pub fn upsilon_coefficient(&self, k: f64) -> Result<f64> {
        let q = k + self.nu + 1.0;
        if q <= 0.0 {
            return Err(Error::DivergentMoment { k, nu: self.nu });
        }
        Ok((1.0 - k) / q)
    }

    /// `Υ_{W_k}(x, y) = ∫ s^k β(s, x, y) ds - x^k - y^k
    ///               = (1 - k)/(k + ν + 1) (x^k + y^k)`.
    pub fn upsilon_power(&self, k: f64, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::Domain(format!("Υ needs positive sizes, got ({x}, {y})")));
        }
        Ok(self.upsilon_coefficient(k)? * (pow(x, k) + pow(y, k)))
    }

    /// Ratio between the `k`-th moment and the mass of all fragments sent
    /// below `cutoff`: `(ν+2)/(k+ν+1) cutoff^(k-1)`. It does not depend on the
    /// parent, so a cumulative dust mass converts exactly into the dust
    /// `k`-moment.
    pub fn subcutoff_moment_per_mass(&self, k: f64, cutoff: f64) -> Result<f64> {
        let q = k + self.nu + 1.0;
        if q <= 0.0 {
            return Err(Error::DivergentMoment { k, nu: self.nu });
        }
        Ok((self.nu + 2.0) / q * pow(cutoff, k - 1.0))
    }
}
