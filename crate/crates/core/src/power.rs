//! Real powers through a single code path.
//!
//! Every `x^e` in the crate goes through [`pow`], which evaluates
//! `exp(e * ln x)` regardless of whether `e` happens to be an integer or a
//! simple fraction. Results are therefore bitwise stable across call sites.

/// `x^e` for `x >= 0`, computed as `exp(e * ln x)`.
///
/// `0^0 = 1`, `0^e = 0` for `e > 0` and `+inf` for `e < 0`.
#[inline]
pub fn pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        return if e == 0.0 {
            1.0
        } else if e > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (e * x.ln()).exp()
}

/// `max(t, 0)`
#[inline]
pub fn positive_part(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}
