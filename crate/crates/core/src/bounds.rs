//! Explicit constants and time bounds of the existence and non-existence
//! theory, and the regime classifier.
//!
//! Existence (`k0 <= λ1 <= λ2 <= 1`, `λ ∈ [2k0, 2]`): the `k0`-moment obeys
//! `dM/dt <= c3 [M^a + M^b]`, which gives the local horizon `T_k0` when
//! `λ < 1` and an exponential envelope `C1(T)` when `λ >= 1`.
//!
//! Non-existence (`ν <= -1`, `λ1 < |ν| - 1`, `λ < 1`): any mass-conserving
//! solution must stop before `T1(k)` for every `k ∈ (|ν| - 1, 1)`, and
//! `T1(k) -> 0` as `k -> |ν| - 1`.

use serde::{Serialize, Serializer};

use crate::daughter::DaughterLaw;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::power::{positive_part, pow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    GlobalExistence,
    LocalExistence,
    NonExistence,
    Uncovered,
}

impl Regime {
    pub fn is_existence(self) -> bool {
        matches!(self, Regime::GlobalExistence | Regime::LocalExistence)
    }
}

/// One inequality of a theorem's hypotheses with its truth value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub statement: String,
    pub holds: bool,
}

fn hyp(statement: impl Into<String>, holds: bool) -> Hypothesis {
    Hypothesis {
        statement: statement.into(),
        holds,
    }
}

/// Hypotheses of the existence theorem, in order.
pub fn existence_hypotheses(kernel: &KernelSpec, law: &DaughterLaw) -> Vec<Hypothesis> {
    let (l1, l2, k0) = (kernel.lambda1(), kernel.lambda2(), law.k0());
    let lambda = kernel.homogeneity();
    vec![
        hyp(format!("k0 <= lambda1 ({k0} <= {l1})"), k0 <= l1),
        hyp(format!("lambda1 <= lambda2 ({l1} <= {l2})"), l1 <= l2),
        hyp(format!("lambda2 <= 1 ({l2} <= 1)"), l2 <= 1.0),
        hyp(format!("lambda >= 2 k0 ({lambda} >= {})", 2.0 * k0), lambda >= 2.0 * k0),
        hyp(format!("lambda <= 2 ({lambda} <= 2)"), lambda <= 2.0),
        hyp(format!("lambda >= 1 for a global horizon ({lambda} >= 1)"), lambda >= 1.0),
    ]
}

/// Hypotheses of the non-existence theorem, in order.
pub fn nonexistence_hypotheses(kernel: &KernelSpec, law: &DaughterLaw) -> Vec<Hypothesis> {
    let (l1, l2, nu, k0) = (kernel.lambda1(), kernel.lambda2(), law.nu(), law.k0());
    let lambda = kernel.homogeneity();
    let kappa = law.moment_threshold();
    vec![
        hyp(format!("nu in (-2, -1] (nu = {nu})"), nu > -2.0 && nu <= -1.0),
        hyp(format!("k0 in (|nu| - 1, 1) ({k0} in ({kappa}, 1))"), k0 > kappa && k0 < 1.0),
        hyp(format!("lambda1 < |nu| - 1 ({l1} < {kappa})"), l1 < kappa),
        hyp(format!("lambda < 1 ({lambda} < 1)"), lambda < 1.0),
        hyp(format!("lambda2 <= 1 ({l2} <= 1)"), l2 <= 1.0),
    ]
}

pub fn classify_regime(kernel: &KernelSpec, law: &DaughterLaw) -> Regime {
    let (l1, l2, k0) = (kernel.lambda1(), kernel.lambda2(), law.k0());
    let lambda = kernel.homogeneity();
    let ordered = k0 <= l1 && l1 <= l2 && l2 <= 1.0;
    if ordered && (1.0..=2.0).contains(&lambda) {
        Regime::GlobalExistence
    } else if ordered && lambda >= 2.0 * k0 && lambda < 1.0 {
        Regime::LocalExistence
    } else if nonexistence_hypotheses(kernel, law).iter().all(|h| h.holds) {
        Regime::NonExistence
    } else {
        Regime::Uncovered
    }
}

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn serialize_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// `C1(T)` evaluated at one horizon; `None` when `T >= T_k0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Entry {
    pub t: f64,
    pub c1: Option<f64>,
}

/// The bound chain with the rate constant of the moment inequality kept in
/// front: `c3` is replaced by `E_{k0,1} c3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateAdjusted {
    pub e_k0_1: f64,
    pub c3: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub t_k0: f64,
    pub c1_table: Vec<C1Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceBounds {
    pub rho: f64,
    pub m_k0_in: f64,
    pub m_k0p1_in: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Local horizon, `+∞` when `λ >= 1`.
    #[serde(serialize_with = "serialize_f64")]
    pub t_k0: f64,
    pub c1_table: Vec<C1Entry>,
    pub rate_adjusted: RateAdjusted,
    #[serde(skip)]
    lambda: f64,
    #[serde(skip)]
    k0: f64,
}

impl ExistenceBounds {
    /// `C1(T)` of the bound chain, `None` for `T >= T_k0`.
    pub fn c1_of(&self, t: f64) -> Option<f64> {
        c1_formula(self.lambda, self.k0, self.m_k0_in, self.c3, t)
    }

    /// `C1(T)` with the rate constant `E_{k0,1} c3`.
    pub fn c1_adjusted_of(&self, t: f64) -> Option<f64> {
        c1_formula(self.lambda, self.k0, self.m_k0_in, self.rate_adjusted.c3, t)
    }
}

fn t_k0_formula(lambda: f64, k0: f64, m_k0: f64, c3: f64) -> f64 {
    if lambda >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 - k0) * pow(m_k0, -(1.0 - lambda) / (1.0 - k0)) / (2.0 * (1.0 - lambda) * c3)
    }
}

fn c1_formula(lambda: f64, k0: f64, m_k0: f64, c3: f64, t: f64) -> Option<f64> {
    if lambda >= 1.0 {
        return Some((1.0 + m_k0) * (2.0 * c3 * t / (1.0 - k0)).exp());
    }
    if t >= t_k0_formula(lambda, k0, m_k0, c3) {
        return None;
    }
    let gamma = (1.0 - lambda) / (1.0 - k0);
    let base = pow(m_k0, -gamma) - 2.0 * (1.0 - lambda) * c3 * t / (1.0 - k0);
    Some(pow(base, -1.0 / gamma))
}

/// Bound of the non-existence chain at one moment order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KBound {
    pub k: f64,
    pub m_k_in: f64,
    pub ell1: f64,
    pub ell2: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonExistenceBounds {
    pub rho: f64,
    pub m_1pk0_in: f64,
    pub table: Vec<KBound>,
    /// Minimum of `T1(k)` over the table and its argmin.
    pub t1_bound: f64,
    pub argmin_k: f64,
    /// Limits as `k -> |ν| - 1`.
    pub threshold_k: f64,
    pub limit_ell1: f64,
    pub limit_ell2: f64,
    pub limit_t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub regime: Regime,
    pub existence_hypotheses: Vec<Hypothesis>,
    pub nonexistence_hypotheses: Vec<Hypothesis>,
    pub existence: Option<ExistenceBounds>,
    pub nonexistence: Option<NonExistenceBounds>,
}

impl BoundsReport {
    fn empty(kernel: &KernelSpec, law: &DaughterLaw) -> Self {
        Self {
            regime: classify_regime(kernel, law),
            existence_hypotheses: existence_hypotheses(kernel, law),
            nonexistence_hypotheses: nonexistence_hypotheses(kernel, law),
            existence: None,
            nonexistence: None,
        }
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Constants `c1, c2, c3`, the horizon `T_k0` and `C1(T)` for each `T` in
/// `t_values`. Outside the existence regimes the report carries no
/// constants.
pub fn existence_bounds(
    kernel: &KernelSpec,
    law: &DaughterLaw,
    rho: f64,
    m_k0_in: f64,
    m_k0p1_in: f64,
    t_values: &[f64],
) -> Result<BoundsReport> {
    let mut report = BoundsReport::empty(kernel, law);
    if !report.regime.is_existence() {
        return Ok(report);
    }
    require_positive("rho", rho)?;
    require_positive("M_k0(u_in)", m_k0_in)?;
    require_positive("M_(k0+1)(u_in)", m_k0p1_in)?;
    let (l1, l2, k0) = (kernel.lambda1(), kernel.lambda2(), law.k0());
    let lambda = kernel.homogeneity();
    let c_of = |li: f64| {
        pow(rho, li / (1.0 - k0)).max(pow(rho, (1.0 - li) / k0) * pow(m_k0p1_in, (k0 + li - 1.0) / k0))
    };
    let c1 = c_of(l1);
    let c2 = c_of(l2);
    let c3 = (c1 * pow(rho, (l2 - k0) / (1.0 - k0))).max(c2 * pow(rho, (l1 - k0) / (1.0 - k0)));
    let table = |c3: f64| -> Vec<C1Entry> {
        t_values
            .iter()
            .map(|&t| C1Entry {
                t,
                c1: c1_formula(lambda, k0, m_k0_in, c3, t),
            })
            .collect()
    };
    let e1 = law.e_constant(1.0)?;
    report.existence = Some(ExistenceBounds {
        rho,
        m_k0_in,
        m_k0p1_in,
        c1,
        c2,
        c3,
        t_k0: t_k0_formula(lambda, k0, m_k0_in, c3),
        c1_table: table(c3),
        rate_adjusted: RateAdjusted {
            e_k0_1: e1,
            c3: e1 * c3,
            t_k0: t_k0_formula(lambda, k0, m_k0_in, e1 * c3),
            c1_table: table(e1 * c3),
        },
        lambda,
        k0,
    });
    Ok(report)
}

/// Number of points of the default non-existence `k` grid.
pub const DEFAULT_K_POINTS: usize = 64;

/// `DEFAULT_K_POINTS` orders in `(|ν| - 1, 1)`, log-spaced in their distance
/// to the threshold from `1e-4` to `0.99` of the interval width.
pub fn default_k_grid(law: &DaughterLaw) -> Vec<f64> {
    let kappa = law.moment_threshold().max(0.0);
    let width = 1.0 - kappa;
    let (lo, hi) = ((1e-4f64).ln(), (0.99f64).ln());
    (0..DEFAULT_K_POINTS)
        .map(|i| {
            let f = i as f64 / (DEFAULT_K_POINTS - 1) as f64;
            kappa + width * (lo + f * (hi - lo)).exp()
        })
        .collect()
}

/// `ℓ1(k) = λ1 - k + (k + λ2 - 1)_+`.
pub fn ell1(kernel: &KernelSpec, k: f64) -> f64 {
    kernel.lambda1() - k + positive_part(k + kernel.lambda2() - 1.0)
}

/// `ℓ2(k) = ρ^((λ1-k)/(1-k)) min{ρ^(λ2/(1-k)), ρ^((1+k0-k-λ2)/k0) M_(1+k0)^((k+λ2-1)/k0)}`.
pub fn ell2(kernel: &KernelSpec, law: &DaughterLaw, rho: f64, m_1pk0_in: f64, k: f64) -> f64 {
    let (l1, l2, k0) = (kernel.lambda1(), kernel.lambda2(), law.k0());
    pow(rho, (l1 - k) / (1.0 - k))
        * pow(rho, l2 / (1.0 - k))
            .min(pow(rho, (1.0 + k0 - k - l2) / k0) * pow(m_1pk0_in, (k + l2 - 1.0) / k0))
}

/// Per-order upper bounds `T1(k)` on the lifetime of a mass-conserving
/// solution. `m_in(k)` returns `M_k(u_in)`. Outside the non-existence regime
/// the report carries no bounds.
pub fn nonexistence_bound(
    kernel: &KernelSpec,
    law: &DaughterLaw,
    rho: f64,
    m_1pk0_in: f64,
    m_in: &dyn Fn(f64) -> f64,
    k_grid: &[f64],
) -> Result<BoundsReport> {
    let mut report = BoundsReport::empty(kernel, law);
    if report.regime != Regime::NonExistence {
        return Ok(report);
    }
    require_positive("rho", rho)?;
    require_positive("M_(1+k0)(u_in)", m_1pk0_in)?;
    let kappa = law.moment_threshold();
    if k_grid.is_empty() {
        return Err(Error::Input("empty k grid".into()));
    }
    let mut table = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        if !(k > kappa && k < 1.0) {
            return Err(Error::Domain(format!("order k = {k} outside ({kappa}, 1)")));
        }
        let m_k = m_in(k);
        require_positive("M_k(u_in)", m_k)?;
        let l1 = ell1(kernel, k);
        let l2 = ell2(kernel, law, rho, m_1pk0_in, k);
        let t1 = (k + law.nu() + 1.0) * pow(m_k, l1 / (1.0 - k)) / (l1.abs() * l2);
        table.push(KBound {
            k,
            m_k_in: m_k,
            ell1: l1,
            ell2: l2,
            t1,
        });
    }
    let best = table
        .iter()
        .min_by(|a, b| a.t1.total_cmp(&b.t1))
        .expect("non-empty table");
    let (t1_bound, argmin_k) = (best.t1, best.k);
    report.nonexistence = Some(NonExistenceBounds {
        rho,
        m_1pk0_in,
        t1_bound,
        argmin_k,
        threshold_k: kappa,
        limit_ell1: ell1(kernel, kappa),
        limit_ell2: ell2(kernel, law, rho, m_1pk0_in, kappa),
        limit_t1: 0.0,
        table,
    });
    Ok(report)
}

/// `d0 exp(12 E_{k0,1} ∫_0^t [M_k0 + M_(1+k0+λ2)](τ) dτ)` with the integral
/// taken by the trapezoid rule on `times`. The moments are those of the sum
/// of the two solutions being compared.
pub fn gronwall_envelope(
    law: &DaughterLaw,
    times: &[f64],
    m_k0: &[f64],
    m_high: &[f64],
    d0: f64,
) -> Result<Vec<f64>> {
    if m_k0.len() != times.len() || m_high.len() != times.len() {
        return Err(Error::Input(format!(
            "moment series of lengths {} and {} do not match the {} mesh points",
            m_k0.len(),
            m_high.len(),
            times.len()
        )));
    }
    let rate = 12.0 * law.e_constant(1.0)?;
    let mut out = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    for q in 0..times.len() {
        if q > 0 {
            let dt = times[q] - times[q - 1];
            integral += 0.5 * dt * (m_k0[q - 1] + m_high[q - 1] + m_k0[q] + m_high[q]);
        }
        out.push(d0 * (rate * integral).exp());
    }
    Ok(out)
}
