//! Log-domain special functions: factorials, binomials, digamma and its
//! inverse, and the [`LogWeight`] representation of nonnegative quantities.
//!
//! Large factorial ratios are never formed from independent `ln Γ` values.
//! Each `ln n!` is split into the Stirling main part and the small correction
//! `δ(n) = ln n! - ((n + 1/2) ln n - n + ln √(2π))`, so that the big
//! `n ln n` pieces of a ratio cancel analytically and only quantities of the
//! size of the result are rounded.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Div, Mul};

use crate::error::{Error, Result};

/// `ln √(2π)`
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Natural logarithm of a nonnegative quantity.
///
/// `LogWeight::ZERO` (a log of negative infinity) represents an exact zero.
/// Ordering follows the represented quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogWeight(f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    /// Wraps a natural logarithm. `NaN` and `+∞` are rejected in debug builds.
    #[inline]
    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan() && ln != f64::INFINITY, "invalid log weight {ln}");
        LogWeight(ln)
    }

    /// Log of a nonnegative finite value.
    #[inline]
    pub fn from_value(value: f64) -> Self {
        debug_assert!(value >= 0.0 && value.is_finite(), "invalid weight {value}");
        LogWeight(value.ln())
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    /// The represented quantity; underflows to `0.0` below the f64 range.
    #[inline]
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    #[inline]
    pub fn sqrt(self) -> Self {
        LogWeight(0.5 * self.0)
    }

    /// `self^exponent`, with `0^0 = 1`.
    #[inline]
    pub fn powu(self, exponent: u32) -> Self {
        if exponent == 0 {
            LogWeight::ONE
        } else {
            LogWeight(self.0 * f64::from(exponent))
        }
    }
}

impl Mul for LogWeight {
    type Output = LogWeight;

    #[inline]
    fn mul(self, rhs: LogWeight) -> LogWeight {
        LogWeight(self.0 + rhs.0)
    }
}

impl Div for LogWeight {
    type Output = LogWeight;

    #[inline]
    fn div(self, rhs: LogWeight) -> LogWeight {
        debug_assert!(!rhs.is_zero(), "division by a zero weight");
        LogWeight(self.0 - rhs.0)
    }
}

impl Eq for LogWeight {}

impl PartialOrd for LogWeight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogWeight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for LogWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})", self.0)
    }
}

/// Log of the sum of the represented values.
///
/// Terms are added in the order given; callers that pass them sorted by
/// increasing magnitude get a relative error of order `len · ε`. The sum is
/// scaled by its largest term, so values far below the f64 range are fine.
pub fn accumulate_ascending(terms: &[LogWeight]) -> LogWeight {
    let top = terms.iter().copied().max().unwrap_or(LogWeight::ZERO);
    if top.is_zero() {
        return LogWeight::ZERO;
    }
    let scaled: f64 = terms.iter().map(|t| (t.0 - top.0).exp()).sum();
    LogWeight(top.0 + scaled.ln())
}

/// `ln(eᵃ + eᵇ)` without leaving the log domain.
#[inline]
pub fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(xᵢ)`, scaled by the largest element.
pub fn log_sum_exp(ln_terms: &[f64]) -> f64 {
    let top = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let scaled: f64 = ln_terms.iter().map(|x| (x - top).exp()).sum();
    top + scaled.ln()
}

fn exact_factorial(n: u64) -> u64 {
    debug_assert!(n <= 20);
    (1..=n).product()
}

/// `(n + 1/2) ln n - n + ln √(2π)`
#[inline]
fn stirling_main(n: f64) -> f64 {
    (n + 0.5) * n.ln() - n + HALF_LN_2PI
}

/// Stirling correction `δ(n) = ln n! - stirling_main(n)` for `n ≥ 1`.
pub(crate) fn stirling_correction(n: u64) -> f64 {
    debug_assert!(n >= 1);
    if n < 10 {
        return (exact_factorial(n) as f64).ln() - stirling_main(n as f64);
    }
    let x = n as f64;
    let r = 1.0 / (x * x);
    // Bernoulli series, truncation error below 4e-17 for n >= 10
    (1.0 / 12.0
        + r * (-1.0 / 360.0
            + r * (1.0 / 1260.0
                + r * (-1.0 / 1680.0
                    + r * (1.0 / 1188.0 + r * (-691.0 / 360_360.0 + r * (1.0 / 156.0)))))))
        / x
}

/// `ln(n!)`, relative error below `1e-15` on the whole `u64` range used here.
pub fn log_factorial(n: u64) -> f64 {
    if n <= 20 {
        return (exact_factorial(n) as f64).ln();
    }
    stirling_main(n as f64) + stirling_correction(n)
}

fn exact_binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 1..=k {
        c = c * (n - k + i) / i;
    }
    c
}

/// `ln C(n, k)`; `NEG_INFINITY` when `k > n`.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let s = k.min(n - k);
    if s == 0 {
        return 0.0;
    }
    if n <= 60 {
        return (exact_binomial(n, k) as f64).ln();
    }
    if s <= 16 {
        return (1..=s)
            .map(|j| ((n - s + j) as f64 / j as f64).ln())
            .sum();
    }
    let (nf, kf, rf) = (n as f64, k as f64, (n - k) as f64);
    -kf * (kf / nf).ln() - rf * (rf / nf).ln() + 0.5 * (nf / (2.0 * PI * kf * rf)).ln()
        + stirling_correction(n)
        - stirling_correction(k)
        - stirling_correction(n - k)
}

/// `ln(C(n, k) pᵏ (1-p)ⁿ⁻ᵏ)` for a binomial with success probability `p`.
///
/// `ln_p` and `ln_q` are `ln p` and `ln(1-p)`; `q` is `1-p`. For large `k`
/// and `n-k` the Kullback–Leibler form `-k ln(x/p) - (n-k) ln((1-x)/q)` with
/// `x = k/n` is used, which stays small near the mode.
pub fn log_binomial_pmf(n: u64, k: u64, p: f64, q: f64, ln_p: f64, ln_q: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let s = k.min(n - k);
    let power = |count: u64, ln_base: f64| if count == 0 { 0.0 } else { count as f64 * ln_base };
    if s <= 16 || p == 0.0 || q == 0.0 {
        return log_binomial(n, k) + power(k, ln_p) + power(n - k, ln_q);
    }
    let (nf, kf, rf) = (n as f64, k as f64, (n - k) as f64);
    let excess = (kf - nf * p) / nf;
    -kf * (excess / p).ln_1p() - rf * (-excess / q).ln_1p()
        + 0.5 * (nf / (2.0 * PI * kf * rf)).ln()
        + stirling_correction(n)
        - stirling_correction(k)
        - stirling_correction(n - k)
}

/// `ln(C(2i, i) / 4ⁱ)`
pub fn log_central_binomial_scaled(i: u64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    if i <= 30 {
        // 4^-i is an exact power of two
        return (exact_binomial(2 * i, i) as f64 * 0.25f64.powi(i as i32)).ln();
    }
    -0.5 * (PI * i as f64).ln() + stirling_correction(2 * i) - 2.0 * stirling_correction(i)
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires a finite x > 0, got {x}")));
    }
    Ok(digamma_positive(x))
}

fn digamma_positive(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * (691.0 / 32_760.0))))));
    shift + x.ln() - 0.5 / x - series
}

/// Trigamma `ψ'(x)` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    while x < 10.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = 1.0
        + 0.5 / x
        + r * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0 - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0))))));
    shift + series / x
}

/// Solves `ψ(x) = y` for `x > 0`.
///
/// Starts from Fackler's guess (`eʸ + 1/2` above `y = -2.22`,
/// `-1/(y + γ)` below) and applies five Newton steps.
pub fn inverse_digamma(y: f64) -> f64 {
    if y.is_nan() {
        return f64::NAN;
    }
    if y == f64::INFINITY {
        return f64::INFINITY;
    }
    if y == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y + EULER_GAMMA)
    };
    for _ in 0..5 {
        let step = (digamma_positive(x) - y) / trigamma(x);
        let next = x - step;
        x = if next > 0.0 { next } else { 0.5 * x };
    }
    x
}
