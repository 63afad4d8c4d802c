//! Arbitrary-precision reference evaluations of the amplified-state photon
//! statistics.
//!
//! Everything here is computed directly in big-float (or exact rational)
//! arithmetic: factorials are multiplied out, series are summed term by term
//! up to an explicit index bound and the neglected tail is bounded a priori.
//! Nothing is shared with the fast engine except plain `f64` parameters.
//!
//! Slow by design. Intended for tests only.

use std::fmt;

use dashu_base::{BitTest, UnsignedAbs};
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::{IBig, UBig};
use dashu_ratio::RBig;

/// Binary big float with round-half-even.
pub type Real = FBig<HalfEven, 2>;
/// Exact rationals, for closed-form checks.
pub type Rational = RBig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    /// Decimal digits carried through every operation.
    pub working_digits: u32,
    /// Highest `i` and `j` included in nested sums.
    pub index_bound: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            working_digits: 60,
            index_bound: 500,
        }
    }
}

impl OracleConfig {
    /// Largest neglected tail the oracle is willing to certify.
    pub fn tail_limit(&self) -> f64 {
        10f64.powf(-f64::from(self.working_digits) / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleError {
    Domain(String),
    /// The bounded tail exceeds `10^(-digits/2)`.
    Uncertified { tail_bound: f64, limit: f64 },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Domain(msg) => write!(f, "oracle argument out of domain: {msg}"),
            OracleError::Uncertified { tail_bound, limit } => write!(
                f,
                "neglected tail {tail_bound:e} exceeds certification limit {limit:e}; raise index_bound"
            ),
        }
    }
}

impl std::error::Error for OracleError {}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Working precision plus the constants that depend on it.
#[derive(Clone, Debug)]
pub struct Precision {
    bits: usize,
    one: Real,
    ln2: Real,
}

impl Precision {
    pub fn new(cfg: &OracleConfig) -> Self {
        let bits = (f64::from(cfg.working_digits) * std::f64::consts::LOG2_10).ceil() as usize + 16;
        let one = Real::ONE.with_precision(bits).value();
        let ln2 = (&one + &one).ln();
        Precision { bits, one, ln2 }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn zero(&self) -> Real {
        &self.one - &self.one
    }

    pub fn one(&self) -> Real {
        self.one.clone()
    }

    /// Exact conversion of a binary64 value, promoted to working precision.
    pub fn real(&self, x: f64) -> Real {
        &self.one * Real::try_from(x).expect("finite f64")
    }

    pub fn int(&self, n: u64) -> Real {
        &self.one * Real::from(n)
    }

    pub fn big_int(&self, n: UBig) -> Real {
        &self.one * Real::from(n)
    }

    /// `|x / e^ln_fast - 1|`, evaluated without forming `e^ln_fast`, so it
    /// works far outside the binary64 range.
    pub fn relative_error_to_ln(&self, x: &Real, ln_fast: f64) -> f64 {
        if *x == self.zero() {
            return if ln_fast == f64::NEG_INFINITY { 0.0 } else { f64::INFINITY };
        }
        if !ln_fast.is_finite() {
            return f64::INFINITY;
        }
        let (significand, exponent) = x.repr().clone().into_parts();
        let magnitude = significand.unsigned_abs();
        let shift = magnitude.bit_len().saturating_sub(53);
        let top = u64::try_from(&(magnitude >> shift)).expect("53-bit head");
        let head_bits = 64 - top.leading_zeros() as isize;
        let mantissa = top as f64 / 2f64.powi(head_bits as i32 - 1);
        let binary_exponent = exponent + shift as isize + head_bits - 1;
        let scaled = &self.ln2 * Real::from(IBig::from(binary_exponent)) - self.real(ln_fast);
        let delta = scaled.to_f64().value() + mantissa.ln();
        delta.exp_m1().abs()
    }
}

/// Gain constants at working precision, parameterized by `m = sinh² g`.
#[derive(Clone, Debug)]
pub struct OracleGain {
    pub m: f64,
    pub precision: Precision,
    /// `cosh² g = 1 + m`
    pub c_sq: Real,
    /// `tanh² g = m / (1 + m)`
    pub z: Real,
}

impl OracleGain {
    pub fn new(m: f64, cfg: &OracleConfig) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(OracleError::Domain(format!("m = {m}")));
        }
        let precision = Precision::new(cfg);
        let mm = precision.real(m);
        let c_sq = &precision.one + &mm;
        let z = &mm / &c_sq;
        Ok(OracleGain {
            m,
            precision,
            c_sq,
            z,
        })
    }

    pub fn cosh(&self) -> Real {
        self.c_sq.sqrt()
    }
}

/// Beam splitter at working precision; `T = 1 - R` exactly.
#[derive(Clone, Debug)]
pub struct OracleBeamSplitter {
    pub r: Real,
    pub t: Real,
}

impl OracleBeamSplitter {
    pub fn new(reflectivity: f64, precision: &Precision) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(OracleError::Domain(format!("R = {reflectivity}")));
        }
        let r = precision.real(reflectivity);
        let t = precision.one() - &r;
        Ok(OracleBeamSplitter { r, t })
    }
}

fn factorial(n: u64) -> UBig {
    (1..=n).fold(UBig::ONE, |acc, k| acc * UBig::from(k))
}

/// `γ²ᵢⱼ = C⁻⁴ (z/4)^(i+j) (2i+1)! (2j)! / (i!² j!²)` with multiplied-out
/// factorials.
pub fn oracle_gamma_sq(i: u64, j: u64, gain: &OracleGain) -> Real {
    let p = &gain.precision;
    let fi = factorial(i);
    let fj = factorial(j);
    let numerator = factorial(2 * i + 1) * factorial(2 * j);
    let denominator = &fi * &fi * &fj * &fj;
    let ratio = p.big_int(numerator) / p.big_int(denominator);
    let quarter_z = &gain.z / p.int(4);
    let power = quarter_z.powi(IBig::from(i + j));
    ratio * power / (&gain.c_sq * &gain.c_sq)
}

/// Same quantity in exact rational arithmetic for rational `m`.
pub fn oracle_gamma_sq_exact(i: u64, j: u64, m: &RBig) -> RBig {
    let c_sq = RBig::ONE + m;
    let quarter_z = m / (&c_sq * RBig::from(4u8));
    let mut power = RBig::ONE;
    for _ in 0..i + j {
        power = power * &quarter_z;
    }
    let fi = factorial(i);
    let fj = factorial(j);
    let ratio = RBig::from_parts(
        IBig::from(factorial(2 * i + 1) * factorial(2 * j)),
        &fi * &fi * &fj * &fj,
    );
    ratio * power / (&c_sq * &c_sq)
}

/// `γ²ᵢ₀` for `i = 0..=bound` by the exact term ratio.
pub fn gamma_i0_table(gain: &OracleGain, bound: u64) -> Vec<Real> {
    let p = &gain.precision;
    let mut out = Vec::with_capacity(bound as usize + 1);
    let mut term = p.one() / (&gain.c_sq * &gain.c_sq);
    for i in 0..=bound {
        out.push(term.clone());
        // γ²ᵢ₊₁,₀ / γ²ᵢ₀ = z (2i+3) / (2i+2)
        term = term * &gain.z * p.int(2 * i + 3) / p.int(2 * i + 2);
    }
    out
}

/// `γ²₀ⱼ` for `j = 0..=bound`.
pub fn gamma_0j_table(gain: &OracleGain, bound: u64) -> Vec<Real> {
    let p = &gain.precision;
    let mut out = Vec::with_capacity(bound as usize + 1);
    let mut term = p.one() / (&gain.c_sq * &gain.c_sq);
    for j in 0..=bound {
        out.push(term.clone());
        // γ²₀,ⱼ₊₁ / γ²₀ⱼ = z (2j+1) / (2j+2)
        term = term * &gain.z * p.int(2 * j + 1) / p.int(2 * j + 2);
    }
    out
}

/// Powers `Rⁿ`, `Tⁿ` for `n = 0..=max`.
#[derive(Clone, Debug)]
pub struct BinomialPowers {
    r_pow: Vec<Real>,
    t_pow: Vec<Real>,
}

impl BinomialPowers {
    pub fn new(bs: &OracleBeamSplitter, max: u64, precision: &Precision) -> Self {
        let mut r_pow = vec![precision.one()];
        let mut t_pow = vec![precision.one()];
        for n in 0..max as usize {
            let next_r = &r_pow[n] * &bs.r;
            let next_t = &t_pow[n] * &bs.t;
            r_pow.push(next_r);
            t_pow.push(next_t);
        }
        BinomialPowers { r_pow, t_pow }
    }

    pub fn max(&self) -> u64 {
        self.r_pow.len() as u64 - 1
    }

    /// `C(N,n) Rⁿ T^(N-n)` for `n = 0..=N`.
    pub fn row(&self, total: u64, precision: &Precision) -> Vec<Real> {
        assert!(total <= self.max(), "power table too short");
        let mut binom = precision.one();
        let mut out = Vec::with_capacity(total as usize + 1);
        for n in 0..=total {
            out.push(&binom * &self.r_pow[n as usize] * &self.t_pow[(total - n) as usize]);
            binom = binom * precision.int(total - n) / precision.int(n + 1);
        }
        out
    }
}

/// `fᵢ(n,i) = C² γ²ᵢ₀ C(2i+1,n) Rⁿ T^(2i+1-n)` for `n = 0..=2i+1`.
pub fn f_i_row(i: u64, gamma_i0: &Real, gain: &OracleGain, powers: &BinomialPowers) -> Vec<Real> {
    let scale = &gain.c_sq * gamma_i0;
    powers
        .row(2 * i + 1, &gain.precision)
        .into_iter()
        .map(|b| b * &scale)
        .collect()
}

/// `fⱼ(m,j) = C² γ²₀ⱼ C(2j,m) Rᵐ T^(2j-m)` for `m = 0..=2j`.
pub fn f_j_row(j: u64, gamma_0j: &Real, gain: &OracleGain, powers: &BinomialPowers) -> Vec<Real> {
    let scale = &gain.c_sq * gamma_0j;
    powers
        .row(2 * j, &gain.precision)
        .into_iter()
        .map(|b| b * &scale)
        .collect()
}

/// A priori bound on `Σ_{i>bound} tᵢ` given the first neglected term and a
/// bound on every later term ratio.
fn geometric_tail(first_neglected: &Real, ratio_sup: f64) -> f64 {
    if ratio_sup >= 1.0 {
        return f64::INFINITY;
    }
    first_neglected.to_f64().value() / (1.0 - ratio_sup)
}

/// Tails of `Σγ²ᵢ₀` and `Σγ²₀ⱼ` beyond `bound`, with optional `(2i+1)` and
/// `2j` weights.
#[derive(Clone, Copy, Debug)]
struct Tails {
    i0: f64,
    j0: f64,
    i0_weighted: f64,
    j0_weighted: f64,
}

fn tails(gain: &OracleGain, bound: u64) -> Tails {
    let gi = gamma_i0_table(gain, bound + 1);
    let gj = gamma_0j_table(gain, bound + 1);
    let z = gain.z.to_f64().value();
    let b = bound as f64;
    let next_i = &gi[bound as usize + 1];
    let next_j = &gj[bound as usize + 1];
    // The i-ratio z(2i+3)/(2i+2) decreases; the j-ratio z(2j+1)/(2j+2) rises towards z.
    let rho_i = z * (2.0 * b + 5.0) / (2.0 * b + 4.0);
    let rho_j = z;
    let w_i = 2.0 * b + 3.0;
    let w_j = 2.0 * b + 2.0;
    Tails {
        i0: geometric_tail(next_i, rho_i),
        j0: geometric_tail(next_j, rho_j),
        i0_weighted: w_i * geometric_tail(next_i, rho_i * (2.0 * b + 5.0) / (2.0 * b + 3.0)),
        j0_weighted: w_j * geometric_tail(next_j, rho_j * (b + 2.0) / (b + 1.0)),
    }
}

/// Bound on the probability mass carried by `i > bound` or `j > bound`.
fn mass_tail(gain: &OracleGain, t: &Tails) -> f64 {
    let c = gain.cosh().to_f64().value();
    c * t.i0 + c.powi(3) * t.j0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OraclePreselection {
    /// Keep `k + l ≥ sigma`.
    Theoretical { sigma: u64 },
    /// Keep reflected occupations `n + m ≥ sigma_prime`.
    BeamSplitter { sigma_prime: u64, reflectivity: f64 },
}

#[derive(Clone, Debug)]
pub struct OracleDistribution {
    /// `|N|⁻²`
    pub norm_inverse: Real,
    /// `grid[k][l]` for `k, l ≤ k_max`.
    pub grid: Vec<Vec<Real>>,
    /// Bound on the pointwise error caused by index truncation.
    pub tail_bound: f64,
}

impl OracleDistribution {
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.grid[k][l].to_f64().value()
    }
}

/// Preselected photon-number distribution `p(k,l)` for `k, l ≤ k_max`.
///
/// The beam-splitter case sums `fᵢ(n,i) fⱼ(m,j)` over every reflected pair
/// `(n,m)` with `n + m ≥ σ'`, `k = 2i+1-n`, `l = 2j-m`; the inner sum over `m`
/// is carried as a running suffix sum.
pub fn oracle_distribution(
    m: f64,
    presel: OraclePreselection,
    k_max: u64,
    cfg: &OracleConfig,
) -> Result<OracleDistribution> {
    let gain = OracleGain::new(m, cfg)?;
    let p = &gain.precision;
    let bound = cfg.index_bound;
    let t = tails(&gain, bound);
    let neglected = mass_tail(&gain, &t);
    let gi = gamma_i0_table(&gain, bound);
    let gj = gamma_0j_table(&gain, bound);
    let c4 = &gain.c_sq * &gain.c_sq;
    let side = k_max as usize + 1;

    let (norm_inverse, grid) = match presel {
        OraclePreselection::Theoretical { sigma } => {
            let mut norm_inverse = p.zero();
            for (i, a) in gi.iter().enumerate() {
                for (j, b) in gj.iter().enumerate() {
                    if (2 * i + 1 + 2 * j) as u64 >= sigma {
                        norm_inverse = norm_inverse + &c4 * a * b;
                    }
                }
            }
            let mut grid = vec![vec![p.zero(); side]; side];
            for (k, row) in grid.iter_mut().enumerate() {
                for (l, cell) in row.iter_mut().enumerate() {
                    if k % 2 == 1 && l % 2 == 0 && (k + l) as u64 >= sigma {
                        let (i, j) = ((k - 1) / 2, l / 2);
                        if i as u64 <= bound && j as u64 <= bound {
                            *cell = &c4 * &gi[i] * &gj[j] / &norm_inverse;
                        }
                    }
                }
            }
            (norm_inverse, grid)
        }
        OraclePreselection::BeamSplitter {
            sigma_prime,
            reflectivity,
        } => {
            let bs = OracleBeamSplitter::new(reflectivity, p)?;
            let powers = BinomialPowers::new(&bs, 2 * bound + 1, p);
            let span = 2 * bound as usize + 2;
            // u[k][n] = fᵢ(n, (k+n-1)/2), w[l][m] = fⱼ(m, (l+m)/2)
            let mut u = vec![vec![p.zero(); span]; side];
            let mut a_marg = vec![p.zero(); span];
            for (i, g) in gi.iter().enumerate() {
                let row = f_i_row(i as u64, g, &gain, &powers);
                for (n, f) in row.into_iter().enumerate() {
                    let k = 2 * i + 1 - n;
                    a_marg[n] = &a_marg[n] + &f;
                    if k < side {
                        u[k][n] = f;
                    }
                }
            }
            let mut w = vec![vec![p.zero(); span]; side];
            let mut b_marg = vec![p.zero(); span];
            for (j, g) in gj.iter().enumerate() {
                let row = f_j_row(j as u64, g, &gain, &powers);
                for (mm, f) in row.into_iter().enumerate() {
                    let l = 2 * j - mm;
                    b_marg[mm] = &b_marg[mm] + &f;
                    if l < side {
                        w[l][mm] = f;
                    }
                }
            }
            let suffix = |v: &[Real]| -> Vec<Real> {
                let mut out = vec![p.zero(); v.len() + 1];
                for idx in (0..v.len()).rev() {
                    out[idx] = &out[idx + 1] + &v[idx];
                }
                out
            };
            let clamp = |n: usize, len: usize| -> usize {
                (sigma_prime as usize).saturating_sub(n).min(len)
            };
            let b_suffix = suffix(&b_marg);
            let mut norm_inverse = p.zero();
            for (n, a) in a_marg.iter().enumerate() {
                norm_inverse = norm_inverse + a * &b_suffix[clamp(n, span)];
            }
            if norm_inverse == p.zero() {
                return Err(OracleError::Domain(
                    "preselection removes all probability mass".into(),
                ));
            }
            let w_suffix: Vec<Vec<Real>> = w.iter().map(|row| suffix(row)).collect();
            let mut grid = vec![vec![p.zero(); side]; side];
            for (k, row) in grid.iter_mut().enumerate() {
                for (l, cell) in row.iter_mut().enumerate() {
                    let mut acc = p.zero();
                    for (n, un) in u[k].iter().enumerate() {
                        acc = acc + un * &w_suffix[l][clamp(n, span)];
                    }
                    *cell = acc / &norm_inverse;
                }
            }
            (norm_inverse, grid)
        }
    };

    let scale = 1.0 / norm_inverse.to_f64().value();
    let tail_bound = neglected * scale * 2.0;
    if !(tail_bound <= cfg.tail_limit()) {
        return Err(OracleError::Uncertified {
            tail_bound,
            limit: cfg.tail_limit(),
        });
    }
    Ok(OracleDistribution {
        norm_inverse,
        grid,
        tail_bound,
    })
}

#[derive(Clone, Debug)]
pub struct IdentityReport {
    /// `Σᵢⱼ γ²ᵢⱼ`, expected 1.
    pub gamma_sum: Real,
    /// `Σₙ A(n)`, expected `cosh g`.
    pub a_sum: Real,
    /// `Σₘ B(m)`, expected `1/cosh g`.
    pub b_sum: Real,
    /// `Σ A · Σ B`, expected 1.
    pub ab_product: Real,
    /// Unpreselected `E[k + l]`, expected `4m + 1`.
    pub mean_total: Real,
    pub cosh: Real,
    pub tail_bound: f64,
}

impl IdentityReport {
    /// Absolute deviations from the closed forms, in field order.
    pub fn deviations(&self, m: f64) -> [f64; 5] {
        let one = Real::ONE;
        let d = |x: &Real, y: &Real| (x - y).to_f64().value().abs();
        let four_m_plus_one = Real::try_from(4.0 * m + 1.0).expect("finite");
        [
            d(&self.gamma_sum, &one),
            d(&self.a_sum, &self.cosh),
            d(&self.b_sum, &(&one / &self.cosh)),
            d(&self.ab_product, &one),
            d(&self.mean_total, &four_m_plus_one),
        ]
    }
}

/// Closed-form checks of the unpreselected state, each summed term by term.
pub fn oracle_identities(m: f64, reflectivity: f64, cfg: &OracleConfig) -> Result<IdentityReport> {
    let gain = OracleGain::new(m, cfg)?;
    let p = &gain.precision;
    let bound = cfg.index_bound;
    let t = tails(&gain, bound);
    let c = gain.cosh();
    let cf = c.to_f64().value();
    let tail_bound = [
        mass_tail(&gain, &t),
        cf * cf * t.i0,
        cf * cf * t.j0,
        cf.powi(4) * (t.i0_weighted / cf + t.j0_weighted / cf.powi(3)),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if !(tail_bound <= cfg.tail_limit()) {
        return Err(OracleError::Uncertified {
            tail_bound,
            limit: cfg.tail_limit(),
        });
    }
    let bs = OracleBeamSplitter::new(reflectivity, p)?;
    let powers = BinomialPowers::new(&bs, 2 * bound + 1, p);
    let gi = gamma_i0_table(&gain, bound);
    let gj = gamma_0j_table(&gain, bound);
    let c4 = &gain.c_sq * &gain.c_sq;

    let mut si = p.zero();
    let mut si_w = p.zero();
    for (i, g) in gi.iter().enumerate() {
        si = si + g;
        si_w = si_w + g * p.int(2 * i as u64 + 1);
    }
    let mut sj = p.zero();
    let mut sj_w = p.zero();
    for (j, g) in gj.iter().enumerate() {
        sj = sj + g;
        sj_w = sj_w + g * p.int(2 * j as u64);
    }
    let gamma_sum = &c4 * &si * &sj;
    let mean_total = &c4 * (&si_w * &sj + &si * &sj_w);

    let mut a_sum = p.zero();
    for (i, g) in gi.iter().enumerate() {
        for f in f_i_row(i as u64, g, &gain, &powers) {
            a_sum = a_sum + f;
        }
    }
    let mut b_sum = p.zero();
    for (j, g) in gj.iter().enumerate() {
        for f in f_j_row(j as u64, g, &gain, &powers) {
            b_sum = b_sum + f;
        }
    }
    let ab_product = &a_sum * &b_sum;
    Ok(IdentityReport {
        gamma_sum,
        a_sum,
        b_sum,
        ab_product,
        mean_total,
        cosh: c,
        tail_bound,
    })
}
