//! Log-domain hypergeometric terms of the amplified single-photon state.
//!
//! With gain `g`, `C = cosh g` and `z = tanh² g`:
//!
//! * `γ²ᵢ₀ = C⁻⁴ (z/4)ⁱ (2i+1)!/(i!)²`, `γ²₀ⱼ = C⁻⁴ (z/4)ʲ (2j)!/(j!)²`,
//!   `γ²ᵢⱼ = C⁴ γ²ᵢ₀ γ²₀ⱼ`;
//! * beam-splitter coefficients `(c_k^(N))² = C(N,k) Rᵏ Tᴺ⁻ᵏ`;
//! * `fᵢ(n,i) = C² γ²ᵢ₀ (c_n^(2i+1))²` and `fⱼ(m,j) = C² γ²₀ⱼ (c_m^(2j))²`,
//!   optionally weighted by the transmitted photon count to a power.
//!
//! Out-of-range indices give [`LogWeight::ZERO`] instead of an error.

use crate::error::{Error, Result};
use crate::special::{log_binomial_pmf, log_central_binomial_scaled, LogWeight};

/// Amplification gain and the constants derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainParams {
    /// Gain `g`.
    pub g: f64,
    /// Mean-photon parameter `m = sinh² g`.
    pub m: f64,
    /// `cosh g`
    pub c_g: f64,
    /// `tanh g`
    pub t_g: f64,
    /// `tanh² g`
    pub z: f64,
    ln_c_g: f64,
    ln_z: f64,
}

impl GainParams {
    /// Parameterizes the cloner by `m = sinh² g`.
    pub fn from_mean(m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!(
                "mean photon parameter must be finite and >= 0, got {m}"
            )));
        }
        let c_sq = 1.0 + m;
        let z = m / c_sq;
        Ok(GainParams {
            g: m.sqrt().asinh(),
            m,
            c_g: c_sq.sqrt(),
            t_g: z.sqrt(),
            z,
            ln_c_g: 0.5 * m.ln_1p(),
            ln_z: if m == 0.0 {
                f64::NEG_INFINITY
            } else {
                m.ln() - m.ln_1p()
            },
        })
    }

    pub fn from_gain(g: f64) -> Result<Self> {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::Domain(format!("gain must be finite and >= 0, got {g}")));
        }
        let s = g.sinh();
        let mut params = Self::from_mean(s * s)?;
        params.g = g;
        Ok(params)
    }

    /// `ln cosh g`
    #[inline]
    pub fn ln_c_g(&self) -> f64 {
        self.ln_c_g
    }

    /// `ln tanh² g`
    #[inline]
    pub fn ln_z(&self) -> f64 {
        self.ln_z
    }

    /// `ln((z/4)ʲ (2j)!/(j!)²)`
    #[inline]
    fn ln_even_core(&self, j: u64) -> f64 {
        if j == 0 {
            0.0
        } else {
            j as f64 * self.ln_z + log_central_binomial_scaled(j)
        }
    }

    /// `ln((z/4)ⁱ (2i+1)!/(i!)²)`
    #[inline]
    fn ln_odd_core(&self, i: u64) -> f64 {
        self.ln_even_core(i) + ((2 * i + 1) as f64).ln()
    }
}

/// Beam splitter with reflectivity `R` and transmittivity `T = 1 - R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamSplitterParams {
    pub r: f64,
    pub t: f64,
    ln_r: f64,
    ln_t: f64,
}

impl BeamSplitterParams {
    pub fn new(reflectivity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::Domain(format!(
                "reflectivity must lie in [0, 1], got {reflectivity}"
            )));
        }
        Ok(BeamSplitterParams {
            r: reflectivity,
            t: 1.0 - reflectivity,
            ln_r: reflectivity.ln(),
            ln_t: (-reflectivity).ln_1p(),
        })
    }

    #[inline]
    pub fn ln_r(&self) -> f64 {
        self.ln_r
    }

    #[inline]
    pub fn ln_t(&self) -> f64 {
        self.ln_t
    }
}

#[inline]
fn weight(base: u64, exponent: u32) -> f64 {
    match exponent {
        0 => 0.0,
        _ if base == 0 => f64::NEG_INFINITY,
        e => f64::from(e) * (base as f64).ln(),
    }
}

/// `ln γ²ᵢ₀`
pub fn log_sq_gamma_i0(i: u64, gain: &GainParams) -> LogWeight {
    LogWeight::from_ln(-4.0 * gain.ln_c_g + gain.ln_odd_core(i))
}

/// `ln γ²₀ⱼ`
pub fn log_sq_gamma_0j(j: u64, gain: &GainParams) -> LogWeight {
    LogWeight::from_ln(-4.0 * gain.ln_c_g + gain.ln_even_core(j))
}

/// `ln γ²ᵢⱼ`
pub fn log_sq_gamma(i: u64, j: u64, gain: &GainParams) -> LogWeight {
    LogWeight::from_ln(-4.0 * gain.ln_c_g + gain.ln_odd_core(i) + gain.ln_even_core(j))
}

/// `ln C² γ²ᵢ₀ (2i+1)ᵖ`, the weighted summand of `G`.
pub fn log_scaled_gamma_i0(i: u64, gain: &GainParams, p: u32) -> LogWeight {
    LogWeight::from_ln(-2.0 * gain.ln_c_g + gain.ln_odd_core(i) + weight(2 * i + 1, p))
}

/// `ln C² γ²₀ⱼ (2j)ᵠ`, the weighted summand of `Ḡ`.
pub fn log_scaled_gamma_0j(j: u64, gain: &GainParams, q: u32) -> LogWeight {
    LogWeight::from_ln(-2.0 * gain.ln_c_g + gain.ln_even_core(j) + weight(2 * j, q))
}

/// `ln (c_k^(N))²`; zero weight for `k < 0` or `k > N`.
pub fn log_bs_coeff_sq(k: i64, n: u64, bs: &BeamSplitterParams) -> LogWeight {
    if k < 0 || k as u64 > n {
        return LogWeight::ZERO;
    }
    LogWeight::from_ln(log_binomial_pmf(n, k as u64, bs.r, bs.t, bs.ln_r, bs.ln_t))
}

/// `ln(fᵢ(n,i) · (2i+1-n)ᵖ)`: `2i+1` photons in the first polarization, `n`
/// of them reflected, weighted by the transmitted count to the power `p`.
pub fn log_f_i(n: u64, i: u64, gain: &GainParams, bs: &BeamSplitterParams, p: u32) -> LogWeight {
    let total = 2 * i + 1;
    if n > total {
        return LogWeight::ZERO;
    }
    let ln = -2.0 * gain.ln_c_g
        + gain.ln_odd_core(i)
        + log_binomial_pmf(total, n, bs.r, bs.t, bs.ln_r, bs.ln_t)
        + weight(total - n, p);
    LogWeight::from_ln(ln)
}

/// `ln(fⱼ(m,j) · (2j-m)ᵠ)`: `2j` photons in the orthogonal polarization, `m`
/// of them reflected.
pub fn log_f_j(
    m_occ: u64,
    j: u64,
    gain: &GainParams,
    bs: &BeamSplitterParams,
    q: u32,
) -> LogWeight {
    let total = 2 * j;
    if m_occ > total {
        return LogWeight::ZERO;
    }
    let ln = -2.0 * gain.ln_c_g
        + gain.ln_even_core(j)
        + log_binomial_pmf(total, m_occ, bs.r, bs.t, bs.ln_r, bs.ln_t)
        + weight(total - m_occ, q);
    LogWeight::from_ln(ln)
}
