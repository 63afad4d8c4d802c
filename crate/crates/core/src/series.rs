//! Dynamically truncated sums of the unimodal hypergeometric families
//! `A(n)`, `B(m)`, `G(n)`, `Ḡ(m)` and their precomputed tables.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hyperterms::{
    log_f_i, log_f_j, log_scaled_gamma_0j, log_scaled_gamma_i0, BeamSplitterParams, GainParams,
};
use crate::special::{inverse_digamma, digamma, LogWeight};

/// Safety net against a non-decaying term generator.
const MAX_TERMS: usize = 1 << 26;

/// Leading exact zeros tolerated before a series is declared empty. A
/// moment weight can zero the first term only.
const LEADING_ZEROS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionConfig {
    /// Relative size of the last summed term with respect to the peak.
    pub eps_rel: f64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig { eps_rel: 1e-15 }
    }
}

impl PrecisionConfig {
    pub fn new(eps_rel: f64) -> Result<Self> {
        if !(eps_rel > 0.0 && eps_rel < 1.0) {
            return Err(Error::Domain(format!("eps_rel must lie in (0, 1), got {eps_rel}")));
        }
        Ok(PrecisionConfig { eps_rel })
    }

    #[inline]
    pub fn ln_eps(&self) -> f64 {
        self.eps_rel.ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesResult {
    pub log_value: LogWeight,
    pub first_index: u64,
    /// Index of the last term included.
    pub last_index: u64,
    pub peak_index: u64,
    pub term_count: u64,
}

impl SeriesResult {
    #[inline]
    pub fn value(&self) -> f64 {
        self.log_value.value()
    }
}

/// Log terms of a unimodal sequence, from the start index through the first
/// descending term below `eps_rel` times the peak.
#[derive(Clone, Debug)]
pub struct UnimodalScan {
    pub ln_terms: Vec<f64>,
    pub peak: usize,
}

impl UnimodalScan {
    pub fn peak_ln(&self) -> f64 {
        self.ln_terms.get(self.peak).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn is_empty(&self) -> bool {
        self.peak_ln() == f64::NEG_INFINITY
    }

    /// Sum of the scanned terms in ascending order of magnitude. Both phases
    /// are already monotone, so a merge suffices.
    pub fn total(&self) -> LogWeight {
        let peak = self.peak_ln();
        if peak == f64::NEG_INFINITY {
            return LogWeight::ZERO;
        }
        let rising = &self.ln_terms[..=self.peak];
        let falling = &self.ln_terms[self.peak + 1..];
        let (mut i, mut j) = (0usize, falling.len());
        let mut acc = 0.0;
        while i < rising.len() || j > 0 {
            let take_rising = j == 0 || (i < rising.len() && rising[i] <= falling[j - 1]);
            let ln = if take_rising {
                i += 1;
                rising[i - 1]
            } else {
                j -= 1;
                falling[j]
            };
            acc += (ln - peak).exp();
        }
        LogWeight::from_ln(peak + acc.ln())
    }
}

/// Scans `term(start), term(start + step), …` in two phases: the rise to the
/// peak, then the decay until a term drops below `eps_rel` times the peak.
pub fn scan_unimodal<F>(mut term: F, start: u64, step: u64, prec: &PrecisionConfig) -> UnimodalScan
where
    F: FnMut(u64) -> LogWeight,
{
    let ln_eps = prec.ln_eps();
    let mut ln_terms = Vec::new();
    let mut peak = 0usize;
    let mut peak_ln = f64::NEG_INFINITY;
    let mut index = start;
    loop {
        let ln = term(index).ln();
        ln_terms.push(ln);
        let pos = ln_terms.len() - 1;
        if ln > peak_ln {
            peak_ln = ln;
            peak = pos;
        } else if peak_ln == f64::NEG_INFINITY {
            if ln_terms.len() > LEADING_ZEROS {
                break;
            }
        } else if ln < peak_ln && ln <= peak_ln + ln_eps {
            break;
        }
        if ln_terms.len() >= MAX_TERMS {
            debug_assert!(false, "series did not decay within {MAX_TERMS} terms");
            break;
        }
        index += step;
    }
    UnimodalScan { ln_terms, peak }
}

/// Sum of a unimodal series starting at `start_index`, truncated dynamically.
pub fn sum_dynamic<F>(term: F, start_index: u64, prec: &PrecisionConfig) -> SeriesResult
where
    F: FnMut(u64) -> LogWeight,
{
    let scan = scan_unimodal(term, start_index, 1, prec);
    let count = scan.ln_terms.len() as u64;
    SeriesResult {
        log_value: scan.total(),
        first_index: start_index,
        last_index: start_index + count - 1,
        peak_index: start_index + scan.peak as u64,
        term_count: count,
    }
}

/// `ln fᵢ(n,i+1) - ln fᵢ(n,i)` from the exact rational term ratio
/// `z T² (2i+3)² / ((2i+3-n)(2i+2-n))`.
fn ln_step_ratio(n: u64, i: u64, ln_zt2: f64) -> f64 {
    let y = (2 * i + 3) as f64;
    let a = (2 * i + 3 - n) as f64;
    let b = (2 * i + 2 - n) as f64;
    ln_zt2 + 2.0 * y.ln() - a.ln() - b.ln()
}

/// Index of the largest term of `i ↦ fᵢ(n,i)`.
///
/// The continuous stationarity condition
/// `ψ(2I+2-n) = ½ ln(z/4) + 2ψ(2I+2) - ψ(I+1) + ln T`
/// is iterated through the inverse digamma function, and the rounded
/// solution is then polished with the exact term ratio.
pub fn term_peak_index(n: u64, gain: &GainParams, bs: &BeamSplitterParams) -> u64 {
    let start = n / 2;
    if bs.r <= 0.0 || bs.r >= 1.0 || gain.z <= 0.0 {
        return start;
    }
    let ln_zt2 = gain.ln_z() + 2.0 * bs.ln_t();
    if ln_step_ratio(n, start, ln_zt2) < 0.0 {
        return start;
    }
    let rhs = |x: f64| -> f64 {
        0.5 * (gain.ln_z() - 4f64.ln()) + 2.0 * digamma(2.0 * x + 2.0).unwrap_or(f64::NAN)
            - digamma(x + 1.0).unwrap_or(f64::NAN)
            + bs.ln_t()
    };
    let lo = start as f64;
    let mut x = lo;
    for _ in 0..200 {
        let arg = inverse_digamma(rhs(x));
        let next = ((arg + n as f64 - 2.0) / 2.0).max(lo);
        if !next.is_finite() {
            break;
        }
        let done = (next - x).abs() <= 1e-9 * next.max(1.0);
        x = next;
        if done {
            break;
        }
    }
    let mut i = (x.round() as u64).max(start);
    // ratio > 0 means the next term is larger
    while ln_step_ratio(n, i, ln_zt2) > 0.0 {
        i += 1;
    }
    while i > start && ln_step_ratio(n, i - 1, ln_zt2) < 0.0 {
        i -= 1;
    }
    i
}

/// `A(n) = Σ_{i ≥ ⌊n/2⌋} fᵢ(n,i) (2i+1-n)ᵖ`
pub fn sum_a(
    n: u64,
    gain: &GainParams,
    bs: &BeamSplitterParams,
    p: u32,
    prec: &PrecisionConfig,
) -> SeriesResult {
    sum_dynamic(|i| log_f_i(n, i, gain, bs, p), n / 2, prec)
}

/// `B(m) = Σ_{j ≥ ⌊(m+1)/2⌋} fⱼ(m,j) (2j-m)^q`
pub fn sum_b(
    m_occ: u64,
    gain: &GainParams,
    bs: &BeamSplitterParams,
    q: u32,
    prec: &PrecisionConfig,
) -> SeriesResult {
    sum_dynamic(|j| log_f_j(m_occ, j, gain, bs, q), (m_occ + 1) / 2, prec)
}

/// `G(n) = Σ_{i ≥ n} C² γ²ᵢ₀`
pub fn sum_g(n: u64, gain: &GainParams, prec: &PrecisionConfig) -> SeriesResult {
    sum_g_weighted(n, gain, 0, prec)
}

/// `Ḡ(m) = Σ_{j ≥ m} C² γ²₀ⱼ`
pub fn sum_gbar(m_occ: u64, gain: &GainParams, prec: &PrecisionConfig) -> SeriesResult {
    sum_gbar_weighted(m_occ, gain, 0, prec)
}

/// `Σ_{i ≥ n} C² γ²ᵢ₀ (2i+1)ᵖ`
pub fn sum_g_weighted(n: u64, gain: &GainParams, p: u32, prec: &PrecisionConfig) -> SeriesResult {
    sum_dynamic(|i| log_scaled_gamma_i0(i, gain, p), n, prec)
}

/// `Σ_{j ≥ m} C² γ²₀ⱼ (2j)^q`
pub fn sum_gbar_weighted(
    m_occ: u64,
    gain: &GainParams,
    q: u32,
    prec: &PrecisionConfig,
) -> SeriesResult {
    sum_dynamic(|j| log_scaled_gamma_0j(j, gain, q), m_occ, prec)
}

/// One precomputed series table, stored both in log and linear form.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    ln: Vec<f64>,
    value: Vec<f64>,
}

impl SeriesTable {
    pub fn from_ln(ln: Vec<f64>) -> Self {
        let value = ln.iter().map(|l| l.exp()).collect();
        SeriesTable { ln, value }
    }

    /// Index of the last stored entry.
    pub fn last_index(&self) -> usize {
        self.ln.len() - 1
    }

    pub fn len(&self) -> usize {
        self.ln.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln.is_empty()
    }

    /// Log entry; `-inf` past the end.
    #[inline]
    pub fn ln(&self, index: usize) -> f64 {
        self.ln.get(index).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Linear entry; `0` past the end.
    #[inline]
    pub fn value(&self, index: usize) -> f64 {
        self.value.get(index).copied().unwrap_or(0.0)
    }

    pub fn ln_values(&self) -> &[f64] {
        &self.ln
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }
}

/// Paired tables for a factorized double sum: `A`/`B` in beam-splitter mode,
/// `C²γ²ᵢ₀`/`C²γ²₀ⱼ` in theoretical mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Tables {
    pub a: SeriesTable,
    pub b: SeriesTable,
}

impl Tables {
    /// `N`
    pub fn n_cut(&self) -> usize {
        self.a.last_index()
    }

    /// `M`
    pub fn m_cut(&self) -> usize {
        self.b.last_index()
    }
}

const CHUNK: u64 = 64;

/// Evaluates `entry(0), entry(1), …` in parallel chunks until two
/// consecutive entries past `max_needed` fall below `eps_rel` times the
/// largest entry seen from `max_needed` on. The two probe entries are not
/// kept.
fn build_table<F>(entry: F, max_needed: u64, prec: &PrecisionConfig) -> SeriesTable
where
    F: Fn(u64) -> f64 + Sync,
{
    let ln_eps = prec.ln_eps();
    let mut ln: Vec<f64> = Vec::new();
    let mut running_max = f64::NEG_INFINITY;
    let mut checked = 0u64;
    loop {
        let lo = ln.len() as u64;
        let chunk: Vec<f64> = (lo..lo + CHUNK).into_par_iter().map(&entry).collect();
        ln.extend(chunk);
        while checked + 2 < ln.len() as u64 {
            let n = checked as usize;
            if checked >= max_needed {
                running_max = running_max.max(ln[n]);
                let small = |x: f64| x == f64::NEG_INFINITY || x <= running_max + ln_eps;
                if small(ln[n + 1]) && small(ln[n + 2]) {
                    ln.truncate(n + 1);
                    return SeriesTable::from_ln(ln);
                }
            }
            checked += 1;
        }
    }
}

/// `A[0..=N]` and `B[0..=M]`, optionally moment-weighted, for a reflected
/// threshold `max_needed`.
pub fn precompute_tables(
    max_needed: u64,
    gain: &GainParams,
    bs: &BeamSplitterParams,
    p: u32,
    q: u32,
    prec: &PrecisionConfig,
) -> Tables {
    let (a, b) = rayon::join(
        || build_table(|n| sum_a(n, gain, bs, p, prec).log_value.ln(), max_needed, prec),
        || build_table(|m| sum_b(m, gain, bs, q, prec).log_value.ln(), max_needed, prec),
    );
    Tables { a, b }
}

/// `C²γ²ᵢ₀ (2i+1)ᵖ` and `C²γ²₀ⱼ (2j)^q` tables for the theoretical
/// threshold on `i + j`.
pub fn precompute_gamma_tables(
    max_needed: u64,
    gain: &GainParams,
    p: u32,
    q: u32,
    prec: &PrecisionConfig,
) -> Tables {
    let a = build_table(|i| log_scaled_gamma_i0(i, gain, p).ln(), max_needed, prec);
    let b = build_table(|j| log_scaled_gamma_0j(j, gain, q).ln(), max_needed, prec);
    Tables { a, b }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::special::accumulate_ascending;

    fn gain(m: f64) -> GainParams {
        GainParams::from_mean(m).unwrap()
    }

    fn bs(r: f64) -> BeamSplitterParams {
        BeamSplitterParams::new(r).unwrap()
    }

    fn prec() -> PrecisionConfig {
        PrecisionConfig::default()
    }

    fn fixed_sum<F: Fn(u64) -> LogWeight>(term: F, start: u64, count: u64) -> f64 {
        let mut terms: Vec<_> = (start..start + count).map(term).collect();
        terms.sort();
        accumulate_ascending(&terms).value()
    }

    #[test]
    fn precision_config_validation() {
        assert!(PrecisionConfig::new(0.0).is_err());
        assert!(PrecisionConfig::new(1.0).is_err());
        assert_eq!(PrecisionConfig::new(1e-12).unwrap().eps_rel, 1e-12);
    }

    #[test]
    fn geometric_series() {
        let r = sum_dynamic(|i| LogWeight::from_ln(-(i as f64) * 2f64.ln()), 0, &prec());
        assert!((r.value() - 2.0).abs() < 1e-14);
        assert_eq!(r.peak_index, 0);
        assert!(r.last_index >= 49);
    }

    #[test]
    fn all_zero_series_is_degenerate() {
        let r = sum_dynamic(|_| LogWeight::ZERO, 3, &prec());
        assert!(r.log_value.is_zero());
        assert_eq!(r.first_index, 3);
    }

    #[test]
    fn leading_zero_then_rise() {
        let r = sum_dynamic(
            |i| if i == 0 { LogWeight::ZERO } else { LogWeight::from_value(0.5f64.powi(i as i32)) },
            0,
            &prec(),
        );
        assert!((r.value() - 1.0).abs() < 1e-14);
        assert_eq!(r.peak_index, 1);
    }

    #[test]
    fn stops_only_in_descending_phase() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(0.1);
        for n in [0u64, 1, 10, 100, 200] {
            let r = sum_a(n, &g, &b, 0, &prec());
            assert!(r.first_index <= r.peak_index && r.peak_index <= r.last_index);
            let next = log_f_i(n, r.last_index + 1, &g, &b, 0).ln();
            let peak = log_f_i(n, r.peak_index, &g, &b, 0).ln();
            assert!(next < peak + prec().ln_eps(), "n = {n}");
            assert!(r.last_index > r.peak_index);
        }
    }

    #[test]
    fn a0_closed_form() {
        // A(0) = T / (C² (1 - zT²)^(3/2)), A(1) = R (1 + 2x) / (C² (1 - x)^(5/2)), x = zT²
        for (m, r) in [(0.5, 0.1), (5.0, 0.1), (5.0, 0.3), (10.0, 0.05)] {
            let (g, b) = (gain(m), bs(r));
            let x = g.z * b.t * b.t;
            let c2 = g.c_g * g.c_g;
            assert_relative_eq!(
                sum_a(0, &g, &b, 0, &prec()).value(),
                b.t / (c2 * (1.0 - x).powf(1.5)),
                max_relative = 1e-13
            );
            assert_relative_eq!(
                sum_a(1, &g, &b, 0, &prec()).value(),
                b.r * (1.0 + 2.0 * x) / (c2 * (1.0 - x).powf(2.5)),
                max_relative = 1e-13
            );
            assert_relative_eq!(
                sum_b(0, &g, &b, 0, &prec()).value(),
                1.0 / (c2 * (1.0 - x).sqrt()),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn zero_gain_tables() {
        let (g, b) = (gain(0.0), bs(0.1));
        assert_relative_eq!(sum_a(0, &g, &b, 0, &prec()).value(), 0.9, max_relative = 1e-15);
        assert_relative_eq!(sum_a(1, &g, &b, 0, &prec()).value(), 0.1, max_relative = 1e-15);
        assert!(sum_a(2, &g, &b, 0, &prec()).log_value.is_zero());
        assert_eq!(sum_b(0, &g, &b, 0, &prec()).value(), 1.0);
        assert!(sum_b(1, &g, &b, 0, &prec()).log_value.is_zero());
        assert_eq!(sum_b(1, &g, &b, 0, &prec()).first_index, 1);
        assert_eq!(sum_g(0, &g, &prec()).value(), 1.0);
        assert!(sum_g(1, &g, &prec()).log_value.is_zero());

        let t = precompute_tables(0, &g, &b, 0, 0, &prec());
        assert_eq!((t.n_cut(), t.m_cut()), (1, 0));
    }

    #[test]
    fn marginal_identities() {
        let (g, b) = (gain(5.0), bs(0.1));
        let t = precompute_tables(2, &g, &b, 0, 0, &prec());
        let sa: f64 = fixed_sum(|n| LogWeight::from_ln(t.a.ln(n as usize)), 0, t.a.len() as u64);
        let sb: f64 = fixed_sum(|m| LogWeight::from_ln(t.b.ln(m as usize)), 0, t.b.len() as u64);
        assert!((sa - 6f64.sqrt()).abs() < 1e-10, "{sa}");
        assert!((sb - 1.0 / 6f64.sqrt()).abs() < 1e-10, "{sb}");
        assert!((sa * sb - 1.0).abs() < 1e-9);
        assert_relative_eq!(sum_g(0, &g, &prec()).value(), 6f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(sum_gbar(0, &g, &prec()).value(), 1.0 / 6f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn table_tail_criterion() {
        let (g, b) = (gain(5.0), bs(0.1));
        for sigma in [0u64, 2, 30] {
            let t = precompute_tables(sigma, &g, &b, 0, 0, &prec());
            assert!(t.n_cut() as u64 >= sigma && t.m_cut() as u64 >= sigma);
            for (table, cut, sum) in [(&t.a, t.n_cut() as u64, 0u8), (&t.b, t.m_cut() as u64, 1)] {
                let peak = (sigma as usize..=cut as usize)
                    .map(|i| table.ln(i))
                    .fold(f64::NEG_INFINITY, f64::max);
                let next = |k: u64| {
                    if sum == 0 {
                        sum_a(k, &g, &b, 0, &prec()).log_value.ln()
                    } else {
                        sum_b(k, &g, &b, 0, &prec()).log_value.ln()
                    }
                };
                assert!(next(cut + 1) <= peak + prec().ln_eps());
                assert!(next(cut + 2) <= peak + prec().ln_eps());
            }
        }
    }

    #[test]
    fn dynamic_matches_fixed_at_large_gain() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(0.1);
        for n in (0..=200).step_by(20) {
            let dynamic = sum_a(n, &g, &b, 0, &prec());
            let fixed = fixed_sum(|i| log_f_i(n, i, &g, &b, 0), n / 2, 5000);
            assert_relative_eq!(dynamic.value(), fixed, max_relative = 1e-14);
            assert!(dynamic.term_count < 5000);
        }
    }

    #[test]
    fn weighted_series_peaks_later() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(0.1);
        for n in [0u64, 50, 100] {
            let plain = sum_a(n, &g, &b, 0, &prec());
            let weighted = sum_a(n, &g, &b, 2, &prec());
            assert!(weighted.peak_index >= plain.peak_index);
            assert!(weighted.last_index > plain.last_index);
        }
    }

    fn scan_peak(n: u64, g: &GainParams, b: &BeamSplitterParams) -> u64 {
        let mut best = n / 2;
        let mut best_ln = f64::NEG_INFINITY;
        for i in n / 2..n / 2 + 100_000 {
            let ln = log_f_i(n, i, g, b, 0).ln();
            if ln > best_ln {
                best_ln = ln;
                best = i;
            }
        }
        best
    }

    #[test]
    fn peak_index_is_local_maximum() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(0.1);
        for n in [0u64, 10, 100] {
            let peak = term_peak_index(n, &g, &b);
            assert!(peak.abs_diff(scan_peak(n, &g, &b)) <= 1, "n = {n}");
            let f = |i: u64| log_f_i(n, i, &g, &b, 0).ln();
            assert!(f(peak) >= f(peak + 1));
            if peak > n / 2 {
                assert!(f(peak) >= f(peak - 1));
            }
        }
    }

    #[test]
    fn peak_index_tiny_reflectivity() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(1e-6);
        for n in [0u64, 5, 40] {
            assert!(term_peak_index(n, &g, &b).abs_diff(scan_peak(n, &g, &b)) <= 1);
        }
    }

    #[test]
    fn peak_index_degenerate() {
        let g = gain(5.0);
        assert_eq!(term_peak_index(7, &g, &bs(0.0)), 3);
        assert_eq!(term_peak_index(7, &g, &bs(1.0)), 3);
        assert_eq!(term_peak_index(7, &gain(0.0), &bs(0.3)), 3);
    }

    #[test]
    fn peak_index_monotone_in_n() {
        let g = GainParams::from_gain(4.0).unwrap();
        let b = bs(0.1);
        let mut last = 0;
        for n in 0..=200 {
            let p = term_peak_index(n, &g, &b);
            assert!(p >= last, "n = {n}");
            last = p;
        }
    }
}
