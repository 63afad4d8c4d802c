//! Normalizations, distributions and moments of the preselected states.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hyperterms::{log_f_i, log_f_j, log_sq_gamma, BeamSplitterParams, GainParams};
use crate::series::{
    precompute_gamma_tables, precompute_tables, scan_unimodal, PrecisionConfig, SeriesTable,
    Tables,
};
use crate::special::{ln_add, log_sum_exp};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preselection {
    /// Projector onto `k + l ≥ sigma`.
    Theoretical { sigma: u64 },
    /// Reflected occupations must satisfy `n + m ≥ sigma_prime`.
    BeamSplitter {
        sigma_prime: u64,
        bs: BeamSplitterParams,
    },
}

impl Preselection {
    pub fn threshold(&self) -> u64 {
        match *self {
            Preselection::Theoretical { sigma } => sigma,
            Preselection::BeamSplitter { sigma_prime, .. } => sigma_prime,
        }
    }

    pub fn is_theoretical(&self) -> bool {
        matches!(self, Preselection::Theoretical { .. })
    }
}

/// How the thresholded double sum `S = Σ_{n+m ≥ σ'} A(n) B(m)` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumStrategy {
    /// Complement below the switch threshold, tail above.
    #[default]
    Auto,
    /// `Σ_{t ≥ σ'} Σ_m A(t-m) B(m)`, cost grows with the table lengths.
    Tail,
    /// `ΣA·ΣB - Σ_{t < σ'} Σ_m A(t-m) B(m)`, cost grows with `σ'²`.
    Complement,
}

impl FromStr for SumStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SumStrategy::Auto),
            "tail" => Ok(SumStrategy::Tail),
            "complement" => Ok(SumStrategy::Complement),
            other => Err(Error::Domain(format!(
                "unknown strategy {other:?} (expected auto, tail or complement)"
            ))),
        }
    }
}

impl fmt::Display for SumStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SumStrategy::Auto => "auto",
            SumStrategy::Tail => "tail",
            SumStrategy::Complement => "complement",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrategyConfig {
    pub strategy: SumStrategy,
    /// Largest `σ` summed by complement under `Auto`.
    pub theoretical_switch: u64,
    /// Largest `σ'` summed by complement under `Auto`.
    pub beam_splitter_switch: u64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            strategy: SumStrategy::Auto,
            theoretical_switch: 5000,
            beam_splitter_switch: 500,
        }
    }
}

impl StrategyConfig {
    pub fn with_strategy(strategy: SumStrategy) -> Self {
        StrategyConfig {
            strategy,
            ..Self::default()
        }
    }
}

/// Below this fraction of the total the complement form has lost more than
/// three digits to cancellation, and `Auto` recomputes with the tail form.
const COMPLEMENT_FLOOR: f64 = 1e-3;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.carry
    }
}

/// Table entries divided by the table maximum, plus `ln` of that maximum.
fn scaled(table: &SeriesTable) -> (Vec<f64>, f64) {
    let top = table.ln_values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (vec![0.0; table.len()], 0.0);
    }
    (table.ln_values().iter().map(|l| (l - top).exp()).collect(), top)
}

fn tail_form(a: &[f64], b: &[f64], threshold: usize) -> f64 {
    let (n_cut, m_cut) = (a.len() - 1, b.len() - 1);
    let mut acc = Compensated::default();
    // large t first: roughly ascending magnitude
    for t in (threshold..=n_cut + m_cut).rev() {
        let lo = t.saturating_sub(n_cut);
        let hi = t.min(m_cut);
        let mut layer = Compensated::default();
        for m in lo..=hi {
            layer.add(a[t - m] * b[m]);
        }
        acc.add(layer.total());
    }
    acc.total()
}

fn head_form(a: &[f64], b: &[f64], threshold: usize) -> f64 {
    let (n_cut, m_cut) = (a.len() - 1, b.len() - 1);
    let mut acc = Compensated::default();
    for t in (0..threshold).rev() {
        let lo = t.saturating_sub(n_cut);
        let hi = t.min(m_cut);
        let mut layer = Compensated::default();
        for m in lo..=hi {
            layer.add(a[t - m] * b[m]);
        }
        acc.add(layer.total());
    }
    acc.total()
}

fn table_sum(v: &[f64]) -> f64 {
    let mut acc = Compensated::default();
    for &x in v.iter().rev() {
        acc.add(x);
    }
    acc.total()
}

/// `S = Σ_{n+m ≥ threshold} A(n) B(m)` over precomputed tables.
///
/// `switch` is the largest threshold that `Auto` hands to the complement
/// form. Both tables must reach index `threshold - 1`.
pub fn s_sum(tables: &Tables, threshold: u64, strategy: SumStrategy, switch: u64) -> Result<f64> {
    s_sum_with_total(tables, threshold, strategy, switch, None)
}

/// As [`s_sum`], with the complement form subtracting from `total` instead of
/// the product of the table sums. For unweighted tables `ΣA·ΣB = 1`.
pub fn s_sum_with_total(
    tables: &Tables,
    threshold: u64,
    strategy: SumStrategy,
    switch: u64,
    total: Option<f64>,
) -> Result<f64> {
    let need = threshold as usize;
    for len in [tables.a.len(), tables.b.len()] {
        if len < need {
            return Err(Error::TableRange {
                required: need,
                available: len,
            });
        }
    }
    let (a, ln_a) = scaled(&tables.a);
    let (b, ln_b) = scaled(&tables.b);
    let scale = (ln_a + ln_b).exp();
    let complement = || {
        let total = match total {
            Some(t) => t / scale,
            None => table_sum(&a) * table_sum(&b),
        };
        (total - head_form(&a, &b, need), total)
    };
    let s = match strategy {
        SumStrategy::Tail => tail_form(&a, &b, need),
        SumStrategy::Complement => complement().0,
        SumStrategy::Auto if threshold > switch => tail_form(&a, &b, need),
        SumStrategy::Auto => {
            let (s, total) = complement();
            if s < COMPLEMENT_FLOOR * total {
                tail_form(&a, &b, need)
            } else {
                s
            }
        }
    };
    Ok(s * scale)
}

fn invert(inverse_norm_sq: f64) -> Result<f64> {
    let norm_sq = 1.0 / inverse_norm_sq;
    if !(inverse_norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::DegeneratePreselection { inverse_norm_sq });
    }
    Ok(norm_sq)
}

/// Theoretical threshold on `k + l = 2(i+j) + 1` expressed on `i + j`.
#[inline]
fn pair_threshold(sigma: u64) -> u64 {
    sigma / 2
}

/// `|N_Th|²` for the projector onto `k + l ≥ sigma`.
pub fn norm_th(
    gain: &GainParams,
    sigma: u64,
    prec: &PrecisionConfig,
    strategy: &StrategyConfig,
) -> Result<f64> {
    let s = pair_threshold(sigma);
    if s == 0 {
        // nothing is projected out
        return Ok(1.0);
    }
    let tables = precompute_gamma_tables(s, gain, 0, 0, prec);
    invert(s_sum_with_total(
        &tables,
        s,
        strategy.strategy,
        strategy.theoretical_switch / 2,
        Some(1.0),
    )?)
}

/// `|N_BS|²` for reflected occupations `n + m ≥ sigma_prime`.
pub fn norm_bs(
    gain: &GainParams,
    bs: &BeamSplitterParams,
    sigma_prime: u64,
    prec: &PrecisionConfig,
    strategy: &StrategyConfig,
) -> Result<f64> {
    if sigma_prime == 0 {
        return Ok(1.0);
    }
    let tables = precompute_tables(sigma_prime, gain, bs, 0, 0, prec);
    invert(s_sum_with_total(
        &tables,
        sigma_prime,
        strategy.strategy,
        strategy.beam_splitter_switch,
        Some(1.0),
    )?)
}

/// Everything needed to evaluate one preselected distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub gain: GainParams,
    pub presel: Preselection,
    pub prec: PrecisionConfig,
    pub strategy: StrategyConfig,
    /// `|N|²`, computed once and shared by every tile.
    pub norm_sq: f64,
}

impl ModelConfig {
    /// Computes the normalization.
    pub fn new(
        gain: GainParams,
        presel: Preselection,
        prec: PrecisionConfig,
        strategy: StrategyConfig,
    ) -> Result<Self> {
        let norm_sq = match presel {
            Preselection::Theoretical { sigma } => norm_th(&gain, sigma, &prec, &strategy)?,
            Preselection::BeamSplitter { sigma_prime, bs } => {
                norm_bs(&gain, &bs, sigma_prime, &prec, &strategy)?
            }
        };
        Ok(ModelConfig {
            gain,
            presel,
            prec,
            strategy,
            norm_sq,
        })
    }

    /// Uses a normalization computed elsewhere.
    pub fn with_norm_sq(
        gain: GainParams,
        presel: Preselection,
        prec: PrecisionConfig,
        strategy: StrategyConfig,
        norm_sq: f64,
    ) -> Result<Self> {
        // |N|⁻² is a probability, so |N|² ≥ 1 up to rounding
        if !(norm_sq.is_finite() && norm_sq >= 1.0 - 1e-9) {
            return Err(Error::Domain(format!(
                "normalization |N|^2 must be finite and >= 1, got {norm_sq}"
            )));
        }
        Ok(ModelConfig {
            gain,
            presel,
            prec,
            strategy,
            norm_sq,
        })
    }

    /// `p(k,l)` of the state `Φ`; the orthogonal state has `p(l,k)`.
    pub fn probability(&self, k: u64, l: u64) -> f64 {
        match self.presel {
            Preselection::Theoretical { .. } => p_th(k, l, self),
            Preselection::BeamSplitter { .. } => p_bs(k, l, self),
        }
    }

    /// Log probabilities on `k_range × l_range`, row-major in `k`.
    pub fn log_grid(&self, k_range: Range<u64>, l_range: Range<u64>) -> Vec<f64> {
        let width = (l_range.end - l_range.start) as usize;
        let ln_norm = self.norm_sq.ln();
        match self.presel {
            Preselection::Theoretical { sigma } => {
                let mut out = vec![f64::NEG_INFINITY; (k_range.end - k_range.start) as usize * width];
                out.par_chunks_mut(width.max(1))
                    .enumerate()
                    .for_each(|(i, row)| {
                        let k = k_range.start + i as u64;
                        for (cell, l) in row.iter_mut().zip(l_range.clone()) {
                            *cell = ln_p_th(k, l, sigma, &self.gain, ln_norm);
                        }
                    });
                out
            }
            Preselection::BeamSplitter { sigma_prime, bs } => {
                let ks: Vec<u64> = k_range.clone().collect();
                let ls: Vec<u64> = l_range.clone().collect();
                let rows: Vec<TransmittedRow> = ks
                    .par_iter()
                    .map(|&k| TransmittedRow::new(k, sigma_prime, &self.gain, &bs, &self.prec))
                    .collect();
                let cols: Vec<TransmittedColumn> = ls
                    .par_iter()
                    .map(|&l| TransmittedColumn::new(l, sigma_prime, &self.gain, &bs, &self.prec))
                    .collect();
                let mut out = vec![f64::NEG_INFINITY; rows.len() * width];
                out.par_chunks_mut(width.max(1))
                    .zip(rows.par_iter())
                    .for_each(|(line, row)| {
                        let mut scratch = Vec::new();
                        for (cell, col) in line.iter_mut().zip(&cols) {
                            *cell = ln_norm + combine(row, col, sigma_prime, &mut scratch);
                        }
                    });
                out
            }
        }
    }
}

fn ln_p_th(k: u64, l: u64, sigma: u64, gain: &GainParams, ln_norm: f64) -> f64 {
    if k % 2 == 0 || l % 2 == 1 || k + l < sigma {
        return f64::NEG_INFINITY;
    }
    ln_norm + log_sq_gamma((k - 1) / 2, l / 2, gain).ln()
}

/// `|N_Th|² γ²_{(k-1)/2, l/2}` on the support `k` odd, `l` even, `k+l ≥ σ`.
pub fn p_th(k: u64, l: u64, model: &ModelConfig) -> f64 {
    match model.presel {
        Preselection::Theoretical { sigma } => {
            ln_p_th(k, l, sigma, &model.gain, model.norm_sq.ln()).exp()
        }
        Preselection::BeamSplitter { .. } => panic!("p_th requires theoretical preselection"),
    }
}

/// Transmitted-beam distribution after beam-splitter preselection.
pub fn p_bs(k: u64, l: u64, model: &ModelConfig) -> f64 {
    match model.presel {
        Preselection::BeamSplitter { sigma_prime, bs } => {
            let row = TransmittedRow::new(k, sigma_prime, &model.gain, &bs, &model.prec);
            let col = TransmittedColumn::new(l, sigma_prime, &model.gain, &bs, &model.prec);
            (model.norm_sq.ln() + combine(&row, &col, sigma_prime, &mut Vec::new())).exp()
        }
        Preselection::Theoretical { .. } => panic!("p_bs requires beam-splitter preselection"),
    }
}

/// For a transmitted count `k`, the reflected weights
/// `u(n) = fᵢ(n, (k+n-1)/2)` over `n ≡ k+1 (mod 2)`.
#[derive(Clone, Debug)]
struct TransmittedRow {
    start: u64,
    /// `ln u(n)` for `n = start, start+2, … < σ'`
    ln_head: Vec<f64>,
    /// `ln Σ_{n ≥ σ'} u(n)`
    ln_tail: f64,
}

impl TransmittedRow {
    fn new(
        k: u64,
        sigma_prime: u64,
        gain: &GainParams,
        bs: &BeamSplitterParams,
        prec: &PrecisionConfig,
    ) -> Self {
        let start = (k + 1) % 2;
        let term = |n: u64| log_f_i(n, (k + n - 1) / 2, gain, bs, 0);
        let ln_head: Vec<f64> = (start..sigma_prime).step_by(2).map(|n| term(n).ln()).collect();
        let first_tail = start + 2 * ln_head.len() as u64;
        let ln_tail = scan_unimodal(term, first_tail, 2, prec).total().ln();
        TransmittedRow {
            start,
            ln_head,
            ln_tail,
        }
    }
}

/// For a transmitted count `l`, suffix sums `W(s) = Σ_{m ≥ s} fⱼ(m, (l+m)/2)`
/// over `m ≡ l (mod 2)`, for `s = 0..=σ'`.
#[derive(Clone, Debug)]
struct TransmittedColumn {
    ln_suffix: Vec<f64>,
}

impl TransmittedColumn {
    fn new(
        l: u64,
        sigma_prime: u64,
        gain: &GainParams,
        bs: &BeamSplitterParams,
        prec: &PrecisionConfig,
    ) -> Self {
        let start = l % 2;
        let term = |m: u64| log_f_j(m, (l + m) / 2, gain, bs, 0);
        let mut first_tail = start;
        while first_tail < sigma_prime {
            first_tail += 2;
        }
        let mut ln_suffix = vec![f64::NEG_INFINITY; sigma_prime as usize + 1];
        let mut acc = scan_unimodal(term, first_tail, 2, prec).total().ln();
        ln_suffix[sigma_prime as usize] = acc;
        for s in (0..sigma_prime).rev() {
            if s % 2 == start {
                acc = ln_add(acc, term(s).ln());
            }
            ln_suffix[s as usize] = acc;
        }
        TransmittedColumn { ln_suffix }
    }
}

/// `ln Σ_{n+m ≥ σ'} u(n) w(m)` as `Σ_{n<σ'} u(n) W(σ'-n) + U_tail W(0)`.
fn combine(row: &TransmittedRow, col: &TransmittedColumn, sigma_prime: u64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    for (t, &ln_u) in row.ln_head.iter().enumerate() {
        let n = row.start + 2 * t as u64;
        scratch.push(ln_u + col.ln_suffix[(sigma_prime - n) as usize]);
    }
    scratch.push(row.ln_tail + col.ln_suffix[0]);
    log_sum_exp(scratch)
}

/// `E[kᵖ lᵠ]` under the preselected distribution, from moment-weighted
/// tables and the same thresholded double sum as the normalization.
pub fn moment_sum(model: &ModelConfig, p: u32, q: u32) -> Result<f64> {
    let s = match model.presel {
        Preselection::Theoretical { sigma } => {
            let s = pair_threshold(sigma);
            let tables = precompute_gamma_tables(s, &model.gain, p, q, &model.prec);
            s_sum(&tables, s, model.strategy.strategy, model.strategy.theoretical_switch / 2)?
        }
        Preselection::BeamSplitter { sigma_prime, bs } => {
            let tables = precompute_tables(sigma_prime, &model.gain, &bs, p, q, &model.prec);
            s_sum(
                &tables,
                sigma_prime,
                model.strategy.strategy,
                model.strategy.beam_splitter_switch,
            )?
        }
    };
    Ok(model.norm_sq * s)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn gain(m: f64) -> GainParams {
        GainParams::from_mean(m).unwrap()
    }

    fn bs(r: f64) -> BeamSplitterParams {
        BeamSplitterParams::new(r).unwrap()
    }

    fn prec() -> PrecisionConfig {
        PrecisionConfig::default()
    }

    fn strat(s: SumStrategy) -> StrategyConfig {
        StrategyConfig::with_strategy(s)
    }

    fn bs_model(m: f64, r: f64, sigma_prime: u64) -> ModelConfig {
        ModelConfig::new(
            gain(m),
            Preselection::BeamSplitter {
                sigma_prime,
                bs: bs(r),
            },
            prec(),
            StrategyConfig::default(),
        )
        .unwrap()
    }

    fn th_model(m: f64, sigma: u64) -> ModelConfig {
        ModelConfig::new(
            gain(m),
            Preselection::Theoretical { sigma },
            prec(),
            StrategyConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("tail".parse::<SumStrategy>().unwrap(), SumStrategy::Tail);
        assert_eq!("auto".parse::<SumStrategy>().unwrap(), SumStrategy::Auto);
        assert!("fast".parse::<SumStrategy>().is_err());
        assert_eq!(SumStrategy::Complement.to_string(), "complement");
    }

    #[test]
    fn s_sum_without_threshold_is_unit() {
        let (g, b) = (gain(5.0), bs(0.1));
        let t = precompute_tables(0, &g, &b, 0, 0, &prec());
        for s in [SumStrategy::Tail, SumStrategy::Complement, SumStrategy::Auto] {
            assert!((s_sum(&t, 0, s, 500).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn s_sum_strategies_agree() {
        let (g, b) = (gain(5.0), bs(0.1));
        let t = precompute_tables(3, &g, &b, 0, 0, &prec());
        let tail = s_sum(&t, 3, SumStrategy::Tail, 500).unwrap();
        let comp = s_sum(&t, 3, SumStrategy::Complement, 500).unwrap();
        assert_relative_eq!(tail, comp, max_relative = 1e-12);
    }

    #[test]
    fn s_sum_single_photon() {
        let t = precompute_tables(1, &gain(0.0), &bs(0.1), 0, 0, &prec());
        for s in [SumStrategy::Tail, SumStrategy::Complement] {
            assert_relative_eq!(s_sum(&t, 1, s, 500).unwrap(), 0.1, max_relative = 1e-15);
        }
    }

    #[test]
    fn s_sum_range_error() {
        let t = precompute_tables(0, &gain(0.0), &bs(0.1), 0, 0, &prec());
        let err = s_sum(&t, 10, SumStrategy::Complement, 500).unwrap_err();
        assert!(matches!(err, Error::TableRange { required: 10, .. }));
    }

    #[test]
    fn theoretical_norm_examples() {
        let g = gain(5.0);
        for strategy in [SumStrategy::Tail, SumStrategy::Complement] {
            let s = strat(strategy);
            assert_relative_eq!(norm_th(&g, 0, &prec(), &s).unwrap(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(norm_th(&g, 1, &prec(), &s).unwrap(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(norm_th(&g, 2, &prec(), &s).unwrap(), 36.0 / 35.0, max_relative = 1e-12);
            assert_relative_eq!(norm_th(&g, 3, &prec(), &s).unwrap(), 36.0 / 35.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn beam_splitter_norm_examples() {
        let s = StrategyConfig::default();
        assert_relative_eq!(
            norm_bs(&gain(5.0), &bs(0.1), 0, &prec(), &s).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            norm_bs(&gain(0.0), &bs(0.1), 1, &prec(), &s).unwrap(),
            10.0,
            max_relative = 1e-12
        );
        let err = norm_bs(&gain(5.0), &bs(0.0), 1, &prec(), &s).unwrap_err();
        assert!(matches!(err, Error::DegeneratePreselection { .. }));
    }

    #[test]
    fn norm_is_monotone_in_threshold() {
        let g = gain(5.0);
        let s = StrategyConfig::default();
        let mut last = 0.0;
        for sigma in 0..60 {
            let n = norm_th(&g, sigma, &prec(), &s).unwrap();
            assert!(n >= last * (1.0 - 1e-14));
            last = n;
        }
        let mut last = 0.0;
        for sigma_prime in 0..30 {
            let n = norm_bs(&g, &bs(0.1), sigma_prime, &prec(), &s).unwrap();
            assert!(n >= last * (1.0 - 1e-14));
            last = n;
        }
    }

    #[test]
    fn p_th_examples() {
        let m1 = th_model(5.0, 1);
        assert_eq!(p_th(2, 0, &m1), 0.0);
        assert_relative_eq!(p_th(1, 0, &m1), 1.0 / 36.0, max_relative = 1e-14);
        let m2 = th_model(5.0, 2);
        assert_eq!(p_th(1, 0, &m2), 0.0);
        assert_relative_eq!(p_th(3, 0, &m2), 36.0 / 35.0 * 5.0 / 144.0, max_relative = 1e-13);
    }

    #[test]
    fn p_bs_single_photon() {
        let m = bs_model(0.0, 0.1, 0);
        assert_relative_eq!(p_bs(1, 0, &m), 0.9, max_relative = 1e-15);
        assert_relative_eq!(p_bs(0, 0, &m), 0.1, max_relative = 1e-15);
        assert_eq!(p_bs(2, 0, &m), 0.0);
        let m = bs_model(0.0, 0.1, 1);
        assert_relative_eq!(p_bs(0, 0, &m), 1.0, max_relative = 1e-14);
        assert_eq!(p_bs(1, 0, &m), 0.0);
    }

    #[test]
    fn grid_matches_pointwise() {
        for model in [bs_model(5.0, 0.1, 2), th_model(5.0, 2)] {
            let grid = model.log_grid(3..9, 0..5);
            for k in 3..9u64 {
                for l in 0..5u64 {
                    let direct = model.probability(k, l);
                    let g = grid[(k as usize - 3) * 5 + l as usize].exp();
                    assert!((direct - g).abs() <= 1e-15 * direct, "({k},{l})");
                }
            }
        }
    }

    #[test]
    fn beam_splitter_distribution_sums_to_one() {
        let model = bs_model(2.0, 0.2, 3);
        let grid = model.log_grid(0..120, 0..120);
        let total: f64 = grid.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn transparent_splitter_matches_theory() {
        let th = th_model(2.0, 0);
        let b = bs_model(2.0, 0.0, 0);
        for k in 0..20 {
            for l in 0..20 {
                let (x, y) = (th.probability(k, l), b.probability(k, l));
                assert!((x - y).abs() <= 1e-14 * x.max(1e-300), "({k},{l}) {x} {y}");
            }
        }
    }

    #[test]
    fn moment_examples() {
        let m = bs_model(0.0, 0.1, 0);
        assert_relative_eq!(moment_sum(&m, 1, 0).unwrap(), 0.9, max_relative = 1e-14);
        assert_relative_eq!(moment_sum(&m, 0, 0).unwrap(), 1.0, max_relative = 1e-14);
        for mean in [0.5, 5.0, 10.0] {
            let m = th_model(mean, 0);
            let total = moment_sum(&m, 1, 0).unwrap() + moment_sum(&m, 0, 1).unwrap();
            assert!((total - (4.0 * mean + 1.0)).abs() < 1e-8, "{total}");
            assert!((moment_sum(&m, 0, 0).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn moments_match_grid_sums() {
        let model = bs_model(1.0, 0.2, 2);
        let n = 80u64;
        let grid = model.log_grid(0..n, 0..n);
        let mut ek = 0.0;
        let mut el2 = 0.0;
        for k in 0..n {
            for l in 0..n {
                let p = grid[(k * n + l) as usize].exp();
                ek += k as f64 * p;
                el2 += (l * l) as f64 * p;
            }
        }
        assert_relative_eq!(moment_sum(&model, 1, 0).unwrap(), ek, max_relative = 1e-10);
        assert_relative_eq!(moment_sum(&model, 0, 2).unwrap(), el2, max_relative = 1e-10);
    }

    #[test]
    fn injected_norm_validation() {
        let g = gain(5.0);
        let presel = Preselection::Theoretical { sigma: 2 };
        assert!(ModelConfig::with_norm_sq(g, presel, prec(), StrategyConfig::default(), 0.5).is_err());
        assert!(ModelConfig::with_norm_sq(g, presel, prec(), StrategyConfig::default(), f64::NAN).is_err());
        let m = ModelConfig::with_norm_sq(g, presel, prec(), StrategyConfig::default(), 36.0 / 35.0)
            .unwrap();
        assert_eq!(m.norm_sq, 36.0 / 35.0);
    }
}
