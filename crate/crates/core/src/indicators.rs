//! Tile evaluation, overlap visibilities, Weierstrass blur, moments and the
//! reduction of tile partials.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preselection::{ModelConfig, Preselection};

/// Detector widths `3σ̄` used when none are configured.
pub const DEFAULT_THREE_SIGMA: [f64; 4] = [1.0, 1.5, 15.0, 150.0];

/// A Weierstrass blur width, stored as `3σ̄`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurWidth(f64);

impl BlurWidth {
    pub fn new(three_sigma: f64) -> Result<Self> {
        if !(three_sigma.is_finite() && three_sigma > 0.0) {
            return Err(Error::Domain(format!(
                "blur width 3*sigma must be positive, got {three_sigma}"
            )));
        }
        Ok(BlurWidth(three_sigma))
    }

    pub fn defaults() -> Vec<Self> {
        DEFAULT_THREE_SIGMA.iter().map(|&w| BlurWidth(w)).collect()
    }

    pub fn three_sigma(&self) -> f64 {
        self.0
    }

    pub fn sigma_bar(&self) -> f64 {
        self.0 / 3.0
    }

    /// Half-width of the summation window, `⌊3σ̄⌋`.
    pub fn window(&self) -> u64 {
        self.0.floor() as u64
    }

    /// Margin a tile needs for this width, `⌈3σ̄⌉`.
    pub fn required_margin(&self) -> u64 {
        self.0.ceil() as u64
    }

    /// `1/(√(2π)σ̄) e^{-p²/2σ̄²}` for `p = 0..=window`.
    fn half_kernel(&self) -> Vec<f64> {
        let s = self.sigma_bar();
        let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * s);
        (0..=self.window())
            .map(|p| c * (-((p * p) as f64) / (2.0 * s * s)).exp())
            .collect()
    }

    /// `(1/2πσ̄²) Σ_{|p|,|q| ≤ 3σ̄} e^{-(p²+q²)/2σ̄²}`.
    pub fn window_mass(&self) -> f64 {
        let h = self.half_kernel();
        let line = h[0] + 2.0 * h[1..].iter().sum::<f64>();
        line * line
    }
}

impl fmt::Display for BlurWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Tile `(x, y)` covers `[x·size, (x+1)·size) × [y·size, (y+1)·size)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileSpec {
    pub x: u64,
    pub y: u64,
    pub size: u64,
    pub margin: u64,
}

impl TileSpec {
    pub fn new(x: u64, y: u64, size: u64, margin: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("tile size must be positive".into()));
        }
        Ok(TileSpec { x, y, size, margin })
    }

    pub fn k_range(&self) -> Range<u64> {
        self.x * self.size..(self.x + 1) * self.size
    }

    pub fn l_range(&self) -> Range<u64> {
        self.y * self.size..(self.y + 1) * self.size
    }

    pub fn is_diagonal(&self) -> bool {
        self.x == self.y
    }

    pub fn mirror(&self) -> Self {
        TileSpec {
            x: self.y,
            y: self.x,
            ..*self
        }
    }

    /// Smallest margin that supports every width in `widths`.
    pub fn margin_for(widths: &[BlurWidth]) -> u64 {
        widths.iter().map(BlurWidth::required_margin).max().unwrap_or(0)
    }
}

fn extend(r: &Range<u64>, margin: u64) -> Range<u64> {
    r.start.saturating_sub(margin)..r.end + margin
}

/// Dense block of values, row-major in `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub k0: u64,
    pub l0: u64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn zeros(k: Range<u64>, l: Range<u64>) -> Self {
        let (rows, cols) = ((k.end - k.start) as usize, (l.end - l.start) as usize);
        Grid {
            k0: k.start,
            l0: l.start,
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn k_range(&self) -> Range<u64> {
        self.k0..self.k0 + self.rows as u64
    }

    pub fn l_range(&self) -> Range<u64> {
        self.l0..self.l0 + self.cols as u64
    }

    /// Value at `(k, l)`, zero outside the block.
    pub fn get(&self, k: u64, l: u64) -> f64 {
        if !self.k_range().contains(&k) || !self.l_range().contains(&l) {
            return 0.0;
        }
        self.values[(k - self.k0) as usize * self.cols + (l - self.l0) as usize]
    }

    pub fn set(&mut self, k: u64, l: u64, v: f64) {
        let i = (k - self.k0) as usize * self.cols + (l - self.l0) as usize;
        self.values[i] = v;
    }

    pub fn row(&self, k: u64) -> &[f64] {
        let r = (k - self.k0) as usize;
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Grid {
        let mut t = Grid::zeros(self.l_range(), self.k_range());
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        t
    }

    /// Sub-block over `k × l`.
    pub fn window(&self, k: Range<u64>, l: Range<u64>) -> Grid {
        let mut out = Grid::zeros(k.clone(), l.clone());
        for kk in k {
            for ll in l.clone() {
                out.set(kk, ll, self.get(kk, ll));
            }
        }
        out
    }
}

/// A tile's interior together with the surrounding blur margin. The margin is
/// clamped at zero photons, where the distribution is absent anyway.
#[derive(Clone, Debug)]
pub struct MarginGrid {
    pub grid: Grid,
    pub interior_k: Range<u64>,
    pub interior_l: Range<u64>,
    pub margin: u64,
}

impl MarginGrid {
    pub fn new(grid: Grid, interior_k: Range<u64>, interior_l: Range<u64>, margin: u64) -> Result<Self> {
        if grid.k_range() != extend(&interior_k, margin) || grid.l_range() != extend(&interior_l, margin) {
            return Err(Error::Domain(format!(
                "grid {:?}x{:?} does not extend interior {:?}x{:?} by margin {margin}",
                grid.k_range(),
                grid.l_range(),
                interior_k,
                interior_l
            )));
        }
        Ok(MarginGrid {
            grid,
            interior_k,
            interior_l,
            margin,
        })
    }

    pub fn interior(&self) -> Grid {
        self.grid.window(self.interior_k.clone(), self.interior_l.clone())
    }
}

/// Discrete Weierstrass transform of `src`, evaluated on its interior.
///
/// Uses the unnormalized kernel `(1/2πσ̄²) e^{-(p²+q²)/2σ̄²}` on
/// `|p|, |q| ≤ ⌊3σ̄⌋`. Points with a negative photon number contribute zero.
pub fn blur_weierstrass(src: &MarginGrid, width: BlurWidth) -> Result<Grid> {
    let required = width.required_margin();
    if src.margin < required {
        return Err(Error::MarginTooSmall {
            margin: src.margin,
            required,
        });
    }
    let h = width.half_kernel();
    let w = width.window() as i64;
    let g = &src.grid;
    let out_l = src.interior_l.clone();
    let out_cols = (out_l.end - out_l.start) as usize;

    // pass along l for every source row
    let mut horiz = vec![0.0; g.rows * out_cols];
    horiz
        .par_chunks_mut(out_cols.max(1))
        .enumerate()
        .for_each(|(r, line)| {
            let row = &g.values[r * g.cols..(r + 1) * g.cols];
            for (cell, l) in line.iter_mut().zip(out_l.clone()) {
                let mut acc = 0.0;
                for q in -w..=w {
                    let src_l = l as i64 - q;
                    if src_l >= g.l0 as i64 && src_l < (g.l0 as usize + g.cols) as i64 {
                        acc += h[q.unsigned_abs() as usize] * row[(src_l - g.l0 as i64) as usize];
                    }
                }
                *cell = acc;
            }
        });

    // pass along k for interior rows
    let mut out = Grid::zeros(src.interior_k.clone(), out_l);
    let k0 = out.k0;
    out.values
        .par_chunks_mut(out_cols.max(1))
        .enumerate()
        .for_each(|(r, line)| {
            let k = k0 + r as u64;
            for p in -w..=w {
                let src_k = k as i64 - p;
                if src_k < g.k0 as i64 || src_k >= (g.k0 as usize + g.rows) as i64 {
                    continue;
                }
                let weight = h[p.unsigned_abs() as usize];
                let hr = (src_k - g.k0 as i64) as usize;
                for (cell, v) in line.iter_mut().zip(&horiz[hr * out_cols..(hr + 1) * out_cols]) {
                    *cell += weight * v;
                }
            }
        });
    Ok(out)
}

/// Overlap accumulated for one blur width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurOverlap {
    pub width: BlurWidth,
    pub overlap_sum: f64,
}

/// Sums contributed by one work item, a diagonal tile or a mirror pair.
///
/// `overlap_sum` already carries the weight 2 of off-diagonal points, so the
/// visibility is `1 - Σ overlap_sum` over all work items.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TilePartial {
    pub prob_sum: f64,
    pub overlap_sum: f64,
    pub blur: Vec<BlurOverlap>,
    pub sum_k: f64,
    pub sum_l: f64,
    pub sum_k2: f64,
    pub sum_l2: f64,
    pub sum_kl: f64,
    pub max_p: f64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    prob: f64,
    k: f64,
    l: f64,
    k2: f64,
    l2: f64,
    kl: f64,
    max: f64,
}

impl Moments {
    fn of_grid(g: &Grid) -> Self {
        let rows: Vec<Moments> = (0..g.rows)
            .into_par_iter()
            .map(|r| {
                let k = (g.k0 + r as u64) as f64;
                let mut m = Moments::default();
                for (c, &p) in g.values[r * g.cols..(r + 1) * g.cols].iter().enumerate() {
                    let l = (g.l0 + c as u64) as f64;
                    m.prob += p;
                    m.k += k * p;
                    m.l += l * p;
                    m.k2 += k * k * p;
                    m.l2 += l * l * p;
                    m.kl += k * l * p;
                    m.max = m.max.max(p);
                }
                m
            })
            .collect();
        rows.into_iter().fold(Moments::default(), Moments::merge)
    }

    fn merge(self, o: Moments) -> Self {
        Moments {
            prob: self.prob + o.prob,
            k: self.k + o.k,
            l: self.l + o.l,
            k2: self.k2 + o.k2,
            l2: self.l2 + o.l2,
            kl: self.kl + o.kl,
            max: self.max.max(o.max),
        }
    }
}

/// `Σ_{(k,l) ∈ a} f(a(k,l), b(l,k))`, row sums in parallel, rows combined in
/// order. On a diagonal tile `b` is `a` itself and only `l ≤ k` is visited,
/// off-diagonal points counted twice.
fn mirrored_sum(a: &Grid, b: &Grid, diagonal: bool, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    let rows: Vec<f64> = (0..a.rows)
        .into_par_iter()
        .map(|r| {
            let k = a.k0 + r as u64;
            let mut acc = 0.0;
            for (c, &x) in a.row(k).iter().enumerate() {
                let l = a.l0 + c as u64;
                if !diagonal {
                    acc += 2.0 * f(x, b.get(l, k));
                } else if l < k {
                    acc += 2.0 * f(x, b.get(l, k));
                } else if l == k {
                    acc += f(x, x);
                }
            }
            acc
        })
        .collect();
    rows.into_iter().sum()
}

fn sqrt_product_ln(a: f64, b: f64) -> f64 {
    (0.5 * (a + b)).exp()
}

fn sqrt_product(a: f64, b: f64) -> f64 {
    a.sqrt() * b.sqrt()
}

/// Result of evaluating one work item.
#[derive(Clone, Debug)]
pub struct TileOutput {
    pub partial: TilePartial,
    /// `p_Φ` on tile `(x, y)`.
    pub grid: Grid,
    /// `p_Φ` on tile `(y, x)` for off-diagonal items.
    pub mirror: Option<Grid>,
    /// Number of `p_Φ` evaluations, margins included.
    pub evaluations: u64,
}

struct Evaluated {
    ln: Grid,
    linear: MarginGrid,
}

fn evaluate(spec: &TileSpec, model: &ModelConfig) -> Result<Evaluated> {
    let (k, l) = (spec.k_range(), spec.l_range());
    let (ek, el) = (extend(&k, spec.margin), extend(&l, spec.margin));
    let ln_values = model.log_grid(ek.clone(), el.clone());
    let mut full = Grid::zeros(ek, el);
    full.values = ln_values.iter().map(|x| x.exp()).collect();
    let mut ln = Grid::zeros(full.k_range(), full.l_range());
    ln.values = ln_values;
    Ok(Evaluated {
        ln: ln.window(k.clone(), l.clone()),
        linear: MarginGrid::new(full, k, l, spec.margin)?,
    })
}

/// Evaluates the work item for `spec`: the tile itself, plus its mirror
/// `(y, x)` when off-diagonal. Each point of the `(k, l)` plane is evaluated
/// once and serves both `p_Φ` and `p_Φ⊥(k,l) = p_Φ(l,k)`.
pub fn compute_tile(spec: TileSpec, model: &ModelConfig, widths: &[BlurWidth]) -> Result<TileOutput> {
    let required = TileSpec::margin_for(widths);
    if spec.margin < required {
        return Err(Error::MarginTooSmall {
            margin: spec.margin,
            required,
        });
    }
    let diagonal = spec.is_diagonal();
    let main = evaluate(&spec, model)?;
    let mirror = if diagonal {
        None
    } else {
        Some(evaluate(&spec.mirror(), model)?)
    };
    let other = mirror.as_ref().unwrap_or(&main);

    let grid = main.linear.interior();
    let mirror_grid = mirror.as_ref().map(|m| m.linear.interior());
    let mut moments = Moments::of_grid(&grid);
    if let Some(g) = &mirror_grid {
        moments = moments.merge(Moments::of_grid(g));
    }
    let overlap_sum = mirrored_sum(&main.ln, &other.ln, diagonal, sqrt_product_ln);

    let mut blur = Vec::with_capacity(widths.len());
    for &width in widths {
        let a = blur_weierstrass(&main.linear, width)?;
        let b = match &mirror {
            Some(m) => blur_weierstrass(&m.linear, width)?,
            None => a.clone(),
        };
        blur.push(BlurOverlap {
            width,
            overlap_sum: mirrored_sum(&a, &b, diagonal, sqrt_product),
        });
    }

    let evaluations = [Some(&main), mirror.as_ref()]
        .into_iter()
        .flatten()
        .map(|e| e.linear.grid.values.len() as u64)
        .sum();
    Ok(TileOutput {
        partial: TilePartial {
            prob_sum: moments.prob,
            overlap_sum,
            blur,
            sum_k: moments.k,
            sum_l: moments.l,
            sum_k2: moments.k2,
            sum_l2: moments.l2,
            sum_kl: moments.kl,
            max_p: moments.max,
        },
        grid,
        mirror: mirror_grid,
        evaluations,
    })
}

/// Start of the sparse search for the region where `p_Φ(k, 0)` has decayed.
fn cutoff_search_start(model: &ModelConfig) -> u64 {
    let factor = match model.presel {
        Preselection::BeamSplitter { .. } => 30.0,
        Preselection::Theoretical { .. } => 20.0,
    };
    (factor * model.gain.m).ceil() as u64
}

/// Grid cutoff `K`: samples `p_Φ(k, 0)` at `k = 30m, 30m+100, …` (`20m` for
/// the theoretical projector) until it drops below `eps`. Both parities are
/// sampled since half of the points vanish identically.
pub fn find_cutoff_kl(model: &ModelConfig, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("cutoff precision must be positive, got {eps}")));
    }
    let mut k = cutoff_search_start(model);
    loop {
        let sample = model.probability(k, 0).max(model.probability(k + 1, 0));
        if sample < eps {
            return Ok(k);
        }
        k += 100;
    }
}

/// Final indicators assembled from all tile partials.
///
/// Moments are raw sums over the covered grid, not divided by the captured
/// probability.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorReport {
    pub total_prob: f64,
    pub visibility_overlap: f64,
    pub visibility_blurred: Vec<(BlurWidth, f64)>,
    pub mean: f64,
    pub mean_k: f64,
    pub mean_l: f64,
    pub variance: f64,
    pub variance_k: f64,
    pub variance_l: f64,
    pub max_p: f64,
}

impl IndicatorReport {
    /// Largest relative difference over all fields, for invariance checks.
    pub fn max_relative_difference(&self, other: &IndicatorReport) -> f64 {
        let rel = |a: f64, b: f64| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        };
        let mut worst = [
            rel(self.total_prob, other.total_prob),
            rel(self.visibility_overlap, other.visibility_overlap),
            rel(self.mean, other.mean),
            rel(self.mean_k, other.mean_k),
            rel(self.mean_l, other.mean_l),
            rel(self.variance, other.variance),
            rel(self.variance_k, other.variance_k),
            rel(self.variance_l, other.variance_l),
            rel(self.max_p, other.max_p),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if self.visibility_blurred.len() != other.visibility_blurred.len() {
            return f64::INFINITY;
        }
        for ((wa, a), (wb, b)) in self.visibility_blurred.iter().zip(&other.visibility_blurred) {
            if wa != wb {
                return f64::INFINITY;
            }
            worst = worst.max(rel(*a, *b));
        }
        worst
    }
}

impl fmt::Display for IndicatorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total probability sum={:.15}", self.total_prob)?;
        writeln!(f, "simple visibility computed from the overlap={:.3}", self.visibility_overlap)?;
        for (w, v) in &self.visibility_blurred {
            writeln!(f, "visibility with Gaussian blur (3sigma={w})={v:.3}")?;
        }
        writeln!(f, "mean={:.3}", self.mean)?;
        writeln!(f, "mean k={:.3}", self.mean_k)?;
        writeln!(f, "mean l={:.3}", self.mean_l)?;
        writeln!(f, "variance={:.3}", self.variance)?;
        writeln!(f, "variance k={:.3}", self.variance_k)?;
        writeln!(f, "variance l={:.3}", self.variance_l)?;
        writeln!(f, "maximal value={:.16}", self.max_p)
    }
}

/// Work items `(x, y)` with `x ≥ y` that a `grid_side`² tiling must provide.
pub fn expected_items(grid_side: u64) -> impl Iterator<Item = (u64, u64)> {
    (0..grid_side).flat_map(|x| (0..=x).map(move |y| (x, y)))
}

/// Items absent from `partials`, in lexicographic order.
pub fn missing_items(grid_side: u64, partials: &BTreeMap<(u64, u64), TilePartial>) -> Vec<(u64, u64)> {
    expected_items(grid_side)
        .filter(|key| !partials.contains_key(key))
        .collect()
}

/// Reduces the partials of a `grid_side × grid_side` tiling. Items are keyed
/// by `(x, y)` with `x ≥ y`; the mirror `(y, x)` is part of the same item.
pub fn gather(grid_side: u64, partials: &BTreeMap<(u64, u64), TilePartial>) -> Result<IndicatorReport> {
    if let Some(&(x, y)) = missing_items(grid_side, partials).first() {
        return Err(Error::MissingTile { x, y, path: None });
    }
    let mut total = TilePartial::default();
    let mut widths: Option<Vec<BlurWidth>> = None;
    for key in expected_items(grid_side) {
        let p = &partials[&key];
        let these: Vec<BlurWidth> = p.blur.iter().map(|b| b.width).collect();
        match &widths {
            None => {
                widths = Some(these);
                total.blur = p.blur.iter().map(|b| BlurOverlap { overlap_sum: 0.0, ..*b }).collect();
            }
            Some(w) if *w != these => {
                return Err(Error::Domain(format!(
                    "tile ({},{}) carries blur widths {:?}, expected {:?}",
                    key.0, key.1, these, w
                )))
            }
            Some(_) => {}
        }
        total.prob_sum += p.prob_sum;
        total.overlap_sum += p.overlap_sum;
        for (acc, b) in total.blur.iter_mut().zip(&p.blur) {
            acc.overlap_sum += b.overlap_sum;
        }
        total.sum_k += p.sum_k;
        total.sum_l += p.sum_l;
        total.sum_k2 += p.sum_k2;
        total.sum_l2 += p.sum_l2;
        total.sum_kl += p.sum_kl;
        total.max_p = total.max_p.max(p.max_p);
    }
    if !(total.prob_sum > 0.0) {
        return Err(Error::EmptyDistribution);
    }
    let mean = total.sum_k + total.sum_l;
    Ok(IndicatorReport {
        total_prob: total.prob_sum,
        visibility_overlap: 1.0 - total.overlap_sum,
        visibility_blurred: total.blur.iter().map(|b| (b.width, 1.0 - b.overlap_sum)).collect(),
        mean,
        mean_k: total.sum_k,
        mean_l: total.sum_l,
        variance: total.sum_k2 + 2.0 * total.sum_kl + total.sum_l2 - mean * mean,
        variance_k: total.sum_k2 - total.sum_k * total.sum_k,
        variance_l: total.sum_l2 - total.sum_l * total.sum_l,
        max_p: total.max_p,
    })
}

/// Computes every work item of a `grid_side`² tiling in-process and gathers.
pub fn compute_report(
    model: &ModelConfig,
    grid_side: u64,
    tile_size: u64,
    widths: &[BlurWidth],
) -> Result<IndicatorReport> {
    let margin = TileSpec::margin_for(widths);
    let mut partials = BTreeMap::new();
    for (x, y) in expected_items(grid_side) {
        let spec = TileSpec::new(x, y, tile_size, margin)?;
        partials.insert((x, y), compute_tile(spec, model, widths)?.partial);
    }
    gather(grid_side, &partials)
}
