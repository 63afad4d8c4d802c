//! Tile scheduling, partial and plot files, and gather-side discovery.
//!
//! Partial file payload, one `key=value` line each, floats with 17 significant
//! digits:
//!
//! ```text
//! prob_sum=...
//! overlap_sum=...
//! blur_overlap_3sigma_<w>=...   (one line per blur width, in order)
//! sum_k=...
//! sum_l=...
//! sum_k2=...
//! sum_l2=...
//! sum_kl=...
//! max_p=...
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::indicators::{expected_items, gather, BlurOverlap, BlurWidth, Grid, IndicatorReport, TilePartial};

const BLUR_PREFIX: &str = "blur_overlap_3sigma_";

/// Tiling of the `(k, l)` plane and the run parameters as typed by the user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileManifest {
    pub grid_side: u64,
    pub tile_size: u64,
    /// `m`, `Dth` and `R`, kept verbatim for file names.
    pub m: String,
    pub dth: String,
    pub r: String,
}

impl TileManifest {
    pub fn new(grid_side: u64, tile_size: u64, m: &str, dth: &str, r: &str) -> Result<Self> {
        if grid_side == 0 || tile_size == 0 {
            return Err(Error::Domain("grid side and tile size must be positive".into()));
        }
        Ok(TileManifest {
            grid_side,
            tile_size,
            m: m.to_owned(),
            dth: dth.to_owned(),
            r: r.to_owned(),
        })
    }

    /// Photon numbers covered along each axis.
    pub fn edge(&self) -> u64 {
        self.grid_side * self.tile_size
    }

    pub fn file_name(&self, x: u64, y: u64) -> String {
        partial_file_name(&self.m, &self.dth, &self.r, x, y)
    }
}

/// `M{m}_Dth{Dth}_r{R}-{x},{y}.txt`
pub fn partial_file_name(m: &str, dth: &str, r: &str, x: u64, y: u64) -> String {
    format!("M{m}_Dth{dth}_r{r}-{x},{y}.txt")
}

/// One unit of work: tile `(x, y)` and, off the diagonal, its mirror `(y, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkItem {
    pub x: u64,
    pub y: u64,
}

impl WorkItem {
    pub fn mirror(&self) -> Option<(u64, u64)> {
        (self.x != self.y).then_some((self.y, self.x))
    }
}

/// Each unordered pair `{(x,y), (y,x)}` once, keyed by `x ≥ y`.
pub fn schedule_tiles(manifest: &TileManifest) -> Vec<WorkItem> {
    expected_items(manifest.grid_side)
        .map(|(x, y)| WorkItem { x, y })
        .collect()
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `partial` in the partial-file format.
pub fn write_partial_to(out: &mut (impl Write + ?Sized), partial: &TilePartial) -> std::io::Result<()> {
    writeln!(out, "prob_sum={}", fmt17(partial.prob_sum))?;
    writeln!(out, "overlap_sum={}", fmt17(partial.overlap_sum))?;
    for b in &partial.blur {
        writeln!(out, "{BLUR_PREFIX}{}={}", b.width, fmt17(b.overlap_sum))?;
    }
    writeln!(out, "sum_k={}", fmt17(partial.sum_k))?;
    writeln!(out, "sum_l={}", fmt17(partial.sum_l))?;
    writeln!(out, "sum_k2={}", fmt17(partial.sum_k2))?;
    writeln!(out, "sum_l2={}", fmt17(partial.sum_l2))?;
    writeln!(out, "sum_kl={}", fmt17(partial.sum_kl))?;
    writeln!(out, "max_p={}", fmt17(partial.max_p))
}

/// Writes the partial of item `(x, y)` into `dir` and returns its path.
pub fn write_partial(dir: &Path, manifest: &TileManifest, x: u64, y: u64, partial: &TilePartial) -> Result<PathBuf> {
    let path = dir.join(manifest.file_name(x, y));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    write_partial_to(&mut out, partial)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Parses the partial-file format. `path` only labels errors.
pub fn parse_partial(text: &str, path: &Path) -> Result<TilePartial> {
    let bad = |reason: String| Error::MalformedPartial {
        path: path.to_owned(),
        reason,
    };
    let mut fixed: BTreeMap<&str, f64> = BTreeMap::new();
    let mut blur = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("line {}: {value:?} is not a number", lineno + 1)))?;
        if let Some(label) = key.strip_prefix(BLUR_PREFIX) {
            let w: f64 = label
                .parse()
                .map_err(|_| bad(format!("line {}: bad blur width {label:?}", lineno + 1)))?;
            let width = BlurWidth::new(w).map_err(|e| bad(e.to_string()))?;
            if blur.iter().any(|b: &BlurOverlap| b.width == width) {
                return Err(bad(format!("duplicate key {key}")));
            }
            blur.push(BlurOverlap {
                width,
                overlap_sum: value,
            });
            continue;
        }
        let key = match key {
            "prob_sum" | "overlap_sum" | "sum_k" | "sum_l" | "sum_k2" | "sum_l2" | "sum_kl" | "max_p" => key,
            other => return Err(bad(format!("unknown key {other:?}"))),
        };
        if fixed.insert(key, value).is_some() {
            return Err(bad(format!("duplicate key {key}")));
        }
    }
    let mut take = |k: &str| fixed.remove(k).ok_or_else(|| bad(format!("missing key {k}")));
    Ok(TilePartial {
        prob_sum: take("prob_sum")?,
        overlap_sum: take("overlap_sum")?,
        sum_k: take("sum_k")?,
        sum_l: take("sum_l")?,
        sum_k2: take("sum_k2")?,
        sum_l2: take("sum_l2")?,
        sum_kl: take("sum_kl")?,
        max_p: take("max_p")?,
        blur,
    })
}

pub fn read_partial(path: &Path) -> Result<TilePartial> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_partial(&text, path)
}

/// Writes `k\tl\tp` rows of `grid` for `k, l` on multiples of `plotstep`
/// counted from the grid origin.
pub fn write_plot_to(out: &mut (impl Write + ?Sized), grid: &Grid, plotstep: u64) -> std::io::Result<()> {
    let step = plotstep as usize;
    for r in (0..grid.rows).step_by(step) {
        for c in (0..grid.cols).step_by(step) {
            let (k, l) = (grid.k0 + r as u64, grid.l0 + c as u64);
            writeln!(out, "{k}\t{l}\t{}", fmt17(grid.values[r * grid.cols + c]))?;
        }
    }
    Ok(())
}

pub fn write_plot(grid: &Grid, path: &Path, plotstep: u64) -> Result<()> {
    if plotstep == 0 {
        return Err(Error::Domain("plotstep must be at least 1".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_plot_to(&mut out, grid, plotstep)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Work items whose partial file is absent from `dir`.
pub fn missing_files(manifest: &TileManifest, dir: &Path) -> Vec<(u64, u64, PathBuf)> {
    schedule_tiles(manifest)
        .into_iter()
        .map(|w| (w.x, w.y, dir.join(manifest.file_name(w.x, w.y))))
        .filter(|(_, _, p)| !p.is_file())
        .collect()
}

/// Reads every partial of the tiling from `dir`, in `(x, y)` order, and
/// reduces them.
pub fn discover_and_gather(manifest: &TileManifest, dir: &Path) -> Result<IndicatorReport> {
    let mut partials = BTreeMap::new();
    for item in schedule_tiles(manifest) {
        let path = dir.join(manifest.file_name(item.x, item.y));
        if !path.is_file() {
            return Err(Error::MissingTile {
                x: item.x,
                y: item.y,
                path: Some(path),
            });
        }
        partials.insert((item.x, item.y), read_partial(&path)?);
    }
    gather(manifest.grid_side, &partials)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(side: u64) -> TileManifest {
        TileManifest::new(side, 10, "5", "2", "0").unwrap()
    }

    fn sample() -> TilePartial {
        TilePartial {
            prob_sum: 0.1 + 0.2,
            overlap_sum: 1.0 / 3.0,
            blur: vec![
                BlurOverlap {
                    width: BlurWidth::new(1.5).unwrap(),
                    overlap_sum: std::f64::consts::PI * 1e-300,
                },
                BlurOverlap {
                    width: BlurWidth::new(150.0).unwrap(),
                    overlap_sum: 5e-324,
                },
            ],
            sum_k: 6.269,
            sum_l: f64::MAX,
            sum_k2: 1e300,
            sum_l2: 0.0,
            sum_kl: 2.0_f64.sqrt(),
            max_p: 0.0408525598455265,
        }
    }

    #[test]
    fn schedule_counts() {
        let items = schedule_tiles(&manifest(2));
        assert_eq!(items, vec![WorkItem { x: 0, y: 0 }, WorkItem { x: 1, y: 0 }, WorkItem { x: 1, y: 1 }]);
        assert_eq!(items[1].mirror(), Some((0, 1)));
        assert_eq!(items[0].mirror(), None);
        assert_eq!(schedule_tiles(&manifest(1)).len(), 1);
        for n in 1..12 {
            assert_eq!(schedule_tiles(&manifest(n)).len() as u64, n * (n + 1) / 2);
        }
    }

    #[test]
    fn naming() {
        assert_eq!(manifest(2).file_name(1, 0), "M5_Dth2_r0-1,0.txt");
        let m = TileManifest::new(2, 10, "5", "2", "0.10").unwrap();
        assert_eq!(m.file_name(0, 0), "M5_Dth2_r0.10-0,0.txt");
    }

    #[test]
    fn partial_roundtrip_is_bit_exact() {
        let mut buf = Vec::new();
        write_partial_to(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("blur_overlap_3sigma_1.5="));
        let back = parse_partial(&text, Path::new("x")).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn zero_partial_roundtrip() {
        let mut buf = Vec::new();
        write_partial_to(&mut buf, &TilePartial::default()).unwrap();
        let back = parse_partial(std::str::from_utf8(&buf).unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, TilePartial::default());
    }

    #[test]
    fn malformed_partials_are_rejected() {
        let p = Path::new("bad.txt");
        for text in [
            "prob_sum=1\n",
            "prob_sum=x\n",
            "garbage\n",
            "prob_sum=1\noverlap_sum=0\nsum_k=0\nsum_l=0\nsum_k2=0\nsum_l2=0\nsum_kl=0\nmax_p=0\nextra=1\n",
            "prob_sum=1\nprob_sum=1\n",
        ] {
            let err = parse_partial(text, p).unwrap_err();
            assert!(matches!(err, Error::MalformedPartial { .. }), "{text:?}");
            assert!(err.to_string().contains("bad.txt"));
        }
    }

    #[test]
    fn plot_line_counts() {
        let g = Grid::zeros(10..20, 0..10);
        for (step, lines) in [(1, 100), (5, 4), (3, 16)] {
            let mut buf = Vec::new();
            write_plot_to(&mut buf, &g, step).unwrap();
            assert_eq!(String::from_utf8(buf).unwrap().lines().count(), lines);
        }
        let mut buf = Vec::new();
        write_plot_to(&mut buf, &g, 5).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("10\t0\t"));
    }

    #[test]
    fn plot_to_null_device() {
        write_plot(&Grid::zeros(0..10, 0..10), Path::new("/dev/null"), 1).unwrap();
        assert!(write_plot(&Grid::zeros(0..1, 0..1), Path::new("/dev/null"), 0).is_err());
    }
}
