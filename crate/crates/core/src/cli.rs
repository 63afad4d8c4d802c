//! Command-line frontend: `norm`, `tile` and `gather`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::hyperterms::{BeamSplitterParams, GainParams};
use crate::indicators::{compute_tile, BlurWidth, TileSpec};
use crate::preselection::{ModelConfig, Preselection, StrategyConfig, SumStrategy};
use crate::series::PrecisionConfig;
use crate::tiling::{discover_and_gather, missing_files, write_partial_to, write_plot, TileManifest};

/// Environment variables consulted for the worker count, in order.
pub const THREAD_ENV: [&str; 2] = ["MQSVIS_NUM_THREADS", "OMP_NUM_THREADS"];

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mqsvis",
    version,
    about = "Photon-number distributions and distinguishability of macroscopic quantum superpositions of light"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Relative precision of series truncation.
    #[arg(long, global = true, default_value_t = 1e-15, value_parser = parse_eps)]
    pub precision: f64,

    /// Worker threads; overrides MQSVIS_NUM_THREADS and OMP_NUM_THREADS.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// Apply the Weierstrass blur even with beam-splitter preselection.
    #[arg(long, global = true, conflicts_with = "no_blur")]
    pub blur: bool,

    /// Skip the Weierstrass blur.
    #[arg(long, global = true)]
    pub no_blur: bool,

    /// Evaluation of the thresholded double sums.
    #[arg(long, global = true, default_value = "auto", value_parser = parse_strategy)]
    pub strategy: SumStrategy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the squared normalization |N|^2.
    Norm {
        #[arg(value_parser = parse_nonneg)]
        m: String,
        #[arg(value_parser = parse_count)]
        dth: String,
        /// Beam-splitter reflectivity; 0 selects the theoretical projector.
        #[arg(value_parser = parse_reflectivity, default_value = "0")]
        r: String,
    },
    /// Compute one tile and its mirror; the partial goes to standard output.
    Tile {
        #[arg(value_parser = parse_nonneg)]
        m: String,
        #[arg(value_parser = parse_count)]
        dth: String,
        #[arg(value_parser = parse_reflectivity)]
        r: String,
        /// |N|^2 as printed by `norm`.
        #[arg(value_parser = parse_positive)]
        n2: f64,
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        tilesize: u64,
        tilex: u64,
        tiley: u64,
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        plotstep: u64,
        /// Distribution of tile (tilex, tiley).
        plot1: PathBuf,
        /// Distribution of tile (tiley, tilex); untouched on the diagonal.
        plot2: PathBuf,
    },
    /// Reduce the partial files of a tiling into the final indicators.
    Gather {
        #[arg(value_parser = parse_nonneg)]
        m: String,
        #[arg(value_parser = parse_count)]
        dth: String,
        #[arg(value_parser = parse_reflectivity)]
        r: String,
        /// Tiles per row and column.
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        tiles: u64,
        /// Directory holding the partial files.
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_nonneg(s: &str) -> std::result::Result<String, String> {
    match parse_f64(s)? {
        v if v.is_finite() && v >= 0.0 => Ok(s.to_owned()),
        _ => Err(format!("{s:?} must be a finite nonnegative number")),
    }
}

fn parse_count(s: &str) -> std::result::Result<String, String> {
    s.parse::<u64>().map(|_| s.to_owned()).map_err(|e| format!("{s:?}: {e}"))
}

fn parse_reflectivity(s: &str) -> std::result::Result<String, String> {
    match parse_f64(s)? {
        v if (0.0..=1.0).contains(&v) => Ok(s.to_owned()),
        _ => Err(format!("{s:?} must lie in [0, 1]")),
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match parse_f64(s.trim())? {
        v if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{s:?} must be a finite positive number")),
    }
}

fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    PrecisionConfig::new(v).map(|_| v).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<SumStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Decimal with 17 significant digits.
pub fn format_17(v: f64) -> String {
    if (1.0..10.0).contains(&v) {
        format!("{v:.16}")
    } else {
        format!("{v:.16e}")
    }
}

/// Worker count from the flag, else the first parseable environment variable.
pub fn resolve_threads(flag: Option<u64>, env: impl Fn(&str) -> Option<String>) -> Option<usize> {
    flag.map(|n| n as usize).or_else(|| {
        THREAD_ENV
            .iter()
            .filter_map(|k| env(k))
            .find_map(|v| v.trim().parse::<usize>().ok().filter(|&n| n > 0))
    })
}

/// Theoretical projector for `R = 0`, beam splitter otherwise.
pub fn preselection(dth: u64, r: f64) -> Result<Preselection> {
    if r == 0.0 {
        Ok(Preselection::Theoretical { sigma: dth })
    } else {
        Ok(Preselection::BeamSplitter {
            sigma_prime: dth,
            bs: BeamSplitterParams::new(r)?,
        })
    }
}

fn blur_widths(common: &CommonArgs, presel: &Preselection) -> Vec<BlurWidth> {
    let on = if common.no_blur {
        false
    } else {
        common.blur || presel.is_theoretical()
    };
    if on {
        BlurWidth::defaults()
    } else {
        Vec::new()
    }
}

fn num(s: &str) -> f64 {
    s.parse().expect("validated by the argument parser")
}

fn count(s: &str) -> u64 {
    s.parse().expect("validated by the argument parser")
}

fn execute(cli: &Cli, out: &mut Vec<u8>, err: &mut Vec<u8>) -> Result<()> {
    let prec = PrecisionConfig::new(cli.common.precision)?;
    let strategy = StrategyConfig::with_strategy(cli.common.strategy);
    let stdout = |e| Error::io("<stdout>", e);
    match &cli.command {
        Command::Norm { m, dth, r } => {
            let gain = GainParams::from_mean(num(m))?;
            let model = ModelConfig::new(gain, preselection(count(dth), num(r))?, prec, strategy)?;
            writeln!(out, "{}", format_17(model.norm_sq)).map_err(stdout)?;
        }
        Command::Tile {
            m,
            dth,
            r,
            n2,
            tilesize,
            tilex,
            tiley,
            plotstep,
            plot1,
            plot2,
        } => {
            let gain = GainParams::from_mean(num(m))?;
            let presel = preselection(count(dth), num(r))?;
            let model = ModelConfig::with_norm_sq(gain, presel, prec, strategy, *n2)?;
            let widths = blur_widths(&cli.common, &presel);
            let spec = TileSpec::new(*tilex, *tiley, *tilesize, TileSpec::margin_for(&widths))?;
            let tile = compute_tile(spec, &model, &widths)?;
            write_plot(&tile.grid, plot1, *plotstep)?;
            if let Some(mirror) = &tile.mirror {
                write_plot(mirror, plot2, *plotstep)?;
            }
            write_partial_to(out, &tile.partial).map_err(stdout)?;
        }
        Command::Gather { m, dth, r, tiles, dir } => {
            let manifest = TileManifest::new(*tiles, 1, m, dth, r)?;
            let holes = missing_files(&manifest, dir);
            if !holes.is_empty() {
                for (x, y, path) in &holes {
                    let _ = writeln!(err, "missing tile ({x},{y}): {}", path.display());
                }
                let (x, y, path) = holes[0].clone();
                return Err(Error::MissingTile { x, y, path: Some(path) });
            }
            let report = discover_and_gather(&manifest, dir)?;
            write!(out, "{report}").map_err(stdout)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// code: 0 success, 1 computation error, 2 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let threads = resolve_threads(cli.common.threads, |k| std::env::var(k).ok());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "mqsvis: cannot start worker pool: {e}");
            return EXIT_COMPUTATION;
        }
    };
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = pool.install(|| execute(&cli, &mut out_buf, &mut err_buf));
    let _ = out.write_all(&out_buf).and_then(|_| out.flush());
    let _ = err.write_all(&err_buf);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "mqsvis: {e}");
            EXIT_COMPUTATION
        }
    }
}

/// Entry point of the standalone `mqsvis_<sub>` programs.
pub fn run_shim(sub: &str) -> i32 {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    let program = args.first().cloned().unwrap_or_else(|| "mqsvis".into());
    args.splice(0..args.len().min(1), [program, sub.into()]);
    run(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn main_entry() -> i32 {
    run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["mqsvis"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn norm_examples() {
        assert_eq!(call(&["norm", "5", "0"]).1.trim(), "1.0000000000000000");
        assert_eq!(call(&["norm", "5", "1"]).1.trim(), "1.0000000000000000");
        let (code, out, _) = call(&["norm", "5", "2"]);
        assert_eq!(code, 0);
        let v: f64 = out.trim().parse().unwrap();
        assert!((v - 36.0 / 35.0).abs() < 1e-15);
        assert!(out.ends_with('\n') && out.trim().len() == 18);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["norm", "5"]).0, EXIT_USAGE);
        assert_eq!(call(&["norm", "-1", "2"]).0, EXIT_USAGE);
        assert_eq!(call(&["gather", "5", "2", "0"]).0, EXIT_USAGE);
        assert_eq!(call(&["tile", "5", "2", "0", "0", "10", "0", "0", "1", "a", "b"]).0, EXIT_USAGE);
        assert_eq!(call(&["bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["--strategy", "fast", "norm", "5", "2"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn degenerate_preselection_exits_1() {
        let (code, _, err) = call(&["norm", "0", "5", "1"]);
        assert_eq!(code, EXIT_COMPUTATION);
        assert!(err.contains("preselection"));
    }

    #[test]
    fn thread_resolution() {
        let env = |k: &str| match k {
            "OMP_NUM_THREADS" => Some("3".to_owned()),
            _ => None,
        };
        assert_eq!(resolve_threads(None, env), Some(3));
        assert_eq!(resolve_threads(Some(2), env), Some(2));
        let both = |k: &str| Some(if k == "MQSVIS_NUM_THREADS" { "5" } else { "3" }.to_owned());
        assert_eq!(resolve_threads(None, both), Some(5));
        assert_eq!(resolve_threads(None, |_| Some("x".into())), None);
    }

    #[test]
    fn format_17_roundtrips() {
        for v in [1.0, 36.0 / 35.0, 12345.678, 1e-20, 9.999999999999998] {
            assert_eq!(format_17(v).parse::<f64>().unwrap(), v);
        }
    }
}
