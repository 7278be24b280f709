//! Command-line front end: measure files in, CSV + manifest artifacts out.
//!
//! Every command writes a `<out>.manifest.json` next to its outputs with the
//! resolved configuration, input digests, and seed, so any artifact can be
//! reproduced exactly. CSV bodies are deterministic; floats are printed with
//! 17 significant digits so they round-trip in double precision.

use crate::bounds;
use crate::error::{Error, Result};
use crate::freeconv;
use crate::measure::SpectralMeasure;
use crate::rmtlab::{self, BaseEnsemble, Mode, SimulationConfig};
use crate::transforms::{self, CauchyEvaluator};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "freeprob",
    version,
    about = "Free multiplicative convolution, norm-growth bounds, and random-matrix experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// n-fold free multiplicative convolution of a measure with itself
    Convolve {
        /// Measure JSON file: {"label": ..., "atoms": [{"x": ..., "w": ...}]}
        measure: PathBuf,
        /// Number of free factors
        #[arg(long, default_value_t = 2)]
        n: u32,
        /// Highest moment order to emit
        #[arg(long, default_value_t = 16)]
        order: usize,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Theoretical norm bounds for products of free copies of a measure
    Bounds {
        measure: PathBuf,
        /// Range of factor counts as LO:HI
        #[arg(long, default_value = "1:32")]
        n_range: String,
        /// Rescale the measure to mean 1 first (the product bounds then apply
        /// to the rescaled variables)
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo product experiments with Haar-conjugated matrix models
    Simulate {
        /// Measure JSON file (omit with --ginibre)
        measure: Option<PathBuf>,
        /// Gaussian base instead of a measure: entries N(0, s^2/N), flag value s
        #[arg(long, value_name = "S")]
        ginibre: Option<f64>,
        #[arg(long, default_value_t = 200)]
        dim: usize,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        /// Trial CSV path; a summary JSON is written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral density of the n-fold convolution by Stieltjes inversion
    Invert {
        measure: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// Evaluation grid as LO:HI:STEP
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Smoothing width for the boundary evaluation
        #[arg(long, default_value_t = transforms::DEFAULT_EPS)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    Product,
    Symmetric,
    Cyclic,
    Ginibre,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::Product => Mode::Product,
            CliMode::Symmetric => Mode::Symmetric,
            CliMode::Cyclic => Mode::Cyclic,
            CliMode::Ginibre => Mode::Ginibre,
        }
    }
}

/// 17 significant digits: exact double-precision round trip.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Reproduction record written next to every output file.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    version: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    wall_secs: f64,
    timestamp_unix: u64,
}

fn write_manifest(
    command: &str,
    inputs: &[(&Path, &[u8])],
    outputs: &[&Path],
    seed: Option<u64>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: inputs
            .iter()
            .map(|(p, bytes)| InputDigest {
                path: p.display().to_string(),
                sha256: hex(&Sha256::digest(bytes)),
            })
            .collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        wall_secs: started.elapsed().as_secs_f64(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let first = outputs
        .first()
        .ok_or_else(|| Error::invalid("manifest needs at least one output"))?;
    let path = manifest_path(first);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}

fn load_measure(path: &Path) -> Result<(SpectralMeasure, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::invalid(format!("{} is not UTF-8", path.display())))?;
    let m = SpectralMeasure::from_json(text)?;
    Ok((m, bytes))
}

fn parse_pair(s: &str) -> Result<(u32, u32)> {
    let parts: Vec<&str> = s.split(':').collect();
    let err = || Error::invalid(format!("expected LO:HI, got {s:?}"));
    match parts.as_slice() {
        [lo, hi] => Ok((
            lo.parse().map_err(|_| err())?,
            hi.parse().map_err(|_| err())?,
        )),
        _ => Err(err()),
    }
}

fn parse_grid(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let err = || Error::invalid(format!("expected LO:HI:STEP, got {s:?}"));
    match parts.as_slice() {
        [lo, hi, step] => {
            let lo: f64 = lo.parse().map_err(|_| err())?;
            let hi: f64 = hi.parse().map_err(|_| err())?;
            let step: f64 = step.parse().map_err(|_| err())?;
            if !(lo.is_finite() && hi.is_finite() && step.is_finite() && lo <= hi && step > 0.0) {
                return Err(Error::invalid(
                    "grid needs finite LO <= HI and a positive STEP",
                ));
            }
            Ok((lo, hi, step))
        }
        _ => Err(err()),
    }
}

fn cmd_convolve(measure: &Path, n: u32, order: usize, out: &Path) -> Result<()> {
    let started = Instant::now();
    if order < 2 {
        return Err(Error::invalid("order must be at least 2"));
    }
    if order + 1 > crate::measure::DEFAULT_ORDER * 2 {
        eprintln!(
            "warning: order {order} exceeds the reliable cap {}; high moments may lose precision",
            crate::measure::DEFAULT_ORDER * 2 - 1
        );
    }
    let (m, bytes) = load_measure(measure)?;
    // compute one order higher: the S-transform round trip loses the last
    // moment, so the emitted orders are all reliable
    let base = m.moments(order + 1)?;
    let result = freeconv::free_power(&base, n)?;
    let (mean, var) = result.moments.truncated(2)?.mean_variance()?;
    let (_, base_var) = base.truncated(2)?.mean_variance()?;

    let mut csv = String::from("# columns: k,m_k\n");
    for k in 1..=order {
        writeln!(csv, "{k},{}", fmt(result.moments.m(k))).expect("string write");
    }
    std::fs::write(out, csv)?;
    println!(
        "{}-fold convolution of {}: mean {}, variance {} (variance prediction n*var(X) = {})",
        n,
        m.label(),
        fmt(mean),
        fmt(var),
        fmt(n as f64 * base_var),
    );
    write_manifest("convolve", &[(measure, &bytes)], &[out], None, started)
}

fn cmd_bounds(measure: &Path, n_range: &str, normalize: bool, out: &Path) -> Result<()> {
    let started = Instant::now();
    let (n_lo, n_hi) = parse_pair(n_range)?;
    let (raw, bytes) = load_measure(measure)?;
    let m = if normalize {
        let (normed, scale) = raw.normalized_to_mean_one()?;
        println!("normalized {} by scale factor {}", raw.label(), fmt(scale));
        normed
    } else {
        raw
    };
    let report = bounds::norm_bounds_report(&m, n_lo, n_hi)?;

    let mut csv = String::new();
    writeln!(csv, "# columns: n,y_lower,y_upper,pi_lower_log,pi_upper_log,cyclic_exact_log")
        .expect("string write");
    writeln!(csv, "# growth_rate: {}", fmt(report.growth_rate)).expect("string write");
    writeln!(
        csv,
        "# L: {} sigma: {} s2: {} gamma: {}",
        fmt(report.support_radius),
        fmt(report.sigma),
        fmt(report.s2),
        fmt(report.gamma)
    )
    .expect("string write");
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.n,
            fmt(r.y_lower),
            fmt(r.y_upper),
            fmt(r.pi_lower_log),
            fmt(r.pi_upper_log),
            fmt(r.cyclic_exact_log)
        )
        .expect("string write");
    }
    std::fs::write(out, csv)?;
    println!(
        "bounds for {} over n = {}..{}: growth rate {}",
        m.label(),
        n_lo,
        n_hi,
        fmt(report.growth_rate)
    );
    write_manifest("bounds", &[(measure, &bytes)], &[out], None, started)
}

/// Theory predictions embedded in the simulation summary for side-by-side
/// comparison with the empirical statistics.
#[derive(Serialize)]
struct TheoryBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    growth_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cohen_newman: Option<bounds::CohenNewmanLambda>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    steps: Vec<TheoryStep>,
}

#[derive(Serialize)]
struct TheoryStep {
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_upper: Option<f64>,
    pi_lower_log: f64,
    pi_upper_log: f64,
    cyclic_exact_log: f64,
}

fn theory_block(cfg: &SimulationConfig) -> TheoryBlock {
    match &cfg.base {
        BaseEnsemble::Ginibre { s2 } => TheoryBlock {
            growth_rate: None,
            // the product of Gaussian matrices with entries N(0, s^2/N) has
            // Lyapunov constant (1/2){log(s^2/N) + log 2 + digamma(N/2)}
            cohen_newman: bounds::cohen_newman_lambda(cfg.dim as u32, s2 / cfg.dim as f64).ok(),
            steps: Vec::new(),
        },
        BaseEnsemble::Measure(m) => {
            let mean_one = m.is_nonnegative() && (m.mean() - 1.0).abs() <= 1e-9;
            let gram = freeconv::gram_base(m, 2).ok();
            let growth = gram.as_ref().and_then(|g| bounds::growth_rate(g).ok());
            let steps = gram
                .as_ref()
                .map(|g| {
                    (1..=cfg.steps as u32)
                        .filter_map(|n| {
                            let t2 = bounds::theorem2_bounds(g, m.support_radius(), n).ok()?;
                            let y = mean_one
                                .then(|| bounds::theorem1_bounds(m, n).ok())
                                .flatten();
                            Some(TheoryStep {
                                n,
                                y_lower: y.map(|b| b.0),
                                y_upper: y.map(|b| b.1),
                                pi_lower_log: t2.lower_log,
                                pi_upper_log: t2.upper_log,
                                cyclic_exact_log: bounds::cyclic_vector_norm_log(g.m(1), n)
                                    .ok()?,
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            TheoryBlock {
                growth_rate: growth,
                cohen_newman: None,
                steps,
            }
        }
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    config: &'a SimulationConfig,
    completed_trials: usize,
    summary: rmtlab::Summary,
    theory: TheoryBlock,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    measure: Option<&Path>,
    ginibre: Option<f64>,
    dim: usize,
    steps: usize,
    trials: usize,
    seed: u64,
    mode: Option<CliMode>,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let (base, input) = match (measure, ginibre) {
        (Some(path), None) => {
            let (m, bytes) = load_measure(path)?;
            (BaseEnsemble::Measure(m), Some((path, bytes)))
        }
        (None, Some(s)) => (BaseEnsemble::Ginibre { s2: s * s }, None),
        _ => {
            return Err(Error::invalid(
                "provide either a measure file or --ginibre, not both",
            ));
        }
    };
    let mode = mode.map(Mode::from).unwrap_or(match base {
        BaseEnsemble::Ginibre { .. } => Mode::Ginibre,
        BaseEnsemble::Measure(_) => Mode::Product,
    });
    let cfg = SimulationConfig {
        base,
        dim,
        steps,
        trials,
        seed,
        mode,
    };
    cfg.validate()?;

    // run every trial even if some break down: partial results are still
    // written before the error surfaces
    let results: Vec<Result<rmtlab::TrialResult>> = run_in_pool(|| {
        use rayon::prelude::*;
        (0..cfg.trials).into_par_iter().map(|t| rmtlab::run_trial(&cfg, t)).collect()
    });
    let mut done = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(t) => done.push(t),
            Err(e) => first_err = first_err.or(Some(e)),
        }
    }

    let has_cyclic = cfg.mode == Mode::Cyclic;
    let mut csv = String::new();
    if has_cyclic {
        csv.push_str("# columns: trial,n,log_op_norm,trace_gram,cyclic_norm\n");
    } else {
        csv.push_str("# columns: trial,n,log_op_norm,trace_gram\n");
    }
    for t in &done {
        for s in &t.steps {
            write!(
                csv,
                "{},{},{},{}",
                t.trial,
                s.n,
                fmt(s.log_op_norm),
                fmt(s.trace_gram)
            )
            .expect("string write");
            if let Some(c) = s.cyclic_norm {
                write!(csv, ",{}", fmt(c)).expect("string write");
            }
            csv.push('\n');
        }
    }
    std::fs::write(out, csv)?;

    let mut outputs = vec![out];
    let summary_file = summary_path(out);
    if !done.is_empty() {
        let summary = SimulationSummary {
            config: &cfg,
            completed_trials: done.len(),
            summary: rmtlab::aggregate(&done)?,
            theory: theory_block(&cfg),
        };
        std::fs::write(&summary_file, serde_json::to_string_pretty(&summary)? + "\n")?;
        outputs.push(&summary_file);
        let growth = summary.summary.final_growth()?;
        print!(
            "{:?} mode, N = {}, {} steps, {} trials: final n^-1 log norm = {}",
            cfg.mode,
            cfg.dim,
            cfg.steps,
            done.len(),
            fmt(growth)
        );
        match (&summary.theory.growth_rate, &summary.theory.cohen_newman) {
            (Some(r), _) => println!(" (theory growth rate {})", fmt(*r)),
            (_, Some(cn)) => println!(
                " (Lyapunov constant {}, large-N value {})",
                fmt(cn.lambda),
                fmt(cn.large_k)
            ),
            _ => println!(),
        }
    }
    let inputs: Vec<(&Path, &[u8])> = input
        .iter()
        .map(|(p, b)| (*p, b.as_slice()))
        .collect();
    write_manifest("simulate", &inputs, &outputs, Some(seed), started)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run_in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var("FREEPROB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool construction cannot fail for n > 0")
            .install(f),
        None => f(),
    }
}

fn cmd_invert(measure: &Path, n: u32, grid: &str, eps: f64, out: &Path) -> Result<()> {
    let started = Instant::now();
    let (lo, hi, step) = parse_grid(grid)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps must be positive and finite"));
    }
    let (m, bytes) = load_measure(measure)?;

    // beyond n = 1 the density only exists through the truncated moment
    // tail, valid outside a disk covering the support
    let (evaluator, edge, edge_method) = if n <= 1 {
        let g = CauchyEvaluator::from_measure(&m);
        let span = m.support_radius() + 1.0;
        let edge = transforms::support_edge(&g, eps, -span, span)?;
        (g, edge, "density floor crossing, extrapolated to zero width")
    } else {
        let base = m.moments(crate::measure::DEFAULT_ORDER)?;
        let conv = freeconv::free_power(&base, n)?;
        let hint = (1..=conv.moments.order())
            .map(|k| conv.moments.m(k).abs().powf(1.0 / k as f64))
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let g = CauchyEvaluator::from_moments(&conv.moments, hint)?;
        (g, hint, "moment growth estimate max_k m_k^(1/k)")
    };

    // the smoothed density carries an O(eps) bias; report the linear
    // extrapolation to zero smoothing width from evaluations at eps and eps/2
    let coarse = transforms::stieltjes_invert(&evaluator, lo, hi, step, eps)?;
    let fine = transforms::stieltjes_invert(&evaluator, lo, hi, step, eps / 2.0)?;
    let mut csv = String::new();
    writeln!(csv, "# columns: x,density").expect("string write");
    writeln!(csv, "# eps: {} (densities extrapolated to zero width)", fmt(eps))
        .expect("string write");
    writeln!(csv, "# support_edge: {} ({edge_method})", fmt(edge)).expect("string write");
    for (c, f) in coarse.iter().zip(&fine) {
        writeln!(csv, "{},{}", fmt(c.0), fmt(2.0 * f.1 - c.1)).expect("string write");
    }
    std::fs::write(out, csv)?;

    let support_bound = bounds::SUPPORT_CONSTANT * m.support_radius() * n as f64;
    if edge > 0.8 * support_bound {
        eprintln!(
            "warning: detected edge {} approaches the theoretical support bound {}",
            fmt(edge),
            fmt(support_bound)
        );
    }
    println!(
        "density of the {n}-fold convolution of {} on [{}, {}]: support edge {}",
        m.label(),
        fmt(lo),
        fmt(hi),
        fmt(edge)
    );
    write_manifest("invert", &[(measure, &bytes)], &[out], None, started)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convolve {
            measure,
            n,
            order,
            out,
        } => cmd_convolve(&measure, n, order, &out),
        Command::Bounds {
            measure,
            n_range,
            normalize,
            out,
        } => cmd_bounds(&measure, &n_range, normalize, &out),
        Command::Simulate {
            measure,
            ginibre,
            dim,
            steps,
            trials,
            seed,
            mode,
            out,
        } => cmd_simulate(
            measure.as_deref(),
            ginibre,
            dim,
            steps,
            trials,
            seed,
            mode,
            &out,
        ),
        Command::Invert {
            measure,
            n,
            grid,
            eps,
            out,
        } => cmd_invert(&measure, n, &grid, eps, &out),
    }
}

/// Entry point: returns the process exit code (0 success, 2 validation
/// failure, 3 numerical breakdown).
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            let _ = std::io::stderr().flush();
            code
        }
    }
}
