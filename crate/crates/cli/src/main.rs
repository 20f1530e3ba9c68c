use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use stshape::exactmat::{hnf_decompose, IntMatrix};
use stshape::linalg::{cdet, ComplexMatrixJson};
use stshape::mimo_sim::{cep_sweep, Region, SweepConfig};
use stshape::papr_stats::{collect_papr, default_grid_db};
use stshape::peak_density::{
    curve_b_vs_rho, curve_b_vs_rho_csv, curve_hstar, curve_hstar_csv, default_one_over_rho_grid, default_power_grid,
    default_rho_set, solve_density, solve_peak_power_density,
};
use stshape::plusfact::{plus_factorize_with, PlusFactorization, PlusOptions};
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::{CodeDefinition, LayeredScheme, NORMALIZATION_WORDS};

/// Output schema version stamped into every JSON document.
const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(name = "stshape", version, about = "Cubic shaping for lattice space-time codes")]
struct Cli {
    /// Worker threads for Monte-Carlo commands (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hermite normal form of an integer matrix file.
    Hnf { input: PathBuf },
    /// PLUS factorization of a unit-determinant complex matrix file.
    Plus {
        input: PathBuf,
        #[arg(long, default_value_t = PlusOptions::default().tie_budget)]
        tie_budget: usize,
    },
    /// Data words (one per line) to lattice points.
    Shape {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Data file; stdin when absent.
        input: Option<PathBuf>,
    },
    /// Lattice points (one per line) back to data words.
    Unshape {
        #[command(flatten)]
        scheme: SchemeArgs,
        input: Option<PathBuf>,
    },
    /// PAPR CCDF of the shaped code with the unshaped curve alongside.
    PaprCcdf {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Number of random codewords.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Codeword error probability over Rayleigh channels with sphere decoding.
    Cep {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Comma-separated SNR points in dB.
        #[arg(long, value_delimiter = ',', required = true)]
        snr: Vec<f64>,
        /// Blocks per SNR point.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        receivers: Option<usize>,
        /// Only accept lattice points that are images of data words.
        #[arg(long)]
        strict_region: bool,
    },
    /// Peak-constrained entropy-maximizing amplitude density.
    Density {
        /// Peak-to-average ratio (linear); `inf` is allowed.
        #[arg(long, required_unless_present = "curve")]
        rho: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        power: f64,
        /// Treat the power as an upper bound (linear density below rho = 2).
        #[arg(long)]
        peak_power: bool,
        /// Emit a whole curve instead: `b-vs-rho` or `entropy`.
        #[arg(long, conflicts_with = "rho")]
        curve: Option<String>,
    },
}

#[derive(Args)]
struct SchemeArgs {
    /// Built-in code name or code file.
    #[arg(long, default_value = "golden")]
    code: String,
    /// hnf, plus or none.
    #[arg(long, default_value = "plus")]
    mode: Mode,
    /// Points per real dimension.
    #[arg(long, default_value_t = 8)]
    sigma: u32,
}

#[derive(Debug)]
struct Failure {
    code: &'static str,
    message: String,
    line: Option<usize>,
}

impl From<stshape::Error> for Failure {
    fn from(e: stshape::Error) -> Self {
        Failure { code: e.code(), message: e.to_string(), line: None }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: "io", message: e.to_string(), line: None }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: "json", message: e.to_string(), line: None }
    }
}

fn fail(code: &'static str, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into(), line: None }
}

type Out = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&fail("usage", e.to_string().trim_end())),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> ExitCode {
    let mut v = json!({ "error": f.code, "message": f.message });
    if let Some(line) = f.line {
        v["line"] = json!(line);
    }
    eprintln!("{v}");
    ExitCode::FAILURE
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(fail("invalid_parameter", "--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| fail("invalid_parameter", e.to_string()))?;
    }
    let text = match &cli.command {
        Command::Hnf { input } => cmd_hnf(input)?,
        Command::Plus { input, tie_budget } => cmd_plus(input, *tie_budget)?,
        Command::Shape { scheme, input } => cmd_shape(scheme, input.as_deref(), true)?,
        Command::Unshape { scheme, input } => cmd_shape(scheme, input.as_deref(), false)?,
        Command::PaprCcdf { scheme, trials, seed } => cmd_papr(scheme, *trials, *seed)?,
        Command::Cep { scheme, snr, trials, seed, receivers, strict_region } => {
            let region = if *strict_region { Region::Strict } else { Region::Unbounded };
            cmd_cep(scheme, snr, *trials, *seed, *receivers, region)?
        }
        Command::Density { rho, power, peak_power, curve } => cmd_density(*rho, *power, *peak_power, curve.as_deref())?,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| fail("io", format!("{}: {e}", p.display()))),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Out {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_hnf(input: &Path) -> Out {
    let q: IntMatrix = serde_json::from_str(&read_input(Some(input))?)?;
    let d = hnf_decompose(&q)?;
    to_json(&json!({
        "schema": SCHEMA,
        "kind": "hnf",
        "det": d.det().to_string(),
        "r": d.r,
        "v": d.v,
    }))
}

fn cmd_plus(input: &Path, tie_budget: usize) -> Out {
    let q: ComplexMatrixJson = serde_json::from_str(&read_input(Some(input))?)?;
    let f: PlusFactorization = plus_factorize_with(&q.0, PlusOptions { tie_budget, ..Default::default() })?;
    let det = cdet(&q.0)?;
    to_json(&json!({
        "schema": SCHEMA,
        "kind": "plus",
        "det": [det.re, det.im],
        "error_bound": f.error_bound(),
        "factors": f,
    }))
}

fn build_scheme(a: &SchemeArgs) -> Result<LayeredScheme, Failure> {
    let code = CodeDefinition::resolve(&a.code)?;
    Ok(LayeredScheme::build(&code, a.mode, a.sigma, &SchemeOptions::default())?)
}

/// One word per line, layers concatenated, values separated by spaces.
fn cmd_shape(a: &SchemeArgs, input: Option<&Path>, forward: bool) -> Out {
    let scheme = build_scheme(a)?;
    let dims: Vec<usize> = scheme.schemes().iter().map(|s| s.dim()).collect();
    let total: usize = dims.iter().sum();
    let mut out = String::new();
    for (n, line) in read_input(input)?.lines().enumerate() {
        let at = |f: Failure| Failure { line: Some(n + 1), ..f };
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| fail("parse", format!("bad integer {t:?}"))))
            .collect::<Result<Vec<_>, _>>()
            .map_err(at)?;
        if values.len() != total {
            return Err(at(fail("dimension", format!("{} values, expected {total}", values.len()))));
        }
        let mut row = Vec::with_capacity(total);
        let mut start = 0;
        for (s, &d) in scheme.schemes().iter().zip(&dims) {
            let chunk = &values[start..start + d];
            if forward {
                let digits = chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        u32::try_from(v).ok().filter(|&v| v < a.sigma).ok_or(stshape::Error::OutOfRange {
                            index: start + i,
                            detail: format!("symbol {v} outside 0..{}", a.sigma),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| at(e.into()))?;
                row.extend(s.encode(&digits).map_err(|e| at(e.into()))?);
            } else {
                let digits = s.decode(chunk).map_err(|e| match e {
                    stshape::Error::OutOfRange { index, detail } => {
                        at(stshape::Error::OutOfRange { index: start + index, detail }.into())
                    }
                    e => at(e.into()),
                })?;
                row.extend(digits.into_iter().map(i64::from));
            }
            start += d;
        }
        let strs: Vec<String> = row.iter().map(i64::to_string).collect();
        out.push_str(&strs.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn cmd_papr(a: &SchemeArgs, trials: u64, seed: u64) -> Out {
    let shaped = build_scheme(a)?;
    let plain = build_scheme(&SchemeArgs { mode: Mode::None, code: a.code.clone(), sigma: a.sigma })?;
    let grid = default_grid_db();
    let words = trials as usize;
    let s = collect_papr(&shaped, words, seed)?.curve(&grid);
    let u = collect_papr(&plain, words, seed)?.curve(&grid);
    Ok(s.to_csv(&[("ccdf_unshaped", &u)]))
}

fn cmd_cep(a: &SchemeArgs, snr: &[f64], trials: u64, seed: u64, receivers: Option<usize>, region: Region) -> Out {
    let code = CodeDefinition::resolve(&a.code)?;
    let config = SweepConfig {
        code: a.code.clone(),
        mode: a.mode,
        sigma: a.sigma,
        snr_db: snr.to_vec(),
        trials,
        seed,
        receivers,
        region,
    };
    let scheme = LayeredScheme::normalized(&code, a.mode, a.sigma, &SchemeOptions::default(), NORMALIZATION_WORDS, seed)?;
    Ok(cep_sweep(&scheme, &config)?.to_csv())
}

fn cmd_density(rho: Option<f64>, power: f64, peak_power: bool, curve: Option<&str>) -> Out {
    match (curve, rho) {
        (Some("b-vs-rho"), _) => Ok(curve_b_vs_rho_csv(&curve_b_vs_rho(&default_one_over_rho_grid())?)),
        (Some("entropy"), _) => Ok(curve_hstar_csv(&curve_hstar(&default_power_grid(), &default_rho_set())?)),
        (Some(other), _) => Err(fail("invalid_parameter", format!("unknown curve {other:?}"))),
        (None, Some(rho)) => {
            let d = if peak_power { solve_peak_power_density(rho, power)? } else { solve_density(rho, power)? };
            let e = d.entropy();
            let mut out = String::from("rho,P,a,b,c,regime,h_star,k\n");
            let regime = serde_json::to_value(d.regime)?;
            writeln!(out, "{},{},{},{},{},{},{},{}", d.rho, d.p, d.a, d.b, d.c, regime.as_str().unwrap_or(""), e.h_star, e.k)
                .unwrap();
            Ok(out)
        }
        (None, None) => Err(fail("invalid_parameter", "need --rho or --curve")),
    }
}
