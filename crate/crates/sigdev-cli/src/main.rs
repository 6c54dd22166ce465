//! Command-line front end over the sigdev library: signature computation,
//! development sweeps over a scale grid, inversion reports, and path
//! generators.
//!
//! Exit codes are part of the contract so scripts can tell failure classes
//! apart: 2 for parse/usage problems, 3 when the dense coefficient storage
//! cap would be exceeded, 4 when the series route cannot certify a requested
//! scale (the failing scale is named on stderr), 5 for estimator failures
//! (a partial report is still written when one exists).

use clap::{Parser, Subcommand, ValueEnum};
use sigdev::hyperbolic::{
    develop_exact, develop_from_signature, develop_ode_path, HyperbolicError, SeriesConfig,
};
use sigdev::inversion::{
    axis_invert, invert_piecewise_linear, InversionError, InvertConfig, TerminationReason,
};
use sigdev::numerics::required_precision;
use sigdev::path_model::{
    axis_to_piecewise, gen_alpha_beta, gen_random_axis, gen_random_piecewise, PiecewisePath,
    RandomPathConfig,
};
use sigdev::signature_engine::{signature_of_path, SignatureError};
use sigdev::tensor_algebra::{ts_exp_segment, ts_mul, TensorError, TensorSeries};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sigdev",
    version,
    about = "Path signatures, hyperbolic development, and signature inversion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the truncated signature of a piecewise-linear path file.
    Sig {
        /// Path JSON: {"dimension": d, "segments": [{"direction": [...], "length": ...}]}
        path_file: PathBuf,
        /// Truncation level of the signature.
        #[arg(long)]
        level: usize,
        /// Working precision in bits (default 128).
        #[arg(long)]
        precision_bits: Option<u32>,
        /// Output signature JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the hyperbolic development over a scale grid and write CSV.
    Develop {
        /// Input file: a path JSON for the exact/ode routes, a signature
        /// JSON for the series route.
        input: PathBuf,
        /// Scale grid as a:b:step (inclusive of both ends up to rounding).
        #[arg(long)]
        lambda_grid: String,
        #[arg(long, value_enum)]
        route: Route,
        /// Override the per-scale working precision (exact route only).
        #[arg(long)]
        precision_bits: Option<u32>,
        /// Override the integrator step count (ode route only).
        #[arg(long)]
        ode_steps: Option<usize>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert a signature back to a path and write a report.
    Invert {
        /// Signature JSON file.
        sig_file: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Piecewise)]
        mode: Mode,
        /// Inversion settings as JSON (partial objects allowed; missing
        /// fields take their defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output report JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a test path file deterministically from a seed.
    Gen {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of segments (axis / random-pl families).
        #[arg(long, default_value_t = 3)]
        segments: usize,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Construction depth for the alpha-beta family (paths get 2^level steps).
        #[arg(long, default_value_t = 2)]
        level: usize,
        /// Output path file; the alpha-beta family treats this as a stem and
        /// writes <stem>-alpha.json and <stem>-beta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// EXPERIMENTAL: brute-force search for short reduced lattice paths
    /// whose signature vanishes through a given level. Exploratory tool for
    /// the open minimal-length question; prints findings, writes no files.
    TrivialSearch {
        /// All levels 1..=level must vanish.
        #[arg(long, default_value_t = 2)]
        level: usize,
        /// Largest number of unit steps to enumerate (capped at 14).
        #[arg(long, default_value_t = 8)]
        max_steps: usize,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Route {
    Exact,
    Series,
    Ode,
}

impl Route {
    fn name(self) -> &'static str {
        match self {
            Route::Exact => "exact",
            Route::Series => "series",
            Route::Ode => "ode",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Axis,
    Piecewise,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Axis,
    RandomPl,
    AlphaBeta,
}

/// A failure with the exit code it maps to.
struct Fail {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Fail {
    Fail {
        code,
        msg: msg.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Fail> {
    match cmd {
        Cmd::Sig {
            path_file,
            level,
            precision_bits,
            out,
        } => cmd_sig(&path_file, level, precision_bits.unwrap_or(128), &out),
        Cmd::Develop {
            input,
            lambda_grid,
            route,
            precision_bits,
            ode_steps,
            out,
        } => cmd_develop(&input, &lambda_grid, route, precision_bits, ode_steps, &out),
        Cmd::Invert {
            sig_file,
            mode,
            config,
            out,
        } => cmd_invert(&sig_file, mode, config.as_deref(), &out),
        Cmd::Gen {
            family,
            seed,
            segments,
            dimension,
            level,
            out,
        } => cmd_gen(family, seed, segments, dimension, level, &out),
        Cmd::TrivialSearch {
            level,
            max_steps,
            dimension,
        } => cmd_trivial_search(level, max_steps, dimension),
    }
}

fn read_file(p: &std::path::Path) -> Result<String, Fail> {
    std::fs::read_to_string(p).map_err(|e| fail(2, format!("cannot read {}: {e}", p.display())))
}

fn write_file(p: &std::path::Path, text: &str) -> Result<(), Fail> {
    std::fs::write(p, text).map_err(|e| fail(2, format!("cannot write {}: {e}", p.display())))
}

fn load_path(p: &std::path::Path) -> Result<PiecewisePath, Fail> {
    PiecewisePath::from_json_str(&read_file(p)?)
        .map_err(|e| fail(2, format!("{}: {e}", p.display())))
}

fn load_sig(p: &std::path::Path) -> Result<TensorSeries, Fail> {
    TensorSeries::from_json_str(&read_file(p)?)
        .map_err(|e| fail(2, format!("{}: {e}", p.display())))
}

fn cmd_sig(
    path_file: &std::path::Path,
    level: usize,
    prec: u32,
    out: &std::path::Path,
) -> Result<(), Fail> {
    let path = load_path(path_file)?;
    let x = signature_of_path(&path, level, prec).map_err(|e| match e {
        SignatureError::Tensor(TensorError::LevelCapExceeded { .. }) => fail(3, e.to_string()),
        other => fail(2, other.to_string()),
    })?;
    write_file(out, &x.to_json_string())
}

/// Parses "a:b:step" into an ascending inclusive grid.
fn parse_grid(text: &str) -> Result<Vec<f64>, Fail> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(fail(2, format!("lambda grid must be a:b:step, got {text:?}")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| fail(2, format!("lambda grid {text:?}: {e}")))?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || a < 0.0 || step <= 0.0 || b < a {
        return Err(fail(
            2,
            format!("lambda grid needs 0 <= a <= b and step > 0, got {text:?}"),
        ));
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let lam = a + step * k as f64;
        if lam > b * (1.0 + 1e-12) + 1e-300 {
            break;
        }
        grid.push(lam.min(b));
        k += 1;
        if grid.len() > 100_000 {
            return Err(fail(2, "lambda grid has more than 100000 points"));
        }
    }
    Ok(grid)
}

struct SweepRow {
    lambda: f64,
    rho: f64,
    eta: Vec<f64>,
    tail_bound: f64,
    route: &'static str,
    precision_bits: u32,
}

fn write_csv(rows: &[SweepRow], d: usize, out: &std::path::Path) -> Result<(), Fail> {
    let mut text = String::from("lambda,rho");
    for i in 1..=d {
        text.push_str(&format!(",eta_{i}"));
    }
    text.push_str(",tail_bound,route,precision_bits\n");
    for r in rows {
        text.push_str(&format!("{},{}", r.lambda, r.rho));
        for e in &r.eta {
            text.push_str(&format!(",{e}"));
        }
        text.push_str(&format!(
            ",{},{},{}\n",
            r.tail_bound, r.route, r.precision_bits
        ));
    }
    write_file(out, &text)
}

fn cmd_develop(
    input: &std::path::Path,
    lambda_grid: &str,
    route: Route,
    precision_bits: Option<u32>,
    ode_steps: Option<usize>,
    out: &std::path::Path,
) -> Result<(), Fail> {
    let grid = parse_grid(lambda_grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    let d;
    match route {
        Route::Series => {
            let x = load_sig(input)?;
            d = x.dimension();
            let cfg = SeriesConfig::default();
            for &lam in &grid {
                let (point, tail) = develop_from_signature(&x, lam, &cfg).map_err(|e| {
                    map_hyperbolic(lam, &e)
                })?;
                rows.push(SweepRow {
                    lambda: lam,
                    rho: point.rho_f64(),
                    eta: point.eta_f64(),
                    tail_bound: tail,
                    route: route.name(),
                    precision_bits: x.precision(),
                });
            }
        }
        Route::Exact => {
            let path = load_path(input)?;
            d = path.dimension();
            let total = path.total_length();
            for &lam in &grid {
                let prec = precision_bits.unwrap_or_else(|| required_precision(lam * total));
                let point = develop_exact(&path, lam, prec)
                    .map_err(|e| map_hyperbolic(lam, &e))?;
                rows.push(SweepRow {
                    lambda: lam,
                    rho: point.rho_f64(),
                    eta: point.eta_f64(),
                    tail_bound: 0.0,
                    route: route.name(),
                    precision_bits: prec,
                });
            }
        }
        Route::Ode => {
            let path = load_path(input)?;
            d = path.dimension();
            let total = path.total_length();
            for &lam in &grid {
                let steps = ode_steps
                    .unwrap_or_else(|| ((50.0 * lam * total).ceil() as usize).max(100));
                let point = develop_ode_path(&path, lam, steps)
                    .map_err(|e| map_hyperbolic(lam, &e))?;
                rows.push(SweepRow {
                    lambda: lam,
                    rho: point.rho_f64(),
                    eta: point.eta_f64(),
                    tail_bound: 0.0,
                    route: route.name(),
                    precision_bits: 64,
                });
            }
        }
    }
    write_csv(&rows, d, out)
}

/// Feasibility failures of a development route map to exit 4, with the
/// failing scale named; anything else is a usage-level problem.
fn map_hyperbolic(lam: f64, e: &HyperbolicError) -> Fail {
    match e {
        HyperbolicError::TailTooLarge { .. }
        | HyperbolicError::PrecisionTooLow { .. }
        | HyperbolicError::StepTooCoarse { .. } => {
            fail(4, format!("lambda = {lam} is not feasible: {e}"))
        }
        other => fail(2, format!("lambda = {lam}: {other}")),
    }
}

fn cmd_invert(
    sig_file: &std::path::Path,
    mode: Mode,
    config: Option<&std::path::Path>,
    out: &std::path::Path,
) -> Result<(), Fail> {
    let x = load_sig(sig_file)?;
    let cfg: InvertConfig = match config {
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| fail(2, format!("{}: {e}", p.display())))?,
        None => InvertConfig::default(),
    };
    match mode {
        Mode::Axis => match axis_invert(&x, cfg.eps_zero) {
            Ok(axis) => {
                let doc = serde_json::json!({
                    "mode": "axis",
                    "letters": axis.letters(),
                    "displacements": axis.displacements(),
                    "path": serde_json::from_str::<serde_json::Value>(
                        &axis_to_piecewise(&axis).to_json_string()
                    ).expect("path JSON is valid"),
                });
                write_file(out, &serde_json::to_string_pretty(&doc).expect("serializable"))
            }
            Err(e) => {
                let (code, _) = invert_failure_class(&e);
                if code == 5 {
                    let doc = serde_json::json!({ "mode": "axis", "error": e.to_string() });
                    write_file(out, &serde_json::to_string_pretty(&doc).expect("serializable"))?;
                }
                Err(fail(code, e.to_string()))
            }
        },
        Mode::Piecewise => match invert_piecewise_linear(&x, &cfg) {
            Ok(report) => {
                write_file(
                    out,
                    &serde_json::to_string_pretty(&report).expect("report is serializable"),
                )?;
                if report.terminated_by == TerminationReason::EstimatorFailure {
                    return Err(fail(
                        5,
                        "estimator failed mid-loop; partial report written",
                    ));
                }
                Ok(())
            }
            Err(e) => {
                let (code, _) = invert_failure_class(&e);
                if code == 5 {
                    let doc = serde_json::json!({ "mode": "piecewise", "error": e.to_string() });
                    write_file(out, &serde_json::to_string_pretty(&doc).expect("serializable"))?;
                }
                Err(fail(code, e.to_string()))
            }
        },
    }
}

/// Classifies inversion errors into the exit-code contract: storage cap 3,
/// series feasibility 4, estimator-class 5, everything else usage 2.
fn invert_failure_class(e: &InversionError) -> (u8, &'static str) {
    match e {
        InversionError::Tensor(TensorError::LevelCapExceeded { .. }) => (3, "cap"),
        InversionError::Hyperbolic(HyperbolicError::TailTooLarge { .. })
        | InversionError::Hyperbolic(HyperbolicError::PrecisionTooLow { .. }) => (4, "feasibility"),
        InversionError::NotAxisSignature(_)
        | InversionError::LevelInsufficient { .. }
        | InversionError::DecayNotObserved { .. }
        | InversionError::IllConditionedFit { .. }
        | InversionError::InsufficientJet { .. }
        | InversionError::Fit(_) => (5, "estimator"),
        _ => (2, "usage"),
    }
}

fn cmd_gen(
    family: Family,
    seed: u64,
    segments: usize,
    dimension: usize,
    level: usize,
    out: &std::path::Path,
) -> Result<(), Fail> {
    match family {
        Family::Axis => {
            if segments == 0 || dimension < 2 {
                return Err(fail(2, "axis family needs segments >= 1 and dimension >= 2"));
            }
            let path = axis_to_piecewise(&gen_random_axis(seed, segments, dimension));
            write_file(out, &path.to_json_string())
        }
        Family::RandomPl => {
            if segments == 0 || dimension < 2 {
                return Err(fail(
                    2,
                    "random-pl family needs segments >= 1 and dimension >= 2",
                ));
            }
            let path =
                gen_random_piecewise(seed, segments, dimension, &RandomPathConfig::default());
            write_file(out, &path.to_json_string())
        }
        Family::AlphaBeta => {
            let (alpha, beta) = gen_alpha_beta(level);
            let stem = out.to_string_lossy();
            let stem = stem.strip_suffix(".json").unwrap_or(&stem);
            write_file(
                std::path::Path::new(&format!("{stem}-alpha.json")),
                &alpha.to_json_string(),
            )?;
            write_file(
                std::path::Path::new(&format!("{stem}-beta.json")),
                &beta.to_json_string(),
            )
        }
    }
}

/// Depth-first enumeration of reduced unit-step lattice paths (no immediate
/// backtracking), checking whether all signature levels 1..=level vanish.
/// Signed letters on stdout: k means a step +e_k, -k means -e_k.
fn cmd_trivial_search(level: usize, max_steps: usize, dimension: usize) -> Result<(), Fail> {
    if dimension < 1 || level < 1 {
        return Err(fail(2, "need dimension >= 1 and level >= 1"));
    }
    if max_steps > 14 {
        return Err(fail(
            2,
            "max-steps is capped at 14 to keep the enumeration bounded",
        ));
    }
    let prec = 64u32;
    let mut step_exps = Vec::new();
    for letter in 1..=dimension {
        for sign in [1.0f64, -1.0] {
            let mut v = vec![0.0; dimension];
            v[letter - 1] = sign;
            let series = ts_exp_segment(&v, level, prec)
                .map_err(|e| fail(3, e.to_string()))?;
            // signed letter code: +letter / -letter
            let code = letter as i64 * sign as i64;
            step_exps.push((code, series));
        }
    }

    println!(
        "searching reduced lattice paths, dimension {dimension}, up to {max_steps} steps, \
         for signatures vanishing through level {level}"
    );
    let mut found_any = false;
    for steps in 2..=max_steps {
        let mut hits: Vec<Vec<i64>> = Vec::new();
        let unit = TensorSeries::unit(dimension, level, prec).map_err(|e| fail(3, e.to_string()))?;
        let mut trail: Vec<i64> = Vec::new();
        dfs(&unit, &step_exps, steps, &mut trail, &mut hits);
        if !hits.is_empty() {
            found_any = true;
            println!("{} path(s) of {steps} steps, e.g. {:?}", hits.len(), hits[0]);
            break;
        }
        println!("no hits with {steps} steps");
    }
    if !found_any {
        println!("no trivial-signature path within the step budget");
    }
    Ok(())
}

fn dfs(
    current: &TensorSeries,
    step_exps: &[(i64, TensorSeries)],
    remaining: usize,
    trail: &mut Vec<i64>,
    hits: &mut Vec<Vec<i64>>,
) {
    if remaining == 0 {
        let trivial = (1..=current.level()).all(|n| {
            current
                .level_slice(n)
                .iter()
                .all(|c| c.to_f64().abs() <= 1e-12)
        });
        if trivial {
            hits.push(trail.clone());
        }
        return;
    }
    for (code, exp) in step_exps {
        if trail.last() == Some(&-code) {
            continue; // immediate backtracking cancels exactly; skip
        }
        let next = ts_mul(current, exp).expect("dimensions and precision match");
        trail.push(*code);
        dfs(&next, step_exps, remaining - 1, trail, hits);
        trail.pop();
    }
}
