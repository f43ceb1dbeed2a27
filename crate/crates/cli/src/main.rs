//! `solver`: list builtin problems, run shifted Bellman iterations and check
//! storage functions, fixed points and iterated sweeps from the shell.
//!
//! Exit codes: 0 converged or check passed, 1 bad usage or runtime error,
//! 2 period-2 cycle, 3 diverged, 4 iteration cap reached, 5 check failed.

mod psi_csv;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use shiftdp::bellman::{apply_t_value, BellmanError, Side};
use shiftdp::dissipativity::{
    best_certified_shift, check_dissipativity, check_strict_dissipativity, terminal_from_storage,
    DissipativityError, Storage,
};
use shiftdp::exprlang::{Expr, ParseError};
use shiftdp::oracle::{brute_force_value, OracleError};
use shiftdp::problem::{
    builtin_with, load_config, BuiltinParams, GridFunction, Model, ProblemError, ProblemSpec, BUILTINS,
};
use shiftdp::solve::{
    average_cost_estimate, iterate, residual_shifted_be, IterateOptions, Operator, SolveError, Status,
};
use thiserror::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("expression `{src}`: {source}")]
    Expr { src: String, source: ParseError },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Bellman(#[from] BellmanError),
    #[error(transparent)]
    Dissipativity(#[from] DissipativityError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}: {1}")]
    Csv(PathBuf, #[source] csv::Error),
    #[error("{0}: {1}")]
    PsiFile(PathBuf, String),
}

#[derive(Parser)]
#[command(name = "solver", version, about = "Shifted Bellman iterations for average-cost optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List builtin problems.
    List,
    /// Iterate a Bellman operator and write trace.csv, report.json and psi_final.csv.
    Solve(SolveArgs),
    /// Check a storage function, a candidate fixed point or the brute-force oracle.
    Check(CheckArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Builtin name or path to a JSON problem file.
    #[arg(long)]
    problem: String,
    /// Discount factor (discounted problems only work with the plain operator).
    #[arg(long)]
    discount: Option<f64>,
    /// Cost slope of nonunique-eps.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    T,
    THat,
    TCheck,
    Alpha,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Min,
    Max,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "t-hat")]
    operator: OperatorArg,
    /// Weight of the largest difference in the shift (alpha operator).
    #[arg(long)]
    alpha: Option<f64>,
    /// Which side the alpha operator clips to.
    #[arg(long, value_enum, default_value = "min")]
    side: SideArg,
    /// `zero`, `neg-storage`, a function attached to the problem, or an expression.
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    init: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol_residual: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Storage function: a function attached to the problem or an expression.
    /// Defaults to the problem's own storage function.
    #[arg(long, allow_hyphen_values = true)]
    storage: Option<String>,
    /// Shift c of the dissipation inequality. Defaults to the problem's shift, else 0.
    #[arg(long, allow_negative_numbers = true)]
    shift: Option<f64>,
    /// Strict dissipativity about an equilibrium.
    #[arg(long, requires = "alpha_fn")]
    strict: bool,
    /// Equilibrium state, comma separated. Defaults to the problem's equilibrium.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    xe: Option<Vec<f64>>,
    /// Equilibrium input.
    #[arg(long, allow_negative_numbers = true)]
    ue: Option<f64>,
    /// Comparison function alpha(r) written in x1 (the radius).
    #[arg(long)]
    alpha_fn: Option<String>,
    /// Shifted-Bellman residual of the function in --psi.
    #[arg(long, requires = "psi", conflicts_with_all = ["strict", "oracle"])]
    residual: bool,
    #[arg(long)]
    psi: Option<PathBuf>,
    /// Pass threshold of the residual check.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Compare k iterated sweeps with the brute-force oracle on a coarse grid.
    #[arg(long, requires = "k", conflicts_with = "strict")]
    oracle: bool,
    #[arg(long)]
    k: Option<usize>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::List => {
            print!("{}", list());
            Ok(0)
        }
        Command::Solve(args) => solve(&args),
        Command::Check(args) => check(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn list() -> String {
    let mut rows: Vec<_> = BUILTINS.iter().collect();
    rows.sort_by_key(|b| b.name);
    rows.iter()
        .map(|b| format!("{:<20}{:<18}{}\n", b.name, b.tag, b.description))
        .collect()
}

fn load_problem(args: &ProblemArgs) -> Result<ProblemSpec, CliError> {
    let mut spec = if BUILTINS.iter().any(|b| b.name == args.problem) {
        builtin_with(
            &args.problem,
            BuiltinParams {
                epsilon: args.epsilon,
                discount: args.discount,
            },
        )?
    } else if Path::new(&args.problem).exists() {
        load_config(&args.problem)?
    } else {
        return Err(CliError::Usage(format!(
            "`{}` is neither a builtin (see `solver list`) nor a file",
            args.problem
        )));
    };
    if args.discount.is_some() {
        spec = spec.with_discount(args.discount);
    }
    Ok(spec)
}

fn parse_expr(src: &str, dim: usize) -> Result<Expr, CliError> {
    Expr::parse_with_dim(src, dim).map_err(|source| CliError::Expr {
        src: src.to_string(),
        source,
    })
}

fn storage_for(spec: &ProblemSpec, name: Option<&str>) -> Result<Storage, CliError> {
    match name {
        None => spec
            .storage_function()
            .map(|f| Storage::from(&f))
            .ok_or_else(|| CliError::Usage(format!("{} has no storage function; pass --storage", spec.name))),
        Some(n) => match spec.attachment(n) {
            Some(f) => Ok(Storage::from(f)),
            None => Ok(Storage::Expr(parse_expr(n, spec.dim)?)),
        },
    }
}

fn initial(model: &Model, init: &str) -> Result<GridFunction, CliError> {
    let spec = model.spec();
    match init {
        "zero" => Ok(GridFunction::constant(model.grid().clone(), 0.0)),
        "neg-storage" => Ok(terminal_from_storage(model, &storage_for(spec, None)?)?),
        name => {
            let f = match spec.attachment(name) {
                Some(f) => Storage::from(f),
                None => Storage::Expr(parse_expr(name, spec.dim)?),
            };
            Ok(GridFunction::try_from_fn(model.grid().clone(), |x| f.eval(x))?)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(path.into(), e))
}

fn solve(args: &SolveArgs) -> Result<u8, CliError> {
    let spec = load_problem(&args.problem)?;
    let model = Model::new(&spec)?;
    let side = match args.side {
        SideArg::Min => Side::Min,
        SideArg::Max => Side::Max,
    };
    let operator = match (args.operator, args.alpha) {
        (OperatorArg::T, _) => Operator::T,
        (OperatorArg::THat, _) => Operator::THat,
        (OperatorArg::TCheck, _) => Operator::TCheck,
        (OperatorArg::Alpha, Some(alpha)) => Operator::Alpha { alpha, side },
        (OperatorArg::Alpha, None) => return Err(CliError::Usage("--operator alpha needs --alpha".into())),
    };
    let psi0 = initial(&model, &args.init)?;
    let opts = IterateOptions {
        tol: args.tol,
        tol_residual: args.tol_residual,
        max_iter: args.max_iter,
        ..IterateOptions::default()
    };
    let (report, trace) = iterate(&model, &psi0, operator, &opts)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(args.out.clone(), e))?;
    write_file(&args.out.join("trace.csv"), &trace.to_csv())?;
    psi_csv::write(&args.out.join("psi_final.csv"), &report.psi)?;
    let avg = average_cost_estimate(&report);
    let summary = json!({
        "status": report.status.as_str(),
        "c_infty": report.c_infty,
        "residual": report.residual,
        "iterations": report.iterations,
        "average_cost": avg.value,
        "bound_only": avg.bound_only,
    });
    write_file(&args.out.join("report.json"), &pretty(&summary))?;
    println!(
        "{}: {} after {} steps, c_infty = {}, residual = {:e}",
        spec.name,
        report.status.as_str(),
        report.iterations,
        report.c_infty,
        report.residual
    );
    Ok(match report.status {
        Status::Converged => 0,
        Status::Period2 => 2,
        Status::Diverged => 3,
        Status::Maxiter => 4,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn check(args: &CheckArgs) -> Result<u8, CliError> {
    let spec = load_problem(&args.problem)?;
    let report = if args.oracle {
        oracle_check(&spec, args.k.unwrap_or(1))?
    } else if args.residual {
        let model = Model::new(&spec)?;
        let path = args.psi.as_deref().expect("clap enforces --psi");
        let psi = psi_csv::read(path, model.grid())?;
        let (c, residual) = residual_shifted_be(&model, &psi)?;
        json!({
            "check": "residual",
            "pass": residual <= args.tol,
            "c": c,
            "residual": residual,
            "tol": args.tol,
        })
    } else {
        storage_check(&spec, args)?
    };
    let text = pretty(&report);
    print!("{text}");
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    Ok(if report["pass"] == Value::Bool(true) { 0 } else { EXIT_CHECK_FAILED })
}

fn storage_check(spec: &ProblemSpec, args: &CheckArgs) -> Result<Value, CliError> {
    let model = Model::new(spec)?;
    let storage = storage_for(spec, args.storage.as_deref())?;
    if args.strict {
        let xe = match (&args.xe, &spec.equilibrium) {
            (Some(x), _) => x.clone(),
            (None, Some(eq)) => eq.x.clone(),
            (None, None) => return Err(CliError::Usage("--strict needs --xe".into())),
        };
        let ue = match (args.ue, &spec.equilibrium) {
            (Some(u), _) => u,
            (None, Some(eq)) => eq.u,
            (None, None) => return Err(CliError::Usage("--strict needs --ue".into())),
        };
        let alpha = parse_expr(args.alpha_fn.as_deref().expect("clap enforces --alpha-fn"), 1)?;
        let report = check_strict_dissipativity(&model, &storage, &xe, ue, &alpha)?;
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["check"] = json!("strict-dissipativity");
        v["xe"] = json!(xe);
        v["ue"] = json!(ue);
        return Ok(v);
    }
    let shift = args.shift.or(spec.shift_c).unwrap_or(0.0);
    let report = check_dissipativity(&model, &storage, shift)?;
    let mut v = serde_json::to_value(&report).expect("report serializes");
    v["check"] = json!("dissipativity");
    v["shift"] = json!(shift);
    v["best_certified_shift"] = json!(best_certified_shift(&model, &storage)?);
    Ok(v)
}

/// Oracle comparison on a coarse copy of the problem (21 nodes per axis,
/// 11 control samples) from a fixed smooth terminal function.
fn oracle_check(spec: &ProblemSpec, k: usize) -> Result<Value, CliError> {
    let coarse = spec.with_resolution(&vec![21; spec.dim], 11);
    let model = Model::new(&coarse)?;
    let psi = GridFunction::from_fn(model.grid().clone(), |x| {
        x.iter().enumerate().map(|(i, v)| (2.0 * v + i as f64).sin()).sum()
    });
    let mut dp = psi.clone();
    for _ in 0..k {
        dp = apply_t_value(&model, &dp)?;
    }
    let bf = brute_force_value(&coarse, &psi, k)?;
    let gap = bf.sup_distance(&dp);
    Ok(json!({
        "check": "oracle",
        "pass": gap <= 1e-10,
        "k": k,
        "nodes": model.node_count(),
        "max_abs_diff": gap,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_is_sorted_and_tagged() {
        let text = list();
        let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert!(text.lines().any(|l| l.starts_with("pwl-shifted") && l.contains("shift-recovery")));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["solver", "check", "--problem", "pwl-shifted", "--shift", "-3.5"]).unwrap();
        match cli.command {
            Command::Check(a) => assert_eq!(a.shift, Some(-3.5)),
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["solver", "solve", "--operator", "nope", "--problem", "x"]).is_err());
        assert!(Cli::try_parse_from(["solver", "check", "--problem", "x", "--residual"]).is_err());
    }
}
