//! Command-line surface: argument types, command implementations and the
//! JSON envelope they print.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bayes::{solve_bayes, DEFAULT_TOL};
use crate::error::{DisorderError, Result};
use crate::model::{classify_case, ModelParams, Preset};
use crate::simulate::{linspace, simulate_threshold, sweep, write_sweep_csv, SimConfig};
use crate::variational::solve_variational;
use crate::verify::{verify_all, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "disorder", version, about = "Quickest disorder detection for compound Poisson processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal Bayesian boundary and value function.
    SolveBayes(SolveBayesArgs),
    /// Threshold for a false-alarm bound alpha.
    SolveVariational(SolveVariationalArgs),
    /// Monte Carlo risk and false-alarm estimates for a threshold rule.
    Simulate(SimulateArgs),
    /// Run the invariant suite and print a per-check table.
    Verify(VerifyArgs),
    /// Tabulate the value function as CSV.
    ValueFunction(ValueFunctionArgs),
}

/// Model parameters: a preset or config file, overridden by explicit flags.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// case1, case2, case3 or case4.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON file with keys lambda0, lambda1, lambda, c, pi0.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub pi0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialParams {
    lambda0: Option<f64>,
    lambda1: Option<f64>,
    lambda: Option<f64>,
    c: Option<f64>,
    pi0: Option<f64>,
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<ModelParams> {
        let mut base = PartialParams::default();
        if let Some(name) = &self.preset {
            let p = name.parse::<Preset>()?.params();
            base = PartialParams {
                lambda0: Some(p.lambda0),
                lambda1: Some(p.lambda1),
                lambda: Some(p.lambda),
                c: Some(p.c),
                pi0: Some(p.pi0),
            };
        }
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| DisorderError::Config(format!("{}: {e}", path.display())))?;
            let file: PartialParams =
                serde_json::from_str(&text).map_err(|e| DisorderError::Config(format!("{}: {e}", path.display())))?;
            base = PartialParams {
                lambda0: file.lambda0.or(base.lambda0),
                lambda1: file.lambda1.or(base.lambda1),
                lambda: file.lambda.or(base.lambda),
                c: file.c.or(base.c),
                pi0: file.pi0.or(base.pi0),
            };
        }
        let pick = |flag: Option<f64>, fallback: Option<f64>, name: &'static str| flag.or(fallback).ok_or(DisorderError::Missing(name));
        ModelParams::new(
            pick(self.lambda0, base.lambda0, "lambda0")?,
            pick(self.lambda1, base.lambda1, "lambda1")?,
            pick(self.lambda, base.lambda, "lambda")?,
            pick(self.c, base.c, "c")?,
            self.pi0.or(base.pi0).unwrap_or(0.0),
        )
    }
}

#[derive(Debug, Args)]
pub struct SolveBayesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Also write V* at N uniform points of [0, 1].
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,
    /// Destination of the grid CSV.
    #[arg(long, value_name = "FILE", default_value = "value_function.csv")]
    pub csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveVariationalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Alarm threshold.
    #[arg(long = "B", value_name = "B")]
    pub b: Option<f64>,
    /// Use the optimal Bayesian boundary as the threshold.
    #[arg(long, conflicts_with = "b")]
    pub use_bstar: bool,
    #[arg(long, default_value_t = 200_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Threshold sweep `lo:hi:n` written as CSV.
    #[arg(long, value_name = "LO:HI:N", conflicts_with_all = ["b", "use_bstar"])]
    pub sweep: Option<String>,
    /// Destination of the sweep CSV (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `all` runs every preset.
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 20_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ValueFunctionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "N", default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Destination of the CSV (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

/// JSON envelope printed by every solving command.
#[derive(Debug, Clone, Serialize)]
pub struct CommandResult {
    pub command: &'static str,
    pub inputs: Value,
    pub outputs: Value,
    pub diagnostics: Diagnostics,
}

/// What a command wants printed and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, exit_code: EXIT_OK }
    }

    fn json(result: &CommandResult) -> Self {
        Self::ok(serde_json::to_string_pretty(result).expect("serialisable") + "\n")
    }
}

fn io_error(path: &Path, e: std::io::Error) -> DisorderError {
    DisorderError::Config(format!("{}: {e}", path.display()))
}

fn grid_csv(values: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = String::from("pi,value\n");
    for (pi, v) in values {
        out.push_str(&format!("{pi},{v}\n"));
    }
    out
}

fn uniform_grid(n: usize) -> Vec<f64> {
    linspace(0.0, 1.0, n)
}

pub fn cmd_solve_bayes(args: &SolveBayesArgs) -> Result<CommandResult> {
    let params = args.model.resolve()?;
    let sol = solve_bayes(&params, args.tol)?;
    let mut outputs = serde_json::to_value(sol.summary()).expect("serialisable");
    outputs["V_at_pi0"] = json!(sol.value(params.pi0));
    let mut diagnostics = Diagnostics {
        tol: Some(sol.tol),
        ..Diagnostics::default()
    };
    if let Some(n) = args.grid {
        let text = grid_csv(uniform_grid(n).into_iter().map(|pi| (pi, sol.value(pi))));
        fs::write(&args.csv, text).map_err(|e| io_error(&args.csv, e))?;
        diagnostics.csv = Some(args.csv.display().to_string());
    }
    Ok(CommandResult {
        command: "solve-bayes",
        inputs: json!(params),
        outputs,
        diagnostics,
    })
}

pub fn cmd_solve_variational(args: &SolveVariationalArgs) -> Result<CommandResult> {
    let params = args.model.resolve()?;
    let sol = solve_variational(params.pi0, args.alpha, &params, args.tol)?;
    let mut diagnostics = Diagnostics {
        tol: Some(args.tol),
        ..Diagnostics::default()
    };
    if !sol.tight {
        diagnostics
            .warnings
            .push("no threshold attains alpha exactly; the reported threshold is conservative".to_string());
    }
    let mut inputs = json!(params);
    inputs["alpha"] = json!(args.alpha);
    Ok(CommandResult {
        command: "solve-variational",
        inputs,
        outputs: json!(sol),
        diagnostics,
    })
}

/// Parse `lo:hi:n`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let bad = || DisorderError::Config(format!("sweep must look like lo:hi:n, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(lo > 0.0 && hi <= 1.0 && lo <= hi) {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let params = args.model.resolve()?;
    let config = SimConfig::new(args.n_paths, args.seed, &params);
    let mut inputs = json!(params);
    inputs["n_paths"] = json!(args.n_paths);
    inputs["seed"] = json!(args.seed);
    inputs["horizon_cap"] = json!(config.horizon_cap);

    if let Some(spec) = &args.sweep {
        let reports = sweep(&params, &parse_sweep(spec)?, &config)?;
        return match &args.csv {
            None => {
                let mut buf = Vec::new();
                write_sweep_csv(&reports, &mut buf)?;
                Ok(Outcome::ok(String::from_utf8(buf).expect("utf-8 csv")))
            }
            Some(path) => {
                let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
                write_sweep_csv(&reports, file)?;
                let best = reports
                    .iter()
                    .min_by(|a, b| a.risk_direct.mean.total_cmp(&b.risk_direct.mean))
                    .expect("non-empty sweep");
                inputs["sweep"] = json!(spec);
                Ok(Outcome::json(&CommandResult {
                    command: "simulate",
                    inputs,
                    outputs: json!({ "rows": reports.len(), "min_risk_B": best.b, "min_risk": best.risk_direct }),
                    diagnostics: Diagnostics {
                        csv: Some(path.display().to_string()),
                        warnings: reports.iter().filter_map(|r| r.risk_direct.cap_warning()).collect(),
                        ..Diagnostics::default()
                    },
                }))
            }
        };
    }

    let (b, solution) = match (args.b, args.use_bstar) {
        (Some(b), _) => (b, None),
        (None, true) => {
            let sol = solve_bayes(&params, args.tol)?;
            (sol.b_star, Some(sol))
        }
        (None, false) => return Err(DisorderError::Missing("B")),
    };
    let report = simulate_threshold(&params, b, &config)?;
    let mut outputs = json!(report);
    if let Some(sol) = &solution {
        let v = sol.value(params.pi0);
        outputs["V_at_pi0"] = json!(v);
        outputs["z_direct_vs_value"] = json!(report.risk_direct.z_against_value(v));
        outputs["z_identity_vs_value"] = json!(report.risk_identity.z_against_value(v));
    }
    let mut diagnostics = Diagnostics::default();
    diagnostics.warnings.extend(report.risk_direct.cap_warning());
    if solution.is_some() {
        diagnostics.tol = Some(args.tol);
    }
    inputs["B"] = json!(b);
    Ok(Outcome::json(&CommandResult {
        command: "simulate",
        inputs,
        outputs,
        diagnostics,
    }))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Outcome> {
    let instances: Vec<(String, ModelParams)> = if args.model.preset.as_deref() == Some("all") {
        Preset::ALL.iter().map(|p| (p.name().to_string(), p.params())).collect()
    } else {
        let params = args.model.resolve()?;
        let scope = args.model.preset.clone().unwrap_or_else(|| format!("case{}", classify_case(&params).roman()));
        vec![(scope, params)]
    };
    let opts = VerifyOptions {
        n_paths: args.n_paths,
        seed: args.seed,
        tol: args.tol,
    };
    let report = verify_all(&instances, &opts)?;
    Ok(Outcome {
        stdout: report.table(),
        exit_code: if report.passed() { EXIT_OK } else { EXIT_VERIFY_FAILED },
    })
}

pub fn cmd_value_function(args: &ValueFunctionArgs) -> Result<Outcome> {
    let params = args.model.resolve()?;
    let sol = solve_bayes(&params, args.tol)?;
    let text = grid_csv(uniform_grid(args.grid).into_iter().map(|pi| (pi, sol.value(pi))));
    match &args.csv {
        None => Ok(Outcome::ok(text)),
        Some(path) => {
            fs::write(path, text).map_err(|e| io_error(path, e))?;
            Ok(Outcome::ok(String::new()))
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::SolveBayes(a) => cmd_solve_bayes(a).map(|r| Outcome::json(&r)),
        Command::SolveVariational(a) => cmd_solve_variational(a).map(|r| Outcome::json(&r)),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::ValueFunction(a) => cmd_value_function(a),
    }
}

/// Parse `args`, run the command and write its output. Returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.stdout.as_bytes());
            out.exit_code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INVALID
        }
    }
}
