//! `chebchain` command-line runner.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
//! 3 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use chebchain::report::ScenarioReport;
use chebchain::scenario::{self, covariance_rows, kernel_rows, KernelTableParams, DEFAULT_SEED, SEEDED};
use chebchain::sde::SimConfig;
use chebchain::ChainError;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(name = "chebchain", version, about = "Forced linear chain: simulation, stationary statistics and scenario checks")]
struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print what the command computes and exit.
    #[arg(long, global = true)]
    describe: bool,
    /// TOML file with one table per command; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ensemble simulation of the chain.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        trajectories: Option<usize>,
        /// exact or euler.
        #[arg(long)]
        integrator: Option<String>,
        #[arg(long)]
        record_every: Option<usize>,
        /// zero, stationary or impulse:K.
        #[arg(long)]
        initial: Option<String>,
        /// Switch the noise off.
        #[arg(long)]
        unforced: bool,
    },
    /// Draws from the stationary law on a window.
    Sample {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Stationary covariances c(m,n), 1 <= m <= n <= n_max.
    CovarianceTable {
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Kernels G_n(s) on a uniform s grid.
    KernelTable {
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        ds: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Run a named scenario and its checks.
    Scenario {
        name: String,
        /// Parameter override KEY=VALUE (VALUE parsed as JSON, else text).
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    format: Option<Format>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    simulate: Option<toml::Table>,
    sample: Option<toml::Table>,
    #[serde(rename = "covariance-table")]
    covariance_table: Option<toml::Table>,
    #[serde(rename = "kernel-table")]
    kernel_table: Option<toml::Table>,
    scenario: Option<toml::Table>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleParams {
    n: usize,
    nu: f64,
    count: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovarianceParams {
    n_max: usize,
    nu: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Chain(ChainError),
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        CliError::Chain(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Chain(e) if e.is_numerical() => 3,
            CliError::Chain(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Chain(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn section(table: Option<&toml::Table>, what: &str) -> Result<Map<String, Value>, CliError> {
    match table {
        None => Ok(Map::new()),
        Some(t) => match serde_json::to_value(t) {
            Ok(Value::Object(m)) => Ok(m),
            _ => Err(CliError::Usage(format!("config section [{what}] is not a table"))),
        },
    }
}

fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.into(), serde_json::to_value(v).expect("flag serializes"));
    }
}

/// Defaults, then the config section, then flags.
fn layered<T: for<'de> Deserialize<'de>>(
    what: &str,
    defaults: Value,
    section: Map<String, Value>,
    flags: Map<String, Value>,
) -> Result<T, CliError> {
    let mut merged = match defaults {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    merged.extend(section);
    merged.extend(flags);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("[{what}] {e}")))
}

fn parse_initial(text: &str) -> Result<Value, CliError> {
    match text {
        "zero" | "stationary" => Ok(json!(text)),
        _ => match text.strip_prefix("impulse:").map(str::parse::<usize>) {
            Some(Ok(k)) => Ok(json!({ "impulse": k })),
            _ => Err(CliError::Usage(format!(
                "--initial must be zero, stationary or impulse:K, got '{text}'"
            ))),
        },
    }
}

fn parse_param(text: &str) -> Result<(String, Value), CliError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--param expects KEY=VALUE, got '{text}'")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.into()));
    Ok((k.trim().into(), value))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let file: ConfigFile = match &cli.config {
        None => ConfigFile::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
    };
    let format = cli.format.or(file.format).unwrap_or(Format::Csv);
    let out = cli.out.clone().or(file.out.clone());
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = cli.seed.or(file.seed);

    if cli.describe {
        let text = match &cli.command {
            Command::Simulate { .. } => {
                "Ensemble simulation: per checkpoint, mean energy ½Σa_n² with its standard error and the variance of a_1."
            }
            Command::Sample { .. } => {
                "Independent draws from the stationary Gaussian law on the first n sites, with the factorisation error."
            }
            Command::CovarianceTable { .. } => {
                "Stationary covariances c(m,n) for 1 <= m <= n <= n_max with the evaluation method of each entry."
            }
            Command::KernelTable { .. } => "Kernels G_n(s) for n <= n_max on the grid s = 0, ds, ..., s_max.",
            Command::Scenario { name, .. } => scenario::describe(name)?,
        };
        emit(&out, &format!("{text}\n"))?;
        return Ok(0);
    }

    match cli.command {
        Command::Simulate {
            n,
            nu,
            dt,
            t_final,
            trajectories,
            integrator,
            record_every,
            initial,
            unforced,
        } => {
            let mut flags = Map::new();
            put(&mut flags, "n", n);
            put(&mut flags, "nu", nu);
            put(&mut flags, "dt", dt);
            put(&mut flags, "t_final", t_final);
            put(&mut flags, "trajectories", trajectories);
            put(&mut flags, "integrator", integrator);
            put(&mut flags, "record_every", record_every);
            put(&mut flags, "seed", cli.seed);
            if let Some(text) = initial {
                flags.insert("initial".into(), parse_initial(&text)?);
            }
            if unforced {
                flags.insert("forced".into(), json!(false));
            }
            let defaults = json!({
                "n": 256, "nu": 0.0, "dt": 1.0, "t_final": 10.0,
                "trajectories": 100, "seed": seed.unwrap_or(DEFAULT_SEED),
            });
            let cfg: SimConfig = layered("simulate", defaults, section(file.simulate.as_ref(), "simulate")?, flags)?;
            cfg.validate()?;
            write_report(&out, format, &scenario::simulate_report(&cfg)?)
        }
        Command::Sample { n, nu, count } => {
            let mut flags = Map::new();
            put(&mut flags, "n", n);
            put(&mut flags, "nu", nu);
            put(&mut flags, "count", count);
            put(&mut flags, "seed", cli.seed);
            let defaults = json!({"n": 16, "nu": 0.0, "count": 10, "seed": seed.unwrap_or(DEFAULT_SEED)});
            let p: SampleParams = layered("sample", defaults, section(file.sample.as_ref(), "sample")?, flags)?;
            write_report(&out, format, &scenario::sample_report(p.n, p.nu, p.count, p.seed)?)
        }
        Command::CovarianceTable { n_max, nu } => {
            let mut flags = Map::new();
            put(&mut flags, "n_max", n_max);
            put(&mut flags, "nu", nu);
            let p: CovarianceParams = layered(
                "covariance-table",
                json!({"n_max": 8, "nu": 0.0}),
                section(file.covariance_table.as_ref(), "covariance-table")?,
                flags,
            )?;
            let rows = covariance_rows(p.n_max, p.nu)?;
            let text = match format {
                Format::Csv => {
                    let mut s = String::from("m,n,method,value\n");
                    for (m, n, method, v) in rows {
                        s.push_str(&format!("{m},{n},{method},{v:?}\n"));
                    }
                    s
                }
                Format::Json => {
                    let rows: Vec<Value> = rows
                        .into_iter()
                        .map(|(m, n, method, v)| json!({"m": m, "n": n, "method": method, "value": v}))
                        .collect();
                    pretty(&json!({ "n_max": p.n_max, "nu": p.nu, "rows": rows }))
                }
            };
            emit(&out, &text)?;
            Ok(0)
        }
        Command::KernelTable { n_max, s_max, ds, nu } => {
            let mut flags = Map::new();
            put(&mut flags, "n_max", n_max);
            put(&mut flags, "s_max", s_max);
            put(&mut flags, "ds", ds);
            put(&mut flags, "nu", nu);
            let defaults = serde_json::to_value(KernelTableParams::default()).expect("defaults serialize");
            let p: KernelTableParams =
                layered("kernel-table", defaults, section(file.kernel_table.as_ref(), "kernel-table")?, flags)?;
            let rows = kernel_rows(p.n_max, p.s_max, p.ds, p.nu, p.tol)?;
            let text = match format {
                Format::Csv => {
                    let mut s = String::from("n,s,value\n");
                    for (n, x, g) in rows {
                        s.push_str(&format!("{n},{x:?},{g:?}\n"));
                    }
                    s
                }
                Format::Json => {
                    let rows: Vec<Value> = rows
                        .into_iter()
                        .map(|(n, x, g)| json!({"n": n, "s": x, "value": g}))
                        .collect();
                    pretty(&json!({ "n_max": p.n_max, "s_max": p.s_max, "ds": p.ds, "nu": p.nu, "rows": rows }))
                }
            };
            emit(&out, &text)?;
            Ok(0)
        }
        Command::Scenario { name, params } => {
            scenario::describe(&name)?;
            let all = section(file.scenario.as_ref(), "scenario")?;
            let mut merged = match all.get(&name) {
                None => Map::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(_) => return Err(CliError::Usage(format!("config section [scenario.{name}] is not a table"))),
            };
            if SEEDED.contains(&name.as_str()) {
                if let Some(s) = cli.seed.or_else(|| if merged.contains_key("seed") { None } else { file.seed }) {
                    merged.insert("seed".into(), json!(s));
                }
            } else if cli.seed.is_some() {
                eprintln!("note: scenario '{name}' is deterministic; --seed ignored");
            }
            for p in &params {
                let (k, v) = parse_param(p)?;
                merged.insert(k, v);
            }
            let report = scenario::run_scenario(&name, &Value::Object(merged))?;
            write_report(&out, format, &report)
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn write_report(out: &Option<PathBuf>, format: Format, report: &ScenarioReport) -> Result<u8, CliError> {
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
    };
    emit(out, &text)?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "check failed: {} measured {:e} target {:e} tolerance {:e} ({})",
            c.name, c.measured, c.target, c.tolerance, c.rule
        );
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
    }
}
