use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use monohaz::coxfit::{fit_beta, NewtonOptions};
use monohaz::estimators::{self, default_bandwidth, BetaSource, Method, Settings, DEFAULT_GRID};
use monohaz::inference::{self, BootstrapOptions, CiMethod};
use monohaz::kernels::{self, Triweight};
use monohaz::nonparam::breslow;
use monohaz::sim::{self, ExperimentConfig, ModelSpec, SIMULATION_GRID};
use monohaz::smoothing::{cusum_diagram, naive_isbe, smoothed_breslow};
use monohaz::{Dataset, Error};

#[derive(Parser, Debug)]
#[command(name = "monohaz", version, about = "Monotone baseline hazard estimation in the Cox model")]
struct Cli {
    /// Smoothing kernel.
    #[arg(long, global = true, default_value = "triweight")]
    kernel: String,

    /// Grid points for sampled curves [default: 1000, or 250 for simulations].
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Bandwidth, or `auto` for the default of each command.
    #[arg(long, global = true, default_value = "auto")]
    bandwidth: String,

    /// Worker threads; output does not depend on it.
    #[arg(long, global = true, env = "MONOHAZ_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partial likelihood estimate of the regression coefficients (JSON).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Breslow estimator of the cumulative baseline hazard (CSV).
    Breslow {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Smoothed processes v_n, w_n, Λ_n^s and λ_n^s on a grid (CSV).
    Smooth {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Baseline hazard curve (CSV).
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimateMethod::Msle)]
        method: EstimateMethod,
        /// Truncation point for the ISBE, or `auto` for the 95% quantile.
        #[arg(long, default_value = "auto")]
        tau_star: String,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Pointwise confidence interval (JSON).
    Ci {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        x0: f64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Msle)]
        method: MethodArg,
        #[arg(long = "ci", value_enum, default_value_t = CiArg::Asymptotic)]
        ci: CiArg,
        /// Bootstrap replicates.
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bandwidth constant of the asymptotic interval.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Coverage experiment under one of the built-in models.
    Simulate {
        #[arg(long, default_value_t = 1)]
        model: u32,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Msle)]
        method: MethodArg,
        #[arg(long = "ci", value_enum, default_value_t = CiArg::Asymptotic)]
        ci: CiArg,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[command(flatten)]
        beta: BetaArg,
        /// `json` for the summary, `csv` for one row per replication.
        #[arg(long, value_enum, default_value_t = OutArg::Json)]
        out: OutArg,
        /// Also write the per-replication CSV to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Asymptotic-interval experiments under model 1 for all sample sizes.
    Table1 {
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = sim::TABLE1_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = OutArg::Json)]
        out: OutArg,
    },
    /// Bootstrap-interval experiments under both models.
    Table2 {
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = sim::TABLE2_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = OutArg::Json)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
struct BetaArg {
    /// Coefficients to use instead of the estimate (comma separated), or `none`.
    #[arg(long, default_value = "none")]
    fix_beta: String,
}

impl BetaArg {
    fn source(&self) -> Result<BetaSource, CliError> {
        if self.fix_beta == "none" {
            return Ok(BetaSource::Estimate);
        }
        let values: Result<Vec<f64>, _> = self.fix_beta.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if v.iter().all(|x| x.is_finite()) => Ok(BetaSource::Fixed(v)),
            _ => Err(CliError::User(format!("invalid --fix-beta `{}`", self.fix_beta))),
        }
    }

    fn scalar(&self) -> Result<Option<f64>, CliError> {
        match self.source()? {
            BetaSource::Estimate => Ok(None),
            BetaSource::Fixed(v) if v.len() == 1 => Ok(Some(v[0])),
            BetaSource::Fixed(_) => Err(CliError::User("the built-in models have one covariate".into())),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimateMethod {
    Msle,
    Isbe,
    NaiveMsle,
    NaiveIsbe,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Msle,
    Isbe,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Msle => Method::Msle,
            MethodArg::Isbe => Method::Isbe,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CiArg {
    Asymptotic,
    Bootstrap,
}

impl From<CiArg> for CiMethod {
    fn from(c: CiArg) -> Self {
        match c {
            CiArg::Asymptotic => CiMethod::Asymptotic,
            CiArg::Bootstrap => CiMethod::Bootstrap,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum OutArg {
    Json,
    Csv,
}

#[derive(Debug)]
enum CliError {
    User(String),
    Numeric(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::User(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Explicit bandwidth, or `None` for the per-command default.
fn parse_bandwidth(text: &str) -> Result<Option<f64>, CliError> {
    if text == "auto" {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(Some(b)),
        _ => Err(CliError::User(format!("invalid --bandwidth `{text}`: expected a positive number or `auto`"))),
    }
}

fn parse_tau_star(text: &str) -> Result<Option<f64>, CliError> {
    if text == "auto" {
        return Ok(None);
    }
    text.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::User(format!("invalid --tau-star `{text}`: expected a number or `auto`")))
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::User("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::User(e.to_string()))?;
    }
    let kernel: Triweight = kernels::by_name(&cli.kernel)?;
    let bandwidth = parse_bandwidth(&cli.bandwidth)?;
    let grid = cli.grid.unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(CliError::User("--grid must be at least 2".into()));
    }
    let load = |path: &PathBuf| Dataset::load_csv(path).map_err(CliError::from);

    match cli.command {
        Command::Fit { data, tol, max_iter } => {
            let data = load(&data)?;
            let options = NewtonOptions { tol, max_iter, ..NewtonOptions::default() };
            emit_json(&fit_beta(&data, &vec![0.0; data.p()], &options)?)
        }
        Command::Breslow { data, beta } => {
            let data = load(&data)?;
            let beta = estimators::resolve_beta(&data, &beta.source()?, &NewtonOptions::default())?;
            breslow(&data, &beta)?.write_csv(io::stdout().lock())?;
            Ok(())
        }
        Command::Smooth { data, beta } => {
            let data = load(&data)?;
            let beta = estimators::resolve_beta(&data, &beta.source()?, &NewtonOptions::default())?;
            let b = bandwidth.unwrap_or_else(|| default_bandwidth(data.len()));
            let diagram = cusum_diagram(&kernel, &data, b, &beta, grid)?;
            let step = breslow(&data, &beta)?;
            let mut out = io::BufWriter::new(io::stdout().lock());
            writeln!(out, "t,v_n,w_n,cumulative,hazard")?;
            for (j, &t) in diagram.t_grid.iter().enumerate() {
                let cumulative = smoothed_breslow(&step, &kernel, b, t)?;
                let hazard = naive_isbe(&step, &kernel, b, t)?;
                writeln!(out, "{t},{},{},{cumulative},{hazard}", diagram.v[j], diagram.w[j])?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Estimate { data, method, tau_star, beta } => {
            let data = load(&data)?;
            let b = bandwidth.unwrap_or_else(|| default_bandwidth(data.len()));
            let settings = Settings { grid_size: grid, beta: beta.source()?, tau_star: parse_tau_star(&tau_star)?, ..Settings::default() };
            let fit = match method {
                EstimateMethod::Msle => estimators::msle_with(&kernel, &data, b, &settings)?,
                EstimateMethod::Isbe => estimators::isbe_with(&kernel, &data, b, &settings)?,
                EstimateMethod::NaiveMsle => estimators::naive_msle_with(&kernel, &data, b, &settings)?,
                EstimateMethod::NaiveIsbe => estimators::naive_isbe_with(&kernel, &data, b, &settings)?,
            };
            let mut out = io::BufWriter::new(io::stdout().lock());
            fit.curve.write_csv(&mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Ci { data, x0, level, method, ci, replicates, seed, c, beta } => {
            if matches!(ci, CiArg::Bootstrap) && replicates < 2 {
                return Err(CliError::User(format!("--B must be at least 2, got {replicates}")));
            }
            let data = load(&data)?;
            let settings = Settings { grid_size: grid, beta: beta.source()?, ..Settings::default() };
            let result = match ci {
                CiArg::Asymptotic => {
                    // an explicit bandwidth fixes the constant in b = c n^{-1/4}
                    let c = bandwidth.map_or(c, |b| b * (data.len() as f64).powf(0.25));
                    inference::asymptotic_ci_with(&kernel, &data, x0, level, method.into(), c, &settings)?
                }
                CiArg::Bootstrap => {
                    let options = BootstrapOptions { replicates, seed, bandwidth };
                    inference::bootstrap_ci_with(&kernel, &data, x0, level, method.into(), &options, &settings)?
                }
            };
            emit_json(&result)
        }
        Command::Simulate { model, n, reps, method, ci, replicates, seed, level, c, beta, out, dump } => {
            if bandwidth.is_some() {
                return Err(CliError::User("simulations use the default bandwidths; drop --bandwidth".into()));
            }
            if matches!(ci, CiArg::Bootstrap) && replicates < 2 {
                return Err(CliError::User(format!("--B must be at least 2, got {replicates}")));
            }
            let config = ExperimentConfig {
                fix_beta: beta.scalar()?,
                level,
                c,
                bootstrap_replicates: replicates,
                grid_size: cli.grid.unwrap_or(SIMULATION_GRID),
                ..ExperimentConfig::new(ModelSpec::by_number(model)?, n, reps, method.into(), ci.into(), seed)
            };
            let run = sim::run_experiment(&config)?;
            if let Some(path) = dump {
                sim::write_records_csv(&run.records, io::BufWriter::new(std::fs::File::create(path)?))?;
            }
            match out {
                OutArg::Json => emit_json(&run.result),
                OutArg::Csv => Ok(sim::write_records_csv(&run.records, io::stdout().lock())?),
            }
        }
        Command::Table1 { reps, seed, sizes, out } => {
            if bandwidth.is_some() {
                return Err(CliError::User("simulations use the default bandwidths; drop --bandwidth".into()));
            }
            let rows = sim::table1_configs(&sizes, reps, seed)
                .into_iter()
                .map(|config| {
                    let config = ExperimentConfig { grid_size: cli.grid.unwrap_or(SIMULATION_GRID), ..config };
                    Ok(TableRow { model: 1, result: sim::run_experiment(&config)?.result })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            emit_table(&rows, out)
        }
        Command::Table2 { reps, replicates, seed, sizes, out } => {
            if bandwidth.is_some() {
                return Err(CliError::User("simulations use the default bandwidths; drop --bandwidth".into()));
            }
            if replicates < 2 {
                return Err(CliError::User(format!("--B must be at least 2, got {replicates}")));
            }
            let rows = sim::table2_configs(&sizes, reps, replicates, seed)
                .into_iter()
                .map(|(model, config)| {
                    let config = ExperimentConfig { grid_size: cli.grid.unwrap_or(SIMULATION_GRID), ..config };
                    Ok(TableRow { model, result: sim::run_experiment(&config)?.result })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            emit_table(&rows, out)
        }
    }
}

#[derive(Serialize)]
struct TableRow {
    model: u32,
    #[serde(flatten)]
    result: sim::ExperimentResult,
}

fn emit_table(rows: &[TableRow], out: OutArg) -> Result<(), CliError> {
    if out == OutArg::Json {
        return emit_json(&rows);
    }
    let mut w = io::stdout().lock();
    writeln!(w, "model,n,method,ci_type,fix_beta,replications,covered,average_length,coverage,failures")?;
    for row in rows {
        let r = &row.result;
        let fix = r.fix_beta.map_or_else(String::new, |b| b.to_string());
        writeln!(
            w,
            "{},{},{},{},{fix},{},{},{},{},{}",
            row.model, r.n, r.method, r.ci_type, r.replications, r.covered, r.average_length, r.coverage, r.failures
        )?;
    }
    Ok(())
}
