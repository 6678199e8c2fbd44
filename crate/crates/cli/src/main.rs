use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dcstat::certify::Verdict;
use dcstat::runconfig::{certify_point, run_config, RunConfig, RunError};
use dcstat::suite::{run_suite, SuiteName};
use dcstat::Vector;

const DEFAULT_OUT: &str = "out";

#[derive(Parser)]
#[command(name = "dcstat", version, about = "Directional-stationary solvers for difference-of-convex programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config, certify the final iterate, write the trace CSV and certificate JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the solver seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify one point, given as a comma-separated row, for the config's problem.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Run a benchmark suite and write its summary table.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Trap,
    Rates,
    Randomized,
    Covering,
}

impl From<Suite> for SuiteName {
    fn from(s: Suite) -> Self {
        match s {
            Suite::Trap => SuiteName::Trap,
            Suite::Rates => SuiteName::Rates,
            Suite::Randomized => SuiteName::Randomized,
            Suite::Covering => SuiteName::Covering,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Run(RunError),
    Point(String),
    SuiteFailed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Point(m) => write!(f, "bad --point: {m}"),
            CliError::SuiteFailed(m) => write!(f, "suite {m} had failing rows"),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Run(e)
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::DStationary => 0,
        Verdict::CriticalNotDStationary => 2,
        Verdict::NotCritical => 3,
    }
}

fn parse_point(row: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(row.as_bytes());
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| CliError::Point("empty row".into()))?
        .map_err(|e| CliError::Point(e.to_string()))?;
    record
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| CliError::Point(format!("{s:?}: {e}"))))
        .collect()
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut rc = RunConfig::from_path(config)?;
    if let Some(s) = seed {
        rc.solver.seed = s;
    }
    rc.output_dir = Some(out.or(rc.output_dir.take()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)));
    let o = run_config(&rc)?;
    let t = &o.trace;
    println!("run            {}", rc.run_name());
    println!("termination    {:?}", t.termination);
    println!("iterations     {}", t.iterations());
    println!("subproblems    {}", t.total_subproblems);
    println!("final f        {:.12e}", t.final_f);
    println!("final x        {:?}", t.final_x.as_slice());
    println!("verdict        {:?}", o.certificate.verdict);
    println!("dstat resid.   {:.3e}", o.certificate.dstat_residual);
    println!("critical res.  {:.3e}", o.certificate.critical_residual);
    if let (Some(tp), Some(cp)) = (&o.trace_path, &o.certificate_path) {
        println!("trace          {}", tp.display());
        println!("certificate    {}", cp.display());
    }
    Ok(verdict_code(o.certificate.verdict))
}

fn certify(config: &Path, point: &str) -> Result<u8, CliError> {
    let rc = RunConfig::from_path(config)?;
    let p = dcstat::problems::build_problem(&rc.problem)
        .map_err(|source| RunError::Solver { context: "building problem".into(), source })?;
    let coords = parse_point(point)?;
    if coords.len() != p.dim {
        return Err(CliError::Point(format!("{} coordinates, the problem has {}", coords.len(), p.dim)));
    }
    let cert = certify_point(&rc, &p, &Vector::from_vec(coords))?;
    println!("{}", dcstat::report::certificate_json(&cert).map_err(RunError::from)?);
    Ok(verdict_code(cert.verdict))
}

fn bench(suite: Suite, out: Option<PathBuf>) -> Result<u8, CliError> {
    let name = SuiteName::from(suite);
    let report = run_suite(name, out.as_deref())?;
    print!("{}", report.to_table());
    if let Some(dir) = &out {
        println!("summary written to {}", dir.join(format!("{}_summary.csv", report.name)).display());
    }
    if report.all_passed() {
        Ok(0)
    } else {
        Err(CliError::SuiteFailed(name.as_str().into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Certify { config, point } => certify(&config, &point),
        Command::Bench { suite, out } => bench(suite, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
