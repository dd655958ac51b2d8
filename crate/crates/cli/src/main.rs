use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multivar_cli::benchmark::with_workers;
use multivar_cli::{cmd_benchmark, cmd_fit, cmd_report, cmd_simulate, CliResult, RunConfig};
use multivar_core::{Condition, CvScheme, Method};

#[derive(Parser)]
#[command(name = "multivar", version, about = "Joint sparse VAR estimation with common and unique effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "MULTIVAR_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct SimFlags {
    /// Heterogeneity condition(s): no, low, high.
    #[arg(long, value_delimiter = ',', value_parser = parse_condition)]
    condition: Vec<Condition>,
    /// Series length(s).
    #[arg(long, value_delimiter = ',')]
    t: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Proportion of paths common to every subject.
    #[arg(long)]
    common: Option<f64>,
    /// Proportion of paths unique to each subject.
    #[arg(long)]
    unique: Option<f64>,
    /// Number of subjects.
    #[arg(long)]
    k: Option<usize>,
    /// Number of variables.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct FitFlags {
    /// Estimation method(s).
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    method: Vec<Method>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    cv: Option<CvScheme>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "grid-n1")]
    grid_n1: Option<usize>,
    #[arg(long = "grid-n2")]
    grid_n2: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset bundle with its truth sidecar.
    Simulate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Fit a bundle and write coefficient matrices, CV table and summary.
    Fit {
        /// Bundle directory.
        data: PathBuf,
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        fit: FitFlags,
        /// Also write SVG heatmaps.
        #[arg(long)]
        figures: bool,
    },
    /// Simulate, fit and score replications.
    Benchmark {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        fit: FitFlags,
        /// Replications per cell.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Summarise metrics CSVs.
    Report {
        /// Long-format metrics files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        shared: Shared,
        /// Also write SVG panels.
        #[arg(long)]
        figures: bool,
    },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::parse(s).ok_or_else(|| format!("unknown condition {s:?} (expected no, low or high)"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {s:?} (expected one of {})", names.join(", "))
    })
}

fn parse_scheme(s: &str) -> Result<CvScheme, String> {
    match s {
        "bcv" => Ok(CvScheme::Bcv),
        "rwcv" => Ok(CvScheme::Rwcv),
        _ => Err(format!("unknown cv scheme {s:?} (expected bcv or rwcv)")),
    }
}

fn base_config(shared: &Shared) -> CliResult<RunConfig> {
    let mut cfg = match &shared.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if shared.workers.is_some() {
        cfg.workers = shared.workers;
    }
    if let Some(out) = &shared.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn apply_sim(cfg: &mut RunConfig, f: &SimFlags) {
    if !f.condition.is_empty() {
        cfg.conditions = f.condition.clone();
    }
    if !f.t.is_empty() {
        cfg.t = f.t.clone();
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if f.common.is_some() {
        cfg.common = f.common;
    }
    if f.unique.is_some() {
        cfg.unique = f.unique;
    }
    if let Some(v) = f.k {
        cfg.k = v;
    }
    if let Some(v) = f.d {
        cfg.d = v;
    }
}

fn apply_fit(cfg: &mut RunConfig, f: &FitFlags) {
    if !f.method.is_empty() {
        cfg.methods = f.method.clone();
    }
    if let Some(v) = f.folds {
        cfg.folds = v;
    }
    if let Some(v) = f.cv {
        cfg.cv = v;
    }
    if let Some(v) = f.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = f.grid_n1 {
        cfg.grid_n1 = v;
    }
    if let Some(v) = f.grid_n2 {
        cfg.grid_n2 = v;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { shared, sim } => {
            let mut cfg = base_config(&shared)?;
            apply_sim(&mut cfg, &sim);
            let m = cmd_simulate(&cfg)?;
            println!("wrote {} subjects ({} variables) to {}", m.k, m.d, cfg.out.display());
        }
        Command::Fit { data, shared, fit, figures } => {
            let mut cfg = base_config(&shared)?;
            apply_fit(&mut cfg, &fit);
            cfg.figures |= figures;
            let workers = cfg.workers;
            let outcome = with_workers(workers, || cmd_fit(&cfg, &data))??;
            println!("fitted {} to {} subjects; outputs in {}", cfg.method().name(), outcome.estimate.totals.len(), cfg.out.display());
        }
        Command::Benchmark { shared, sim, fit, reps } => {
            let mut cfg = base_config(&shared)?;
            apply_sim(&mut cfg, &sim);
            apply_fit(&mut cfg, &fit);
            if let Some(r) = reps {
                cfg.reps = r;
            }
            let out = cmd_benchmark(&cfg)?;
            for s in &out.summary {
                println!("{:<6} T={:<4} {:<28} n={:<3} MCC={:.3}", s.condition, s.t, s.method, s.n, s.mcc);
            }
            if !out.failures.is_empty() {
                eprintln!("{} replication(s) failed; see failures.csv", out.failures.len());
            }
        }
        Command::Report { inputs, shared, figures } => {
            let mut cfg = base_config(&shared)?;
            cfg.figures |= figures;
            let rows = cmd_report(&cfg, &inputs)?;
            println!("summarised {} cells into {}", rows.len(), cfg.out.join("report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
