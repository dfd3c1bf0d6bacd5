use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use stosqp::problem::problem_by_name;
use stosqp::solver_local::Stepsize;
use stosqp_bench::{run_plan_with, summarize, write_json, write_summary_csv, ExperimentPlan, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Runs the adaptive and nonadaptive stochastic SQP solvers over the built-in
/// problem suite with injected Gaussian noise.
#[derive(Debug, Parser)]
#[command(name = "stosqp-bench", version)]
struct Args {
    /// Comma-separated problem names or `pN` prefixes (default: whole suite).
    #[arg(long, value_delimiter = ',')]
    problems: Vec<String>,

    /// Comma-separated methods: adaptive-newton, adaptive-gd, nonadaptive.
    #[arg(long, value_delimiter = ',', default_value = "adaptive-newton,adaptive-gd,nonadaptive")]
    methods: Vec<String>,

    /// Comma-separated noise variances.
    #[arg(long, value_delimiter = ',', default_value = "1e-8,1e-4,1e-2,1e-1,1")]
    sigma2: Vec<f64>,

    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,

    /// Comma-separated stepsizes for the nonadaptive method, e.g. `0.5` or `t^-0.6`.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1,t^-0.6,t^-0.9")]
    stepsizes: Vec<String>,

    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,

    #[arg(long, default_value_t = 1e-5)]
    tol: f64,

    /// Cap on any single sample batch.
    #[arg(long, default_value_t = 1_000_000)]
    max_batch: u64,

    /// Output file for the per-run rows (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write a per-(method, σ²) summary table to this file.
    #[arg(long)]
    summary: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Number of worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn build_plan(args: &Args) -> Result<ExperimentPlan> {
    let defaults = ExperimentPlan::default();
    let problems = if args.problems.is_empty() {
        defaults.problems
    } else {
        args.problems
            .iter()
            .map(|p| {
                problem_by_name::<f64>(p)
                    .map(|prob| prob.name().to_string())
                    .with_context(|| format!("unknown problem `{p}`"))
            })
            .collect::<Result<_>>()?
    };
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let stepsizes = args
        .stepsizes
        .iter()
        .map(|s| s.parse::<Stepsize<f64>>().map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    let plan = ExperimentPlan {
        problems,
        methods,
        sigma2_levels: args.sigma2.clone(),
        seeds: args.seeds.clone(),
        stepsizes,
        max_iters: args.max_iters,
        tol: args.tol,
        max_batch: args.max_batch,
    };
    plan.validate()?;
    Ok(plan)
}

fn open(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: Args) -> Result<()> {
    let plan = build_plan(&args)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let mut out = open(&args.out)?;

    let rows = match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let rows = run_plan_with(&plan, jobs, |row| {
                w.serialize(row)?;
                w.flush()?;
                Ok(())
            })?;
            w.flush()?;
            rows
        }
        Format::Json => {
            let rows = run_plan_with(&plan, jobs, |_| Ok(()))?;
            write_json(&rows, &mut out)?;
            writeln!(out)?;
            rows
        }
    };
    out.flush()?;

    if let Some(path) = &args.summary {
        let summary = summarize(&rows);
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        match args.format {
            Format::Csv => write_summary_csv(&summary, file)?,
            Format::Json => serde_json::to_writer_pretty(file, &summary)?,
        }
    }
    Ok(())
}

fn main() {
    let args = Args::parse();
    if let Err(e) = run(args) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}
