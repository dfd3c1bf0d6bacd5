//! Experiment runner for the stosqp solvers: methods × noise levels × seeds
//! over the built-in problem suite, with CSV/JSON output and summaries.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;
use stosqp::oracle::NoiseModel;
use stosqp::problem::{builtin_suite, problem_by_name, Problem};
use stosqp::solver_adaptive::{run, AdaptiveConfig, FallbackKind};
use stosqp::solver_local::{run_local, LocalConfig, Stepsize};
use stosqp::{RunStatus, RunTrace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("unknown method `{0}` (expected adaptive-newton, adaptive-gd or nonadaptive)")]
    UnknownMethod(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    AdaptiveNewton,
    AdaptiveGd,
    Nonadaptive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::AdaptiveNewton, Method::AdaptiveGd, Method::Nonadaptive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::AdaptiveNewton => "adaptive-newton",
            Method::AdaptiveGd => "adaptive-gd",
            Method::Nonadaptive => "nonadaptive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| BenchError::UnknownMethod(s.to_string()))
    }
}

/// The full grid of runs to execute.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub problems: Vec<String>,
    pub methods: Vec<Method>,
    pub sigma2_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Stepsizes tried by the nonadaptive method.
    pub stepsizes: Vec<Stepsize<f64>>,
    pub max_iters: usize,
    pub tol: f64,
    pub max_batch: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            problems: builtin_suite::<f64>().iter().map(|p| p.name().to_string()).collect(),
            methods: Method::ALL.to_vec(),
            sigma2_levels: vec![1e-8, 1e-4, 1e-2, 1e-1, 1.0],
            seeds: (0..5).collect(),
            stepsizes: vec![
                Stepsize::Const(0.01),
                Stepsize::Const(0.1),
                Stepsize::Const(0.5),
                Stepsize::Const(1.0),
                Stepsize::Decay(0.6),
                Stepsize::Decay(0.9),
            ],
            max_iters: 100_000,
            tol: 1e-5,
            max_batch: 1_000_000,
        }
    }
}

/// One run of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub problem: String,
    pub method: Method,
    pub sigma2: f64,
    pub seed: u64,
    pub stepsize: Option<Stepsize<f64>>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.problems.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::InvalidPlan("problems, methods and seeds must be nonempty".into()));
        }
        if self.sigma2_levels.is_empty() {
            return Err(BenchError::InvalidPlan("at least one noise level is required".into()));
        }
        if let Some(s) = self.sigma2_levels.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(BenchError::InvalidPlan(format!("invalid noise variance {s}")));
        }
        if self.methods.contains(&Method::Nonadaptive) && self.stepsizes.is_empty() {
            return Err(BenchError::InvalidPlan("nonadaptive runs need at least one stepsize".into()));
        }
        for s in &self.stepsizes {
            s.validate().map_err(|e| BenchError::InvalidPlan(e.to_string()))?;
        }
        for name in &self.problems {
            if problem_by_name::<f64>(name).is_none() {
                return Err(BenchError::UnknownProblem(name.clone()));
            }
        }
        Ok(())
    }

    /// Cells in output order: problem, method, noise level, seed, stepsize.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for problem in &self.problems {
            for &method in &self.methods {
                for &sigma2 in &self.sigma2_levels {
                    for &seed in &self.seeds {
                        let cell = |stepsize| Cell { problem: problem.clone(), method, sigma2, seed, stepsize };
                        match method {
                            Method::Nonadaptive => cells.extend(self.stepsizes.iter().map(|&s| cell(Some(s)))),
                            _ => cells.push(cell(None)),
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn adaptive_config(&self, fallback: FallbackKind) -> AdaptiveConfig<f64> {
        let mut cfg = AdaptiveConfig::default().with_fallback(fallback);
        cfg.max_iters = self.max_iters;
        cfg.tol = self.tol;
        cfg.max_batch = self.max_batch;
        cfg
    }

    pub fn local_config(&self, stepsize: Stepsize<f64>) -> LocalConfig<f64> {
        let mut cfg = LocalConfig::new(stepsize);
        cfg.max_iters = self.max_iters;
        cfg.tol = self.tol;
        cfg
    }
}

/// One output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: String,
    #[serde(serialize_with = "display", deserialize_with = "parse")]
    pub method: Method,
    pub sigma2: f64,
    pub seed: u64,
    /// Empty for the adaptive methods.
    pub stepsize: String,
    #[serde(serialize_with = "display", deserialize_with = "parse")]
    pub status: RunStatus,
    pub iters: usize,
    pub terminal_kkt_residual: f64,
    pub terminal_alpha: f64,
    pub eps_final: f64,
    pub nu_final: f64,
    pub total_samples: u64,
    pub wallclock_ms: u64,
}

fn display<S: Serializer, V: fmt::Display>(v: &V, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn parse<'de, D, V>(d: D) -> Result<V, D::Error>
where
    D: Deserializer<'de>,
    V: FromStr,
    V::Err: fmt::Display,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl ResultRow {
    fn from_trace(cell: &Cell, trace: &RunTrace, wallclock_ms: u64) -> Self {
        Self {
            problem: cell.problem.clone(),
            method: cell.method,
            sigma2: cell.sigma2,
            seed: cell.seed,
            stepsize: cell.stepsize.map(|s| s.to_string()).unwrap_or_default(),
            status: trace.status,
            iters: trace.iterations(),
            terminal_kkt_residual: trace.final_kkt_residual,
            terminal_alpha: trace.final_alpha,
            eps_final: trace.final_eps,
            nu_final: trace.final_nu,
            total_samples: trace.total_samples,
            wallclock_ms,
        }
    }

    /// A run aborted by a solver error is recorded as divergent.
    fn aborted(cell: &Cell, wallclock_ms: u64) -> Self {
        Self {
            problem: cell.problem.clone(),
            method: cell.method,
            sigma2: cell.sigma2,
            seed: cell.seed,
            stepsize: cell.stepsize.map(|s| s.to_string()).unwrap_or_default(),
            status: RunStatus::Divergent,
            iters: 0,
            terminal_kkt_residual: f64::INFINITY,
            terminal_alpha: f64::NAN,
            eps_final: f64::NAN,
            nu_final: f64::NAN,
            total_samples: 0,
            wallclock_ms,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status.is_converged()
    }
}

/// Runs one cell and returns its full trace.
pub fn run_cell_trace(plan: &ExperimentPlan, cell: &Cell) -> Result<stosqp::Result<RunTrace>, BenchError> {
    let problem: Box<dyn Problem<f64>> =
        problem_by_name(&cell.problem).ok_or_else(|| BenchError::UnknownProblem(cell.problem.clone()))?;
    let noise = NoiseModel::new(cell.sigma2, cell.seed);
    Ok(match (cell.method, cell.stepsize) {
        (Method::AdaptiveNewton, _) => run(problem.as_ref(), &noise, &plan.adaptive_config(FallbackKind::RegNewton)),
        (Method::AdaptiveGd, _) => run(problem.as_ref(), &noise, &plan.adaptive_config(FallbackKind::SteepestDescent)),
        (Method::Nonadaptive, Some(s)) => run_local(problem.as_ref(), &noise, &plan.local_config(s)),
        (Method::Nonadaptive, None) => {
            return Err(BenchError::InvalidPlan("nonadaptive cell without a stepsize".into()))
        }
    })
}

pub fn run_cell(plan: &ExperimentPlan, cell: &Cell) -> Result<ResultRow, BenchError> {
    let start = Instant::now();
    let outcome = run_cell_trace(plan, cell)?;
    let ms = start.elapsed().as_millis() as u64;
    Ok(match outcome {
        Ok(trace) => ResultRow::from_trace(cell, &trace, ms),
        Err(_) => ResultRow::aborted(cell, ms),
    })
}

/// Runs every cell of the plan on up to `jobs` threads. Rows are passed to
/// `sink` in the plan's cell order as soon as each prefix is complete.
pub fn run_plan_with<F>(plan: &ExperimentPlan, jobs: usize, mut sink: F) -> Result<Vec<ResultRow>, BenchError>
where
    F: FnMut(&ResultRow) -> Result<(), BenchError>,
{
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::InvalidPlan(e.to_string()))?;
    let cells = plan.cells();
    let chunk = 4 * jobs.max(1);
    let mut rows = Vec::with_capacity(cells.len());
    for group in cells.chunks(chunk) {
        let done: Vec<ResultRow> =
            pool.install(|| group.par_iter().map(|c| run_cell(plan, c)).collect::<Result<_, _>>())?;
        for row in done {
            sink(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn run_plan(plan: &ExperimentPlan, jobs: usize) -> Result<Vec<ResultRow>, BenchError> {
    run_plan_with(plan, jobs, |_| Ok(()))
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_json<W: Write>(rows: &[ResultRow], out: W) -> Result<(), BenchError> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

/// Aggregate over all rows of one (method, σ²) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(serialize_with = "display", deserialize_with = "parse")]
    pub method: Method,
    pub sigma2: f64,
    pub runs: usize,
    pub convergence_rate: f64,
    pub residual_q1: f64,
    pub residual_median: f64,
    pub residual_q3: f64,
    pub wallclock_median_ms: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(m, s)| m == r.method && s == r.sigma2) {
            keys.push((r.method, r.sigma2));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.into_iter()
        .map(|(method, sigma2)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method && r.sigma2 == sigma2).collect();
            let mut res: Vec<f64> = group.iter().map(|r| r.terminal_kkt_residual).collect();
            res.sort_by(f64::total_cmp);
            let converged = group.iter().filter(|r| r.is_converged()).count();
            let wall: Vec<f64> = group.iter().map(|r| r.wallclock_ms as f64).collect();
            SummaryRow {
                method,
                sigma2,
                runs: group.len(),
                convergence_rate: converged as f64 / group.len() as f64,
                residual_q1: quantile(&res, 0.25),
                residual_median: quantile(&res, 0.5),
                residual_q3: quantile(&res, 0.75),
                wallclock_median_ms: median(&wall),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for row in summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
