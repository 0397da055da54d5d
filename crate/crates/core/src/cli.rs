//! The `cavity` command line: argument types, dispatch and output.
//!
//! Every command produces a [`Report`]: a CSV table and a JSON value. With
//! `--format csv` the table is written as is (deterministic for a given
//! invocation); with `--format json` the JSON is wrapped in a [`RunRecord`].
//! Exit codes: 0 success, 2 invalid input, 3 non-convergence (the partial
//! report is still written).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analytic::{self, AnalyticError, LimitSpec};
use crate::cavity::{self, Activity, CavityError, CavitySolution};
use crate::ensembles::{self, DegreeDistribution, EnsembleError, RandomGraph};
use crate::exact::{ExactError, Oracle};
use crate::ext::ExtReal;
use crate::network::{format_float, Network, NetworkError};
use crate::rde::{self, RdeError, RdeOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(name = "cavity", version, about = "Cavity method for spanning subgraphs under local constraints")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Command {
    /// Exact partition function by enumeration (at most 24 edges).
    Exact {
        network: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Solve the cavity equations; `--t inf` for the maximum-size limit.
    Bp {
        network: PathBuf,
        #[arg(long, value_parser = parse_activity)]
        t: Activity,
        #[arg(long, default_value_t = cavity::DEFAULT_TOL)]
        tol: f64,
        /// Iteration budget (default: 10·diameter + 1000).
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Oracle and cavity results side by side.
    Compare {
        network: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Energy and free entropy over a grid of activities.
    Sweep {
        network: PathBuf,
        /// Comma-separated activities.
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        /// Tolerance for the free entropy.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Limit curves and historical minima for b-matchings on Galton–Watson trees.
    Limit {
        #[command(flatten)]
        degrees: DegreeArgs,
        #[arg(long, default_value_t = 1)]
        b: usize,
        /// Scan resolution for the roots of f∘f(s) = s.
        #[arg(long, default_value_t = analytic::DEFAULT_GRID)]
        grid: usize,
        /// Points on the emitted (s, f, g, H) curve.
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
    /// Population dynamics for the recursive distributional equation.
    Rde {
        #[command(flatten)]
        degrees: DegreeArgs,
        #[arg(long, default_value_t = 1)]
        b: usize,
        #[arg(long, default_value_t = 1.0)]
        s_init: f64,
        #[arg(long, default_value_t = rde::DEFAULT_POOL)]
        pool: usize,
        #[arg(long, default_value_t = rde::DEFAULT_ITERS)]
        iters: usize,
        /// Draws per M(P_n) estimate; 0 skips the estimate.
        #[arg(long, default_value_t = 10_000)]
        eval: usize,
        /// Stop once s_n moves by less than 3/√pool.
        #[arg(long)]
        plateau_stop: bool,
    },
    /// Cavity results averaged over random graphs, against the analytic limit.
    Ensemble {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 1)]
        b: usize,
        /// Number of graphs; graph k uses seed `seed + k`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_parser = parse_activity, default_value = "inf")]
        t: Activity,
        /// One row per graph instead of the aggregate.
        #[arg(long)]
        per_seed: bool,
    },
    /// Generate a random b-matching network (always JSON).
    Gen {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 1)]
        b: usize,
    },
}

/// Degree law: Poisson mean, a fixed degree, or a file of probabilities.
#[derive(Debug, Args, Serialize)]
pub struct DegreeArgs {
    /// Poisson(c).
    #[arg(long, conflicts_with_all = ["d", "pi"])]
    pub c: Option<f64>,
    /// Every vertex has degree d.
    #[arg(long, conflicts_with = "pi")]
    pub d: Option<usize>,
    /// File with π_0, π_1, … (JSON array, or numbers separated by commas/whitespace).
    #[arg(long)]
    pub pi: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Er,
    Regular,
    Config,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub degrees: DegreeArgs,
}

fn parse_activity(s: &str) -> Result<Activity, String> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(Activity::Infinite),
        other => other
            .parse::<f64>()
            .map_err(|e| e.to_string())
            .and_then(|t| if t > 0.0 && t.is_finite() { Ok(Activity::Finite(t)) } else { Err(format!("activity must be positive, got {t}")) }),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Rde(#[from] RdeError),
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Cavity(CavityError::NotConverged { .. }) => EXIT_NOT_CONVERGED,
            _ => EXIT_INVALID,
        }
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

impl From<ExtReal> for Cell {
    fn from(x: ExtReal) -> Self {
        match x {
            ExtReal::Finite(v) => Cell::Num(v),
            ExtReal::Infinite => Cell::Text("inf".into()),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Output(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
    }
}

/// Output of one command.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: Table,
    pub json: Value,
    /// False when an iteration hit its budget; the report is partial.
    pub converged: bool,
    /// Overrides the chosen format (`gen` always emits network JSON).
    pub raw: Option<String>,
}

impl Report {
    fn new(table: Table, json: Value) -> Self {
        Self { table, json, converged: true, raw: None }
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub parameters: Value,
    pub seed: u64,
    pub wall_time_s: f64,
    pub version: &'static str,
    pub converged: bool,
    pub outputs: &'a Value,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load_network(path: &Path) -> Result<Network, CliError> {
    Ok(Network::load(&read(path)?)?)
}

fn read_probabilities(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read(path)?;
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
        return Ok(v);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))))
        .collect()
}

impl DegreeArgs {
    pub fn distribution(&self) -> Result<DegreeDistribution, CliError> {
        match (self.c, self.d, &self.pi) {
            (Some(c), None, None) => Ok(DegreeDistribution::poisson(c)?),
            (None, Some(d), None) => Ok(DegreeDistribution::dirac(d)),
            (None, None, Some(path)) => Ok(DegreeDistribution::explicit(read_probabilities(path)?)?),
            _ => Err(CliError::Usage("give exactly one of --c, --d, --pi".into())),
        }
    }
}

impl GraphArgs {
    fn generate(&self, seed: u64) -> Result<RandomGraph, CliError> {
        let d = &self.degrees;
        Ok(match (self.model, d.c, d.d, &d.pi) {
            (Model::Er, Some(c), None, None) => ensembles::erdos_renyi(self.n, c, seed)?,
            (Model::Regular, None, Some(deg), None) => ensembles::random_regular(self.n, deg, seed)?,
            (Model::Config, ..) => ensembles::configuration_model_from(&d.distribution()?, self.n, seed)?,
            (Model::Er, ..) => return Err(CliError::Usage("--model er needs --c".into())),
            (Model::Regular, ..) => return Err(CliError::Usage("--model regular needs --d".into())),
        })
    }

    /// Degree law of the local weak limit.
    fn limit_law(&self) -> Result<DegreeDistribution, CliError> {
        self.degrees.distribution()
    }
}

fn solution_json(sol: &CavitySolution) -> Value {
    json!({ "t": sol.t, "gap": sol.gap, "iterations": sol.iterations, "converged": sol.converged })
}

fn cmd_exact(path: &Path, t: f64) -> Result<Report, CliError> {
    let net = load_network(path)?;
    let oracle = Oracle::new(&net)?;
    let n = net.n_vertices().max(1) as f64;
    let (log_z, energy) = (oracle.log_z(t), oracle.energy(t));
    let mut table = Table::new(vec!["t", "log_z", "free_entropy", "energy", "max_size"]);
    table.push(vec![t.into(), log_z.into(), (log_z / n).into(), energy.into(), oracle.max_size().into()]);
    let edges: Vec<Value> = net
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(u, v))| Ok(json!({ "u": u, "v": v, "p_edge": oracle.edge_probability(t, k)? })))
        .collect::<Result<_, ExactError>>()?;
    let json = json!({
        "t": t,
        "coefficients": oracle.polynomial.coeffs,
        "log_z": log_z,
        "free_entropy": log_z / n,
        "energy": energy,
        "max_size": oracle.max_size(),
        "edges": edges,
    });
    Ok(Report::new(table, json))
}

fn cmd_bp(path: &Path, t: Activity, tol: f64, iters: Option<usize>) -> Result<Report, CliError> {
    let net = load_network(path)?;
    let max_iters = iters.unwrap_or_else(|| cavity::default_max_iters(&net));
    let mut table = Table::new(vec!["u", "v", "x_uv", "x_vu", "p_edge"]);
    let (sol, mut json) = match t {
        Activity::Finite(t) => {
            let sol = cavity::solve_cavity(&net, t, max_iters, tol)?;
            let x = sol.estimate();
            let per_vertex = cavity::vertex_energies(&net, &x);
            let energy = 0.5 * per_vertex.iter().sum::<f64>();
            let mut json = solution_json(&sol);
            json["energy"] = json!(energy);
            if sol.converged {
                let report = cavity::energy_at(&net, &sol)?;
                json["edge_form"] = json!(report.edge_form);
            }
            (sol, json)
        }
        Activity::Infinite => {
            let sol = cavity::solve_infinite_activity(&net, max_iters, tol)?;
            let (lo, hi) = cavity::rank_bracket(&net, &sol)?;
            let mut json = solution_json(&sol);
            json["rank_estimate"] = json!(lo);
            json["rank_bracket"] = json!([lo, hi]);
            (sol, json)
        }
    };
    let x = sol.estimate();
    let mut edges = Vec::new();
    for (k, &(u, v)) in net.edges().iter().enumerate() {
        let p = match t {
            Activity::Finite(_) => Some(cavity::edge_probability(&net, &sol, k)?),
            Activity::Infinite => None,
        };
        table.push(vec![u.into(), v.into(), x[2 * k].into(), x[2 * k + 1].into(), p.into()]);
        edges.push(json!({ "u": u, "v": v, "x_uv": x[2 * k], "x_vu": x[2 * k + 1], "p_edge": p }));
    }
    json["edges"] = Value::Array(edges);
    Ok(Report { converged: sol.converged, ..Report::new(table, json) })
}

fn cmd_compare(path: &Path, t: f64) -> Result<Report, CliError> {
    let net = load_network(path)?;
    let oracle = Oracle::new(&net)?;
    let max_iters = cavity::default_max_iters(&net);
    let sol = cavity::solve_cavity(&net, t, max_iters, cavity::DEFAULT_TOL)?;
    let x = sol.estimate();
    let energy_bp = 0.5 * cavity::vertex_energies(&net, &x).iter().sum::<f64>();
    let energy_exact = oracle.energy(t);
    let inf = cavity::solve_infinite_activity(&net, max_iters, cavity::DEFAULT_TOL)?;
    let rank_bp = cavity::rank_estimate(&net, &inf)?;

    let mut edges = Vec::new();
    let mut max_edge_diff: f64 = 0.0;
    for (k, &(u, v)) in net.edges().iter().enumerate() {
        let (pe, pb) = (oracle.edge_probability(t, k)?, cavity::edge_probability(&net, &sol, k)?);
        max_edge_diff = max_edge_diff.max((pe - pb).abs());
        edges.push(json!({ "u": u, "v": v, "p_exact": pe, "p_bp": pb, "abs_diff": (pe - pb).abs() }));
    }
    let mut max_marginal_diff: f64 = 0.0;
    for v in 0..net.n_vertices() {
        let exact = oracle.marginal(t, v)?;
        let bp = cavity::marginal(&net, &sol, v)?;
        let lookup = |m: &[(u32, f64)], mask: u32| m.iter().find(|e| e.0 == mask).map_or(0.0, |e| e.1);
        for &(mask, _) in exact.iter().chain(&bp) {
            max_marginal_diff = max_marginal_diff.max((lookup(&exact, mask) - lookup(&bp, mask)).abs());
        }
    }
    let mut table = Table::new(vec![
        "t",
        "energy_exact",
        "energy_bp",
        "energy_diff",
        "max_size_exact",
        "max_size_bp",
        "max_edge_diff",
        "max_marginal_diff",
    ]);
    table.push(vec![
        t.into(),
        energy_exact.into(),
        energy_bp.into(),
        (energy_bp - energy_exact).into(),
        oracle.max_size().into(),
        rank_bp.into(),
        max_edge_diff.into(),
        max_marginal_diff.into(),
    ]);
    let json = json!({
        "t": t,
        "is_tree": net.is_tree(),
        "energy_exact": energy_exact,
        "energy_bp": energy_bp,
        "energy_diff": energy_bp - energy_exact,
        "max_size_exact": oracle.max_size(),
        "max_size_bp": rank_bp,
        "max_size_bp_converged": inf.converged,
        "max_edge_diff": max_edge_diff,
        "max_marginal_diff": max_marginal_diff,
        "bp": solution_json(&sol),
        "edges": edges,
    });
    // infinite-activity messages may diverge off trees (odd cycles); M is reported but does not gate the exit code
    Ok(Report { converged: sol.converged, ..Report::new(table, json) })
}

fn cmd_sweep(path: &Path, grid: &[f64], tol: f64) -> Result<Report, CliError> {
    let net = load_network(path)?;
    let oracle = if net.n_edges() <= crate::exact::MAX_EDGES { Some(Oracle::new(&net)?) } else { None };
    let n = net.n_vertices().max(1) as f64;
    let max_iters = cavity::default_max_iters(&net);
    let mut table = Table::new(vec!["t", "energy_bp", "energy_exact", "free_entropy_bp", "free_entropy_exact"]);
    let mut records = Vec::new();
    let mut converged = true;
    for &t in grid {
        // every activity starts from x = 0; warm starts could break the envelope order
        let sol = cavity::solve_cavity(&net, t, max_iters, cavity::DEFAULT_TOL)?;
        converged &= sol.converged;
        let energy = 0.5 * cavity::vertex_energies(&net, &sol.estimate()).iter().sum::<f64>();
        let phi = cavity::free_entropy(&net, t, tol)?;
        let exact_energy = oracle.as_ref().map(|o| o.energy(t));
        let exact_phi = oracle.as_ref().map(|o| o.log_z(t) / n);
        table.push(vec![t.into(), energy.into(), exact_energy.into(), phi.value.into(), exact_phi.into()]);
        let mut record = solution_json(&sol);
        record["energy"] = json!(energy);
        record["energy_exact"] = json!(exact_energy);
        record["free_entropy"] = json!(phi);
        record["free_entropy_exact"] = json!(exact_phi);
        records.push(record);
    }
    Ok(Report { converged, ..Report::new(table, Value::Array(records)) })
}

fn cmd_limit(degrees: &DegreeArgs, b: usize, grid: usize, points: usize) -> Result<Report, CliError> {
    let spec = LimitSpec::new(degrees.distribution()?, b)?;
    let minima = analytic::historical_minima(&spec, grid, analytic::DEFAULT_ROOT_TOL)?;
    let mut table = Table::new(vec!["s", "f", "g", "H"]);
    for [s, f, g, h] in spec.curve(points) {
        table.push(vec![s.into(), f.into(), g.into(), h.into()]);
    }
    let mut json = json!({ "b": b, "c": spec.c, "minima": minima });
    if let (Some(c), 1) = (degrees.c, b) {
        json["karp_sipser"] = json!(analytic::karp_sipser(c)?);
    }
    Ok(Report::new(table, json))
}

#[allow(clippy::too_many_arguments)]
fn cmd_rde(
    degrees: &DegreeArgs,
    b: usize,
    s_init: f64,
    options: RdeOptions,
    eval: usize,
    seed: u64,
) -> Result<Report, CliError> {
    let pi = degrees.distribution()?;
    let mut rng = ensembles::rng_for(seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);
    eval_rng.set_stream(1);
    let mut estimates = Vec::new();
    let mut failure = None;
    let run = rde::solve_rde_with(&pi, b, s_init, options, &mut rng, |_, pool| {
        if eval == 0 || failure.is_some() {
            estimates.push(None);
            return;
        }
        match rde::m_of(pool, &pi, b, eval, &mut eval_rng) {
            Ok(m) => estimates.push(Some(m)),
            Err(e) => {
                failure = Some(e);
                estimates.push(None);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut table = Table::new(vec!["n", "s_n", "s_mc", "m_estimate", "stderr"]);
    for (n, (s, mc)) in run.s.iter().zip(&run.s_mc).enumerate() {
        let m = estimates[n];
        table.push(vec![n.into(), (*s).into(), (*mc).into(), m.map(|m| m.mean).into(), m.map(|m| m.stderr).into()]);
    }
    let json = json!({
        "b": b,
        "s_init": s_init,
        "pool": options.pool,
        "iterations": run.iterations,
        "s": run.s,
        "s_mc": run.s_mc,
        "m": estimates,
        "non_monotone": run.non_monotone,
        "q_side_zeros": run.q_side_zeros,
    });
    Ok(Report::new(table, json))
}

struct EnsembleRun {
    seed: u64,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn cmd_ensemble(graph: &GraphArgs, b: usize, seeds: u64, t: Activity, per_seed: bool, seed: u64) -> Result<Report, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let runs: Vec<EnsembleRun> = (0..seeds)
        .into_par_iter()
        .map(|k| -> Result<EnsembleRun, CliError> {
            let g = graph.generate(seed.wrapping_add(k))?;
            let net = g.bmatching(b)?;
            let n = net.n_vertices() as f64;
            let max_iters = cavity::default_max_iters(&net);
            let (value, sol) = match t {
                Activity::Infinite => {
                    let sol = cavity::solve_infinite_activity(&net, max_iters, cavity::DEFAULT_TOL)?;
                    (cavity::rank_estimate(&net, &sol)? / n, sol)
                }
                Activity::Finite(t) => {
                    let sol = cavity::solve_cavity(&net, t, max_iters, cavity::DEFAULT_TOL)?;
                    (0.5 * cavity::vertex_energies(&net, &sol.estimate()).iter().sum::<f64>() / n, sol)
                }
            };
            Ok(EnsembleRun { seed: seed.wrapping_add(k), value, iterations: sol.iterations, converged: sol.converged })
        })
        .collect::<Result<_, _>>()?;

    let target = match t {
        Activity::Infinite => {
            let spec = LimitSpec::new(graph.limit_law()?, b)?;
            Some(analytic::historical_minima(&spec, analytic::DEFAULT_GRID, analytic::DEFAULT_ROOT_TOL)?.m_b)
        }
        Activity::Finite(_) => None,
    };
    let k = runs.len() as f64;
    let mean = runs.iter().map(|r| r.value).sum::<f64>() / k;
    let stddev = if runs.len() > 1 {
        (runs.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let gap = target.map(|m| (mean - m).abs());
    // the rank bracket stop leaves `converged` false while the estimate is pinned
    let converged = runs.iter().all(|r| r.converged || t == Activity::Infinite);

    let table = if per_seed {
        let mut table = Table::new(vec!["seed", "value", "iterations", "converged"]);
        for r in &runs {
            table.push(vec![Cell::Int(r.seed), r.value.into(), r.iterations.into(), Cell::Text(r.converged.to_string())]);
        }
        table
    } else {
        let mut table = Table::new(vec!["model", "n", "b", "t", "seeds", "mean", "stddev", "target", "abs_gap"]);
        let model = serde_json::to_value(graph.model).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        table.push(vec![
            Cell::Text(model),
            graph.n.into(),
            b.into(),
            Cell::Text(t.to_string()),
            Cell::Int(seeds),
            mean.into(),
            stddev.into(),
            target.into(),
            gap.into(),
        ]);
        table
    };
    let per_run: Vec<Value> = runs
        .iter()
        .map(|r| json!({ "seed": r.seed, "value": r.value, "iterations": r.iterations, "converged": r.converged }))
        .collect();
    let json = json!({ "t": t, "mean": mean, "stddev": stddev, "target": target, "abs_gap": gap, "runs": per_run });
    Ok(Report { converged, ..Report::new(table, json) })
}

fn cmd_gen(graph: &GraphArgs, b: usize, seed: u64) -> Result<Report, CliError> {
    let g = graph.generate(seed)?;
    let net = g.bmatching(b)?;
    let json = json!({ "n": g.n, "edges": g.edges.len(), "erased_loops": g.erased_loops, "erased_multi": g.erased_multi });
    Ok(Report { raw: Some(net.save()), ..Report::new(Table::new(vec![]), json) })
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Exact { network, t } => cmd_exact(network, *t),
        Command::Bp { network, t, tol, iters } => cmd_bp(network, *t, *tol, *iters),
        Command::Compare { network, t } => cmd_compare(network, *t),
        Command::Sweep { network, t, tol } => cmd_sweep(network, t, *tol),
        Command::Limit { degrees, b, grid, points } => cmd_limit(degrees, *b, *grid, *points),
        Command::Rde { degrees, b, s_init, pool, iters, eval, plateau_stop } => {
            let options = RdeOptions { pool: *pool, iters: *iters, plateau_stop: *plateau_stop };
            cmd_rde(degrees, *b, *s_init, options, *eval, cli.seed)
        }
        Command::Ensemble { graph, b, seeds, t, per_seed } => cmd_ensemble(graph, *b, *seeds, *t, *per_seed, cli.seed),
        Command::Gen { graph, b } => cmd_gen(graph, *b, cli.seed),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Exact { .. } => "exact",
        Command::Bp { .. } => "bp",
        Command::Compare { .. } => "compare",
        Command::Sweep { .. } => "sweep",
        Command::Limit { .. } => "limit",
        Command::Rde { .. } => "rde",
        Command::Ensemble { .. } => "ensemble",
        Command::Gen { .. } => "gen",
    }
}

/// Renders a report in the requested format.
pub fn render(cli: &Cli, report: &Report, wall_time_s: f64) -> Result<String, CliError> {
    if let Some(raw) = &report.raw {
        return Ok(raw.clone());
    }
    match cli.format {
        Format::Csv => report.table.to_csv(),
        Format::Json => {
            let record = RunRecord {
                command: command_name(&cli.command),
                parameters: serde_json::to_value(&cli.command).map_err(|e| CliError::Output(e.to_string()))?,
                seed: cli.seed,
                wall_time_s,
                version: env!("CARGO_PKG_VERSION"),
                converged: report.converged,
                outputs: &report.json,
            };
            let mut text = serde_json::to_string_pretty(&record).map_err(|e| CliError::Output(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
    }
}

fn write_output(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io { path: path.clone(), source }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(e.to_string())),
    }
}

/// Parses `args`, runs the command, writes its output; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let start = Instant::now();
    let outcome = run(&cli).and_then(|report| {
        let text = render(&cli, &report, start.elapsed().as_secs_f64())?;
        write_output(&cli, &text)?;
        Ok(report.converged)
    });
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("error: iteration budget exhausted before convergence; output is partial");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
