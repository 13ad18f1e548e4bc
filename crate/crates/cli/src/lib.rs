//! Argument handling and output formats for the `sdto` binary.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use sdto::relax::TreeShape;
use sdto::states::{named_state, state_from_file};
use sdto::{run, sbb_solve, Algorithm, BssProblem, Dims, HermitianMatrix, RunConfig, RunRecord, RunStatus, SbbConfig};

#[derive(Debug, Parser)]
#[command(name = "sdto", version, about = "Bounds on white-noise separability thresholds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound the threshold of one state with one algorithm (JSON to stdout).
    Threshold(ThresholdArgs),
    /// Run every row of a suite file and print a CSV table.
    Bench(BenchArgs),
    /// Minimize <chi, rho> over product states with branch and bound.
    Bss(BssArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TreeArg {
    Balanced,
    Path,
}

impl From<TreeArg> for TreeShape {
    fn from(t: TreeArg) -> Self {
        match t {
            TreeArg::Balanced => TreeShape::Balanced,
            TreeArg::Path => TreeShape::Path,
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: sdto::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Factorization size r.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Wall-clock limit in seconds (default 60 for m=2, 600 otherwise).
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Branch-and-bound node limit per oracle call.
    #[arg(long = "node-limit")]
    pub node_limit: Option<usize>,
    #[arg(long = "dps-level", default_value_t = 1)]
    pub dps_level: usize,
    #[arg(long, value_enum, default_value_t = TreeArg::Balanced)]
    pub tree: TreeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for branch and bound.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Ignore wall-clock limits and process nodes one at a time.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Built-in state name (ghz, dicke, cluster) or a JSON matrix file.
    #[arg(long)]
    pub state: String,
    /// Number of subsystems for built-in states.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Excitation count for Dicke states.
    #[arg(long)]
    pub k: Option<usize>,
    /// Subsystem dimensions for matrix files, e.g. `2,3`.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[command(flatten)]
    pub run: RunArgs,
    /// Append the record as a CSV row to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CSV file with columns state,m,k,algo,time_limit,node_limit,rank,seed.
    pub suite: PathBuf,
    /// Per-row wall-clock limit in seconds for rows that set none.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub deterministic: bool,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BssArgs {
    /// JSON matrix file `{"dim", "re", "im"}`.
    #[arg(long)]
    pub chi: PathBuf,
    /// Subsystem dimensions, e.g. `2,2`.
    #[arg(long)]
    pub dims: String,
    #[arg(long = "node-limit")]
    pub node_limit: Option<usize>,
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    /// 2 for bad input, 3 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(s) | CliError::Numerical(s) | CliError::Io(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sdto::Error> for CliError {
    fn from(e: sdto::Error) -> Self {
        match e {
            sdto::Error::Numerical(_) | sdto::Error::SizeCap { .. } => CliError::Numerical(e.to_string()),
            sdto::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn parse_dims(s: &str) -> CliResult<Dims> {
    let d = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("bad dims '{s}': {e}")))?;
    Ok(Dims::new(d)?)
}

fn load_state(name: &str, m: usize, k: Option<usize>, dims: Option<&str>) -> CliResult<sdto::ThresholdInstance> {
    if matches!(name, "ghz" | "dicke" | "cluster") {
        return Ok(named_state(name, m, k)?);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::Usage(format!("unknown state '{name}' (not a built-in name or an existing file)")));
    }
    let dims = dims.map(parse_dims).transpose()?;
    Ok(state_from_file(path, dims)?)
}

impl RunArgs {
    fn config(&self, algorithm: Algorithm) -> RunConfig {
        RunConfig {
            algorithm,
            rank: self.rank,
            time_limit_s: self.time_limit,
            node_limit: self.node_limit,
            dps_level: self.dps_level,
            tree: self.tree.into(),
            seed: self.seed,
            threads: self.threads,
            deterministic: self.deterministic,
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Threshold(a) => {
            let rec = cmd_threshold(a)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?;
            Ok(())
        }
        Command::Bench(a) => {
            let records = cmd_bench(a)?;
            write_csv(out, &records)?;
            if let Some(path) = &a.out {
                let mut f = std::fs::File::create(path)?;
                write_csv(&mut f, &records)?;
            }
            Ok(())
        }
        Command::Bss(a) => {
            let res = cmd_bss(a)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&res)?)?;
            Ok(())
        }
    }
}

pub fn cmd_threshold(a: &ThresholdArgs) -> CliResult<RunRecord> {
    let inst = load_state(&a.state, a.m, a.k, a.dims.as_deref())?;
    let rec = run(&inst, &a.run.config(a.algo))?;
    if let Some(path) = &a.out {
        append_csv(path, &rec)?;
    }
    Ok(rec)
}

#[derive(Debug, Deserialize)]
struct SuiteRow {
    state: String,
    m: usize,
    k: Option<usize>,
    algo: String,
    time_limit: Option<f64>,
    node_limit: Option<usize>,
    rank: Option<usize>,
    seed: Option<u64>,
}

/// Runs each suite row in order. Rows that fail are recorded with status
/// `failed` and the run continues.
pub fn cmd_bench(a: &BenchArgs) -> CliResult<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&a.suite)?;
    let mut records = Vec::new();
    for row in rdr.deserialize::<SuiteRow>() {
        let row = row?;
        let algorithm = parse_algorithm(&row.algo).map_err(CliError::Usage)?;
        let cfg = RunConfig {
            rank: row.rank,
            time_limit_s: row.time_limit.or(a.time_limit),
            node_limit: row.node_limit,
            seed: row.seed.unwrap_or(0),
            threads: a.threads,
            deterministic: a.deterministic,
            ..RunConfig::new(algorithm)
        };
        let rec = load_state(&row.state, row.m, row.k, None)
            .and_then(|inst| run(&inst, &cfg).map_err(CliError::from))
            .unwrap_or_else(|e| RunRecord::failed(&row.state, row.m, &cfg, e.to_string()));
        log::info!("{}", serde_json::json!({ "event": "bench_row", "state": rec.state, "algorithm": rec.algorithm, "status": rec.status }));
        records.push(rec);
    }
    Ok(records)
}

pub fn cmd_bss(a: &BssArgs) -> CliResult<sdto::LmoResult> {
    let dims = parse_dims(&a.dims)?;
    let chi = HermitianMatrix::read_json(&a.chi)?;
    let prob = BssProblem::new(chi, dims)?;
    let mut cfg = SbbConfig {
        time_limit: a.time_limit.map(Duration::from_secs_f64),
        seed: a.seed,
        batch: a.threads.max(1),
        ..SbbConfig::default()
    };
    if let Some(n) = a.node_limit {
        cfg.node_limit = n;
    }
    let run = || sbb_solve(&prob, &cfg);
    let res = if a.threads > 1 {
        rayon_pool(a.threads)?.install(run)?
    } else {
        run()?
    };
    Ok(res)
}

fn rayon_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub const CSV_HEADER: [&str; 12] = [
    "state",
    "m",
    "algorithm",
    "ub_relax",
    "lb_relax",
    "ub_heur",
    "feas_heur",
    "time_seconds",
    "seed",
    "status",
    "message",
    "config",
];

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Optimal => "optimal",
        RunStatus::Limit => "limit",
        RunStatus::Failed => "failed",
    }
}

fn csv_fields(r: &RunRecord) -> CliResult<Vec<String>> {
    Ok(vec![
        r.state.clone(),
        r.m.to_string(),
        r.algorithm.to_string(),
        metric(r.ub_relax),
        metric(r.lb_relax),
        metric(r.ub_heur),
        metric(r.feas_heur),
        r.time_seconds.to_string(),
        r.seed.to_string(),
        status_name(r.status).to_string(),
        r.message.clone().unwrap_or_default(),
        serde_json::to_string(&r.config)?,
    ])
}

/// Header plus one row per record; unavailable metrics are written as `-`.
pub fn write_csv(out: &mut dyn Write, records: &[RunRecord]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(csv_fields(r)?)?;
    }
    w.flush()?;
    Ok(())
}

fn append_csv(path: &Path, rec: &RunRecord) -> CliResult<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    w.write_record(csv_fields(rec)?)?;
    w.flush()?;
    Ok(())
}

fn parse_metric(s: &str) -> CliResult<Option<f64>> {
    if s == "-" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e| CliError::Usage(format!("bad number '{s}': {e}")))
}

/// Inverse of [`write_csv`].
pub fn read_csv(input: impl Read) -> CliResult<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(CliError::Usage("unexpected CSV header".into()));
    }
    let bad = |e: std::num::ParseIntError| CliError::Usage(e.to_string());
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let status = match f(9) {
            "optimal" => RunStatus::Optimal,
            "limit" => RunStatus::Limit,
            "failed" => RunStatus::Failed,
            other => return Err(CliError::Usage(format!("unknown status '{other}'"))),
        };
        out.push(RunRecord {
            state: f(0).to_string(),
            m: f(1).parse().map_err(bad)?,
            algorithm: parse_algorithm(f(2)).map_err(CliError::Usage)?,
            ub_relax: parse_metric(f(3))?,
            lb_relax: parse_metric(f(4))?,
            ub_heur: parse_metric(f(5))?,
            feas_heur: parse_metric(f(6))?,
            time_seconds: f(7).parse().map_err(|e| CliError::Usage(format!("{e}")))?,
            seed: f(8).parse().map_err(bad)?,
            status,
            message: Some(f(10).to_string()).filter(|s| !s.is_empty()),
            config: serde_json::from_str(f(11)).map_err(|e| CliError::Usage(e.to_string()))?,
        });
    }
    Ok(out)
}
