//! Experiment configuration, orchestration and artifact persistence.
//!
//! Results are deterministic in `(config, seed)`: JSON objects are written
//! with sorted keys and every float with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{Alphabet, ChannelOptions, Dmc, StateChannel};
use crate::error::Error;
use crate::first_order::{default_n_grid, eps_capacity};
use crate::numerics::{l_plus_bits, v_plus_bits};
use crate::oneshot::{
    feinstein_best, feinstein_log_m, information_sum_law, prop3_direct_rhs, random_coding_error,
    sampled_information_sum_law, spectrum_converse_log_m, InputPolicy, DEFAULT_ENUM_CAP, DEFAULT_TYPE_ENUM_CAP,
};
use crate::second_order::{approximation_gap_audit, lambda_solve, normal_approximation_log_m, SolveOptions};
use crate::state::{v_double_star, v_star, MarkovChain, StateProcess, TypeMode, TypeOptions};

/// Fixed 17-significant-digit float rendering; infinities become `inf`/`-inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{task} failed: {source}")]
    Task { task: Task, source: Error },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 for compute and i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Task { .. } | RunError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FirstOrder,
    SecondOrder,
    Bounds,
    Audit,
    Constants,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::FirstOrder => "first-order",
            Task::SecondOrder => "second-order",
            Task::Bounds => "bounds",
            Task::Audit => "audit",
            Task::Constants => "constants",
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            Task::FirstOrder => "first_order",
            Task::SecondOrder => "second_order",
            Task::Bounds => "bounds",
            Task::Audit => "audit",
            Task::Constants => "constants",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Bsc { crossover: f64 },
    Bec { erasure: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    pub matrices: Vec<MatrixSpec>,
    /// Minimum admissible per-state dispersion in bits².
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Iid {
        pi: Vec<f64>,
    },
    Mixed {
        q: Vec<f64>,
    },
    BlockIid {
        pi: Vec<f64>,
        nu: f64,
    },
    Markov {
        kernel: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<Vec<f64>>,
    },
    GilbertElliott {
        tau: f64,
    },
    Alternating {
        sa: usize,
        sb: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeModeSpec {
    Exact,
    MonteCarlo,
    Auto,
}

impl From<TypeModeSpec> for TypeMode {
    fn from(m: TypeModeSpec) -> Self {
        match m {
            TypeModeSpec::Exact => TypeMode::Exact,
            TypeModeSpec::MonteCarlo => TypeMode::MonteCarlo,
            TypeModeSpec::Auto => TypeMode::Auto,
        }
    }
}

/// Task parameters; unset fields take task defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// Blocklength for the finite-n bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Rate in bits per channel use for the direct bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_mode: Option<TypeModeSpec>,
    /// Random codebooks for the Monte Carlo ML error estimate; zero skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebooks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codewords: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub process: ProcessSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub output: OutputSpec,
}

pub const DEFAULT_SEED: u64 = 0;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Resolve the task against a requested one and pin the seed.
    pub fn resolve(
        mut self,
        requested: Option<Task>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self, RunError> {
        self.task = match (self.task, requested) {
            (Some(a), Some(b)) if a != b => {
                return Err(RunError::Schema(format!("config declares task {a} but {b} was requested")))
            }
            (a, b) => Some(b.or(a).ok_or_else(|| RunError::Schema("no task given".into()))?),
        };
        if seed.is_some() {
            self.parameters.seed = seed;
        }
        self.parameters.seed.get_or_insert(DEFAULT_SEED);
        if out.is_some() {
            self.output.dir = out;
        }
        self.validate()?;
        Ok(self)
    }

    fn task(&self) -> Task {
        self.task.expect("resolved config has a task")
    }

    /// Task-parameter compatibility checks that need no computation.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Schema(m));
        let task = self.task.ok_or_else(|| RunError::Schema("no task given".into()))?;
        let p = &self.parameters;
        if let Some(eps) = p.eps {
            if !(eps > 0.0 && eps < 1.0) {
                return bad(format!("eps must lie in (0, 1), got {eps}"));
            }
        }
        if let Some(beta) = p.beta {
            if !(0.5..1.0).contains(&beta) {
                return bad(format!("beta must lie in [1/2, 1), got {beta}"));
            }
        }
        if let Some(grid) = &p.n_grid {
            if grid.is_empty() || grid.contains(&0) {
                return bad("n_grid must be a nonempty list of positive blocklengths".into());
            }
        }
        if let Some(tol) = p.tol {
            if !(tol > 0.0) {
                return bad(format!("tol must be positive, got {tol}"));
            }
        }
        if p.budget == Some(0) {
            return bad("budget must be positive".into());
        }
        if let Some(delta) = p.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return bad(format!("delta must lie in (0, 1), got {delta}"));
            }
        }
        let need = |field: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(RunError::Schema(format!("task {task} requires parameters.{field}")))
            }
        };
        match task {
            Task::FirstOrder | Task::SecondOrder => need("eps", p.eps.is_some())?,
            Task::Bounds => {
                need("eps", p.eps.is_some())?;
                need("n", p.n.is_some_and(|n| n > 0))?;
            }
            Task::Audit | Task::Constants => {}
        }
        if self.channel.matrices.is_empty() {
            return bad("channel.matrices must list at least one state".into());
        }
        let states = self.channel.matrices.len();
        let process_states = match &self.process {
            ProcessSpec::Iid { pi } | ProcessSpec::BlockIid { pi, .. } => Some(pi.len()),
            ProcessSpec::Mixed { q } => Some(q.len()),
            ProcessSpec::Markov { kernel, .. } => Some(kernel.len()),
            ProcessSpec::GilbertElliott { .. } => Some(2),
            ProcessSpec::Alternating { .. } => None,
        };
        if process_states.is_some_and(|k| k != states) {
            return bad(format!("process has {} states but the channel has {states}", process_states.unwrap_or(0)));
        }
        Ok(())
    }

    fn formats(&self) -> Vec<Format> {
        self.output.formats.clone().unwrap_or_else(|| vec![Format::Json, Format::Csv])
    }

    /// SHA-256 of the canonical JSON rendering of this configuration with
    /// the output section cleared, so the hash names the experiment only.
    pub fn hash(&self) -> String {
        let experiment = Self { output: OutputSpec::default(), ..self.clone() };
        let v = serde_json::to_value(&experiment).expect("config serializes");
        let digest = Sha256::digest(canonical_json(&v).as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Build the channel described by a spec.
pub fn build_channel(spec: &ChannelSpec) -> crate::Result<StateChannel> {
    let channels = spec
        .matrices
        .iter()
        .map(|m| match m {
            MatrixSpec::Bsc { crossover } => Dmc::bsc(*crossover),
            MatrixSpec::Bec { erasure } => Dmc::bec(*erasure),
            MatrixSpec::Matrix { rows } => Dmc::from_rows(rows.clone()),
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let states = match &spec.states {
        Some(labels) => Alphabet::new(labels.iter().cloned())?,
        None => Alphabet::with_size(channels.len())?,
    };
    let mut opts = ChannelOptions::default();
    if let Some(floor) = spec.dispersion_floor {
        opts.dispersion_floor = floor;
    }
    StateChannel::with_options(states, channels, &opts)
}

/// Build the state process described by a spec.
pub fn build_process(spec: &ProcessSpec, state_count: usize) -> crate::Result<StateProcess> {
    match spec {
        ProcessSpec::Iid { pi } => StateProcess::iid(pi.clone()),
        ProcessSpec::Mixed { q } => StateProcess::mixed(q.clone()),
        ProcessSpec::BlockIid { pi, nu } => StateProcess::block_iid(pi.clone(), *nu),
        ProcessSpec::Markov { kernel, init: Some(init) } => {
            Ok(StateProcess::markov(MarkovChain::new(kernel.clone(), init.clone())?))
        }
        ProcessSpec::Markov { kernel, init: None } => {
            Ok(StateProcess::markov(MarkovChain::stationary_start(kernel.clone())?))
        }
        ProcessSpec::GilbertElliott { tau } => Ok(StateProcess::markov(MarkovChain::gilbert_elliott(*tau)?)),
        ProcessSpec::Alternating { sa, sb } => StateProcess::alternating(*sa, *sb, state_count),
    }
}

/// A CSV artifact: file name, column names and rows of preformatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.0.to_string()).collect(),
            units: columns.iter().map(|c| c.1.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Metadata comment line, header row, then one line per row.
    pub fn render(&self, config_hash: &str) -> String {
        let units: Vec<String> = self.columns.iter().zip(&self.units).map(|(c, u)| format!("{c}={u}")).collect();
        let mut out = format!("# statecap config_sha256={config_hash} units: {}\n", units.join(" "));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Outcome of [`run`]: the JSON summary and the CSV tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub task: Task,
    pub config_hash: String,
    pub summary: Value,
    pub tables: Vec<CsvTable>,
}

impl RunOutput {
    pub fn json(&self) -> String {
        canonical_json(&self.summary)
    }

    /// Write the artifacts in the requested formats; returns the paths written.
    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if formats.contains(&Format::Json) {
            let path = dir.join(format!("{}.json", self.task.file_stem()));
            fs::write(&path, self.json())?;
            written.push(path);
        }
        if formats.contains(&Format::Csv) {
            for t in &self.tables {
                let path = dir.join(format!("{}_{}.csv", self.task.file_stem(), t.name));
                fs::write(&path, t.render(&self.config_hash))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Execute a resolved configuration and write artifacts if an output
/// directory is configured.
pub fn run_and_write(config: &ExperimentConfig) -> Result<(RunOutput, Vec<PathBuf>), RunError> {
    let out = run(config)?;
    let written = match &config.output.dir {
        Some(dir) => out.write(dir, &config.formats())?,
        None => Vec::new(),
    };
    Ok((out, written))
}

/// Execute a configuration; deterministic in the configuration and its seed.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let task = config.task();
    let wrap = |source: Error| match source {
        Error::Schema(m) => RunError::Schema(m),
        source => RunError::Task { task, source },
    };
    let channel = build_channel(&config.channel).map_err(wrap)?;
    let process = build_process(&config.process, channel.state_count()).map_err(wrap)?;
    let hash = config.hash();
    let (body, tables) = match task {
        Task::FirstOrder => first_order_task(config, &channel, &process),
        Task::SecondOrder => second_order_task(config, &channel, &process),
        Task::Bounds => bounds_task(config, &channel, &process),
        Task::Audit => audit_task(config, &channel, &process),
        Task::Constants => constants_task(&channel, &process),
    }
    .map_err(wrap)?;
    let mut summary = Map::new();
    summary.insert("task".into(), json!(task.as_str()));
    summary.insert("config_sha256".into(), json!(hash));
    summary.insert("seed".into(), json!(config.parameters.seed.unwrap_or(DEFAULT_SEED)));
    summary.insert("process".into(), json!(process.name()));
    let (results, units) = body;
    summary.insert("results".into(), results);
    summary.insert("units".into(), Value::Object(units.into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect()));
    Ok(RunOutput { task, config_hash: hash, summary: Value::Object(summary), tables })
}

type Units = BTreeMap<&'static str, &'static str>;
type TaskOutput = crate::Result<((Value, Units), Vec<CsvTable>)>;

/// JSON number for finite floats, `"inf"`/`"-inf"`/`"nan"` strings otherwise.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(fmt_float(x)), Value::Number)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn type_options(config: &ExperimentConfig) -> TypeOptions {
    let p = &config.parameters;
    let mut opts = TypeOptions { seed: p.seed.unwrap_or(DEFAULT_SEED), ..Default::default() };
    if let Some(mode) = p.type_mode {
        opts.mode = mode.into();
    }
    if let Some(budget) = p.budget {
        opts.budget = budget;
    }
    opts
}

fn grid(config: &ExperimentConfig, process: &StateProcess) -> Vec<usize> {
    config.parameters.n_grid.clone().unwrap_or_else(|| match process {
        // Blocklengths on which the running state mix of the alternating model freezes.
        StateProcess::Alternating { .. } => (1..=6).map(|k| (1usize << (2 * k)) - 1).collect(),
        _ => default_n_grid(),
    })
}

fn first_order_task(config: &ExperimentConfig, channel: &StateChannel, process: &StateProcess) -> TaskOutput {
    let eps = config.parameters.eps.expect("validated");
    let n_grid = grid(config, process);
    let r = eps_capacity(process, channel, eps, &n_grid, &type_options(config))?;
    let sc = &r.strong_converse;
    let results = json!({
        "eps": num(eps),
        "n_grid": n_grid,
        "eps_capacity": num(r.eps_capacity),
        "eps_capacity_closed": opt_num(r.eps_capacity_closed),
        "optimistic_capacity": num(r.optimistic),
        "optimistic_capacity_closed": opt_num(r.optimistic_closed),
        "exact": r.exact,
        "strong_converse": {
            "verdict": sc.verdict.as_str(),
            "reason": sc.reason,
            "cov_decay_slope": opt_num(sc.cov_decay_slope),
        },
    });
    let units = Units::from([
        ("eps_capacity", "bits"),
        ("eps_capacity_closed", "bits"),
        ("optimistic_capacity", "bits"),
        ("optimistic_capacity_closed", "bits"),
        ("cov_decay_slope", "dimensionless"),
    ]);
    let mut cdf = CsvTable::new("limsup_cdf", &[("rate", "bits"), ("cdf", "probability")]);
    let f = &r.limsup_cdf;
    cdf.push(vec!["-inf".into(), fmt_float(f.below())]);
    for (x, y) in f.breakpoints().iter().zip(f.values()) {
        cdf.push(vec![fmt_float(*x), fmt_float(*y)]);
    }
    let mut terms = CsvTable::new(
        "strong_converse",
        &[("n", "channel uses"), ("mean_capacity", "bits"), ("capacity_covariance", "bits^2")],
    );
    for ((n, m), (_, c)) in sc.mean_term.iter().zip(&sc.cov_term) {
        terms.push(vec![n.to_string(), fmt_float(*m), fmt_float(*c)]);
    }
    Ok(((results, units), vec![cdf, terms]))
}

fn default_beta(process: &StateProcess) -> f64 {
    match process {
        StateProcess::BlockIid { nu, .. } => 1.0 - nu / 2.0,
        _ => 0.5,
    }
}

fn decomposition(d: &[(String, f64)]) -> Value {
    Value::Object(d.iter().map(|(k, v)| (k.clone(), num(*v))).collect())
}

fn second_order_task(config: &ExperimentConfig, channel: &StateChannel, process: &StateProcess) -> TaskOutput {
    let p = &config.parameters;
    let eps = p.eps.expect("validated");
    let beta = p.beta.unwrap_or_else(|| default_beta(process));
    let n_grid = grid(config, process);
    let mut opts = SolveOptions { types: type_options(config), ..Default::default() };
    if let Some(tol) = p.tol {
        opts.tol = tol;
    }
    let r = lambda_solve(eps, beta, process, channel, &n_grid, &opts)?;
    let closed = r.closed_form.as_ref().map_or(Value::Null, |c| {
        json!({
            "lambda": num(c.lambda),
            "dispersion": opt_num(c.dispersion),
            "decomposition": decomposition(&c.decomposition),
        })
    });
    let results = json!({
        "eps": num(eps),
        "beta": num(beta),
        "lambda": num(r.lambda),
        "dispersion": opt_num(r.dispersion),
        "decomposition": decomposition(&r.decomposition),
        "method": r.method.as_str(),
        "n_grid": r.n_grid,
        "closed_form": closed,
        "rate": num(r.rate),
        "rate_source": r.rate_source.as_str(),
        "diverged": r.diverged,
        "exact": r.exact,
        "r_max": num(r.r_max),
        "tol": num(r.tol),
        "diagnostics": r.diagnostics,
    });
    let units = Units::from([
        ("lambda", "bits per channel use^beta"),
        ("dispersion", "bits^2"),
        ("decomposition", "bits^2"),
        ("rate", "bits"),
        ("r_max", "bits"),
        ("tol", "bits"),
    ]);
    let mut trace = CsvTable::new("trace", &[("n", "channel uses"), ("lambda_n", "bits"), ("stderr", "bits")]);
    for ((n, l), se) in r.trace.iter().zip(&r.trace_stderr) {
        trace.push(vec![n.to_string(), fmt_float(*l), se.map_or_else(String::new, fmt_float)]);
    }
    Ok(((results, units), vec![trace]))
}

fn bounds_task(config: &ExperimentConfig, channel: &StateChannel, process: &StateProcess) -> TaskOutput {
    let p = &config.parameters;
    let eps = p.eps.expect("validated");
    let n = p.n.expect("validated");
    let seed = p.seed.unwrap_or(DEFAULT_SEED);
    let policy = InputPolicy::capacity_achieving(channel);
    let mode: TypeMode = p.type_mode.map_or(TypeMode::Auto, Into::into);
    let exact_law = match mode {
        TypeMode::MonteCarlo => None,
        _ => match information_sum_law(channel, process, &policy, n, DEFAULT_ENUM_CAP) {
            Ok(law) => Some(law),
            Err(Error::BudgetExceeded { .. } | Error::Unsupported(_)) if mode == TypeMode::Auto => None,
            Err(e) => return Err(e),
        },
    };
    let exact = exact_law.is_some();
    let law = match exact_law {
        Some(l) => l,
        None => sampled_information_sum_law(channel, process, &policy, n, p.budget.unwrap_or(100_000), seed)?,
    };
    let achievable = feinstein_log_m(&law, eps)?;
    let converse = match spectrum_converse_log_m(channel, process, n, eps, p.delta, DEFAULT_TYPE_ENUM_CAP) {
        Ok(c) => json!({
            "delta": num(c.delta),
            "log_m": num(c.log_m),
            "log_m_type_average": num(c.log_m_type_average),
            "log_m_caid_output": num(c.log_m_caid_output),
        }),
        Err(e @ (Error::EnumerationTooLarge { .. } | Error::InvalidInput(_))) => json!({ "skipped": e.to_string() }),
        Err(e) => return Err(e),
    };
    let normal = match normal_approximation_log_m(eps, n, process, channel) {
        Ok(v) => num(v),
        Err(Error::Unsupported(_)) => Value::Null,
        Err(e) => return Err(e),
    };
    let rate = p.rate.unwrap_or(achievable / n as f64);
    let direct = prop3_direct_rhs(channel, process, n, rate, &type_options(config))?;
    let mut results = json!({
        "eps": num(eps),
        "n": n,
        "exact": exact,
        "feinstein_log_m": num(achievable),
        "converse": converse,
        "normal_approximation_log_m": normal,
        "direct_bound": {
            "rate": num(rate),
            "value": num(direct.value),
            "unclipped": num(direct.unclipped),
            "gaussian_term": num(direct.gaussian_term),
            "log_term": num(direct.log_term),
            "berry_esseen_term": num(direct.berry_esseen_term),
        },
    });
    let codebooks = p.codebooks.unwrap_or(0);
    if codebooks > 0 {
        let m = p.codewords.unwrap_or_else(|| (rate * n as f64).exp2().ceil().max(1.0) as usize);
        let rc = random_coding_error(channel, process, &policy, n, m, codebooks, seed)?;
        results["random_coding"] = json!({
            "codewords": m,
            "codebooks": codebooks,
            "error": num(rc.error),
            "std_error": num(rc.std_error),
            "feinstein_rhs": num(feinstein_best(&law, (m as f64).log2())),
        });
    }
    let units = Units::from([
        ("feinstein_log_m", "bits"),
        ("log_m", "bits"),
        ("log_m_type_average", "bits"),
        ("log_m_caid_output", "bits"),
        ("normal_approximation_log_m", "bits"),
        ("rate", "bits per channel use"),
        ("value", "probability"),
        ("error", "probability"),
    ]);
    let mut cdf = CsvTable::new("information_cdf", &[("information", "bits"), ("cdf", "probability")]);
    let mut acc = 0.0;
    for (v, w) in law.atoms() {
        acc += w;
        cdf.push(vec![fmt_float(*v), fmt_float(acc.min(1.0))]);
    }
    Ok(((results, units), vec![cdf]))
}

fn audit_task(config: &ExperimentConfig, channel: &StateChannel, process: &StateProcess) -> TaskOutput {
    let n_grid = config.parameters.n_grid.clone().unwrap_or_else(|| (6..=12).map(|k| 1usize << k).collect());
    let t = approximation_gap_audit(process, channel, &n_grid, &type_options(config))?;
    let results = json!({
        "n_grid": n_grid,
        "slope_dispersion": opt_num(t.slope_dispersion),
        "slope_capacity": opt_num(t.slope_capacity),
        "exact": t.rows.iter().all(|r| r.exact),
    });
    let units = Units::from([("slope_dispersion", "dimensionless"), ("slope_capacity", "dimensionless")]);
    let mut table = CsvTable::new(
        "gaps",
        &[
            ("n", "channel uses"),
            ("gap_dispersion", "probability"),
            ("gap_capacity", "probability"),
            ("v_eff", "bits^2"),
        ],
    );
    for r in &t.rows {
        table.push(vec![r.n.to_string(), fmt_float(r.gap_dispersion), fmt_float(r.gap_capacity), fmt_float(r.v_eff)]);
    }
    Ok(((results, units), vec![table]))
}

fn constants_task(channel: &StateChannel, process: &StateProcess) -> TaskOutput {
    let caps = channel.capacities();
    let states: Vec<Value> = channel
        .summaries()
        .iter()
        .enumerate()
        .map(|(s, sm)| {
            json!({
                "label": channel.states().label(s),
                "capacity": num(sm.capacity_bits),
                "dispersion": num(sm.v_cond),
                "unconditional_variance": num(sm.v_uncond),
                "third_moment": num(sm.third_moment),
                "caid": sm.caid.probs().iter().map(|&x| num(x)).collect::<Vec<_>>(),
                "caid_unique": sm.caid_unique,
                "duality_gap": num(sm.duality_gap),
            })
        })
        .collect();
    let ny = channel.output_size();
    let marginal = process.marginal();
    let mut results = json!({
        "states": states,
        "v_min": num(channel.v_min()),
        "berry_esseen_constant": num(channel.be_constant()),
        "d1_constant": num(channel.d1_constant()),
        "v_plus": num(v_plus_bits(ny)),
        "l_plus": num(l_plus_bits(ny)),
        "common_caid": channel.common_caid(1e-6),
        "marginal": marginal.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        "mean_capacity": num(channel.mean_capacity(&marginal)),
        "mean_dispersion": num(channel.mean_dispersion(&marginal)),
    });
    match process {
        StateProcess::Iid { pi } | StateProcess::BlockIid { pi, .. } => {
            results["v_star"] = num(v_star(pi, &caps)?);
        }
        StateProcess::Markov(chain) if chain.is_ergodic() => {
            let lr = v_double_star(chain, &caps)?;
            results["v_double_star"] = num(lr.value);
            results["v_double_star_error_bound"] = num(lr.error_bound);
        }
        _ => {}
    }
    let units = Units::from([
        ("capacity", "bits"),
        ("dispersion", "bits^2"),
        ("unconditional_variance", "bits^2"),
        ("third_moment", "bits^3"),
        ("v_min", "bits^2"),
        ("v_plus", "bits^2"),
        ("l_plus", "bits^3"),
        ("berry_esseen_constant", "dimensionless"),
        ("d1_constant", "1/bits"),
        ("mean_capacity", "bits"),
        ("mean_dispersion", "bits^2"),
        ("v_star", "bits^2"),
        ("v_double_star", "bits^2"),
    ]);
    Ok(((results, units), Vec::new()))
}

/// Compact JSON with sorted object keys and 17-significant-digit floats.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out.push('\n');
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, Some(i), _) if !n.is_f64() => out.push_str(&i.to_string()),
            (_, _, Some(f)) => out.push_str(&fmt_float(f)),
            _ => out.push_str(&n.to_string()),
        },
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}
