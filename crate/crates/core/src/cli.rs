//! Command-line front end: `probe`, `estimate`, `scale`, `verify-bound` and
//! `rank-audit`.
//!
//! Settings resolve as flags, then the `--config` JSON file, then defaults.
//! The resolved configuration is written next to the outputs and can be fed
//! back through `--config` to repeat a run.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bound::BoundOptions;
use crate::error::{Error, Result};
use crate::experiments::{
    rank_audit, run_pipeline, scaling_experiment, verify_bound, write_csv, write_json_lines, BoundConfig,
    BoundSummary, PipelineConfig, RankRow, ScaleConfig, Scheme,
};
use crate::measurement::BasisSpec;
use crate::metrics::Metric;
use crate::par::Exec;
use crate::plan::{AngleSchedule, MeasurementPlan, PlanKind};
use crate::seed;
use crate::solver::LmOptions;
use crate::state::{NamedState, StateVector};
use crate::system::exact_estimates;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AMPEST_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ampest-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ampest", version, about = "Amplitude estimation from single-qubit measurement statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact outcome probabilities of every plan entry.
    Probe(RunArgs),
    /// One sampled estimation run, scored against the true state.
    Estimate(RunArgs),
    /// Grid of runs over qubit counts, schemes and δ (or shot counts).
    Scale(RunArgs),
    /// Perturbation-bound trials on exact systems.
    VerifyBound(RunArgs),
    /// Jacobian rank at random states per qubit count and scheme.
    RankAudit(RunArgs),
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    /// JSON file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [env: AMPEST_OUT_DIR, default: ampest-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Named state (bell, ghz, w, uniform, basis:K) or `random`.
    #[arg(long)]
    state: Option<String>,
    /// Amplitude file: JSON `{"n", "amps": [[re, im], ...]}` or one `re im` pair per line.
    #[arg(long)]
    state_file: Option<PathBuf>,
    /// Seed of a random state; derived from the master seed when absent.
    #[arg(long)]
    state_seed: Option<u64>,
    /// naive, method1, extended or linear3q.
    #[arg(long, alias = "plan")]
    scheme: Option<Scheme>,
    /// additive-norm, additive-complex, tv or avg-l1.
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    delta: Option<f64>,
    /// Global failure probability.
    #[arg(long)]
    fail: Option<f64>,
    /// Shots per plan entry instead of the planned count; 0 uses exact probabilities.
    #[arg(long)]
    shots: Option<u64>,
    /// Custom Method-1 angles (radians).
    #[arg(long, value_delimiter = ',')]
    angles: Option<Vec<f64>>,
    /// Plan shots from a pilot solve instead of the true state.
    #[arg(long)]
    blind: bool,
    /// Solver starting points.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Per-entry shot counts to sweep instead of planning from δ.
    #[arg(long, value_delimiter = ',')]
    shots_sweep: Option<Vec<u64>>,
    /// Random states per grid point.
    #[arg(long)]
    seeds: Option<usize>,
    /// Row-space perturbation trials.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    zero_trials: Option<usize>,
    #[arg(long)]
    null_trials: Option<usize>,
    /// Perturbation size.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Slack on the bound.
    #[arg(long)]
    kappa: Option<f64>,
    /// parallel or sequential.
    #[arg(long, value_parser = parse_exec)]
    exec: Option<Exec>,
}

fn parse_exec(s: &str) -> std::result::Result<Exec, String> {
    match s {
        "parallel" => Ok(Exec::Parallel),
        "sequential" => Ok(Exec::Sequential),
        _ => Err(format!("expected `parallel` or `sequential`, got `{s}`")),
    }
}

/// Every setting of a run. Missing fields in a config file take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub state: Option<String>,
    pub state_file: Option<PathBuf>,
    pub state_seed: Option<u64>,
    pub scheme: Scheme,
    pub metric: Metric,
    pub delta: f64,
    pub fail: f64,
    pub shots: Option<u64>,
    pub angles: Option<Vec<f64>>,
    pub blind: bool,
    pub restarts: usize,
    pub ns: Vec<usize>,
    /// Empty selects the command's default.
    pub schemes: Vec<Scheme>,
    pub deltas: Vec<f64>,
    pub shots_sweep: Option<Vec<u64>>,
    pub seeds: usize,
    pub trials: usize,
    pub zero_trials: usize,
    pub null_trials: usize,
    pub magnitude: f64,
    pub kappa: f64,
    pub out_dir: Option<PathBuf>,
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: None,
            n: 2,
            state: None,
            state_file: None,
            state_seed: None,
            scheme: Scheme::Method1,
            metric: Metric::TotalVariation,
            delta: 0.1,
            fail: 0.05,
            shots: None,
            angles: None,
            blind: false,
            restarts: LmOptions::default().restarts,
            ns: vec![2, 3],
            schemes: Vec::new(),
            deltas: vec![0.2, 0.1, 0.05],
            shots_sweep: None,
            seeds: 5,
            trials: 200,
            zero_trials: 1,
            null_trials: 1,
            magnitude: 1e-6,
            kappa: BoundOptions::default().kappa,
            out_dir: None,
            exec: Exec::default(),
        }
    }
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

fn resolve(command: &str, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.command = command.to_string();
    overlay!(cfg, args, n, scheme, metric, delta, fail, restarts, ns, schemes, deltas, seeds, trials, zero_trials,
        null_trials, magnitude, kappa, exec);
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.state.is_some() {
        cfg.state = args.state.clone();
        cfg.state_file = None;
    }
    if args.state_file.is_some() {
        cfg.state_file = args.state_file.clone();
        cfg.state = None;
    }
    if args.state_seed.is_some() {
        cfg.state_seed = args.state_seed;
    }
    if args.shots.is_some() {
        cfg.shots = args.shots;
    }
    if args.angles.is_some() {
        cfg.angles = args.angles.clone();
    }
    if args.shots_sweep.is_some() {
        cfg.shots_sweep = args.shots_sweep.clone();
    }
    cfg.blind |= args.blind;
    cfg.out_dir = args
        .out
        .clone()
        .or(cfg.out_dir)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| Some(PathBuf::from(DEFAULT_OUT_DIR)));
    if cfg.schemes.is_empty() {
        cfg.schemes = match command {
            "rank-audit" => vec![Scheme::Method1, Scheme::Extended],
            "scale" => vec![Scheme::Naive],
            _ => Vec::new(),
        };
    }
    validate(&mut cfg)?;
    Ok(cfg)
}

fn config_error(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {msg}"))
}

fn validate(cfg: &mut RunConfig) -> Result<()> {
    let needs_seed = matches!(cfg.command.as_str(), "scale" | "verify-bound");
    if needs_seed && cfg.seed.is_none() {
        return Err(config_error("seed", format!("`{}` requires --seed", cfg.command)));
    }
    cfg.seed.get_or_insert(0);
    if cfg.state.is_some() && cfg.state_file.is_some() {
        return Err(config_error("state", "give either a named state or a state file, not both"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(config_error("delta", format!("must lie in (0, 1), got {}", cfg.delta)));
    }
    if let Some(d) = cfg.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(config_error("deltas", format!("must lie in (0, 1), got {d}")));
    }
    if !(cfg.fail > 0.0 && cfg.fail < 1.0) {
        return Err(config_error("fail", format!("must lie in (0, 1), got {}", cfg.fail)));
    }
    if !(cfg.magnitude >= 0.0 && cfg.magnitude.is_finite()) {
        return Err(config_error("magnitude", format!("must be finite and non-negative, got {}", cfg.magnitude)));
    }
    if !(cfg.kappa >= 1.0 && cfg.kappa.is_finite()) {
        return Err(config_error("kappa", format!("must be at least 1, got {}", cfg.kappa)));
    }
    if cfg.ns.is_empty() {
        return Err(config_error("ns", "empty"));
    }
    if cfg.restarts == 0 {
        return Err(config_error("restarts", "must be at least 1"));
    }
    Ok(())
}

/// Parses a state file. JSON files use the `{"n", "amps"}` layout; anything
/// else is read as one `re im` (or `re,im`) pair per line, `#` starting a comment.
pub fn read_state_file(path: &Path) -> Result<StateVector> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error("state_file", format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        return StateVector::from_json(&text).map_err(|e| config_error("state_file", format!("{}: {e}", path.display())));
    }
    let mut amps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_deref() {
            Some([re, im]) => amps.push(Complex64::new(*re, *im)),
            Some([re]) => amps.push(Complex64::new(*re, 0.0)),
            _ => {
                return Err(config_error(
                    "state_file",
                    format!("{} line {}: expected `re im`, got `{}`", path.display(), i + 1, line.trim()),
                ))
            }
        }
    }
    StateVector::new(amps).map_err(|e| config_error("state_file", format!("{}: {e}", path.display())))
}

fn load_state(cfg: &RunConfig) -> Result<(StateVector, String)> {
    if let Some(path) = &cfg.state_file {
        return Ok((read_state_file(path)?, format!("file:{}", path.display())));
    }
    match cfg.state.as_deref().unwrap_or("random") {
        "random" => {
            let s = cfg.state_seed.unwrap_or_else(|| seed::derive(cfg.seed.unwrap_or(0), "state"));
            Ok((StateVector::random(cfg.n, s)?, format!("random:{s}")))
        }
        name => {
            let named: NamedState = name.parse().map_err(|e| config_error("state", e))?;
            Ok((StateVector::named(&named, cfg.n)?, named.to_string()))
        }
    }
}

fn angle_schedule(cfg: &RunConfig) -> AngleSchedule {
    cfg.angles.clone().map_or(AngleSchedule::Uniform, AngleSchedule::Custom)
}

fn lm_options(cfg: &RunConfig) -> LmOptions {
    LmOptions { restarts: cfg.restarts, exec: cfg.exec, ..LmOptions::default() }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().expect("resolved");
    fs::create_dir_all(&dir).map_err(|e| config_error("out_dir", format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| config_error("out_dir", format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

#[derive(Serialize)]
struct ProbeRow<'a> {
    entry_id: usize,
    target: String,
    theta: f64,
    phi: f64,
    outcome: &'a str,
    probability: f64,
}

fn target_label(spec: &BasisSpec) -> String {
    match spec.target {
        crate::measurement::Target::Single(k) => format!("q{k}"),
        crate::measurement::Target::Pair(k, l) => format!("q{k}q{l}"),
        crate::measurement::Target::All => "all".into(),
    }
}

fn cmd_probe(cfg: &RunConfig) -> Result<serde_json::Value> {
    let (state, label) = load_state(cfg)?;
    let n = state.n();
    let plan = match cfg.scheme.plan(n, &angle_schedule(cfg))? {
        Some(p) => p,
        None => MeasurementPlan { kind: PlanKind::Custom, ..MeasurementPlan::custom(n, vec![BasisSpec::all()])? },
    };
    let estimates = exact_estimates(&state, &plan)?;
    let mut rows = Vec::new();
    for (entry, est) in plan.entries.iter().zip(&estimates) {
        for (outcome, &p) in est.labels.iter().zip(&est.probs) {
            rows.push(ProbeRow {
                entry_id: entry.id,
                target: target_label(&entry.spec),
                theta: entry.spec.theta,
                phi: entry.spec.phi,
                outcome,
                probability: p,
            });
        }
    }
    let dir = out_dir(cfg)?;
    write_file(&dir, "probabilities.csv", &csv_bytes(&rows)?)?;
    write_json(&dir, "probabilities.json", &serde_json::json!({ "plan": plan, "estimates": estimates }))?;
    Ok(serde_json::json!({
        "command": "probe",
        "state": label,
        "n": n,
        "scheme": cfg.scheme,
        "entries": plan.len(),
        "equations": plan.equation_count(),
    }))
}

fn cmd_estimate(cfg: &RunConfig) -> Result<serde_json::Value> {
    let (state, label) = load_state(cfg)?;
    let pcfg = PipelineConfig {
        scheme: cfg.scheme,
        metric: cfg.metric,
        delta: cfg.delta,
        fail: cfg.fail,
        seed: seed::derive(cfg.seed.unwrap_or(0), "estimate"),
        shots_override: cfg.shots,
        angles: angle_schedule(cfg),
        blind: cfg.blind,
        lm: lm_options(cfg),
    };
    let record = run_pipeline(&state, &pcfg)?;
    let dir = out_dir(cfg)?;
    let records = [record];
    write_file(&dir, "records.csv", &csv_bytes(&records)?)?;
    let mut jsonl = Vec::new();
    write_json_lines(&mut jsonl, &records)?;
    write_file(&dir, "records.jsonl", &jsonl)?;
    Ok(serde_json::json!({ "command": "estimate", "state": label, "record": records[0].without_timing() }))
}

fn cmd_scale(cfg: &RunConfig) -> Result<serde_json::Value> {
    let scfg = ScaleConfig {
        ns: cfg.ns.clone(),
        schemes: cfg.schemes.clone(),
        metric: cfg.metric,
        deltas: cfg.deltas.clone(),
        shots: cfg.shots_sweep.clone(),
        fail: cfg.fail,
        seeds: cfg.seeds,
        master_seed: cfg.seed.expect("validated"),
        angles: angle_schedule(cfg),
        lm: lm_options(cfg),
    };
    let out = scaling_experiment(&scfg, cfg.exec)?;
    let dir = out_dir(cfg)?;
    write_file(&dir, "records.csv", &csv_bytes(&out.records)?)?;
    let mut jsonl = Vec::new();
    write_json_lines(&mut jsonl, &out.records)?;
    write_file(&dir, "records.jsonl", &jsonl)?;
    let within = out.records.iter().filter(|r| r.within_target).count();
    Ok(serde_json::json!({
        "command": "scale",
        "runs": out.records.len(),
        "within_target": within,
        "fits": out.fits,
    }))
}

fn cmd_verify_bound(cfg: &RunConfig) -> Result<serde_json::Value> {
    let bcfg = BoundConfig {
        ns: cfg.ns.clone(),
        trials: cfg.trials,
        zero_trials: cfg.zero_trials,
        null_trials: cfg.null_trials,
        magnitude: cfg.magnitude,
        scheme: cfg.scheme,
        master_seed: cfg.seed.expect("validated"),
        options: BoundOptions { kappa: cfg.kappa, ..BoundOptions::default() },
    };
    let trials = verify_bound(&bcfg, cfg.exec)?;
    let dir = out_dir(cfg)?;
    write_file(&dir, "bound_trials.csv", &csv_bytes(&trials)?)?;
    Ok(serde_json::json!({ "command": "verify-bound", "summary": BoundSummary::from_trials(&trials) }))
}

#[derive(Serialize)]
struct RankSummary {
    n: usize,
    scheme: Scheme,
    min_rank: usize,
    max_rank: usize,
    variables: usize,
}

fn cmd_rank_audit(cfg: &RunConfig) -> Result<serde_json::Value> {
    let rows: Vec<RankRow> = rank_audit(&cfg.ns, &cfg.schemes, cfg.seeds, cfg.seed.unwrap_or(0), cfg.exec)?;
    let dir = out_dir(cfg)?;
    write_file(&dir, "rank_audit.csv", &csv_bytes(&rows)?)?;
    let mut summary = Vec::new();
    for &n in &cfg.ns {
        for &scheme in &cfg.schemes {
            let ranks: Vec<&RankRow> = rows.iter().filter(|r| r.n == n && r.scheme == scheme).collect();
            if let (Some(min), Some(max)) =
                (ranks.iter().map(|r| r.numeric_rank).min(), ranks.iter().map(|r| r.numeric_rank).max())
            {
                summary.push(RankSummary { n, scheme, min_rank: min, max_rank: max, variables: ranks[0].variables });
            }
        }
    }
    Ok(serde_json::json!({ "command": "rank-audit", "ranks": summary }))
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn execute(command: &str, args: &RunArgs) -> Result<serde_json::Value> {
    let cfg = resolve(command, args)?;
    let summary = match command {
        "probe" => cmd_probe(&cfg)?,
        "estimate" => cmd_estimate(&cfg)?,
        "scale" => cmd_scale(&cfg)?,
        "verify-bound" => cmd_verify_bound(&cfg)?,
        "rank-audit" => cmd_rank_audit(&cfg)?,
        other => unreachable!("unknown command {other}"),
    };
    let dir = out_dir(&cfg)?;
    write_json(&dir, "resolved_config.json", &cfg)?;
    write_json(&dir, "summary.json", &summary)?;
    Ok(summary)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (command, args) = match &cli.command {
        Command::Probe(a) => ("probe", a),
        Command::Estimate(a) => ("estimate", a),
        Command::Scale(a) => ("scale", a),
        Command::VerifyBound(a) => ("verify-bound", a),
        Command::RankAudit(a) => ("rank-audit", a),
    };
    match execute(command, args) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
