//! End-to-end estimation pipelines, shot-budget scaling runs, perturbation
//! bound trials and Jacobian rank audits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bound::{perturb_targets, check_bound, BoundOptions, PerturbationKind, Verdict};
use crate::diagnostics::jacobian_diagnostics;
use crate::error::{Error, Result};
use crate::linear::{build_linear_system, solve_linear};
use crate::measurement::full_computational_probs;
use crate::metrics::{epsilon_for, naive_epsilon, ErrorReport, Metric};
use crate::par::Exec;
use crate::plan::{linear_plan, method1_plan, pairwise_pauli_plan, AngleSchedule, MeasurementPlan};
use crate::sampling::{estimate_plan, multinomial, shots_for_accuracy};
use crate::seed;
use crate::solver::{restart_point, solve_nonlinear, LmOptions};
use crate::state::StateVector;
use crate::system::{build_nonlinear_system, exact_estimates, state_to_vars, vars_to_amps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Full computational-basis readout, norms from `√p̂`.
    Naive,
    /// Z on every qubit plus rotated readouts of qubit 1.
    Method1,
    /// Local X/Y/Z plus Pauli pair readouts; informationally complete for
    /// generic pure states.
    Extended,
    /// Square 3-qubit probability system (single marginals plus one joint
    /// pair readout), solved by pseudo-inverse.
    Linear3q,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Naive, Scheme::Method1, Scheme::Extended, Scheme::Linear3q];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Naive => "naive",
            Scheme::Method1 => "method1",
            Scheme::Extended => "extended",
            Scheme::Linear3q => "linear3q",
        }
    }

    /// Plan measured by the scheme; `None` for the naive baseline.
    pub fn plan(self, n: usize, angles: &AngleSchedule) -> Result<Option<MeasurementPlan>> {
        match self {
            Scheme::Naive => Ok(None),
            Scheme::Method1 => method1_plan(n, angles).map(Some),
            Scheme::Extended => pairwise_pauli_plan(n).map(Some),
            Scheme::Linear3q => {
                if n != 3 {
                    return Err(Error::InvalidArgument(format!("scheme linear3q needs n = 3, got {n}")));
                }
                linear_plan(3, true).map(Some)
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme `{s}` (naive, method1, extended, linear3q)")))
    }
}

/// Full computational-basis sampling: empirical frequencies and their square roots.
pub fn naive_estimate(state: &StateVector, shots: u64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if shots == 0 {
        return Err(Error::InvalidArgument("naive estimate needs at least one shot".into()));
    }
    let counts = multinomial(&full_computational_probs(state), shots, seed)?;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
    let norms = probs.iter().map(|p| p.sqrt()).collect();
    Ok((probs, norms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scheme: Scheme,
    pub metric: Metric,
    pub delta: f64,
    /// Global failure probability, split evenly across plan entries.
    pub fail: f64,
    pub seed: u64,
    /// Shots per entry instead of the planned count; 0 means exact probabilities.
    pub shots_override: Option<u64>,
    pub angles: AngleSchedule,
    /// Plan with `‖J⁻¹‖` from a pilot solve instead of the true state.
    pub blind: bool,
    pub lm: LmOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: Scheme::Method1,
            metric: Metric::TotalVariation,
            delta: 0.1,
            fail: 0.05,
            seed: 0,
            shots_override: None,
            angles: AngleSchedule::Uniform,
            blind: false,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub scheme: Scheme,
    pub metric: Metric,
    pub delta: f64,
    pub fail: f64,
    /// Per-entry accuracy from the planner.
    pub planned_eps: f64,
    /// `‖J⁻¹‖` (or `‖A⁺‖` for the linear scheme) the planner used; 1 for naive.
    pub jinv_norm: f64,
    pub entries: usize,
    /// Planner shots per entry.
    pub planned_shots_per_entry: u64,
    pub planned_shots: u64,
    /// Shots actually drawn; 0 in exact mode.
    pub sampled_shots: u64,
    pub achieved: f64,
    pub within_target: bool,
    pub identifiable: Option<bool>,
    pub converged: Option<bool>,
    pub residual_norm: Option<f64>,
    pub seed: u64,
    pub wall_ms: f64,
}

impl ExperimentRecord {
    /// Copy with timing cleared, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        ExperimentRecord { wall_ms: 0.0, ..self.clone() }
    }
}

fn check_config(cfg: &PipelineConfig) -> Result<()> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", cfg.delta)));
    }
    if !(cfg.fail > 0.0 && cfg.fail < 1.0) {
        return Err(Error::InvalidArgument(format!("fail must lie in (0, 1), got {}", cfg.fail)));
    }
    if cfg.metric == Metric::AdditiveComplex && matches!(cfg.scheme, Scheme::Naive | Scheme::Linear3q) {
        return Err(Error::InvalidArgument(format!("scheme {} does not estimate phases", cfg.scheme)));
    }
    Ok(())
}

struct Budget {
    eps: f64,
    per_entry: u64,
}

fn budget(eps: f64, fail_per_entry: f64) -> Result<Budget> {
    // ε can exceed 1 for loose targets; one shot per entry is the floor
    let per_entry = if eps >= 1.0 { 1 } else { shots_for_accuracy(eps, fail_per_entry)? };
    Ok(Budget { eps, per_entry })
}

/// Total shots a scheme's planner asks for at `n` qubits with a given `‖J⁻¹‖`.
pub fn planned_total_shots(scheme: Scheme, metric: Metric, delta: f64, fail: f64, n: usize, jinv_norm: f64) -> Result<u64> {
    let (entries, eps) = match scheme.plan(n, &AngleSchedule::Uniform)? {
        None => (1, naive_epsilon(metric, delta, n)?),
        Some(p) => (p.len(), epsilon_for(metric, delta, n, jinv_norm)?),
    };
    let fail_per_entry = if scheme == Scheme::Naive { fail / (1u64 << n) as f64 } else { fail / entries as f64 };
    Ok(budget(eps, fail_per_entry)?.per_entry * entries as u64)
}

/// Plans shots, samples, solves and scores one scheme on `state`.
pub fn run_pipeline(state: &StateVector, cfg: &PipelineConfig) -> Result<ExperimentRecord> {
    check_config(cfg)?;
    let start = Instant::now();
    let n = state.n();
    let mut rec = match cfg.scheme {
        Scheme::Naive => run_naive(state, cfg)?,
        Scheme::Method1 | Scheme::Extended => run_nonlinear(state, cfg)?,
        Scheme::Linear3q => run_linear(state, cfg)?,
    };
    rec.n = n;
    rec.within_target = rec.achieved <= cfg.delta;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

fn blank_record(cfg: &PipelineConfig) -> ExperimentRecord {
    ExperimentRecord {
        n: 0,
        scheme: cfg.scheme,
        metric: cfg.metric,
        delta: cfg.delta,
        fail: cfg.fail,
        planned_eps: 0.0,
        jinv_norm: 1.0,
        entries: 0,
        planned_shots_per_entry: 0,
        planned_shots: 0,
        sampled_shots: 0,
        achieved: f64::NAN,
        within_target: false,
        identifiable: None,
        converged: None,
        residual_norm: None,
        seed: cfg.seed,
        wall_ms: 0.0,
    }
}

fn run_naive(state: &StateVector, cfg: &PipelineConfig) -> Result<ExperimentRecord> {
    let n = state.n();
    // every outcome probability must land within ε simultaneously
    let b = budget(naive_epsilon(cfg.metric, cfg.delta, n)?, cfg.fail / state.dim() as f64)?;
    let shots = cfg.shots_override.unwrap_or(b.per_entry);
    let probs = if shots == 0 {
        full_computational_probs(state)
    } else {
        naive_estimate(state, shots, seed::derive(cfg.seed, "naive"))?.0
    };
    let mut report = ErrorReport::from_probabilities(&probs, state)?;
    report.shots_total = shots;
    let mut rec = blank_record(cfg);
    rec.planned_eps = b.eps;
    rec.entries = 1;
    rec.planned_shots_per_entry = b.per_entry;
    rec.planned_shots = b.per_entry;
    rec.sampled_shots = shots;
    rec.achieved = report.metric(cfg.metric).expect("checked in check_config");
    Ok(rec)
}

fn run_linear(state: &StateVector, cfg: &PipelineConfig) -> Result<ExperimentRecord> {
    let plan = cfg.scheme.plan(state.n(), &cfg.angles)?.expect("linear scheme has a plan");
    let exact = build_linear_system(3, true, &exact_estimates(state, &plan)?)?;
    let pinv_norm = solve_linear(&exact).pinv_norm;
    let fail_per_entry = cfg.fail / plan.len() as f64;
    let b = budget(epsilon_for(cfg.metric, cfg.delta, state.n(), pinv_norm)?, fail_per_entry)?;
    let shots = cfg.shots_override.unwrap_or(b.per_entry);
    let plan = plan.with_uniform_shots(shots);
    let estimates = estimate_plan(state, &plan, seed::derive(cfg.seed, "sample"), fail_per_entry, cfg.lm.exec)?;
    let sol = solve_linear(&build_linear_system(3, true, &estimates)?);
    let report = ErrorReport::from_probabilities(&sol.probs, state)?;
    let mut rec = blank_record(cfg);
    rec.planned_eps = b.eps;
    rec.jinv_norm = pinv_norm;
    rec.entries = plan.len();
    rec.planned_shots_per_entry = b.per_entry;
    rec.planned_shots = b.per_entry * plan.len() as u64;
    rec.sampled_shots = plan.total_shots();
    rec.achieved = report.metric(cfg.metric).expect("checked in check_config");
    rec.identifiable = Some(sol.unique);
    rec.residual_norm = Some(sol.residual_norm);
    Ok(rec)
}

fn run_nonlinear(state: &StateVector, cfg: &PipelineConfig) -> Result<ExperimentRecord> {
    let n = state.n();
    let base = cfg.scheme.plan(n, &cfg.angles)?.expect("nonlinear schemes have a plan");
    let fail_per_entry = cfg.fail / base.len() as f64;
    let lm = LmOptions { seed: seed::derive(cfg.seed, "restarts"), ..cfg.lm };
    let x0 = restart_point(n, seed::derive(cfg.seed, "start"), 0);

    let sample_and_solve = |per_entry: u64, label: &str| -> Result<(MeasurementPlan, crate::solver::SolveReport)> {
        let plan = base.clone().with_uniform_shots(per_entry);
        let estimates = estimate_plan(state, &plan, seed::derive(cfg.seed, label), fail_per_entry, cfg.lm.exec)?;
        let system = build_nonlinear_system(&plan, &estimates)?;
        let report = solve_nonlinear(&system, &x0, &lm)?;
        Ok((plan, report))
    };

    let jinv_norm = if cfg.blind {
        // pilot at unit ‖J⁻¹‖, then re-plan once with the pilot solution's Jacobian
        let pilot = budget(epsilon_for(cfg.metric, cfg.delta, n, 1.0)?, fail_per_entry)?;
        let (_, report) = sample_and_solve(cfg.shots_override.unwrap_or(pilot.per_entry), "pilot")?;
        if report.diverged {
            return Err(Error::Diverged("pilot solve did not produce a finite solution".into()));
        }
        report.jinv_norm
    } else {
        let exact = build_nonlinear_system(&base, &exact_estimates(state, &base)?)?;
        jacobian_diagnostics(&exact, &state_to_vars(state))?.jinv_norm
    };
    let b = budget(epsilon_for(cfg.metric, cfg.delta, n, jinv_norm)?, fail_per_entry)?;
    let (plan, report) = sample_and_solve(cfg.shots_override.unwrap_or(b.per_entry), "sample")?;
    if report.diverged {
        return Err(Error::Diverged(format!("{} solve did not produce a finite solution", cfg.scheme)));
    }
    let mut err = ErrorReport::from_amplitudes(&vars_to_amps(&report.x)?, state)?;
    err.shots_total = plan.total_shots();
    let mut rec = blank_record(cfg);
    rec.planned_eps = b.eps;
    rec.jinv_norm = jinv_norm;
    rec.entries = plan.len();
    rec.planned_shots_per_entry = b.per_entry;
    rec.planned_shots = b.per_entry * plan.len() as u64;
    rec.sampled_shots = plan.total_shots();
    rec.achieved = err.metric(cfg.metric).expect("every metric is defined for amplitudes");
    rec.identifiable = Some(report.identifiable);
    rec.converged = Some(report.converged);
    rec.residual_norm = Some(report.residual_norm);
    Ok(rec)
}

/// Writes one JSON object per line.
pub fn write_json_lines<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Least-squares line through `(x, y)`; `None` with fewer than two distinct `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let k = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub ns: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub metric: Metric,
    pub deltas: Vec<f64>,
    /// Fixed per-entry shot counts to sweep instead of planning from δ.
    pub shots: Option<Vec<u64>>,
    pub fail: f64,
    /// States (and sampling streams) per grid point.
    pub seeds: usize,
    pub master_seed: u64,
    pub angles: AngleSchedule,
    pub lm: LmOptions,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            ns: vec![2, 3],
            schemes: vec![Scheme::Naive],
            metric: Metric::TotalVariation,
            deltas: vec![0.2, 0.1, 0.05],
            shots: None,
            fail: 0.05,
            seeds: 5,
            master_seed: 0,
            angles: AngleSchedule::Uniform,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub n: usize,
    pub scheme: Scheme,
    /// Slope of `ln(achieved)` against `ln(sampled shots)`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOutput {
    pub records: Vec<ExperimentRecord>,
    pub fits: Vec<SlopeFit>,
}

/// Runs every `(n, scheme, δ or shot count, seed)` combination. A state
/// depends only on `(n, seed index)`, so schemes are compared on the same
/// states.
pub fn scaling_experiment(cfg: &ScaleConfig, exec: Exec) -> Result<ScaleOutput> {
    if cfg.ns.iter().any(|&n| n == 0 || n > 6) {
        return Err(Error::InvalidArgument("scaling runs support 1 to 6 qubits".into()));
    }
    let levels: Vec<(f64, Option<u64>)> = match &cfg.shots {
        Some(shots) => shots.iter().map(|&s| (cfg.deltas.first().copied().unwrap_or(0.1), Some(s))).collect(),
        None => cfg.deltas.iter().map(|&d| (d, None)).collect(),
    };
    let mut jobs = Vec::new();
    for &n in &cfg.ns {
        for &scheme in &cfg.schemes {
            for (li, &(delta, shots)) in levels.iter().enumerate() {
                for s in 0..cfg.seeds {
                    jobs.push((n, scheme, li, delta, shots, s));
                }
            }
        }
    }
    let lm = LmOptions { exec: Exec::Sequential, ..cfg.lm };
    let records = exec
        .map_slice(&jobs, |&(n, scheme, li, delta, shots, s)| {
            let state = StateVector::random(n, seed::derive(cfg.master_seed, &format!("state/{n}/{s}")))?;
            let pcfg = PipelineConfig {
                scheme,
                metric: cfg.metric,
                delta,
                fail: cfg.fail,
                seed: seed::derive(cfg.master_seed, &format!("run/{n}/{scheme}/{li}/{s}")),
                shots_override: shots,
                angles: cfg.angles.clone(),
                blind: false,
                lm,
            };
            run_pipeline(&state, &pcfg)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut fits = Vec::new();
    for &n in &cfg.ns {
        for &scheme in &cfg.schemes {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.n == n && r.scheme == scheme && r.sampled_shots > 0 && r.achieved > 0.0)
                .map(|r| ((r.sampled_shots as f64).ln(), r.achieved.ln()))
                .collect();
            let fit = fit_line(&pts);
            fits.push(SlopeFit { n, scheme, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1), points: pts.len() });
        }
    }
    Ok(ScaleOutput { records, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub ns: Vec<usize>,
    /// Row-space trials.
    pub trials: usize,
    pub zero_trials: usize,
    pub null_trials: usize,
    pub magnitude: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub options: BoundOptions,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            ns: vec![2, 3],
            trials: 200,
            zero_trials: 1,
            null_trials: 1,
            magnitude: 1e-6,
            scheme: Scheme::Method1,
            master_seed: 0,
            options: BoundOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrial {
    pub trial: usize,
    pub n: usize,
    pub kind: PerturbationKind,
    pub state_seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub perturbation_norm: f64,
    pub jinv_norm: f64,
    pub numeric_rank: usize,
    pub off_range_fraction: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub trials: usize,
    pub holds: usize,
    pub violated: usize,
    pub not_applicable: usize,
    pub diverged: usize,
    /// `holds / (holds + violated + diverged)`.
    pub holds_fraction: f64,
}

impl BoundSummary {
    pub fn from_trials(trials: &[BoundTrial]) -> Self {
        let count = |v: Verdict| trials.iter().filter(|t| t.verdict == v).count();
        let (holds, violated, not_applicable, diverged) =
            (count(Verdict::Holds), count(Verdict::Violated), count(Verdict::NotApplicable), count(Verdict::Diverged));
        let applicable = holds + violated + diverged;
        BoundSummary {
            trials: trials.len(),
            holds,
            violated,
            not_applicable,
            diverged,
            holds_fraction: if applicable == 0 { 0.0 } else { holds as f64 / applicable as f64 },
        }
    }
}

/// Perturbation-bound trials. Trial `i` uses `ns[i % ns.len()]` qubits and a
/// random state seeded from `(master_seed, i)`.
pub fn verify_bound(cfg: &BoundConfig, exec: Exec) -> Result<Vec<BoundTrial>> {
    if cfg.ns.is_empty() {
        return Err(Error::InvalidArgument("no qubit counts given".into()));
    }
    if matches!(cfg.scheme, Scheme::Naive | Scheme::Linear3q) {
        return Err(Error::InvalidArgument(format!("scheme {} has no amplitude system", cfg.scheme)));
    }
    let kinds: Vec<PerturbationKind> = std::iter::repeat_n(PerturbationKind::RowSpace, cfg.trials)
        .chain(std::iter::repeat_n(PerturbationKind::Zero, cfg.zero_trials))
        .chain(std::iter::repeat_n(PerturbationKind::Null, cfg.null_trials))
        .collect();
    let trial_root = seed::derive(cfg.master_seed, "bound-trial");
    let options = BoundOptions { lm: LmOptions { restarts: 1, exec: Exec::Sequential, ..cfg.options.lm }, ..cfg.options };
    exec.map_slice(&kinds.iter().copied().enumerate().collect::<Vec<_>>(), |&(i, kind)| {
        let n = cfg.ns[i % cfg.ns.len()];
        let trial_seed = seed::derive_index(trial_root, i as u64);
        let state_seed = seed::derive(trial_seed, "state");
        let state = StateVector::random(n, state_seed)?;
        let plan = cfg.scheme.plan(n, &AngleSchedule::Uniform)?.expect("checked above");
        let system = build_nonlinear_system(&plan, &exact_estimates(&state, &plan)?)?;
        let x = state_to_vars(&state);
        let b = perturb_targets(&system, &x, kind, cfg.magnitude, seed::derive(trial_seed, "perturbation"))?;
        let trial = match b {
            Some(b) => {
                let c = check_bound(&system, &x, &b, &options)?;
                BoundTrial {
                    trial: i,
                    n,
                    kind,
                    state_seed,
                    lhs: c.lhs,
                    rhs: c.rhs,
                    perturbation_norm: c.perturbation_norm,
                    jinv_norm: c.jinv_norm,
                    numeric_rank: c.numeric_rank,
                    off_range_fraction: c.off_range_fraction,
                    verdict: c.verdict,
                }
            }
            None => {
                let d = jacobian_diagnostics(&system, &x)?;
                BoundTrial {
                    trial: i,
                    n,
                    kind,
                    state_seed,
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    perturbation_norm: f64::NAN,
                    jinv_norm: d.jinv_norm,
                    numeric_rank: d.numeric_rank,
                    off_range_fraction: f64::NAN,
                    verdict: Verdict::NotApplicable,
                }
            }
        };
        Ok(trial)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub n: usize,
    pub scheme: Scheme,
    pub seed_index: usize,
    pub state_seed: u64,
    pub equations: usize,
    pub variables: usize,
    pub numeric_rank: usize,
    pub sigma_max: f64,
    pub jinv_norm: f64,
    pub identifiable: bool,
}

/// Jacobian rank at random states for each `(n, scheme, seed)`. The state
/// depends only on `(n, seed index)`.
pub fn rank_audit(ns: &[usize], schemes: &[Scheme], seeds: usize, master_seed: u64, exec: Exec) -> Result<Vec<RankRow>> {
    let mut jobs = Vec::new();
    for &n in ns {
        for &scheme in schemes {
            if matches!(scheme, Scheme::Naive | Scheme::Linear3q) {
                return Err(Error::InvalidArgument(format!("scheme {scheme} has no amplitude system")));
            }
            for s in 0..seeds {
                jobs.push((n, scheme, s));
            }
        }
    }
    exec.map_slice(&jobs, |&(n, scheme, s)| {
        let state_seed = seed::derive(master_seed, &format!("rank/{n}/{s}"));
        let state = StateVector::random(n, state_seed)?;
        let plan = scheme.plan(n, &AngleSchedule::Uniform)?.expect("checked above");
        let system = build_nonlinear_system(&plan, &exact_estimates(&state, &plan)?)?;
        let d = jacobian_diagnostics(&system, &state_to_vars(&state))?;
        Ok(RankRow {
            n,
            scheme,
            seed_index: s,
            state_seed,
            equations: system.equation_count(),
            variables: system.var_count(),
            numeric_rank: d.numeric_rank,
            sigma_max: d.sigma_max,
            jinv_norm: d.jinv_norm,
            identifiable: d.numeric_rank + 1 >= system.var_count(),
        })
    })
    .into_iter()
    .collect()
}

/// Writes any serializable rows as CSV with a header.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
