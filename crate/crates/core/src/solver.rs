//! Multi-start Levenberg–Marquardt for the amplitude system.
//!
//! Each iteration solves the damped least-squares problem
//! `min ‖J δ + r‖² + λ‖δ‖²` by QR of the stacked matrix `[J; √λ I]`.
//! Accepted steps shrink λ by `lambda_down`, rejected ones grow it by
//! `lambda_up`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::JacobianDiagnostics;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seed;
use crate::state::{fix_gauge_in_place, StateVector};
use crate::system::{amps_to_vars, vars_to_amps, NonlinearSystem};

/// Residuals closer than this to the best one count as ties between restarts.
const RESTART_TIE: f64 = 1e-12;
/// Damping beyond this means no productive step exists.
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    /// Stop once `‖r‖∞ ≤ tol`.
    pub tol: f64,
    /// Stop once a step is shorter than this.
    pub step_tol: f64,
    pub max_iter: usize,
    pub lambda_init: f64,
    pub lambda_down: f64,
    pub lambda_up: f64,
    /// Number of starting points: the caller's `x0` plus `restarts - 1`
    /// Haar-random states. Zero behaves like one.
    pub restarts: usize,
    /// Seeds the random starting points.
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 500,
            lambda_init: 1e-3,
            lambda_down: 0.5,
            lambda_up: 4.0,
            restarts: 8,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    SmallStep,
    MaxIterations,
    Diverged,
}

/// One Levenberg–Marquardt run from one starting point.
#[derive(Debug, Clone)]
pub struct LmRun {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub residual_inf: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// `‖r‖₂` after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

impl LmRun {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::Tolerance | StopReason::SmallStep)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn damped_step(jac: &DMatrix<f64>, r: &[f64], lambda: f64) -> DVector<f64> {
    let (m, n) = jac.shape();
    let mut stacked = DMatrix::zeros(m + n, n);
    stacked.view_mut((0, 0), (m, n)).copy_from(jac);
    let s = lambda.sqrt();
    for i in 0..n {
        stacked[(m + i, i)] = s;
    }
    let mut rhs = DVector::zeros(m + n);
    for (i, v) in r.iter().enumerate() {
        rhs[i] = -v;
    }
    let qr = stacked.qr();
    let qtb = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qtb).unwrap_or_else(|| DVector::zeros(n))
}

/// Levenberg–Marquardt from a single starting point.
pub fn levenberg_marquardt(system: &NonlinearSystem, x0: &[f64], opts: &LmOptions) -> Result<LmRun> {
    let mut x = x0.to_vec();
    let mut r = system.residual(&x)?;
    let mut cost = l2(&r);
    let mut history = vec![cost];
    if !cost.is_finite() {
        return Ok(LmRun { residual_norm: cost, residual_inf: inf_norm(&r), x, iterations: 0, stop: StopReason::Diverged, history });
    }
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;
    let stop = 'outer: loop {
        if inf_norm(&r) <= opts.tol {
            break StopReason::Tolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        let jac = system.jacobian(&x)?;
        loop {
            let step = damped_step(&jac, &r, lambda);
            if step.norm() <= opts.step_tol {
                break 'outer StopReason::SmallStep;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let r_trial = system.residual(&trial)?;
            let c_trial = l2(&r_trial);
            if !c_trial.is_finite() {
                break 'outer StopReason::Diverged;
            }
            if c_trial < cost {
                x = trial;
                r = r_trial;
                cost = c_trial;
                history.push(cost);
                lambda *= opts.lambda_down;
                break;
            }
            lambda *= opts.lambda_up;
            if lambda > LAMBDA_MAX {
                break 'outer StopReason::SmallStep;
            }
        }
    };
    Ok(LmRun { residual_inf: inf_norm(&r), residual_norm: cost, x, iterations, stop, history })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Gauge-fixed solution.
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub residual_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub stop: StopReason,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub numeric_rank: usize,
    pub jinv_norm: f64,
    /// Numeric rank at least `N − 1` (the global phase is always free).
    pub identifiable: bool,
    /// Which start won; 0 is the caller's `x0`.
    pub best_start: usize,
    pub start_seeds: Vec<u64>,
    pub start_residuals: Vec<f64>,
    pub options: LmOptions,
}

/// Random starting point for restart `index`.
pub fn restart_point(n: usize, opts_seed: u64, index: usize) -> Vec<f64> {
    let s = StateVector::random(n, seed::derive_index(opts_seed, index as u64)).expect("n already validated");
    amps_to_vars(s.amps())
}

/// Multi-start solve. The lowest residual wins; near-ties go to the lowest
/// start index. The winner is gauge-fixed and diagnosed at its own Jacobian.
pub fn solve_nonlinear(system: &NonlinearSystem, x0: &[f64], opts: &LmOptions) -> Result<SolveReport> {
    if x0.len() != system.var_count() {
        return Err(Error::Dimension { expected: system.var_count(), got: x0.len() });
    }
    let starts = opts.restarts.max(1);
    let start_seeds: Vec<u64> = (0..starts).map(|i| if i == 0 { 0 } else { seed::derive_index(opts.seed, i as u64) }).collect();
    let runs: Vec<LmRun> = opts
        .exec
        .map(starts, |i| {
            let start = if i == 0 { x0.to_vec() } else { restart_point(system.n(), opts.seed, i) };
            levenberg_marquardt(system, &start, opts)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let finite = |run: &LmRun| run.stop != StopReason::Diverged && run.residual_norm.is_finite();
    let best_value = runs.iter().filter(|r| finite(r)).map(|r| r.residual_norm).fold(f64::INFINITY, f64::min);
    let best = runs
        .iter()
        .position(|r| finite(r) && r.residual_norm <= best_value + RESTART_TIE)
        .unwrap_or(0);
    let run = &runs[best];
    let diverged = !finite(run);

    let mut amps: Vec<Complex64> = vars_to_amps(&run.x)?;
    fix_gauge_in_place(&mut amps);
    let x = amps_to_vars(&amps);
    let diag = if diverged {
        JacobianDiagnostics::from_singular_values(vec![])
    } else {
        JacobianDiagnostics::from_matrix(&system.jacobian(&x)?)
    };
    Ok(SolveReport {
        residual_norm: run.residual_norm,
        residual_inf: run.residual_inf,
        iterations: run.iterations,
        converged: run.converged(),
        diverged,
        stop: run.stop,
        sigma_min: diag.sigma_min,
        sigma_max: diag.sigma_max,
        numeric_rank: diag.numeric_rank,
        jinv_norm: diag.jinv_norm,
        identifiable: diag.numeric_rank + 1 >= system.var_count(),
        best_start: best,
        start_seeds,
        start_residuals: runs.iter().map(|r| r.residual_norm).collect(),
        options: *opts,
        x,
    })
}
