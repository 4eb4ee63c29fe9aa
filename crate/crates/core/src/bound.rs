//! Empirical check of the first-order perturbation bound
//! `‖x̃ − x‖ ≤ ‖J⁺‖ ‖b̃ − b‖` for the amplitude system.
//!
//! The perturbed system is solved starting from the true `x`, so the solver
//! tracks the nearby root. When `J` is rank deficient the bound is only
//! meaningful for perturbations inside the range of `J`; anything else is
//! reported as not applicable.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{svd_sorted, JacobianDiagnostics, RANK_RTOL};
use crate::error::Result;
use crate::metrics::aligned_distance;
use crate::seed;
use crate::solver::{levenberg_marquardt, LmOptions};
use crate::system::{vars_to_amps, NonlinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    /// Slack on the right-hand side for second-order terms.
    pub kappa: f64,
    /// Perturbations with more than this fraction of their norm outside the
    /// range of `J` are not covered by the bound.
    pub range_tol: f64,
    pub lm: LmOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions { kappa: 1.1, range_tol: 1e-6, lm: LmOptions { restarts: 1, ..LmOptions::default() } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated,
    NotApplicable,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `min_α ‖x̃ − e^{iα}x‖`.
    pub lhs: f64,
    /// `‖J⁺‖ ‖b̃ − b‖` with `J` taken at the true `x`.
    pub rhs: f64,
    pub perturbation_norm: f64,
    pub jinv_norm: f64,
    pub numeric_rank: usize,
    /// Share of the perturbation's norm lying outside the range of `J`.
    pub off_range_fraction: f64,
    pub verdict: Verdict,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Orthonormal basis of the range of `J(x)`, one column per nonzero singular value.
fn range_basis(system: &NonlinearSystem, x: &[f64]) -> Result<(nalgebra::DMatrix<f64>, JacobianDiagnostics)> {
    let jac = system.jacobian(x)?;
    let (u, sigma, _) = svd_sorted(&jac);
    let diag = JacobianDiagnostics::from_singular_values(sigma);
    let basis = u.columns(0, diag.numeric_rank).into_owned();
    Ok((basis, diag))
}

/// Solves the system with right-hand side `b_perturbed` from `x_true` and
/// compares the displacement with the bound.
pub fn check_bound(system: &NonlinearSystem, x_true: &[f64], b_perturbed: &[f64], opts: &BoundOptions) -> Result<BoundCheck> {
    let (basis, diag) = range_basis(system, x_true)?;
    let delta_b = DVector::from_iterator(
        b_perturbed.len(),
        b_perturbed.iter().zip(system.targets()).map(|(p, b)| p - b),
    );
    let perturbation_norm = delta_b.norm();
    let in_range = &basis * (basis.transpose() * &delta_b);
    let off_range_fraction =
        if perturbation_norm > 0.0 { (&delta_b - in_range).norm() / perturbation_norm } else { 0.0 };
    let rhs = diag.jinv_norm * perturbation_norm;

    let perturbed = system.with_targets(b_perturbed.to_vec())?;
    let run = levenberg_marquardt(&perturbed, x_true, &opts.lm)?;
    let diverged = !run.residual_norm.is_finite() || run.stop == crate::solver::StopReason::Diverged;
    let lhs = if diverged {
        f64::INFINITY
    } else {
        aligned_distance(&vars_to_amps(&run.x)?, &vars_to_amps(x_true)?)
    };

    let verdict = if diverged {
        Verdict::Diverged
    } else if off_range_fraction > opts.range_tol {
        Verdict::NotApplicable
    } else if lhs <= opts.kappa * rhs {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(BoundCheck {
        lhs,
        rhs,
        perturbation_norm,
        jinv_norm: diag.jinv_norm,
        numeric_rank: diag.numeric_rank,
        off_range_fraction,
        verdict,
    })
}

/// Which way to push the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Zero,
    /// Uniformly random direction inside the range of `J`.
    RowSpace,
    /// Left singular vector of the largest singular value.
    TopSingular,
    /// Random direction orthogonal to the range of `J`.
    Null,
}

/// Returns `b + magnitude · d` for a unit direction `d` of the requested
/// kind, or `None` when the kind does not exist (a full-range `J` has no
/// null direction).
pub fn perturb_targets(
    system: &NonlinearSystem,
    x_true: &[f64],
    kind: PerturbationKind,
    magnitude: f64,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let m = system.equation_count();
    let (basis, _) = range_basis(system, x_true)?;
    let mut rng = seed::rng(seed);
    let mut gaussian = |len: usize| DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)));
    let dir: DVector<f64> = match kind {
        PerturbationKind::Zero => DVector::zeros(m),
        PerturbationKind::TopSingular => {
            if basis.ncols() == 0 {
                return Ok(None);
            }
            basis.column(0).into_owned()
        }
        PerturbationKind::RowSpace => {
            let coeffs: DVector<f64> = gaussian(basis.ncols());
            let d = &basis * coeffs;
            let norm = d.norm();
            if norm == 0.0 {
                return Ok(None);
            }
            d / norm
        }
        PerturbationKind::Null => {
            if basis.ncols() >= m {
                return Ok(None);
            }
            let g: DVector<f64> = gaussian(m);
            let d = &g - &basis * (basis.transpose() * &g);
            let norm = d.norm();
            if norm <= RANK_RTOL * g.norm() {
                return Ok(None);
            }
            d / norm
        }
    };
    Ok(Some(system.targets().iter().zip(dir.iter()).map(|(b, d)| b + magnitude * d).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{method1_plan, pairwise_pauli_plan, AngleSchedule};
    use crate::state::StateVector;
    use crate::system::{build_nonlinear_system, exact_estimates, state_to_vars};

    fn setup(n: usize, seed: u64, pauli: bool) -> (NonlinearSystem, Vec<f64>) {
        let s = StateVector::random(n, seed).unwrap();
        let plan = if pauli { pairwise_pauli_plan(n).unwrap() } else { method1_plan(n, &AngleSchedule::Uniform).unwrap() };
        (build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap(), state_to_vars(&s))
    }

    #[test]
    fn zero_perturbation_holds_trivially() {
        let (sys, x) = setup(2, 1, false);
        let b = perturb_targets(&sys, &x, PerturbationKind::Zero, 1e-6, 0).unwrap().unwrap();
        let c = check_bound(&sys, &x, &b, &BoundOptions::default()).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds());
    }

    #[test]
    fn top_direction_matches_linear_prediction() {
        let (sys, x) = setup(3, 2, false);
        let diag = crate::diagnostics::jacobian_diagnostics(&sys, &x).unwrap();
        let b = perturb_targets(&sys, &x, PerturbationKind::TopSingular, 1e-6, 0).unwrap().unwrap();
        let c = check_bound(&sys, &x, &b, &BoundOptions::default()).unwrap();
        let predicted = 1e-6 / diag.sigma_max;
        assert!((c.lhs - predicted).abs() < 1e-3 * predicted, "{} vs {predicted}", c.lhs);
        assert!(c.holds());
    }

    #[test]
    fn row_space_perturbations_hold() {
        for seed in 0..10 {
            for pauli in [false, true] {
                let (sys, x) = setup(2, seed, pauli);
                let b = perturb_targets(&sys, &x, PerturbationKind::RowSpace, 1e-6, seed).unwrap().unwrap();
                let c = check_bound(&sys, &x, &b, &BoundOptions::default()).unwrap();
                assert!(c.holds(), "seed {seed} pauli {pauli}: {c:?}");
            }
        }
    }

    #[test]
    fn null_direction_is_not_applicable() {
        let (sys, x) = setup(3, 3, false);
        let b = perturb_targets(&sys, &x, PerturbationKind::Null, 1e-6, 9).unwrap().unwrap();
        let c = check_bound(&sys, &x, &b, &BoundOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::NotApplicable);
        assert!(c.off_range_fraction > 0.99);
    }
}
