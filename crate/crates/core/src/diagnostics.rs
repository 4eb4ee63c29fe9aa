//! Singular-value diagnostics of Jacobians.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::system::NonlinearSystem;

/// Singular values at or below `RANK_RTOL · σ_max` count as zero.
pub const RANK_RTOL: f64 = 1e-9;

/// Thin SVD with singular values sorted in descending order; `U` and `Vᵀ` are
/// permuted to match.
pub fn svd_sorted(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vt_sorted = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    (u_sorted, sigma, vt_sorted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianDiagnostics {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub numeric_rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value, zero or not.
    pub sigma_min: f64,
    /// `1/σ` of the smallest singular value above the rank cutoff: the
    /// pseudo-inverse norm `‖J⁺‖₂`.
    pub jinv_norm: f64,
}

impl JacobianDiagnostics {
    pub fn from_matrix(jac: &DMatrix<f64>) -> Self {
        let (_, sigma, _) = svd_sorted(jac);
        Self::from_singular_values(sigma)
    }

    pub fn from_singular_values(sigma: Vec<f64>) -> Self {
        let sigma_max = sigma.first().copied().unwrap_or(0.0);
        let cut = RANK_RTOL * sigma_max;
        let numeric_rank = sigma.iter().filter(|&&s| s > cut).count();
        let jinv_norm = if numeric_rank == 0 { f64::INFINITY } else { 1.0 / sigma[numeric_rank - 1] };
        JacobianDiagnostics {
            sigma_min: sigma.last().copied().unwrap_or(0.0),
            sigma_max,
            numeric_rank,
            jinv_norm,
            singular_values: sigma,
        }
    }

    /// Condition number over the nonzero spectrum, `σ_max · ‖J⁺‖`.
    pub fn condition(&self) -> f64 {
        self.sigma_max * self.jinv_norm
    }
}

/// SVD diagnostics of `J(x)`.
pub fn jacobian_diagnostics(system: &NonlinearSystem, x: &[f64]) -> Result<JacobianDiagnostics> {
    Ok(JacobianDiagnostics::from_matrix(&system.jacobian(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{method1_plan, AngleSchedule};
    use crate::state::StateVector;
    use crate::system::{build_nonlinear_system, exact_estimates, state_to_vars};

    #[test]
    fn identity_has_unit_inverse_norm() {
        let d = JacobianDiagnostics::from_matrix(&DMatrix::identity(5, 5));
        assert_eq!(d.numeric_rank, 5);
        assert!((d.jinv_norm - 1.0).abs() < 1e-15);
        assert!((d.condition() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let d = JacobianDiagnostics::from_matrix(&DMatrix::zeros(3, 4));
        assert_eq!(d.numeric_rank, 0);
        assert!(d.jinv_norm.is_infinite());
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let (u, s, vt) = svd_sorted(&a);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let back = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * &vt;
        assert!((back - a).amax() < 1e-12);
    }

    #[test]
    fn method1_rank_and_scaling() {
        let s = StateVector::random(3, 17).unwrap();
        let plan = method1_plan(3, &AngleSchedule::Uniform).unwrap();
        let sys = build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap();
        let x = state_to_vars(&s);
        let d = jacobian_diagnostics(&sys, &x).unwrap();
        assert!(d.numeric_rank <= 5, "rank {}", d.numeric_rank);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d2 = jacobian_diagnostics(&sys, &x2).unwrap();
        for (a, b) in d.singular_values.iter().zip(&d2.singular_values).take(d.numeric_rank) {
            assert!((2.0 * a - b).abs() < 1e-12 * b.max(1.0));
        }
    }
}
