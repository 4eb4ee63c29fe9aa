//! Probability-level linear systems built from marginal readouts, and their
//! minimum-norm least-squares solution.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::{svd_sorted, RANK_RTOL};
use crate::error::{Error, Result};
use crate::measurement::Target;
use crate::plan::{linear_plan, MeasurementPlan};
use crate::sampling::ProbabilityEstimate;
use crate::state::qubit_bit;

/// `A p = rhs` with the outcome probabilities `p` as unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `p_b^k` for marginal rows, `p_bc^{1,2}` for joint rows.
    pub row_labels: Vec<String>,
}

/// Coefficient rows in printed order: for each qubit `k`, outcome 0 then 1;
/// then, with `include_joint`, the `(0,0)` and `(0,1)` rows of qubits (1, 2).
pub fn linear_matrix(n: usize, include_joint: bool) -> (DMatrix<f64>, Vec<String>) {
    let dim = 1usize << n;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for k in 1..=n {
        for b in 0..2 {
            rows.push((0..dim).map(|j| f64::from(u8::from(qubit_bit(j, k, n) == b))).collect());
            labels.push(format!("p_{b}^{k}"));
        }
    }
    if include_joint {
        for c in 0..2 {
            rows.push(
                (0..dim)
                    .map(|j| f64::from(u8::from(qubit_bit(j, 1, n) == 0 && qubit_bit(j, 2, n) == c)))
                    .collect(),
            );
            labels.push(format!("p_0{c}^{{1,2}}"));
        }
    }
    let matrix = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    (matrix, labels)
}

/// Assembles the 2-qubit (4×4) or 3-qubit (6×8, or 8×8 with the joint rows)
/// system. `estimates` must follow [`linear_plan`]`(n, include_joint)`.
pub fn build_linear_system(n: usize, include_joint: bool, estimates: &[ProbabilityEstimate]) -> Result<LinearSystem> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("linear systems are defined for 2 or 3 qubits, got {n}")));
    }
    let plan = linear_plan(n, include_joint)?;
    let rhs = linear_rhs(&plan, estimates)?;
    let (matrix, row_labels) = linear_matrix(n, include_joint);
    Ok(LinearSystem { n, matrix, rhs: DVector::from_vec(rhs), row_labels })
}

fn linear_rhs(plan: &MeasurementPlan, estimates: &[ProbabilityEstimate]) -> Result<Vec<f64>> {
    let by_id: HashMap<usize, &ProbabilityEstimate> = estimates.iter().map(|e| (e.entry_id, e)).collect();
    let mut rhs = Vec::new();
    for entry in &plan.entries {
        let est = by_id.get(&entry.id).ok_or(Error::MissingEstimate(entry.id))?;
        let used = match entry.spec.target {
            Target::Single(_) => 2,
            // only the (0,0) and (0,1) outcomes enter the square system
            Target::Pair(..) => 2,
            Target::All => unreachable!("linear plans have no full readout"),
        };
        if est.probs.len() < used {
            return Err(Error::Dimension { expected: used, got: est.probs.len() });
        }
        rhs.extend_from_slice(&est.probs[..used]);
    }
    Ok(rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearSolution {
    /// Minimum-norm least-squares solution before clipping.
    pub raw: Vec<f64>,
    /// `raw` with negatives clipped to 0 and renormalized when clipping occurred.
    pub probs: Vec<f64>,
    /// Largest amount any entry moved during clipping.
    pub clip: f64,
    pub residual_norm: f64,
    pub rank: usize,
    /// `false` when the matrix has a null space, i.e. other probability
    /// vectors fit the right-hand side equally well.
    pub unique: bool,
    /// `‖A⁺‖₂`.
    pub pinv_norm: f64,
}

pub fn solve_linear(system: &LinearSystem) -> LinearSolution {
    let a = &system.matrix;
    let (_, sigma, _) = svd_sorted(a);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cut = RANK_RTOL * smax;
    let rank = sigma.iter().filter(|&&s| s > cut).count();
    let pinv = a.clone().svd(true, true).pseudo_inverse(cut).expect("U and V were computed");
    let raw = &pinv * &system.rhs;
    let residual_norm = (a * &raw - &system.rhs).norm();
    let mut probs: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
    let clip = raw.iter().map(|&p| (-p).max(0.0)).fold(0.0, f64::max);
    if clip > 0.0 {
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
    }
    LinearSolution {
        raw: raw.iter().copied().collect(),
        probs,
        clip,
        residual_norm,
        rank,
        unique: rank == a.ncols(),
        pinv_norm: if rank == 0 { f64::INFINITY } else { 1.0 / sigma[rank - 1] },
    }
}
