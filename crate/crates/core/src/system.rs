//! Nonlinear algebraic system over the real and imaginary parts of the
//! amplitudes.
//!
//! Variables are laid out as `x[2j] = Re a_j`, `x[2j+1] = Im a_j`. Every
//! equation is a quadratic form `Σ_rest |Σ_u c_u a_(rest|u)|² = b̃`, stored
//! symbolically through the entry's [`Readout`], so `f` and `J` cost
//! `O(equations · 2^n)` without dense storage.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::{outcome_probs, BasisSpec, Readout, Target};
use crate::plan::MeasurementPlan;
use crate::sampling::{EstimateMode, ProbabilityEstimate};
use crate::state::{qubits_for_len, StateVector};

pub fn state_to_vars(state: &StateVector) -> Vec<f64> {
    amps_to_vars(state.amps())
}

pub fn amps_to_vars(amps: &[Complex64]) -> Vec<f64> {
    amps.iter().flat_map(|a| [a.re, a.im]).collect()
}

/// Raw amplitudes of `x`; no normalization is applied.
pub fn vars_to_amps(x: &[f64]) -> Result<Vec<Complex64>> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("variable vector has odd length {}", x.len())));
    }
    Ok(x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

/// Validated state built from `x` (see [`StateVector::new`] for the norm rules).
pub fn vars_to_state(x: &[f64]) -> Result<StateVector> {
    StateVector::new(vars_to_amps(x)?)
}

/// Tangent of `x ↦ e^{iα}x` at `α = 0`: pairs `(−Im a_j, Re a_j)`.
pub fn phase_tangent(x: &[f64]) -> Vec<f64> {
    x.chunks_exact(2).flat_map(|p| [-p[1], p[0]]).collect()
}

#[derive(Debug, Clone)]
pub struct Equation {
    pub entry_id: usize,
    pub outcome: usize,
    pub label: String,
    /// Index into the system's readouts.
    block: usize,
}

#[derive(Debug, Clone)]
struct Block {
    spec: BasisSpec,
    readout: Readout,
}

#[derive(Debug, Clone)]
pub struct NonlinearSystem {
    n: usize,
    blocks: Vec<Block>,
    equations: Vec<Equation>,
    targets: Vec<f64>,
}

/// Builds the system for `plan`, taking right-hand sides from `estimates`
/// (matched by entry id).
pub fn build_nonlinear_system(plan: &MeasurementPlan, estimates: &[ProbabilityEstimate]) -> Result<NonlinearSystem> {
    let by_id: HashMap<usize, &ProbabilityEstimate> = estimates.iter().map(|e| (e.entry_id, e)).collect();
    let mut blocks = Vec::with_capacity(plan.len());
    let mut equations = Vec::new();
    let mut targets = Vec::new();
    for entry in &plan.entries {
        let est = by_id.get(&entry.id).ok_or(Error::MissingEstimate(entry.id))?;
        let readout = Readout::new(&entry.spec, plan.n)?;
        if est.probs.len() != readout.outcome_count() {
            return Err(Error::Dimension { expected: readout.outcome_count(), got: est.probs.len() });
        }
        if est.mode == EstimateMode::Empty {
            return Err(Error::InvalidArgument(format!("entry {} has no shots", entry.id)));
        }
        let labels = entry.spec.outcome_labels(plan.n);
        for (o, label) in labels.into_iter().enumerate() {
            equations.push(Equation { entry_id: entry.id, outcome: o, label, block: blocks.len() });
            targets.push(est.probs[o]);
        }
        blocks.push(Block { spec: entry.spec, readout });
    }
    Ok(NonlinearSystem { n: plan.n, blocks, equations, targets })
}

/// Analytic probabilities of every plan entry (exact mode, zero shots).
pub fn exact_estimates(state: &StateVector, plan: &MeasurementPlan) -> Result<Vec<ProbabilityEstimate>> {
    plan.entries
        .iter()
        .map(|e| Ok(ProbabilityEstimate::exact(e.id, e.spec.outcome_labels(plan.n), outcome_probs(state, &e.spec)?)))
        .collect()
}

impl NonlinearSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of real variables, `2^(n+1)`.
    pub fn var_count(&self) -> usize {
        2 << self.n
    }

    pub fn equation_count(&self) -> usize {
        self.equations.len()
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Same equations with a different right-hand side.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.targets.len() {
            return Err(Error::Dimension { expected: self.targets.len(), got: targets.len() });
        }
        Ok(NonlinearSystem { targets, ..self.clone() })
    }

    /// Reorders the equations (and targets) by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        NonlinearSystem {
            equations: perm.iter().map(|&i| self.equations[i].clone()).collect(),
            targets: perm.iter().map(|&i| self.targets[i]).collect(),
            ..self.clone()
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.var_count() {
            return Err(Error::Dimension { expected: self.var_count(), got: x.len() });
        }
        Ok(())
    }

    /// Left-hand sides `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let amps = vars_to_amps(x)?;
        let per_block: Vec<Vec<f64>> = self.blocks.iter().map(|b| b.readout.probabilities(&amps)).collect();
        Ok(self.equations.iter().map(|e| per_block[e.block][e.outcome]).collect())
    }

    /// `f(x) − b̃`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.eval(x)?;
        for (fi, bi) in f.iter_mut().zip(&self.targets) {
            *fi -= bi;
        }
        Ok(f)
    }

    /// Analytic Jacobian `∂f_i/∂x_j` (equations × variables).
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let amps = vars_to_amps(x)?;
        let dim = amps.len();
        let grads: Vec<Vec<DVector<f64>>> = self
            .blocks
            .iter()
            .map(|b| {
                let r = &b.readout;
                (0..r.outcome_count())
                    .map(|o| {
                        let mut g = DVector::zeros(2 * dim);
                        for base in r.bases(dim) {
                            let z = r.project(o, base, &amps);
                            for &(u, c) in &r.rows[o] {
                                let idx = base | r.offsets[u];
                                let w = z.conj() * c;
                                g[2 * idx] += 2.0 * w.re;
                                g[2 * idx + 1] -= 2.0 * w.im;
                            }
                        }
                        g
                    })
                    .collect()
            })
            .collect();
        let mut jac = DMatrix::zeros(self.equations.len(), 2 * dim);
        for (i, e) in self.equations.iter().enumerate() {
            jac.row_mut(i).copy_from(&grads[e.block][e.outcome].transpose());
        }
        Ok(jac)
    }

    /// Equation manifest with columns `eq_id, kind, qubits, theta, phi, outcome, target`.
    pub fn write_manifest<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eq_id", "kind", "qubits", "theta", "phi", "outcome", "target"])?;
        for (i, e) in self.equations.iter().enumerate() {
            let spec = &self.blocks[e.block].spec;
            let (kind, qubits) = match spec.target {
                Target::Single(k) if spec.is_z() => ("z", k.to_string()),
                Target::Single(k) => ("rotated", k.to_string()),
                Target::Pair(k, l) => ("pair", format!("{k}-{l}")),
                Target::All => ("all", "*".to_string()),
            };
            let (theta, phi) = match (spec.target, spec.second) {
                (Target::Pair(..), Some(s)) => (format!("{};{}", spec.theta, s.theta), format!("{};{}", spec.phi, s.phi)),
                _ => (spec.theta.to_string(), spec.phi.to_string()),
            };
            w.write_record([
                i.to_string(),
                kind.to_string(),
                qubits,
                theta,
                phi,
                e.label.clone(),
                self.targets[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of qubits behind a variable vector of length `len`.
pub fn qubits_for_vars(len: usize) -> Option<usize> {
    len.is_multiple_of(2).then(|| qubits_for_len(len / 2)).flatten()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{extended_plan, method1_plan, pairwise_pauli_plan, AngleSchedule};
    use crate::state::NamedState;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn central_difference(sys: &NonlinearSystem, x: &[f64], h: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(sys.equation_count(), x.len());
        for j in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (sys.eval(&xp).unwrap(), sys.eval(&xm).unwrap());
            for i in 0..fp.len() {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn var_layout() {
        let bell = StateVector::named(&NamedState::Bell, 2).unwrap();
        let h = FRAC_1_SQRT_2;
        assert_eq!(state_to_vars(&bell), vec![h, 0.0, 0.0, 0.0, 0.0, 0.0, h, 0.0]);
        let s = StateVector::random(3, 4).unwrap();
        assert_eq!(vars_to_state(&state_to_vars(&s)).unwrap(), s);
        assert!(vars_to_amps(&[1.0, 2.0, 3.0]).is_err());
        assert!(matches!(vars_to_state(&[0.0; 8]), Err(Error::ZeroVector)));
        assert_eq!(qubits_for_vars(16), Some(3));
        assert_eq!(qubits_for_vars(6), None);
    }

    #[test]
    fn method1_has_2_pow_n_plus_1_equations() {
        let plan = method1_plan(3, &AngleSchedule::Uniform).unwrap();
        let s = StateVector::random(3, 1).unwrap();
        let sys = build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap();
        assert_eq!(sys.equation_count(), 16);
        assert_eq!(sys.var_count(), 16);
        let r = sys.residual(&state_to_vars(&s)).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn bell_z_rows() {
        let bell = StateVector::named(&NamedState::Bell, 2).unwrap();
        let plan = crate::plan::linear_plan(2, false).unwrap();
        let sys = build_nonlinear_system(&plan, &exact_estimates(&bell, &plan).unwrap()).unwrap();
        let f = sys.eval(&state_to_vars(&bell)).unwrap();
        for v in f {
            assert!((v - 0.5).abs() < 1e-15);
        }
        // p_0^1 = |a00|^2 + |a01|^2 by hand
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let f = sys.eval(&x).unwrap();
        assert!((f[0] - (0.01 + 0.04 + 0.09 + 0.16)).abs() < 1e-15);
        assert!((f[2] - (0.01 + 0.04 + 0.25 + 0.36)).abs() < 1e-15);
    }

    #[test]
    fn missing_or_mismatched_estimates() {
        let plan = method1_plan(2, &AngleSchedule::Uniform).unwrap();
        let s = StateVector::random(2, 1).unwrap();
        let mut est = exact_estimates(&s, &plan).unwrap();
        est.pop();
        assert!(matches!(build_nonlinear_system(&plan, &est), Err(Error::MissingEstimate(3))));
        let mut est = exact_estimates(&s, &plan).unwrap();
        est[0].probs.push(0.0);
        assert!(matches!(build_nonlinear_system(&plan, &est), Err(Error::Dimension { .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for (i, n) in [1usize, 2, 3].into_iter().enumerate() {
            let s = StateVector::random(n, 30 + i as u64).unwrap();
            let plan = pairwise_pauli_plan(n).unwrap();
            let sys = build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap();
            let x = state_to_vars(&s);
            let diff = sys.jacobian(&x).unwrap() - central_difference(&sys, &x, 1e-5);
            assert!(diff.amax() < 1e-8, "n={n}: {}", diff.amax());
        }
    }

    #[test]
    fn phase_direction_is_null() {
        let s = StateVector::random(3, 8).unwrap();
        let plan = extended_plan(3, &[vec![0.3, 0.9]], &[0.0, 1.1]).unwrap();
        let sys = build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap();
        let x = state_to_vars(&s);
        let t = DVector::from_vec(phase_tangent(&x));
        assert!((sys.jacobian(&x).unwrap() * t).amax() < 1e-10);
    }

    #[test]
    fn manifest_has_one_row_per_equation() {
        let plan = method1_plan(2, &AngleSchedule::Uniform).unwrap();
        let s = StateVector::random(2, 1).unwrap();
        let sys = build_nonlinear_system(&plan, &exact_estimates(&s, &plan).unwrap()).unwrap();
        let mut buf = Vec::new();
        sys.write_manifest(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.lines().nth(1).unwrap().starts_with("0,z,1,0,0,0,"));
        assert!(text.lines().nth(5).unwrap().starts_with("4,rotated,1,"));
    }
}
