//! Measurement plans: which settings are measured and with how many shots.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{Angles, BasisSpec};
use crate::state::MAX_QUBITS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: usize,
    #[serde(flatten)]
    pub spec: BasisSpec,
    pub shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    /// Z on every qubit plus `2^n − n` rotated readouts of qubit 1.
    Method1,
    /// Z on every qubit plus rotated single-qubit readouts anywhere.
    Extended,
    /// [`PlanKind::Extended`] plus product readouts on qubit pairs.
    PairwisePauli,
    /// Z on every qubit, optionally the computational pair (1, 2).
    Linear,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub n: usize,
    pub kind: PlanKind,
    /// Qubit-1 angles of a Method-1 plan, empty for other kinds.
    #[serde(default)]
    pub angles: Vec<f64>,
    pub entries: Vec<PlanEntry>,
}

/// How Method-1 picks its qubit-1 angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngleSchedule {
    /// `θ_m = mπ / (2(M+1))` for `m = 1..=M`.
    #[default]
    Uniform,
    Custom(Vec<f64>),
}

fn check_n(n: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(())
    } else {
        Err(Error::QubitCount(n))
    }
}

/// `M = ⌈2^n − n⌉`.
pub fn method1_angle_count(n: usize) -> usize {
    (1usize << n) - n
}

fn distinct_mod_pi(angles: &[f64]) -> bool {
    let reduced: Vec<f64> = angles.iter().map(|a| a.rem_euclid(PI)).collect();
    reduced.iter().enumerate().all(|(i, a)| {
        reduced[..i].iter().all(|b| {
            let d = (a - b).abs();
            d.min(PI - d) > 1e-12
        })
    })
}

impl MeasurementPlan {
    fn from_specs(n: usize, kind: PlanKind, angles: Vec<f64>, specs: Vec<BasisSpec>) -> Result<Self> {
        for s in &specs {
            s.validate(n)?;
        }
        let entries = specs.into_iter().enumerate().map(|(id, spec)| PlanEntry { id, spec, shots: 0 }).collect();
        Ok(MeasurementPlan { n, kind, angles, entries })
    }

    pub fn custom(n: usize, specs: Vec<BasisSpec>) -> Result<Self> {
        check_n(n)?;
        Self::from_specs(n, PlanKind::Custom, Vec::new(), specs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of equations (one per outcome of every entry).
    pub fn equation_count(&self) -> usize {
        self.entries.iter().map(|e| e.spec.outcome_count(self.n)).sum()
    }

    pub fn total_shots(&self) -> u64 {
        self.entries.iter().map(|e| e.shots).sum()
    }

    pub fn with_uniform_shots(mut self, shots: u64) -> Self {
        for e in &mut self.entries {
            e.shots = shots;
        }
        self
    }

    /// Appends product readouts on each of `pairs` for every `(first, second)` setting.
    pub fn with_pair_settings(mut self, pairs: &[(usize, usize)], settings: &[(Angles, Angles)]) -> Result<Self> {
        for &(k, l) in pairs {
            for &(a, b) in settings {
                let spec = BasisSpec::pair(k, l, a, b);
                spec.validate(self.n)?;
                let id = self.entries.len();
                self.entries.push(PlanEntry { id, spec, shots: 0 });
            }
        }
        if !pairs.is_empty() && !settings.is_empty() {
            self.kind = PlanKind::PairwisePauli;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: MeasurementPlan = serde_json::from_str(text)?;
        check_n(plan.n)?;
        for (i, e) in plan.entries.iter().enumerate() {
            if e.id != i {
                return Err(Error::InvalidArgument(format!("entry {i} carries id {}", e.id)));
            }
            e.spec.validate(plan.n)?;
        }
        Ok(plan)
    }
}

/// Z readout of every qubit, then qubit 1 in each basis of the schedule.
pub fn method1_plan(n: usize, schedule: &AngleSchedule) -> Result<MeasurementPlan> {
    check_n(n)?;
    let m = method1_angle_count(n);
    let angles = match schedule {
        AngleSchedule::Uniform => (1..=m).map(|i| i as f64 * PI / (2.0 * (m + 1) as f64)).collect::<Vec<_>>(),
        AngleSchedule::Custom(a) => {
            if a.len() != m {
                return Err(Error::InvalidArgument(format!("{n} qubits need {m} angles, got {}", a.len())));
            }
            a.clone()
        }
    };
    if !distinct_mod_pi(&angles) {
        return Err(Error::InvalidArgument("angles must be pairwise distinct modulo π".into()));
    }
    let specs = (1..=n).map(BasisSpec::z).chain(angles.iter().map(|&t| BasisSpec::single(1, t, 0.0))).collect();
    MeasurementPlan::from_specs(n, PlanKind::Method1, angles, specs)
}

/// Z on every qubit plus `(θ, φ)` readouts of qubit `k` for every angle in
/// `per_qubit_angles[k-1]` and every phase. A single angle list is applied to
/// all qubits.
pub fn extended_plan(n: usize, per_qubit_angles: &[Vec<f64>], phases: &[f64]) -> Result<MeasurementPlan> {
    check_n(n)?;
    let lists: Vec<&Vec<f64>> = match per_qubit_angles.len() {
        1 => vec![&per_qubit_angles[0]; n],
        len if len == n => per_qubit_angles.iter().collect(),
        len => {
            return Err(Error::InvalidArgument(format!("expected 1 or {n} angle lists, got {len}")));
        }
    };
    if phases.is_empty() {
        return Err(Error::InvalidArgument("phase list is empty".into()));
    }
    let mut specs: Vec<BasisSpec> = (1..=n).map(BasisSpec::z).collect();
    for (k, list) in lists.into_iter().enumerate() {
        for &theta in list {
            for &phi in phases {
                specs.push(BasisSpec::single(k + 1, theta, phi));
            }
        }
    }
    MeasurementPlan::from_specs(n, PlanKind::Extended, Vec::new(), specs)
}

/// Local Z/X/Y on every qubit plus all nine Pauli product readouts of every
/// qubit pair. For two qubits this is full Pauli tomography.
pub fn pairwise_pauli_plan(n: usize) -> Result<MeasurementPlan> {
    let plan = extended_plan(n, &[vec![FRAC_PI_4]], &[0.0, FRAC_PI_2])?;
    let paulis = [Angles::Z, Angles::X, Angles::Y];
    let settings: Vec<(Angles, Angles)> =
        paulis.iter().flat_map(|&a| paulis.iter().map(move |&b| (a, b))).collect();
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|k| (k + 1..=n).map(move |l| (k, l))).collect();
    plan.with_pair_settings(&pairs, &settings)
}

/// Plan behind the probability-level linear systems: Z on every qubit and,
/// with `include_joint`, the computational readout of qubits (1, 2).
pub fn linear_plan(n: usize, include_joint: bool) -> Result<MeasurementPlan> {
    check_n(n)?;
    let mut specs: Vec<BasisSpec> = (1..=n).map(BasisSpec::z).collect();
    if include_joint {
        if n < 2 {
            return Err(Error::InvalidArgument("joint readout needs at least 2 qubits".into()));
        }
        specs.push(BasisSpec::computational_pair(1, 2));
    }
    MeasurementPlan::from_specs(n, PlanKind::Linear, Vec::new(), specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Target;

    #[test]
    fn method1_counts() {
        let p = method1_plan(2, &AngleSchedule::Uniform).unwrap();
        assert_eq!(p.angles.len(), 2);
        assert_eq!(p.len(), 4);
        assert_eq!(p.entries.iter().filter(|e| e.spec.is_z()).count(), 2);
        let p = method1_plan(3, &AngleSchedule::Uniform).unwrap();
        assert_eq!(p.angles.len(), 5);
        assert_eq!(p.equation_count(), 16);
        for (m, a) in p.angles.iter().enumerate() {
            assert!((a - (m + 1) as f64 * PI / 12.0).abs() < 1e-15);
        }
        assert!(distinct_mod_pi(&p.angles));
        assert!(p.entries[3..].iter().all(|e| e.spec.target == Target::Single(1) && e.spec.phi == 0.0));
        assert!(method1_plan(0, &AngleSchedule::Uniform).is_err());
        assert!(method1_plan(13, &AngleSchedule::Uniform).is_err());
    }

    #[test]
    fn custom_schedule_checks() {
        assert!(method1_plan(2, &AngleSchedule::Custom(vec![0.1, 0.1 + PI])).is_err());
        assert!(method1_plan(2, &AngleSchedule::Custom(vec![0.1])).is_err());
        assert!(method1_plan(2, &AngleSchedule::Custom(vec![0.1, 0.2])).is_ok());
    }

    #[test]
    fn extended_counts() {
        let p = extended_plan(2, &[vec![FRAC_PI_4]], &[0.0, FRAC_PI_2]).unwrap();
        assert_eq!(p.len(), 6);
        assert!(extended_plan(2, &[vec![0.1], vec![0.2], vec![0.3]], &[0.0]).is_err());
        assert!(extended_plan(2, &[vec![0.1]], &[]).is_err());
        let p = pairwise_pauli_plan(2).unwrap();
        assert_eq!(p.len(), 2 + 4 + 9);
        assert_eq!(p.equation_count(), 2 * 6 + 4 * 9);
    }

    #[test]
    fn json_round_trip() {
        let p = pairwise_pauli_plan(3).unwrap().with_uniform_shots(100);
        let back = MeasurementPlan::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        let first = &v["entries"][0];
        assert_eq!(first["target"]["single"], 1);
        assert_eq!(first["shots"], 100);
        assert!(first.get("theta").is_some() && first.get("phi").is_some());
    }
}
