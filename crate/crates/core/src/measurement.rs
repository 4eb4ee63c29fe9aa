//! Born-rule probabilities for single-qubit rotated-basis readouts, product
//! readouts on qubit pairs, and full computational-basis readout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{qubit_bit, StateVector};

/// Rotation angles of a single-qubit basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
}

impl Angles {
    pub const Z: Angles = Angles { theta: 0.0, phi: 0.0 };
    pub const X: Angles = Angles { theta: std::f64::consts::FRAC_PI_4, phi: 0.0 };
    pub const Y: Angles = Angles { theta: std::f64::consts::FRAC_PI_4, phi: std::f64::consts::FRAC_PI_2 };

    pub fn new(theta: f64, phi: f64) -> Self {
        Angles { theta, phi }
    }
}

/// Which qubits a plan entry reads out. Qubit indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Single(usize),
    Pair(usize, usize),
    All,
}

/// One measurement setting.
///
/// For a pair target, `(theta, phi)` rotates the first qubit and `second`
/// (defaulting to the same angles) the second. `All` is always read out in the
/// computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub target: Target,
    pub theta: f64,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<Angles>,
}

impl BasisSpec {
    pub fn z(k: usize) -> Self {
        Self::single(k, 0.0, 0.0)
    }

    pub fn single(k: usize, theta: f64, phi: f64) -> Self {
        BasisSpec { target: Target::Single(k), theta, phi, second: None }
    }

    pub fn pair(k: usize, l: usize, first: Angles, second: Angles) -> Self {
        BasisSpec { target: Target::Pair(k, l), theta: first.theta, phi: first.phi, second: Some(second) }
    }

    pub fn computational_pair(k: usize, l: usize) -> Self {
        BasisSpec { target: Target::Pair(k, l), theta: 0.0, phi: 0.0, second: None }
    }

    pub fn all() -> Self {
        BasisSpec { target: Target::All, theta: 0.0, phi: 0.0, second: None }
    }

    pub fn angles(&self) -> Angles {
        Angles::new(self.theta, self.phi)
    }

    pub fn second_angles(&self) -> Angles {
        self.second.unwrap_or_else(|| self.angles())
    }

    pub fn is_z(&self) -> bool {
        matches!(self.target, Target::Single(_)) && self.theta == 0.0 && self.phi == 0.0
    }

    pub fn outcome_count(&self, n: usize) -> usize {
        match self.target {
            Target::Single(_) => 2,
            Target::Pair(..) => 4,
            Target::All => 1 << n,
        }
    }

    pub fn outcome_labels(&self, n: usize) -> Vec<String> {
        let width = match self.target {
            Target::Single(_) => 1,
            Target::Pair(..) => 2,
            Target::All => n,
        };
        (0..self.outcome_count(n)).map(|o| format!("{o:0width$b}")).collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |k: usize| {
            if (1..=n).contains(&k) {
                Ok(())
            } else {
                Err(Error::QubitIndex { index: k, n })
            }
        };
        match self.target {
            Target::Single(k) => check(k)?,
            Target::Pair(k, l) => {
                check(k)?;
                check(l)?;
                if k == l {
                    return Err(Error::SameQubit(k));
                }
            }
            Target::All => {}
        }
        let finite = self.theta.is_finite()
            && self.phi.is_finite()
            && self.second.is_none_or(|a| a.theta.is_finite() && a.phi.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("basis angles must be finite".into()));
        }
        Ok(())
    }
}

/// Basis vectors `v₀ = cosθ|0⟩ + e^{iφ} sinθ|1⟩`, `v₁ = sinθ|0⟩ − e^{iφ} cosθ|1⟩`.
pub fn basis_pair(theta: f64, phi: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    [[Complex64::new(c, 0.0), e * s], [Complex64::new(s, 0.0), -e * c]]
}

fn check_qubit(state: &StateVector, k: usize) -> Result<()> {
    if (1..=state.n()).contains(&k) {
        Ok(())
    } else {
        Err(Error::QubitIndex { index: k, n: state.n() })
    }
}

/// Computational-basis marginal of qubit `k`.
pub fn marginal_probs_z(state: &StateVector, k: usize) -> Result<(f64, f64)> {
    check_qubit(state, k)?;
    let n = state.n();
    let (mut p0, mut p1) = (0.0, 0.0);
    for (j, a) in state.amps().iter().enumerate() {
        if qubit_bit(j, k, n) == 0 {
            p0 += a.norm_sqr();
        } else {
            p1 += a.norm_sqr();
        }
    }
    Ok((p0, p1))
}

/// Outcome probabilities of qubit `k` read out in the `(theta, phi)` basis.
pub fn marginal_probs_basis(state: &StateVector, k: usize, theta: f64, phi: f64) -> Result<(f64, f64)> {
    check_qubit(state, k)?;
    let n = state.n();
    let bit = 1usize << (n - k);
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, -phi);
    let amps = state.amps();
    let (mut p0, mut p1) = (0.0, 0.0);
    for j in (0..amps.len()).filter(|j| j & bit == 0) {
        let (a0, a1) = (amps[j], amps[j | bit]);
        p0 += (a0 * c + e * a1 * s).norm_sqr();
        p1 += (a0 * s - e * a1 * c).norm_sqr();
    }
    Ok((p0, p1))
}

/// Computational-basis joint distribution of qubits `(k, l)` in the order
/// `00, 01, 10, 11` (first label bit is qubit `k`).
pub fn joint_probs_pair(state: &StateVector, k: usize, l: usize) -> Result<[f64; 4]> {
    check_qubit(state, k)?;
    check_qubit(state, l)?;
    if k == l {
        return Err(Error::SameQubit(k));
    }
    let n = state.n();
    let mut p = [0.0; 4];
    for (j, a) in state.amps().iter().enumerate() {
        p[2 * qubit_bit(j, k, n) + qubit_bit(j, l, n)] += a.norm_sqr();
    }
    Ok(p)
}

pub fn full_computational_probs(state: &StateVector) -> Vec<f64> {
    state.amps().iter().map(|a| a.norm_sqr()).collect()
}

/// Outcome distribution of any [`BasisSpec`], in `outcome_labels` order.
pub fn outcome_probs(state: &StateVector, spec: &BasisSpec) -> Result<Vec<f64>> {
    spec.validate(state.n())?;
    if spec.target == Target::All {
        return Ok(full_computational_probs(state));
    }
    let readout = Readout::new(spec, state.n())?;
    Ok(readout.probabilities(state.amps()))
}

/// Sparse linear description of a readout: outcome `o` has probability
/// `Σ_rest |Σ_(u, c) c · a[rest | offsets[u]]|²`, where `rest` ranges over
/// indices with every read-out qubit cleared and `u` over local bit patterns.
#[derive(Debug, Clone)]
pub struct Readout {
    pub(crate) mask: usize,
    pub(crate) offsets: Vec<usize>,
    pub(crate) rows: Vec<Vec<(usize, Complex64)>>,
}

impl Readout {
    pub fn new(spec: &BasisSpec, n: usize) -> Result<Self> {
        spec.validate(n)?;
        let qubits: Vec<usize> = match spec.target {
            Target::Single(k) => vec![k],
            Target::Pair(k, l) => vec![k, l],
            Target::All => (1..=n).collect(),
        };
        let q = qubits.len();
        let mask = qubits.iter().fold(0, |m, &k| m | 1 << (n - k));
        let offsets = (0..1usize << q)
            .map(|u| {
                qubits
                    .iter()
                    .enumerate()
                    .filter(|&(pos, _)| (u >> (q - 1 - pos)) & 1 == 1)
                    .fold(0, |acc, (_, &k)| acc | 1 << (n - k))
            })
            .collect();
        let rows = match spec.target {
            Target::All => (0..1usize << n).map(|o| vec![(o, Complex64::new(1.0, 0.0))]).collect(),
            Target::Single(_) => {
                let v = basis_pair(spec.theta, spec.phi);
                (0..2).map(|b| sparse_row((0..2).map(|u| (u, v[b][u].conj())))).collect()
            }
            Target::Pair(..) => {
                let first = spec.angles();
                let second = spec.second_angles();
                let va = basis_pair(first.theta, first.phi);
                let vb = basis_pair(second.theta, second.phi);
                (0..4)
                    .map(|o| {
                        let (b, c) = (o >> 1, o & 1);
                        sparse_row((0..4).map(|u| (u, (va[b][u >> 1] * vb[c][u & 1]).conj())))
                    })
                    .collect()
            }
        };
        Ok(Readout { mask, offsets, rows })
    }

    pub fn outcome_count(&self) -> usize {
        self.rows.len()
    }

    /// Indices with every read-out qubit cleared.
    pub(crate) fn bases(&self, dim: usize) -> impl Iterator<Item = usize> + '_ {
        (0..dim).filter(move |j| j & self.mask == 0)
    }

    /// Projected amplitude of outcome `o` on the block starting at `base`.
    #[inline]
    pub(crate) fn project(&self, o: usize, base: usize, amps: &[Complex64]) -> Complex64 {
        self.rows[o].iter().map(|&(u, c)| c * amps[base | self.offsets[u]]).sum()
    }

    pub fn probabilities(&self, amps: &[Complex64]) -> Vec<f64> {
        (0..self.rows.len())
            .map(|o| self.bases(amps.len()).map(|base| self.project(o, base, amps).norm_sqr()).sum())
            .collect()
    }
}

fn sparse_row(entries: impl Iterator<Item = (usize, Complex64)>) -> Vec<(usize, Complex64)> {
    entries.filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::NamedState;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn inner(a: &[Complex64; 2], b: &[Complex64; 2]) -> Complex64 {
        a[0].conj() * b[0] + a[1].conj() * b[1]
    }

    #[test]
    fn basis_pair_examples() {
        let [v0, v1] = basis_pair(0.0, 0.0);
        assert_eq!(v0, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert_eq!(v1[1], Complex64::new(-1.0, 0.0));

        let [v0, _] = basis_pair(FRAC_PI_4, 0.0);
        assert!((v0[0].re - FRAC_1_SQRT_2).abs() < 1e-15 && (v0[1].re - FRAC_1_SQRT_2).abs() < 1e-15);

        let [v0, v1] = basis_pair(FRAC_PI_4, FRAC_PI_2);
        assert!((v0[1] - Complex64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(inner(&v0, &v1).norm() < 1e-14);
    }

    #[test]
    fn basis_pair_is_orthonormal() {
        for i in 0..50 {
            let (t, p) = (0.37 * i as f64 - 3.0, 0.11 * i as f64);
            let [v0, v1] = basis_pair(t, p);
            assert!((inner(&v0, &v0).re - 1.0).abs() < 1e-14);
            assert!((inner(&v1, &v1).re - 1.0).abs() < 1e-14);
            assert!(inner(&v0, &v1).norm() < 1e-14);
        }
    }

    #[test]
    fn bell_and_basis_marginals() {
        let bell = StateVector::named(&NamedState::Bell, 2).unwrap();
        let (p0, p1) = marginal_probs_z(&bell, 1).unwrap();
        assert!((p0 - 0.5).abs() < 1e-15 && (p1 - 0.5).abs() < 1e-15);
        let zero = StateVector::named(&NamedState::Basis(0), 2).unwrap();
        assert_eq!(marginal_probs_z(&zero, 2).unwrap(), (1.0, 0.0));
        assert!(marginal_probs_z(&zero, 3).is_err());
        assert!(marginal_probs_z(&zero, 0).is_err());
    }

    #[test]
    fn z_marginal_brute_force() {
        let s = StateVector::random(3, 1).unwrap();
        let a = s.amps();
        // qubit 2 = middle bit: indices 000, 001, 100, 101
        let want: f64 = [0b000, 0b001, 0b100, 0b101].iter().map(|&j| a[j].norm_sqr()).sum();
        let (p0, p1) = marginal_probs_z(&s, 2).unwrap();
        assert!((p0 - want).abs() < 1e-12);
        assert!((p0 + p1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_marginals() {
        let s = StateVector::random(3, 5).unwrap();
        for k in 1..=3 {
            let z = marginal_probs_z(&s, k).unwrap();
            let r = marginal_probs_basis(&s, k, 0.0, 0.0).unwrap();
            assert!((z.0 - r.0).abs() < 1e-14 && (z.1 - r.1).abs() < 1e-14);
        }
        let ghz = StateVector::named(&NamedState::Ghz, 3).unwrap();
        let (p0, p1) = marginal_probs_basis(&ghz, 1, FRAC_PI_4, 0.0).unwrap();
        assert!((p0 - 0.5).abs() < 1e-14 && (p1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn angle_periodicity() {
        let s = StateVector::random(3, 9).unwrap();
        for k in 1..=3 {
            let a = marginal_probs_basis(&s, k, 0.4, 0.9).unwrap();
            let b = marginal_probs_basis(&s, k, 0.4 + std::f64::consts::PI, 0.9).unwrap();
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_pairs() {
        let ghz = StateVector::named(&NamedState::Ghz, 3).unwrap();
        let p = joint_probs_pair(&ghz, 1, 2).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0 && (p[3] - 0.5).abs() < 1e-15);
        let u = StateVector::named(&NamedState::Uniform, 3).unwrap();
        for q in joint_probs_pair(&u, 1, 2).unwrap() {
            assert!((q - 0.25).abs() < 1e-15);
        }
        assert!(matches!(joint_probs_pair(&u, 2, 2), Err(Error::SameQubit(2))));

        let s = StateVector::random(3, 3).unwrap();
        let a = s.amps();
        let mut want = [0.0; 4];
        for (j, amp) in a.iter().enumerate() {
            want[2 * (j >> 2) + (j & 1)] += amp.norm_sqr();
        }
        let got = joint_probs_pair(&s, 1, 3).unwrap();
        for i in 0..4 {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
        // marginalizes to the single-qubit marginals
        let (p0, _) = marginal_probs_z(&s, 1).unwrap();
        assert!((got[0] + got[1] - p0).abs() < 1e-12);
    }

    #[test]
    fn full_probs() {
        let bell = StateVector::named(&NamedState::Bell, 2).unwrap();
        let p = full_computational_probs(&bell);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0 && (p[3] - 0.5).abs() < 1e-15);
        let b5 = StateVector::named(&NamedState::Basis(5), 3).unwrap();
        assert_eq!(full_computational_probs(&b5), vec![0., 0., 0., 0., 0., 1., 0., 0.]);
        let s = StateVector::random(2, 9).unwrap();
        assert!((full_computational_probs(&s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn readout_agrees_with_direct_formulas() {
        let s = StateVector::random(4, 21).unwrap();
        for k in 1..=4 {
            let direct = marginal_probs_basis(&s, k, 0.7, -1.3).unwrap();
            let generic = outcome_probs(&s, &BasisSpec::single(k, 0.7, -1.3)).unwrap();
            assert!((direct.0 - generic[0]).abs() < 1e-14 && (direct.1 - generic[1]).abs() < 1e-14);
            for l in (1..=4).filter(|&l| l != k) {
                let direct = joint_probs_pair(&s, k, l).unwrap();
                let generic = outcome_probs(&s, &BasisSpec::computational_pair(k, l)).unwrap();
                for o in 0..4 {
                    assert!((direct[o] - generic[o]).abs() < 1e-14);
                }
            }
        }
        let all = outcome_probs(&s, &BasisSpec::all()).unwrap();
        assert_eq!(all, full_computational_probs(&s));
    }

    #[test]
    fn labels_and_validation() {
        assert_eq!(BasisSpec::z(1).outcome_labels(3), vec!["0", "1"]);
        assert_eq!(BasisSpec::computational_pair(1, 2).outcome_labels(3), vec!["00", "01", "10", "11"]);
        assert_eq!(BasisSpec::all().outcome_labels(2), vec!["00", "01", "10", "11"]);
        assert!(BasisSpec::z(4).validate(3).is_err());
        assert!(BasisSpec::computational_pair(2, 2).validate(3).is_err());
        assert!(BasisSpec::single(1, f64::NAN, 0.0).validate(3).is_err());
    }
}
