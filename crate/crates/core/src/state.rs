//! Pure n-qubit states.
//!
//! Amplitudes are indexed by bitstrings `i₁i₂…iₙ` with qubit 1 as the most
//! significant bit, so index `j` has qubit `k` in bit `n - k`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MAX_QUBITS: usize = 12;

/// Deviation of the norm from 1 that is silently repaired by [`StateVector::new`].
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Relative slack used to call two magnitudes a tie when fixing the gauge.
const GAUGE_TIE: f64 = 1e-12;

/// A normalized pure state on `n` qubits. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    n: usize,
    amps: Vec<[f64; 2]>,
}

impl TryFrom<StateJson> for StateVector {
    type Error = Error;

    fn try_from(raw: StateJson) -> Result<Self> {
        let amps: Vec<Complex64> = raw.amps.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        let state = StateVector::new(amps)?;
        if state.n != raw.n {
            return Err(Error::Dimension { expected: 1 << raw.n, got: state.dim() });
        }
        Ok(state)
    }
}

impl From<StateVector> for StateJson {
    fn from(s: StateVector) -> Self {
        StateJson { n: s.n, amps: s.amps.iter().map(|a| [a.re, a.im]).collect() }
    }
}

/// Number of qubits for a vector of length `len`, if `len` is a power of two ≥ 2.
pub fn qubits_for_len(len: usize) -> Option<usize> {
    (len >= 2 && len.is_power_of_two()).then(|| len.trailing_zeros() as usize)
}

/// Bit of qubit `k` (1-based, qubit 1 most significant) inside basis index `j`.
#[inline]
pub fn qubit_bit(j: usize, k: usize, n: usize) -> usize {
    (j >> (n - k)) & 1
}

/// Multiplies `amps` by a global phase so that the largest-magnitude entry
/// (lowest index among ties) becomes real and nonnegative.
pub fn fix_gauge_in_place(amps: &mut [Complex64]) {
    let max = amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = amps
        .iter()
        .position(|a| a.norm() >= max * (1.0 - GAUGE_TIE))
        .expect("maximum exists");
    let a = amps[pivot];
    if a.im == 0.0 && a.re >= 0.0 {
        return;
    }
    let r = a.norm();
    let rot = a.conj() / r;
    for z in amps.iter_mut() {
        *z *= rot;
    }
    amps[pivot] = Complex64::new(r, 0.0);
}

impl StateVector {
    /// Validates and wraps an amplitude vector. Norm errors up to
    /// [`RENORMALIZE_TOLERANCE`] are repaired; larger ones are rejected.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let n = qubits_for_len(amps.len()).ok_or(Error::BadLength(amps.len()))?;
        if n > MAX_QUBITS {
            return Err(Error::QubitCount(n));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let dev = (norm - 1.0).abs();
        if dev > RENORMALIZE_TOLERANCE {
            return Err(Error::NotNormalized(dev));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(StateVector { n, amps })
    }

    /// Haar-random state: independent standard normals for every real and
    /// imaginary part, then normalized.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        let mut rng = seed::rng(seed);
        let mut amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { n, amps })
    }

    pub fn named(name: &NamedState, n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::QubitCount(n));
        }
        let dim = 1usize << n;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        match *name {
            NamedState::Basis(k) => {
                if k >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "basis index {k} out of range for {n} qubits"
                    )));
                }
                amps[k] = Complex64::new(1.0, 0.0);
            }
            NamedState::Uniform => {
                let v = 1.0 / (dim as f64).sqrt();
                amps.fill(Complex64::new(v, 0.0));
            }
            NamedState::Bell => {
                if n != 2 {
                    return Err(Error::InvalidArgument(format!("bell state needs n = 2, got {n}")));
                }
                amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
                amps[3] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            }
            NamedState::Ghz => {
                amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
                amps[dim - 1] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            }
            NamedState::W => {
                let v = 1.0 / (n as f64).sqrt();
                for k in 0..n {
                    amps[1 << k] = Complex64::new(v, 0.0);
                }
            }
        }
        Ok(StateVector { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    /// Global-phase representative: largest amplitude real and nonnegative.
    pub fn fix_gauge(&self) -> StateVector {
        let mut amps = self.amps.clone();
        fix_gauge_in_place(&mut amps);
        StateVector { n: self.n, amps }
    }

    /// `e^{iα}·self`.
    pub fn with_global_phase(&self, alpha: f64) -> StateVector {
        let rot = Complex64::from_polar(1.0, alpha);
        StateVector { n: self.n, amps: self.amps.iter().map(|a| a * rot).collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Canonical states available by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedState {
    Basis(usize),
    Uniform,
    Bell,
    Ghz,
    W,
}

impl FromStr for NamedState {
    type Err = Error;

    /// Accepts `uniform`, `bell`, `ghz`, `w`, and `basis:K` / `basis(K)`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let named = match lower.as_str() {
            "uniform" => NamedState::Uniform,
            "bell" => NamedState::Bell,
            "ghz" => NamedState::Ghz,
            "w" => NamedState::W,
            other => {
                let idx = other
                    .strip_prefix("basis:")
                    .or_else(|| other.strip_prefix("basis(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| Error::UnknownState(s.to_string()))?;
                NamedState::Basis(idx.parse().map_err(|_| Error::UnknownState(s.to_string()))?)
            }
        };
        Ok(named)
    }
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NamedState::Basis(k) => write!(f, "basis:{k}"),
            NamedState::Uniform => f.write_str("uniform"),
            NamedState::Bell => f.write_str("bell"),
            NamedState::Ghz => f.write_str("ghz"),
            NamedState::W => f.write_str("w"),
        }
    }
}
