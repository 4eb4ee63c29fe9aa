//! Error metrics between an estimate and the true state, and the per-entry
//! accuracy each metric needs.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `max_i ||ã_i| − |a_i||`.
    AdditiveNorm,
    /// `max_i |ã_i − e^{iα} a_i|` after phase alignment.
    AdditiveComplex,
    /// `Σ_i ||ã_i|² − |a_i|²|`.
    #[serde(rename = "tv")]
    TotalVariation,
    /// `2^{-n} Σ_i ||ã_i| − |a_i||`.
    AvgL1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::AdditiveNorm, Metric::AdditiveComplex, Metric::TotalVariation, Metric::AvgL1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AdditiveNorm => "additive-norm",
            Metric::AdditiveComplex => "additive-complex",
            Metric::TotalVariation => "tv",
            Metric::AvgL1 => "avg-l1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_norm_err: f64,
    /// Absent when the estimate carries no phases (probability estimates).
    pub complex_err: Option<f64>,
    pub total_variation: f64,
    pub avg_l1: f64,
    pub shots_total: u64,
}

impl ErrorReport {
    /// Compares estimated amplitudes (not necessarily normalized) with `truth`.
    pub fn from_amplitudes(estimate: &[Complex64], truth: &StateVector) -> Result<Self> {
        check_dim(estimate.len(), truth)?;
        let norms: Vec<f64> = estimate.iter().map(|a| a.norm()).collect();
        let mut report = Self::from_norms(&norms, truth);
        report.complex_err = Some(aligned_complex_error(estimate, truth.amps()));
        Ok(report)
    }

    /// Compares an estimated outcome distribution with `truth`; norms are
    /// taken as `√p̂`.
    pub fn from_probabilities(probs: &[f64], truth: &StateVector) -> Result<Self> {
        check_dim(probs.len(), truth)?;
        let norms: Vec<f64> = probs.iter().map(|p| p.max(0.0).sqrt()).collect();
        Ok(Self::from_norms(&norms, truth))
    }

    fn from_norms(norms: &[f64], truth: &StateVector) -> Self {
        let mut max_norm_err = 0.0f64;
        let mut l1 = 0.0;
        let mut tv = 0.0;
        for (est, a) in norms.iter().zip(truth.amps()) {
            let d = (est - a.norm()).abs();
            max_norm_err = max_norm_err.max(d);
            l1 += d;
            tv += (est * est - a.norm_sqr()).abs();
        }
        ErrorReport {
            max_norm_err,
            complex_err: None,
            total_variation: tv,
            avg_l1: l1 / norms.len() as f64,
            shots_total: 0,
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::AdditiveNorm => Some(self.max_norm_err),
            Metric::AdditiveComplex => self.complex_err,
            Metric::TotalVariation => Some(self.total_variation),
            Metric::AvgL1 => Some(self.avg_l1),
        }
    }
}

fn check_dim(len: usize, truth: &StateVector) -> Result<()> {
    if len != truth.dim() {
        return Err(Error::Dimension { expected: truth.dim(), got: len });
    }
    Ok(())
}

/// Phase `α` maximizing `Re Σ conj(e^{iα} r_i) e_i`, i.e. minimizing
/// `‖e − e^{iα} r‖₂`.
pub fn optimal_phase(estimate: &[Complex64], reference: &[Complex64]) -> f64 {
    let overlap: Complex64 = reference.iter().zip(estimate).map(|(r, e)| r.conj() * e).sum();
    overlap.arg()
}

/// `min_α ‖e − e^{iα} r‖₂`.
pub fn aligned_distance(estimate: &[Complex64], reference: &[Complex64]) -> f64 {
    let rot = Complex64::from_polar(1.0, optimal_phase(estimate, reference));
    estimate.iter().zip(reference).map(|(e, r)| (e - rot * r).norm_sqr()).sum::<f64>().sqrt()
}

/// `max_i |e_i − e^{iα} r_i|` at the L2-optimal phase.
pub fn aligned_complex_error(estimate: &[Complex64], reference: &[Complex64]) -> f64 {
    let rot = Complex64::from_polar(1.0, optimal_phase(estimate, reference));
    estimate.iter().zip(reference).map(|(e, r)| (e - rot * r).norm()).fold(0.0, f64::max)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Per-entry accuracy for additive error `delta` on every amplitude norm:
/// `δ² / (4√2 ‖J⁻¹‖ √N)` with `N = 2^(n+1)`.
pub fn epsilon_for_additive(delta: f64, n: usize, jinv_norm: f64) -> Result<f64> {
    check_positive("delta", delta)?;
    check_positive("jinv_norm", jinv_norm)?;
    let big_n = (2u64 << n) as f64;
    Ok(delta * delta / (4.0 * SQRT_2 * jinv_norm * big_n.sqrt()))
}

/// Per-entry accuracy for additive error `delta` on every complex amplitude:
/// `δ / (‖J⁻¹‖ √(2^n))`.
pub fn epsilon_for_additive_complex(delta: f64, n: usize, jinv_norm: f64) -> Result<f64> {
    check_positive("delta", delta)?;
    check_positive("jinv_norm", jinv_norm)?;
    Ok(delta / (jinv_norm * ((1u64 << n) as f64).sqrt()))
}

/// Per-entry accuracy for total variation `delta`: `δ / (2√2 · 2^n · ‖J⁻¹‖)`.
pub fn epsilon_for_tv(delta: f64, n: usize, jinv_norm: f64) -> Result<f64> {
    check_positive("delta", delta)?;
    check_positive("jinv_norm", jinv_norm)?;
    Ok(delta / (2.0 * SQRT_2 * (1u64 << n) as f64 * jinv_norm))
}

/// Per-entry accuracy for average L1 error `delta`: `δ² / (√2 ‖J⁻¹‖)`.
pub fn epsilon_for_avg_l1(delta: f64, jinv_norm: f64) -> Result<f64> {
    check_positive("delta", delta)?;
    check_positive("jinv_norm", jinv_norm)?;
    Ok(delta * delta / (SQRT_2 * jinv_norm))
}

/// Accuracy the single-qubit framework needs per plan entry for `metric`.
pub fn epsilon_for(metric: Metric, delta: f64, n: usize, jinv_norm: f64) -> Result<f64> {
    match metric {
        Metric::AdditiveNorm => epsilon_for_additive(delta, n, jinv_norm),
        Metric::AdditiveComplex => epsilon_for_additive_complex(delta, n, jinv_norm),
        Metric::TotalVariation => epsilon_for_tv(delta, n, jinv_norm),
        Metric::AvgL1 => epsilon_for_avg_l1(delta, jinv_norm),
    }
}

/// Accuracy the full computational-basis baseline needs on every outcome
/// probability: `δ²` for norm targets, `δ / 2^n` for total variation.
pub fn naive_epsilon(metric: Metric, delta: f64, n: usize) -> Result<f64> {
    check_positive("delta", delta)?;
    match metric {
        Metric::AdditiveNorm | Metric::AvgL1 => Ok(delta * delta),
        Metric::TotalVariation => Ok(delta / (1u64 << n) as f64),
        Metric::AdditiveComplex => {
            Err(Error::InvalidArgument("the computational-basis baseline does not estimate phases".into()))
        }
    }
}
