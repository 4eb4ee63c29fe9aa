//! Finite-shot sampling and Hoeffding shot planning.

use std::io::Write;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::outcome_probs;
use crate::par::Exec;
use crate::plan::MeasurementPlan;
use crate::seed;
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    /// Analytic probabilities, no sampling noise.
    Exact,
    /// `counts / shots` from a multinomial draw.
    Empirical,
    /// Zero shots were taken; `probs` is all zeros.
    Empty,
}

/// Outcome frequencies of one plan entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub entry_id: usize,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    pub shots: u64,
    /// Hoeffding radius at the entry's failure budget; 0 in exact mode.
    pub eps: Option<f64>,
    pub mode: EstimateMode,
}

impl ProbabilityEstimate {
    pub fn exact(entry_id: usize, labels: Vec<String>, probs: Vec<f64>) -> Self {
        ProbabilityEstimate { entry_id, labels, probs, counts: None, shots: 0, eps: Some(0.0), mode: EstimateMode::Exact }
    }
}

/// Shots needed so one Bernoulli frequency is within `eps` of its mean with
/// probability at least `1 - fail`: `⌈ln(2/fail) / (2 eps²)⌉`.
pub fn shots_for_accuracy(eps: f64, fail: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("accuracy must lie in (0, 1), got {eps}")));
    }
    if !(fail > 0.0 && fail < 1.0) {
        return Err(Error::InvalidArgument(format!("failure probability must lie in (0, 1), got {fail}")));
    }
    let shots = ((2.0 / fail).ln() / (2.0 * eps * eps)).ceil();
    if shots > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("accuracy {eps} needs more than 2^64 shots")));
    }
    Ok(shots as u64)
}

/// Inverse of [`shots_for_accuracy`]: the radius guaranteed by `shots`.
pub fn hoeffding_radius(shots: u64, fail: f64) -> f64 {
    if shots == 0 {
        return f64::INFINITY;
    }
    ((2.0 / fail).ln() / (2.0 * shots as f64)).sqrt()
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::BadProbabilities("empty vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
        return Err(Error::BadProbabilities(format!("entry {p} is not a probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadProbabilities(format!("sums to {total}")));
    }
    Ok(())
}

/// Multinomial counts, drawn as a chain of conditional binomials.
pub fn multinomial(probs: &[f64], shots: u64, seed: u64) -> Result<Vec<u64>> {
    validate_probs(probs)?;
    let mut rng = seed::rng(seed);
    let mut counts = vec![0u64; probs.len()];
    let mut left = shots;
    let mut mass = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).expect("q in [0, 1]").sample(&mut rng);
        counts[i] = draw;
        left -= draw;
        mass -= p.max(0.0);
    }
    Ok(counts)
}

/// Draws `shots` outcomes from `probs`. Zero shots gives an [`EstimateMode::Empty`] estimate.
pub fn sample_counts(probs: &[f64], shots: u64, seed: u64) -> Result<ProbabilityEstimate> {
    let counts = multinomial(probs, shots, seed)?;
    let (freqs, mode) = if shots == 0 {
        (vec![0.0; probs.len()], EstimateMode::Empty)
    } else {
        (counts.iter().map(|&c| c as f64 / shots as f64).collect(), EstimateMode::Empirical)
    };
    Ok(ProbabilityEstimate {
        entry_id: 0,
        labels: (0..probs.len()).map(|i| i.to_string()).collect(),
        probs: freqs,
        counts: Some(counts),
        shots,
        eps: None,
        mode,
    })
}

/// Estimates every plan entry of `state`. Entries with zero shots are passed
/// through analytically. Entry `i` samples from `derive_index(master_seed, i)`,
/// and `fail_per_entry` sets each entry's reported radius.
pub fn estimate_plan(
    state: &StateVector,
    plan: &MeasurementPlan,
    master_seed: u64,
    fail_per_entry: f64,
    exec: Exec,
) -> Result<Vec<ProbabilityEstimate>> {
    if state.n() != plan.n {
        return Err(Error::Dimension { expected: plan.n, got: state.n() });
    }
    exec.map_slice(&plan.entries, |entry| {
        let probs = outcome_probs(state, &entry.spec)?;
        let labels = entry.spec.outcome_labels(plan.n);
        if entry.shots == 0 {
            return Ok(ProbabilityEstimate::exact(entry.id, labels, probs));
        }
        let mut est = sample_counts(&probs, entry.shots, seed::derive_index(master_seed, entry.id as u64))?;
        est.entry_id = entry.id;
        est.labels = labels;
        est.eps = Some(hoeffding_radius(entry.shots, fail_per_entry));
        Ok(est)
    })
    .into_iter()
    .collect()
}

/// Count table with columns `entry_id, outcome_label, count, shots`.
/// Exact-mode entries are written with their probability in place of a count.
pub fn write_count_table<W: Write>(out: W, estimates: &[ProbabilityEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entry_id", "outcome_label", "count", "shots"])?;
    for est in estimates {
        for (o, label) in est.labels.iter().enumerate() {
            let count = match &est.counts {
                Some(c) => c[o].to_string(),
                None => est.probs[o].to_string(),
            };
            w.write_record([est.entry_id.to_string(), label.clone(), count, est.shots.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_counts() {
        assert_eq!(shots_for_accuracy(0.05, 0.05).unwrap(), 738);
        assert_eq!(shots_for_accuracy(0.1, 0.05).unwrap(), 185);
        let a = shots_for_accuracy(0.02, 0.01).unwrap() as f64;
        let b = shots_for_accuracy(0.01, 0.01).unwrap() as f64;
        assert!((b / a - 4.0).abs() < 4.0 / a);
        assert!(shots_for_accuracy(0.0, 0.1).is_err());
        assert!(shots_for_accuracy(0.1, 1.0).is_err());
        assert!(hoeffding_radius(738, 0.05) <= 0.05);
    }

    #[test]
    fn degenerate_and_deterministic_sampling() {
        let est = sample_counts(&[1.0, 0.0], 100, 3).unwrap();
        assert_eq!(est.counts.as_deref(), Some(&[100, 0][..]));
        assert_eq!(est.probs, vec![1.0, 0.0]);
        let a = sample_counts(&[0.5, 0.5], 1000, 4).unwrap();
        let b = sample_counts(&[0.5, 0.5], 1000, 4).unwrap();
        assert_eq!(a, b);
        let empty = sample_counts(&[0.5, 0.5], 0, 4).unwrap();
        assert_eq!(empty.mode, EstimateMode::Empty);
        assert_eq!(empty.probs, vec![0.0, 0.0]);
    }

    #[test]
    fn fair_coin_concentrates() {
        // binomial std at 1e6 shots is 5e-4; allow 4 sigma
        let est = sample_counts(&[0.5, 0.5], 1_000_000, 4).unwrap();
        assert!((est.probs[0] - 0.5).abs() <= 0.002);
        assert_eq!(est.probs.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn malformed_probabilities_are_rejected() {
        assert!(sample_counts(&[0.5, 0.6], 10, 1).is_err());
        assert!(sample_counts(&[1.5, -0.5], 10, 1).is_err());
        assert!(sample_counts(&[f64::NAN, 1.0], 10, 1).is_err());
        assert!(sample_counts(&[], 10, 1).is_err());
    }

    #[test]
    fn multinomial_preserves_total() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        for s in 0..20 {
            let c = multinomial(&probs, 12345, s).unwrap();
            assert_eq!(c.iter().sum::<u64>(), 12345);
        }
    }

    #[test]
    fn count_table_layout() {
        let mut est = sample_counts(&[0.25, 0.75], 8, 1).unwrap();
        est.entry_id = 3;
        let mut buf = Vec::new();
        write_count_table(&mut buf, &[est]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("entry_id,outcome_label,count,shots"));
        assert!(lines.next().unwrap().starts_with("3,0,"));
        assert_eq!(lines.count(), 1);
    }
}
