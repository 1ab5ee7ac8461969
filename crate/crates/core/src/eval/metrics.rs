use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::TopicSummary;
use crate::snapshot::Snapshot;

pub const RELATIVE_ERROR_DEFINITION: &str = "relative error = ||estimate - truth||_F / ||truth||_F";

/// Frobenius-relative error of a flattened estimate against the truth.
pub fn relative_error(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    let norm: f64 = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let diff: f64 = est
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| pairs(c as f64)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c as f64)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c as f64)).sum();
    let expected = sum_a * sum_b / pairs(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_mean_ci<R: Rng>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|x, y| x.total_cmp(y));
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - tail) * resamples as f64).ceil() as usize)
        .saturating_sub(1)
        .min(resamples - 1);
    (means[lo], means[hi])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Paired comparison of per-event log densities against a baseline, with a
/// percentile bootstrap interval on the mean difference.
pub fn paired_comparison<R: Rng>(
    baseline: &str,
    model: &[f64],
    reference: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Comparison> {
    if model.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            est: model.len(),
            truth: reference.len(),
        });
    }
    let diffs: Vec<f64> = model.iter().zip(reference).map(|(a, b)| a - b).collect();
    let (ci_low, ci_high) = bootstrap_mean_ci(&diffs, resamples, level, rng);
    Ok(Comparison {
        baseline: baseline.to_string(),
        model_mean: mean(model),
        baseline_mean: mean(reference),
        mean_difference: mean(&diffs),
        ci_low,
        ci_high,
    })
}

/// Relative errors of an estimate's rates against a ground-truth snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    /// `None` when the true influence matrix is all zero.
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
}

pub fn parameter_errors(est: &Snapshot, truth: &Snapshot) -> Result<ParameterErrors> {
    let flat = |m: &[Vec<f64>]| m.iter().flatten().copied().collect::<Vec<f64>>();
    let tolerate_zero = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroTruth) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(ParameterErrors {
        alpha: tolerate_zero(relative_error(&flat(&est.alpha), &flat(&truth.alpha)))?,
        mu: tolerate_zero(relative_error(&est.mu, &truth.mu))?,
    })
}

/// Parameter errors after a given number of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub events: usize,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_error: Option<f64>,
    pub num_topics: usize,
    pub elapsed_secs: f64,
}

/// Summary of a paired held-out comparison against a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub model_mean: f64,
    pub baseline_mean: f64,
    pub mean_difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub relative_error_definition: String,
    pub checkpoints: Vec<Checkpoint>,
    /// Rolling one-step-ahead log densities of held-out event times.
    pub heldout_log_density: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_log_density: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    /// Estimate against ground truth at the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_errors: Option<ParameterErrors>,
    #[serde(default)]
    pub topics: Vec<TopicSummary>,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self {
            relative_error_definition: RELATIVE_ERROR_DEFINITION.to_string(),
            ..Default::default()
        }
    }
}
