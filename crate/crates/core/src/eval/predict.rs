use std::time::Instant;

use crate::error::{Error, Result};
use crate::inference::{InferenceConfig, ParticleFilter};
use crate::model::{Event, Hyperparams};
use crate::simulator::GroundTruth;

use super::metrics::{relative_error, Checkpoint};

/// Rolling one-step-ahead log densities of the held-out event times. Each
/// event is scored before it is absorbed, so the values are prequential.
pub fn next_event_time_loglik(filter: &mut ParticleFilter, held_out: &[Event]) -> Result<Vec<f64>> {
    let mut prev = filter.t_last();
    for (i, e) in held_out.iter().enumerate() {
        if let Some(p) = prev {
            if e.time <= p {
                return Err(Error::NonIncreasingTime {
                    index: i,
                    prev: p,
                    time: e.time,
                });
            }
        }
        prev = Some(e.time);
    }
    held_out
        .iter()
        .map(|e| Ok(filter.observe(e.clone())?.time_log_density))
        .collect()
}

/// The same engine restricted to one shared topic that ignores documents.
pub fn baseline_hawkes_fit(
    events: &[Event],
    hyper: &Hyperparams,
    config: &InferenceConfig,
    seed: u64,
) -> Result<ParticleFilter> {
    let mut filter = ParticleFilter::new(hyper.clone(), config.hawkes_baseline(), seed)?;
    for e in events {
        filter.observe(e.clone())?;
    }
    Ok(filter)
}

/// Index of the first held-out event for a train fraction in (0, 1).
pub fn split_index(len: usize, train_frac: f64) -> Result<usize> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_frac} must lie in (0, 1)"
        )));
    }
    Ok(((len as f64) * train_frac).round() as usize)
}

/// Feeds `events` through the filter, recording parameter errors against
/// `truth` (when given) every `every` events and after the last one.
pub fn fit_with_checkpoints(
    filter: &mut ParticleFilter,
    events: &[Event],
    truth: Option<&GroundTruth>,
    every: usize,
) -> Result<Vec<Checkpoint>> {
    let start = Instant::now();
    let mut out = Vec::new();
    let n = events.len();
    for (i, e) in events.iter().enumerate() {
        filter.observe(e.clone())?;
        let seen = filter.events().len();
        if (every > 0 && seen.is_multiple_of(every)) || i + 1 == n {
            out.push(checkpoint(filter, truth, start.elapsed().as_secs_f64())?);
        }
    }
    Ok(out)
}

pub fn checkpoint(
    filter: &ParticleFilter,
    truth: Option<&GroundTruth>,
    elapsed_secs: f64,
) -> Result<Checkpoint> {
    let rates = filter.map_rates();
    let (alpha_error, mu_error) = match truth {
        Some(t) => {
            let alpha_truth: Vec<f64> = t.alpha.iter().flatten().copied().collect();
            let alpha_error = match relative_error(&rates.alpha_flat(), &alpha_truth) {
                Ok(v) => Some(v),
                Err(Error::ZeroTruth) => None,
                Err(e) => return Err(e),
            };
            (alpha_error, Some(relative_error(&rates.mu, &t.mu)?))
        }
        None => (None, None),
    };
    Ok(Checkpoint {
        events: filter.events().len(),
        time: filter.t_last().unwrap_or(filter.config().origin),
        alpha_error,
        mu_error,
        num_topics: filter.map_particle().topics().len(),
        elapsed_secs,
    })
}
