//! Self-describing JSON model snapshot shared by fitted models and
//! simulator ground truth. Matrices are nested arrays in row-major order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{beta_estimate, InferenceConfig, Particle, ParticleFilter};
use crate::model::{BetaSample, BranchingRecord, Event, Hyperparams};
use crate::simulator::GroundTruth;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Truth,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSnapshot {
    pub id: usize,
    pub beta: f64,
    pub event_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_counts: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_samples: Option<Vec<BetaSample>>,
}

/// Settings needed to resume inference from an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub hyper: Hyperparams,
    pub inference: InferenceConfig,
    pub log_evidence: f64,
    pub t_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub kind: SnapshotKind,
    pub num_users: usize,
    pub vocab_size: usize,
    pub num_events: usize,
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub topics: Vec<TopicSnapshot>,
    pub records: Vec<BranchingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitInfo>,
}

impl Snapshot {
    pub fn from_truth(truth: &GroundTruth, hyper: &Hyperparams) -> Self {
        let mut counts = vec![0u64; truth.beta.len()];
        for r in &truth.records {
            counts[r.topic] += 1;
        }
        Self {
            version: SNAPSHOT_VERSION,
            kind: SnapshotKind::Truth,
            num_users: truth.mu.len(),
            vocab_size: hyper.vocab_size,
            num_events: truth.records.len(),
            mu: truth.mu.clone(),
            alpha: truth.alpha.clone(),
            topics: truth
                .beta
                .iter()
                .zip(&truth.phi)
                .enumerate()
                .map(|(id, (beta, phi))| TopicSnapshot {
                    id,
                    beta: *beta,
                    event_count: counts[id],
                    phi: Some(phi.clone()),
                    word_counts: None,
                    beta_samples: None,
                })
                .collect(),
            records: truth.records.clone(),
            fit: None,
        }
    }

    /// Estimate from the highest-weight particle; rates are posterior means
    /// at the last observed time.
    pub fn from_filter(filter: &ParticleFilter) -> Self {
        let hyper = filter.hyper();
        let config = filter.config();
        let p = filter.map_particle();
        let t_last = filter.t_last().unwrap_or(config.origin);
        let betas: Vec<f64> = p.topics().iter().map(beta_estimate).collect();
        let rates = filter.map_rates();
        Self {
            version: SNAPSHOT_VERSION,
            kind: SnapshotKind::Estimate,
            num_users: hyper.num_users,
            vocab_size: hyper.vocab_size,
            num_events: filter.events().len(),
            mu: rates.mu.clone(),
            alpha: rates.alpha.clone(),
            topics: p
                .topics()
                .iter()
                .zip(&betas)
                .map(|(k, beta)| TopicSnapshot {
                    id: k.id,
                    beta: *beta,
                    event_count: k.event_count,
                    phi: None,
                    word_counts: Some(k.word_counts.clone()),
                    beta_samples: Some(k.beta_samples.clone()),
                })
                .collect(),
            records: p.records().to_vec(),
            fit: Some(FitInfo {
                hyper: hyper.clone(),
                inference: config.clone(),
                log_evidence: filter.log_evidence(),
                t_last,
            }),
        }
    }

    /// Inverse of [`Snapshot::from_truth`].
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        if self.kind != SnapshotKind::Truth {
            return Err(Error::InvalidConfig(
                "snapshot is an estimate, not ground truth".into(),
            ));
        }
        let phi = self
            .topics
            .iter()
            .map(|k| {
                k.phi.clone().ok_or_else(|| {
                    Error::InvalidConfig(format!("truth topic {} has no word distribution", k.id))
                })
            })
            .collect::<Result<_>>()?;
        Ok(GroundTruth {
            mu: self.mu.clone(),
            alpha: self.alpha.clone(),
            beta: self.topics.iter().map(|k| k.beta).collect(),
            phi,
            records: self.records.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion(snap.version));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Rebuilds a filter whose particles all equal the snapshot's particle,
    /// replayed over `events` (which must be the events it was fitted on).
    pub fn resume(&self, events: Vec<Event>, seed: u64) -> Result<ParticleFilter> {
        let fit = self
            .fit
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("snapshot holds no fitted model".into()))?;
        if events.len() != self.records.len() {
            return Err(Error::InvalidConfig(format!(
                "snapshot explains {} events, {} supplied",
                self.records.len(),
                events.len()
            )));
        }
        let samples: Vec<Vec<f64>> = self
            .topics
            .iter()
            .map(|k| {
                k.beta_samples
                    .as_ref()
                    .map(|s| s.iter().map(|b| b.beta).collect())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("topic {} has no kernel-rate samples", k.id))
                    })
            })
            .collect::<Result<_>>()?;
        let particle = Particle::replay(
            &fit.hyper,
            &fit.inference,
            &events,
            &self.records,
            Some(&samples),
            ChaCha8Rng::seed_from_u64(seed),
        )?;
        ParticleFilter::from_particle(
            fit.hyper.clone(),
            fit.inference.clone(),
            events,
            particle,
            fit.log_evidence,
            seed,
        )
    }
}
