use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::RateEstimates;
use crate::model::{BranchingRecord, Event};
use crate::snapshot::Snapshot;

use super::particle::rates_with_betas;
use super::{beta_estimate, ParticleFilter};

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub root: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub id: usize,
    pub event_count: u64,
    pub beta: f64,
    /// `(word, count)` by decreasing count, ties by word id.
    pub top_words: Vec<(u32, u32)>,
}

/// Read-only view of the highest-weight particle: event cascades, topic
/// clusters, and per-user topic tables.
#[derive(Debug, Clone)]
pub struct MapSummary {
    pub particle: usize,
    pub log_weight: f64,
    pub records: Vec<BranchingRecord>,
    /// Root (exogenous ancestor) of each event.
    pub cascade_of: Vec<usize>,
    pub cascades: Vec<Cascade>,
    pub num_topics: usize,
    /// Local topic count per user.
    pub user_topics: Vec<usize>,
    pub topics: Vec<TopicSummary>,
    /// Posterior means at the time of the last event.
    pub rates: RateEstimates,
}

impl MapSummary {
    pub fn topic_of(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.topic).collect()
    }

    /// Summary of a saved estimate; `events` supplies the users behind the
    /// records.
    pub fn from_snapshot(snap: &Snapshot, events: &[Event], top_n: usize) -> Result<Self> {
        if events.len() != snap.records.len() {
            return Err(Error::InvalidConfig(format!(
                "snapshot explains {} events, {} supplied",
                snap.records.len(),
                events.len()
            )));
        }
        let mut local: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); snap.num_users];
        for (e, r) in events.iter().zip(&snap.records) {
            if r.is_exogenous() {
                local[e.user].insert(r.topic);
            }
        }
        let topics = snap
            .topics
            .iter()
            .map(|k| TopicSummary {
                id: k.id,
                event_count: k.event_count,
                beta: k.beta,
                top_words: k
                    .word_counts
                    .as_deref()
                    .map(|c| top_words(c, top_n))
                    .unwrap_or_default(),
            })
            .collect();
        Ok(Self::assemble(
            0,
            0.0,
            snap.records.clone(),
            topics,
            local.iter().map(|s| s.len()).collect(),
            RateEstimates::new(snap.mu.clone(), snap.alpha.clone()),
        ))
    }

    fn assemble(
        particle: usize,
        log_weight: f64,
        records: Vec<BranchingRecord>,
        topics: Vec<TopicSummary>,
        user_topics: Vec<usize>,
        rates: RateEstimates,
    ) -> Self {
        let roots = cascade_roots(&records);
        let mut sizes = vec![0usize; roots.len()];
        for &r in &roots {
            sizes[r] += 1;
        }
        let cascades = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_exogenous())
            .map(|(i, _)| Cascade {
                root: i,
                size: sizes[i],
            })
            .collect();
        Self {
            particle,
            log_weight,
            num_topics: topics.len(),
            records,
            cascade_of: roots,
            cascades,
            user_topics,
            topics,
            rates,
        }
    }
}

/// Root of each event's cascade; parents always precede children.
pub(crate) fn cascade_roots(records: &[BranchingRecord]) -> Vec<usize> {
    let mut root = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let v = match r.parent {
            Some(s) => root[s],
            None => i,
        };
        root.push(v);
    }
    root
}

pub(crate) fn top_words(counts: &[u32], n: usize) -> Vec<(u32, u32)> {
    let mut words: Vec<(u32, u32)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(w, c)| (w as u32, *c))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    words.truncate(n);
    words
}

impl ParticleFilter {
    /// Posterior-mean rates of the highest-weight particle at the last
    /// event time, with up-to-date kernel-rate estimates.
    pub fn map_rates(&self) -> RateEstimates {
        let p = self.map_particle();
        let betas: Vec<f64> = p.topics.iter().map(beta_estimate).collect();
        let t_now = self.t_last().unwrap_or(self.config.origin);
        rates_with_betas(p, &betas, &self.events, t_now, &self.hyper, &self.config)
    }

    pub fn map_summary(&self, top_n: usize) -> Result<MapSummary> {
        if self.events.is_empty() {
            return Err(Error::InvalidConfig("no events observed".into()));
        }
        let index = self.map_index();
        let p = &self.particles[index];
        let topics = p
            .topics
            .iter()
            .map(|k| TopicSummary {
                id: k.id,
                event_count: k.event_count,
                beta: beta_estimate(k),
                top_words: top_words(&k.word_counts, top_n),
            })
            .collect();
        Ok(MapSummary::assemble(
            index,
            p.log_weight,
            p.records.clone(),
            topics,
            p.users.iter().map(|u| u.occupancy()).collect(),
            self.map_rates(),
        ))
    }
}
