//! Online collapsed sequential Monte Carlo over event provenance and topics.
//!
//! Each particle carries a full branching/topic hypothesis together with
//! the sufficient statistics needed to score the next event exactly. The
//! proposal is the per-particle posterior over (trigger, topic), so the
//! incremental weight is the event's marginal density under that particle.

mod particle;
mod resample;
mod summary;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{log_sum_exp, ModelMode, TopicMode};
use crate::model::{Event, Hyperparams};

pub use particle::{beta_estimate, rate_estimates, Particle};
pub use resample::{ess, offspring_counts, systematic_resample};
pub use summary::{Cascade, MapSummary, TopicSummary};

use particle::{Choice, StepContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    /// Events between refreshes of the kernel-rate and plug-in rate caches.
    pub refresh_every: usize,
    /// Parents further than `window / β` in the past are not considered.
    pub window: f64,
    pub mode: ModelMode,
    /// Start of the observation period.
    pub origin: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            ess_threshold: 0.5,
            refresh_every: 10,
            window: 10.0,
            mode: ModelMode::default(),
            origin: 0.0,
        }
    }
}

impl InferenceConfig {
    /// Single shared topic, documents ignored: a plain multivariate Hawkes
    /// process fitted by the same engine.
    pub fn hawkes_baseline(&self) -> Self {
        Self {
            mode: ModelMode {
                topics: TopicMode::Single,
                ..self.mode
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::InvalidConfig(
                "ess_threshold must lie in (0, 1]".into(),
            ));
        }
        if self.refresh_every == 0 {
            return Err(Error::InvalidConfig(
                "refresh_every must be at least 1".into(),
            ));
        }
        if !(self.window > 0.0) {
            return Err(Error::InvalidConfig("window must be positive".into()));
        }
        if !self.origin.is_finite() {
            return Err(Error::InvalidConfig("origin must be finite".into()));
        }
        Ok(())
    }
}

/// What one `observe` call produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Log of the weighted mean incremental weight: this event's share of
    /// the marginal likelihood estimate.
    pub log_evidence: f64,
    /// Log predictive density of the event's time and user, mixed over
    /// particles with their pre-update weights.
    pub time_log_density: f64,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    hyper: Hyperparams,
    config: InferenceConfig,
    events: Vec<Event>,
    particles: Vec<Particle>,
    log_evidence: f64,
    resample_count: usize,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    pub fn new(hyper: Hyperparams, config: InferenceConfig, seed: u64) -> Result<Self> {
        hyper.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = hyper.particles;
        let particles = (0..p)
            .map(|_| {
                let mut particle =
                    Particle::new(&hyper, &config, ChaCha8Rng::seed_from_u64(rng.gen()));
                particle.log_weight = -(p as f64).ln();
                particle
            })
            .collect();
        Ok(Self {
            hyper,
            config,
            events: Vec::new(),
            particles,
            log_evidence: 0.0,
            resample_count: 0,
            rng,
        })
    }

    /// Warm start: every particle is a copy of `particle`, which must have
    /// been built over `events`.
    pub fn from_particle(
        hyper: Hyperparams,
        config: InferenceConfig,
        events: Vec<Event>,
        particle: Particle,
        log_evidence: f64,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        config.validate()?;
        if particle.records.len() != events.len() {
            return Err(Error::InvalidConfig(format!(
                "particle explains {} events, history has {}",
                particle.records.len(),
                events.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = hyper.particles;
        let particles = (0..p)
            .map(|_| {
                let mut c = particle.clone();
                c.rng = ChaCha8Rng::seed_from_u64(rng.gen());
                c.log_weight = -(p as f64).ln();
                c
            })
            .collect();
        Ok(Self {
            hyper,
            config,
            events,
            particles,
            log_evidence,
            resample_count: 0,
            rng,
        })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Running log marginal likelihood estimate of everything observed.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn resample_count(&self) -> usize {
        self.resample_count
    }

    pub fn t_last(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Normalized particle weights.
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights())
    }

    fn check_event(&self, e: &Event) -> Result<()> {
        e.validate(self.hyper.num_users, self.hyper.vocab_size)?;
        let index = self.events.len();
        match self.t_last() {
            Some(prev) if e.time <= prev => Err(Error::NonIncreasingTime {
                index,
                prev,
                time: e.time,
            }),
            None if e.time < self.config.origin => Err(Error::NonIncreasingTime {
                index,
                prev: self.config.origin,
                time: e.time,
            }),
            _ => Ok(()),
        }
    }

    /// Absorbs one event into every particle, reweights, and resamples when
    /// the effective sample size drops below the threshold.
    pub fn observe(&mut self, event: Event) -> Result<StepReport> {
        self.check_event(&event)?;
        let n = self.events.len();
        self.events.push(event);
        let ctx = StepContext {
            hyper: &self.hyper,
            config: &self.config,
        };
        let events = &self.events;
        let outcomes: Vec<Result<_>> = self
            .particles
            .par_iter_mut()
            .map(|p| p.step(events, n, &ctx, Choice::Sample))
            .collect();
        let outcomes = match outcomes.into_iter().collect::<Result<Vec<_>>>() {
            Ok(o) => o,
            Err(err) => {
                self.events.pop();
                return Err(err);
            }
        };

        let prior: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let mixed: Vec<f64> = prior
            .iter()
            .zip(&outcomes)
            .map(|(lw, o)| lw + o.time_log_density)
            .collect();
        let time_log_density = log_sum_exp(&mixed);

        for (p, o) in self.particles.iter_mut().zip(&outcomes) {
            let inc = o.log_marginal;
            p.log_weight = if inc.is_nan() || inc == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                p.log_weight + inc
            };
        }
        let logs: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
        let norm = log_sum_exp(&logs);
        if !norm.is_finite() {
            let e = &self.events[n];
            return Err(Error::Degenerate {
                event: n,
                time: e.time,
                user: e.user,
            });
        }
        for p in &mut self.particles {
            p.log_weight -= norm;
        }
        self.log_evidence += norm;

        let ess_now = self.ess();
        let resampled = ess_now < self.config.ess_threshold * self.particles.len() as f64;
        if resampled {
            self.resample();
        }
        Ok(StepReport {
            log_evidence: norm,
            time_log_density,
            ess: if resampled { self.ess() } else { ess_now },
            resampled,
        })
    }

    /// Systematic resampling with an offset drawn from the filter's stream.
    pub fn resample(&mut self) {
        let offset: f64 = self.rng.gen();
        self.resample_with_offset(offset);
    }

    pub fn resample_with_offset(&mut self, offset: f64) {
        let weights = self.weights();
        let ancestors = systematic_resample(&weights, offset);
        let p = self.particles.len();
        let mut next: Vec<Particle> = ancestors
            .iter()
            .map(|&a| self.particles[a].clone())
            .collect();
        for particle in &mut next {
            particle.log_weight = -(p as f64).ln();
            // duplicates must not replay identical random choices
            particle.rng = ChaCha8Rng::seed_from_u64(self.rng.gen());
        }
        self.particles = next;
        self.resample_count += 1;
    }

    /// Index of the highest-weight particle (first on ties).
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    pub fn map_particle(&self) -> &Particle {
        &self.particles[self.map_index()]
    }

    /// Scores `event` without absorbing it: the weighted mixture of each
    /// particle's log density of the event's time and user.
    pub fn time_log_density(&self, event: &Event) -> Result<f64> {
        self.check_event(event)?;
        let mut events = self.events.clone();
        events.push(event.clone());
        let n = self.events.len();
        let ctx = StepContext {
            hyper: &self.hyper,
            config: &self.config,
        };
        let mixed = self
            .particles
            .iter()
            .map(|p| Ok(p.log_weight + p.score(&events, n, &ctx)?.time_log_density()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&mixed))
    }
}
