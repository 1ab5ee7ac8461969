use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::likelihood::{
    event_predictive, log_sum_exp, HistoryView, PredictiveOptions, RateEstimates, ScoreTable,
};
use crate::model::{
    integral_from, BetaSample, BranchingRecord, Event, Hyperparams, TopicAtom, UserState,
};

use super::InferenceConfig;

/// One hypothesis about the latent history of the observed stream.
#[derive(Debug, Clone)]
pub struct Particle {
    pub(crate) log_weight: f64,
    pub(crate) records: Vec<BranchingRecord>,
    pub(crate) users: Vec<UserState>,
    pub(crate) topics: Vec<TopicAtom>,
    /// Plug-in rates used by the proposal; refreshed on the cadence.
    pub(crate) rates: RateEstimates,
    /// Kernel rate per topic used by the proposal; refreshed on the cadence.
    pub(crate) betas: Vec<f64>,
    pub(crate) rng: ChaCha8Rng,
}

/// How the next record is chosen.
pub(crate) enum Choice<'a> {
    Sample,
    Forced {
        record: BranchingRecord,
        /// Kernel-rate samples for a topic this record creates.
        new_topic_betas: Option<&'a [f64]>,
    },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepOutcome {
    pub log_marginal: f64,
    pub time_log_density: f64,
}

pub(crate) struct StepContext<'a> {
    pub hyper: &'a Hyperparams,
    pub config: &'a InferenceConfig,
}

impl Particle {
    pub(crate) fn new(hyper: &Hyperparams, config: &InferenceConfig, rng: ChaCha8Rng) -> Self {
        let u = hyper.num_users;
        let mut rates = RateEstimates::prior(hyper);
        if !config.mode.triggering {
            rates = RateEstimates::new(rates.mu, vec![vec![0.0; u]; u]);
        }
        Self {
            log_weight: 0.0,
            records: Vec::new(),
            users: (0..u).map(|i| UserState::new(i, u)).collect(),
            topics: Vec::new(),
            rates,
            betas: Vec::new(),
            rng,
        }
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn records(&self) -> &[BranchingRecord] {
        &self.records
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn topics(&self) -> &[TopicAtom] {
        &self.topics
    }

    /// Rates currently plugged into the proposal.
    pub fn cached_rates(&self) -> &RateEstimates {
        &self.rates
    }

    /// Kernel rates currently plugged into the proposal.
    pub fn cached_betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn view<'a>(&'a self, events: &'a [Event]) -> HistoryView<'a> {
        HistoryView {
            events,
            records: &self.records,
            users: &self.users,
            topics: &self.topics,
            rates: &self.rates,
            betas: &self.betas,
        }
    }

    /// First event index still inside the trigger window at time `t`.
    pub(crate) fn first_candidate(&self, events: &[Event], t: f64, window: f64) -> usize {
        let inv = self.betas.iter().map(|b| 1.0 / b).fold(0.0, f64::max);
        if !window.is_finite() || inv == 0.0 {
            return 0;
        }
        let cutoff = t - window * inv;
        events.partition_point(|e| e.time < cutoff)
    }

    pub(crate) fn options<'a>(
        &self,
        events: &[Event],
        t: f64,
        ctx: &StepContext<'a>,
    ) -> PredictiveOptions<'a> {
        PredictiveOptions {
            hyper: ctx.hyper,
            mode: ctx.config.mode,
            first_candidate: self.first_candidate(events, t, ctx.config.window),
            window: ctx.config.window,
        }
    }

    /// Scores the `n`-th event against the history `events[..n]`.
    pub(crate) fn score(
        &self,
        events: &[Event],
        n: usize,
        ctx: &StepContext<'_>,
    ) -> Result<ScoreTable> {
        let e = &events[n];
        let t_prev = if n == 0 {
            ctx.config.origin
        } else {
            events[n - 1].time
        };
        let past = &events[..n];
        let opts = self.options(past, e.time, ctx);
        event_predictive(e, t_prev, &self.view(past), &opts)
    }

    /// Absorbs event `n`: scores it, picks its provenance and updates all
    /// sufficient statistics.
    pub(crate) fn step(
        &mut self,
        events: &[Event],
        n: usize,
        ctx: &StepContext<'_>,
        choice: Choice<'_>,
    ) -> Result<StepOutcome> {
        debug_assert_eq!(self.records.len(), n);
        let table = self.score(events, n, ctx)?;
        let outcome = StepOutcome {
            log_marginal: table.log_marginal(),
            time_log_density: table.time_log_density(),
        };
        let (record, supplied) = match choice {
            Choice::Sample => {
                let idx = self.sample_index(&table);
                (
                    table.record_for(idx, &self.records, self.topics.len()),
                    None,
                )
            }
            Choice::Forced {
                record,
                new_topic_betas,
            } => (record, new_topic_betas),
        };
        self.check_record(&record, n)?;

        let t_prev = if n == 0 {
            ctx.config.origin
        } else {
            events[n - 1].time
        };
        let e = &events[n];
        self.decay_beta_evidence(e.time - t_prev);
        if let Some(s) = record.parent {
            self.add_kernel_evidence(record.topic, e.time - events[s].time);
        }
        let parent_user = record.parent.map(|s| events[s].user);
        self.apply(e, record, parent_user, supplied, ctx.hyper)?;
        self.add_parent_evidence(e, record.topic);

        if (n + 1).is_multiple_of(ctx.config.refresh_every.max(1)) {
            self.refresh(&events[..=n], e.time, ctx);
        }
        Ok(outcome)
    }

    fn sample_index(&mut self, table: &ScoreTable) -> usize {
        let probs = table.probabilities();
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left a sliver above the last cumulative value
        probs
            .iter()
            .rposition(|p| *p > 0.0)
            .unwrap_or(probs.len() - 1)
    }

    fn check_record(&self, r: &BranchingRecord, n: usize) -> Result<()> {
        let k = self.topics.len();
        if r.topic > k {
            return Err(Error::UnknownTopic(r.topic));
        }
        if let Some(s) = r.parent {
            if s >= n || self.records[s].topic != r.topic || r.new_table {
                return Err(Error::InvalidConfig(format!(
                    "record for event {n} is inconsistent with its parent {s}"
                )));
            }
        } else if r.topic == k && !r.new_table {
            return Err(Error::InvalidConfig(format!(
                "event {n} opens topic {k} without a new table"
            )));
        }
        Ok(())
    }

    fn apply(
        &mut self,
        e: &Event,
        record: BranchingRecord,
        parent_user: Option<usize>,
        supplied: Option<&[f64]>,
        hyper: &Hyperparams,
    ) -> Result<()> {
        let z = record.topic;
        if z == self.topics.len() {
            let samples = match supplied {
                Some(s) => s.to_vec(),
                None => {
                    let prior = Gamma::new(hyper.beta_prior.shape, 1.0 / hyper.beta_prior.rate)
                        .map_err(|err| Error::InvalidConfig(err.to_string()))?;
                    (0..hyper.beta_samples)
                        .map(|_| prior.sample(&mut self.rng))
                        .collect()
                }
            };
            let topic = TopicAtom::new(z, hyper.vocab_size, hyper.num_users, samples);
            self.betas.push(beta_estimate(&topic));
            self.topics.push(topic);
        }
        let topic = &mut self.topics[z];
        topic.add_doc(&e.doc);
        topic.event_count += 1;
        topic.user_event_counts[e.user] += 1;
        if record.new_table {
            topic.franchise = topic.franchise.bump(e.time, 1.0, hyper.nu)?;
        }
        let user = &mut self.users[e.user];
        match parent_user {
            None => {
                user.exo_event_count += 1;
                user.bump_topic(z, e.time, hyper.nu)?;
            }
            Some(v) => user.triggered_counts[v] += 1,
        }
        self.records.push(record);
        Ok(())
    }

    /// Survival part of each kernel-rate sample's likelihood over the gap
    /// since the previous event, then decays the parent mass to the new time.
    fn decay_beta_evidence(&mut self, gap: f64) {
        let users = self.users.len();
        let strength: Vec<f64> = (0..users).map(|v| self.rates.out_strength(v)).collect();
        for topic in self.topics.iter_mut().filter(|k| k.parent_mass_live) {
            let mut peak: f64 = 0.0;
            for (m, sample) in topic.beta_samples.iter_mut().enumerate() {
                let mass = &mut topic.parent_mass[m * users..(m + 1) * users];
                let exposure: f64 = mass.iter().zip(&strength).map(|(e, a)| e * a).sum();
                sample.log_weight -= exposure * integral_from(sample.beta, 0.0, gap);
                let f = (-sample.beta * gap).exp();
                for x in mass.iter_mut() {
                    *x *= f;
                    peak = peak.max(*x);
                }
            }
            if peak < 1e-250 {
                topic.parent_mass.iter_mut().for_each(|x| *x = 0.0);
                topic.parent_mass_live = false;
            }
        }
    }

    /// Log kernel of a triggered event of topic `k` under each sample.
    fn add_kernel_evidence(&mut self, k: usize, lag: f64) {
        for sample in self.topics[k].beta_samples.iter_mut() {
            sample.log_weight -= sample.beta * lag;
        }
    }

    /// The new event's own mass as a future parent.
    fn add_parent_evidence(&mut self, e: &Event, k: usize) {
        let users = self.users.len();
        let topic = &mut self.topics[k];
        for m in 0..topic.beta_samples.len() {
            topic.parent_mass[m * users + e.user] += 1.0;
        }
        topic.parent_mass_live = true;
    }

    /// Recomputes the cached kernel rates and plug-in rates at time `t_now`.
    pub(crate) fn refresh(&mut self, events: &[Event], t_now: f64, ctx: &StepContext<'_>) {
        self.betas = self.topics.iter().map(beta_estimate).collect();
        self.rates = rate_estimates(self, events, t_now, ctx.hyper, ctx.config);
    }

    /// Rebuilds a particle from a record sequence along the same update path
    /// the filter uses. `beta_samples[k]`, when given, fixes topic `k`'s
    /// kernel-rate samples instead of drawing them.
    pub fn replay(
        hyper: &Hyperparams,
        config: &InferenceConfig,
        events: &[Event],
        records: &[BranchingRecord],
        beta_samples: Option<&[Vec<f64>]>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if records.len() > events.len() {
            return Err(Error::InvalidConfig(format!(
                "{} records for {} events",
                records.len(),
                events.len()
            )));
        }
        let ctx = StepContext { hyper, config };
        let mut p = Particle::new(hyper, config, rng);
        for (n, record) in records.iter().enumerate() {
            let new_topic_betas = match beta_samples {
                Some(all) if record.topic == p.topics.len() => Some(
                    all.get(record.topic)
                        .ok_or(Error::UnknownTopic(record.topic))?
                        .as_slice(),
                ),
                _ => None,
            };
            let outcome = p.step(
                &events[..=n],
                n,
                &ctx,
                Choice::Forced {
                    record: *record,
                    new_topic_betas,
                },
            )?;
            p.log_weight += outcome.log_marginal;
        }
        Ok(p)
    }
}

/// Self-normalized importance estimate of a topic's kernel rate.
pub fn beta_estimate(topic: &TopicAtom) -> f64 {
    weighted_beta(&topic.beta_samples)
}

pub(crate) fn weighted_beta(samples: &[BetaSample]) -> f64 {
    let logs: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let norm = log_sum_exp(&logs);
    samples
        .iter()
        .map(|s| (s.log_weight - norm).exp() * s.beta)
        .sum()
}

/// Conjugate Gamma posterior means of the exogenous rates and influence
/// weights given the particle's branching structure, with kernel rates at
/// their cached estimates.
pub fn rate_estimates(
    particle: &Particle,
    events: &[Event],
    t_now: f64,
    hyper: &Hyperparams,
    config: &InferenceConfig,
) -> RateEstimates {
    rates_with_betas(particle, &particle.betas, events, t_now, hyper, config)
}

pub(crate) fn rates_with_betas(
    particle: &Particle,
    betas: &[f64],
    events: &[Event],
    t_now: f64,
    hyper: &Hyperparams,
    config: &InferenceConfig,
) -> RateEstimates {
    let u = hyper.num_users;
    let elapsed = (t_now - config.origin).max(0.0);
    let mu: Vec<f64> = particle
        .users
        .iter()
        .map(|s| {
            (hyper.mu_prior.shape + s.exo_event_count as f64) / (hyper.mu_prior.rate + elapsed)
        })
        .collect();
    if !config.mode.triggering {
        return RateEstimates::new(mu, vec![vec![0.0; u]; u]);
    }

    // Σ_e (1 - exp(-β(T - t_e))) / β per source user: full mass 1/β for
    // every event, minus the tail still pending for events inside the window.
    let mut exposure = vec![0.0; u];
    for (k, topic) in particle.topics.iter().enumerate() {
        let inv = 1.0 / betas[k];
        for (v, &c) in topic.user_event_counts.iter().enumerate() {
            exposure[v] += c as f64 * inv;
        }
    }
    let n = particle.records.len().min(events.len());
    let inv_max = betas.iter().map(|b| 1.0 / b).fold(0.0, f64::max);
    let first = if config.window.is_finite() && inv_max > 0.0 {
        let cutoff = t_now - config.window * inv_max;
        events[..n].partition_point(|e| e.time < cutoff)
    } else {
        0
    };
    for j in first..n {
        let beta = betas[particle.records[j].topic];
        let lag = t_now - events[j].time;
        if beta * lag <= config.window {
            exposure[events[j].user] -= (-beta * lag).exp() / beta;
        }
    }

    let alpha = (0..u)
        .map(|v| {
            let denom = hyper.alpha_prior.rate + exposure[v].max(0.0);
            (0..u)
                .map(|target| {
                    (hyper.alpha_prior.shape + particle.users[target].triggered_counts[v] as f64)
                        / denom
                })
                .collect()
        })
        .collect();
    RateEstimates::new(mu, alpha)
}
