//! Domain types shared by the simulator and the particle filter.
//!
//! Decayed counts are stored lazily as a value plus the time it was last
//! touched; exponential decay composes, so reading at a later time is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bag of token ids, stored as sorted `(word, multiplicity)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Doc {
    words: Vec<(u32, u32)>,
    len: u32,
}

impl Doc {
    pub fn from_tokens<I: IntoIterator<Item = u32>>(tokens: I) -> Self {
        let mut all: Vec<u32> = tokens.into_iter().collect();
        all.sort_unstable();
        let len = all.len() as u32;
        let mut words: Vec<(u32, u32)> = Vec::new();
        for w in all {
            match words.last_mut() {
                Some((last, n)) if *last == w => *n += 1,
                _ => words.push((w, 1)),
            }
        }
        Self { words, len }
    }

    /// Distinct words with their multiplicities, ascending by word id.
    pub fn words(&self) -> &[(u32, u32)] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Tokens in ascending order, repeated by multiplicity.
    pub fn tokens(&self) -> impl Iterator<Item = u32> + '_ {
        self.words
            .iter()
            .flat_map(|&(w, n)| std::iter::repeat_n(w, n as usize))
    }

    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        match self.words.last() {
            Some(&(w, _)) if w as usize >= vocab => Err(Error::TokenOutOfRange { token: w, vocab }),
            _ => Ok(()),
        }
    }
}

/// One observation: at `time`, `user` shares `doc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub user: usize,
    pub doc: Doc,
}

impl Event {
    pub fn new(time: f64, user: usize, tokens: impl IntoIterator<Item = u32>) -> Self {
        Self {
            time,
            user,
            doc: Doc::from_tokens(tokens),
        }
    }

    pub fn validate(&self, users: usize, vocab: usize) -> Result<()> {
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "event time {} must be finite and non-negative",
                self.time
            )));
        }
        if self.user >= users {
            return Err(Error::UserOutOfRange {
                user: self.user,
                users,
            });
        }
        self.doc.check_vocab(vocab)
    }
}

/// Shape/rate parameterisation of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn is_valid(&self) -> bool {
        self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite()
    }
}

/// Fixed model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Concentration for opening a new local topic at a user.
    pub gamma: f64,
    /// Concentration for drawing a brand new global topic.
    pub zeta: f64,
    /// Decay rate of the local and global topic popularity counts.
    pub nu: f64,
    /// Symmetric Dirichlet concentration of the topic base measure.
    pub eta: f64,
    pub beta_prior: GammaPrior,
    pub mu_prior: GammaPrior,
    pub alpha_prior: GammaPrior,
    /// Importance samples per topic for the kernel rate.
    pub beta_samples: usize,
    pub particles: usize,
    pub num_users: usize,
    pub vocab_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            zeta: 1.0,
            nu: 0.01,
            eta: 0.1,
            beta_prior: GammaPrior::new(2.0, 2.0),
            mu_prior: GammaPrior::new(1.0, 10.0),
            alpha_prior: GammaPrior::new(0.5, 10.0),
            beta_samples: 64,
            particles: 8,
            num_users: 10,
            vocab_size: 200,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return bad("zeta must be positive");
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad("nu must be non-negative");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !self.beta_prior.is_valid() || !self.mu_prior.is_valid() || !self.alpha_prior.is_valid()
        {
            return bad("Gamma prior parameters must be positive");
        }
        if self.beta_samples == 0 {
            return bad("beta_samples must be at least 1");
        }
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if self.num_users == 0 {
            return bad("num_users must be at least 1");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be at least 1");
        }
        Ok(())
    }
}

/// Exponentially decayed sum `Σ amount_e · exp(-ν (t - t_e))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayedCounter {
    pub value_at_anchor: f64,
    pub anchor_time: f64,
}

impl Default for DecayedCounter {
    fn default() -> Self {
        Self {
            value_at_anchor: 0.0,
            anchor_time: f64::NEG_INFINITY,
        }
    }
}

impl DecayedCounter {
    pub fn read(&self, t: f64, nu: f64) -> Result<f64> {
        if self.value_at_anchor == 0.0 {
            return Ok(0.0);
        }
        if t < self.anchor_time {
            return Err(Error::NegativeElapsed {
                from: self.anchor_time,
                to: t,
            });
        }
        Ok(self.value_at_anchor * (-nu * (t - self.anchor_time)).exp())
    }

    pub fn bump(&self, t: f64, amount: f64, nu: f64) -> Result<Self> {
        let current = self.read(t, nu)?;
        if t < self.anchor_time {
            return Err(Error::NegativeElapsed {
                from: self.anchor_time,
                to: t,
            });
        }
        Ok(Self {
            value_at_anchor: current + amount,
            anchor_time: t,
        })
    }
}

/// Exponential triggering kernel `exp(-beta (t - t_s))`.
pub fn kernel_eval(beta: f64, t: f64, t_s: f64) -> Result<f64> {
    check_rate(beta)?;
    if t < t_s {
        return Err(Error::NegativeElapsed { from: t_s, to: t });
    }
    Ok((-beta * (t - t_s)).exp())
}

/// `∫_{max(a, t_s)}^{b} exp(-beta (τ - t_s)) dτ`; `b` may be `+∞`.
pub fn kernel_integral(beta: f64, t_s: f64, a: f64, b: f64) -> Result<f64> {
    check_rate(beta)?;
    if a > b {
        return Err(Error::NegativeElapsed { from: a, to: b });
    }
    if t_s > b {
        return Err(Error::NegativeElapsed { from: t_s, to: b });
    }
    let lo = a.max(t_s);
    Ok(integral_from(beta, lo - t_s, b - lo))
}

/// Integral of the kernel over a window starting `offset` after the parent
/// and lasting `span`. Uses `expm1` so tiny rates stay accurate.
#[inline]
pub(crate) fn integral_from(beta: f64, offset: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let head = (-beta * offset).exp();
    if span.is_infinite() {
        return head / beta;
    }
    -head * (-beta * span).exp_m1() / beta
}

fn check_rate(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveRate(beta))
    }
}

/// One importance sample of a topic's kernel rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSample {
    pub beta: f64,
    pub log_weight: f64,
}

/// A global topic with collapsed word counts.
#[derive(Debug, Clone)]
pub struct TopicAtom {
    pub id: usize,
    pub word_counts: Vec<u32>,
    pub total_count: u64,
    /// Decayed number of new local tables that picked this topic (`m_k`).
    pub franchise: DecayedCounter,
    pub beta_samples: Vec<BetaSample>,
    pub event_count: u64,
    /// Events of this topic per originating user.
    pub user_event_counts: Vec<u32>,
    /// Per (sample, source user) decayed sum of this topic's parents,
    /// `Σ exp(-β_m (t - t_s))`, anchored at the last observed event.
    pub(crate) parent_mass: Vec<f64>,
    pub(crate) parent_mass_live: bool,
}

impl TopicAtom {
    pub fn new(id: usize, vocab: usize, users: usize, betas: Vec<f64>) -> Self {
        let parent_mass = vec![0.0; betas.len() * users];
        Self {
            id,
            word_counts: vec![0; vocab],
            total_count: 0,
            franchise: DecayedCounter::default(),
            beta_samples: betas
                .into_iter()
                .map(|beta| BetaSample {
                    beta,
                    log_weight: 0.0,
                })
                .collect(),
            event_count: 0,
            user_event_counts: vec![0; users],
            parent_mass,
            parent_mass_live: false,
        }
    }

    pub fn add_doc(&mut self, doc: &Doc) {
        for &(w, n) in doc.words() {
            self.word_counts[w as usize] += n;
        }
        self.total_count += doc.len() as u64;
    }
}

/// A user's local topic: which global topic it serves and how much it is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTopic {
    pub topic: usize,
    pub usage: DecayedCounter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user: usize,
    /// At most one entry per global topic.
    pub local_topics: Vec<LocalTopic>,
    pub exo_event_count: u64,
    /// `triggered_counts[v]`: events of this user triggered by user `v`.
    pub triggered_counts: Vec<u64>,
}

impl UserState {
    pub fn new(user: usize, users: usize) -> Self {
        Self {
            user,
            local_topics: Vec::new(),
            exo_event_count: 0,
            triggered_counts: vec![0; users],
        }
    }

    pub fn local_index(&self, topic: usize) -> Option<usize> {
        self.local_topics.iter().position(|l| l.topic == topic)
    }

    /// Records one exogenous event of this user on `topic` at time `t`.
    pub fn bump_topic(&mut self, topic: usize, t: f64, nu: f64) -> Result<()> {
        match self.local_index(topic) {
            Some(j) => {
                let l = &mut self.local_topics[j];
                l.usage = l.usage.bump(t, 1.0, nu)?;
            }
            None => self.local_topics.push(LocalTopic {
                topic,
                usage: DecayedCounter::default().bump(t, 1.0, nu)?,
            }),
        }
        Ok(())
    }

    /// Number of local topics this user has ever used.
    pub fn occupancy(&self) -> usize {
        self.local_topics.len()
    }
}

/// Latent provenance of one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchingRecord {
    /// Triggering event, `None` for exogenous events.
    #[serde(rename = "s")]
    pub parent: Option<usize>,
    /// Global topic id.
    #[serde(rename = "z")]
    pub topic: usize,
    /// Exogenous event whose topic was drawn from the global popularity
    /// distribution (a new local table).
    #[serde(rename = "l")]
    pub new_table: bool,
}

impl BranchingRecord {
    pub fn exogenous(topic: usize, new_table: bool) -> Self {
        Self {
            parent: None,
            topic,
            new_table,
        }
    }

    pub fn triggered(parent: usize, topic: usize) -> Self {
        Self {
            parent: Some(parent),
            topic,
            new_table: false,
        }
    }

    pub fn is_exogenous(&self) -> bool {
        self.parent.is_none()
    }
}

/// Checks the structural invariants of a record sequence: parents precede
/// children, children inherit their parent's topic, and only exogenous
/// events open tables.
pub fn check_records(records: &[BranchingRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if let Some(s) = r.parent {
            if s >= i {
                return Err(Error::InvalidConfig(format!(
                    "event {i} triggered by later event {s}"
                )));
            }
            if records[s].topic != r.topic {
                return Err(Error::InvalidConfig(format!(
                    "event {i} has topic {} but its parent {s} has topic {}",
                    r.topic, records[s].topic
                )));
            }
            if r.new_table {
                return Err(Error::InvalidConfig(format!(
                    "triggered event {i} flagged as new table"
                )));
            }
        }
    }
    Ok(())
}
