//! Synthetic event streams drawn from the full generative model.
//!
//! Times come from Ogata thinning of the superposed intensity
//! `Σ_u λ_u(t)`. Between events every intensity only decays, so the total
//! intensity right after the current time is a valid upper bound until
//! the next accepted event.

use std::path::Path;

use log::warn;
use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{crp_topic_predictive, franchise_predictive};
use crate::model::{BranchingRecord, DecayedCounter, Event, Hyperparams, UserState};
use crate::snapshot::Snapshot;

/// Parents whose kernel has decayed below `exp(-PRUNE)` stop exciting.
const PRUNE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Stop at this time.
    pub horizon: Option<f64>,
    /// Stop after this many events.
    pub num_events: Option<usize>,
    /// Abort when this many events are exceeded.
    pub max_events: usize,
    /// Exogenous rate per user; `mu_default` for everyone when absent.
    pub mu: Option<Vec<f64>>,
    pub mu_default: f64,
    /// Influence matrix, row = source. Drawn when absent.
    pub alpha: Option<Vec<Vec<f64>>>,
    /// Drawn entries are Uniform[0, alpha_max] ...
    pub alpha_max: f64,
    /// ... and zero with this probability.
    pub alpha_sparsity: f64,
    /// Kernel rates of a fixed topic set. Topics are drawn lazily from the
    /// priors when absent.
    pub topic_betas: Option<Vec<f64>>,
    /// Give each fixed topic its own contiguous block of the vocabulary.
    pub disjoint_vocab: bool,
    /// Mean document length; zero produces empty documents.
    pub doc_length: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            num_events: Some(10_000),
            max_events: 1_000_000,
            mu: None,
            mu_default: 0.05,
            alpha: None,
            alpha_max: 0.1,
            alpha_sparsity: 0.5,
            topic_betas: Some(vec![0.5, 1.0, 2.0, 4.0]),
            disjoint_vocab: false,
            doc_length: 20.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self, hyper: &Hyperparams) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.horizon.is_none() && self.num_events.is_none() {
            return bad("simulation needs a horizon or a target event count".into());
        }
        if let Some(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("horizon {t} must be finite and non-negative"));
            }
        }
        let u = hyper.num_users;
        if let Some(mu) = &self.mu {
            if mu.len() != u || mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return bad(format!("mu must hold {u} non-negative rates"));
            }
        } else if !(self.mu_default >= 0.0) {
            return bad("mu_default must be non-negative".into());
        }
        if let Some(a) = &self.alpha {
            if a.len() != u
                || a.iter()
                    .any(|row| row.len() != u || row.iter().any(|x| !(*x >= 0.0 && x.is_finite())))
            {
                return bad(format!("alpha must be a {u}x{u} non-negative matrix"));
            }
        } else if !(self.alpha_max >= 0.0 && (0.0..=1.0).contains(&self.alpha_sparsity)) {
            return bad("alpha_max must be non-negative and alpha_sparsity in [0, 1]".into());
        }
        if let Some(b) = &self.topic_betas {
            if b.is_empty() || b.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return bad("topic_betas must be non-empty and positive".into());
            }
            if self.disjoint_vocab && hyper.vocab_size < b.len() {
                return bad("disjoint vocabularies need at least one word per topic".into());
            }
        }
        if !(self.doc_length >= 0.0 && self.doc_length.is_finite()) {
            return bad("doc_length must be non-negative".into());
        }
        Ok(())
    }
}

/// Parameters and latent structure behind a simulated stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub records: Vec<BranchingRecord>,
}

impl GroundTruth {
    /// Spectral radius of `alpha / min β`, a conservative bound on the
    /// expected number of offspring per event.
    pub fn branching_bound(&self) -> f64 {
        let beta_min = self.beta.iter().copied().fold(f64::INFINITY, f64::min);
        if !beta_min.is_finite() {
            return 0.0;
        }
        spectral_radius(&self.alpha) / beta_min
    }

    pub fn topic_labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.topic).collect()
    }
}

/// Perron root of a non-negative square matrix by power iteration.
pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..1000 {
        let y: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| m[i][j] * x[i]).sum::<f64>())
            .collect();
        let norm = y.iter().copied().fold(0.0, f64::max);
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
        let delta = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        rho = norm;
        if delta < 1e-13 {
            break;
        }
    }
    rho
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub events: Vec<Event>,
    pub truth: GroundTruth,
}

fn dirichlet(
    rng: &mut ChaCha8Rng,
    concentration: f64,
    support: std::ops::Range<usize>,
    vocab: usize,
) -> Vec<f64> {
    let g = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut phi = vec![0.0; vocab];
    let mut total = 0.0;
    for w in support.clone() {
        let x: f64 = g.sample(rng);
        phi[w] = x;
        total += x;
    }
    if total > 0.0 && total.is_finite() {
        for w in support {
            phi[w] /= total;
        }
    } else {
        let n = support.len() as f64;
        for w in support {
            phi[w] = 1.0 / n;
        }
    }
    phi
}

struct Topic {
    beta: f64,
    phi: Vec<f64>,
    words: WeightedIndex<f64>,
}

impl Topic {
    fn new(beta: f64, phi: Vec<f64>) -> Self {
        let words = WeightedIndex::new(&phi).expect("topic has positive mass");
        Self { beta, phi, words }
    }
}

struct Sampler<'a> {
    hyper: &'a Hyperparams,
    config: &'a SimulationConfig,
    rng: ChaCha8Rng,
    mu: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    strength: Vec<f64>,
    topics: Vec<Topic>,
    /// Fixed topic set: new tables draw uniformly among these atoms.
    fixed_atoms: bool,
    users: Vec<UserState>,
    franchise: Vec<DecayedCounter>,
    events: Vec<Event>,
    records: Vec<BranchingRecord>,
    live_from: usize,
}

impl<'a> Sampler<'a> {
    fn new(hyper: &'a Hyperparams, config: &'a SimulationConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = hyper.num_users;
        let mu = config
            .mu
            .clone()
            .unwrap_or_else(|| vec![config.mu_default; u]);
        let alpha = match &config.alpha {
            Some(a) => a.clone(),
            None => (0..u)
                .map(|_| {
                    (0..u)
                        .map(|_| {
                            if rng.gen::<f64>() < config.alpha_sparsity {
                                0.0
                            } else {
                                rng.gen::<f64>() * config.alpha_max
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        let strength = alpha.iter().map(|r: &Vec<f64>| r.iter().sum()).collect();
        let mut topics = Vec::new();
        let fixed_atoms = config.topic_betas.is_some();
        if let Some(betas) = &config.topic_betas {
            let k = betas.len();
            let v = hyper.vocab_size;
            for (i, &beta) in betas.iter().enumerate() {
                let support = if config.disjoint_vocab {
                    i * v / k..(i + 1) * v / k
                } else {
                    0..v
                };
                let phi = dirichlet(&mut rng, hyper.eta, support, v);
                topics.push(Topic::new(beta, phi));
            }
        }
        let franchise = vec![DecayedCounter::default(); topics.len()];
        Self {
            hyper,
            config,
            rng,
            mu,
            alpha,
            strength,
            topics,
            fixed_atoms,
            users: (0..u).map(|i| UserState::new(i, u)).collect(),
            franchise,
            events: Vec::new(),
            records: Vec::new(),
            live_from: 0,
        }
    }

    fn beta_min(&self) -> f64 {
        self.topics
            .iter()
            .map(|k| k.beta)
            .fold(f64::INFINITY, f64::min)
    }

    fn prune(&mut self, t: f64) {
        let beta_min = self.beta_min();
        while self.live_from < self.events.len()
            && beta_min * (t - self.events[self.live_from].time) > PRUNE
        {
            self.live_from += 1;
        }
    }

    fn total_intensity(&self, t: f64) -> f64 {
        let mut total: f64 = self.mu.iter().sum();
        for j in self.live_from..self.events.len() {
            let e = &self.events[j];
            let beta = self.topics[self.records[j].topic].beta;
            total += self.strength[e.user] * (-beta * (t - e.time)).exp();
        }
        total
    }

    fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    fn fresh_topic(&mut self) -> Result<usize> {
        if self.fixed_atoms {
            return Ok(self.rng.gen_range(0..self.topics.len()));
        }
        let h = self.hyper;
        let prior = Gamma::new(h.beta_prior.shape, 1.0 / h.beta_prior.rate)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let beta = prior.sample(&mut self.rng);
        let phi = dirichlet(&mut self.rng, h.eta, 0..h.vocab_size, h.vocab_size);
        self.topics.push(Topic::new(beta, phi));
        self.franchise.push(DecayedCounter::default());
        Ok(self.topics.len() - 1)
    }

    /// Picks user, trigger and topic for an event accepted at `t`.
    fn emit(&mut self, t: f64) -> Result<()> {
        let u_count = self.hyper.num_users;
        let live: Vec<(usize, f64)> = (self.live_from..self.events.len())
            .map(|j| {
                (
                    j,
                    (-self.topics[self.records[j].topic].beta * (t - self.events[j].time)).exp(),
                )
            })
            .collect();
        let per_user: Vec<f64> = (0..u_count)
            .map(|u| {
                self.mu[u]
                    + live
                        .iter()
                        .map(|&(j, k)| self.alpha[self.events[j].user][u] * k)
                        .sum::<f64>()
            })
            .collect();
        let u = self.categorical(&per_user);

        let mut parts = Vec::with_capacity(live.len() + 1);
        parts.push(self.mu[u]);
        parts.extend(
            live.iter()
                .map(|&(j, k)| self.alpha[self.events[j].user][u] * k),
        );
        let pick = self.categorical(&parts);

        let h = self.hyper;
        let record = if pick > 0 {
            let parent = live[pick - 1].0;
            BranchingRecord::triggered(parent, self.records[parent].topic)
        } else {
            let crp = crp_topic_predictive(&self.users[u], t, h.gamma, h.nu)?;
            let mut weights = crp.local.clone();
            weights.push(crp.new);
            let choice = self.categorical(&weights);
            if choice < crp.local.len() {
                BranchingRecord::exogenous(self.users[u].local_topics[choice].topic, false)
            } else {
                let fr = franchise_predictive(&self.franchise, t, h.zeta, h.nu)?;
                let mut weights = fr.existing.clone();
                weights.push(fr.fresh);
                let k = self.categorical(&weights);
                let topic = if k < fr.existing.len() {
                    k
                } else {
                    self.fresh_topic()?
                };
                BranchingRecord::exogenous(topic, true)
            }
        };
        if record.is_exogenous() {
            self.users[u].bump_topic(record.topic, t, h.nu)?;
            if record.new_table {
                self.franchise[record.topic] = self.franchise[record.topic].bump(t, 1.0, h.nu)?;
            }
        }

        let tokens = if self.config.doc_length > 0.0 {
            let len: f64 = Poisson::new(self.config.doc_length)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut self.rng);
            let words = &self.topics[record.topic].words;
            (0..(len as usize).max(1))
                .map(|_| words.sample(&mut self.rng) as u32)
                .collect()
        } else {
            Vec::new()
        };
        self.events.push(Event::new(t, u, tokens));
        self.records.push(record);
        Ok(())
    }

    fn run(mut self) -> Result<Simulation> {
        let horizon = self.config.horizon.unwrap_or(f64::INFINITY);
        let target = self.config.num_events.unwrap_or(usize::MAX);
        let mut t = 0.0;
        let mut bound = self.total_intensity(t);
        while self.events.len() < target && bound > 0.0 {
            let gap: f64 = Exp1.sample(&mut self.rng);
            t += gap / bound;
            if t > horizon {
                break;
            }
            self.prune(t);
            let current = self.total_intensity(t);
            if self.rng.gen::<f64>() * bound <= current {
                self.emit(t)?;
                if self.events.len() > self.config.max_events {
                    return Err(Error::Supercritical {
                        cap: self.config.max_events,
                        time: t,
                    });
                }
                bound = self.total_intensity(t);
            } else {
                bound = current;
            }
        }
        let truth = GroundTruth {
            mu: self.mu,
            alpha: self.alpha,
            beta: self.topics.iter().map(|k| k.beta).collect(),
            phi: self.topics.into_iter().map(|k| k.phi).collect(),
            records: self.records,
        };
        Ok(Simulation {
            events: self.events,
            truth,
        })
    }
}

/// Draws a stream from the generative model. Deterministic given `seed`.
pub fn simulate(hyper: &Hyperparams, config: &SimulationConfig, seed: u64) -> Result<Simulation> {
    hyper.validate()?;
    config.validate(hyper)?;
    let sampler = Sampler::new(hyper, config, seed);
    if sampler.fixed_atoms {
        let bound = spectral_radius(&sampler.alpha) / sampler.beta_min();
        if bound >= 1.0 {
            warn!("influence matrix may be supercritical (spectral radius of alpha / beta_min = {bound:.3})");
        }
    }
    sampler.run()
}

/// Writes the ground truth in the model snapshot format.
pub fn export_truth(truth: &GroundTruth, hyper: &Hyperparams, path: &Path) -> Result<()> {
    Snapshot::from_truth(truth, hyper).save(path)
}
