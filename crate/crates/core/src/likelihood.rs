//! Intensities, compensators, topic predictives and the per-event posterior
//! over (trigger, topic) used as the particle proposal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    integral_from, kernel_eval, kernel_integral, BranchingRecord, DecayedCounter, Doc, Event,
    Hyperparams, TopicAtom, UserState,
};

/// Plug-in exogenous rates and influence weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimates {
    /// `mu[u]`: exogenous rate of user `u`.
    pub mu: Vec<f64>,
    /// `alpha[v][u]`: influence of source `v` on target `u`.
    pub alpha: Vec<Vec<f64>>,
    strength: Vec<f64>,
}

impl RateEstimates {
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<f64>>) -> Self {
        let strength = alpha.iter().map(|row| row.iter().sum()).collect();
        Self {
            mu,
            alpha,
            strength,
        }
    }

    /// Prior means for every entry.
    pub fn prior(h: &Hyperparams) -> Self {
        let u = h.num_users;
        Self::new(
            vec![h.mu_prior.mean(); u],
            vec![vec![h.alpha_prior.mean(); u]; u],
        )
    }

    pub fn num_users(&self) -> usize {
        self.mu.len()
    }

    /// `Σ_u alpha[v][u]`: total excitation an event of `v` spreads.
    pub fn out_strength(&self, v: usize) -> f64 {
        self.strength[v]
    }

    pub fn alpha_flat(&self) -> Vec<f64> {
        self.alpha.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicMode {
    /// Full model: per-user topic tables sharing global topics.
    #[default]
    Hierarchical,
    /// Every event on one global topic; documents are ignored.
    Single,
}

/// Restrictions of the full model, used for baselines and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMode {
    pub topics: TopicMode,
    /// When false no event can trigger another (influence fixed at zero).
    pub triggering: bool,
}

impl Default for ModelMode {
    fn default() -> Self {
        Self {
            topics: TopicMode::Hierarchical,
            triggering: true,
        }
    }
}

fn beta_of(betas: &[f64], topic: usize) -> Result<f64> {
    betas.get(topic).copied().ok_or(Error::UnknownTopic(topic))
}

/// Intensity that event `parent` contributes to user `u` at time `t`.
pub fn trigger_component(
    parent: &Event,
    record: &BranchingRecord,
    u: usize,
    t: f64,
    rates: &RateEstimates,
    betas: &[f64],
) -> Result<f64> {
    let beta = beta_of(betas, record.topic)?;
    let weight = rates.alpha[parent.user][u];
    Ok(weight * kernel_eval(beta, t, parent.time)?)
}

/// `λ_u(t) = μ_u + Σ_s α_{u_s u} exp(-β_{z_s}(t - t_s))` over the full history.
pub fn user_intensity(
    u: usize,
    t: f64,
    events: &[Event],
    records: &[BranchingRecord],
    rates: &RateEstimates,
    betas: &[f64],
) -> Result<f64> {
    let mut total = rates.mu[u];
    for (e, r) in events.iter().zip(records) {
        total += trigger_component(e, r, u, t, rates, betas)?;
    }
    Ok(total)
}

/// `∫_a^b λ_u(τ) dτ` for a history that is fixed up to `a`.
pub fn compensator(
    u: usize,
    a: f64,
    b: f64,
    events: &[Event],
    records: &[BranchingRecord],
    rates: &RateEstimates,
    betas: &[f64],
) -> Result<f64> {
    if a > b {
        return Err(Error::NegativeElapsed { from: a, to: b });
    }
    let mut total = rates.mu[u] * (b - a);
    for (e, r) in events.iter().zip(records) {
        let beta = beta_of(betas, r.topic)?;
        total += rates.alpha[e.user][u] * kernel_integral(beta, e.time, a, b)?;
    }
    Ok(total)
}

/// Normalized choice probabilities at one user's topic tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpPredictive {
    /// Parallel to `UserState::local_topics`.
    pub local: Vec<f64>,
    pub new: f64,
}

pub fn crp_topic_predictive(
    user: &UserState,
    t: f64,
    gamma: f64,
    nu: f64,
) -> Result<CrpPredictive> {
    let counts = user
        .local_topics
        .iter()
        .map(|l| l.usage.read(t, nu))
        .collect::<Result<Vec<f64>>>()?;
    let norm = counts.iter().sum::<f64>() + gamma;
    Ok(CrpPredictive {
        local: counts.into_iter().map(|c| c / norm).collect(),
        new: gamma / norm,
    })
}

/// Normalized choice probabilities over global topics for a new table.
#[derive(Debug, Clone, PartialEq)]
pub struct FranchisePredictive {
    pub existing: Vec<f64>,
    pub fresh: f64,
}

pub fn franchise_predictive<'a, I>(
    popularity: I,
    t: f64,
    zeta: f64,
    nu: f64,
) -> Result<FranchisePredictive>
where
    I: IntoIterator<Item = &'a DecayedCounter>,
{
    let counts = popularity
        .into_iter()
        .map(|c| c.read(t, nu))
        .collect::<Result<Vec<f64>>>()?;
    let norm = counts.iter().sum::<f64>() + zeta;
    Ok(FranchisePredictive {
        existing: counts.into_iter().map(|c| c / norm).collect(),
        fresh: zeta / norm,
    })
}

/// Collapsed Dirichlet-multinomial log predictive of `doc` under a topic's
/// word counts (`None` for a topic with no data yet). The multinomial
/// coefficient is omitted; it does not depend on the topic.
pub fn doc_predictive(doc: &Doc, topic: Option<&TopicAtom>, eta: f64, vocab: usize) -> Result<f64> {
    doc.check_vocab(vocab)?;
    let (counts, total) = match topic {
        Some(k) => (Some(k.word_counts.as_slice()), k.total_count as f64),
        None => (None, 0.0),
    };
    let mut lp = 0.0;
    for &(w, n) in doc.words() {
        let c = counts.map_or(0.0, |c| c[w as usize] as f64) + eta;
        for r in 0..n {
            lp += (c + r as f64).ln();
        }
    }
    let base = vocab as f64 * eta + total;
    for j in 0..doc.len() {
        lp -= (base + j as f64).ln();
    }
    Ok(lp)
}

/// One way the next event can be explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// Triggered by an earlier event; inherits its topic.
    Triggered { parent: usize },
    /// Exogenous, reusing one of the user's local topics.
    Local { topic: usize },
    /// Exogenous, a new local table on an existing global topic.
    NewTable { topic: usize },
    /// Exogenous, a brand new global topic.
    NewTopic,
}

/// Everything the proposal needs to know about one particle's history.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    pub events: &'a [Event],
    pub records: &'a [BranchingRecord],
    pub users: &'a [UserState],
    pub topics: &'a [TopicAtom],
    pub rates: &'a RateEstimates,
    /// Current kernel rate per global topic.
    pub betas: &'a [f64],
}

/// Evaluation knobs that are not part of the history.
#[derive(Debug, Clone, Copy)]
pub struct PredictiveOptions<'a> {
    pub hyper: &'a Hyperparams,
    pub mode: ModelMode,
    /// Earliest event index that may act as a trigger.
    pub first_candidate: usize,
    /// Parents with `β (t - t_s)` above this are dropped.
    pub window: f64,
}

/// Unnormalized log scores over candidate explanations of the next event.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub candidates: Vec<Candidate>,
    pub log_scores: Vec<f64>,
    /// `log Σ scores`.
    pub log_total: f64,
    /// `log λ_u(t)`: intensity of the observed user, documents excluded.
    pub log_intensity: f64,
    /// `Σ_v Λ_v(t_prev, t)`.
    pub compensator: f64,
}

impl ScoreTable {
    /// Joint log density of the event given the history: `log Σ scores - Σ_v Λ_v`.
    pub fn log_marginal(&self) -> f64 {
        self.log_total - self.compensator
    }

    /// Log density of the event's time and user only.
    pub fn time_log_density(&self) -> f64 {
        self.log_intensity - self.compensator
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_scores
            .iter()
            .map(|l| (l - self.log_total).exp())
            .collect()
    }

    /// The record produced by choosing candidate `idx`, given `num_topics`
    /// existing global topics and the parent records.
    pub fn record_for(
        &self,
        idx: usize,
        records: &[BranchingRecord],
        num_topics: usize,
    ) -> BranchingRecord {
        match self.candidates[idx] {
            Candidate::Triggered { parent } => {
                BranchingRecord::triggered(parent, records[parent].topic)
            }
            Candidate::Local { topic } => BranchingRecord::exogenous(topic, false),
            Candidate::NewTable { topic } => BranchingRecord::exogenous(topic, true),
            Candidate::NewTopic => BranchingRecord::exogenous(num_topics, true),
        }
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Parents of the window that may still excite at time `t`.
fn live_parents<'a>(
    view: &'a HistoryView<'a>,
    opts: &'a PredictiveOptions<'a>,
    t: f64,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    let n = view.records.len();
    (opts.first_candidate..n).filter_map(move |j| {
        let beta = view.betas[view.records[j].topic];
        let lag = t - view.events[j].time;
        (beta * lag <= opts.window).then_some((j, beta))
    })
}

/// `Σ_v Λ_v(t_prev, t)` restricted to the candidate window.
pub fn windowed_total_compensator(
    view: &HistoryView<'_>,
    opts: &PredictiveOptions<'_>,
    t_prev: f64,
    t: f64,
) -> Result<f64> {
    if t_prev > t {
        return Err(Error::NegativeElapsed {
            from: t_prev,
            to: t,
        });
    }
    let mut total: f64 = view.rates.mu.iter().sum::<f64>() * (t - t_prev);
    if opts.mode.triggering {
        for (j, beta) in live_parents(view, opts, t) {
            let e = &view.events[j];
            let strength = view.rates.out_strength(e.user);
            if strength > 0.0 {
                let lo = t_prev.max(e.time);
                total += strength * integral_from(beta, lo - e.time, t - lo);
            }
        }
    }
    Ok(total)
}

/// Posterior over how `next` arises given the particle's history. Scores
/// are exact up to one shared constant; the compensator over
/// `(t_prev, next.time)` completes the event's marginal density.
pub fn event_predictive(
    next: &Event,
    t_prev: f64,
    view: &HistoryView<'_>,
    opts: &PredictiveOptions<'_>,
) -> Result<ScoreTable> {
    let h = opts.hyper;
    let t = next.time;
    let u = next.user;
    if t < t_prev {
        return Err(Error::NegativeElapsed {
            from: t_prev,
            to: t,
        });
    }
    if u >= view.rates.num_users() {
        return Err(Error::UserOutOfRange {
            user: u,
            users: view.rates.num_users(),
        });
    }
    next.doc.check_vocab(h.vocab_size)?;
    let use_docs = opts.mode.topics == TopicMode::Hierarchical;

    let mut doc_cache: Vec<Option<f64>> = vec![None; view.topics.len()];
    let mut doc_lp = |k: usize| -> Result<f64> {
        if !use_docs {
            return Ok(0.0);
        }
        let slot = doc_cache.get_mut(k).ok_or(Error::UnknownTopic(k))?;
        if let Some(v) = *slot {
            return Ok(v);
        }
        let v = doc_predictive(&next.doc, Some(&view.topics[k]), h.eta, h.vocab_size)?;
        *slot = Some(v);
        Ok(v)
    };

    let mut candidates = Vec::new();
    let mut log_scores = Vec::new();
    let mu = view.rates.mu[u];
    let mut intensity = mu;

    if opts.mode.triggering {
        for (j, beta) in live_parents(view, opts, t) {
            let parent = &view.events[j];
            let weight = view.rates.alpha[parent.user][u];
            if weight <= 0.0 {
                continue;
            }
            let lag = t - parent.time;
            intensity += weight * (-beta * lag).exp();
            candidates.push(Candidate::Triggered { parent: j });
            log_scores.push(weight.ln() - beta * lag + doc_lp(view.records[j].topic)?);
        }
    }

    if mu > 0.0 {
        let log_mu = mu.ln();
        match opts.mode.topics {
            TopicMode::Single => {
                if view.topics.is_empty() {
                    candidates.push(Candidate::NewTopic);
                } else {
                    candidates.push(Candidate::Local { topic: 0 });
                }
                log_scores.push(log_mu);
            }
            TopicMode::Hierarchical => {
                let user = &view.users[u];
                let crp = crp_topic_predictive(user, t, h.gamma, h.nu)?;
                for (l, p) in user.local_topics.iter().zip(&crp.local) {
                    if *p > 0.0 {
                        candidates.push(Candidate::Local { topic: l.topic });
                        log_scores.push(log_mu + p.ln() + doc_lp(l.topic)?);
                    }
                }
                let fr = franchise_predictive(
                    view.topics.iter().map(|k| &k.franchise),
                    t,
                    h.zeta,
                    h.nu,
                )?;
                let log_new = log_mu + crp.new.ln();
                for (k, p) in fr.existing.iter().enumerate() {
                    if *p > 0.0 {
                        candidates.push(Candidate::NewTable { topic: k });
                        log_scores.push(log_new + p.ln() + doc_lp(k)?);
                    }
                }
                candidates.push(Candidate::NewTopic);
                log_scores.push(
                    log_new + fr.fresh.ln() + doc_predictive(&next.doc, None, h.eta, h.vocab_size)?,
                );
            }
        }
    }

    let log_total = log_sum_exp(&log_scores);
    let compensator = windowed_total_compensator(view, opts, t_prev, t)?;
    Ok(ScoreTable {
        candidates,
        log_scores,
        log_total,
        log_intensity: intensity.ln(),
        compensator,
    })
}
