//! Independent reference computations shared by the integration and
//! acceptance suites. The oracles here never call into the library's
//! likelihood code; `checks` holds the comparisons against it.

#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;

use hnp3::{BranchingRecord, Event};
use statrs::function::gamma::ln_gamma;

/// Adaptive Simpson quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Dirichlet-multinomial predictive of a bag of words as a ratio of Gamma
/// functions, without the multinomial coefficient.
pub fn doc_log_gamma_ratio(doc: &[u32], counts: &[u32], eta: f64) -> f64 {
    let v = counts.len() as f64;
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut bag: BTreeMap<u32, u32> = BTreeMap::new();
    for &w in doc {
        *bag.entry(w).or_default() += 1;
    }
    let mut lp = ln_gamma(v * eta + total) - ln_gamma(v * eta + total + doc.len() as f64);
    for (w, n) in bag {
        let c = counts[w as usize] as f64 + eta;
        lp += ln_gamma(c + n as f64) - ln_gamma(c);
    }
    lp
}

/// The generative model with every rate fixed, evaluated by brute force.
pub struct Oracle<'a> {
    pub events: &'a [Event],
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    /// Kernel rate of each global topic, long enough for any configuration.
    pub betas: Vec<f64>,
    pub gamma: f64,
    pub zeta: f64,
    pub nu: f64,
    pub eta: f64,
    pub vocab: usize,
    pub origin: f64,
    /// Ignore documents and keep every event on one topic.
    pub single_topic: bool,
}

impl Oracle<'_> {
    fn tokens(&self, i: usize) -> Vec<u32> {
        self.events[i].doc.tokens().collect()
    }

    fn topic_counts(&self, records: &[BranchingRecord], k: usize, before: usize) -> Vec<u32> {
        let mut c = vec![0u32; self.vocab];
        for j in 0..before {
            if records[j].topic == k {
                for w in self.tokens(j) {
                    c[w as usize] += 1;
                }
            }
        }
        c
    }

    fn doc_lp(&self, records: &[BranchingRecord], i: usize, k: usize) -> f64 {
        if self.single_topic {
            return 0.0;
        }
        doc_log_gamma_ratio(&self.tokens(i), &self.topic_counts(records, k, i), self.eta)
    }

    fn num_topics(records: &[BranchingRecord]) -> usize {
        records.iter().map(|r| r.topic + 1).max().unwrap_or(0)
    }

    /// Every record event `i` may take given the records before it.
    pub fn choices(&self, prefix: &[BranchingRecord], i: usize) -> Vec<BranchingRecord> {
        let mut out = Vec::new();
        for (j, r) in prefix.iter().enumerate() {
            out.push(BranchingRecord::triggered(j, r.topic));
        }
        let k_count = Self::num_topics(prefix);
        let u = self.events[i].user;
        if self.single_topic {
            out.push(BranchingRecord::exogenous(0, k_count == 0));
            return out;
        }
        for k in 0..k_count {
            let has = prefix
                .iter()
                .enumerate()
                .any(|(j, r)| r.parent.is_none() && r.topic == k && self.events[j].user == u);
            if has {
                out.push(BranchingRecord::exogenous(k, false));
            }
            out.push(BranchingRecord::exogenous(k, true));
        }
        out.push(BranchingRecord::exogenous(k_count, true));
        out
    }

    /// Log density of event `i` taking `records[i]`, excluding survival.
    pub fn log_score(&self, records: &[BranchingRecord], i: usize) -> f64 {
        let e = &self.events[i];
        let r = records[i];
        let t = e.time;
        if let Some(s) = r.parent {
            let p = &self.events[s];
            let a = self.alpha[p.user][e.user];
            return a.ln() - self.betas[r.topic] * (t - p.time) + self.doc_lp(records, i, r.topic);
        }
        let log_mu = self.mu[e.user].ln();
        if self.single_topic {
            return log_mu;
        }
        let decay = |j: usize| (-self.nu * (t - self.events[j].time)).exp();
        let mut n_uk = BTreeMap::<usize, f64>::new();
        let mut m_k = BTreeMap::<usize, f64>::new();
        for j in 0..i {
            let rj = records[j];
            if rj.parent.is_none() && self.events[j].user == e.user {
                *n_uk.entry(rj.topic).or_default() += decay(j);
            }
            if rj.new_table {
                *m_k.entry(rj.topic).or_default() += decay(j);
            }
        }
        let n_u: f64 = n_uk.values().sum();
        let m: f64 = m_k.values().sum();
        let k_count = Self::num_topics(&records[..i]);
        let crp_new = self.gamma / (n_u + self.gamma);
        let topic_part = if !r.new_table {
            n_uk.get(&r.topic).copied().unwrap_or(0.0) / (n_u + self.gamma)
        } else if r.topic < k_count {
            crp_new * m_k.get(&r.topic).copied().unwrap_or(0.0) / (m + self.zeta)
        } else {
            crp_new * self.zeta / (m + self.zeta)
        };
        log_mu + topic_part.ln() + self.doc_lp(records, i, r.topic)
    }

    /// `Σ_u ∫ λ_u` from the origin to the last event.
    pub fn total_compensator(&self, records: &[BranchingRecord]) -> f64 {
        let n = records.len();
        if n == 0 {
            return 0.0;
        }
        let t_end = self.events[n - 1].time;
        let mut total: f64 = self.mu.iter().sum::<f64>() * (t_end - self.origin);
        for j in 0..n {
            let e = &self.events[j];
            let beta = self.betas[records[j].topic];
            let out: f64 = self.alpha[e.user].iter().sum();
            total += out * (1.0 - (-beta * (t_end - e.time)).exp()) / beta;
        }
        total
    }

    /// Joint log density of the stream and a full configuration.
    pub fn log_joint(&self, records: &[BranchingRecord]) -> f64 {
        (0..records.len())
            .map(|i| self.log_score(records, i))
            .sum::<f64>()
            - self.total_compensator(records)
    }

    /// Every configuration of the first `n` events.
    pub fn configurations(&self, n: usize) -> Vec<Vec<BranchingRecord>> {
        let mut all = vec![Vec::new()];
        for i in 0..n {
            let mut next = Vec::new();
            for prefix in &all {
                for c in self.choices(prefix, i) {
                    let mut r = prefix.clone();
                    r.push(c);
                    next.push(r);
                }
            }
            all = next;
        }
        all
    }

    /// Log marginal likelihood of the first `n` events.
    pub fn log_marginal(&self, n: usize) -> f64 {
        let logs: Vec<f64> = self
            .configurations(n)
            .iter()
            .map(|r| self.log_joint(r))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic, with the usual small-sample
/// correction to the scaling.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn toy_hyper(particles: usize) -> hnp3::Hyperparams {
    hnp3::Hyperparams {
        gamma: 0.7,
        zeta: 1.3,
        nu: 0.2,
        eta: 0.5,
        num_users: 2,
        vocab_size: 2,
        particles,
        beta_samples: 16,
        // kernel rates pinned near 1 so the fixed-rate oracle applies
        beta_prior: hnp3::GammaPrior {
            shape: 1e6,
            rate: 1e6,
        },
        mu_prior: hnp3::GammaPrior {
            shape: 2.0,
            rate: 4.0,
        },
        alpha_prior: hnp3::GammaPrior {
            shape: 3.0,
            rate: 5.0,
        },
    }
}

fn toy_events(rng: &mut impl rand::Rng, n: usize) -> Vec<Event> {
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0.1..1.0);
            let len = rng.gen_range(1..=3);
            Event::new(
                t,
                rng.gen_range(0..2),
                (0..len).map(|_| rng.gen_range(0..2u32)),
            )
        })
        .collect()
}

/// Largest gap between the engine's normalized proposal for the third event
/// of a random toy stream and brute-force enumeration, plus whether both
/// sides list the same set of explanations.
pub fn proposal_gap(seed: u64) -> (f64, bool) {
    use hnp3::inference::Particle;
    use hnp3::likelihood::{event_predictive, PredictiveOptions};
    use hnp3::{InferenceConfig, RateEstimates};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyper = toy_hyper(1);
    let config = InferenceConfig {
        refresh_every: 1_000_000,
        window: f64::INFINITY,
        ..Default::default()
    };
    let events = toy_events(&mut rng, 3);
    let mu: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..2.0)).collect();
    let alpha: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..2).map(|_| rng.gen_range(0.05..1.5)).collect())
        .collect();
    let betas: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..3.0)).collect();

    let mut oracle = Oracle {
        events: &events,
        mu: mu.clone(),
        alpha: alpha.clone(),
        betas: betas.clone(),
        gamma: hyper.gamma,
        zeta: hyper.zeta,
        nu: hyper.nu,
        eta: hyper.eta,
        vocab: 2,
        origin: 0.0,
        single_topic: false,
    };
    // random valid history for the first two events
    let mut prefix = Vec::new();
    for i in 0..2 {
        let c = oracle.choices(&prefix, i);
        prefix.push(c[rng.gen_range(0..c.len())]);
    }
    let particle = Particle::replay(
        &hyper,
        &config,
        &events[..2],
        &prefix,
        None,
        ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let k = particle.topics().len();
    let rates = RateEstimates::new(mu, alpha);
    let mut view = particle.view(&events[..2]);
    view.rates = &rates;
    view.betas = &betas[..k];
    let opts = PredictiveOptions {
        hyper: &hyper,
        mode: Default::default(),
        first_candidate: 0,
        window: f64::INFINITY,
    };
    let table = event_predictive(&events[2], events[1].time, &view, &opts).unwrap();
    let engine: Vec<(BranchingRecord, f64)> = table
        .probabilities()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (table.record_for(i, &prefix, k), p))
        .collect();

    oracle.betas = betas;
    let options = oracle.choices(&prefix, 2);
    let logs: Vec<f64> = options
        .iter()
        .map(|c| {
            let mut r = prefix.clone();
            r.push(*c);
            oracle.log_joint(&r)
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let mut gap: f64 = 0.0;
    let mut same = options.len() == engine.len();
    for (c, l) in options.iter().zip(&logs) {
        let want = (l - max).exp() / z;
        match engine.iter().find(|(r, _)| r == c) {
            Some((_, p)) => gap = gap.max((p - want).abs()),
            None => same = false,
        }
    }
    (gap, same)
}

/// Filter log-evidence with `particles` particles on a random five-event toy
/// stream, and the exact log marginal by enumeration.
pub fn marginal_pair(seed: u64, particles: usize) -> (f64, f64) {
    use hnp3::{InferenceConfig, ParticleFilter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let hyper = toy_hyper(particles);
    let config = InferenceConfig {
        refresh_every: 1_000_000,
        window: f64::INFINITY,
        ..Default::default()
    };
    let events = toy_events(&mut rng, 5);
    let mut filter = ParticleFilter::new(hyper.clone(), config, seed).unwrap();
    for e in &events {
        filter.observe(e.clone()).unwrap();
    }
    let u = hyper.num_users;
    let oracle = Oracle {
        events: &events,
        mu: vec![hyper.mu_prior.mean(); u],
        alpha: vec![vec![hyper.alpha_prior.mean(); u]; u],
        betas: vec![1.0; events.len()],
        gamma: hyper.gamma,
        zeta: hyper.zeta,
        nu: hyper.nu,
        eta: hyper.eta,
        vocab: hyper.vocab_size,
        origin: 0.0,
        single_topic: false,
    };
    (filter.log_evidence(), oracle.log_marginal(events.len()))
}
