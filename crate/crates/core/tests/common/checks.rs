//! Library-versus-oracle comparisons run by both the integration tests and
//! the acceptance suite. Each returns the measured statistic.

use hnp3::likelihood::{compensator, doc_predictive};
use hnp3::model::{DecayedCounter, TopicAtom};
use hnp3::{
    simulate, BranchingRecord, Doc, Event, Hyperparams, RateEstimates, Simulation, SimulationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{doc_log_gamma_ratio, ks_pvalue, ks_statistic, simpson};

pub struct History {
    pub events: Vec<Event>,
    pub records: Vec<BranchingRecord>,
    pub rates: RateEstimates,
    pub betas: Vec<f64>,
}

pub fn random_history(rng: &mut ChaCha8Rng, n: usize, users: usize, topics: usize) -> History {
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut records: Vec<BranchingRecord> = Vec::new();
    for i in 0..n {
        t += rng.gen_range(0.01..2.0);
        events.push(Event::new(t, rng.gen_range(0..users), []));
        if i > 0 && rng.gen_bool(0.5) {
            let s = rng.gen_range(0..i);
            records.push(BranchingRecord::triggered(s, records[s].topic));
        } else {
            records.push(BranchingRecord::exogenous(rng.gen_range(0..topics), true));
        }
    }
    let mu = (0..users).map(|_| rng.gen_range(0.01..1.0)).collect();
    let alpha = (0..users)
        .map(|_| (0..users).map(|_| rng.gen_range(0.0..0.8)).collect())
        .collect();
    let betas = (0..topics)
        .map(|_| (rng.gen_range(-3.0f64..2.0)).exp())
        .collect();
    History {
        events,
        records,
        rates: RateEstimates::new(mu, alpha),
        betas,
    }
}

fn quadrature(h: &History, u: usize, a: f64, b: f64) -> f64 {
    // break at event times and at kernel scale so every piece is smooth
    let mut cuts: Vec<f64> = vec![a, b];
    cuts.extend(h.events.iter().map(|e| e.time).filter(|t| *t > a && *t < b));
    let beta_max = h.betas.iter().copied().fold(0.0, f64::max);
    let mut x = a;
    while x < b {
        x += 1.0 / beta_max;
        if x < b {
            cuts.push(x);
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    let f = |t: f64| {
        let mut total = h.rates.mu[u];
        for (e, r) in h.events.iter().zip(&h.records) {
            if e.time < t {
                total += h.rates.alpha[e.user][u] * (-h.betas[r.topic] * (t - e.time)).exp();
            }
        }
        total
    };
    cuts.windows(2)
        .map(|w| simpson(&f, w[0], w[1], 1e-14 * (w[1] - w[0])))
        .sum()
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Worst relative gap between the closed-form compensator and quadrature
/// over random 20-event histories.
pub fn compensator_worst_gap(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let h = random_history(&mut rng, 20, 3, 3);
        let end = h.events.last().unwrap().time;
        let a = rng.gen_range(0.0..end);
        let b = a + rng.gen_range(0.0..5.0);
        let u = rng.gen_range(0..3);
        // the history up to `a` is fixed; events later than `a` are dropped
        let k = h.events.partition_point(|e| e.time <= a);
        let hist = History {
            events: h.events[..k].to_vec(),
            records: h.records[..k].to_vec(),
            rates: h.rates.clone(),
            betas: h.betas.clone(),
        };
        let exact = compensator(
            u,
            a,
            b,
            &hist.events,
            &hist.records,
            &hist.rates,
            &hist.betas,
        )
        .unwrap();
        worst = worst.max(rel_gap(exact, quadrature(&hist, u, a, b)));
    }
    worst
}

/// Worst relative gap between lazily decayed counters and direct sums.
pub fn counter_worst_gap(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let nu = rng.gen_range(0.0..1.0);
        let mut c = DecayedCounter::default();
        let mut hist = Vec::new();
        let mut t = 0.0;
        for _ in 0..rng.gen_range(1..60) {
            t += rng.gen_range(0.0..2.0);
            let amount = rng.gen_range(0.5..2.0);
            c = c.bump(t, amount, nu).unwrap();
            hist.push((t, amount));
        }
        let end = t + rng.gen_range(0.0..20.0);
        let brute: f64 = hist
            .iter()
            .map(|(te, a)| a * (-nu * (end - te)).exp())
            .sum();
        worst = worst.max(rel_gap(c.read(end, nu).unwrap(), brute));
    }
    worst
}

/// Worst gap of the collapsed document predictive, for seen and fresh
/// topics, against Gamma-function ratios (V ≤ 5, counts ≤ 20). Gaps are
/// relative to the magnitude of the log value, or absolute below one.
pub fn doc_predictive_worst_gap(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let v = rng.gen_range(1..=5usize);
        let eta = (rng.gen_range(-3.0f64..1.0)).exp();
        let mut topic = TopicAtom::new(0, v, 1, vec![1.0]);
        let seen: Vec<u32> = (0..rng.gen_range(0..=20))
            .map(|_| rng.gen_range(0..v as u32))
            .collect();
        topic.add_doc(&Doc::from_tokens(seen.iter().copied()));
        let doc: Vec<u32> = (0..rng.gen_range(0..=20))
            .map(|_| rng.gen_range(0..v as u32))
            .collect();
        let got =
            doc_predictive(&Doc::from_tokens(doc.iter().copied()), Some(&topic), eta, v).unwrap();
        let want = doc_log_gamma_ratio(&doc, &topic.word_counts, eta);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
        let fresh = doc_predictive(&Doc::from_tokens(doc.iter().copied()), None, eta, v).unwrap();
        let want = doc_log_gamma_ratio(&doc, &vec![0; v], eta);
        worst = worst.max((fresh - want).abs() / want.abs().max(1.0));
    }
    worst
}

/// Single-user homogeneous Poisson stream, rate 2 over [0, 1000].
pub fn poisson_run(seed: u64) -> Simulation {
    let hyper = Hyperparams {
        num_users: 1,
        vocab_size: 5,
        ..Default::default()
    };
    let config = SimulationConfig {
        horizon: Some(1000.0),
        num_events: None,
        mu: Some(vec![2.0]),
        alpha: Some(vec![vec![0.0]]),
        doc_length: 0.0,
        ..Default::default()
    };
    simulate(&hyper, &config, seed).unwrap()
}

/// Number of seeds whose inter-event gaps pass a KS test against Exp(2) at
/// level 0.01.
pub fn poisson_ks_passes(seeds: std::ops::Range<u64>) -> usize {
    seeds
        .filter(|&seed| {
            let ev = poisson_run(seed).events;
            let mut gaps = vec![ev[0].time];
            gaps.extend(ev.windows(2).map(|w| w[1].time - w[0].time));
            let n = gaps.len();
            let d = ks_statistic(gaps, |x| 1.0 - (-2.0 * x).exp());
            ks_pvalue(d, n) > 0.01
        })
        .count()
}

/// Relative gaps, pooled over seeds, between observed offspring per parent
/// topic and the branching expectation given the realized parents, and
/// between the exogenous count and the integrated baseline rate.
pub fn offspring_gaps(seeds: std::ops::Range<u64>) -> (Vec<f64>, f64) {
    let hyper = Hyperparams::default();
    let config = SimulationConfig {
        doc_length: 0.0,
        ..Default::default()
    };
    let k = config.topic_betas.as_ref().unwrap().len();
    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut exogenous = 0.0;
    let mut baseline = 0.0;
    for seed in seeds {
        let sim = simulate(&hyper, &config, seed).unwrap();
        let t_end = sim.events.last().unwrap().time;
        let truth = &sim.truth;
        for (e, r) in sim.events.iter().zip(&truth.records) {
            let beta = truth.beta[r.topic];
            let out: f64 = truth.alpha[e.user].iter().sum();
            expected[r.topic] += out * (1.0 - (-beta * (t_end - e.time)).exp()) / beta;
            match r.parent {
                Some(s) => observed[truth.records[s].topic] += 1.0,
                None => exogenous += 1.0,
            }
        }
        baseline += truth.mu.iter().sum::<f64>() * t_end;
    }
    let gaps = (0..k)
        .map(|z| (observed[z] - expected[z]).abs() / expected[z])
        .collect();
    (gaps, (exogenous - baseline).abs() / baseline)
}
