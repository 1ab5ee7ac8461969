mod common;

use common::checks::{offspring_gaps, poisson_ks_passes, poisson_run};
use hnp3::eval::write_events;
use hnp3::simulator::export_truth;
use hnp3::{simulate, Hyperparams, SimulationConfig, Snapshot};

#[test]
fn poisson_count_within_three_sigma() {
    let n = poisson_run(1).events.len() as f64;
    assert!((n - 2000.0).abs() <= 134.0, "{n}");
}

#[test]
fn poisson_gaps_pass_ks() {
    let pass = poisson_ks_passes(0..20);
    assert!(pass >= 19, "{pass}/20");
}

#[test]
fn offspring_mean_matches_branching_expectation() {
    let (topics, exogenous) = offspring_gaps(0..20);
    for (z, gap) in topics.iter().enumerate() {
        assert!(*gap < 0.1, "topic {z}: {gap}");
    }
    assert!(exogenous < 0.1, "{exogenous}");
}

#[test]
fn same_seed_same_bytes() {
    let hyper = Hyperparams::default();
    let config = SimulationConfig {
        num_events: Some(2000),
        ..Default::default()
    };
    let bytes = |seed| {
        let mut out = Vec::new();
        write_events(&mut out, &simulate(&hyper, &config, seed).unwrap().events).unwrap();
        out
    };
    assert_eq!(bytes(3), bytes(3));
    assert_ne!(bytes(3), bytes(4));
}

#[test]
fn triggered_events_inherit_topic() {
    let sim = simulate(&Hyperparams::default(), &SimulationConfig::default(), 9).unwrap();
    assert_eq!(sim.events.len(), 10_000);
    for r in &sim.truth.records {
        if let Some(s) = r.parent {
            assert_eq!(r.topic, sim.truth.records[s].topic);
        }
    }
    for phi in &sim.truth.phi {
        assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn truth_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let hyper = Hyperparams::default();
    let sim = simulate(&hyper, &SimulationConfig::default(), 2).unwrap();
    let path = dir.path().join("truth.json");
    export_truth(&sim.truth, &hyper, &path).unwrap();
    let snap = Snapshot::load(&path).unwrap();
    assert_eq!(snap.num_events, 10_000);
    assert_eq!(snap.records, sim.truth.records);
    assert_eq!(snap.mu, sim.truth.mu);
    assert_eq!(snap.alpha, sim.truth.alpha);
    for (t, phi) in snap.topics.iter().zip(&sim.truth.phi) {
        assert_eq!(t.phi.as_ref().unwrap(), phi);
    }
    assert_eq!(snap.ground_truth().unwrap(), sim.truth);

    let empty = SimulationConfig {
        horizon: Some(10.0),
        num_events: None,
        mu_default: 0.0,
        ..Default::default()
    };
    let sim = simulate(&hyper, &empty, 2).unwrap();
    export_truth(&sim.truth, &hyper, &path).unwrap();
    assert_eq!(Snapshot::load(&path).unwrap().num_events, 0);
}
