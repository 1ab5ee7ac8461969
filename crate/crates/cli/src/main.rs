use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hnp3::eval::{
    baseline_hawkes_fit, export_reports, fit_with_checkpoints, load_events, load_vocab,
    next_event_time_loglik, paired_comparison, parameter_errors, save_events, split_index,
    LoadOptions, MetricsReport, ReportOptions,
};
use hnp3::simulator::export_truth;
use hnp3::{
    simulate, Error, Event, ExperimentConfig, GroundTruth, InferenceConfig, ParticleFilter,
    Snapshot,
};

const USAGE: u8 = 2;
const RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(
    name = "hnp3",
    version,
    about = "Topic-marked Hawkes process: simulate, fit, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the particle count of the config.
    #[arg(long)]
    particles: Option<usize>,
    /// Accept events with empty documents.
    #[arg(long)]
    times_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Hawkes,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic stream; writes events.jsonl and truth.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model; writes model.json and metrics.json.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
        /// Ground truth for error checkpoints.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Fit the plain Hawkes baseline instead.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fitted snapshot against truth, or fit on a training split and
    /// score the held-out remainder.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        train_frac: Option<f64>,
        /// Independent replicas with consecutive seeds.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling one-step-ahead log densities of the next event times.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
        /// Continue from this fit; otherwise fit on the training split.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        train_frac: Option<f64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export CSV reports of a fitted snapshot.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Token id to string, one `id<TAB>token` per line.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// metrics.json written by fit or eval.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::InvalidConfig(_) | Error::SnapshotVersion(_) => Failure::Usage(e.to_string()),
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("HNP3_LOG")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(RUNTIME)
        }
    }
}

fn with_context(path: &Path, e: Error) -> Failure {
    match Failure::from(e) {
        Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
        Failure::Runtime(m) => Failure::Runtime(format!("{}: {m}", path.display())),
    }
}

fn load_config(
    common: &Common,
    train_frac: Option<f64>,
    horizon: Option<usize>,
    seeds: Option<usize>,
) -> Outcome<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| with_context(path, e))?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = common.particles {
        cfg.hyper.particles = p;
    }
    if let Some(f) = train_frac {
        cfg.eval.train_frac = f;
    }
    if let Some(h) = horizon {
        cfg.eval.horizon = h;
    }
    if let Some(s) = seeds {
        cfg.eval.seeds = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_events(path: &Path, cfg: &ExperimentConfig, common: &Common) -> Outcome<Vec<Event>> {
    let opts = LoadOptions {
        times_only: common.times_only,
        num_users: Some(cfg.hyper.num_users),
        vocab_size: Some(cfg.hyper.vocab_size),
        ..Default::default()
    };
    let events = load_events(path, &opts).map_err(|e| with_context(path, e))?;
    info!("loaded {} events from {}", events.len(), path.display());
    Ok(events)
}

fn read_snapshot(path: &Path) -> Outcome<Snapshot> {
    Snapshot::load(path).map_err(|e| with_context(path, e))
}

fn read_truth(path: &Path) -> Outcome<GroundTruth> {
    read_snapshot(path)?
        .ground_truth()
        .map_err(|e| with_context(path, e))
}

fn inference(cfg: &ExperimentConfig, baseline: Option<Baseline>) -> InferenceConfig {
    match baseline {
        Some(Baseline::Hawkes) => cfg.inference.hawkes_baseline(),
        None => cfg.inference.clone(),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate { common, out } => {
            let cfg = load_config(&common, None, None, None)?;
            let sim = simulate(&cfg.hyper, &cfg.simulation, common.seed)?;
            fs::create_dir_all(&out)?;
            save_events(&out.join("events.jsonl"), &sim.events)?;
            export_truth(&sim.truth, &cfg.hyper, &out.join("truth.json"))?;
            println!(
                "simulated {} events into {}",
                sim.events.len(),
                out.display()
            );
        }

        Command::Fit {
            common,
            events,
            truth,
            baseline,
            out,
        } => {
            let cfg = load_config(&common, None, None, None)?;
            let events = read_events(&events, &cfg, &common)?;
            let truth = truth.as_deref().map(read_truth).transpose()?;
            let start = Instant::now();
            let mut filter =
                ParticleFilter::new(cfg.hyper.clone(), inference(&cfg, baseline), common.seed)?;
            let mut report = MetricsReport::new();
            report.checkpoints = fit_with_checkpoints(
                &mut filter,
                &events,
                truth.as_ref(),
                cfg.eval.checkpoint_every,
            )?;
            for c in &report.checkpoints {
                info!(
                    "{} events: alpha error {:?}, mu error {:?}",
                    c.events, c.alpha_error, c.mu_error
                );
            }
            if !events.is_empty() {
                report.topics = filter.map_summary(cfg.eval.top_words)?.topics;
            }
            report.wall_clock_secs = start.elapsed().as_secs_f64();
            fs::create_dir_all(&out)?;
            Snapshot::from_filter(&filter).save(&out.join("model.json"))?;
            write_json(&out.join("metrics.json"), &report)?;
            println!(
                "fitted {} events ({} topics) into {}",
                events.len(),
                filter.map_particle().topics().len(),
                out.display()
            );
        }

        Command::Eval {
            common,
            events,
            truth,
            snapshot,
            baseline,
            train_frac,
            seeds,
            out,
        } => {
            let cfg = load_config(&common, train_frac, None, seeds)?;
            fs::create_dir_all(&out)?;
            match (events, snapshot) {
                (Some(events), None) => {
                    let events = read_events(&events, &cfg, &common)?;
                    let truth = truth.as_deref().map(read_truth).transpose()?;
                    let split = split_index(events.len(), cfg.eval.train_frac)?;
                    let reports: Vec<Outcome<MetricsReport>> = std::thread::scope(|scope| {
                        let handles: Vec<_> = (0..cfg.eval.seeds as u64)
                            .map(|i| {
                                let (cfg, events, truth) = (&cfg, &events, truth.as_ref());
                                scope.spawn(move || {
                                    replica(cfg, events, split, truth, baseline, common.seed + i)
                                })
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("replica panicked"))
                            .collect()
                    });
                    for (i, report) in reports.into_iter().enumerate() {
                        let report = report?;
                        let name = if cfg.eval.seeds == 1 {
                            "metrics.json".to_string()
                        } else {
                            format!("metrics_seed{}.json", common.seed + i as u64)
                        };
                        write_json(&out.join(&name), &report)?;
                        let mean = hnp3::eval::mean(&report.heldout_log_density);
                        print!(
                            "seed {}: held-out mean time log-density {mean:.6}",
                            common.seed + i as u64
                        );
                        if let Some(c) = &report.comparison {
                            print!(
                                ", minus {} {:.6} (95% CI {:.6} .. {:.6})",
                                c.baseline, c.mean_difference, c.ci_low, c.ci_high
                            );
                        }
                        println!();
                    }
                }
                (None, Some(snapshot)) => {
                    let truth_path = truth
                        .ok_or_else(|| Failure::Usage("eval --snapshot needs --truth".into()))?;
                    let est = read_snapshot(&snapshot)?;
                    let truth = read_snapshot(&truth_path)?;
                    let mut report = MetricsReport::new();
                    let errors = parameter_errors(&est, &truth)?;
                    report.parameter_errors = Some(errors);
                    write_json(&out.join("metrics.json"), &report)?;
                    println!("alpha error {:?}, mu error {:?}", errors.alpha, errors.mu);
                }
                _ => {
                    return Err(Failure::Usage(
                        "eval needs exactly one of --events or --snapshot".into(),
                    ))
                }
            }
        }

        Command::Predict {
            common,
            events,
            snapshot,
            baseline,
            horizon,
            train_frac,
            out,
        } => {
            let cfg = load_config(&common, train_frac, horizon, None)?;
            let events = read_events(&events, &cfg, &common)?;
            let (mut filter, held) = match snapshot {
                Some(path) => {
                    if baseline.is_some() {
                        return Err(Failure::Usage(
                            "--baseline cannot be combined with --snapshot".into(),
                        ));
                    }
                    let snap = read_snapshot(&path)?;
                    if snap.num_events > events.len() {
                        return Err(Failure::Usage(format!(
                            "snapshot was fitted on {} events, only {} supplied",
                            snap.num_events,
                            events.len()
                        )));
                    }
                    let (train, held) = events.split_at(snap.num_events);
                    let filter = snap
                        .resume(train.to_vec(), common.seed)
                        .map_err(|e| with_context(&path, e))?;
                    (filter, held)
                }
                None => {
                    let split = split_index(events.len(), cfg.eval.train_frac)?;
                    let (train, held) = events.split_at(split);
                    let filter = match baseline {
                        Some(Baseline::Hawkes) => {
                            baseline_hawkes_fit(train, &cfg.hyper, &cfg.inference, common.seed)?
                        }
                        None => {
                            let mut f = ParticleFilter::new(
                                cfg.hyper.clone(),
                                cfg.inference.clone(),
                                common.seed,
                            )?;
                            for e in train {
                                f.observe(e.clone())?;
                            }
                            f
                        }
                    };
                    (filter, held)
                }
            };
            let horizon = cfg.eval.horizon;
            if held.len() < horizon {
                return Err(Failure::Runtime(format!(
                    "horizon {horizon} exceeds the {} events after the training split",
                    held.len()
                )));
            }
            let held = &held[..horizon];
            let scores = next_event_time_loglik(&mut filter, held)?;
            let sink: Box<dyn Write> = match &out {
                Some(path) => Box::new(fs::File::create(path)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            writeln!(w, "index,time,user,log_density")?;
            let first = filter.events().len() - horizon;
            for (i, (e, ll)) in held.iter().zip(&scores).enumerate() {
                writeln!(w, "{},{},{},{}", first + i, e.time, e.user, ll)?;
            }
            w.flush()?;
        }

        Command::Report {
            common,
            events,
            snapshot,
            vocab,
            metrics,
            out,
        } => {
            let cfg = load_config(&common, None, None, None)?;
            let events = read_events(&events, &cfg, &common)?;
            let snap = read_snapshot(&snapshot)?;
            if snap.num_events > events.len() {
                return Err(Failure::Usage(format!(
                    "snapshot was fitted on {} events, only {} supplied",
                    snap.num_events,
                    events.len()
                )));
            }
            let metrics: Option<MetricsReport> = match &metrics {
                Some(path) => Some(serde_json::from_str(&fs::read_to_string(path)?)?),
                None => None,
            };
            let opts = ReportOptions {
                grid_points: cfg.eval.grid_points,
                vocab: vocab.as_deref().map(load_vocab).transpose()?,
            };
            let filter = snap
                .resume(events[..snap.num_events].to_vec(), common.seed)
                .map_err(|e| with_context(&snapshot, e))?;
            let summary = if filter.events().is_empty() {
                None
            } else {
                Some(filter.map_summary(cfg.eval.top_words)?)
            };
            export_reports(
                summary.as_ref(),
                filter.events(),
                metrics.as_ref(),
                &out,
                &opts,
            )?;
            println!("wrote reports to {}", out.display());
        }
    }
    Ok(())
}

/// One train/held-out evaluation with its own seed.
fn replica(
    cfg: &ExperimentConfig,
    events: &[Event],
    split: usize,
    truth: Option<&GroundTruth>,
    baseline: Option<Baseline>,
    seed: u64,
) -> Outcome<MetricsReport> {
    let start = Instant::now();
    let (train, held) = events.split_at(split);
    let mut report = MetricsReport::new();
    let mut filter = ParticleFilter::new(cfg.hyper.clone(), cfg.inference.clone(), seed)?;
    report.checkpoints =
        fit_with_checkpoints(&mut filter, train, truth, cfg.eval.checkpoint_every)?;
    if let Some(t) = truth {
        let truth = Snapshot::from_truth(t, &cfg.hyper);
        report.parameter_errors = Some(parameter_errors(&Snapshot::from_filter(&filter), &truth)?);
    }
    if !train.is_empty() {
        report.topics = filter.map_summary(cfg.eval.top_words)?.topics;
    }
    report.heldout_log_density = next_event_time_loglik(&mut filter, held)?;
    if let Some(Baseline::Hawkes) = baseline {
        let mut b = baseline_hawkes_fit(train, &cfg.hyper, &cfg.inference, seed)?;
        let scores = next_event_time_loglik(&mut b, held)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        report.comparison = Some(paired_comparison(
            "hawkes",
            &report.heldout_log_density,
            &scores,
            cfg.eval.bootstrap_resamples,
            0.95,
            &mut rng,
        )?);
        report.baseline_log_density = Some(scores);
    }
    info!("seed {seed}: evaluated {} held-out events", held.len());
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
