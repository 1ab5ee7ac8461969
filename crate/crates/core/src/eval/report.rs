//! CSV exports of a fitted model: topic popularity over time, top words,
//! cascades, kernel rates and metric checkpoints.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::inference::MapSummary;
use crate::model::Event;

use super::metrics::MetricsReport;

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub grid_points: usize,
    pub vocab: Option<BTreeMap<u32, String>>,
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Evenly spaced grid over the observed span.
pub fn time_grid(events: &[Event], points: usize) -> Vec<f64> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Vec::new();
    };
    if points <= 1 || last.time == first.time {
        return vec![last.time];
    }
    let step = (last.time - first.time) / (points - 1) as f64;
    (0..points).map(|i| first.time + step * i as f64).collect()
}

/// Total excitation each topic contributes over the network at each grid
/// time: `Σ_{s: z_s = k, t_s <= t} Σ_u α_{u_s u} exp(-β_k (t - t_s))`.
pub fn topic_intensity(summary: &MapSummary, events: &[Event], grid: &[f64]) -> Vec<Vec<f64>> {
    let betas: Vec<f64> = summary.topics.iter().map(|k| k.beta).collect();
    let mut acc = vec![0.0; betas.len()];
    let mut clock = f64::NEG_INFINITY;
    let advance = |acc: &mut [f64], clock: &mut f64, to: f64| {
        if to > *clock && clock.is_finite() {
            for (a, b) in acc.iter_mut().zip(&betas) {
                *a *= (-b * (to - *clock)).exp();
            }
        }
        *clock = clock.max(to);
    };
    let mut next = 0;
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        while next < events.len() && events[next].time <= t {
            let e = &events[next];
            advance(&mut acc, &mut clock, e.time);
            acc[summary.records[next].topic] += summary.rates.out_strength(e.user);
            next += 1;
        }
        advance(&mut acc, &mut clock, t);
        rows.push(acc.clone());
    }
    rows
}

pub fn export_reports(
    summary: Option<&MapSummary>,
    events: &[Event],
    metrics: Option<&MetricsReport>,
    out_dir: &Path,
    opts: &ReportOptions,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(out_dir.join(name))?))
    };

    let topics = summary.map(|s| s.topics.as_slice()).unwrap_or_default();

    let mut f = create("topic_intensity.csv")?;
    write!(f, "time")?;
    for k in topics {
        write!(f, ",topic_{}", k.id)?;
    }
    writeln!(f)?;
    if let Some(s) = summary {
        let grid = time_grid(events, opts.grid_points.max(1));
        for (t, row) in grid.iter().zip(topic_intensity(s, events, &grid)) {
            write!(f, "{t}")?;
            for v in row {
                write!(f, ",{v}")?;
            }
            writeln!(f)?;
        }
    }
    f.flush()?;

    let mut f = create("top_words.csv")?;
    writeln!(f, "topic,rank,token,count")?;
    for k in topics {
        let mut last = u32::MAX;
        for (rank, &(w, c)) in k.top_words.iter().enumerate() {
            assert!(c <= last, "top words must be sorted by count");
            last = c;
            let token = opts
                .vocab
                .as_ref()
                .and_then(|v| v.get(&w))
                .map(|s| quote(s))
                .unwrap_or_else(|| w.to_string());
            writeln!(f, "{},{},{},{}", k.id, rank + 1, token, c)?;
        }
    }
    f.flush()?;

    let mut f = create("cascades.csv")?;
    writeln!(f, "event,trigger,topic,user,root")?;
    if let Some(s) = summary {
        for (i, (r, e)) in s.records.iter().zip(events).enumerate() {
            // exogenous events point at themselves
            writeln!(
                f,
                "{},{},{},{},{}",
                i,
                r.parent.unwrap_or(i),
                r.topic,
                e.user,
                s.cascade_of[i]
            )?;
        }
    }
    f.flush()?;

    let mut f = create("betas.csv")?;
    writeln!(f, "topic,beta,event_count")?;
    for k in topics {
        writeln!(f, "{},{},{}", k.id, k.beta, k.event_count)?;
    }
    f.flush()?;

    let mut f = create("metrics.csv")?;
    writeln!(
        f,
        "events,time,alpha_frobenius_rel_error,mu_frobenius_rel_error,num_topics,elapsed_secs"
    )?;
    if let Some(m) = metrics {
        for c in &m.checkpoints {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                c.events,
                c.time,
                opt(c.alpha_error),
                opt(c.mu_error),
                c.num_topics,
                c.elapsed_secs
            )?;
        }
    }
    f.flush()?;
    Ok(())
}
