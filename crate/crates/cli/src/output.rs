//! CSV and JSON writers with a fixed, documented schema.
//!
//! All numbers are written with Rust's shortest-round-trip decimal
//! formatting, which is locale-independent and reproduces the exact f64
//! on re-parse. Missing values (steps without an observation) are empty
//! cells.

use crate::config::filter_name;
use crate::error::Result;
use implicit_filter::{FilterKind, RunMetrics};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One filter's run paired with its name, as written to the CSVs.
pub struct NamedRun {
    pub filter: FilterKind,
    pub metrics: RunMetrics,
}

/// Run-level aggregates for `summary.json`. The file holds a list of
/// these, one per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub filter: String,
    pub particles: usize,
    pub steps: i64,
    pub seed: u64,
    pub rmse: f64,
    pub avg_distinct: f64,
    pub avg_max_weight: f64,
    pub avg_iters: f64,
}

pub fn summarize(run: &NamedRun, particles: usize, seed: u64) -> FilterSummary {
    let rows = &run.metrics.steps;
    let n = rows.len().max(1) as f64;
    FilterSummary {
        filter: filter_name(run.filter).to_string(),
        particles,
        steps: rows.len() as i64,
        seed,
        rmse: run.metrics.rmse,
        avg_distinct: rows.iter().map(|r| r.distinct_count as f64).sum::<f64>() / n,
        avg_max_weight: rows.iter().map(|r| r.max_weight).sum::<f64>() / n,
        avg_iters: rows.iter().map(|r| r.iters_mean).sum::<f64>() / n,
    }
}

/// `trajectory.csv`: one row per step and filter.
/// Header: `step,time,filter,mean_0..,std_0..,truth_0..,obs_0..`.
pub fn write_trajectory(path: &Path, delta: f64, dim_state: usize, dim_obs: usize, runs: &[NamedRun]) -> Result<()> {
    let mut text = String::from("step,time,filter");
    for i in 0..dim_state {
        write!(text, ",mean_{i}").unwrap();
    }
    for i in 0..dim_state {
        write!(text, ",std_{i}").unwrap();
    }
    for i in 0..dim_state {
        write!(text, ",truth_{i}").unwrap();
    }
    for i in 0..dim_obs {
        write!(text, ",obs_{i}").unwrap();
    }
    text.push('\n');
    for run in runs {
        let name = filter_name(run.filter);
        for row in &run.metrics.steps {
            let n = row.time_index;
            write!(text, "{n},{},{name}", delta * n as f64).unwrap();
            for v in row.ens_mean.iter() {
                write!(text, ",{v}").unwrap();
            }
            for v in row.ens_std.iter() {
                write!(text, ",{v}").unwrap();
            }
            for v in run.metrics.truth[n as usize].iter() {
                write!(text, ",{v}").unwrap();
            }
            let record = run
                .metrics
                .observations
                .get(n as usize - 1)
                .filter(|r| r.present);
            match record {
                Some(r) => {
                    for v in r.value.iter() {
                        write!(text, ",{v}").unwrap();
                    }
                }
                None => {
                    for _ in 0..dim_obs {
                        text.push(',');
                    }
                }
            }
            text.push('\n');
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// `metrics.csv`: one row per step and filter.
/// Header: `step,time,filter,distinct_count,max_weight,iters_mean`.
pub fn write_metrics(path: &Path, delta: f64, runs: &[NamedRun]) -> Result<()> {
    let mut text = String::from("step,time,filter,distinct_count,max_weight,iters_mean\n");
    for run in runs {
        let name = filter_name(run.filter);
        for row in &run.metrics.steps {
            let n = row.time_index;
            writeln!(
                text,
                "{n},{},{name},{},{},{}",
                delta * n as f64,
                row.distinct_count,
                row.max_weight,
                row.iters_mean
            )
            .unwrap();
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_summary(path: &Path, summaries: &[FilterSummary]) -> Result<()> {
    let json = serde_json::to_string_pretty(summaries).expect("summaries serialize");
    std::fs::write(path, json + "\n")?;
    Ok(())
}

#[cfg(test)]
pub fn read_summary(path: &Path) -> Result<Vec<FilterSummary>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| crate::error::CliError::Io(e.to_string()))
}

/// `maxweights.csv`: one row per study run.
/// Header: `run,implicit,sir`.
pub fn write_maxweights(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("run,implicit,sir\n");
    for (run, (imp, sir)) in rows.iter().enumerate() {
        writeln!(text, "{run},{imp},{sir}").unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// `histogram.csv`: 20 bins over [0, 1] with 0.05 edges; the last bin is
/// closed on the right so a maximum weight of exactly 1 lands in it.
/// Header: `bin_lo,bin_hi,implicit,sir`.
pub fn write_histogram(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    const BINS: usize = 20;
    let mut implicit = [0usize; BINS];
    let mut sir = [0usize; BINS];
    let index = |w: f64| -> usize { ((w * BINS as f64) as usize).min(BINS - 1) };
    for &(imp, s) in rows {
        implicit[index(imp)] += 1;
        sir[index(s)] += 1;
    }
    let mut text = String::from("bin_lo,bin_hi,implicit,sir\n");
    for b in 0..BINS {
        writeln!(
            text,
            "{},{},{},{}",
            b as f64 / BINS as f64,
            (b + 1) as f64 / BINS as f64,
            implicit[b],
            sir[b]
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}
