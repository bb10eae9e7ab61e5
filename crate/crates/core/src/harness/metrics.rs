//! Per-epoch metric rows and the last-epochs summary.

use serde::{Deserialize, Serialize};

use crate::agents::mean_std;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "seed,epoch,env_steps,mean_return,std_return,mean_policy_queries,mean_routine_length,j_q,j_pi,j_mto,j_lc,alpha";

/// Epochs averaged in the summary.
pub const SUMMARY_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub epoch: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_policy_queries: f64,
    pub mean_routine_length: f64,
    pub j_q: f64,
    pub j_pi: f64,
    pub j_mto: f64,
    pub j_lc: f64,
    pub alpha: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.epoch,
            self.env_steps,
            self.mean_return,
            self.std_return,
            self.mean_policy_queries,
            self.mean_routine_length,
            self.j_q,
            self.j_pi,
            self.j_mto,
            self.j_lc,
            self.alpha
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 12 {
            return Err(Error::config(format!(
                "metrics row has {} fields, expected 12",
                f.len()
            )));
        }
        let bad = |i: usize| Error::config(format!("invalid metrics field {i}: '{}'", f[i]));
        let float = |i: usize| f[i].parse::<f64>().map_err(|_| bad(i));
        Ok(MetricsRow {
            seed: f[0].parse().map_err(|_| bad(0))?,
            epoch: f[1].parse().map_err(|_| bad(1))?,
            env_steps: f[2].parse().map_err(|_| bad(2))?,
            mean_return: float(3)?,
            std_return: float(4)?,
            mean_policy_queries: float(5)?,
            mean_routine_length: float(6)?,
            j_q: float(7)?,
            j_pi: float(8)?,
            j_mto: float(9)?,
            j_lc: float(10)?,
            alpha: float(11)?,
        })
    }
}

/// Reads a metrics CSV written by [`crate::harness::run`].
pub fn read_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::config("metrics file does not start with the expected header")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRow::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub epochs: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_policy_queries: f64,
    pub std_policy_queries: f64,
    pub final_return: f64,
    pub final_policy_queries: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub env: String,
    pub algorithm: String,
    pub max_len: usize,
    pub last_epochs: usize,
    pub seeds: Vec<SeedSummary>,
    /// Mean and std across seeds of the per-seed means.
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_policy_queries: f64,
    pub std_policy_queries: f64,
    pub mean_final_return: f64,
    pub mean_final_policy_queries: f64,
}

/// Summary of one seed's rows over its last [`SUMMARY_EPOCHS`] epochs.
pub fn summarize_seed(rows: &[MetricsRow]) -> Result<SeedSummary> {
    let last = rows.last().ok_or_else(|| Error::usage("no metrics rows to summarize"))?;
    let tail = &rows[rows.len().saturating_sub(SUMMARY_EPOCHS)..];
    let ret: Vec<f64> = tail.iter().map(|r| r.mean_return).collect();
    let q: Vec<f64> = tail.iter().map(|r| r.mean_policy_queries).collect();
    let (mean_return, std_return) = mean_std(&ret);
    let (mean_policy_queries, std_policy_queries) = mean_std(&q);
    Ok(SeedSummary {
        seed: last.seed,
        epochs: tail.len(),
        mean_return,
        std_return,
        mean_policy_queries,
        std_policy_queries,
        final_return: last.mean_return,
        final_policy_queries: last.mean_policy_queries,
    })
}

pub fn summarize(
    name: &str,
    env: &str,
    algorithm: &str,
    max_len: usize,
    seeds: Vec<SeedSummary>,
) -> RunSummary {
    let col = |f: fn(&SeedSummary) -> f64| -> Vec<f64> { seeds.iter().map(f).collect() };
    let (mean_return, std_return) = mean_std(&col(|s| s.mean_return));
    let (mean_policy_queries, std_policy_queries) = mean_std(&col(|s| s.mean_policy_queries));
    RunSummary {
        name: name.to_string(),
        env: env.to_string(),
        algorithm: algorithm.to_string(),
        max_len,
        last_epochs: SUMMARY_EPOCHS,
        mean_return,
        std_return,
        mean_policy_queries,
        std_policy_queries,
        mean_final_return: mean_std(&col(|s| s.final_return)).0,
        mean_final_policy_queries: mean_std(&col(|s| s.final_policy_queries)).0,
        seeds,
    }
}
