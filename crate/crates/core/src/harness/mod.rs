//! Experiment orchestration: seeded training runs with epoch-end
//! evaluation, metric files, ablation suites, coverage histograms and plots.

pub mod checkpoint;
mod config;
mod explore;
pub mod metrics;
pub mod plot;

use std::fmt;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use config::ExperimentConfig;
pub use explore::{explore_hist, CoverageHistogram, HIST_HEADER};
pub use metrics::{MetricsRow, RunSummary, SeedSummary, CSV_HEADER, SUMMARY_EPOCHS};

use crate::agents::{evaluate, Agent, Trainer};
use crate::error::{Error, Result};

/// Paths written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub csvs: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub summary: PathBuf,
    pub summary_data: RunSummary,
}

pub fn csv_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("{}_seed{seed}.csv", cfg.name))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("{}_seed{seed}.ckpt", cfg.name))
}

pub fn summary_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}_summary.json", cfg.name))
}

/// Seed of the evaluation episodes after `epoch`.
fn eval_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(1_000_003 * epoch as u64)
}

/// Trains one seed, appending a metrics row after each epoch.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRow>> {
    let env_spec = cfg.env.make().spec();
    let agent = Agent::new(cfg.agent.clone(), &env_spec, seed)?;
    let mut trainer = Trainer::new(agent, cfg.env, seed)?;
    let path = csv_path(cfg, seed);
    let mut file = File::create(&path)?;
    writeln!(file, "{CSV_HEADER}")?;
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let losses = trainer.run(cfg.steps_per_epoch)?;
        let report = evaluate(
            &mut trainer.agent,
            cfg.env,
            cfg.eval_episodes,
            eval_seed(seed, epoch),
        )?;
        let row = MetricsRow {
            seed,
            epoch,
            env_steps: trainer.env_steps(),
            mean_return: report.mean_return,
            std_return: report.std_return,
            mean_policy_queries: report.mean_policy_queries,
            mean_routine_length: report.mean_routine_length,
            j_q: losses.j_q(),
            j_pi: losses.j_pi(),
            j_mto: losses.j_mto(),
            j_lc: losses.j_lc(),
            alpha: trainer.agent.alpha().unwrap_or(0.0),
        };
        writeln!(file, "{}", row.to_csv())?;
        file.flush()?;
        rows.push(row);
    }
    checkpoint::save(&trainer.agent, &env_spec, &checkpoint_path(cfg, seed))?;
    Ok(rows)
}

/// Runs every seed of `cfg` and writes the JSON summary.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let rows = run_seed(cfg, seed)?;
        seeds.push(metrics::summarize_seed(&rows)?);
    }
    let summary = metrics::summarize(
        &cfg.name,
        cfg.env.as_str(),
        cfg.agent.algorithm.as_str(),
        cfg.agent.window_len(),
        seeds,
    );
    let summary_file = summary_path(cfg);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Numeric(format!("summary serialization failed: {e}")))?;
    fs::write(&summary_file, json + "\n")?;
    Ok(RunOutputs {
        csvs: cfg.seeds.iter().map(|&s| csv_path(cfg, s)).collect(),
        checkpoints: cfg.seeds.iter().map(|&s| checkpoint_path(cfg, s)).collect(),
        summary: summary_file,
        summary_data: summary,
    })
}

/// Recomputes a run summary from its CSV files.
pub fn summary_from_csvs(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let rows = metrics::read_csv(&fs::read_to_string(csv_path(cfg, seed))?)?;
        seeds.push(metrics::summarize_seed(&rows)?);
    }
    Ok(metrics::summarize(
        &cfg.name,
        cfg.env.as_str(),
        cfg.agent.algorithm.as_str(),
        cfg.agent.window_len(),
        seeds,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationSuite {
    Replan,
    NoRoutineNoise,
    NoActionNoise,
    LengthSweep,
}

impl AblationSuite {
    pub const ALL: [AblationSuite; 4] = [
        AblationSuite::Replan,
        AblationSuite::NoRoutineNoise,
        AblationSuite::NoActionNoise,
        AblationSuite::LengthSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationSuite::Replan => "replan",
            AblationSuite::NoRoutineNoise => "no_routine_noise",
            AblationSuite::NoActionNoise => "no_action_noise",
            AblationSuite::LengthSweep => "length_sweep",
        }
    }
}

impl fmt::Display for AblationSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown ablation suite '{s}' (expected replan, no_routine_noise, no_action_noise or length_sweep)"
            ))
        })
    }
}

/// The variant grid of a suite; each variant writes under its own name.
pub fn ablation_variants(base: &ExperimentConfig, suite: AblationSuite) -> Result<Vec<ExperimentConfig>> {
    if !base.agent.algorithm.is_routine() {
        return Err(Error::config(format!(
            "ablations apply to routine agents, not {}",
            base.agent.algorithm
        )));
    }
    let variant = |tag: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        c.name = format!("{}_{tag}", base.name);
        f(&mut c);
        c
    };
    Ok(match suite {
        AblationSuite::Replan => vec![
            variant("base", &|_| {}),
            variant("replan", &|c| c.agent.replan_mode = true),
        ],
        AblationSuite::NoRoutineNoise => vec![
            variant("base", &|_| {}),
            variant("no_routine_noise", &|c| c.agent.disable_routine_noise = true),
        ],
        AblationSuite::NoActionNoise => vec![
            variant("base", &|_| {}),
            variant("no_action_noise", &|c| c.agent.disable_action_noise = true),
        ],
        AblationSuite::LengthSweep => [2, 4, 8, 16]
            .into_iter()
            .map(|l| variant(&format!("L{l}"), &|c| c.agent.max_len = l))
            .collect(),
    })
}

pub fn ablate(base: &ExperimentConfig, suite: AblationSuite) -> Result<Vec<RunOutputs>> {
    ablation_variants(base, suite)?.iter().map(run).collect()
}

/// Writes a coverage histogram CSV.
pub fn write_histogram(h: &CoverageHistogram, path: &Path) -> Result<()> {
    fs::write(path, h.to_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Algorithm;
    use crate::env::EnvId;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk("tiny", EnvId::PointReach, Algorithm::RoutineTd3);
        c.seeds = vec![0, 1];
        c.epochs = 3;
        c.steps_per_epoch = 40;
        c.eval_episodes = 1;
        c.agent.min_data = 30;
        c.agent.batch_size = 4;
        c.agent.hidden = 8;
        c.output_dir = dir.to_path_buf();
        c
    }

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("routine-harness-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn run_writes_rows_and_consistent_summary() {
        let dir = tmp("run");
        let cfg = tiny(&dir);
        let out = run(&cfg).unwrap();
        let mut rows = 0;
        for p in &out.csvs {
            let text = fs::read_to_string(p).unwrap();
            assert!(text.starts_with(CSV_HEADER));
            rows += metrics::read_csv(&text).unwrap().len();
        }
        assert_eq!(rows, 6);
        assert_eq!(summary_from_csvs(&cfg).unwrap(), out.summary_data);
        let json: RunSummary =
            serde_json::from_str(&fs::read_to_string(&out.summary).unwrap()).unwrap();
        assert_eq!(json, out.summary_data);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn suites_expand_to_expected_grids() {
        let base = tiny(Path::new("x"));
        let sweep = ablation_variants(&base, AblationSuite::LengthSweep).unwrap();
        let ls: Vec<usize> = sweep.iter().map(|c| c.agent.max_len).collect();
        assert_eq!(ls, vec![2, 4, 8, 16]);
        let replan = ablation_variants(&base, AblationSuite::Replan).unwrap();
        assert!(replan[1].agent.replan_mode && !replan[0].agent.replan_mode);
        assert!("fast".parse::<AblationSuite>().unwrap_err().is_config());
    }
}
