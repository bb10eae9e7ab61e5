//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! name = reach_rtd3
//! env = point_reach
//! seeds = 0, 1, 2
//! epochs = 15
//! steps_per_epoch = 2000
//! eval_episodes = 5
//! output_dir = runs/reach
//! agent.algorithm = routine_td3
//! agent.profile = desk
//! agent.L = 4
//! ```
//!
//! `agent.profile` (`desk` or `full`) selects the defaults every other
//! `agent.*` key overrides, wherever it appears in the file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agents::{AgentConfig, Algorithm};
use crate::env::EnvId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvId,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Desk defaults: 15 epochs of 2000 steps, 5 evaluation episodes.
    pub fn desk(name: &str, env: EnvId, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            env,
            agent: AgentConfig::desk(algorithm),
            seeds: vec![0],
            epochs: 15,
            steps_per_epoch: 2000,
            eval_episodes: 5,
            output_dir: PathBuf::from("runs"),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 {
            return Err(Error::config("epochs and steps_per_epoch must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes must be at least 1"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid run name '{}'", self.name)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(Error::Parse {
                    line,
                    key: k,
                    message: "empty key".into(),
                });
            }
            if let Some(prev) = seen.insert(k.clone(), line) {
                return Err(Error::Parse {
                    line,
                    key: k,
                    message: format!("duplicate key (first set on line {prev})"),
                });
            }
            entries.push((line, k, v));
        }

        let find = |key: &str| entries.iter().find(|(_, k, _)| k == key);
        let algorithm = match find("agent.algorithm") {
            Some((line, k, v)) => v.parse::<Algorithm>().map_err(|e| perr(*line, k, e))?,
            None => {
                return Err(Error::Parse {
                    line: 0,
                    key: "agent.algorithm".into(),
                    message: "missing required key".into(),
                })
            }
        };
        let agent = match find("agent.profile").map(|(l, k, v)| (*l, k, v.as_str())) {
            None | Some((_, _, "desk")) => AgentConfig::desk(algorithm),
            Some((_, _, "full")) => AgentConfig::full(algorithm),
            Some((line, k, v)) => {
                return Err(perr(line, k, format!("unknown profile '{v}' (desk or full)")))
            }
        };
        let mut cfg = ExperimentConfig {
            agent,
            ..Self::desk("run", EnvId::PointReach, algorithm)
        };
        let mut have_env = false;
        for (line, key, value) in &entries {
            let line = *line;
            let e = |m: String| perr(line, key, m);
            match key.as_str() {
                "name" => cfg.name = value.clone(),
                "env" => {
                    cfg.env = value.parse().map_err(|err: Error| e(err.to_string()))?;
                    have_env = true;
                }
                "seeds" => cfg.seeds = parse_seeds(value).map_err(e)?,
                "epochs" => cfg.epochs = num(value).map_err(e)?,
                "steps_per_epoch" => cfg.steps_per_epoch = num(value).map_err(e)?,
                "eval_episodes" => cfg.eval_episodes = num(value).map_err(e)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "agent.algorithm" | "agent.profile" => {}
                k => match k.strip_prefix("agent.") {
                    Some(field) => set_agent_field(&mut cfg.agent, field, value).map_err(e)?,
                    None => return Err(e("unknown key".into())),
                },
            }
        }
        if !have_env {
            return Err(Error::Parse {
                line: 0,
                key: "env".into(),
                message: "missing required key".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "seeds = {}", seeds.join(", "));
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "steps_per_epoch = {}", self.steps_per_epoch);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "agent.algorithm = {}", a.algorithm);
        for (k, v) in agent_fields(a) {
            let _ = writeln!(s, "agent.{k} = {v}");
        }
        s
    }
}

fn perr(line: usize, key: &str, message: impl ToString) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid number '{v}'"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid boolean '{v}'")),
    }
}

fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(num)
        .collect()
}

fn set_agent_field(a: &mut AgentConfig, field: &str, v: &str) -> std::result::Result<(), String> {
    match field {
        "L" => a.max_len = num(v)?,
        "gamma" => a.gamma = num(v)?,
        "rho" => a.rho = num(v)?,
        "lr" => a.lr = num(v)?,
        "beta1" => a.beta1 = num(v)?,
        "batch_size" => a.batch_size = num(v)?,
        "buffer_size" => a.buffer_size = num(v)?,
        "min_data" => a.min_data = num(v)?,
        "policy_delay" => a.policy_delay = num(v)?,
        "hidden" => a.hidden = num(v)?,
        "routine_noise" => a.routine_noise = num(v)?,
        "action_noise" => a.action_noise = num(v)?,
        "target_smoothing" => a.target_smoothing = num(v)?,
        "smoothing_clip" => a.smoothing_clip = num(v)?,
        "alpha_init" => a.alpha_init = num(v)?,
        "alpha_lr" => a.alpha_lr = num(v)?,
        "alpha_beta1" => a.alpha_beta1 = num(v)?,
        "mto_coeff" => a.mto_coeff = num(v)?,
        "lc_coeff" => a.lc_coeff = num(v)?,
        "replan_mode" => a.replan_mode = flag(v)?,
        "disable_routine_noise" => a.disable_routine_noise = flag(v)?,
        "disable_action_noise" => a.disable_action_noise = flag(v)?,
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

fn agent_fields(a: &AgentConfig) -> Vec<(&'static str, String)> {
    vec![
        ("L", a.max_len.to_string()),
        ("gamma", a.gamma.to_string()),
        ("rho", a.rho.to_string()),
        ("lr", a.lr.to_string()),
        ("beta1", a.beta1.to_string()),
        ("batch_size", a.batch_size.to_string()),
        ("buffer_size", a.buffer_size.to_string()),
        ("min_data", a.min_data.to_string()),
        ("policy_delay", a.policy_delay.to_string()),
        ("hidden", a.hidden.to_string()),
        ("routine_noise", a.routine_noise.to_string()),
        ("action_noise", a.action_noise.to_string()),
        ("target_smoothing", a.target_smoothing.to_string()),
        ("smoothing_clip", a.smoothing_clip.to_string()),
        ("alpha_init", a.alpha_init.to_string()),
        ("alpha_lr", a.alpha_lr.to_string()),
        ("alpha_beta1", a.alpha_beta1.to_string()),
        ("mto_coeff", a.mto_coeff.to_string()),
        ("lc_coeff", a.lc_coeff.to_string()),
        ("replan_mode", a.replan_mode.to_string()),
        ("disable_routine_noise", a.disable_routine_noise.to_string()),
        ("disable_action_noise", a.disable_action_noise.to_string()),
    ]
}
