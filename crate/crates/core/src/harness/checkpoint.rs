//! Text checkpoints.
//!
//! ```text
//! routine-checkpoint 1
//! algorithm = routine_td3
//! state_dim = 6
//! action_dim = 2
//! L = 4
//! hidden = 64
//! routine_dim = 8
//! hidden_dim = 2
//! aggregate_dim = 8
//! tensor policy/l0.w 6 64
//! <rows·cols values, space separated>
//! tensor policy/l0.b 1 64
//! ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so saving a loaded checkpoint reproduces the file byte for byte.
//! Only parameter values are stored, not optimizer moments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::agents::{Agent, AgentConfig, Algorithm};
use crate::diff::Tensor;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::models::RoutineSpaceSpec;

const MAGIC: &str = "routine-checkpoint 1";

pub fn to_text(agent: &Agent, env: &EnvSpec) -> String {
    let cfg = agent.config();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "algorithm = {}", cfg.algorithm);
    let _ = writeln!(s, "state_dim = {}", env.state_dim);
    let _ = writeln!(s, "action_dim = {}", env.action_dim);
    let _ = writeln!(s, "L = {}", cfg.max_len);
    let _ = writeln!(s, "hidden = {}", cfg.hidden);
    if let Ok(spec) = RoutineSpaceSpec::new(cfg.max_len, env.action_dim) {
        let _ = writeln!(s, "routine_dim = {}", spec.routine_dim);
        let _ = writeln!(s, "hidden_dim = {}", spec.hidden_dim);
        let _ = writeln!(s, "aggregate_dim = {}", spec.aggregate_dim);
    }
    for (set, params) in agent.parameter_sets() {
        for (name, t) in params.values() {
            let _ = writeln!(s, "tensor {set}/{name} {} {}", t.rows(), t.cols());
            let vals: Vec<String> = t.data().iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
    }
    s
}

pub fn save(agent: &Agent, env: &EnvSpec, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(agent, env))?;
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: "checkpoint".into(),
        message: msg.into(),
    }
}

/// Rebuilds an agent for `env` from checkpoint text.
pub fn from_text(text: &str, env: &EnvSpec) -> Result<Agent> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(1, "not a routine checkpoint")),
    }
    let mut header: HashMap<String, (usize, String)> = HashMap::new();
    let mut tensors: Vec<(usize, String, Tensor)> = Vec::new();
    while let Some((ln, line)) = lines.next() {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(ln, "expected `tensor <name> <rows> <cols>`"));
            }
            let dims: Vec<usize> = f[1..]
                .iter()
                .map(|d| d.parse().map_err(|_| bad(ln, format!("invalid dimension '{d}'"))))
                .collect::<Result<_>>()?;
            let (vln, vals) = lines.next().ok_or_else(|| bad(ln, "missing tensor values"))?;
            let data: Vec<f64> = vals
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(vln, format!("invalid value '{v}'"))))
                .collect::<Result<_>>()?;
            if data.len() != dims[0] * dims[1] {
                return Err(bad(vln, format!("{} has {} values, expected {}", f[0], data.len(), dims[0] * dims[1])));
            }
            tensors.push((ln, f[0].to_string(), Tensor::matrix(dims[0], dims[1], data)));
        } else if let Some((k, v)) = line.split_once('=') {
            header.insert(k.trim().to_string(), (ln, v.trim().to_string()));
        } else if !line.trim().is_empty() {
            return Err(bad(ln, format!("unexpected line '{line}'")));
        }
    }
    let get = |k: &str| -> Result<&(usize, String)> {
        header.get(k).ok_or_else(|| bad(0, format!("missing header key `{k}`")))
    };
    let int = |k: &str| -> Result<usize> {
        let (ln, v) = get(k)?;
        v.parse().map_err(|_| bad(*ln, format!("invalid `{k}`")))
    };
    let algorithm: Algorithm = get("algorithm")?.1.parse()?;
    if int("state_dim")? != env.state_dim || int("action_dim")? != env.action_dim {
        return Err(Error::config(format!(
            "checkpoint was trained on |s|={}, |a|={}; environment has |s|={}, |a|={}",
            int("state_dim")?,
            int("action_dim")?,
            env.state_dim,
            env.action_dim
        )));
    }
    let cfg = AgentConfig {
        max_len: int("L")?,
        hidden: int("hidden")?,
        ..AgentConfig::desk(algorithm)
    };
    let mut agent = Agent::new(cfg, env, 0)?;
    let expected: usize = agent.parameter_sets().iter().map(|(_, p)| p.len()).sum();
    if tensors.len() != expected {
        return Err(bad(0, format!("{} tensors, expected {expected}", tensors.len())));
    }
    for (ln, full, t) in tensors {
        let (set, name) = full
            .split_once('/')
            .ok_or_else(|| bad(ln, format!("tensor name '{full}' lacks a set prefix")))?;
        let params = agent
            .parameter_set_mut(set)
            .ok_or_else(|| bad(ln, format!("unknown parameter set '{set}'")))?;
        params.set(name, t).map_err(|e| bad(ln, e.to_string()))?;
    }
    Ok(agent)
}

pub fn load(path: &Path, env: &EnvSpec) -> Result<Agent> {
    from_text(&std::fs::read_to_string(path)?, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ActMode;
    use crate::env::EnvId;

    #[test]
    fn round_trip_is_byte_identical() {
        for alg in Algorithm::ALL {
            let env = EnvId::PendulumSwingup.make().spec();
            let cfg = AgentConfig {
                hidden: 8,
                max_len: 2,
                ..AgentConfig::desk(alg)
            };
            let mut agent = Agent::new(cfg, &env, 11).unwrap();
            let text = to_text(&agent, &env);
            let mut back = from_text(&text, &env).unwrap();
            assert_eq!(to_text(&back, &env), text, "{alg}");
            let s = [1.0, 0.0, 0.3];
            assert_eq!(
                agent.act(&s, ActMode::Eval).unwrap(),
                back.act(&s, ActMode::Eval).unwrap()
            );
        }
    }

    #[test]
    fn rejects_mismatched_environment_and_corruption() {
        let env = EnvId::PendulumSwingup.make().spec();
        let agent = Agent::new(AgentConfig { hidden: 4, ..AgentConfig::desk(Algorithm::Td3) }, &env, 0).unwrap();
        let text = to_text(&agent, &env);
        let other = EnvId::PointReach.make().spec();
        assert!(from_text(&text, &other).unwrap_err().is_config());
        let cut: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(from_text(&cut, &env).is_err());
        assert!(from_text("hello", &env).is_err());
    }
}
