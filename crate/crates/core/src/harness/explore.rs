//! Exploration coverage of uniform action noise versus uniform routines
//! decoded by an untrained decoder.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Graph, Tensor};
use crate::env::{EnvId, Environment};
use crate::error::{Error, Result};
use crate::models::{sample_length, Decoder, DecoderKind, RoutineSpaceSpec};

pub const HIST_HEADER: &str = "bin_low,bin_high,action_count,routine_count";

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageHistogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub action_counts: Vec<usize>,
    pub routine_counts: Vec<usize>,
    /// Visited states per sampler (equal budgets, so equal totals).
    pub visited: usize,
}

impl CoverageHistogram {
    pub fn action_coverage(&self) -> usize {
        self.action_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn routine_coverage(&self) -> usize {
        self.routine_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HIST_HEADER}\n");
        for i in 0..self.action_counts.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.action_counts[i],
                self.routine_counts[i]
            );
        }
        s
    }
}

/// Diagnostic feature of every state visited in `episodes` episodes.
fn rollout_features(
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    mut next: impl FnMut(&mut ChaCha8Rng) -> Result<Vec<Vec<f64>>>,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ep in 0..episodes {
        let s = env.reset(seed.wrapping_mul(1000).wrapping_add(ep as u64));
        out.push(env.diagnostic_feature(&s));
        'episode: loop {
            for a in next(&mut rng)? {
                let r = env.step(&a)?;
                out.push(r.diagnostic);
                if r.terminal {
                    break 'episode;
                }
            }
        }
    }
    Ok(out)
}

/// Runs both samplers for `episodes` episodes each and bins the visited
/// states' diagnostic feature over their common range.
pub fn explore_hist(
    env_id: EnvId,
    max_len: usize,
    episodes: usize,
    bins: usize,
    seed: u64,
) -> Result<CoverageHistogram> {
    if episodes == 0 || bins == 0 {
        return Err(Error::config("explore-hist needs at least one episode and one bin"));
    }
    let mut env = env_id.make();
    let a = env.spec().action_dim;
    let uniform = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    };
    let actions = rollout_features(env.as_mut(), episodes, seed, |rng| Ok(vec![uniform(rng, a)]))?;

    let spec = RoutineSpaceSpec::new(max_len, a)?;
    let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0xdec0de);
    let decoder = Decoder::new(spec, DecoderKind::Deterministic, &mut init)?;
    let routines = rollout_features(env.as_mut(), episodes, seed, |rng| {
        let n = uniform(rng, spec.routine_dim);
        let g = Graph::new();
        let p = decoder.params.bind(&g, false);
        let out = decoder.forward(&p, g.constant(Tensor::row(n)))?;
        let e = out.term_probs().value().data().to_vec();
        let acts = out.actions.value();
        let l = sample_length(&e, rng);
        Ok((0..l).map(|j| acts.data()[j * a..(j + 1) * a].to_vec()).collect())
    })?;

    let hi = actions
        .iter()
        .chain(&routines)
        .fold(0.0f64, |m, &x| m.max(x))
        .max(1e-12);
    let width = hi / bins as f64;
    let bin = |x: f64| ((x / width) as usize).min(bins - 1);
    let mut action_counts = vec![0; bins];
    let mut routine_counts = vec![0; bins];
    actions.iter().for_each(|&x| action_counts[bin(x)] += 1);
    routines.iter().for_each(|&x| routine_counts[bin(x)] += 1);
    Ok(CoverageHistogram {
        edges: (0..=bins).map(|i| i as f64 * width).collect(),
        action_counts,
        routine_counts,
        visited: actions.len(),
    })
}
