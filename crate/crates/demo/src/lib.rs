//! Browser bindings: the termination-probability length distribution, the
//! exploration coverage histogram and a point_reach rollout driven by
//! random routines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use routine_core::diff::{Graph, Tensor};
use routine_core::env::{EnvId, PointReach};
use routine_core::harness::explore_hist;
use routine_core::models::{self, Decoder, DecoderKind, RoutineSpaceSpec};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn check_probs(e: &[f64]) -> Result<(), JsError> {
    if e.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(JsError::new("termination probabilities must lie in [0, 1]"));
    }
    Ok(())
}

/// `p(l)` for `l = 1..=e.len()+1`.
#[wasm_bindgen]
pub fn length_distribution(e: Vec<f64>) -> Result<Vec<f64>, JsError> {
    check_probs(&e)?;
    Ok(models::length_distribution(&e))
}

/// Empirical length frequencies from `draws` samples.
#[wasm_bindgen]
pub fn sampled_lengths(e: Vec<f64>, draws: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    check_probs(&e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; e.len() + 1];
    for _ in 0..draws {
        counts[models::sample_length(&e, &mut rng) - 1] += 1.0;
    }
    let n = f64::from(draws.max(1));
    Ok(counts.into_iter().map(|c| c / n).collect())
}

#[wasm_bindgen]
pub struct Coverage {
    edges: Vec<f64>,
    actions: Vec<u32>,
    routines: Vec<u32>,
}

#[wasm_bindgen]
impl Coverage {
    #[wasm_bindgen(getter)]
    pub fn edges(&self) -> Vec<f64> {
        self.edges.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn actions(&self) -> Vec<u32> {
        self.actions.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn routines(&self) -> Vec<u32> {
        self.routines.clone()
    }
}

/// Speed histograms of uniform actions versus uniform routines decoded by an
/// untrained decoder.
#[wasm_bindgen]
pub fn coverage(env: &str, max_len: usize, episodes: usize, bins: usize, seed: u64) -> Result<Coverage, JsError> {
    let env: EnvId = env.parse().map_err(js_err)?;
    let h = explore_hist(env, max_len, episodes, bins, seed).map_err(js_err)?;
    let to_u32 = |v: &[usize]| v.iter().map(|&c| c as u32).collect();
    Ok(Coverage {
        edges: h.edges.clone(),
        actions: to_u32(&h.action_counts),
        routines: to_u32(&h.routine_counts),
    })
}

#[wasm_bindgen]
pub struct Rollout {
    path: Vec<f64>,
    goal: Vec<f64>,
    lengths: Vec<u32>,
    ret: f64,
}

#[wasm_bindgen]
impl Rollout {
    /// Positions `x0, y0, x1, y1, ...` including the start.
    #[wasm_bindgen(getter)]
    pub fn path(&self) -> Vec<f64> {
        self.path.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn goal(&self) -> Vec<f64> {
        self.goal.clone()
    }

    /// Executed length of each routine.
    #[wasm_bindgen(getter)]
    pub fn lengths(&self) -> Vec<u32> {
        self.lengths.clone()
    }

    #[wasm_bindgen(getter, js_name = "return")]
    pub fn ret(&self) -> f64 {
        self.ret
    }
}

/// One point_reach episode where every query draws a uniform routine and
/// an untrained decoder turns it into actions and a sampled length.
#[wasm_bindgen]
pub fn rollout(max_len: usize, seed: u64) -> Result<Rollout, JsError> {
    use routine_core::env::Environment;
    let mut env = PointReach::new(false);
    let spec = RoutineSpaceSpec::new(max_len, 2).map_err(js_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decoder = Decoder::new(spec, DecoderKind::Deterministic, &mut rng).map_err(js_err)?;
    let s = env.reset(seed);
    let mut out = Rollout {
        path: s[..2].to_vec(),
        goal: s[4..6].to_vec(),
        lengths: Vec::new(),
        ret: 0.0,
    };
    loop {
        let n: Vec<f64> = (0..spec.routine_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let g = Graph::new();
        let p = decoder.params.bind(&g, false);
        let d = decoder.forward(&p, g.constant(Tensor::row(n))).map_err(js_err)?;
        let e = d.term_probs().value().data().to_vec();
        let acts = d.actions.value();
        let l = models::sample_length(&e, &mut rng);
        let mut executed = 0;
        for j in 0..l {
            let r = env.step(&acts.data()[2 * j..2 * j + 2]).map_err(js_err)?;
            out.ret += r.reward;
            out.path.extend_from_slice(&r.next_state[..2]);
            executed += 1;
            if r.terminal {
                out.lengths.push(executed);
                return Ok(out);
            }
        }
        out.lengths.push(executed);
    }
}
