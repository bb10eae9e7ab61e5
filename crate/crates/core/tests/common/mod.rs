//! Shared fixtures: random replay data, small networks and a loop-based
//! reference for TD-targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use routine_core::diff::{Graph, Tensor};
use routine_core::losses::{TargetKind, TargetNoise};
use routine_core::models::{
    decode_with_noise, q_forward, sequence_log_prob, DecoderKind, RoutineNets, RoutineSpaceSpec,
};
use routine_core::replay::{ReplayBuffer, SequenceBatch, Transition};

pub const STATE_DIM: usize = 3;
pub const ACTION_DIM: usize = 2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn nets(max_len: usize, kind: DecoderKind, seed: u64) -> RoutineNets {
    let spec = RoutineSpaceSpec::new(max_len, ACTION_DIM).unwrap();
    RoutineNets::new(STATE_DIM, spec, 8, kind, &mut rng(seed)).unwrap()
}

/// Short episodes: some end in a terminal, some are cut without one.
pub fn random_buffer(rng: &mut impl Rng, transitions: usize) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(transitions, 1).unwrap();
    let mut ep = 0;
    while buf.len() < transitions {
        let len = rng.gen_range(1..12);
        let terminal_end = rng.gen_bool(0.6);
        for step in 0..len {
            if buf.len() == transitions {
                break;
            }
            let v = |rng: &mut dyn rand::RngCore, n| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            buf.push(Transition {
                state: v(rng, STATE_DIM),
                action: v(rng, ACTION_DIM),
                next_state: v(rng, STATE_DIM),
                reward: rng.gen_range(0.0..1.0),
                terminal: terminal_end && step + 1 == len,
                episode_id: ep,
                step_index: step,
            });
        }
        ep += 1;
    }
    buf
}

pub fn random_batch(rng: &mut impl Rng, rows: usize, max_len: usize) -> SequenceBatch {
    let buf = random_buffer(rng, 60);
    buf.sample_batch(rows, max_len, rng).unwrap()
}

/// Bootstrap value of one slot, evaluated on a single row.
fn slot_value(
    nets: &RoutineNets,
    s_next: &[f64],
    kind: &TargetKind,
    noise: &TargetNoise,
    k: usize,
) -> f64 {
    let g = Graph::new();
    let pp = nets.policy.params.bind(&g, false);
    let dp = nets.decoder.params.bind(&g, false);
    let ep = nets.encoder.params.bind(&g, false);
    let s = g.constant(Tensor::row(s_next.to_vec()));
    let n = nets.policy.forward(&pp, s).unwrap();
    let decoded = decode_with_noise(&nets.decoder, &dp, n, &noise.decode.row(k)).unwrap();
    let mut routine = nets
        .encoder
        .forward(&ep, decoded.actions, &decoded.lengths)
        .unwrap()
        .value()
        .data()
        .to_vec();
    if let Some(sm) = &noise.smoothing {
        for (x, d) in routine.iter_mut().zip(sm.row_slice(k)) {
            *x = (*x + d).clamp(-1.0, 1.0);
        }
    }
    let routine = g.constant(Tensor::row(routine));
    let q = |i: usize| {
        let p = nets.target_critics[i].params.bind(&g, false);
        q_forward(&nets.target_critics[i], &p, s, routine)
            .unwrap()
            .value()
            .item()
    };
    let mut v = q(0).min(q(1));
    if let TargetKind::Sac { alpha } = kind {
        v -= alpha * sequence_log_prob(&decoded).unwrap().value().item();
    }
    v
}

/// `y[b][l]` by explicit summation over rewards, one slot at a time.
pub fn loop_targets(
    nets: &RoutineNets,
    batch: &SequenceBatch,
    gamma: f64,
    kind: &TargetKind,
    noise: &TargetNoise,
) -> Vec<Vec<f64>> {
    let (n, l) = (batch.size(), batch.max_len());
    let mut y = vec![vec![0.0; l]; n];
    let mut k = 0;
    for b in 0..n {
        for j in 0..l {
            if batch.valid.at(b, j) == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            let mut disc = 1.0;
            for i in 0..=j {
                acc += disc * batch.r.at(b, i);
                disc *= gamma;
            }
            let boot = if batch.cont.at(b, j) == 0.0 {
                0.0
            } else {
                disc * slot_value(nets, batch.next_state(b, j), kind, noise, k)
            };
            y[b][j] = acc + boot;
            k += 1;
        }
    }
    y
}
