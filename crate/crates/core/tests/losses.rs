mod common;

use rand::Rng;

use routine_core::agents::{Agent, AgentConfig, Algorithm};
use routine_core::diff::Graph;
use routine_core::env::EnvId;
use routine_core::losses::{
    critic_loss, discount_matrices, discounted_returns, td_targets, TargetKind, TargetNoise,
};
use routine_core::models::DecoderKind;
use routine_core::replay::{ReplayBuffer, SequenceBatch, Transition};

use common::{loop_targets, nets, random_batch, rng, ACTION_DIM, STATE_DIM};

const TD3: TargetKind = TargetKind::Td3 {
    smoothing_std: 0.1,
    smoothing_clip: 0.25,
};

/// Overwrites every masked slot of a batch with huge values.
fn poison(batch: &SequenceBatch) -> SequenceBatch {
    let mut p = batch.clone();
    let (n, l) = (batch.size(), batch.max_len());
    for b in 0..n {
        for j in 0..l {
            if batch.is_valid(b, j) {
                continue;
            }
            p.r.set(b, j, 1e9);
            let k = b * l + j;
            p.a.data_mut()[k * ACTION_DIM..(k + 1) * ACTION_DIM].fill(-7e5);
            p.s_next.data_mut()[k * STATE_DIM..(k + 1) * STATE_DIM].fill(3e7);
        }
    }
    p
}

#[test]
fn masked_slots_do_not_leak_into_targets_or_loss() {
    let mut r = rng(1);
    for &l in &[2, 4, 8] {
        let n = nets(l, DecoderKind::Deterministic, 10 + l as u64);
        let batch = random_batch(&mut r, 16, l);
        assert!(batch.valid.data().contains(&0.0));
        let bad = poison(&batch);
        let noise = TargetNoise::sample(&batch, &n, &TD3, &mut r);
        let y = td_targets(&n, &batch, 0.97, &TD3, &noise).unwrap();
        let y_bad = td_targets(&n, &bad, 0.97, &TD3, &noise).unwrap();
        assert_eq!(y, y_bad);

        let loss = |b: &SequenceBatch| {
            let g = Graph::new();
            let qp = n.critics[0].params.bind(&g, false);
            let ep = n.encoder.params.bind(&g, false);
            let dp = n.decoder.params.bind(&g, false);
            let cl = critic_loss(&n, 0, &qp, &ep, &dp, b, &y).unwrap();
            (cl.j_q.value().item(), cl.j_lc.value().item())
        };
        assert_eq!(loss(&batch), loss(&bad));
    }
}

#[test]
fn terminal_slots_have_no_bootstrap() {
    let mut r = rng(2);
    let n = nets(4, DecoderKind::Deterministic, 3);
    let batch = random_batch(&mut r, 32, 4);
    let noise = TargetNoise::sample(&batch, &n, &TD3, &mut r);
    let y = td_targets(&n, &batch, 0.9, &TD3, &noise).unwrap();
    let disc = discounted_returns(&batch, &discount_matrices(4, 0.9).unwrap());
    let mut seen = 0;
    for b in 0..batch.size() {
        for j in 0..4 {
            if batch.is_valid(b, j) && batch.cont.at(b, j) == 0.0 {
                assert!((y.at(b, j) - disc.at(b, j)).abs() < 1e-12);
                seen += 1;
            }
            if !batch.is_valid(b, j) {
                assert_eq!(y.at(b, j), 0.0);
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn sac_targets_match_oracle_with_unit_gamma() {
    let mut r = rng(3);
    let kind = TargetKind::Sac { alpha: 0.05 };
    for i in 0..10 {
        let n = nets(3, DecoderKind::Gaussian, 40 + i);
        let batch = random_batch(&mut r, 8, 3);
        let noise = TargetNoise::sample(&batch, &n, &kind, &mut r);
        let y = td_targets(&n, &batch, 1.0, &kind, &noise).unwrap();
        let oracle = loop_targets(&n, &batch, 1.0, &kind, &noise);
        for b in 0..batch.size() {
            for j in 0..3 {
                assert!((y.at(b, j) - oracle[b][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn start_indices_are_uniform() {
    let mut r = rng(4);
    let mut buf = ReplayBuffer::new(100, 1).unwrap();
    for i in 0..100 {
        buf.push(Transition {
            state: vec![0.0; 2],
            action: vec![0.0],
            next_state: vec![0.0; 2],
            reward: 0.0,
            terminal: i % 10 == 9,
            episode_id: i / 10,
            step_index: (i % 10) as usize,
        });
    }
    let draws = 100_000;
    let mut counts = [0usize; 100];
    for _ in 0..draws / 1000 {
        for &s in &buf.sample_batch(1000, 3, &mut r).unwrap().starts {
            counts[s] += 1;
        }
    }
    // 100 simultaneous 3-sigma checks would flag a fair sampler about a
    // quarter of the time; allow the binomial tail its expected outliers.
    let p = 0.01;
    let expected = draws as f64 * p;
    let sigma = (expected * (1.0 - p)).sqrt();
    let outside = counts
        .iter()
        .filter(|&&c| (c as f64 - expected).abs() > 3.0 * sigma)
        .count();
    assert!(outside <= 2, "{outside} indices beyond 3 sigma");
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99 degrees of freedom, upper 0.1% point.
    assert!(chi2 < 148.23, "chi-square {chi2:.1}");
}

/// One update with and without the delayed policy phase: the encoder must
/// end up identical, so the policy and consistency objectives never reach it.
#[test]
fn policy_phase_leaves_encoder_untouched() {
    let env = EnvId::PointReach.make().spec();
    let mut r = rng(5);
    let mut buf = ReplayBuffer::new(200, 10).unwrap();
    for i in 0..200u64 {
        let v = |r: &mut rand_chacha::ChaCha8Rng, n| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        buf.push(Transition {
            state: v(&mut r, 6),
            action: v(&mut r, 2),
            next_state: v(&mut r, 6),
            reward: r.gen(),
            terminal: i % 25 == 24,
            episode_id: i / 25,
            step_index: (i % 25) as usize,
        });
    }
    for alg in [Algorithm::RoutineTd3, Algorithm::RoutineSac] {
        let base = AgentConfig {
            hidden: 16,
            batch_size: 8,
            ..AgentConfig::desk(alg)
        };
        let mut with_policy = Agent::new(AgentConfig { policy_delay: 1, ..base.clone() }, &env, 9).unwrap();
        let mut without = Agent::new(AgentConfig { policy_delay: 1000, ..base }, &env, 9).unwrap();
        with_policy.train_step(&buf).unwrap();
        without.train_step(&buf).unwrap();
        let (Agent::Routine(a), Agent::Routine(b)) = (&with_policy, &without) else {
            unreachable!()
        };
        assert_eq!(a.nets.encoder.params.values().collect::<Vec<_>>(), b.nets.encoder.params.values().collect::<Vec<_>>());
        assert_ne!(a.nets.decoder.params, b.nets.decoder.params);
        assert_ne!(a.nets.policy.params, b.nets.policy.params);
    }
}
