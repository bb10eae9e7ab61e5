//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p routine-core --test acceptance -- 3 4`.
//! Criteria 8 and 10 train full desk runs and take tens of minutes.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use routine_core::agents::{evaluate, run_episode, ActMode, Agent, Algorithm, Trainer};
use routine_core::diff::{finite_diff_check, AdamConfig, BoundParams, Graph, ParameterSet, Tensor, Var};
use routine_core::env::EnvId;
use routine_core::harness::{self, ExperimentConfig, RunOutputs};
use routine_core::losses::{
    encode_prefixes, lc_loss, lc_loss_for_prefixes, mto_loss, policy_loss, routine_td_loss,
    single_step_td_loss, td_targets, temperature_loss, TargetKind, TargetNoise,
};
use routine_core::models::{
    decode_with_noise, length_distribution, q_forward, sample_length, ActionSequence,
    DecodeNoise, Decoder, DecoderKind, Encoder, RoutineSpaceSpec,
};

use common::{loop_targets, nets, random_batch, rng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut r = rng(101);
    let td3 = TargetKind::Td3 {
        smoothing_std: 0.1,
        smoothing_clip: 0.25,
    };
    let sac = TargetKind::Sac { alpha: 0.2 };

    for (label, kind, dk) in [
        ("J_Q (TD3 targets)", td3, DecoderKind::Deterministic),
        ("J_Q (SAC targets)", sac, DecoderKind::Gaussian),
    ] {
        let n = nets(3, dk, 7);
        let batch = random_batch(&mut r, 5, 3);
        let noise = TargetNoise::sample(&batch, &n, &kind, &mut r);
        let y = td_targets(&n, &batch, 0.9, &kind, &noise).unwrap();
        let (mut q, mut e) = (n.critics[0].params.clone(), n.encoder.params.clone());
        let err = finite_diff_check(&mut [&mut q, &mut e], FD_STEP, 200, 1, |g, b| {
            let routines = encode_prefixes(&n, &b[1], &batch, g)?;
            routine_td_loss(&n.critics[0], &b[0], &batch, routines, &y)
        })
        .unwrap();
        results.push((label, err));
    }

    {
        let n = nets(3, DecoderKind::Deterministic, 8);
        let batch = random_batch(&mut r, 5, 3);
        let (mut d, mut e) = (n.decoder.params.clone(), n.encoder.params.clone());
        let err = finite_diff_check(&mut [&mut d, &mut e], FD_STEP, 200, 2, |g, b| {
            let routines = encode_prefixes(&n, &b[1], &batch, g)?;
            lc_loss_for_prefixes(&n, &b[0], &batch, routines)
        })
        .unwrap();
        results.push(("J_lc", err));
    }

    for (label, dk, alpha) in [
        ("J_pi (TD3)", DecoderKind::Deterministic, None),
        ("J_pi (SAC)", DecoderKind::Gaussian, Some(0.2)),
    ] {
        let n = nets(3, dk, 9);
        let batch = random_batch(&mut r, 5, 3);
        let noise = DecodeNoise::sample(5, &n.spec, dk == DecoderKind::Gaussian, &mut r);
        let (mut p, mut d) = (n.policy.params.clone(), n.decoder.params.clone());
        let err = finite_diff_check(&mut [&mut p, &mut d], FD_STEP, 200, 3, |_, b| {
            Ok(policy_loss(&n, &b[0], &b[1], &batch.s, alpha, &noise)?.loss)
        })
        .unwrap();
        results.push((label, err));
    }

    for (label, dk) in [
        ("J_mto (deterministic decoder)", DecoderKind::Deterministic),
        ("J_mto (Gaussian decoder)", DecoderKind::Gaussian),
    ] {
        let n = nets(4, dk, 10);
        let routines = Tensor::matrix(6, 8, (0..48).map(|_| r.gen_range(-1.0..1.0)).collect());
        let noise = DecodeNoise::sample(6, &n.spec, dk == DecoderKind::Gaussian, &mut r);
        let mut d = n.decoder.params.clone();
        let err = finite_diff_check(&mut [&mut d], FD_STEP, 200, 4, |_, b| {
            mto_loss(&n, &b[0], &routines, &noise)
        })
        .unwrap();
        results.push((label, err));
    }

    {
        let mut la = ParameterSet::new();
        la.insert("log_alpha", Tensor::scalar(0.3f64.ln())).unwrap();
        let logp = [0.4, -1.3, 2.2, -0.1];
        let err = finite_diff_check(&mut [&mut la], FD_STEP, 1, 5, |_, b| {
            temperature_loss(b[0].get("log_alpha"), &logp, -2.0)
        })
        .unwrap();
        results.push(("temperature loss", err));
    }

    {
        let n = nets(1, DecoderKind::Deterministic, 11);
        let batch = random_batch(&mut r, 6, 1);
        let y = Tensor::matrix(6, 1, (0..6).map(|_| r.gen_range(-1.0..1.0)).collect());
        let mut q = n.critics[0].params.clone();
        let err = finite_diff_check(&mut [&mut q], FD_STEP, 200, 6, |g, b| {
            single_step_td_loss(
                &n.critics[0],
                &b[0],
                g.constant(batch.s.clone()),
                g.constant(batch.action_block()),
                &y,
                &batch.valid,
            )
        })
        .unwrap();
        results.push(("single-step J_Q", err));
    }

    let elapsed = start.elapsed();
    let worst = results.iter().map(|x| x.1).fold(0.0, f64::max);
    for (label, err) in &results {
        println!("      {label:<30} max rel err {err:.2e}");
    }
    outcome(
        worst < FD_TOL && elapsed < Duration::from_secs(30),
        format!(
            "{} losses, max rel err {worst:.2e} (< 1e-4), {:.1}s (< 30s)",
            results.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn target_oracle() -> Outcome {
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    let (mut terminal_slots, mut boundary_slots, mut batches) = (0, 0, 0);
    for &l in &[1, 2, 4, 8] {
        for i in 0..100 {
            let sac = i % 2 == 1;
            let (kind, dk) = if sac {
                (TargetKind::Sac { alpha: 0.3 }, DecoderKind::Gaussian)
            } else {
                (
                    TargetKind::Td3 {
                        smoothing_std: 0.1,
                        smoothing_clip: 0.25,
                    },
                    DecoderKind::Deterministic,
                )
            };
            let n = nets(l, dk, 1000 + i);
            let batch = random_batch(&mut r, 6, l);
            let noise = TargetNoise::sample(&batch, &n, &kind, &mut r);
            let gamma = r.gen_range(0.5..1.0);
            let y = td_targets(&n, &batch, gamma, &kind, &noise).unwrap();
            let oracle = loop_targets(&n, &batch, gamma, &kind, &noise);
            for b in 0..batch.size() {
                for j in 0..l {
                    worst = worst.max((y.at(b, j) - oracle[b][j]).abs());
                    if batch.valid.at(b, j) == 1.0 && batch.cont.at(b, j) == 0.0 {
                        terminal_slots += 1;
                    }
                    if batch.valid.at(b, j) == 0.0 {
                        boundary_slots += 1;
                    }
                }
            }
            batches += 1;
        }
    }
    outcome(
        worst <= 1e-10 && terminal_slots > 0 && boundary_slots > 0,
        format!(
            "{batches} batches over L in {{1,2,4,8}}, max |diff| {worst:.1e} (<= 1e-10); \
             {terminal_slots} terminal slots, {boundary_slots} masked slots"
        ),
    )
}

fn length_distribution_check() -> Outcome {
    let mut r = rng(303);
    let draws = 100_000usize;
    let (mut worst_z, mut worst_sum): (f64, f64) = (0.0, 0.0);
    let mut failures = 0;
    for _ in 0..20 {
        let l = r.gen_range(2..=8);
        let e: Vec<f64> = (0..l - 1).map(|_| r.gen_range(0.02..0.98)).collect();
        let p = length_distribution(&e);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let mut counts = vec![0usize; l];
        for _ in 0..draws {
            counts[sample_length(&e, &mut r) - 1] += 1;
        }
        for (c, p) in counts.iter().zip(&p) {
            let f = *c as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            let z = (f - p).abs() / sigma.max(1e-300);
            worst_z = worst_z.max(z);
            if (f - p).abs() > 3.0 * sigma {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0 && worst_sum <= 1e-12,
        format!(
            "20 vectors x 1e5 draws, worst deviation {worst_z:.2} sigma (<= 3), \
             {failures} bins outside, max |sum p - 1| {worst_sum:.1e}"
        ),
    )
}

fn prefix_identity() -> Outcome {
    let mut r = rng(404);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &l in &[2, 4, 8, 16] {
        let spec = RoutineSpaceSpec::new(l, 2).unwrap();
        let mut enc = Encoder::new(spec, &mut r).unwrap();
        for i in 0..250 {
            if i % 50 == 0 {
                enc = Encoder::new(spec, &mut r).unwrap();
            }
            let block: Vec<f64> = (0..spec.block_dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let g = Graph::new();
            let p = enc.params.bind(&g, false);
            let a = g.constant(Tensor::row(block));
            let prefixes = enc.forward_all_prefixes(&p, a).unwrap();
            for (j, pre) in prefixes.iter().enumerate() {
                let single = enc.forward(&p, a, &[j + 1]).unwrap();
                worst = worst.max(pre.value().max_abs_diff(&single.value()));
            }
            count += 1;
        }
    }
    outcome(
        worst <= 1e-12 && count == 1000,
        format!("{count} sequences over L in {{2,4,8,16}}, max |diff| {worst:.1e} (<= 1e-12)"),
    )
}

fn dimensionality() -> Outcome {
    let mut checked = 0;
    let mut ok = true;
    for &a in &[1usize, 2, 3, 6] {
        for &l in &[1usize, 2, 4, 8, 16] {
            let s = RoutineSpaceSpec::new(l, a).unwrap();
            let h = 1usize << (a as f64).log2().ceil() as u32;
            ok &= s.routine_dim == l * a && s.hidden_dim == h && s.aggregate_dim == l * h;
            let spec_ok = {
                let n = nets_for(l, a);
                n.0 == l * a && n.1 == l
            };
            ok &= spec_ok;
            checked += 1;
        }
    }
    outcome(ok, format!("{checked} (|a|, L) pairs, |n|, |h|, |g| exact"))
}

/// Routine width of an encoded sequence and slot count of a decoded one.
fn nets_for(l: usize, a: usize) -> (usize, usize) {
    let spec = RoutineSpaceSpec::new(l, a).unwrap();
    let mut r = rng(5);
    let enc = Encoder::new(spec, &mut r).unwrap();
    let seq = ActionSequence::new(vec![vec![0.1; a]; l]);
    let n = enc.encode_sequence(&seq).unwrap();
    let dec = Decoder::new(spec, DecoderKind::Deterministic, &mut r).unwrap();
    let g = Graph::new();
    let p = dec.params.bind(&g, false);
    let out = dec.forward(&p, g.constant(Tensor::row(n.clone()))).unwrap();
    (n.len(), out.actions.cols() / a)
}

fn lc_value<'g>(
    enc: &Encoder,
    dec: &Decoder,
    lens: &[usize],
    block: &Tensor,
    g: &'g Graph,
    train: bool,
) -> (BoundParams<'g>, BoundParams<'g>, Var<'g>) {
    let ep = enc.params.bind(g, train);
    let dp = dec.params.bind(g, train);
    let routines = enc.forward(&ep, g.constant(block.clone()), lens).unwrap();
    let out = dec.forward(&dp, routines).unwrap();
    let loss = lc_loss(out.term_logits, lens, &vec![1.0; lens.len()]).unwrap();
    (ep, dp, loss)
}

fn consistency_trainability() -> Outcome {
    let mut r = rng(606);
    let adam = AdamConfig::new(3e-3, 0.9);
    // J_mto on |n| = 8 with the encoder frozen; routines come from the
    // encoder's image of random full-length sequences. Sampled lengths pass
    // no gradient to the termination head, so the decoder also gets the
    // length term for length L, as it does inside the agent.
    let n = nets(4, DecoderKind::Deterministic, 66);
    let spec = n.spec;
    let encode = |rows: usize, r: &mut rand_chacha::ChaCha8Rng| -> Tensor {
        let block = Tensor::matrix(
            rows,
            spec.block_dim(),
            (0..rows * spec.block_dim()).map(|_| r.gen_range(-1.0..1.0)).collect(),
        );
        let g = Graph::new();
        let ep = n.encoder.params.bind(&g, false);
        let out = n.encoder.forward(&ep, g.constant(block), &vec![spec.max_len; rows]).unwrap();
        let t = out.value().as_ref().clone();
        t
    };
    let mut dec = n.decoder.clone();
    for _ in 0..2000 {
        let routines = encode(64, &mut r);
        let noise = DecodeNoise::sample(64, &spec, false, &mut r);
        let g = Graph::new();
        let dp = dec.params.bind(&g, true);
        let mto = mto_loss(&n, &dp, &routines, &noise).unwrap();
        let out = dec.forward(&dp, g.constant(routines.clone())).unwrap();
        let lc = lc_loss(out.term_logits, &[spec.max_len; 64], &[1.0; 64]).unwrap();
        let grads = g.backward(mto.add(lc).unwrap()).unwrap();
        dec.params.accumulate(&dp, &grads);
        dec.params.adam_step(&adam).unwrap();
    }
    let mto = {
        let routines = encode(1000, &mut r);
        let noise = DecodeNoise::sample(1000, &spec, false, &mut r);
        let g = Graph::new();
        let dp = dec.params.bind(&g, false);
        mto_loss(&n, &dp, &routines, &noise).unwrap().value().item()
    };

    // J_lc on synthetic sequences of random length, encoder and decoder
    // trained jointly.
    let n2 = nets(4, DecoderKind::Deterministic, 67);
    let (mut enc, mut dec2) = (n2.encoder.clone(), n2.decoder.clone());
    let batch = |rows: usize, r: &mut rand_chacha::ChaCha8Rng| {
        let lens: Vec<usize> = (0..rows).map(|_| r.gen_range(1..=spec.max_len)).collect();
        let block: Vec<f64> = (0..rows * spec.block_dim()).map(|_| r.gen_range(-1.0..1.0)).collect();
        (lens, Tensor::matrix(rows, spec.block_dim(), block))
    };
    for _ in 0..2000 {
        let (lens, block) = batch(64, &mut r);
        let g = Graph::new();
        let (ep, dp, loss) = lc_value(&enc, &dec2, &lens, &block, &g, true);
        let grads = g.backward(loss).unwrap();
        enc.params.accumulate(&ep, &grads);
        dec2.params.accumulate(&dp, &grads);
        enc.params.adam_step(&adam).unwrap();
        dec2.params.adam_step(&adam).unwrap();
    }
    let (lens, block) = batch(1000, &mut r);
    let g = Graph::new();
    let lc = lc_value(&enc, &dec2, &lens, &block, &g, false).2.value().item();
    outcome(
        mto < 0.05 && lc < 0.05,
        format!("after 2000 Adam steps (lr 3e-3): J_mto {mto:.4} (< 0.05, |n| = 8), J_lc {lc:.4} (< 0.05)"),
    )
}

fn degenerate_length() -> Outcome {
    let mut r = rng(707);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = nets(1, DecoderKind::Deterministic, 700 + i);
        let batch = random_batch(&mut r, 8, 1);
        let kind = TargetKind::Td3 {
            smoothing_std: 0.1,
            smoothing_clip: 0.25,
        };
        let noise = TargetNoise::sample(&batch, &n, &kind, &mut r);
        let gamma = 0.95;
        let y = td_targets(&n, &batch, gamma, &kind, &noise).unwrap();

        let g = Graph::new();
        let qp = n.critics[0].params.bind(&g, false);
        let ep = n.encoder.params.bind(&g, false);
        let routines = encode_prefixes(&n, &ep, &batch, &g).unwrap();
        let routine_loss = routine_td_loss(&n.critics[0], &qp, &batch, routines, &y)
            .unwrap()
            .value()
            .item();

        // Single-step target r + γ·cont·min Q'(s', a') with a' the smoothed,
        // auto-encoded policy action, built without the multi-length code.
        let rows = batch.size();
        let s_next = g.constant(Tensor::matrix(rows, common::STATE_DIM, batch.s_next.data().to_vec()));
        let pp = n.policy.params.bind(&g, false);
        let dp = n.decoder.params.bind(&g, false);
        let pi = n.policy.forward(&pp, s_next).unwrap();
        let dec = decode_with_noise(&n.decoder, &dp, pi, &noise.decode).unwrap();
        let next_a = n
            .encoder
            .forward(&ep, dec.actions, &dec.lengths)
            .unwrap()
            .add(g.constant(noise.smoothing.clone().unwrap()))
            .unwrap()
            .clamp(-1.0, 1.0);
        let tq = |m: usize| {
            let p = n.target_critics[m].params.bind(&g, false);
            q_forward(&n.target_critics[m], &p, s_next, next_a).unwrap().value()
        };
        let (q1, q2) = (tq(0), tq(1));
        let y1: Vec<f64> = (0..rows)
            .map(|b| batch.r.at(b, 0) + gamma * batch.cont.at(b, 0) * q1.at(b, 0).min(q2.at(b, 0)))
            .collect();
        let baseline_loss = single_step_td_loss(
            &n.critics[0],
            &qp,
            g.constant(batch.s.clone()),
            routines.detach(),
            &Tensor::matrix(rows, 1, y1),
            &batch.valid,
        )
        .unwrap()
        .value()
        .item();
        worst = worst.max((routine_loss - baseline_loss).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("50 batches, max |J_Q(L=1) - single-step J_Q| {worst:.1e} (<= 1e-10)"),
    )
}

fn run_dir(tag: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(tag)
}

fn desk_config(name: &str, algorithm: Algorithm, seeds: Vec<u64>, dir: PathBuf) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(name, EnvId::PointReach, algorithm);
    c.seeds = seeds;
    c.output_dir = dir;
    c
}

/// Desk Routine TD3 runs, shared by criteria 8 and 10.
fn routine_runs() -> &'static (RunOutputs, Duration) {
    static RUNS: OnceLock<(RunOutputs, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = desk_config("routine_td3", Algorithm::RoutineTd3, (0..5).collect(), run_dir("desk"));
        let t = Instant::now();
        let out = harness::run(&cfg).expect("routine desk run");
        (out, t.elapsed())
    })
}

fn desk_behaviour() -> Outcome {
    let (routine, routine_time) = routine_runs();
    let cfg = desk_config("td3", Algorithm::Td3, (0..5).collect(), run_dir("desk"));
    let baseline = harness::run(&cfg).expect("baseline desk run");
    let r = &routine.summary_data;
    let b = &baseline.summary_data;
    let ratio = r.mean_final_return / b.mean_final_return;
    let per_seed = routine_time.as_secs_f64() / 5.0;
    let queries_ok = r.mean_final_policy_queries <= 0.7 * 200.0;
    println!(
        "      last-10-epoch means: routine {:.1} +- {:.1} return, {:.1} queries; baseline {:.1} +- {:.1}",
        r.mean_return, r.std_return, r.mean_policy_queries, b.mean_return, b.std_return
    );
    for s in &r.seeds {
        println!(
            "      routine seed {}: final return {:.1}, queries {:.1}",
            s.seed, s.final_return, s.final_policy_queries
        );
    }
    outcome(
        ratio >= 0.9 && queries_ok && per_seed <= 330.0,
        format!(
            "(a) final return {:.1} vs baseline {:.1}, ratio {ratio:.3} (>= 0.9); \
             (b) queries {:.1} (<= 140); {per_seed:.0}s per seed",
            r.mean_final_return, b.mean_final_return, r.mean_final_policy_queries
        ),
    )
}

fn replan_ablation() -> Outcome {
    let mut cfg = desk_config("replan", Algorithm::RoutineTd3, vec![0, 1], run_dir("replan"));
    cfg.agent.replan_mode = true;
    cfg.epochs = 2;
    let out = harness::run(&cfg).expect("replan run");
    let mut rows_ok = true;
    for p in &out.csvs {
        let rows = harness::metrics::read_csv(&std::fs::read_to_string(p).unwrap()).unwrap();
        rows_ok &= rows.iter().all(|r| r.mean_policy_queries == 200.0);
    }
    let mut episodes = 0;
    let mut all_t = true;
    let spec = EnvId::PointReach.make().spec();
    for seed in 0..3u64 {
        let mut agent = Agent::new(cfg.agent.clone(), &spec, seed).unwrap();
        let mut t = Trainer::new(agent.clone(), EnvId::PointReach, seed).unwrap();
        t.run(1500).unwrap();
        agent = t.agent;
        let rep = evaluate(&mut agent, EnvId::PointReach, 5, seed).unwrap();
        all_t &= rep.policy_queries.iter().all(|&q| q == 200);
        episodes += rep.policy_queries.len();
        let mut env = EnvId::PointReach.make();
        let ep = run_episode(&mut agent, env.as_mut(), seed, ActMode::Explore).unwrap();
        all_t &= ep.policy_queries == 200;
        episodes += 1;
    }
    outcome(
        rows_ok && all_t,
        format!("{episodes} episodes plus {} epoch evaluations, queries = T = 200 in every one", 2 * cfg.epochs),
    )
}

fn determinism() -> Outcome {
    let (first, _) = routine_runs();
    let cfg = desk_config("routine_td3", Algorithm::RoutineTd3, vec![0], run_dir("repeat"));
    let again = harness::run(&cfg).expect("repeat run");
    let a = std::fs::read(&first.csvs[0]).unwrap();
    let b = std::fs::read(&again.csvs[0]).unwrap();
    outcome(
        a == b && !a.is_empty(),
        format!("seed 0 desk run repeated: {} vs {} bytes, identical = {}", a.len(), b.len(), a == b),
    )
}

fn main() {
    let filters: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient suite", gradient_suite),
        (2, "target oracle", target_oracle),
        (3, "length distribution", length_distribution_check),
        (4, "prefix encoder identity", prefix_identity),
        (5, "dimensionality rules", dimensionality),
        (6, "consistency trainability", consistency_trainability),
        (7, "degenerate L equivalence", degenerate_length),
        (8, "desk behaviour", desk_behaviour),
        (9, "re-plan ablation", replan_ablation),
        (10, "determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut panicked = Vec::new();
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.contains(&id) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            panicked.push(id);
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if res.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] criterion {id:>2} {name}: {} ({:.1}s)",
            res.detail,
            t.elapsed().as_secs_f64()
        );
        if !res.pass {
            failed.push(id);
        }
    }
    println!("{} of {ran} criteria pass; failing: {failed:?}", ran - failed.len());
    // A red criterion is a reported result, not a broken build. Panics are
    // defects and always fail; ACCEPTANCE_STRICT=1 makes any red line fail.
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if !panicked.is_empty() || (strict && !failed.is_empty()) {
        std::process::exit(1);
    }
}
