//! Training objectives of the routine agents.
//!
//! Critic rows are ordered position-major: row `j·N + b` holds prefix
//! `a_{1:j+1}` of batch row `b`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diff::{BoundParams, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{
    decode_with_noise, length_log_prob, q_forward, sequence_log_prob, DecodeNoise, DecoderKind,
    RoutineNets,
};
use crate::replay::SequenceBatch;

/// Reward-discount matrix and bootstrap discounts for windows of length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountMatrices {
    /// `[L, L]`, entry `(i, j) = γ^i` for `j ≥ i` (0-based), else 0.
    pub r_disc: Tensor,
    /// `(γ, γ², …, γ^L)`.
    pub next_q_disc: Vec<f64>,
}

pub fn discount_matrices(max_len: usize, gamma: f64) -> Result<DiscountMatrices> {
    if max_len == 0 || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::config(format!(
            "discount matrices need L >= 1 and 0 < γ <= 1 (got L={max_len}, γ={gamma})"
        )));
    }
    let mut r = Tensor::zeros(&[max_len, max_len]);
    for i in 0..max_len {
        let d = gamma.powi(i as i32);
        for j in i..max_len {
            r.set(i, j, d);
        }
    }
    Ok(DiscountMatrices {
        r_disc: r,
        next_q_disc: (1..=max_len).map(|j| gamma.powi(j as i32)).collect(),
    })
}

/// How bootstrap values are formed at the window's next states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    /// Twin-minimum on the auto-encoded, smoothed next routine.
    Td3 { smoothing_std: f64, smoothing_clip: f64 },
    /// Twin-minimum minus `α·log p` of one decoded next sequence.
    Sac { alpha: f64 },
}

/// Frozen randomness for the bootstrap values of one batch.
///
/// One row per valid `(row, j)` slot, in row-major slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNoise {
    pub slots: Vec<(usize, usize)>,
    pub decode: DecodeNoise,
    /// `[K, |n|]`, already clipped (TD3 only).
    pub smoothing: Option<Tensor>,
}

fn valid_slots(batch: &SequenceBatch) -> Vec<(usize, usize)> {
    (0..batch.size())
        .flat_map(|b| (0..batch.max_len()).map(move |j| (b, j)))
        .filter(|&(b, j)| batch.is_valid(b, j))
        .collect()
}

impl TargetNoise {
    pub fn sample(
        batch: &SequenceBatch,
        nets: &RoutineNets,
        kind: &TargetKind,
        rng: &mut impl Rng,
    ) -> Self {
        let slots = valid_slots(batch);
        let k = slots.len();
        let gaussian = nets.decoder.kind() == DecoderKind::Gaussian;
        let decode = DecodeNoise::sample(k, &nets.spec, gaussian, rng);
        let smoothing = match kind {
            TargetKind::Td3 {
                smoothing_std,
                smoothing_clip,
            } => {
                let d: Vec<f64> = (0..k * nets.spec.routine_dim)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        (z * smoothing_std).clamp(-smoothing_clip, *smoothing_clip)
                    })
                    .collect();
                Some(Tensor::matrix(k, nets.spec.routine_dim, d))
            }
            TargetKind::Sac { .. } => None,
        };
        TargetNoise {
            slots,
            decode,
            smoothing,
        }
    }

    /// No smoothing, full-length mean decodes.
    pub fn none(batch: &SequenceBatch, nets: &RoutineNets) -> Self {
        let slots = valid_slots(batch);
        let decode = DecodeNoise::none(slots.len(), &nets.spec);
        TargetNoise {
            slots,
            decode,
            smoothing: None,
        }
    }
}

/// Discounted reward sums `r · r_disc`, `[N, L]`.
pub fn discounted_returns(batch: &SequenceBatch, disc: &DiscountMatrices) -> Tensor {
    let g = Graph::new();
    let r = g.constant(batch.r.clone());
    let out = r.matmul(g.constant(disc.r_disc.clone())).expect("r is [N, L]");
    out.value().as_ref().clone()
}

/// Bootstrap values at the next states of the given slots, `[K]`.
///
/// Uses the online policy, decoder and encoder with the target critics.
pub fn bootstrap_values(
    nets: &RoutineNets,
    batch: &SequenceBatch,
    kind: &TargetKind,
    noise: &TargetNoise,
) -> Result<Vec<f64>> {
    let k = noise.slots.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let sd = batch.state_dim();
    let mut next = Vec::with_capacity(k * sd);
    for &(b, j) in &noise.slots {
        next.extend_from_slice(batch.next_state(b, j));
    }
    let g = Graph::new();
    let pp = nets.policy.params.bind(&g, false);
    let dp = nets.decoder.params.bind(&g, false);
    let ep = nets.encoder.params.bind(&g, false);
    let q1p = nets.target_critics[0].params.bind(&g, false);
    let q2p = nets.target_critics[1].params.bind(&g, false);
    let s_next = g.constant(Tensor::matrix(k, sd, next));
    let n_next = nets.policy.forward(&pp, s_next)?;
    let decoded = decode_with_noise(&nets.decoder, &dp, n_next, &noise.decode)?;
    let mut routine = nets.encoder.forward(&ep, decoded.actions, &decoded.lengths)?;
    if let Some(sm) = &noise.smoothing {
        routine = routine.add(g.constant(sm.clone()))?.clamp(-1.0, 1.0);
    }
    let q1 = q_forward(&nets.target_critics[0], &q1p, s_next, routine)?;
    let q2 = q_forward(&nets.target_critics[1], &q2p, s_next, routine)?;
    let mut v = q1.minimum(q2)?;
    if let TargetKind::Sac { alpha } = kind {
        let logp = sequence_log_prob(&decoded)?;
        v = v.sub(logp.scale(*alpha))?;
    }
    let out = v.value().data().to_vec();
    Ok(out)
}

/// TD-targets for every prefix of every window, `[N, L]`.
///
/// `y_l = Σ_{j≤l} γ^{j−1} r_j + cont_l · γ^l · v(s'_l)`; invalid slots are 0.
pub fn td_targets(
    nets: &RoutineNets,
    batch: &SequenceBatch,
    gamma: f64,
    kind: &TargetKind,
    noise: &TargetNoise,
) -> Result<Tensor> {
    let l = batch.max_len();
    let disc = discount_matrices(l, gamma)?;
    let mut y = discounted_returns(batch, &disc);
    let boot = bootstrap_values(nets, batch, kind, noise)?;
    let mut k = 0;
    for b in 0..batch.size() {
        for j in 0..l {
            if !batch.is_valid(b, j) {
                y.set(b, j, 0.0);
                continue;
            }
            debug_assert_eq!(noise.slots[k], (b, j));
            let v = y.at(b, j) + batch.cont.at(b, j) * disc.next_q_disc[j] * boot[k];
            y.set(b, j, v);
            k += 1;
        }
    }
    Ok(y)
}

/// Position-major `[L·N, 1]` view of an `[N, L]` tensor.
fn position_major(t: &Tensor) -> Tensor {
    let (n, l) = (t.rows(), t.cols());
    let mut d = Vec::with_capacity(n * l);
    for j in 0..l {
        for b in 0..n {
            d.push(t.at(b, j));
        }
    }
    Tensor::matrix(n * l, 1, d)
}

/// Encoded prefixes of a batch's action windows, position-major
/// `[L·N, |n|]`.
pub fn encode_prefixes<'g>(
    nets: &RoutineNets,
    ep: &BoundParams<'g>,
    batch: &SequenceBatch,
    g: &'g Graph,
) -> Result<Var<'g>> {
    let prefixes = nets
        .encoder
        .forward_all_prefixes(ep, g.constant(batch.action_block()))?;
    Var::concat_rows(&prefixes)
}

/// Masked mean squared TD error over every valid prefix.
///
/// `routines` are the position-major encoded prefixes; gradients reach the
/// critic and, through `routines`, the encoder.
pub fn routine_td_loss<'g>(
    q: &crate::models::Mlp,
    qp: &BoundParams<'g>,
    batch: &SequenceBatch,
    routines: Var<'g>,
    y: &Tensor,
) -> Result<Var<'g>> {
    let g = routines.graph();
    let l = batch.max_len();
    let s = g.constant(batch.s.clone());
    let tiled = Var::concat_rows(&vec![s; l])?;
    let pred = q_forward(q, qp, tiled, routines)?;
    let mask = position_major(&batch.valid);
    let count = mask.sum();
    let err = pred
        .sub(g.constant(position_major(y)))?
        .square()
        .mul(g.constant(mask))?;
    Ok(err.sum().scale(1.0 / count))
}

/// Masked mean squared error `Q(s, a) − y` over single transitions.
///
/// `y` and `mask` are `[N, 1]`.
pub fn single_step_td_loss<'g>(
    q: &crate::models::Mlp,
    qp: &BoundParams<'g>,
    s: Var<'g>,
    a: Var<'g>,
    y: &Tensor,
    mask: &Tensor,
) -> Result<Var<'g>> {
    let g = s.graph();
    let count = mask.sum();
    if count <= 0.0 {
        return Err(Error::usage("td loss: all rows masked"));
    }
    let pred = q_forward(q, qp, s, a)?;
    let err = pred
        .sub(g.constant(y.clone()))?
        .square()
        .mul(g.constant(mask.clone()))?;
    Ok(err.sum().scale(1.0 / count))
}

/// Binary cross-entropy of termination logits against target lengths,
/// `−Σ_{j<l} log(1−e_j) − log e_l`, weighted mean over rows.
pub fn lc_loss<'g>(term_logits: Var<'g>, lengths: &[usize], weights: &[f64]) -> Result<Var<'g>> {
    if weights.len() != lengths.len() {
        return Err(Error::config("lc_loss: one weight per row required"));
    }
    let g = term_logits.graph();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::usage("lc_loss: all rows masked"));
    }
    let w = g.constant(Tensor::matrix(weights.len(), 1, weights.to_vec()));
    Ok(length_log_prob(term_logits, lengths)?
        .mul(w)?
        .sum()
        .scale(-1.0 / total))
}

/// Length-consistency loss on the decoded encoded prefixes of a batch.
pub fn lc_loss_for_prefixes<'g>(
    nets: &RoutineNets,
    dp: &BoundParams<'g>,
    batch: &SequenceBatch,
    routines: Var<'g>,
) -> Result<Var<'g>> {
    let (n, l) = (batch.size(), batch.max_len());
    let out = nets.decoder.forward(dp, routines)?;
    let lengths: Vec<usize> = (0..l).flat_map(|j| std::iter::repeat(j + 1).take(n)).collect();
    let weights = position_major(&batch.valid).into_data();
    lc_loss(out.term_logits, &lengths, &weights)
}

/// Critic objectives for one critic: `(J_Q, J_lc, encoded prefixes)`.
pub struct CriticLoss<'g> {
    pub j_q: Var<'g>,
    pub j_lc: Var<'g>,
    pub routines: Var<'g>,
}

pub fn critic_loss<'g>(
    nets: &RoutineNets,
    critic: usize,
    qp: &BoundParams<'g>,
    ep: &BoundParams<'g>,
    dp: &BoundParams<'g>,
    batch: &SequenceBatch,
    y: &Tensor,
) -> Result<CriticLoss<'g>> {
    let g = qp.vars()[0].graph();
    let routines = encode_prefixes(nets, ep, batch, g)?;
    let j_q = routine_td_loss(&nets.critics[critic], qp, batch, routines, y)?;
    let j_lc = lc_loss_for_prefixes(nets, dp, batch, routines)?;
    Ok(CriticLoss { j_q, j_lc, routines })
}

/// Policy objective with the per-row quantities the agent also needs.
pub struct PolicyLoss<'g> {
    pub loss: Var<'g>,
    /// `π(s)`, `[B, |n|]`.
    pub routines: Var<'g>,
    pub lengths: Vec<usize>,
    /// `[B, 1]` sequence log-probabilities (Gaussian decoder only).
    pub log_prob: Option<Var<'g>>,
}

/// `−mean Q₁(s, E(D(π(s))))`, minus `α·log p` inside the mean for SAC.
///
/// The encoder and critic enter as constants; only the bound policy and
/// decoder parameters receive gradients.
pub fn policy_loss<'g>(
    nets: &RoutineNets,
    pp: &BoundParams<'g>,
    dp: &BoundParams<'g>,
    states: &Tensor,
    alpha: Option<f64>,
    noise: &DecodeNoise,
) -> Result<PolicyLoss<'g>> {
    let g = pp.vars()[0].graph();
    let ep = nets.encoder.params.bind(g, false);
    let qp = nets.critics[0].params.bind(g, false);
    let s = g.constant(states.clone());
    let n = nets.policy.forward(pp, s)?;
    let decoded = decode_with_noise(&nets.decoder, dp, n, noise)?;
    let routine = nets.encoder.forward(&ep, decoded.actions, &decoded.lengths)?;
    let q = q_forward(&nets.critics[0], &qp, s, routine)?;
    let (objective, log_prob) = match alpha {
        Some(alpha) => {
            let logp = sequence_log_prob(&decoded)?;
            (q.sub(logp.scale(alpha))?, Some(logp))
        }
        None => (q, None),
    };
    Ok(PolicyLoss {
        loss: objective.mean().neg(),
        routines: n,
        lengths: decoded.lengths,
        log_prob,
    })
}

/// `mean ‖E(D(n)) − n‖²` with `n` held fixed; gradients reach the decoder
/// only.
pub fn mto_loss<'g>(
    nets: &RoutineNets,
    dp: &BoundParams<'g>,
    routines: &Tensor,
    noise: &DecodeNoise,
) -> Result<Var<'g>> {
    let g = dp.vars()[0].graph();
    let ep = nets.encoder.params.bind(g, false);
    let n = g.constant(routines.clone());
    let decoded = decode_with_noise(&nets.decoder, dp, n, noise)?;
    let back = nets.encoder.forward(&ep, decoded.actions, &decoded.lengths)?;
    Ok(back.sub(n)?.square().sum().scale(1.0 / routines.rows() as f64))
}

/// Temperature objective `−log α · mean(log p_a + H̄)` on a `[1, 1]`
/// log-temperature.
pub fn temperature_loss<'g>(
    log_alpha: Var<'g>,
    per_action_logp: &[f64],
    target_entropy: f64,
) -> Result<Var<'g>> {
    if per_action_logp.is_empty() {
        return Err(Error::usage("temperature_loss: empty batch"));
    }
    let mean = per_action_logp.iter().map(|lp| lp + target_entropy).sum::<f64>()
        / per_action_logp.len() as f64;
    Ok(log_alpha.scale(-mean))
}

/// Gradient of the temperature objective with respect to `log α`.
pub fn temperature_gradient(alpha: f64, per_action_logp: &[f64], target_entropy: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {alpha}")));
    }
    let g = Graph::new();
    let la = g.param(Tensor::scalar(alpha.ln()));
    let loss = temperature_loss(la, per_action_logp, target_entropy)?;
    let grads = g.backward(loss)?;
    Ok(grads.get(la).map(|t| t.item()).unwrap_or(0.0))
}
