//! Routine TD3/SAC agents, single-action TD3/SAC baselines, and the
//! collect-and-train loop shared by all of them.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diff::{AdamConfig, Graph, ParameterSet, Tensor};
use crate::env::{EnvId, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::losses::{
    critic_loss, mto_loss, policy_loss, single_step_td_loss, td_targets, temperature_loss,
    TargetKind, TargetNoise,
};
use crate::models::{
    decode_with_noise, deterministic_length, q_forward, ActionSequence, DecodeNoise, DecoderKind,
    Mlp, OutputActivation, RoutineNets, RoutineSpaceSpec, STD_FLOOR,
};
use crate::replay::{ReplayBuffer, Transition};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    RoutineTd3,
    RoutineSac,
    Td3,
    Sac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::RoutineTd3,
        Algorithm::RoutineSac,
        Algorithm::Td3,
        Algorithm::Sac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::RoutineTd3 => "routine_td3",
            Algorithm::RoutineSac => "routine_sac",
            Algorithm::Td3 => "td3",
            Algorithm::Sac => "sac",
        }
    }

    pub fn is_routine(self) -> bool {
        matches!(self, Algorithm::RoutineTd3 | Algorithm::RoutineSac)
    }

    pub fn is_sac(self) -> bool {
        matches!(self, Algorithm::RoutineSac | Algorithm::Sac)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm '{s}' (expected routine_td3, routine_sac, td3 or sac)"
                ))
            })
    }
}

/// Every hyperparameter of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Maximum routine length `L` (ignored by the baselines).
    pub max_len: usize,
    pub gamma: f64,
    pub rho: f64,
    pub lr: f64,
    pub beta1: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub min_data: usize,
    pub policy_delay: usize,
    pub hidden: usize,
    pub routine_noise: f64,
    pub action_noise: f64,
    pub target_smoothing: f64,
    pub smoothing_clip: f64,
    pub alpha_init: f64,
    pub alpha_lr: f64,
    pub alpha_beta1: f64,
    pub mto_coeff: f64,
    pub lc_coeff: f64,
    pub replan_mode: bool,
    pub disable_routine_noise: bool,
    pub disable_action_noise: bool,
}

impl AgentConfig {
    /// Small networks and buffers for quick local runs.
    pub fn desk(algorithm: Algorithm) -> Self {
        AgentConfig {
            algorithm,
            max_len: 4,
            gamma: 0.99,
            rho: 0.995,
            lr: 1e-3,
            beta1: 0.9,
            batch_size: 128,
            buffer_size: 50_000,
            min_data: 1000,
            policy_delay: 2,
            hidden: 64,
            routine_noise: 0.2,
            action_noise: 0.1,
            target_smoothing: 0.1,
            smoothing_clip: 0.25,
            alpha_init: 0.1,
            alpha_lr: 1e-4,
            alpha_beta1: 0.5,
            mto_coeff: 1.0,
            lc_coeff: 1.0,
            replan_mode: false,
            disable_routine_noise: false,
            disable_action_noise: false,
        }
    }

    /// Full-size networks and buffer.
    pub fn full(algorithm: Algorithm) -> Self {
        AgentConfig {
            hidden: 256,
            buffer_size: 100_000,
            batch_size: 256,
            ..Self::desk(algorithm)
        }
    }

    /// Routine length used for replay windows.
    pub fn window_len(&self) -> usize {
        if self.algorithm.is_routine() {
            self.max_len
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agent.gamma", self.gamma),
            ("agent.lr", self.lr),
            ("agent.alpha_init", self.alpha_init),
            ("agent.alpha_lr", self.alpha_lr),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{k} must be positive, got {v}")));
            }
        }
        if self.gamma > 1.0 {
            return Err(Error::config("agent.gamma must be at most 1"));
        }
        for (k, v) in [("agent.rho", self.rho), ("agent.beta1", self.beta1), ("agent.alpha_beta1", self.alpha_beta1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{k} must lie in [0, 1], got {v}")));
            }
        }
        for (k, v) in [
            ("agent.routine_noise", self.routine_noise),
            ("agent.action_noise", self.action_noise),
            ("agent.target_smoothing", self.target_smoothing),
            ("agent.smoothing_clip", self.smoothing_clip),
            ("agent.mto_coeff", self.mto_coeff),
            ("agent.lc_coeff", self.lc_coeff),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{k} must be non-negative, got {v}")));
            }
        }
        for (k, v) in [
            ("agent.L", self.max_len),
            ("agent.batch_size", self.batch_size),
            ("agent.buffer_size", self.buffer_size),
            ("agent.policy_delay", self.policy_delay),
            ("agent.hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{k} must be at least 1")));
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.beta1)
    }

    fn alpha_adam(&self) -> AdamConfig {
        AdamConfig::new(self.alpha_lr, self.alpha_beta1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Eval,
}

/// Loss values of one training step. Terms not computed on the step are
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBundle {
    pub j_q: f64,
    pub j_lc: Option<f64>,
    pub j_pi: Option<f64>,
    pub j_mto: Option<f64>,
    pub j_alpha: Option<f64>,
    pub alpha: Option<f64>,
}

fn gaussian(rng: &mut impl Rng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

fn log_alpha_set(alpha: f64) -> Result<ParameterSet> {
    let mut p = ParameterSet::new();
    p.insert("log_alpha", Tensor::scalar(alpha.ln()))?;
    Ok(p)
}

fn alpha_of(p: &ParameterSet) -> f64 {
    p.get("log_alpha").expect("log_alpha").item().exp()
}

/// Gradient step on `log α` from per-action log-probabilities.
fn update_alpha(p: &mut ParameterSet, per_action: &[f64], target: f64, cfg: &AdamConfig) -> Result<f64> {
    let g = Graph::new();
    let b = p.bind(&g, true);
    let loss = temperature_loss(b.get("log_alpha"), per_action, target)?;
    let grads = g.backward(loss)?;
    p.accumulate(&b, &grads);
    p.adam_step(cfg)?;
    Ok(loss.value().item())
}

/// Routine TD3 or Routine SAC.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutineAgent {
    pub cfg: AgentConfig,
    pub nets: RoutineNets,
    pub log_alpha: Option<ParameterSet>,
    updates: u64,
    rng: ChaCha8Rng,
}

impl RoutineAgent {
    pub fn new(cfg: AgentConfig, env: &EnvSpec, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !cfg.algorithm.is_routine() {
            return Err(Error::config(format!("{} is not a routine algorithm", cfg.algorithm)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RoutineSpaceSpec::new(cfg.max_len, env.action_dim)?;
        let kind = if cfg.algorithm.is_sac() {
            DecoderKind::Gaussian
        } else {
            DecoderKind::Deterministic
        };
        let nets = RoutineNets::new(env.state_dim, spec, cfg.hidden, kind, &mut rng)?;
        let log_alpha = if cfg.algorithm.is_sac() {
            Some(log_alpha_set(cfg.alpha_init)?)
        } else {
            None
        };
        Ok(RoutineAgent {
            cfg,
            nets,
            log_alpha,
            updates: 0,
            rng,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn alpha(&self) -> Option<f64> {
        self.log_alpha.as_ref().map(alpha_of)
    }

    fn is_sac(&self) -> bool {
        self.cfg.algorithm.is_sac()
    }

    /// Routine for one state, with routine-level exploration noise in
    /// explore mode (TD3 only).
    pub fn routine(&mut self, state: &[f64], mode: ActMode) -> Result<Vec<f64>> {
        let mut n = self
            .nets
            .policy_routines(&Tensor::row(state.to_vec()))?
            .into_data();
        if mode == ActMode::Explore && !self.is_sac() && !self.cfg.disable_routine_noise {
            for x in n.iter_mut() {
                *x = (*x + gaussian(&mut self.rng, self.cfg.routine_noise)).clamp(-1.0, 1.0);
            }
        }
        Ok(n)
    }

    /// Stochastic decoding is used when exploring, unless every exploration
    /// noise of a TD3 agent is disabled.
    fn stochastic_decode(&self, mode: ActMode) -> bool {
        mode == ActMode::Explore
            && (self.is_sac() || !(self.cfg.disable_routine_noise && self.cfg.disable_action_noise))
    }

    /// Decodes a routine into an executable sequence.
    pub fn decode(&mut self, n: &[f64], mode: ActMode) -> Result<ActionSequence> {
        let spec = self.nets.spec;
        let (l, a) = (spec.max_len, spec.action_dim);
        let g = Graph::new();
        let dp = self.nets.decoder.params.bind(&g, false);
        let nv = g.constant(Tensor::row(n.to_vec()));
        let (len, flat) = if self.stochastic_decode(mode) {
            let noise = DecodeNoise::sample(1, &spec, self.is_sac(), &mut self.rng);
            let d = decode_with_noise(&self.nets.decoder, &dp, nv, &noise)?;
            (d.lengths[0], d.actions.value().data().to_vec())
        } else {
            let out = self.nets.decoder.forward(&dp, nv)?;
            let e = out.term_probs().value().data().to_vec();
            (deterministic_length(&e), out.actions.value().data().to_vec())
        };
        let add_action_noise =
            mode == ActMode::Explore && !self.is_sac() && !self.cfg.disable_action_noise;
        let len = if self.cfg.replan_mode { 1 } else { len.min(l) };
        let mut actions = Vec::with_capacity(len);
        for j in 0..len {
            let mut act = flat[j * a..(j + 1) * a].to_vec();
            if add_action_noise {
                for x in act.iter_mut() {
                    *x = (*x + gaussian(&mut self.rng, self.cfg.action_noise)).clamp(-1.0, 1.0);
                }
            }
            actions.push(act);
        }
        Ok(ActionSequence::new(actions))
    }

    pub fn act(&mut self, state: &[f64], mode: ActMode) -> Result<ActionSequence> {
        let n = self.routine(state, mode)?;
        self.decode(&n, mode)
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<LossBundle> {
        let cfg = self.cfg.clone();
        let adam = cfg.adam();
        let batch = buffer.sample_batch(cfg.batch_size, cfg.max_len, &mut self.rng)?;
        let kind = match self.alpha() {
            Some(alpha) => TargetKind::Sac { alpha },
            None => TargetKind::Td3 {
                smoothing_std: cfg.target_smoothing,
                smoothing_clip: cfg.smoothing_clip,
            },
        };
        let noise = TargetNoise::sample(&batch, &self.nets, &kind, &mut self.rng);
        let y = td_targets(&self.nets, &batch, cfg.gamma, &kind, &noise)?;

        let mut bundle = LossBundle {
            alpha: self.alpha(),
            ..LossBundle::default()
        };
        let (mut j_q, mut j_lc) = (0.0, 0.0);
        for m in 0..2 {
            let g = Graph::new();
            let qp = self.nets.critics[m].params.bind(&g, true);
            let ep = self.nets.encoder.params.bind(&g, true);
            let dp = self.nets.decoder.params.bind(&g, true);
            let cl = critic_loss(&self.nets, m, &qp, &ep, &dp, &batch, &y)?;
            let total = cl.j_q.add(cl.j_lc.scale(cfg.lc_coeff))?;
            let grads = g.backward(total)?;
            j_q += cl.j_q.value().item() / 2.0;
            j_lc += cl.j_lc.value().item() / 2.0;
            let nets = &mut self.nets;
            nets.critics[m].params.accumulate(&qp, &grads);
            nets.encoder.params.accumulate(&ep, &grads);
            nets.decoder.params.accumulate(&dp, &grads);
            nets.critics[m].params.adam_step(&adam)?;
            nets.encoder.params.adam_step(&adam)?;
            nets.decoder.params.adam_step(&adam)?;
        }
        bundle.j_q = j_q;
        bundle.j_lc = Some(j_lc);

        self.updates += 1;
        if self.updates % cfg.policy_delay as u64 == 0 {
            let spec = self.nets.spec;
            let rows = batch.size();
            let sac = self.is_sac();
            let pi_noise = DecodeNoise::sample(rows, &spec, sac, &mut self.rng);
            let mto_noise = DecodeNoise::sample(rows, &spec, sac, &mut self.rng);
            let g = Graph::new();
            let pp = self.nets.policy.params.bind(&g, true);
            let dp = self.nets.decoder.params.bind(&g, true);
            let pl = policy_loss(&self.nets, &pp, &dp, &batch.s, self.alpha(), &pi_noise)?;
            let routines = pl.routines.value();
            let mto = mto_loss(&self.nets, &dp, &routines, &mto_noise)?;
            let total = pl.loss.add(mto.scale(cfg.mto_coeff))?;
            let grads = g.backward(total)?;
            bundle.j_pi = Some(pl.loss.value().item());
            bundle.j_mto = Some(mto.value().item());
            let per_action: Option<Vec<f64>> = pl.log_prob.map(|lp| {
                lp.value()
                    .data()
                    .iter()
                    .zip(&pl.lengths)
                    .map(|(lp, &l)| lp / l as f64)
                    .collect()
            });
            let nets = &mut self.nets;
            nets.policy.params.accumulate(&pp, &grads);
            nets.decoder.params.accumulate(&dp, &grads);
            nets.policy.params.adam_step(&adam)?;
            nets.decoder.params.adam_step(&adam)?;
            for m in 0..2 {
                let (online, target) = (&nets.critics[m], &mut nets.target_critics[m]);
                target.params.polyak_update(&online.params, cfg.rho)?;
            }
            if let (Some(la), Some(per_action)) = (self.log_alpha.as_mut(), per_action) {
                let target = -(spec.action_dim as f64);
                bundle.j_alpha = Some(update_alpha(la, &per_action, target, &cfg.alpha_adam())?);
            }
        }
        Ok(bundle)
    }
}

/// Single-action TD3 or SAC.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAgent {
    pub cfg: AgentConfig,
    pub action_dim: usize,
    /// TD3: `[s] → [a]` tanh. SAC: `[s] → [2a]` (mean logits, std logits).
    pub actor: Mlp,
    /// TD3 only.
    pub target_actor: Option<Mlp>,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
    pub log_alpha: Option<ParameterSet>,
    updates: u64,
    rng: ChaCha8Rng,
}

/// Sampled baseline SAC actions with their log-densities.
struct GaussianActions<'g> {
    actions: crate::diff::Var<'g>,
    log_prob: crate::diff::Var<'g>,
}

impl BaselineAgent {
    pub fn new(cfg: AgentConfig, env: &EnvSpec, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.algorithm.is_routine() {
            return Err(Error::config(format!("{} is not a baseline algorithm", cfg.algorithm)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, a, h) = (env.state_dim, env.action_dim, cfg.hidden);
        let sac = cfg.algorithm.is_sac();
        let actor = if sac {
            Mlp::new(&[s, h, h, 2 * a], OutputActivation::Identity, &mut rng)?
        } else {
            Mlp::new(&[s, h, h, a], OutputActivation::Tanh, &mut rng)?
        };
        let mut critic = || Mlp::new(&[s + a, h, h, 1], OutputActivation::Identity, &mut rng);
        let critics = [critic()?, critic()?];
        Ok(BaselineAgent {
            target_actor: (!sac).then(|| actor.clone()),
            target_critics: critics.clone(),
            critics,
            actor,
            action_dim: a,
            log_alpha: if sac { Some(log_alpha_set(cfg.alpha_init)?) } else { None },
            cfg,
            updates: 0,
            rng,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn alpha(&self) -> Option<f64> {
        self.log_alpha.as_ref().map(alpha_of)
    }

    fn gaussian_actions<'g>(
        &self,
        actor: &Mlp,
        p: &crate::diff::BoundParams<'g>,
        s: crate::diff::Var<'g>,
        eps: &Tensor,
    ) -> Result<GaussianActions<'g>> {
        let a = self.action_dim;
        let g = s.graph();
        let out = actor.forward(p, s)?;
        let mean = out.slice_cols(0, a)?.tanh();
        let std = out.slice_cols(a, 2 * a)?.softplus().add_scalar(STD_FLOOR);
        let log_std = std.log();
        let pre = mean.add(std.mul(g.constant(eps.clone()))?)?;
        let z = g.constant(eps.clone());
        let log_prob = z
            .square()
            .scale(-0.5)
            .sub(log_std)?
            .add_scalar(-HALF_LN_2PI)
            .sum_cols();
        Ok(GaussianActions {
            actions: pre.clamp(-1.0, 1.0),
            log_prob,
        })
    }

    fn normals(&mut self, rows: usize, cols: usize) -> Tensor {
        let d = (0..rows * cols).map(|_| gaussian(&mut self.rng, 1.0)).collect();
        Tensor::matrix(rows, cols, d)
    }

    pub fn act(&mut self, state: &[f64], mode: ActMode) -> Result<ActionSequence> {
        let a = self.action_dim;
        let s = Tensor::row(state.to_vec());
        let action = if self.cfg.algorithm.is_sac() {
            let g = Graph::new();
            let p = self.actor.params.bind(&g, false);
            let eps = match mode {
                ActMode::Explore => self.normals(1, a),
                ActMode::Eval => Tensor::zeros(&[1, a]),
            };
            let ga = self.gaussian_actions(&self.actor, &p, g.constant(s), &eps)?;
            let out = ga.actions.value().data().to_vec();
            out
        } else {
            let mut act = self.actor.eval(&s)?.into_data();
            if mode == ActMode::Explore && !self.cfg.disable_action_noise {
                for x in act.iter_mut() {
                    *x = (*x + gaussian(&mut self.rng, self.cfg.action_noise)).clamp(-1.0, 1.0);
                }
            }
            act
        };
        Ok(ActionSequence::new(vec![action]))
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<LossBundle> {
        let cfg = self.cfg.clone();
        let adam = cfg.adam();
        let a = self.action_dim;
        let batch = buffer.sample_batch(cfg.batch_size, 1, &mut self.rng)?;
        let rows = batch.size();
        let sd = batch.state_dim();
        let s_next = Tensor::matrix(rows, sd, batch.s_next.data().to_vec());
        let actions = batch.action_block();
        let alpha = self.alpha();

        // Bootstrapped single-step targets.
        let y = {
            let g = Graph::new();
            let sn = g.constant(s_next);
            let next_eps = self.normals(rows, a);
            let (next_a, ent) = match alpha {
                Some(alpha) => {
                    let p = self.actor.params.bind(&g, false);
                    let ga = self.gaussian_actions(&self.actor, &p, sn, &next_eps)?;
                    (ga.actions, Some(ga.log_prob.scale(alpha)))
                }
                None => {
                    let ta = self.target_actor.as_ref().expect("td3 target actor");
                    let p = ta.params.bind(&g, false);
                    let noise = next_eps.map(|z| {
                        (z * cfg.target_smoothing).clamp(-cfg.smoothing_clip, cfg.smoothing_clip)
                    });
                    let na = ta.forward(&p, sn)?.add(g.constant(noise))?.clamp(-1.0, 1.0);
                    (na, None)
                }
            };
            let q1p = self.target_critics[0].params.bind(&g, false);
            let q2p = self.target_critics[1].params.bind(&g, false);
            let q1 = q_forward(&self.target_critics[0], &q1p, sn, next_a)?;
            let q2 = q_forward(&self.target_critics[1], &q2p, sn, next_a)?;
            let mut v = q1.minimum(q2)?;
            if let Some(ent) = ent {
                v = v.sub(ent)?;
            }
            let v = v.value();
            let d: Vec<f64> = (0..rows)
                .map(|b| batch.r.at(b, 0) + cfg.gamma * batch.cont.at(b, 0) * v.at(b, 0))
                .collect();
            Tensor::matrix(rows, 1, d)
        };

        let mut bundle = LossBundle {
            alpha,
            ..LossBundle::default()
        };
        for m in 0..2 {
            let g = Graph::new();
            let qp = self.critics[m].params.bind(&g, true);
            let loss = single_step_td_loss(
                &self.critics[m],
                &qp,
                g.constant(batch.s.clone()),
                g.constant(actions.clone()),
                &y,
                &batch.valid,
            )?;
            let grads = g.backward(loss)?;
            bundle.j_q += loss.value().item() / 2.0;
            self.critics[m].params.accumulate(&qp, &grads);
            self.critics[m].params.adam_step(&adam)?;
        }

        self.updates += 1;
        if self.updates % cfg.policy_delay as u64 == 0 {
            let eps = self.normals(rows, a);
            let g = Graph::new();
            let pp = self.actor.params.bind(&g, true);
            let qp = self.critics[0].params.bind(&g, false);
            let s = g.constant(batch.s.clone());
            let (act, logp) = match alpha {
                Some(_) => {
                    let ga = self.gaussian_actions(&self.actor, &pp, s, &eps)?;
                    (ga.actions, Some(ga.log_prob))
                }
                None => (self.actor.forward(&pp, s)?, None),
            };
            let q = q_forward(&self.critics[0], &qp, s, act)?;
            let objective = match (alpha, logp) {
                (Some(alpha), Some(lp)) => q.sub(lp.scale(alpha))?,
                _ => q,
            };
            let loss = objective.mean().neg();
            let grads = g.backward(loss)?;
            bundle.j_pi = Some(loss.value().item());
            self.actor.params.accumulate(&pp, &grads);
            self.actor.params.adam_step(&adam)?;
            for m in 0..2 {
                self.target_critics[m]
                    .params
                    .polyak_update(&self.critics[m].params, cfg.rho)?;
            }
            if let Some(ta) = self.target_actor.as_mut() {
                ta.params.polyak_update(&self.actor.params, cfg.rho)?;
            }
            if let (Some(la), Some(lp)) = (self.log_alpha.as_mut(), logp) {
                let per_action = lp.value().data().to_vec();
                bundle.j_alpha = Some(update_alpha(la, &per_action, -(a as f64), &cfg.alpha_adam())?);
            }
        }
        Ok(bundle)
    }
}

/// Any trainable agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Routine(RoutineAgent),
    Baseline(BaselineAgent),
}

impl Agent {
    pub fn new(cfg: AgentConfig, env: &EnvSpec, seed: u64) -> Result<Self> {
        Ok(if cfg.algorithm.is_routine() {
            Agent::Routine(RoutineAgent::new(cfg, env, seed)?)
        } else {
            Agent::Baseline(BaselineAgent::new(cfg, env, seed)?)
        })
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::Routine(a) => &a.cfg,
            Agent::Baseline(a) => &a.cfg,
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Agent::Routine(a) => a.updates(),
            Agent::Baseline(a) => a.updates(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Agent::Routine(a) => a.alpha(),
            Agent::Baseline(a) => a.alpha(),
        }
    }

    /// One policy query.
    pub fn act(&mut self, state: &[f64], mode: ActMode) -> Result<ActionSequence> {
        match self {
            Agent::Routine(a) => a.act(state, mode),
            Agent::Baseline(a) => a.act(state, mode),
        }
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<LossBundle> {
        match self {
            Agent::Routine(a) => a.train_step(buffer),
            Agent::Baseline(a) => a.train_step(buffer),
        }
    }

    /// Every parameter set under a stable name.
    pub fn parameter_sets(&self) -> Vec<(&'static str, &ParameterSet)> {
        let mut out = Vec::new();
        match self {
            Agent::Routine(a) => {
                let n = &a.nets;
                out.push(("policy", &n.policy.params));
                out.push(("decoder", &n.decoder.params));
                out.push(("encoder", &n.encoder.params));
                out.push(("critic1", &n.critics[0].params));
                out.push(("critic2", &n.critics[1].params));
                out.push(("target_critic1", &n.target_critics[0].params));
                out.push(("target_critic2", &n.target_critics[1].params));
                if let Some(la) = &a.log_alpha {
                    out.push(("temperature", la));
                }
            }
            Agent::Baseline(a) => {
                out.push(("actor", &a.actor.params));
                if let Some(t) = &a.target_actor {
                    out.push(("target_actor", &t.params));
                }
                out.push(("critic1", &a.critics[0].params));
                out.push(("critic2", &a.critics[1].params));
                out.push(("target_critic1", &a.target_critics[0].params));
                out.push(("target_critic2", &a.target_critics[1].params));
                if let Some(la) = &a.log_alpha {
                    out.push(("temperature", la));
                }
            }
        }
        out
    }

    pub fn parameter_set_mut(&mut self, name: &str) -> Option<&mut ParameterSet> {
        match self {
            Agent::Routine(a) => match name {
                "policy" => Some(&mut a.nets.policy.params),
                "decoder" => Some(&mut a.nets.decoder.params),
                "encoder" => Some(&mut a.nets.encoder.params),
                "critic1" => Some(&mut a.nets.critics[0].params),
                "critic2" => Some(&mut a.nets.critics[1].params),
                "target_critic1" => Some(&mut a.nets.target_critics[0].params),
                "target_critic2" => Some(&mut a.nets.target_critics[1].params),
                "temperature" => a.log_alpha.as_mut(),
                _ => None,
            },
            Agent::Baseline(a) => match name {
                "actor" => Some(&mut a.actor.params),
                "target_actor" => a.target_actor.as_mut().map(|t| &mut t.params),
                "critic1" => Some(&mut a.critics[0].params),
                "critic2" => Some(&mut a.critics[1].params),
                "target_critic1" => Some(&mut a.target_critics[0].params),
                "target_critic2" => Some(&mut a.target_critics[1].params),
                "temperature" => a.log_alpha.as_mut(),
                _ => None,
            },
        }
    }
}

/// Outcome of a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub policy_queries: Vec<usize>,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_policy_queries: f64,
    pub mean_routine_length: f64,
    /// Executed routine lengths, index `l − 1` for length `l`.
    pub length_histogram: Vec<usize>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Statistics of one rollout episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub ret: f64,
    pub policy_queries: usize,
    /// Number of actions executed from each queried routine.
    pub executed_lengths: Vec<usize>,
}

/// Runs one episode with open-loop routine execution.
pub fn run_episode(
    agent: &mut Agent,
    env: &mut dyn Environment,
    seed: u64,
    mode: ActMode,
) -> Result<EpisodeStats> {
    let mut state = env.reset(seed);
    let mut stats = EpisodeStats {
        ret: 0.0,
        policy_queries: 0,
        executed_lengths: Vec::new(),
    };
    loop {
        let seq = agent.act(&state, mode)?;
        stats.policy_queries += 1;
        let mut executed = 0;
        let mut done = false;
        for action in &seq.actions {
            let res = env.step(action)?;
            executed += 1;
            stats.ret += res.reward;
            state = res.next_state;
            if res.terminal {
                done = true;
                break;
            }
        }
        stats.executed_lengths.push(executed);
        if done {
            return Ok(stats);
        }
    }
}

/// Evaluation episodes in eval mode. Episode `i` resets with seed
/// `seed + i`.
pub fn evaluate(agent: &mut Agent, env_id: EnvId, episodes: usize, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let mut env = env_id.make();
    let max_len = agent.config().window_len();
    let mut hist = vec![0usize; max_len];
    let mut returns = Vec::with_capacity(episodes);
    let mut queries = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let ep = run_episode(agent, env.as_mut(), seed.wrapping_add(i as u64), ActMode::Eval)?;
        for &l in &ep.executed_lengths {
            hist[l.clamp(1, max_len) - 1] += 1;
        }
        returns.push(ep.ret);
        queries.push(ep.policy_queries);
    }
    let (mean_return, std_return) = mean_std(&returns);
    let q: Vec<f64> = queries.iter().map(|&q| q as f64).collect();
    let total: usize = hist.iter().sum();
    let weighted: usize = hist.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
    Ok(EvalReport {
        mean_return,
        std_return,
        mean_policy_queries: mean_std(&q).0,
        mean_routine_length: if total == 0 { 0.0 } else { weighted as f64 / total as f64 },
        length_histogram: hist,
        returns,
        policy_queries: queries,
    })
}

/// Running means of the losses reported by training steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTotals {
    pub steps: usize,
    sums: [f64; 5],
    counts: [usize; 5],
}

impl LossTotals {
    pub fn add(&mut self, b: &LossBundle) {
        self.steps += 1;
        let vals = [Some(b.j_q), b.j_pi, b.j_mto, b.j_lc, b.j_alpha];
        for (i, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.counts[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        if self.counts[i] == 0 {
            0.0
        } else {
            self.sums[i] / self.counts[i] as f64
        }
    }

    pub fn j_q(&self) -> f64 {
        self.mean(0)
    }

    pub fn j_pi(&self) -> f64 {
        self.mean(1)
    }

    pub fn j_mto(&self) -> f64 {
        self.mean(2)
    }

    pub fn j_lc(&self) -> f64 {
        self.mean(3)
    }

    pub fn j_alpha(&self) -> f64 {
        self.mean(4)
    }
}

/// The interleaved collect-and-train loop: one training step after every
/// environment step once more than `min_data` transitions are stored.
pub struct Trainer {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    env: Box<dyn Environment>,
    state: Vec<f64>,
    queue: VecDeque<Vec<f64>>,
    episode: u64,
    step_in_episode: usize,
    env_steps: usize,
    policy_queries: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(agent: Agent, env_id: EnvId, seed: u64) -> Result<Self> {
        let cfg = agent.config();
        let buffer = ReplayBuffer::new(cfg.buffer_size, cfg.min_data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_c011ec7);
        let mut env = env_id.make();
        let state = env.reset(rng.gen());
        Ok(Trainer {
            agent,
            buffer,
            env,
            state,
            queue: VecDeque::new(),
            episode: 0,
            step_in_episode: 0,
            env_steps: 0,
            policy_queries: 0,
            rng,
        })
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Policy queries made while collecting (warmup steps excluded).
    pub fn policy_queries(&self) -> usize {
        self.policy_queries
    }

    pub fn episodes_started(&self) -> u64 {
        self.episode + 1
    }

    fn next_action(&mut self) -> Result<Vec<f64>> {
        if let Some(a) = self.queue.pop_front() {
            return Ok(a);
        }
        let min_data = self.agent.config().min_data;
        if self.env_steps < min_data {
            let dim = self.env.spec().action_dim;
            return Ok((0..dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect());
        }
        let seq = self.agent.act(&self.state, ActMode::Explore)?;
        self.policy_queries += 1;
        self.queue.extend(seq.actions);
        self.queue
            .pop_front()
            .ok_or_else(|| Error::Numeric("policy returned an empty sequence".into()))
    }

    /// Advances `steps` environment steps, training after each one.
    pub fn run(&mut self, steps: usize) -> Result<LossTotals> {
        let mut totals = LossTotals::default();
        for _ in 0..steps {
            let action = self.next_action()?;
            let res = self.env.step(&action)?;
            self.buffer.push(Transition {
                state: std::mem::take(&mut self.state),
                action,
                next_state: res.next_state.clone(),
                reward: res.reward,
                terminal: res.terminal,
                episode_id: self.episode,
                step_index: self.step_in_episode,
            });
            self.env_steps += 1;
            self.step_in_episode += 1;
            if res.terminal {
                self.queue.clear();
                self.episode += 1;
                self.step_in_episode = 0;
                self.state = self.env.reset(self.rng.gen());
            } else {
                self.state = res.next_state;
            }
            if self.buffer.len() > self.agent.config().min_data {
                let b = self.agent.train_step(&self.buffer)?;
                totals.add(&b);
            }
        }
        Ok(totals)
    }
}
