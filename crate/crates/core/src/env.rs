//! Deterministic toy continuous-control tasks.
//!
//! Every task has actions in `[-1, 1]^|a|`, per-step rewards in `[0, 1]` and
//! a fixed horizon of [`EPISODE_LENGTH`] steps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const EPISODE_LENGTH: usize = 200;
pub const DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub episode_length: usize,
    pub reward_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub diagnostic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvId {
    PointReach,
    PointReachSparse,
    PendulumSwingup,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [
        EnvId::PointReach,
        EnvId::PointReachSparse,
        EnvId::PendulumSwingup,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::PointReach => "point_reach",
            EnvId::PointReachSparse => "point_reach_sparse",
            EnvId::PendulumSwingup => "pendulum_swingup",
        }
    }

    pub fn make(&self) -> Box<dyn Environment> {
        match self {
            EnvId::PointReach => Box::new(PointReach::new(false)),
            EnvId::PointReachSparse => Box::new(PointReach::new(true)),
            EnvId::PendulumSwingup => Box::new(Pendulum::new()),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown environment `{s}` (expected point_reach | point_reach_sparse | pendulum_swingup)"
                ))
            })
    }
}

pub trait Environment {
    fn id(&self) -> EnvId;

    fn spec(&self) -> EnvSpec;

    /// Draws an initial state; identical seeds give identical states.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Out-of-bounds actions are clamped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Non-negative speed-like feature of a state, used for coverage plots.
    fn diagnostic_feature(&self, state: &[f64]) -> f64;
}

fn bounded_spec(state_dim: usize, action_dim: usize) -> EnvSpec {
    EnvSpec {
        state_dim,
        action_dim,
        action_low: vec![-1.0; action_dim],
        action_high: vec![1.0; action_dim],
        episode_length: EPISODE_LENGTH,
        reward_range: (0.0, 1.0),
    }
}

fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::config(format!(
            "action has {} components, environment expects {dim}",
            action.len()
        )));
    }
    Ok(())
}

/// 2-D double integrator chasing a goal inside the `[-1, 1]²` box.
///
/// State: `(x, y, vx, vy, goal_x, goal_y)`.
#[derive(Debug, Clone)]
pub struct PointReach {
    sparse: bool,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    t: usize,
    done: bool,
}

impl PointReach {
    pub const ACCEL: f64 = 4.0;
    pub const DAMPING: f64 = 1.0;
    pub const MAX_SPEED: f64 = 2.0;
    pub const GOAL_RADIUS: f64 = 0.05;
    /// Diameter of the arena; dense reward reaches zero at this distance.
    pub const MAX_DISTANCE: f64 = 2.0 * std::f64::consts::SQRT_2;

    pub fn new(sparse: bool) -> Self {
        PointReach {
            sparse,
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            t: 0,
            done: true,
        }
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.t = 0;
        self.done = false;
        self.state()
    }

    fn state(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0],
            self.goal[1],
        ]
    }

    fn reward(&self) -> f64 {
        let d = ((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt();
        if self.sparse {
            if d < Self::GOAL_RADIUS {
                1.0
            } else {
                0.0
            }
        } else {
            (1.0 - d / Self::MAX_DISTANCE).clamp(0.0, 1.0)
        }
    }
}

impl Environment for PointReach {
    fn id(&self) -> EnvId {
        if self.sparse {
            EnvId::PointReachSparse
        } else {
            EnvId::PointReach
        }
    }

    fn spec(&self) -> EnvSpec {
        bounded_spec(6, 2)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let goal = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        self.reset_to(pos, [0.0; 2], goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("step called on a finished episode; call reset first"));
        }
        check_action(action, 2)?;
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            let v = self.vel[i] + DT * (Self::ACCEL * a - Self::DAMPING * self.vel[i]);
            self.vel[i] = v.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
            let p = self.pos[i] + DT * self.vel[i];
            if p.abs() > 1.0 {
                self.pos[i] = p.clamp(-1.0, 1.0);
                self.vel[i] = 0.0;
            } else {
                self.pos[i] = p;
            }
        }
        self.t += 1;
        self.done = self.t >= EPISODE_LENGTH;
        let next_state = self.state();
        Ok(StepResult {
            reward: self.reward(),
            terminal: self.done,
            diagnostic: self.diagnostic_feature(&next_state),
            next_state,
        })
    }

    fn diagnostic_feature(&self, state: &[f64]) -> f64 {
        state[2].hypot(state[3])
    }
}

/// Torque-limited pendulum; upright is `θ = 0`.
///
/// State: `(cos θ, sin θ, θ̇)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    t: usize,
    done: bool,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;

    pub fn new() -> Self {
        Pendulum {
            theta: PI,
            theta_dot: 0.0,
            t: 0,
            done: true,
        }
    }

    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = wrap_angle(theta);
        self.theta_dot = theta_dot.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.t = 0;
        self.done = false;
        self.state()
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    fn state(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum::new()
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid maps π to -π; keep the interval closed on both ends.
    if y < -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

impl Environment for Pendulum {
    fn id(&self) -> EnvId {
        EnvId::PendulumSwingup
    }

    fn spec(&self) -> EnvSpec {
        bounded_spec(3, 1)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.gen_range(-PI..PI);
        let theta_dot = rng.gen_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("step called on a finished episode; call reset first"));
        }
        check_action(action, 1)?;
        let u = action[0].clamp(-1.0, 1.0) * Self::MAX_TORQUE;
        let acc = 1.5 * Self::GRAVITY * self.theta.sin() + 3.0 * u;
        self.theta_dot = (self.theta_dot + DT * acc).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = wrap_angle(self.theta + DT * self.theta_dot);
        self.t += 1;
        self.done = self.t >= EPISODE_LENGTH;
        let next_state = self.state();
        let reward = ((1.0 + self.theta.cos()) / 2.0).clamp(0.0, 1.0);
        Ok(StepResult {
            reward,
            terminal: self.done,
            diagnostic: self.diagnostic_feature(&next_state),
            next_state,
        })
    }

    fn diagnostic_feature(&self, state: &[f64]) -> f64 {
        state[2].abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs() {
        let s = EnvId::PointReach.make().spec();
        assert_eq!((s.state_dim, s.action_dim, s.episode_length), (6, 2, 200));
        let s = EnvId::PendulumSwingup.make().spec();
        assert_eq!((s.state_dim, s.action_dim, s.episode_length), (3, 1, 200));
        for id in EnvId::ALL {
            let s = id.make().spec();
            assert!(s.action_low.iter().all(|&l| l == -1.0));
            assert!(s.action_high.iter().all(|&h| h == 1.0));
        }
    }

    #[test]
    fn parse_ids() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
        assert!("cheetah_run".parse::<EnvId>().unwrap_err().is_config());
    }

    #[test]
    fn reset_is_seeded() {
        for id in EnvId::ALL {
            let mut env = id.make();
            let a = env.reset(11);
            let b = env.reset(11);
            let c = env.reset(12);
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn pendulum_reset_domain() {
        let mut env = Pendulum::new();
        for seed in 0..200 {
            let s = env.reset(seed);
            let theta = env.angle();
            assert!((-PI..=PI).contains(&theta));
            assert!(s[2].abs() <= Pendulum::MAX_SPEED);
        }
    }

    #[test]
    fn zero_action_at_rest_is_fixed_point() {
        let mut env = PointReach::new(false);
        let s0 = env.reset_to([0.3, -0.2], [0.0, 0.0], [0.5, 0.5]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.next_state, s0);
    }

    #[test]
    fn reward_is_one_at_goal() {
        for sparse in [false, true] {
            let mut env = PointReach::new(sparse);
            env.reset_to([0.4, 0.1], [0.0, 0.0], [0.4, 0.1]);
            assert_eq!(env.step(&[0.0, 0.0]).unwrap().reward, 1.0);
        }
    }

    #[test]
    fn out_of_bounds_actions_are_clamped() {
        let mut a = PointReach::new(false);
        let mut b = PointReach::new(false);
        a.reset(3);
        b.reset(3);
        assert_eq!(a.step(&[5.0, -9.0]).unwrap(), b.step(&[1.0, -1.0]).unwrap());
    }

    #[test]
    fn episode_terminates_exactly_at_horizon() {
        for id in EnvId::ALL {
            let mut env = id.make();
            env.reset(0);
            for t in 1..=EPISODE_LENGTH {
                let r = env.step(&vec![0.1; env.spec().action_dim]).unwrap();
                assert_eq!(r.terminal, t == EPISODE_LENGTH);
            }
            assert!(matches!(env.step(&vec![0.0; env.spec().action_dim]), Err(Error::Usage(_))));
        }
    }

    #[test]
    fn diagnostic_is_speed() {
        let env = PointReach::new(false);
        assert_eq!(env.diagnostic_feature(&[0.0; 6]), 0.0);
        assert_eq!(env.diagnostic_feature(&[0.0, 0.0, 3.0, 4.0, 0.0, 0.0]), 5.0);
        assert_eq!(env.diagnostic_feature(&[0.0, 0.0, 6.0, 8.0, 0.0, 0.0]), 10.0);
    }

    #[test]
    fn wrap_angle_stays_in_range() {
        for k in -20..20 {
            let x = k as f64 * 0.7;
            let w = wrap_angle(x);
            assert!((-PI..=PI).contains(&w));
            assert!(((w - x) / (2.0 * PI)).fract().abs() < 1e-9 || ((w - x) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
