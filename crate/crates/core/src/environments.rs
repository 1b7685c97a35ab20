//! Seedable trajectory generators: a deterministic ring walk over random
//! state embeddings, and a north/east random policy in Puddle World.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gptd_exact::{check_discount, TrajectoryBatch};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomWalkConfig {
    pub num_states: usize,
    pub state_dim: usize,
    pub reward_low: f64,
    pub reward_high: f64,
    pub discount: f64,
    /// Ring position of the first state; uniform when absent.
    pub start_state: Option<usize>,
    pub seed: u64,
}

impl Default for RandomWalkConfig {
    fn default() -> Self {
        RandomWalkConfig {
            num_states: 50,
            state_dim: 10,
            reward_low: -3.0,
            reward_high: 3.0,
            discount: 0.75,
            start_state: None,
            seed: 0,
        }
    }
}

impl RandomWalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(Error::invalid("random walk needs at least 2 states"));
        }
        if self.state_dim == 0 {
            return Err(Error::invalid("state dimension must be >= 1"));
        }
        if !(self.reward_low < self.reward_high)
            || !self.reward_low.is_finite()
            || !self.reward_high.is_finite()
        {
            return Err(Error::invalid(format!(
                "reward range [{}, {}] is empty",
                self.reward_low, self.reward_high
            )));
        }
        if let Some(s) = self.start_state {
            if s >= self.num_states {
                return Err(Error::invalid(format!(
                    "start state {s} outside ring of {} states",
                    self.num_states
                )));
            }
        }
        check_discount(self.discount)
    }
}

/// Line segment thickened by `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capsule {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub radius: f64,
}

impl Capsule {
    fn distance_to_axis(&self, p: [f64; 2]) -> f64 {
        let (ax, ay) = (self.to[0] - self.from[0], self.to[1] - self.from[1]);
        let (px, py) = (p[0] - self.from[0], p[1] - self.from[1]);
        let len2 = ax * ax + ay * ay;
        let u = if len2 > 0.0 {
            ((px * ax + py * ay) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (px - u * ax).hypot(py - u * ay)
    }

    /// How far inside the capsule `p` is; zero outside.
    pub fn penetration(&self, p: [f64; 2]) -> f64 {
        (self.radius - self.distance_to_axis(p)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub low: [f64; 2],
    pub high: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PuddleWorldConfig {
    pub start_region: Region,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub step_size: f64,
    pub motion_noise_std: f64,
    pub puddles: Vec<Capsule>,
    /// Width of the penalized band along the walls.
    pub boundary_margin: f64,
    /// Penetration depth at which the reward bottoms out at -2.
    pub max_depth: f64,
    pub discount: f64,
    /// Reaching the goal starts a new episode inside the same trajectory
    /// instead of ending it.
    pub episodic_restart: bool,
    pub seed: u64,
}

impl Default for PuddleWorldConfig {
    fn default() -> Self {
        PuddleWorldConfig {
            start_region: Region {
                low: [0.0, 0.0],
                high: [0.2, 0.2],
            },
            goal_center: [1.0, 1.0],
            goal_radius: 0.1,
            step_size: 0.05,
            motion_noise_std: 0.01,
            puddles: vec![
                Capsule {
                    from: [0.10, 0.75],
                    to: [0.45, 0.75],
                    radius: 0.1,
                },
                Capsule {
                    from: [0.45, 0.40],
                    to: [0.45, 0.80],
                    radius: 0.1,
                },
            ],
            boundary_margin: 0.05,
            max_depth: 0.1,
            discount: 0.7,
            episodic_restart: true,
            seed: 0,
        }
    }
}

fn in_unit_square(p: [f64; 2]) -> bool {
    p.iter().all(|c| (0.0..=1.0).contains(c))
}

impl PuddleWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.start_region;
        if !(in_unit_square(r.low) && in_unit_square(r.high))
            || r.low[0] > r.high[0]
            || r.low[1] > r.high[1]
        {
            return Err(Error::invalid(
                "start region must be a box inside the unit square",
            ));
        }
        if !(self.goal_radius > 0.0) {
            return Err(Error::invalid("goal radius must be positive"));
        }
        if !(self.step_size > 0.0) || !(self.motion_noise_std >= 0.0) {
            return Err(Error::invalid(
                "step size must be positive and motion noise non-negative",
            ));
        }
        if !(self.max_depth > 0.0) || !(self.boundary_margin >= 0.0) {
            return Err(Error::invalid(
                "max depth must be positive and boundary margin non-negative",
            ));
        }
        if self.puddles.iter().any(|p| !(p.radius > 0.0)) {
            return Err(Error::invalid("puddle radii must be positive"));
        }
        check_discount(self.discount)
    }

    pub fn in_goal(&self, p: [f64; 2]) -> bool {
        (p[0] - self.goal_center[0]).hypot(p[1] - self.goal_center[1]) <= self.goal_radius
    }

    /// Deepest penetration into any puddle or wall band.
    pub fn depth(&self, p: [f64; 2]) -> f64 {
        let wall = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
        let boundary = (self.boundary_margin - wall).max(0.0);
        self.puddles
            .iter()
            .map(|c| c.penetration(p))
            .fold(boundary, f64::max)
    }
}

/// `-1 - min(1, depth / max_depth)`
pub fn reward_shape(cfg: &PuddleWorldConfig, s: [f64; 2]) -> f64 {
    -1.0 - (cfg.depth(s) / cfg.max_depth).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub rewards: Vec<f64>,
    /// Per state: whether it lies in a terminal (goal) set.
    pub terminals: Vec<bool>,
    /// The trajectory stopped early at a terminal state.
    pub terminated: bool,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    /// The first `horizon` transitions.
    pub fn prefix(&self, horizon: usize) -> Trajectory {
        let t = horizon.min(self.len());
        Trajectory {
            states: self.states[..=t].to_vec(),
            rewards: self.rewards[..t].to_vec(),
            terminals: self.terminals[..=t].to_vec(),
            terminated: self.terminated && t == self.len(),
            seed: self.seed,
        }
    }

    pub fn to_batch(&self, discount: f64) -> Result<TrajectoryBatch> {
        TrajectoryBatch::new(self.states.clone(), self.rewards.clone(), discount)
    }

    /// One row per state: slot, state components, reward (blank on the
    /// final state), terminal flag.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=1")?;
        let mut w = csv::Writer::from_writer(out);
        let d = self.state_dim();
        let mut header = vec!["slot".to_string()];
        header.extend((0..d).map(|i| format!("s{i}")));
        header.extend(["reward".to_string(), "terminal".to_string()]);
        w.write_record(&header)?;
        for (t, s) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(|x| x.to_string()));
            row.push(
                self.rewards
                    .get(t)
                    .map(|r| r.to_string())
                    .unwrap_or_default(),
            );
            row.push(u8::from(self.terminals[t]).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be >= 1"));
    }
    Ok(())
}

/// Clockwise walk on a ring of `N` states embedded as standard normal
/// vectors, with i.i.d. uniform rewards. Never terminates.
///
/// Embeddings, rewards and the start position come from separate streams,
/// so a shorter horizon yields a prefix of a longer one.
pub fn gen_random_walk(cfg: &RandomWalkConfig, horizon: usize) -> Result<Trajectory> {
    cfg.validate()?;
    check_horizon(horizon)?;
    let mut emb_rng = stream(cfg.seed, Purpose::Embeddings, 0);
    let embeddings: Vec<DVector<f64>> = (0..cfg.num_states)
        .map(|_| DVector::from_fn(cfg.state_dim, |_, _| emb_rng.sample(StandardNormal)))
        .collect();
    let start = match cfg.start_state {
        Some(s) => s,
        None => stream(cfg.seed, Purpose::Start, 0).random_range(0..cfg.num_states),
    };
    let mut reward_rng = stream(cfg.seed, Purpose::Rewards, 0);
    let rewards = (0..horizon)
        .map(|_| reward_rng.random_range(cfg.reward_low..cfg.reward_high))
        .collect();
    let states = (0..=horizon)
        .map(|t| embeddings[ring_position(start, t, cfg.num_states)].clone())
        .collect();
    Ok(Trajectory {
        states,
        rewards,
        terminals: vec![false; horizon + 1],
        terminated: false,
        seed: cfg.seed,
    })
}

pub fn ring_position(start: usize, t: usize, n: usize) -> usize {
    (start + t) % n
}

/// Each slot moves `step_size` north or east on a fair coin, adds Gaussian
/// motion noise and clips to the unit square. The reward of a transition
/// is the shaped reward of the state it lands in.
pub fn gen_puddle_world(cfg: &PuddleWorldConfig, horizon: usize) -> Result<Trajectory> {
    cfg.validate()?;
    check_horizon(horizon)?;
    let mut start_rng = stream(cfg.seed, Purpose::Start, 0);
    let mut move_rng = stream(cfg.seed, Purpose::Moves, 0);
    let mut noise_rng = stream(cfg.seed, Purpose::MotionNoise, 0);
    let noise = Normal::new(0.0, cfg.motion_noise_std)
        .map_err(|e| Error::invalid(format!("motion noise: {e}")))?;
    let r = cfg.start_region;
    let mut draw_start = || {
        [
            sample_interval(&mut start_rng, r.low[0], r.high[0]),
            sample_interval(&mut start_rng, r.low[1], r.high[1]),
        ]
    };

    let mut p = draw_start();
    let mut states = vec![DVector::from_column_slice(&p)];
    let mut terminals = vec![cfg.in_goal(p)];
    let mut rewards = Vec::with_capacity(horizon);
    let mut terminated = false;
    for _ in 0..horizon {
        if *terminals.last().unwrap() {
            if !cfg.episodic_restart {
                terminated = true;
                break;
            }
            p = draw_start();
        } else {
            let axis = usize::from(move_rng.random_bool(0.5));
            p[axis] += cfg.step_size;
            for c in &mut p {
                *c = (*c + noise.sample(&mut noise_rng)).clamp(0.0, 1.0);
            }
        }
        rewards.push(reward_shape(cfg, p));
        states.push(DVector::from_column_slice(&p));
        terminals.push(cfg.in_goal(p));
    }
    if !cfg.episodic_restart && *terminals.last().unwrap() {
        terminated = true;
    }
    Ok(Trajectory {
        states,
        rewards,
        terminals,
        terminated,
        seed: cfg.seed,
    })
}

fn sample_interval<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    if high > low {
        rng.random_range(low..high)
    } else {
        low
    }
}

/// Either benchmark, selected by the `kind` key of its config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    RandomWalk(RandomWalkConfig),
    PuddleWorld(PuddleWorldConfig),
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvironmentConfig::RandomWalk(c) => c.validate(),
            EnvironmentConfig::PuddleWorld(c) => c.validate(),
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            EnvironmentConfig::RandomWalk(c) => c.discount,
            EnvironmentConfig::PuddleWorld(c) => c.discount,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            EnvironmentConfig::RandomWalk(c) => c.state_dim,
            EnvironmentConfig::PuddleWorld(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvironmentConfig::RandomWalk(_) => "random_walk",
            EnvironmentConfig::PuddleWorld(_) => "puddle_world",
        }
    }

    /// Generate with `seed` in place of the configured one.
    pub fn generate(&self, horizon: usize, seed: u64) -> Result<Trajectory> {
        match self {
            EnvironmentConfig::RandomWalk(c) => {
                gen_random_walk(&RandomWalkConfig { seed, ..c.clone() }, horizon)
            }
            EnvironmentConfig::PuddleWorld(c) => {
                gen_puddle_world(&PuddleWorldConfig { seed, ..c.clone() }, horizon)
            }
        }
    }
}
