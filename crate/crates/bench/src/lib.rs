//! Shared fixtures for the criterion benches.

use nalgebra::DVector;
use ostd_core::{EnvironmentConfig, KernelSpec, RandomWalkConfig, Trajectory};

pub const DISCOUNT: f64 = 0.75;
pub const NOISE_VAR: f64 = 0.01;

/// A default random walk (50 states in 10 dimensions).
pub fn random_walk(horizon: usize, seed: u64) -> Trajectory {
    EnvironmentConfig::RandomWalk(RandomWalkConfig::default())
        .generate(horizon, seed)
        .expect("default random walk is valid")
}

/// `m` Gaussian kernels with lengthscales spread over 0.1 to 10.
pub fn dictionary(m: usize) -> Vec<KernelSpec> {
    (0..m)
        .map(|k| {
            let e = if m == 1 {
                -1.0
            } else {
                -1.0 + 2.0 * k as f64 / (m - 1) as f64
            };
            KernelSpec::gaussian(10f64.powf(e)).expect("positive lengthscale")
        })
        .collect()
}

/// Cycles through the transitions of a trajectory forever.
pub struct Transitions {
    traj: Trajectory,
    next: usize,
}

impl Transitions {
    pub fn new(traj: Trajectory) -> Self {
        Transitions { traj, next: 0 }
    }

    pub fn step(&mut self) -> (&DVector<f64>, f64, &DVector<f64>) {
        let t = self.next;
        self.next = (t + 1) % self.traj.len();
        (
            &self.traj.states[t],
            self.traj.rewards[t],
            &self.traj.states[t + 1],
        )
    }
}
