use nalgebra::DVector;

use crate::error::Result;
use crate::gptd_exact::{ExactGptd, OracleConfig, Prediction, TrajectoryBatch};
use crate::kernel_rf::{sample_frequencies, KernelSpec};
use crate::os_egptd::{expert_seed, init_ensemble, EnsembleState};
use crate::os_gptd::{OnlineGptd, TransitionFeatures};

use super::config::{EstimatorKind, ExperimentConfig};

/// Exact GPTD refitted on the whole history every slot.
#[derive(Debug, Clone)]
pub struct BatchOracle {
    spec: KernelSpec,
    noise_var: f64,
    discount: f64,
    config: OracleConfig,
    states: Vec<DVector<f64>>,
    rewards: Vec<f64>,
    /// Fit over the first `.0` transitions.
    fit: Option<(usize, ExactGptd)>,
}

impl BatchOracle {
    pub fn new(spec: KernelSpec, noise_var: f64, discount: f64, config: OracleConfig) -> Self {
        BatchOracle {
            spec,
            noise_var,
            discount,
            config,
            states: Vec::new(),
            rewards: Vec::new(),
            fit: None,
        }
    }

    fn posterior(&mut self, s: &DVector<f64>) -> Result<&ExactGptd> {
        if self.states.is_empty() {
            self.states.push(s.clone());
        }
        let slot = self.rewards.len();
        if !matches!(&self.fit, Some((t, _)) if *t == slot) {
            let batch =
                TrajectoryBatch::new(self.states.clone(), self.rewards.clone(), self.discount)?;
            self.fit = Some((
                slot,
                ExactGptd::fit(self.spec, &batch, self.noise_var, self.config)?,
            ));
        }
        Ok(&self.fit.as_ref().expect("fitted above").1)
    }

    pub fn predict(&mut self, s: &DVector<f64>) -> Result<Prediction> {
        self.posterior(s)?.predict(s)
    }

    /// Returns the pre-update Bellman error.
    pub fn observe(&mut self, s: &DVector<f64>, reward: f64, s_next: &DVector<f64>) -> Result<f64> {
        let discount = self.discount;
        let gp = self.posterior(s)?;
        let e = reward - gp.predict(s)?.mean + discount * gp.predict(s_next)?.mean;
        self.rewards.push(reward);
        self.states.push(s_next.clone());
        Ok(e * e)
    }
}

/// What the harness needs back from one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Bellman error of the estimate in force before the update.
    pub bellman_error: f64,
    /// Per expert: pre-update residual `r_t - h_tᵀθ̂_{t-1}` and
    /// `tr(Σ_{t-1} - Σ_t)`. Empty for the oracle.
    pub experts: Vec<(f64, f64)>,
    /// Weights after the update, for ensembles.
    pub weights: Option<DVector<f64>>,
    /// The consumed observation vector, for the single-kernel learner.
    pub features: Option<TransitionFeatures>,
}

#[derive(Debug, Clone)]
pub enum Learner {
    Single(OnlineGptd),
    Ensemble(EnsembleState),
    Oracle(BatchOracle),
}

impl Learner {
    /// Fresh estimator for one trajectory. The single-kernel learner draws
    /// its features exactly as expert 0 of an ensemble would.
    pub fn build(cfg: &ExperimentConfig, kind: EstimatorKind, seed: u64) -> Result<Self> {
        let d = cfg.environment.state_dim();
        let spec = cfg.primary_kernel();
        Ok(match kind {
            EstimatorKind::OsGptd => {
                let rf = sample_frequencies(spec, cfg.num_features, d, expert_seed(seed, 0))?;
                Learner::Single(OnlineGptd::new(rf, cfg.noise_var)?)
            }
            EstimatorKind::OsEgptd => Learner::Ensemble(init_ensemble(
                &cfg.kernels,
                cfg.num_features,
                d,
                cfg.noise_var,
                seed,
            )?),
            EstimatorKind::BatchOracle => Learner::Oracle(BatchOracle::new(
                spec,
                cfg.noise_var,
                cfg.discount(),
                OracleConfig {
                    max_slots: cfg.oracle_max_slots,
                },
            )),
        })
    }

    pub fn num_experts(&self) -> usize {
        match self {
            Learner::Single(_) => 1,
            Learner::Ensemble(e) => e.len(),
            Learner::Oracle(_) => 0,
        }
    }

    /// Predictive moments at `s`, and each expert's mean.
    pub fn predict(&mut self, s: &DVector<f64>) -> Result<(Prediction, Vec<f64>)> {
        match self {
            Learner::Single(m) => {
                let p = m.predict(s)?;
                Ok((p, vec![p.mean]))
            }
            Learner::Ensemble(e) => {
                let p = e.predict(s)?;
                let means = p.per_expert.iter().map(|q| q.mean).collect();
                Ok((
                    Prediction {
                        mean: p.mean,
                        variance: p.variance,
                    },
                    means,
                ))
            }
            Learner::Oracle(o) => Ok((o.predict(s)?, Vec::new())),
        }
    }

    /// Expert means only; skips the variance work.
    pub fn expert_means(&self, s: &DVector<f64>) -> Result<Vec<f64>> {
        match self {
            Learner::Single(m) => Ok(vec![m.predict_mean(s)?]),
            Learner::Ensemble(e) => e
                .experts()
                .iter()
                .map(|x| x.model().predict_mean(s))
                .collect(),
            Learner::Oracle(_) => Ok(Vec::new()),
        }
    }

    pub fn observe(
        &mut self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<Observation> {
        match self {
            Learner::Single(m) => {
                let tf = m.transition(s, reward, s_next, discount)?;
                let info = m.update(&tf)?;
                Ok(Observation {
                    bellman_error: info.innovation.bellman_error(),
                    experts: vec![(info.innovation.residual, info.trace_decrease)],
                    weights: None,
                    features: Some(tf),
                })
            }
            Learner::Ensemble(e) => {
                let info = e.step(s, reward, s_next, discount)?;
                Ok(Observation {
                    bellman_error: info.bellman_error(reward),
                    experts: info
                        .updates
                        .iter()
                        .map(|u| (u.innovation.residual, u.trace_decrease))
                        .collect(),
                    weights: Some(e.weights().clone()),
                    features: None,
                })
            }
            Learner::Oracle(o) => Ok(Observation {
                bellman_error: o.observe(s, reward, s_next)?,
                experts: Vec::new(),
                weights: None,
                features: None,
            }),
        }
    }
}
