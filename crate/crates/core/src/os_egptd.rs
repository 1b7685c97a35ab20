//! Ensemble of OS-GPTD experts, one per dictionary kernel, combined by
//! Bayesian model averaging over the kernel index.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gptd_exact::Prediction;
use crate::kernel_rf::{sample_frequencies, KernelSpec, RFMap, RFMapSnapshot};
use crate::os_gptd::{Innovation, OnlineGptd, PosteriorSnapshot, PosteriorState, UpdateInfo};
use crate::rng;

/// Weights are clamped from below to this value after each correction.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Frequency seed of expert `m` in an ensemble seeded with `seed`.
pub fn expert_seed(seed: u64, m: usize) -> u64 {
    rng::derive_seed(seed ^ rng::mix64(rng::Purpose::ExpertSeed as u64), m as u64)
}

#[derive(Debug, Clone)]
pub struct ExpertState {
    index: usize,
    model: OnlineGptd,
}

impl ExpertState {
    pub fn new(index: usize, rf: RFMap, noise_var: f64) -> Result<Self> {
        Ok(ExpertState {
            index,
            model: OnlineGptd::new(rf, noise_var)?,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.model.rf().spec()
    }

    pub fn rf(&self) -> &RFMap {
        self.model.rf()
    }

    pub fn posterior(&self) -> &PosteriorState {
        self.model.posterior()
    }

    pub fn model(&self) -> &OnlineGptd {
        &self.model
    }

    pub fn predict(&self, s: &DVector<f64>) -> Result<Prediction> {
        self.model.predict(s)
    }

    fn innovation(
        &self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<Innovation> {
        let tf = self.model.transition(s, reward, s_next, discount)?;
        self.model.posterior().innovation(&tf)
    }
}

/// Per-expert correction with the expert's own observation vector.
pub fn expert_update(
    expert: &mut ExpertState,
    s: &DVector<f64>,
    reward: f64,
    s_next: &DVector<f64>,
    discount: f64,
) -> Result<UpdateInfo> {
    expert.model.observe(s, reward, s_next, discount)
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    experts: Vec<ExpertState>,
    weights: DVector<f64>,
    slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub mean: f64,
    pub variance: f64,
    pub per_expert: Vec<Prediction>,
}

/// What one ensemble step saw before correcting anything.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Weights in force before the step.
    pub prior_weights: DVector<f64>,
    /// Per-expert correction summaries (innovations are pre-update).
    pub updates: Vec<UpdateInfo>,
    /// `Σ_m w^m_{t-1} h^mᵀθ̂^m_{t-1}`
    pub predicted_reward: f64,
}

impl StepInfo {
    /// Squared residual of the mixture reward prediction.
    pub fn bellman_error(&self, reward: f64) -> f64 {
        let e = reward - self.predicted_reward;
        e * e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSnapshot {
    pub index: usize,
    pub rf: RFMapSnapshot,
    pub posterior: PosteriorSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSnapshot {
    pub experts: Vec<ExpertSnapshot>,
    pub weights: Vec<f64>,
    pub slot: usize,
}

/// One expert per dictionary entry, each with its own frequency draw, zero
/// mean, `σ_θ^m² I` covariance, and weight `1/M`.
pub fn init_ensemble(
    dictionary: &[KernelSpec],
    num_features: usize,
    state_dim: usize,
    noise_var: f64,
    seed: u64,
) -> Result<EnsembleState> {
    if dictionary.is_empty() {
        return Err(Error::invalid("kernel dictionary is empty"));
    }
    let experts = dictionary
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let rf = sample_frequencies(*spec, num_features, state_dim, expert_seed(seed, m))?;
            ExpertState::new(m, rf, noise_var)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleState::from_experts(experts)
}

/// `w_t ∝ w_{t-1} · exp(log_lik)` in log space, floored at
/// [`WEIGHT_FLOOR`] and renormalized.
pub fn posterior_weights(
    prior: &DVector<f64>,
    log_likelihoods: &[f64],
    slot: usize,
) -> Result<DVector<f64>> {
    check_dim("log-likelihoods", prior.len(), log_likelihoods.len())?;
    let logs: Vec<f64> = prior
        .iter()
        .zip(log_likelihoods)
        .map(|(w, l)| w.ln() + l)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric {
            slot,
            message: format!("no expert has a finite predictive density (max log weight {max})"),
        });
    }
    let mut w = DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - max).exp()));
    w /= w.sum();
    if w.iter().any(|&x| x < WEIGHT_FLOOR) {
        w.apply(|x| *x = x.max(WEIGHT_FLOOR));
        w /= w.sum();
    }
    Ok(w)
}

impl EnsembleState {
    /// Uniform weights over the given experts.
    pub fn from_experts(experts: Vec<ExpertState>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one expert"));
        }
        let dim = experts[0].rf().state_dim();
        for e in &experts {
            check_dim("expert state dimension", dim, e.rf().state_dim())?;
        }
        let m = experts.len();
        Ok(EnsembleState {
            experts,
            weights: DVector::from_element(m, 1.0 / m as f64),
            slot: 0,
        })
    }

    pub fn experts(&self) -> &[ExpertState] {
        &self.experts
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.experts[0].rf().state_dim()
    }

    /// Replace the weights; they must lie on the simplex.
    pub fn set_weights(&mut self, weights: DVector<f64>) -> Result<()> {
        check_dim("weights", self.len(), weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights must be non-negative and sum to 1"));
        }
        self.weights = weights;
        Ok(())
    }

    /// Mixture moments: weighted mean, and weighted per-expert variance
    /// plus spread of the expert means around the mixture mean.
    pub fn predict(&self, s: &DVector<f64>) -> Result<EnsemblePrediction> {
        let per_expert = self
            .experts
            .iter()
            .map(|e| e.predict(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(mix(&self.weights, per_expert))
    }

    /// Bayesian weight correction from the pre-update posteriors. Does not
    /// touch the experts.
    pub fn weight_update(
        &self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<DVector<f64>> {
        let logs = self
            .experts
            .iter()
            .map(|e| Ok(e.innovation(s, reward, s_next, discount)?.log_likelihood()))
            .collect::<Result<Vec<_>>>()?;
        posterior_weights(&self.weights, &logs, self.slot)
    }

    /// Weights first, from the pre-update posteriors, then every expert.
    pub fn step(
        &mut self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<StepInfo> {
        let mut updates = Vec::with_capacity(self.len());
        for e in &mut self.experts {
            updates.push(expert_update(e, s, reward, s_next, discount)?);
        }
        let logs: Vec<f64> = updates
            .iter()
            .map(|u| u.innovation.log_likelihood())
            .collect();
        let weights = posterior_weights(&self.weights, &logs, self.slot)?;
        let predicted_reward = self
            .weights
            .iter()
            .zip(&updates)
            .map(|(w, u)| w * u.innovation.predicted_reward)
            .sum();
        let prior_weights = std::mem::replace(&mut self.weights, weights);
        self.slot += 1;
        Ok(StepInfo {
            prior_weights,
            updates,
            predicted_reward,
        })
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot {
            experts: self
                .experts
                .iter()
                .map(|e| ExpertSnapshot {
                    index: e.index,
                    rf: e.rf().snapshot(),
                    posterior: e.posterior().snapshot(),
                })
                .collect(),
            weights: self.weights.as_slice().to_vec(),
            slot: self.slot,
        }
    }

    pub fn from_snapshot(snap: &EnsembleSnapshot) -> Result<Self> {
        let experts = snap
            .experts
            .iter()
            .map(|e| {
                let rf = RFMap::from_snapshot(&e.rf)?;
                let posterior = PosteriorState::from_snapshot(&e.posterior)?;
                Ok(ExpertState {
                    index: e.index,
                    model: OnlineGptd::from_parts(rf, posterior)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ens = EnsembleState::from_experts(experts)?;
        ens.set_weights(DVector::from_column_slice(&snap.weights))?;
        ens.slot = snap.slot;
        Ok(ens)
    }
}

fn mix(weights: &DVector<f64>, per_expert: Vec<Prediction>) -> EnsemblePrediction {
    let mean: f64 = weights
        .iter()
        .zip(&per_expert)
        .map(|(w, p)| w * p.mean)
        .sum();
    let variance = weights
        .iter()
        .zip(&per_expert)
        .map(|(w, p)| w * (p.variance + (mean - p.mean).powi(2)))
        .sum();
    EnsemblePrediction {
        mean,
        variance,
        per_expert,
    }
}
