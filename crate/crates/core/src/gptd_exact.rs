//! Batch GPTD predictors used as ground truth for the recursive estimator.
//!
//! Rewards follow `r = H v + n` with `H` the `t × (t+1)` temporal-difference
//! matrix, so conditioning the GP prior on `r` is ordinary Gaussian
//! conditioning with `Q = H K Hᵀ + σ_n² I`. These routines are cubic in the
//! number of transitions and refuse batches past [`OracleConfig::max_slots`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::kernel_rf::{KernelSpec, RFMap};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_slots: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { max_slots: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// `t + 1` states and the `t` rewards observed between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    states: Vec<DVector<f64>>,
    rewards: Vec<f64>,
    discount: f64,
}

impl TrajectoryBatch {
    pub fn new(states: Vec<DVector<f64>>, rewards: Vec<f64>, discount: f64) -> Result<Self> {
        if states.len() != rewards.len() + 1 {
            return Err(Error::invalid(format!(
                "batch needs one more state than rewards, got {} states and {} rewards",
                states.len(),
                rewards.len()
            )));
        }
        check_discount(discount)?;
        let d = states[0].len();
        for s in &states {
            check_dim("batch state", d, s.len())?;
        }
        Ok(TrajectoryBatch {
            states,
            rewards,
            discount,
        })
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn num_transitions(&self) -> usize {
        self.rewards.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }
}

pub(crate) fn check_discount(discount: f64) -> Result<()> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(format!(
            "discount must lie in [0, 1), got {discount}"
        )));
    }
    Ok(())
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    Ok(())
}

/// The `t × (t+1)` matrix with `1` on the diagonal and `-γ` just right of it.
pub fn build_h(t: usize, discount: f64) -> Result<DMatrix<f64>> {
    if t < 1 {
        return Err(Error::invalid("observation matrix needs t >= 1"));
    }
    check_discount(discount)?;
    let mut h = DMatrix::zeros(t, t + 1);
    for i in 0..t {
        h[(i, i)] = 1.0;
        h[(i, i + 1)] = -discount;
    }
    Ok(h)
}

/// GP conditioned on TD rewards, given the prior Gram matrix over the
/// `t + 1` trajectory states. Factorizes `Q` once; predictions then cost
/// `O(t²)` each.
#[derive(Debug, Clone)]
pub struct GramPredictor {
    discount: f64,
    factor: Option<Cholesky<f64, Dyn>>,
    /// `Q⁻¹ r`
    alpha: DVector<f64>,
}

impl GramPredictor {
    pub fn new(
        gram: &DMatrix<f64>,
        rewards: &[f64],
        discount: f64,
        noise_var: f64,
    ) -> Result<Self> {
        check_noise(noise_var)?;
        check_discount(discount)?;
        let t = rewards.len();
        if gram.nrows() != t + 1 || gram.ncols() != t + 1 {
            return Err(Error::invalid(format!(
                "gram matrix must be {}x{}, got {}x{}",
                t + 1,
                t + 1,
                gram.nrows(),
                gram.ncols()
            )));
        }
        if t == 0 {
            return Ok(GramPredictor {
                discount,
                factor: None,
                alpha: DVector::zeros(0),
            });
        }
        let g = discount;
        let q = DMatrix::from_fn(t, t, |i, j| {
            let v = gram[(i, j)] - g * gram[(i, j + 1)] - g * gram[(i + 1, j)]
                + g * g * gram[(i + 1, j + 1)];
            if i == j {
                v + noise_var
            } else {
                v
            }
        });
        let factor = linalg::spd_factor(&q, "batch GPTD innovation covariance")?;
        let alpha = factor.solve(&DVector::from_column_slice(rewards));
        Ok(GramPredictor {
            discount,
            factor: Some(factor),
            alpha,
        })
    }

    /// `Hᵀ Q⁻¹ r`: the posterior mean is `Σ_τ κ(s_τ, s) w_τ`.
    pub fn mean_weights(&self) -> DVector<f64> {
        let t = self.alpha.len();
        DVector::from_fn(t + 1, |i, _| {
            let own = if i < t { self.alpha[i] } else { 0.0 };
            let prev = if i > 0 { self.alpha[i - 1] } else { 0.0 };
            own - self.discount * prev
        })
    }

    /// `cross[τ] = κ(s_τ, s)` over the trajectory states; `prior_var = κ(s, s)`.
    pub fn predict(&self, cross: &DVector<f64>, prior_var: f64) -> Result<Prediction> {
        let t = self.alpha.len();
        check_dim("cross covariance", t + 1, cross.len())?;
        let Some(factor) = &self.factor else {
            return Ok(Prediction {
                mean: 0.0,
                variance: prior_var,
            });
        };
        let hk = DVector::from_fn(t, |i, _| cross[i] - self.discount * cross[i + 1]);
        let mean = hk.dot(&self.alpha);
        let reduction = hk.dot(&factor.solve(&hk));
        // round-off can push a fully explained point slightly below zero
        let variance = (prior_var - reduction).clamp(0.0, prior_var);
        Ok(Prediction { mean, variance })
    }
}

/// Exact GPTD posterior over a whole batch, reusable across query states.
#[derive(Debug, Clone)]
pub struct ExactGptd {
    spec: KernelSpec,
    states: Vec<DVector<f64>>,
    gram: DMatrix<f64>,
    predictor: GramPredictor,
}

impl ExactGptd {
    pub fn fit(
        spec: KernelSpec,
        batch: &TrajectoryBatch,
        noise_var: f64,
        config: OracleConfig,
    ) -> Result<Self> {
        spec.validate()?;
        if batch.num_transitions() > config.max_slots {
            return Err(Error::invalid(format!(
                "exact GPTD oracle capped at {} transitions, got {}",
                config.max_slots,
                batch.num_transitions()
            )));
        }
        let states = batch.states();
        let n = states.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = spec.exact(&states[i], &states[j])?;
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        let predictor = GramPredictor::new(&gram, batch.rewards(), batch.discount(), noise_var)?;
        Ok(ExactGptd {
            spec,
            states: states.to_vec(),
            gram,
            predictor,
        })
    }

    /// Posterior means at every trajectory state, without variances.
    pub fn training_means(&self) -> DVector<f64> {
        &self.gram * self.predictor.mean_weights()
    }

    pub fn predict(&self, s: &DVector<f64>) -> Result<Prediction> {
        let mut cross = DVector::zeros(self.states.len());
        for (i, si) in self.states.iter().enumerate() {
            cross[i] = self.spec.exact(si, s)?;
        }
        self.predictor.predict(&cross, self.spec.exact(s, s)?)
    }
}

/// Exact GPTD predictive moments at `s`.
pub fn batch_predict(
    spec: KernelSpec,
    batch: &TrajectoryBatch,
    s: &DVector<f64>,
    noise_var: f64,
) -> Result<Prediction> {
    check_dim("query state", batch.state_dim(), s.len())?;
    ExactGptd::fit(spec, batch, noise_var, OracleConfig::default())?.predict(s)
}

/// Closed-form posterior of the random-feature weights:
/// `Σ = (ΦᵀHᵀHΦ / σ_n² + I / σ_θ²)⁻¹`, `θ̄ = Σ ΦᵀHᵀ r / σ_n²`.
#[derive(Debug, Clone)]
pub struct RfBatchPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl RfBatchPosterior {
    pub fn fit(
        map: &RFMap,
        batch: &TrajectoryBatch,
        noise_var: f64,
        prior_var: f64,
    ) -> Result<Self> {
        check_noise(noise_var)?;
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::invalid(format!(
                "prior variance must be positive, got {prior_var}"
            )));
        }
        check_dim("batch state", map.state_dim(), batch.state_dim())?;
        let p = map.feature_dim();
        let phi = map.feature_matrix(batch.states())?;
        let t = batch.num_transitions();
        let g = batch.discount();
        let hphi = DMatrix::from_fn(t, p, |i, j| phi[(i, j)] - g * phi[(i + 1, j)]);
        let mut info = hphi.transpose() * &hphi;
        let ridge = noise_var / prior_var;
        for i in 0..p {
            info[(i, i)] += ridge;
        }
        let factor = linalg::spd_factor(&info, "random-feature batch system")?;
        let rhs = hphi.transpose() * DVector::from_column_slice(batch.rewards());
        let mean = factor.solve(&rhs);
        let covariance = factor.inverse() * noise_var;
        Ok(RfBatchPosterior { mean, covariance })
    }

    pub fn predict(&self, phi_s: &DVector<f64>) -> Result<Prediction> {
        check_dim("feature vector", self.mean.len(), phi_s.len())?;
        Ok(Prediction {
            mean: phi_s.dot(&self.mean),
            variance: phi_s.dot(&(&self.covariance * phi_s)),
        })
    }
}

/// Random-feature batch predictive moments at `s`. Solves in weight space
/// or, when there are fewer states than weights, through the `σ_θ² ΦΦᵀ` Gram.
pub fn batch_predict_rf(
    map: &RFMap,
    batch: &TrajectoryBatch,
    s: &DVector<f64>,
    noise_var: f64,
    prior_var: f64,
) -> Result<Prediction> {
    let phi_s = map.feature_map(s)?;
    if batch.states().len() >= map.feature_dim() {
        return RfBatchPosterior::fit(map, batch, noise_var, prior_var)?.predict(&phi_s);
    }
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::invalid(format!(
            "prior variance must be positive, got {prior_var}"
        )));
    }
    let phi = map.feature_matrix(batch.states())?;
    let gram = (&phi * phi.transpose()) * prior_var;
    let cross = (&phi * &phi_s) * prior_var;
    GramPredictor::new(&gram, batch.rewards(), batch.discount(), noise_var)?
        .predict(&cross, prior_var * phi_s.norm_squared())
}
