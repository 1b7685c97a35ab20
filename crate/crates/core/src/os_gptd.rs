//! Online scalable GPTD: recursive Bayesian updates of the random-feature
//! weight posterior `N(θ̂_t, Σ_t)`.
//!
//! Each transition contributes the linear-Gaussian observation
//! `r_t = h_tᵀθ + n_t` with `h_t = φ(s_t) - γ φ(s_{t+1})`, so one slot is a
//! rank-one Kalman correction costing `O((2D)²)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gptd_exact::{check_discount, Prediction};
use crate::kernel_rf::RFMap;
use crate::linalg;

/// Gaussian posterior over the `2D` random-feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    slot: usize,
    noise_var: f64,
    prior_var: f64,
}

/// Observation vector `h_t` and its reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionFeatures {
    pub h: DVector<f64>,
    pub reward: f64,
}

impl TransitionFeatures {
    pub fn new(h: DVector<f64>, reward: f64) -> Self {
        TransitionFeatures { h, reward }
    }
}

/// One-step-ahead reward statistics under the pre-update posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    /// `h_tᵀθ̂_{t-1}`
    pub predicted_reward: f64,
    /// `r_t - h_tᵀθ̂_{t-1}`
    pub residual: f64,
    /// `h_tᵀΣ_{t-1}h_t + σ_n²`
    pub variance: f64,
}

impl Innovation {
    /// `log N(r_t; h_tᵀθ̂_{t-1}, h_tᵀΣ_{t-1}h_t + σ_n²)`
    pub fn log_likelihood(&self) -> f64 {
        -0.5 * ((2.0 * std::f64::consts::PI * self.variance).ln()
            + self.residual * self.residual / self.variance)
    }

    /// Instantaneous Bellman error `l_t(θ̂_{t-1})`.
    pub fn bellman_error(&self) -> f64 {
        self.residual * self.residual
    }
}

/// What a correction did, beyond the new moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub innovation: Innovation,
    /// `tr(Σ_{t-1} - Σ_t)`
    pub trace_decrease: f64,
}

/// Flat checkpoint of a [`PosteriorState`]; covariance is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub slot: usize,
    pub noise_var: f64,
    pub prior_var: f64,
}

/// `h = φ_t - γ φ_{t+1}`
pub fn transition_vector(
    phi_t: &DVector<f64>,
    phi_next: &DVector<f64>,
    discount: f64,
) -> Result<DVector<f64>> {
    check_dim("transition features", phi_t.len(), phi_next.len())?;
    check_discount(discount)?;
    Ok(phi_t - phi_next * discount)
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

impl PosteriorState {
    /// Prior `N(0, σ_θ² I_{2D})`.
    pub fn init(prior_var: f64, num_features: usize, noise_var: f64) -> Result<Self> {
        check_positive("prior variance", prior_var)?;
        check_positive("noise variance", noise_var)?;
        if num_features == 0 {
            return Err(Error::invalid("number of random features must be >= 1"));
        }
        let dim = 2 * num_features;
        Ok(PosteriorState {
            mean: DVector::zeros(dim),
            covariance: DMatrix::identity(dim, dim) * prior_var,
            slot: 0,
            noise_var,
            prior_var,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(φᵀθ̂, φᵀΣφ)`
    pub fn predict(&self, phi_s: &DVector<f64>) -> Result<Prediction> {
        check_dim("feature vector", self.dim(), phi_s.len())?;
        Ok(Prediction {
            mean: phi_s.dot(&self.mean),
            variance: phi_s.dot(&(&self.covariance * phi_s)),
        })
    }

    pub fn innovation(&self, tf: &TransitionFeatures) -> Result<Innovation> {
        self.check_transition(tf)?;
        let sh = &self.covariance * &tf.h;
        Ok(self.innovation_from(tf, &sh))
    }

    fn innovation_from(&self, tf: &TransitionFeatures, sh: &DVector<f64>) -> Innovation {
        let predicted_reward = tf.h.dot(&self.mean);
        Innovation {
            predicted_reward,
            residual: tf.reward - predicted_reward,
            variance: tf.h.dot(sh) + self.noise_var,
        }
    }

    fn check_transition(&self, tf: &TransitionFeatures) -> Result<()> {
        check_dim("observation vector", self.dim(), tf.h.len())?;
        if !tf.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {}", tf.reward)));
        }
        if tf.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation vector".into()));
        }
        Ok(())
    }

    /// Rank-one Bayesian correction with one transition.
    pub fn update(&mut self, tf: &TransitionFeatures) -> Result<UpdateInfo> {
        self.check_transition(tf)?;
        let sh = &self.covariance * &tf.h;
        let innovation = self.innovation_from(tf, &sh);
        let gain = innovation.residual / innovation.variance;
        self.mean.axpy(gain, &sh, 1.0);
        self.covariance
            .ger(-1.0 / innovation.variance, &sh, &sh, 1.0);
        linalg::symmetrize(&mut self.covariance);
        self.slot += 1;
        Ok(UpdateInfo {
            innovation,
            trace_decrease: sh.norm_squared() / innovation.variance,
        })
    }

    /// `J_t = Σ_t⁻¹`
    pub fn info_matrix(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.covariance, "posterior covariance")
    }

    /// The same correction written as a Newton step on the Bellman error:
    /// `θ̂_t = θ̂_{t-1} - J_t⁻¹ ∇ / 2σ_n²` with `∇ = 2h(hᵀθ̂_{t-1} - r)` and
    /// `J_t = J_{t-1} + hhᵀ/σ_n²`. Goes through the information matrix,
    /// never through the covariance-form gain.
    pub fn gradient_form_step(&self, tf: &TransitionFeatures) -> Result<PosteriorState> {
        self.check_transition(tf)?;
        let mut info = self.info_matrix()?;
        info.ger(1.0 / self.noise_var, &tf.h, &tf.h, 1.0);
        let grad = &tf.h * (2.0 * (tf.h.dot(&self.mean) - tf.reward));
        let factor = linalg::spd_factor(&info, "information matrix")?;
        let step = factor.solve(&grad) / (2.0 * self.noise_var);
        let mut covariance = factor.inverse();
        linalg::symmetrize(&mut covariance);
        Ok(PosteriorState {
            mean: &self.mean - step,
            covariance,
            slot: self.slot + 1,
            noise_var: self.noise_var,
            prior_var: self.prior_var,
        })
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        let n = self.dim();
        let mut covariance = Vec::with_capacity(n * n);
        for i in 0..n {
            covariance.extend(self.covariance.row(i).iter());
        }
        PosteriorSnapshot {
            mean: self.mean.as_slice().to_vec(),
            covariance,
            slot: self.slot,
            noise_var: self.noise_var,
            prior_var: self.prior_var,
        }
    }

    pub fn from_snapshot(snap: &PosteriorSnapshot) -> Result<Self> {
        check_positive("prior variance", snap.prior_var)?;
        check_positive("noise variance", snap.noise_var)?;
        let n = snap.mean.len();
        if n == 0 || !n.is_multiple_of(2) || snap.covariance.len() != n * n {
            return Err(Error::invalid(format!(
                "snapshot has mean of length {n} and covariance of length {}",
                snap.covariance.len()
            )));
        }
        Ok(PosteriorState {
            mean: DVector::from_column_slice(&snap.mean),
            covariance: DMatrix::from_row_slice(n, n, &snap.covariance),
            slot: snap.slot,
            noise_var: snap.noise_var,
            prior_var: snap.prior_var,
        })
    }
}

/// A random-feature map paired with its weight posterior: one OS-GPTD
/// learner working directly on states.
#[derive(Debug, Clone)]
pub struct OnlineGptd {
    rf: RFMap,
    posterior: PosteriorState,
}

impl OnlineGptd {
    pub fn new(rf: RFMap, noise_var: f64) -> Result<Self> {
        let posterior = PosteriorState::init(rf.spec().magnitude, rf.num_features(), noise_var)?;
        Ok(OnlineGptd { rf, posterior })
    }

    pub fn from_parts(rf: RFMap, posterior: PosteriorState) -> Result<Self> {
        check_dim("posterior", rf.feature_dim(), posterior.dim())?;
        Ok(OnlineGptd { rf, posterior })
    }

    pub fn rf(&self) -> &RFMap {
        &self.rf
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn predict(&self, s: &DVector<f64>) -> Result<Prediction> {
        self.posterior.predict(&self.rf.feature_map(s)?)
    }

    pub fn predict_mean(&self, s: &DVector<f64>) -> Result<f64> {
        Ok(self.rf.feature_map(s)?.dot(self.posterior.mean()))
    }

    pub fn transition(
        &self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<TransitionFeatures> {
        let h = transition_vector(
            &self.rf.feature_map(s)?,
            &self.rf.feature_map(s_next)?,
            discount,
        )?;
        Ok(TransitionFeatures::new(h, reward))
    }

    pub fn observe(
        &mut self,
        s: &DVector<f64>,
        reward: f64,
        s_next: &DVector<f64>,
        discount: f64,
    ) -> Result<UpdateInfo> {
        let tf = self.transition(s, reward, s_next, discount)?;
        self.posterior.update(&tf)
    }

    pub fn update(&mut self, tf: &TransitionFeatures) -> Result<UpdateInfo> {
        self.posterior.update(tf)
    }
}
