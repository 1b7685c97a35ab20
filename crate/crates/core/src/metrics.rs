//! Error curves, hindsight comparators and regret for a finished run.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gptd_exact::{ExactGptd, OracleConfig, TrajectoryBatch};
use crate::kernel_rf::KernelSpec;
use crate::linalg;
use crate::os_gptd::TransitionFeatures;

/// What an estimator said at slot `t` before seeing `(r_t, s_{t+1})`, and
/// how wrong it turned out to be.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub predicted_value: f64,
    pub predicted_variance: f64,
    pub reward: f64,
    pub bellman_error: f64,
    /// `v̂_{t|t-1} - v̄_t`; NaN until [`fill_prediction_errors`] runs.
    pub prediction_error: f64,
}

/// `(r - hᵀθ)²`
pub fn bellman_error(theta: &DVector<f64>, h: &DVector<f64>, reward: f64) -> Result<f64> {
    check_dim("observation vector", theta.len(), h.len())?;
    let e = reward - h.dot(theta);
    Ok(e * e)
}

/// Discounted reward-to-go with nothing after the last reward.
pub fn empirical_values(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + discount * acc;
        out[t] = acc;
    }
    out
}

pub fn prediction_errors(predictions: &[f64], rewards: &[f64], discount: f64) -> Result<Vec<f64>> {
    check_dim("predictions", rewards.len(), predictions.len())?;
    Ok(predictions
        .iter()
        .zip(empirical_values(rewards, discount))
        .map(|(p, v)| p - v)
        .collect())
}

pub fn fill_prediction_errors(records: &mut [SlotRecord], discount: f64) {
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    for (rec, v) in records.iter_mut().zip(empirical_values(&rewards, discount)) {
        rec.prediction_error = rec.predicted_value - v;
    }
}

/// `sqrt(Σ_{τ≤t} x_τ / t)` for every prefix.
pub fn running_root_mean(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            acc += x;
            (acc / (i + 1) as f64).sqrt()
        })
        .collect()
}

/// Last slot whose reward-to-go is within `tolerance` (relative to the
/// largest reward) of its infinite-horizon value.
pub fn truncation_cut(horizon: usize, discount: f64, tolerance: f64) -> usize {
    if discount <= 0.0 {
        return horizon;
    }
    let tail = (tolerance.ln() / discount.ln()).ceil() as usize;
    horizon.saturating_sub(tail)
}

/// Trajectory-averaged running error curves. Entry `t - 1` belongs to
/// slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurves {
    pub avg_prediction_error: Vec<f64>,
    pub avg_bellman_error: Vec<f64>,
    /// Trajectories that reached each slot.
    pub counts: Vec<usize>,
}

impl ErrorCurves {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Per trajectory, the running root-mean squared prediction error and
/// running root-mean Bellman error; then the mean over trajectories.
pub fn avg_error_curves(records: &[Vec<SlotRecord>]) -> Result<ErrorCurves> {
    if records.is_empty() {
        return Err(Error::invalid("no trajectories to average"));
    }
    let len = records.iter().map(Vec::len).max().unwrap_or(0);
    let mut pred = vec![0.0; len];
    let mut bell = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for traj in records {
        let p = running_root_mean(traj.iter().map(|r| r.prediction_error.powi(2)));
        let b = running_root_mean(traj.iter().map(|r| r.bellman_error));
        for t in 0..traj.len() {
            pred[t] += p[t];
            bell[t] += b[t];
            counts[t] += 1;
        }
    }
    for t in 0..len {
        pred[t] /= counts[t] as f64;
        bell[t] /= counts[t] as f64;
    }
    Ok(ErrorCurves {
        avg_prediction_error: pred,
        avg_bellman_error: bell,
        counts,
    })
}

/// Ridge minimizer of `Σ_t (r_t - h_tᵀθ)² + (σ_n²/σ_θ²)‖θ‖²`.
pub fn hindsight_theta(
    transitions: &[TransitionFeatures],
    noise_var: f64,
    prior_var: f64,
) -> Result<DVector<f64>> {
    let Some(first) = transitions.first() else {
        return Err(Error::invalid(
            "hindsight comparator needs at least one transition",
        ));
    };
    if !(noise_var > 0.0 && prior_var > 0.0) {
        return Err(Error::invalid("noise and prior variances must be positive"));
    }
    let p = first.h.len();
    let mut a = DMatrix::identity(p, p) * (noise_var / prior_var);
    let mut b = DVector::zeros(p);
    for tf in transitions {
        check_dim("observation vector", p, tf.h.len())?;
        a.ger(1.0, &tf.h, &tf.h, 1.0);
        b.axpy(tf.reward, &tf.h, 1.0);
    }
    linalg::spd_solve(&a, &b, "hindsight comparator")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretReport {
    pub horizon: usize,
    /// `Σ l_t(θ̂_{t-1})`
    pub cumulative_online_loss: f64,
    /// `Σ l_t(θ*)`
    pub cumulative_hindsight_loss: f64,
    pub regret_r1: f64,
    pub regret_bound: f64,
    /// `‖θ*‖²`
    pub theta_star_norm: f64,
    /// Largest observed `|r_t - h_tᵀθ̂_{t-1}|`.
    pub be: f64,
}

/// `2D B_e² log((1+γ)² σ_θ² T / σ_n² + 1) + ‖θ*‖² / (2σ_θ²)`
pub fn regret_bound(
    num_features: usize,
    be: f64,
    discount: f64,
    prior_var: f64,
    noise_var: f64,
    horizon: usize,
    theta_star_norm: f64,
) -> f64 {
    let growth = (1.0 + discount).powi(2) * prior_var * horizon as f64 / noise_var;
    2.0 * num_features as f64 * be * be * (growth + 1.0).ln() + theta_star_norm / (2.0 * prior_var)
}

/// Online versus hindsight Bellman loss. `online_means[t]` is the estimate
/// in force when transition `t` arrived.
pub fn regret_report(
    transitions: &[TransitionFeatures],
    online_means: &[DVector<f64>],
    noise_var: f64,
    prior_var: f64,
    num_features: usize,
    discount: f64,
) -> Result<RegretReport> {
    check_dim(
        "online estimate sequence",
        transitions.len(),
        online_means.len(),
    )?;
    let theta_star = hindsight_theta(transitions, noise_var, prior_var)?;
    let mut online = 0.0;
    let mut hindsight = 0.0;
    let mut be: f64 = 0.0;
    for (tf, theta) in transitions.iter().zip(online_means) {
        let l = bellman_error(theta, &tf.h, tf.reward)?;
        online += l;
        be = be.max(l.sqrt());
        hindsight += bellman_error(&theta_star, &tf.h, tf.reward)?;
    }
    let theta_star_norm = theta_star.norm_squared();
    let horizon = transitions.len();
    Ok(RegretReport {
        horizon,
        cumulative_online_loss: online,
        cumulative_hindsight_loss: hindsight,
        regret_r1: online - hindsight,
        regret_bound: regret_bound(
            num_features,
            be,
            discount,
            prior_var,
            noise_var,
            horizon,
            theta_star_norm,
        ),
        theta_star_norm,
        be,
    })
}

impl RegretReport {
    pub fn check_regret_bound(&self) -> Result<()> {
        if self.regret_r1 > self.regret_bound {
            return Err(Error::InvariantViolation(format!(
                "regret {} exceeds its bound {} at T = {}",
                self.regret_r1, self.regret_bound, self.horizon
            )));
        }
        Ok(())
    }
}

/// `Σ_t (r_t - v*(s_t) + γ v*(s_{t+1}))²` for the exact GP posterior mean
/// `v*` fitted to the whole batch.
pub fn exact_comparator_loss(
    spec: KernelSpec,
    batch: &TrajectoryBatch,
    noise_var: f64,
    config: OracleConfig,
) -> Result<f64> {
    let v = ExactGptd::fit(spec, batch, noise_var, config)?.training_means();
    let g = batch.discount();
    Ok(batch
        .rewards()
        .iter()
        .enumerate()
        .map(|(t, r)| (r - v[t] + g * v[t + 1]).powi(2))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `(1/T) Σ_t (v̂_t(s_t) - v̂_{t-1}(s_t))²`
    pub mean_sq_change: f64,
    /// `(B_e² / σ_n²) tr(Σ₀ - Σ_T) / T`
    pub cap: f64,
    pub horizon: usize,
}

impl StabilityReport {
    pub fn holds(&self) -> bool {
        self.mean_sq_change <= self.cap * (1.0 + 1e-9) + 1e-15
    }
}

/// `pairs[t] = (v̂_t(s_t), v̂_{t-1}(s_t))`.
pub fn online_stability_sum(
    pairs: &[(f64, f64)],
    be: f64,
    noise_var: f64,
    trace_decrease: f64,
) -> StabilityReport {
    let horizon = pairs.len();
    let n = horizon.max(1) as f64;
    let sum: f64 = pairs.iter().map(|(a, b)| (a - b).powi(2)).sum();
    StabilityReport {
        mean_sq_change: sum / n,
        cap: be * be / noise_var * trace_decrease / n,
        horizon,
    }
}

/// `[Σ e_t²/T] / [2(1+γ)²/(1-γ)² · Σ e*_t²/T]`
pub fn error_ratio(errors: &[f64], comparator_errors: &[f64], discount: f64) -> Result<f64> {
    check_dim("comparator errors", errors.len(), comparator_errors.len())?;
    let own: f64 = errors.iter().map(|e| e * e).sum();
    let best: f64 = comparator_errors.iter().map(|e| e * e).sum();
    let scale = 2.0 * (1.0 + discount).powi(2) / (1.0 - discount).powi(2);
    Ok(own / (scale * best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_rf::sample_frequencies;
    use crate::os_gptd::OnlineGptd;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    struct Run {
        transitions: Vec<TransitionFeatures>,
        means: Vec<DVector<f64>>,
        learner: OnlineGptd,
        stability: Vec<(f64, f64)>,
        trace_decrease: f64,
        be: f64,
    }

    fn run(t: usize, nf: usize, noise_var: f64, gamma: f64, seed: u64) -> Run {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<DVector<f64>> = (0..=t)
            .map(|_| DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let mut learner =
            OnlineGptd::new(sample_frequencies(spec, nf, 3, seed).unwrap(), noise_var).unwrap();
        let mut out = Run {
            transitions: vec![],
            means: vec![],
            learner: learner.clone(),
            stability: vec![],
            trace_decrease: 0.0,
            be: 0.0,
        };
        for k in 0..t {
            let r = rng.random_range(-3.0..3.0);
            let tf = learner
                .transition(&states[k], r, &states[k + 1], gamma)
                .unwrap();
            let before = learner.predict(&states[k]).unwrap().mean;
            out.means.push(learner.posterior().mean().clone());
            let info = learner.update(&tf).unwrap();
            out.be = out.be.max(info.innovation.residual.abs());
            out.trace_decrease += info.trace_decrease;
            out.stability
                .push((learner.predict(&states[k]).unwrap().mean, before));
            out.transitions.push(tf);
        }
        out.learner = learner;
        out
    }

    #[test]
    fn bellman_error_cases() {
        let h = v(&[1.0, 0.0]);
        assert_eq!(bellman_error(&v(&[0.5, 0.0]), &h, 1.0).unwrap(), 0.25);
        assert_eq!(bellman_error(&v(&[0.0, 0.0]), &h, 2.0).unwrap(), 4.0);
        let theta = v(&[0.3, -0.2]);
        let h = v(&[0.7, 1.1]);
        assert_eq!(bellman_error(&theta, &h, h.dot(&theta)).unwrap(), 0.0);
        assert!(bellman_error(&theta, &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn empirical_value_cases() {
        assert_eq!(empirical_values(&[1.0], 0.9), vec![1.0]);
        assert_eq!(
            empirical_values(&[1.0, 1.0, 1.0], 0.5),
            vec![1.75, 1.5, 1.0]
        );
        assert_eq!(
            empirical_values(&[2.0, -1.0, 4.0], 0.0),
            vec![2.0, -1.0, 4.0]
        );
    }

    #[test]
    fn prediction_error_cases() {
        let rewards = [1.0, 1.0, 1.0];
        assert_eq!(
            prediction_errors(&[2.0; 3], &rewards, 0.5).unwrap(),
            vec![0.25, 0.5, 1.0]
        );
        assert_eq!(
            prediction_errors(&[1.75, 1.5, 1.0], &rewards, 0.5).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            prediction_errors(&[0.0; 3], &rewards, 0.5).unwrap(),
            vec![-1.75, -1.5, -1.0]
        );
        assert!(prediction_errors(&[0.0; 2], &rewards, 0.5).is_err());
    }

    fn record(e: f64, l: f64) -> SlotRecord {
        SlotRecord {
            slot: 0,
            predicted_value: 0.0,
            predicted_variance: 1.0,
            reward: 0.0,
            bellman_error: l,
            prediction_error: e,
        }
    }

    #[test]
    fn curve_cases() {
        let c = avg_error_curves(&[vec![record(2.0, 4.0); 5]]).unwrap();
        assert!(c
            .avg_prediction_error
            .iter()
            .all(|x| (x - 2.0).abs() < 1e-15));
        assert!(c.avg_bellman_error.iter().all(|x| (x - 2.0).abs() < 1e-15));
        assert_eq!(c.len(), 5);

        let c = avg_error_curves(&[vec![record(1.0, 1.0); 3], vec![record(-3.0, 9.0); 3]]).unwrap();
        assert!(c
            .avg_prediction_error
            .iter()
            .all(|x| (x - 2.0).abs() < 1e-15));
        assert!(avg_error_curves(&[]).is_err());

        // ragged: the late slots average only over trajectories that got there
        let c = avg_error_curves(&[vec![record(1.0, 1.0); 2], vec![record(3.0, 9.0); 4]]).unwrap();
        assert_eq!(c.counts, vec![2, 2, 1, 1]);
        assert!((c.avg_prediction_error[3] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_cut_drops_the_biased_tail() {
        // 0.75^24 ≈ 1.003e-3 still exceeds the tolerance; 0.75^25 does not
        assert_eq!(truncation_cut(1000, 0.75, 1e-3), 975);
        assert_eq!(truncation_cut(10, 0.75, 1e-3), 0);
        assert_eq!(truncation_cut(10, 0.0, 1e-3), 10);
    }

    #[test]
    fn hindsight_theta_cases() {
        let one = [TransitionFeatures::new(v(&[1.0, 0.0]), 1.0)];
        assert!((hindsight_theta(&one, 1.0, 1.0).unwrap() - v(&[0.5, 0.0])).amax() < 1e-15);
        let zeros = [
            TransitionFeatures::new(v(&[1.0, 0.3]), 0.0),
            TransitionFeatures::new(v(&[-0.2, 0.8]), 0.0),
        ];
        assert_eq!(hindsight_theta(&zeros, 0.1, 1.0).unwrap(), v(&[0.0, 0.0]));
        assert!(hindsight_theta(&[], 0.1, 1.0).is_err());
    }

    #[test]
    fn hindsight_theta_is_the_final_posterior_mean() {
        let r = run(80, 8, 0.05, 0.8, 4);
        let theta = hindsight_theta(&r.transitions, 0.05, 1.0).unwrap();
        assert!((theta - r.learner.posterior().mean()).amax() < 1e-8);
    }

    #[test]
    fn one_step_regret_by_hand() {
        // from the prior: l₁(0) = 1, θ* = [0.5, 0] ⇒ l₁(θ*) = 0.25
        let one = [TransitionFeatures::new(v(&[1.0, 0.0]), 1.0)];
        let rep = regret_report(&one, &[v(&[0.0, 0.0])], 1.0, 1.0, 1, 0.0).unwrap();
        assert_eq!(rep.cumulative_online_loss, 1.0);
        assert!((rep.cumulative_hindsight_loss - 0.25).abs() < 1e-15);
        assert!((rep.regret_r1 - 0.75).abs() < 1e-15);
        assert_eq!(rep.be, 1.0);
        assert!((rep.theta_star_norm - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_comparator_sequence_has_no_regret() {
        let r = run(30, 4, 0.1, 0.7, 2);
        let theta = hindsight_theta(&r.transitions, 0.1, 1.0).unwrap();
        let means = vec![theta; 30];
        let rep = regret_report(&r.transitions, &means, 0.1, 1.0, 4, 0.7).unwrap();
        assert!(rep.regret_r1.abs() < 1e-9);
        assert!(rep.regret_bound >= 0.0);
    }

    /// Completing the square on the ridge objective gives
    /// `R₁ = Σ_t e_t² h_tᵀΣ_t h_t / σ_n² + (σ_n²/σ_θ²)‖θ*‖²` exactly.
    #[test]
    fn regret_matches_closed_form_identity() {
        for (seed, noise_var) in [(1, 0.01), (2, 0.1), (3, 1.0)] {
            let r = run(60, 5, noise_var, 0.75, seed);
            let rep = regret_report(&r.transitions, &r.means, noise_var, 1.0, 5, 0.75).unwrap();
            let mut replay = OnlineGptd::new(r.learner.rf().clone(), noise_var).unwrap();
            let mut identity = 0.0;
            for tf in &r.transitions {
                let info = replay.update(tf).unwrap();
                let e = info.innovation.residual;
                identity +=
                    e * e * tf.h.dot(&(replay.posterior().covariance() * &tf.h)) / noise_var;
            }
            identity += noise_var * rep.theta_star_norm;
            assert!(
                (rep.regret_r1 - identity).abs() < 1e-8 * (1.0 + identity),
                "seed {seed}"
            );
            assert!(rep.regret_r1 >= 0.0);
            rep.check_regret_bound().unwrap();
        }
    }

    #[test]
    fn regret_bound_grows_with_horizon() {
        let b: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&t| regret_bound(50, 2.0, 0.75, 1.0, 0.01, t, 3.0))
            .collect();
        assert!(b[0] < b[1] && b[1] < b[2]);
        assert_eq!(regret_bound(50, 0.0, 0.75, 2.0, 0.01, 10, 3.0), 0.75);
    }

    #[test]
    fn exact_comparator_loss_by_direct_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states: Vec<DVector<f64>> = (0..9)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let rewards: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = TrajectoryBatch::new(states.clone(), rewards.clone(), 0.6).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let gp = ExactGptd::fit(spec, &batch, 0.1, OracleConfig::default()).unwrap();
        let v: Vec<f64> = states.iter().map(|s| gp.predict(s).unwrap().mean).collect();
        let expected: f64 = (0..8)
            .map(|t| (rewards[t] - v[t] + 0.6 * v[t + 1]).powi(2))
            .sum();
        let got = exact_comparator_loss(spec, &batch, 0.1, OracleConfig::default()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn stability_cases() {
        let rep = online_stability_sum(&[(1.0, 1.0); 4], 2.0, 0.1, 0.5);
        assert_eq!(rep.mean_sq_change, 0.0);
        assert!(rep.holds());
        let rep = online_stability_sum(&[(1.0, 0.0)], 1.0, 1.0, 0.5);
        assert!(!rep.holds());
    }

    #[test]
    fn stability_cap_shrinks_with_horizon() {
        let caps: Vec<f64> = [100, 1000, 4000]
            .iter()
            .map(|&t| {
                let r = run(t, 5, 0.1, 0.7, 9);
                online_stability_sum(&r.stability, r.be, 0.1, r.trace_decrease).cap
            })
            .collect();
        assert!(caps[0] > caps[1] && caps[1] > caps[2], "{caps:?}");
    }

    #[test]
    fn error_ratio_by_hand() {
        let g = 0.5;
        // scale = 2 · 2.25 / 0.25 = 18
        let ratio = error_ratio(&[3.0, 3.0], &[1.0, 1.0], g).unwrap();
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn empirical_values_satisfy_the_backward_recursion(
            rewards in prop::collection::vec(-5.0f64..5.0, 1..60),
            gamma in 0.0f64..0.99,
        ) {
            let v = empirical_values(&rewards, gamma);
            for t in 0..rewards.len() - 1 {
                prop_assert_eq!(v[t], rewards[t] + gamma * v[t + 1]);
            }
            prop_assert_eq!(*v.last().unwrap(), *rewards.last().unwrap());
        }

        #[test]
        fn regret_bound_and_stability_hold_on_random_runs(
            seed in 0u64..10_000,
            noise_var in 0.005f64..0.5,
            gamma in 0.0f64..0.95,
        ) {
            let r = run(40, 4, noise_var, gamma, seed);
            let rep = regret_report(&r.transitions, &r.means, noise_var, 1.0, 4, gamma).unwrap();
            prop_assert!(rep.regret_r1 <= rep.regret_bound);
            let st = online_stability_sum(&r.stability, r.be, noise_var, r.trace_decrease);
            prop_assert!(st.holds());
        }
    }
}
