use std::time::Instant;

use log::{debug, info};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gptd_exact::OracleConfig;
use crate::kernel_rf::KernelSpec;
use crate::metrics::{
    self, avg_error_curves, empirical_values, fill_prediction_errors, hindsight_theta,
    online_stability_sum, regret_report, ErrorCurves, RegretReport, SlotRecord, StabilityReport,
};
use crate::os_gptd::TransitionFeatures;
use crate::rng;

use super::config::{check_horizons, EstimatorKind, ExperimentConfig};
use super::learner::Learner;

/// Reward-to-go tolerance for the unbiased part of the error curves.
pub const TRUNCATION_TOLERANCE: f64 = 1e-3;

pub fn trajectory_seed(master_seed: u64, index: usize) -> u64 {
    rng::derive_seed(master_seed, index as u64)
}

fn at_slot(trajectory: usize, slot: usize) -> impl FnOnce(Error) -> Error {
    move |e| {
        if e.is_numeric() {
            Error::Numeric {
                slot,
                message: format!("trajectory {trajectory}: {e}"),
            }
        } else {
            e
        }
    }
}

/// Everything one trajectory contributes to the aggregate outputs.
#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub index: usize,
    pub seed: u64,
    pub records: Vec<SlotRecord>,
    /// Ensemble weights after each slot.
    pub weights: Vec<DVector<f64>>,
    /// One report per expert.
    pub stability: Vec<StabilityReport>,
    /// Monitored against the ridge comparator; single-kernel runs only.
    pub error_ratio: Option<f64>,
}

/// Runs one trajectory slot by slot: predict at `s_t`, then consume
/// `(r_t, s_{t+1})`.
pub fn run_trajectory(cfg: &ExperimentConfig, index: usize) -> Result<TrajectoryResult> {
    let seed = trajectory_seed(cfg.master_seed, index);
    let traj = cfg.environment.generate(cfg.horizon, seed)?;
    let gamma = cfg.discount();
    let mut learner = Learner::build(cfg, cfg.estimator, seed)?;
    let m = learner.num_experts();
    let t_max = traj.len();

    let mut records = Vec::with_capacity(t_max);
    let mut weights = Vec::new();
    let mut features: Vec<TransitionFeatures> = Vec::new();
    let mut pairs = vec![Vec::with_capacity(t_max); m];
    let mut be = vec![0.0_f64; m];
    let mut trace = vec![0.0; m];
    for t in 0..t_max {
        let (s, r, s_next) = (&traj.states[t], traj.rewards[t], &traj.states[t + 1]);
        let (pred, before) = learner.predict(s).map_err(at_slot(index, t + 1))?;
        let obs = learner
            .observe(s, r, s_next, gamma)
            .map_err(at_slot(index, t + 1))?;
        if m > 0 {
            let after = learner.expert_means(s).map_err(at_slot(index, t + 1))?;
            for k in 0..m {
                pairs[k].push((after[k], before[k]));
                be[k] = be[k].max(obs.experts[k].0.abs());
                trace[k] += obs.experts[k].1;
            }
        }
        records.push(SlotRecord {
            slot: t + 1,
            predicted_value: pred.mean,
            predicted_variance: pred.variance,
            reward: r,
            bellman_error: obs.bellman_error,
            prediction_error: f64::NAN,
        });
        if let Some(w) = obs.weights {
            weights.push(w);
        }
        if let Some(tf) = obs.features {
            features.push(tf);
        }
    }
    fill_prediction_errors(&mut records, gamma);

    let mut stability = Vec::with_capacity(m);
    for k in 0..m {
        let rep = online_stability_sum(&pairs[k], be[k], cfg.noise_var, trace[k]);
        if !rep.holds() {
            return Err(Error::InvariantViolation(format!(
                "trajectory {index}, expert {k}: online stability {} exceeds its cap {}",
                rep.mean_sq_change, rep.cap
            )));
        }
        stability.push(rep);
    }

    let error_ratio = match &learner {
        Learner::Single(model) if !features.is_empty() => {
            let theta = hindsight_theta(&features, cfg.noise_var, model.rf().spec().magnitude)?;
            let v_bar = empirical_values(&traj.rewards, gamma);
            let errors: Vec<f64> = records.iter().map(|r| r.prediction_error).collect();
            let best = (0..t_max)
                .map(|t| Ok(model.rf().feature_map(&traj.states[t])?.dot(&theta) - v_bar[t]))
                .collect::<Result<Vec<_>>>()?;
            Some(metrics::error_ratio(&errors, &best, gamma)?)
        }
        _ => None,
    };
    debug!("trajectory {index} done ({t_max} slots)");
    Ok(TrajectoryResult {
        index,
        seed,
        records,
        weights,
        stability,
        error_ratio,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs `f` on trajectories `0..n` in parallel; results come back in
/// index order, and the first failure by index wins.
fn for_trajectories<T: Send>(
    workers: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    pool(workers)?.install(|| {
        (0..n)
            .into_par_iter()
            .map(f)
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub trajectory: usize,
    pub expert: usize,
    pub kernel: KernelSpec,
    pub report: StabilityReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub estimator: EstimatorKind,
    pub environment: &'static str,
    pub curves: ErrorCurves,
    /// Last slot with negligible reward-to-go truncation bias.
    pub truncation_cut: usize,
    /// Trajectory-averaged weights per slot, for ensembles.
    pub weights: Option<Vec<DVector<f64>>>,
    pub kernels: Vec<KernelSpec>,
    pub stability: Vec<StabilityRow>,
    pub error_ratios: Vec<f64>,
    pub trajectories: Vec<TrajectoryResult>,
}

impl ExperimentOutput {
    pub fn final_prediction_error(&self) -> f64 {
        *self.curves.avg_prediction_error.last().unwrap_or(&f64::NAN)
    }

    pub fn final_bellman_error(&self) -> f64 {
        *self.curves.avg_bellman_error.last().unwrap_or(&f64::NAN)
    }

    pub fn final_weights(&self) -> Option<&DVector<f64>> {
        self.weights.as_ref().and_then(|w| w.last())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    info!(
        "{} on {}: {} trajectories of {} slots",
        cfg.estimator,
        cfg.environment.name(),
        cfg.num_trajectories,
        cfg.horizon
    );
    let trajectories = for_trajectories(cfg.workers, cfg.num_trajectories, |i| {
        run_trajectory(cfg, i)
    })?;
    let records: Vec<Vec<SlotRecord>> = trajectories.iter().map(|t| t.records.clone()).collect();
    let curves = avg_error_curves(&records)?;

    let kernels = match cfg.estimator {
        EstimatorKind::OsEgptd => cfg.kernels.clone(),
        _ => vec![cfg.primary_kernel()],
    };
    let weights = (cfg.estimator == EstimatorKind::OsEgptd).then(|| mean_weights(&trajectories));
    let stability = trajectories
        .iter()
        .flat_map(|t| {
            let kernels = &kernels;
            t.stability
                .iter()
                .enumerate()
                .map(move |(k, rep)| StabilityRow {
                    trajectory: t.index,
                    expert: k,
                    kernel: kernels[k],
                    report: *rep,
                })
        })
        .collect();
    let error_ratios = trajectories.iter().filter_map(|t| t.error_ratio).collect();
    Ok(ExperimentOutput {
        estimator: cfg.estimator,
        environment: cfg.environment.name(),
        truncation_cut: metrics::truncation_cut(curves.len(), cfg.discount(), TRUNCATION_TOLERANCE),
        curves,
        weights,
        kernels,
        stability,
        error_ratios,
        trajectories,
    })
}

fn mean_weights(trajectories: &[TrajectoryResult]) -> Vec<DVector<f64>> {
    let len = trajectories
        .iter()
        .map(|t| t.weights.len())
        .max()
        .unwrap_or(0);
    (0..len)
        .map(|t| {
            let present: Vec<&DVector<f64>> = trajectories
                .iter()
                .filter_map(|tr| tr.weights.get(t))
                .collect();
            let mut sum = present[0].clone() * 0.0;
            for w in &present {
                sum += *w;
            }
            sum / present.len() as f64
        })
        .collect()
}

/// Trajectory means of the regret quantities at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRow {
    pub horizon: usize,
    /// Against the exact GP posterior mean; NaN when that comparator is off.
    pub regret: f64,
    pub regret_r1: f64,
    pub bound: f64,
    pub be: f64,
    pub theta_star_norm: f64,
    pub trajectories: usize,
}

impl RegretRow {
    pub fn regret_over_log_t(&self) -> f64 {
        self.regret / (self.horizon as f64).ln()
    }
}

#[derive(Debug, Clone)]
pub struct RegretSweep {
    pub rows: Vec<RegretRow>,
    /// `per_trajectory[i][k]` is trajectory `i` at horizon `k`.
    pub per_trajectory: Vec<Vec<RegretReport>>,
    /// Same layout; online loss minus the exact-GP comparator loss.
    pub regret: Vec<Vec<f64>>,
}

/// Regret of the single-kernel learner at each horizon, each horizon being
/// a prefix of one long trajectory. Fails if any trajectory breaks the
/// bound.
pub fn run_regret_sweep(
    cfg: &ExperimentConfig,
    horizons: &[usize],
    exact_comparator: bool,
) -> Result<RegretSweep> {
    cfg.validate()?;
    check_horizons(horizons).map_err(|e| Error::Config(e.to_string()))?;
    let t_max = *horizons.last().expect("checked non-empty");
    let n = cfg.regret.num_trajectories.unwrap_or(cfg.num_trajectories);
    let gamma = cfg.discount();
    let spec = cfg.primary_kernel();
    let oracle = OracleConfig {
        max_slots: cfg.oracle_max_slots.max(t_max),
    };
    info!("regret sweep over {horizons:?} with {n} trajectories");

    let per: Vec<(Vec<RegretReport>, Vec<f64>)> = for_trajectories(cfg.workers, n, |i| {
        let seed = trajectory_seed(cfg.master_seed, i);
        let traj = cfg.environment.generate(t_max, seed)?;
        let mut learner = Learner::build(cfg, EstimatorKind::OsGptd, seed)?;
        let Learner::Single(model) = &mut learner else {
            unreachable!()
        };
        let mut features = Vec::with_capacity(traj.len());
        let mut means = Vec::with_capacity(traj.len());
        for t in 0..traj.len() {
            let tf = model
                .transition(&traj.states[t], traj.rewards[t], &traj.states[t + 1], gamma)
                .map_err(at_slot(i, t + 1))?;
            means.push(model.posterior().mean().clone());
            model.update(&tf).map_err(at_slot(i, t + 1))?;
            features.push(tf);
        }
        let mut reports = Vec::new();
        let mut regret = Vec::new();
        for &h in horizons.iter().filter(|&&h| h <= traj.len()) {
            let rep = regret_report(
                &features[..h],
                &means[..h],
                cfg.noise_var,
                spec.magnitude,
                cfg.num_features,
                gamma,
            )?;
            rep.check_regret_bound()
                .map_err(|e| Error::InvariantViolation(format!("trajectory {i}: {e}")))?;
            let r = if exact_comparator {
                let batch = traj.prefix(h).to_batch(gamma)?;
                rep.cumulative_online_loss
                    - metrics::exact_comparator_loss(spec, &batch, cfg.noise_var, oracle)?
            } else {
                f64::NAN
            };
            reports.push(rep);
            regret.push(r);
        }
        Ok((reports, regret))
    })?;

    let rows = horizons
        .iter()
        .enumerate()
        .filter_map(|(k, &h)| {
            let at: Vec<(&RegretReport, f64)> = per
                .iter()
                .filter_map(|(reps, rs)| reps.get(k).map(|r| (r, rs[k])))
                .collect();
            if at.is_empty() {
                return None;
            }
            let n = at.len() as f64;
            let mean = |f: &dyn Fn(&(&RegretReport, f64)) -> f64| at.iter().map(f).sum::<f64>() / n;
            Some(RegretRow {
                horizon: h,
                regret: mean(&|x| x.1),
                regret_r1: mean(&|x| x.0.regret_r1),
                bound: mean(&|x| x.0.regret_bound),
                be: mean(&|x| x.0.be),
                theta_star_norm: mean(&|x| x.0.theta_star_norm),
                trajectories: at.len(),
            })
        })
        .collect();
    let (per_trajectory, regret) = per.into_iter().unzip();
    Ok(RegretSweep {
        rows,
        per_trajectory,
        regret,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: EstimatorKind,
    /// First and last slot of the window, inclusive.
    pub window_start: usize,
    pub window_end: usize,
    pub median_seconds_per_slot: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Wall-clock seconds per slot (prediction plus correction) in windows of
/// `bench.window` slots, median over trajectories. Runs sequentially so
/// methods do not compete for cores.
pub fn runtime_bench(cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let b = &cfg.bench;
    let gamma = cfg.discount();
    let mut rows = Vec::new();
    for &method in &b.methods {
        let horizon = if method == EstimatorKind::BatchOracle {
            b.oracle_horizon
        } else {
            b.horizon
        };
        info!("timing {method} over {horizon} slots");
        let mut per_traj: Vec<Vec<f64>> = Vec::new();
        for i in 0..b.num_trajectories {
            let seed = trajectory_seed(cfg.master_seed, i);
            let traj = cfg.environment.generate(horizon, seed)?;
            let mut learner = Learner::build(cfg, method, seed)?;
            let mut times = Vec::with_capacity(traj.len());
            for t in 0..traj.len() {
                let (s, r, s_next) = (&traj.states[t], traj.rewards[t], &traj.states[t + 1]);
                let start = Instant::now();
                learner.predict(s).map_err(at_slot(i, t + 1))?;
                learner
                    .observe(s, r, s_next, gamma)
                    .map_err(at_slot(i, t + 1))?;
                times.push(start.elapsed().as_secs_f64());
            }
            per_traj.push(times);
        }
        let len = per_traj.iter().map(Vec::len).min().unwrap_or(0);
        for start in (0..len).step_by(b.window) {
            let end = (start + b.window).min(len);
            let window_means = per_traj
                .iter()
                .map(|times| times[start..end].iter().sum::<f64>() / (end - start) as f64)
                .collect();
            rows.push(TimingRow {
                method,
                window_start: start + 1,
                window_end: end,
                median_seconds_per_slot: median(window_means),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{EnvironmentConfig, PuddleWorldConfig, RandomWalkConfig};

    fn small(estimator: EstimatorKind) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentConfig::RandomWalk(RandomWalkConfig {
                num_states: 7,
                state_dim: 3,
                ..Default::default()
            }),
            estimator,
            num_features: 8,
            num_trajectories: 3,
            horizon: 40,
            master_seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn experiment_shapes_and_determinism() {
        let cfg = small(EstimatorKind::OsEgptd);
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.curves.len(), 40);
        assert_eq!(a.stability.len(), 9);
        let w = a.final_weights().unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        let b = run_experiment(&ExperimentConfig { workers: 2, ..cfg }).unwrap();
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn records_are_predicted_before_the_update() {
        let cfg = small(EstimatorKind::OsGptd);
        let res = run_trajectory(&cfg, 0).unwrap();
        // the prior predicts zero with unit variance at the first slot
        assert_eq!(res.records[0].predicted_value, 0.0);
        assert!((res.records[0].predicted_variance - 1.0).abs() < 1e-12);
        assert!(res.records[1].predicted_variance < 1.0);
        assert!(res.error_ratio.unwrap().is_finite());
    }

    #[test]
    fn single_kernel_ensemble_reproduces_single_learner() {
        let single = ExperimentConfig {
            kernels: vec![KernelSpec::gaussian(0.7).unwrap()],
            ..small(EstimatorKind::OsGptd)
        };
        let ensemble = ExperimentConfig {
            estimator: EstimatorKind::OsEgptd,
            ..single.clone()
        };
        let a = run_experiment(&single).unwrap();
        let b = run_experiment(&ensemble).unwrap();
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn oracle_runs_and_matches_trajectory_length() {
        let cfg = ExperimentConfig {
            horizon: 15,
            num_trajectories: 1,
            ..small(EstimatorKind::BatchOracle)
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.curves.len(), 15);
        assert!(out.stability.is_empty());
    }

    #[test]
    fn terminating_puddle_runs_produce_ragged_curves() {
        let cfg = ExperimentConfig {
            environment: EnvironmentConfig::PuddleWorld(PuddleWorldConfig {
                episodic_restart: false,
                ..Default::default()
            }),
            kernels: vec![KernelSpec::gaussian(1.0).unwrap()],
            num_features: 10,
            noise_var: 0.001,
            num_trajectories: 4,
            horizon: 500,
            ..Default::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.curves.len() < 500);
        assert!(out.curves.counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn regret_sweep_rows() {
        let cfg = small(EstimatorKind::OsGptd);
        let sweep = run_regret_sweep(&cfg, &[10], true).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        assert!(sweep.rows[0].bound >= sweep.rows[0].regret_r1);

        let sweep = run_regret_sweep(&cfg, &[10, 20, 40], true).unwrap();
        let bounds: Vec<f64> = sweep.rows.iter().map(|r| r.bound).collect();
        assert_eq!(sweep.per_trajectory.len(), 3);
        for reps in &sweep.per_trajectory {
            assert!(reps
                .windows(2)
                .all(|w| w[0].regret_bound < w[1].regret_bound));
        }
        assert!(bounds.iter().all(|b| b.is_finite()));
        assert!(run_regret_sweep(&cfg, &[20, 10], true).is_err());
    }

    #[test]
    fn bench_reports_every_window() {
        let mut cfg = small(EstimatorKind::OsGptd);
        cfg.bench.horizon = 30;
        cfg.bench.oracle_horizon = 10;
        cfg.bench.window = 10;
        cfg.bench.num_trajectories = 2;
        let rows = runtime_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 3 + 3 + 1);
        assert!(rows.iter().all(|r| r.median_seconds_per_slot > 0.0));
        assert_eq!((rows[2].window_start, rows[2].window_end), (21, 30));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
