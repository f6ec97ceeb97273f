//! Monte Carlo validation: steady-state error probabilities, empirical moments
//! of the log-belief ratios, exponent-slope fits and the forward/reversed
//! partial-sum comparison.
//!
//! Repetition `r` at grid index `j` draws from the counter-based stream
//! `(base_seed, MC_STREAM_BASE + j, r)`; per-repetition results are reduced in
//! repetition order, so estimates do not depend on the worker count.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::decide;
use crate::error::{Error, Result};
use crate::graph::CombinationMatrix;
use crate::models::LikelihoodModel;
use crate::rng::{stream_rng, MC_STREAM_BASE};

/// Default horizon multiplier: steady state is taken as `i >= 10/delta`.
pub const DEFAULT_HORIZON_FACTOR: f64 = 10.0;
/// Minimum number of error events for a grid point to enter the slope fit.
pub const MIN_EVENTS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPlan {
    pub deltas: Vec<f64>,
    pub reps: usize,
    /// Horizon is `ceil(horizon_factor / delta)`.
    pub horizon_factor: f64,
    pub base_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl McPlan {
    pub fn new(deltas: Vec<f64>, reps: usize, base_seed: u64) -> Self {
        McPlan { deltas, reps, horizon_factor: DEFAULT_HORIZON_FACTOR, base_seed, workers: None }
    }

    pub fn horizon(&self, delta: f64) -> usize {
        (self.horizon_factor / delta).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Plan("repetitions must be at least 1".into()));
        }
        if self.deltas.is_empty() {
            return Err(Error::Plan("empty step-size grid".into()));
        }
        for &d in &self.deltas {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Plan(format!("step size {d} outside (0, 1)")));
            }
            if (self.horizon(d) as f64) < 1.0 / d {
                return Err(Error::Plan(format!("horizon {} below 1/delta = {}", self.horizon(d), 1.0 / d)));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Plan("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// Results at one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub delta: f64,
    pub horizon: usize,
    pub reps: usize,
    /// Decision errors per agent.
    pub errors: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `below[k][theta]`: repetitions with `lambda_k(theta) <= 0`.
    pub below: Vec<Vec<usize>>,
    /// Mean final `lambda[k][theta]` against `theta0`.
    pub mean_lambda: Vec<Vec<f64>>,
    /// Sample covariance of the final `lambda_k`, `H x H` per agent.
    pub cov_lambda: Vec<DMatrix<f64>>,
}

/// Final log-belief ratios of one ASL trajectory from uniform priors.
pub fn final_log_ratios<M: LikelihoodModel + ?Sized>(
    model: &M,
    a: &CombinationMatrix,
    theta0: usize,
    delta: f64,
    horizon: usize,
    seed: u64,
    family: u32,
    index: u32,
) -> Vec<Vec<f64>> {
    let n = model.n_agents();
    let h = model.n_hypotheses();
    let mut rng = stream_rng(seed, family, index);
    let mut lambda = vec![0.0; n * h];
    let mut pre = vec![0.0; n * h];
    let am = a.matrix();
    let q = 1.0 - delta;
    for _ in 0..horizon {
        for l in 0..n {
            let xi = model.sample(l, theta0, &mut rng);
            let base = model.log_likelihood(l, xi, theta0);
            for th in 0..h {
                let x = base - model.log_likelihood(l, xi, th);
                pre[l * h + th] = q * lambda[l * h + th] + delta * x;
            }
        }
        for k in 0..n {
            for th in 0..h {
                let mut acc = 0.0;
                for l in 0..n {
                    let w = am[(l, k)];
                    if w != 0.0 {
                        acc += w * pre[l * h + th];
                    }
                }
                lambda[k * h + th] = acc;
            }
        }
    }
    lambda.chunks(h).map(<[f64]>::to_vec).collect()
}

/// Decision implied by log-ratios against `theta0`: maximize `-lambda`
/// with the lowest-index tie-break.
pub fn decision_from_ratios(lambda_row: &[f64]) -> usize {
    let neg: Vec<f64> = lambda_row.iter().map(|v| -v).collect();
    decide(&neg)
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Plan(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Run every grid point of the plan; error event is `decide(final beliefs) != theta0`.
pub fn estimate_error_probability<M: LikelihoodModel + ?Sized>(
    model: &M,
    a: &CombinationMatrix,
    theta0: usize,
    plan: &McPlan,
) -> Result<Vec<McEstimate>> {
    plan.validate()?;
    if a.n() != model.n_agents() {
        return Err(Error::Parameter("matrix size and agent count differ".into()));
    }
    if theta0 >= model.n_hypotheses() {
        return Err(Error::Parameter(format!("true hypothesis {} out of range", theta0 + 1)));
    }
    let mut out = Vec::with_capacity(plan.deltas.len());
    for (j, &delta) in plan.deltas.iter().enumerate() {
        let horizon = plan.horizon(delta);
        let finals: Vec<Vec<Vec<f64>>> = with_pool(plan.workers, || {
            (0..plan.reps)
                .into_par_iter()
                .map(|r| {
                    final_log_ratios(
                        model,
                        a,
                        theta0,
                        delta,
                        horizon,
                        plan.base_seed,
                        MC_STREAM_BASE + j as u32,
                        r as u32,
                    )
                })
                .collect()
        })?;
        out.push(aggregate(delta, horizon, theta0, &finals));
    }
    Ok(out)
}

/// Ordered reduction of per-repetition final log-ratios.
pub fn aggregate(delta: f64, horizon: usize, theta0: usize, finals: &[Vec<Vec<f64>>]) -> McEstimate {
    let reps = finals.len();
    let n = finals[0].len();
    let h = finals[0][0].len();
    let mut errors = vec![0usize; n];
    let mut below = vec![vec![0usize; h]; n];
    let mut mean = vec![vec![0.0; h]; n];
    for rep in finals {
        for k in 0..n {
            if decision_from_ratios(&rep[k]) != theta0 {
                errors[k] += 1;
            }
            for th in 0..h {
                if th != theta0 && rep[k][th] <= 0.0 {
                    below[k][th] += 1;
                }
                mean[k][th] += rep[k][th];
            }
        }
    }
    mean.iter_mut().flatten().for_each(|v| *v /= reps as f64);
    let cov_lambda = (0..n)
        .map(|k| {
            let mut c = DMatrix::zeros(h, h);
            if reps > 1 {
                for rep in finals {
                    for i in 0..h {
                        for j in 0..h {
                            c[(i, j)] += (rep[k][i] - mean[k][i]) * (rep[k][j] - mean[k][j]);
                        }
                    }
                }
                c /= (reps - 1) as f64;
            }
            c
        })
        .collect();
    let p_hat: Vec<f64> = errors.iter().map(|&e| e as f64 / reps as f64).collect();
    let stderr = p_hat.iter().map(|p| (p * (1.0 - p) / reps as f64).sqrt()).collect();
    McEstimate { delta, horizon, reps, errors, p_hat, stderr, below, mean_lambda: mean, cov_lambda }
}

/// Comparison of the empirical steady state with the small-step Gaussian
/// description `N(m_ave, delta C_ave / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub delta: f64,
    pub agent: usize,
    pub mean: Vec<f64>,
    /// Standard error of each mean component.
    pub mean_se: Vec<f64>,
    /// `(mean - m_ave) / sqrt(delta c_ave(theta,theta) / 2 / reps)`.
    pub standardized_residual: Vec<f64>,
    /// `|| cov * 2/delta - C_ave ||_F / || C_ave ||_F`.
    pub covariance_relative_error: f64,
}

pub fn empirical_steady_state_moments(
    estimates: &[McEstimate],
    m_ave: &[f64],
    c_ave: &DMatrix<f64>,
    theta0: usize,
) -> Vec<MomentReport> {
    let mut out = Vec::new();
    for est in estimates {
        for (k, mean) in est.mean_lambda.iter().enumerate() {
            let h = mean.len();
            let cov = &est.cov_lambda[k];
            let mean_se: Vec<f64> = (0..h).map(|t| (cov[(t, t)] / est.reps as f64).sqrt()).collect();
            let standardized_residual = (0..h)
                .map(|t| {
                    if t == theta0 {
                        return 0.0;
                    }
                    let s = (est.delta * c_ave[(t, t)] / 2.0 / est.reps as f64).sqrt();
                    (mean[t] - m_ave[t]) / s
                })
                .collect();
            let scaled = cov * (2.0 / est.delta);
            let covariance_relative_error = (&scaled - c_ave).norm() / c_ave.norm();
            out.push(MomentReport {
                delta: est.delta,
                agent: k,
                mean: mean.clone(),
                mean_se,
                standardized_residual,
                covariance_relative_error,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub used: usize,
}

/// Least-squares fit of `log p_hat` against `1/delta` over the points with
/// at least `MIN_EVENTS` observed errors. Input rows are `(delta, p_hat, reps)`.
pub fn exponent_slope(points: &[(f64, f64, usize)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, p, reps)| *p > 0.0 && p * *reps as f64 >= MIN_EVENTS)
        .map(|(d, p, _)| (1.0 / d, p.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData { usable: usable.len(), required: 3 });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = usable.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, stderr, intercept, used: usable.len() })
}

/// Weighted partial sums of one data sequence: the adaptation order
/// `delta sum_j (1-delta)^(i-j) x_j` (newest sample weighted most) and the
/// reversed order `delta sum_j (1-delta)^(j-1) x_j` (newest weighted least).
pub fn partial_sums(x: &[f64], delta: f64) -> (Vec<f64>, Vec<f64>) {
    let q = 1.0 - delta;
    let mut forward = Vec::with_capacity(x.len());
    let mut reversed = Vec::with_capacity(x.len());
    let (mut f, mut r, mut w) = (0.0, 0.0, delta);
    for &xi in x {
        f = q * f + delta * xi;
        r += w * xi;
        w *= q;
        forward.push(f);
        reversed.push(r);
    }
    (forward, reversed)
}

/// Partial sums on the log-likelihood ratios of one agent's data.
pub fn reversed_sum_comparison<M: LikelihoodModel + ?Sized>(
    model: &M,
    agent: usize,
    theta0: usize,
    theta: usize,
    delta: f64,
    horizon: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta == theta0 {
        return Err(Error::DegeneratePair(theta + 1));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("step size must lie in (0, 1), got {delta}")));
    }
    let mut rng = stream_rng(seed, 0, 0);
    let x: Vec<f64> = (0..horizon)
        .map(|_| {
            let xi = model.sample(agent, theta0, &mut rng);
            model.log_likelihood(agent, xi, theta0) - model.log_likelihood(agent, xi, theta)
        })
        .collect();
    Ok(partial_sums(&x, delta))
}

pub const RESULTS_CSV_HEADER: &str = "delta,agent,p_hat,stderr,reps,horizon";
pub const MOMENTS_CSV_HEADER: &str = "delta,agent,theta,mean_lambda";
pub const COVARIANCE_CSV_HEADER: &str = "delta,agent,theta,theta_prime,covariance";

/// Error-probability table, 1-based agents.
pub fn results_csv(estimates: &[McEstimate]) -> String {
    let mut out = format!("{RESULTS_CSV_HEADER}\n");
    for e in estimates {
        for k in 0..e.p_hat.len() {
            out.push_str(&format!(
                "{:.10e},{},{:.10e},{:.10e},{},{}\n",
                e.delta,
                k + 1,
                e.p_hat[k],
                e.stderr[k],
                e.reps,
                e.horizon
            ));
        }
    }
    out
}

/// Mean final log-ratios (1-based agents and hypotheses; `theta0` omitted).
pub fn moments_csv(estimates: &[McEstimate], theta0: usize) -> String {
    let mut out = format!("{MOMENTS_CSV_HEADER}\n");
    for e in estimates {
        for (k, row) in e.mean_lambda.iter().enumerate() {
            for (th, v) in row.iter().enumerate().filter(|(t, _)| *t != theta0) {
                out.push_str(&format!("{:.10e},{},{},{:.10e}\n", e.delta, k + 1, th + 1, v));
            }
        }
    }
    out
}

pub fn covariance_csv(estimates: &[McEstimate], theta0: usize) -> String {
    let mut out = format!("{COVARIANCE_CSV_HEADER}\n");
    for e in estimates {
        for (k, c) in e.cov_lambda.iter().enumerate() {
            for i in (0..c.nrows()).filter(|&i| i != theta0) {
                for j in (0..c.ncols()).filter(|&j| j != theta0) {
                    out.push_str(&format!("{:.10e},{},{},{},{:.10e}\n", e.delta, k + 1, i + 1, j + 1, c[(i, j)]));
                }
            }
        }
    }
    out
}
