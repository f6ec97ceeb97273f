//! Belief-update recursions: traditional social learning, adaptive social
//! learning (ASL) and the flattened-belief ASL variant.
//!
//! Every product and power runs in the log domain; probabilities are only
//! materialized for output. Each step is an intermediate update at every
//! agent followed by geometric-average combination over the network:
//!
//! ```text
//! log psi_k(theta)   = w_prior * log mu_{k,i-1}(theta) + w_data * log L_k(xi_{k,i} | theta) + c
//! log mu_{k,i}(theta) = sum_l a[l][k] * log psi_l(theta) + c'
//! ```
//!
//! with `(w_prior, w_data)` equal to `(1, 1)` for traditional learning,
//! `(1 - delta, delta)` for ASL and `(1 - delta, 1)` for the flattened variant.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CombinationMatrix;
use crate::models::LikelihoodModel;
use crate::numerics::{log_sum_exp, softmax};
use crate::rng::{stream_rng, OBSERVATION_STREAM};

/// Which update rule the agents run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Traditional,
    Asl { delta: f64 },
    AslFlattened { delta: f64 },
}

impl StrategyKind {
    pub fn asl(delta: f64) -> Result<Self> {
        check_step_size(delta)?;
        Ok(StrategyKind::Asl { delta })
    }

    pub fn flattened(delta: f64) -> Result<Self> {
        check_step_size(delta)?;
        Ok(StrategyKind::AslFlattened { delta })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategyKind::Traditional => Ok(()),
            StrategyKind::Asl { delta } | StrategyKind::AslFlattened { delta } => check_step_size(delta),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match *self {
            StrategyKind::Traditional => None,
            StrategyKind::Asl { delta } | StrategyKind::AslFlattened { delta } => Some(delta),
        }
    }

    /// Exponents `(w_prior, w_data)` of the intermediate update.
    pub fn weights(&self) -> (f64, f64) {
        match *self {
            StrategyKind::Traditional => (1.0, 1.0),
            StrategyKind::Asl { delta } => (1.0 - delta, delta),
            StrategyKind::AslFlattened { delta } => (1.0 - delta, 1.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Traditional => "traditional",
            StrategyKind::Asl { .. } => "asl",
            StrategyKind::AslFlattened { .. } => "asl_flattened",
        }
    }
}

fn check_step_size(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("step size must lie in (0, 1), got {delta}")))
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Parameter(format!("{what} must be strictly positive and finite")));
    }
    Ok(())
}

fn weighted_update(prev: &[f64], likelihood: &[f64], w_prior: f64, w_data: f64) -> Result<Vec<f64>> {
    if prev.len() != likelihood.len() {
        return Err(Error::Parameter("belief and likelihood rows differ in length".into()));
    }
    check_row(prev, "prior belief")?;
    if let Some(h) = likelihood.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::SupportViolation { hypothesis: h + 1 });
    }
    let logs: Vec<f64> = prev.iter().zip(likelihood).map(|(p, l)| w_prior * p.ln() + w_data * l.ln()).collect();
    Ok(softmax(&logs))
}

/// ASL intermediate update: `psi ∝ mu^(1-delta) * L^delta`.
pub fn adaptive_update(prev: &[f64], likelihood: &[f64], delta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Parameter(format!("step size must lie in [0, 1], got {delta}")));
    }
    weighted_update(prev, likelihood, 1.0 - delta, delta)
}

/// Bayesian update `psi ∝ mu * L`.
pub fn bayesian_update(prev: &[f64], likelihood: &[f64]) -> Result<Vec<f64>> {
    weighted_update(prev, likelihood, 1.0, 1.0)
}

/// Flatten the prior (`mu^(1-delta)`), then apply Bayes' rule.
pub fn flattened_update(prev: &[f64], likelihood: &[f64], delta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Parameter(format!("step size must lie in [0, 1], got {delta}")));
    }
    weighted_update(prev, likelihood, 1.0 - delta, 1.0)
}

/// Argmax with ties broken toward the lowest index.
pub fn decide(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Probability-domain beliefs `mu[k][theta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub beliefs: Vec<Vec<f64>>,
    pub step: usize,
}

impl BeliefState {
    pub fn uniform(n_agents: usize, n_hyp: usize) -> Self {
        BeliefState { beliefs: vec![vec![1.0 / n_hyp as f64; n_hyp]; n_agents], step: 0 }
    }

    pub fn decisions(&self) -> Vec<usize> {
        self.beliefs.iter().map(|r| decide(r)).collect()
    }
}

/// Geometric-average combination of intermediate beliefs.
pub fn combine(psi: &[Vec<f64>], a: &CombinationMatrix) -> Result<BeliefState> {
    if psi.len() != a.n() {
        return Err(Error::Parameter(format!("{} belief rows for a {}-agent matrix", psi.len(), a.n())));
    }
    for row in psi {
        check_row(row, "intermediate belief")?;
    }
    let logs: Vec<Vec<f64>> = psi.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let h = psi[0].len();
    let beliefs = (0..a.n())
        .map(|k| {
            let row: Vec<f64> = (0..h).map(|th| (0..a.n()).map(|l| a.get(l, k) * logs[l][th]).sum()).collect();
            softmax(&row)
        })
        .collect();
    Ok(BeliefState { beliefs, step: 0 })
}

/// Unnormalized log-beliefs with the per-agent maximum pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBeliefState {
    n_agents: usize,
    n_hyp: usize,
    logb: Vec<f64>,
    pub step: usize,
}

impl LogBeliefState {
    pub fn uniform(n_agents: usize, n_hyp: usize) -> Self {
        LogBeliefState { n_agents, n_hyp, logb: vec![0.0; n_agents * n_hyp], step: 0 }
    }

    pub fn from_beliefs(state: &BeliefState) -> Result<Self> {
        let n_hyp = state.beliefs.first().map(Vec::len).unwrap_or(0);
        let mut logb = Vec::with_capacity(state.beliefs.len() * n_hyp);
        for row in &state.beliefs {
            check_row(row, "belief")?;
            logb.extend(row.iter().map(|p| p.ln()));
        }
        let mut out = LogBeliefState { n_agents: state.beliefs.len(), n_hyp, logb, step: state.step };
        out.pin();
        Ok(out)
    }

    /// Start from prescribed log-belief ratios `lambda[k][theta]` against `reference`.
    pub fn from_log_ratios(lambda: &[Vec<f64>], reference: usize) -> Self {
        let n_hyp = lambda[0].len();
        let logb = lambda.iter().flat_map(|r| r.iter().map(|v| -v + r[reference])).collect();
        let mut out = LogBeliefState { n_agents: lambda.len(), n_hyp, logb, step: 0 };
        out.pin();
        out
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_hypotheses(&self) -> usize {
        self.n_hyp
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.logb[k * self.n_hyp..(k + 1) * self.n_hyp]
    }

    fn pin(&mut self) {
        for row in self.logb.chunks_mut(self.n_hyp) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v -= m);
        }
    }

    pub fn beliefs(&self) -> BeliefState {
        BeliefState { beliefs: self.logb.chunks(self.n_hyp).map(softmax).collect(), step: self.step }
    }

    pub fn belief_row(&self, k: usize) -> Vec<f64> {
        softmax(self.row(k))
    }

    pub fn decisions(&self) -> Vec<usize> {
        self.logb.chunks(self.n_hyp).map(decide).collect()
    }

    /// `lambda[k][theta] = log mu_k(reference) - log mu_k(theta)`.
    pub fn log_ratios(&self, reference: usize) -> Vec<Vec<f64>> {
        self.logb.chunks(self.n_hyp).map(|r| r.iter().map(|v| r[reference] - v).collect()).collect()
    }

    /// One full step (intermediate update then combination) given one
    /// observation per agent.
    pub fn step<M: LikelihoodModel + ?Sized>(
        &mut self,
        model: &M,
        strategy: StrategyKind,
        observations: &[f64],
        a: &CombinationMatrix,
    ) -> Result<()> {
        let (w_prior, w_data) = strategy.weights();
        let (n, h) = (self.n_agents, self.n_hyp);
        if observations.len() != n || a.n() != n {
            return Err(Error::Parameter("observation count, matrix size and agent count must agree".into()));
        }
        let mut psi = vec![0.0; n * h];
        for k in 0..n {
            let xi = observations[k];
            let row = &mut psi[k * h..(k + 1) * h];
            for th in 0..h {
                let ll = model.log_likelihood(k, xi, th);
                if !ll.is_finite() {
                    return Err(Error::SupportViolation { hypothesis: th + 1 });
                }
                row[th] = w_prior * self.logb[k * h + th] + w_data * ll;
            }
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let m = a.matrix();
        for k in 0..n {
            for th in 0..h {
                let mut acc = 0.0;
                for l in 0..n {
                    let w = m[(l, k)];
                    if w != 0.0 {
                        acc += w * psi[l * h + th];
                    }
                }
                self.logb[k * h + th] = acc;
            }
        }
        self.pin();
        self.step += 1;
        if self.logb.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite log-belief after update".into()));
        }
        Ok(())
    }
}

/// Log-belief ratios `lambda[k][theta]` against a fixed reference hypothesis
/// (the reference column stays zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatioState {
    pub reference: usize,
    pub lambda: Vec<Vec<f64>>,
}

impl LogRatioState {
    pub fn zeros(n_agents: usize, n_hyp: usize, reference: usize) -> Self {
        LogRatioState { reference, lambda: vec![vec![0.0; n_hyp]; n_agents] }
    }
}

/// Log-likelihood ratios `x[k][theta] = log L_k(xi_k|reference) - log L_k(xi_k|theta)`.
pub fn llr_row<M: LikelihoodModel + ?Sized>(model: &M, observations: &[f64], reference: usize) -> Vec<Vec<f64>> {
    observations
        .iter()
        .enumerate()
        .map(|(k, &xi)| {
            let base = model.log_likelihood(k, xi, reference);
            (0..model.n_hypotheses()).map(|th| base - model.log_likelihood(k, xi, th)).collect()
        })
        .collect()
}

/// Affine recursion `lambda_k = sum_l a[l][k] (w_prior lambda_l + w_data x_l)`;
/// for ASL `(w_prior, w_data) = (1 - delta, delta)`.
pub fn log_ratio_recursion_step(
    state: &LogRatioState,
    x: &[Vec<f64>],
    strategy: StrategyKind,
    a: &CombinationMatrix,
) -> LogRatioState {
    let (w_prior, w_data) = strategy.weights();
    weighted_ratio_step(state, x, w_prior, w_data, a)
}

/// Same recursion with an explicit step size, accepting the endpoints 0 and 1.
pub fn log_ratio_recursion_step_delta(
    state: &LogRatioState,
    x: &[Vec<f64>],
    delta: f64,
    a: &CombinationMatrix,
) -> LogRatioState {
    weighted_ratio_step(state, x, 1.0 - delta, delta, a)
}

fn weighted_ratio_step(
    state: &LogRatioState,
    x: &[Vec<f64>],
    w_prior: f64,
    w_data: f64,
    a: &CombinationMatrix,
) -> LogRatioState {
    let n = a.n();
    let h = state.lambda[0].len();
    let lambda = (0..n)
        .map(|k| {
            (0..h)
                .map(|th| (0..n).map(|l| a.get(l, k) * (w_prior * state.lambda[l][th] + w_data * x[l][th])).sum())
                .collect()
        })
        .collect();
    LogRatioState { reference: state.reference, lambda }
}

/// Regime labels attached to a recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabels {
    pub hypothesis: usize,
    pub matrix: usize,
    pub functioning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub beliefs: Vec<Vec<f64>>,
    pub decisions: Vec<usize>,
    pub regime: RegimeLabels,
}

/// Recorded trajectory; `decisions[k] = decide(beliefs[k])` at every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub config_hash: String,
    pub strategy: StrategyKind,
    pub steps: Vec<TrajectoryStep>,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "step,agent,hypothesis,belief,decision,regime_hypothesis,regime_matrix,regime_functioning";

impl TrajectoryRecord {
    /// CSV body (header line included), 1-based agents, hypotheses and regimes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            for (k, row) in s.beliefs.iter().enumerate() {
                for (th, p) in row.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{:.12e},{},{},{},{}\n",
                        s.step,
                        k + 1,
                        th + 1,
                        p,
                        s.decisions[k] + 1,
                        s.regime.hypothesis + 1,
                        s.regime.matrix + 1,
                        s.regime.functioning + 1
                    ));
                }
            }
        }
        out
    }

    /// Decision of agent `k` at every recorded step.
    pub fn decisions_of(&self, k: usize) -> Vec<usize> {
        self.steps.iter().map(|s| s.decisions[k]).collect()
    }
}

/// Piecewise-constant true hypothesis: `(first_step, theta0)` pairs, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSchedule(pub Vec<(usize, usize)>);

impl HypothesisSchedule {
    pub fn constant(theta0: usize) -> Self {
        HypothesisSchedule(vec![(1, theta0)])
    }

    /// Hypothesis in force at step `i` (1-based).
    pub fn at(&self, i: usize) -> usize {
        self.0.iter().take_while(|(start, _)| *start <= i).last().map(|p| p.1).unwrap_or(self.0[0].1)
    }
}

/// Options for a single stationary (or scripted) run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: usize,
    pub seed: u64,
    /// Record every `thin`-th step (step 0 and the last step always recorded).
    pub thin: usize,
    pub initial: Option<LogBeliefState>,
    pub config_hash: String,
}

/// Draw one observation per agent under `theta0`.
pub fn draw_observations<M: LikelihoodModel + ?Sized>(
    model: &M,
    theta0: usize,
    rng: &mut dyn RngCore,
    out: &mut [f64],
) {
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = model.sample(k, theta0, rng);
    }
}

/// Run one seeded trajectory under a scripted hypothesis schedule.
pub fn simulate<M: LikelihoodModel + ?Sized>(
    model: &M,
    a: &CombinationMatrix,
    strategy: StrategyKind,
    schedule: &HypothesisSchedule,
    opts: &RunOptions,
) -> Result<TrajectoryRecord> {
    strategy.validate()?;
    if opts.horizon < 1 {
        return Err(Error::Plan("horizon must be at least 1".into()));
    }
    let thin = opts.thin.max(1);
    let n = model.n_agents();
    let mut state = opts.initial.clone().unwrap_or_else(|| LogBeliefState::uniform(n, model.n_hypotheses()));
    let mut rng = stream_rng(opts.seed, OBSERVATION_STREAM, 0);
    let mut obs = vec![0.0; n];
    let record = |state: &LogBeliefState, theta0: usize| TrajectoryStep {
        step: state.step,
        beliefs: state.beliefs().beliefs,
        decisions: state.decisions(),
        regime: RegimeLabels { hypothesis: theta0, matrix: 0, functioning: 0 },
    };
    let mut steps = vec![record(&state, schedule.at(1))];
    for i in 1..=opts.horizon {
        let theta0 = schedule.at(i);
        draw_observations(model, theta0, &mut rng, &mut obs);
        state.step(model, strategy, &obs, a)?;
        if i % thin == 0 || i == opts.horizon {
            steps.push(record(&state, theta0));
        }
    }
    Ok(TrajectoryRecord { seed: opts.seed, config_hash: opts.config_hash.clone(), strategy, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_averaging_matrix, Adjacency};
    use crate::models::LaplaceFamily;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn adaptive_update_examples() {
        let prev = [0.2, 0.3, 0.5];
        let lik = [0.9, 0.05, 0.4];
        assert!(close(&adaptive_update(&prev, &lik, 1e-12).unwrap(), &prev, 1e-9));

        let (p, q, d) = (0.3f64, 0.7f64, 0.25);
        let psi = adaptive_update(&[0.5, 0.5], &[p, q], d).unwrap();
        let z = p.powf(d) + q.powf(d);
        assert!(close(&psi, &[p.powf(d) / z, q.powf(d) / z], 1e-15));

        let psi = adaptive_update(&prev, &lik, 1.0).unwrap();
        let s: f64 = lik.iter().sum();
        assert!(close(&psi, &lik.map(|l| l / s), 1e-15));

        assert_eq!(adaptive_update(&prev, &[0.1, 0.0, 0.2], 0.1), Err(Error::SupportViolation { hypothesis: 2 }));
    }

    #[test]
    fn bayesian_update_examples() {
        assert!(close(&bayesian_update(&[0.5, 0.5], &[0.2, 0.8]).unwrap(), &[0.2, 0.8], 1e-15));
        let prev = [0.1, 0.6, 0.3];
        assert!(close(&bayesian_update(&prev, &[0.4, 0.4, 0.4]).unwrap(), &prev, 1e-15));
        let lik = [1.0, 3.0, 4.0];
        assert!(close(&bayesian_update(&[1.0 / 3.0; 3], &lik).unwrap(), &[0.125, 0.375, 0.5], 1e-15));
    }

    #[test]
    fn flattened_update_examples() {
        let prev = [0.15, 0.85];
        let lik = [0.6, 0.2];
        assert_eq!(flattened_update(&prev, &lik, 0.0).unwrap(), bayesian_update(&prev, &lik).unwrap());
        for d in [0.1, 0.7] {
            assert!(close(&flattened_update(&[0.5, 0.5], &lik, d).unwrap(), &[0.75, 0.25], 1e-15));
        }
        // H = 2 closed form: mu^(1-d) L normalized
        let d = 0.4;
        let u = [prev[0].powf(1.0 - d) * lik[0], prev[1].powf(1.0 - d) * lik[1]];
        let z = u[0] + u[1];
        assert!(close(&flattened_update(&prev, &lik, d).unwrap(), &[u[0] / z, u[1] / z], 1e-15));
    }

    #[test]
    fn combine_examples() {
        let id = CombinationMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let psi = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let out = combine(&psi, &id).unwrap();
        assert!(close(&out.beliefs[0], &psi[0], 1e-15) && close(&out.beliefs[1], &psi[1], 1e-15));

        let half = CombinationMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let same = vec![vec![0.2, 0.8], vec![0.2, 0.8]];
        assert!(close(&combine(&same, &half).unwrap().beliefs[1], &[0.2, 0.8], 1e-15));

        let out = combine(&[vec![0.9, 0.1], vec![0.1, 0.9]], &half).unwrap();
        for row in &out.beliefs {
            assert!(close(row, &[0.5, 0.5], 1e-15));
        }
    }

    #[test]
    fn decide_breaks_ties_low() {
        assert_eq!(decide(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(decide(&[0.5, 0.5]), 0);
        assert_eq!(decide(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn ratio_recursion_examples() {
        let adj = Adjacency::undirected_with_self_loops(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let a = crate::graph::build_laplacian_matrix(&adj).unwrap();
        let c = 1.7;
        let delta = 0.2;
        let mut st = LogRatioState { reference: 0, lambda: vec![vec![0.0, c]; 3] };
        let zeros = vec![vec![0.0, 0.0]; 3];
        for i in 1..=25 {
            st = log_ratio_recursion_step_delta(&st, &zeros, delta, &a);
            for row in &st.lambda {
                assert!((row[1] - (1.0 - delta).powi(i) * c).abs() < 1e-12);
            }
        }
        let x = vec![vec![0.0, 0.3], vec![0.0, -0.2], vec![0.0, 1.1]];
        let memoryless = log_ratio_recursion_step_delta(&st, &x, 1.0, &a);
        let from_zero = log_ratio_recursion_step_delta(&LogRatioState::zeros(3, 2, 0), &x, delta, &a);
        let combined = a.combine_vector(&[0.3, -0.2, 1.1]);
        for k in 0..3 {
            assert!((memoryless.lambda[k][1] - combined[k]).abs() < 1e-15);
            assert!((from_zero.lambda[k][1] - delta * combined[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_lookup() {
        let s = HypothesisSchedule(vec![(1, 0), (201, 2)]);
        assert_eq!(s.at(1), 0);
        assert_eq!(s.at(200), 0);
        assert_eq!(s.at(201), 2);
        assert_eq!(s.at(5000), 2);
    }

    #[test]
    fn simulate_rejects_zero_horizon() {
        let model = LaplaceFamily::new(vec![vec![0.0, 1.0]]).unwrap();
        let a = build_averaging_matrix(&Adjacency::from_edges(1, &[(0, 0)]).unwrap()).unwrap();
        let opts = RunOptions { horizon: 0, seed: 1, thin: 1, initial: None, config_hash: String::new() };
        let err = simulate(&model, &a, StrategyKind::Traditional, &HypothesisSchedule::constant(0), &opts);
        assert!(matches!(err, Err(Error::Plan(_))));
    }

    #[test]
    fn log_state_round_trips_ratios() {
        let lambda = vec![vec![0.0, 1.5, -0.25], vec![0.0, 0.0, 3.0]];
        let st = LogBeliefState::from_log_ratios(&lambda, 0);
        let back = st.log_ratios(0);
        for (r, s) in lambda.iter().zip(&back) {
            assert!(close(r, s, 1e-14));
        }
    }
}
