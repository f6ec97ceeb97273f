//! Markov-modulated environment: a drifting true hypothesis, a switching
//! combination matrix and a functioning state that perturbs observations,
//! with learning-cycle statistics and decision-recovery measurements.
//!
//! The hypothesis and functioning chains are symmetric birth-death chains
//! (interior states move either way with probability `q`, edge states move
//! inward with probability `q`); the matrix chain flips with probability
//! `q_mat`. Chains advance at the start of a step, so the observation of step
//! `i` is already drawn under the regime entered at step `i`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{draw_observations, LogBeliefState, RegimeLabels, StrategyKind, TrajectoryRecord, TrajectoryStep};
use crate::error::{Error, Result};
use crate::graph::CombinationMatrix;
use crate::models::LikelihoodModel;
use crate::rng::{stream_rng, OBSERVATION_STREAM, REGIME_STREAM};

/// Stream family of the functioning-state noise.
pub const NOISE_STREAM: u32 = 2;
/// Consecutive correct majority decisions required to declare recovery.
pub const RECOVERY_PERSISTENCE: usize = 10;

pub const NOMINAL: usize = 0;
pub const PERTURBED: usize = 1;
pub const BAD: usize = 2;
pub const LEFT_STOCHASTIC: usize = 0;
pub const DOUBLY_STOCHASTIC: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeProcess {
    pub q_hyp: f64,
    pub q_mat: f64,
    pub q_fun: f64,
    /// Number of hypothesis states (3 in the reference environment).
    pub n_hypotheses: usize,
}

impl RegimeProcess {
    pub fn new(q_hyp: f64, q_mat: f64, q_fun: f64, n_hypotheses: usize) -> Result<Self> {
        for (name, q) in [("q_hyp", q_hyp), ("q_mat", q_mat), ("q_fun", q_fun)] {
            if !(0.0..0.5).contains(&q) {
                return Err(Error::Parameter(format!("{name} = {q} outside [0, 1/2)")));
            }
        }
        if n_hypotheses < 2 {
            return Err(Error::Parameter("hypothesis chain needs at least 2 states".into()));
        }
        Ok(RegimeProcess { q_hyp, q_mat, q_fun, n_hypotheses })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeState {
    pub hypothesis: usize,
    pub matrix: usize,
    pub functioning: usize,
}

impl RegimeState {
    pub fn labels(&self) -> RegimeLabels {
        RegimeLabels { hypothesis: self.hypothesis, matrix: self.matrix, functioning: self.functioning }
    }
}

/// Additive zero-mean Gaussian observation noise per functioning state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    pub sigma_perturbed: f64,
    pub sigma_bad: f64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel { sigma_perturbed: 0.5, sigma_bad: 5.0 }
    }
}

impl PerturbationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_perturbed >= 0.0 && self.sigma_perturbed < self.sigma_bad) {
            return Err(Error::Parameter("noise scales must satisfy 0 <= sigma_perturbed < sigma_bad".into()));
        }
        Ok(())
    }

    pub fn sigma(&self, functioning: usize) -> f64 {
        match functioning {
            NOMINAL => 0.0,
            PERTURBED => self.sigma_perturbed,
            _ => self.sigma_bad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub q_star: f64,
    pub t_lc: f64,
    /// `q*` within 1e-12 of 1: `t_lc` is capped.
    pub divergent: bool,
}

/// Stay probability of the least stable compound state and the mean length
/// `q*/(1-q*)` of the worst-case learning cycle.
pub fn worst_case_cycle_stats(q_hyp: f64, q_mat: f64, q_fun: f64) -> CycleStats {
    let q_star = (1.0 - 2.0 * q_hyp) * (1.0 - q_mat) * (1.0 - 2.0 * q_fun);
    let gap = 1.0 - q_star;
    let divergent = gap < 1e-12;
    CycleStats { q_star, t_lc: q_star / gap.max(1e-12), divergent }
}

fn birth_death(state: usize, n: usize, q: f64, u: f64) -> usize {
    if state == 0 {
        if u < q {
            1
        } else {
            0
        }
    } else if state == n - 1 {
        if u < q {
            n - 2
        } else {
            state
        }
    } else if u < q {
        state - 1
    } else if u < 2.0 * q {
        state + 1
    } else {
        state
    }
}

/// Advance the three chains; exactly three uniforms are drawn per call.
pub fn step_regimes(state: RegimeState, process: &RegimeProcess, rng: &mut dyn RngCore) -> RegimeState {
    let uh: f64 = rng.random();
    let um: f64 = rng.random();
    let uf: f64 = rng.random();
    RegimeState {
        hypothesis: birth_death(state.hypothesis, process.n_hypotheses, process.q_hyp, uh),
        matrix: if um < process.q_mat { 1 - state.matrix } else { state.matrix },
        functioning: birth_death(state.functioning, 3, process.q_fun, uf),
    }
}

/// Lengths of repeated sojourns in the least stable compound state (middle
/// hypothesis, perturbed functioning): the number of steps each sojourn
/// stays before any chain moves.
pub fn simulate_worst_case_sojourns(process: &RegimeProcess, count: usize, seed: u64) -> Vec<u64> {
    let mut rng = stream_rng(seed, REGIME_STREAM, 0);
    let start = RegimeState { hypothesis: process.n_hypotheses / 2, matrix: LEFT_STOCHASTIC, functioning: PERTURBED };
    (0..count)
        .map(|_| {
            let mut len = 0u64;
            loop {
                if step_regimes(start, process, &mut rng) != start {
                    break len;
                }
                len += 1;
            }
        })
        .collect()
}

/// Inputs of a nonstationary run.
#[derive(Debug, Clone)]
pub struct Environment {
    /// Combination matrices indexed by the matrix chain state.
    pub matrices: [CombinationMatrix; 2],
    pub process: RegimeProcess,
    pub perturbation: PerturbationModel,
    pub initial: RegimeState,
}

pub fn run_nonstationary<M: LikelihoodModel + ?Sized>(
    model: &M,
    env: &Environment,
    strategy: StrategyKind,
    horizon: usize,
    seed: u64,
    config_hash: &str,
) -> Result<TrajectoryRecord> {
    strategy.validate()?;
    env.perturbation.validate()?;
    if horizon < 1 {
        return Err(Error::Plan("horizon must be at least 1".into()));
    }
    if env.process.n_hypotheses != model.n_hypotheses() {
        return Err(Error::Parameter("hypothesis chain size differs from the model".into()));
    }
    let n = model.n_agents();
    let mut obs_rng = stream_rng(seed, OBSERVATION_STREAM, 0);
    let mut regime_rng = stream_rng(seed, REGIME_STREAM, 0);
    let mut noise_rng = stream_rng(seed, NOISE_STREAM, 0);
    let mut state = LogBeliefState::uniform(n, model.n_hypotheses());
    let mut regime = env.initial;
    let mut obs = vec![0.0; n];
    let record = |state: &LogBeliefState, regime: RegimeState| TrajectoryStep {
        step: state.step,
        beliefs: state.beliefs().beliefs,
        decisions: state.decisions(),
        regime: regime.labels(),
    };
    let mut steps = vec![record(&state, regime)];
    for _ in 0..horizon {
        regime = step_regimes(regime, &env.process, &mut regime_rng);
        draw_observations(model, regime.hypothesis, &mut obs_rng, &mut obs);
        let sigma = env.perturbation.sigma(regime.functioning);
        if sigma > 0.0 {
            for o in obs.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *o += sigma * z;
            }
        }
        state.step(model, strategy, &obs, &env.matrices[regime.matrix])?;
        steps.push(record(&state, regime));
    }
    Ok(TrajectoryRecord { seed, config_hash: config_hash.to_string(), strategy, steps })
}

/// Most frequent decision across agents, ties to the lowest index.
pub fn majority_decision(decisions: &[usize], n_hyp: usize) -> usize {
    let mut counts = vec![0usize; n_hyp];
    for &d in decisions {
        counts[d] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEvent {
    /// First step generated under the new hypothesis.
    pub change_step: usize,
    pub from: usize,
    pub to: usize,
    /// Steps from the change until the start of the first run of
    /// `RECOVERY_PERSISTENCE` correct majority decisions (1 = correct at once);
    /// `None` when the run is cut short by the next change or the horizon.
    pub recovery: Option<usize>,
    /// Length of the preceding stationary interval.
    pub preceding_interval: usize,
    /// Bad functioning occurred between the change and its resolution.
    pub in_bad: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub events: Vec<RecoveryEvent>,
}

impl RecoveryReport {
    /// Resolved recoveries outside bad functioning.
    pub fn clean_recoveries(&self) -> Vec<usize> {
        self.events.iter().filter(|e| !e.in_bad).filter_map(|e| e.recovery).collect()
    }

    /// Events affected by bad functioning, reported separately.
    pub fn bad_events(&self) -> Vec<&RecoveryEvent> {
        self.events.iter().filter(|e| e.in_bad).collect()
    }
}

/// Decision-recovery durations after every hypothesis change of an unthinned
/// record.
pub fn recovery_time_statistics(record: &TrajectoryRecord) -> Result<RecoveryReport> {
    let steps = &record.steps;
    if steps.windows(2).any(|w| w[1].step != w[0].step + 1) {
        return Err(Error::Parameter("recovery statistics need an unthinned record".into()));
    }
    if steps.is_empty() {
        return Ok(RecoveryReport { events: Vec::new() });
    }
    let n_hyp = steps[0].beliefs.first().map(Vec::len).unwrap_or(0);
    let majority: Vec<usize> = steps.iter().map(|s| majority_decision(&s.decisions, n_hyp)).collect();
    let changes: Vec<usize> =
        (1..steps.len()).filter(|&i| steps[i].regime.hypothesis != steps[i - 1].regime.hypothesis).collect();
    let mut events = Vec::with_capacity(changes.len());
    let mut last_change = 1;
    for (c_idx, &c) in changes.iter().enumerate() {
        let to = steps[c].regime.hypothesis;
        let end = changes.get(c_idx + 1).copied().unwrap_or(steps.len());
        let mut recovery = None;
        let mut run = 0;
        for i in c..end {
            if majority[i] == to {
                run += 1;
                if run == RECOVERY_PERSISTENCE {
                    recovery = Some(i + 2 - RECOVERY_PERSISTENCE - c);
                    break;
                }
            } else {
                run = 0;
            }
        }
        let resolved_at = recovery.map(|r| c + r - 1).unwrap_or(end - 1);
        let in_bad = (c..=resolved_at).any(|i| steps[i].regime.functioning == BAD);
        events.push(RecoveryEvent {
            change_step: steps[c].step,
            from: steps[c - 1].regime.hypothesis,
            to,
            recovery,
            preceding_interval: steps[c].step - last_change,
            in_bad,
        });
        last_change = steps[c].step;
    }
    Ok(RecoveryReport { events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_stats_examples() {
        let s = worst_case_cycle_stats(5e-3, 1e-3, 1e-3);
        assert!((s.t_lc - 76.0).abs() < 1.0);
        let slow = worst_case_cycle_stats(5e-4, 1e-4, 1e-4);
        assert!((slow.t_lc / s.t_lc - 10.0).abs() < 0.5);
        let frozen = worst_case_cycle_stats(0.0, 0.0, 0.0);
        assert!(frozen.divergent && frozen.t_lc.is_finite());
    }

    #[test]
    fn zero_rates_freeze_the_chains() {
        let p = RegimeProcess::new(0.0, 0.0, 0.0, 3).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let s0 = RegimeState { hypothesis: 1, matrix: 0, functioning: 1 };
        let mut s = s0;
        for _ in 0..1000 {
            s = step_regimes(s, &p, &mut rng);
            assert_eq!(s, s0);
        }
    }

    #[test]
    fn birth_death_edges() {
        assert_eq!(birth_death(0, 3, 0.1, 0.05), 1);
        assert_eq!(birth_death(0, 3, 0.1, 0.5), 0);
        assert_eq!(birth_death(2, 3, 0.1, 0.05), 1);
        assert_eq!(birth_death(1, 3, 0.1, 0.05), 0);
        assert_eq!(birth_death(1, 3, 0.1, 0.15), 2);
        assert_eq!(birth_death(1, 3, 0.1, 0.25), 1);
    }

    #[test]
    fn rates_are_validated() {
        assert!(RegimeProcess::new(0.5, 0.0, 0.0, 3).is_err());
        assert!(PerturbationModel { sigma_perturbed: 2.0, sigma_bad: 1.0 }.validate().is_err());
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority_decision(&[2, 1, 2, 1], 3), 1);
        assert_eq!(majority_decision(&[2, 2, 0], 3), 2);
    }
}
