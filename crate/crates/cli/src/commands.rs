//! Subcommand implementations. Each writes its CSV artifacts and returns the
//! path of the run summary.

use std::path::{Path, PathBuf};

use asl_core::analysis::{
    adaptation_time, changed_truth_ratios, error_exponent, gaussian_error_probability, instantaneous_bound,
    refined_moments, restrict_to_wrong, steady_state_descriptors, transient_constants, worst_case_adaptation,
    SteadyStateDescriptors, TransientCase, TransientConstants, THREE_DB_EPSILON,
};
use asl_core::engine::{simulate, HypothesisSchedule, RunOptions};
use asl_core::graph::analyze_network;
use asl_core::models::format_model_assignment;
use asl_core::montecarlo::{
    empirical_steady_state_moments, estimate_error_probability, exponent_slope, final_log_ratios, results_csv,
    McEstimate, McPlan,
};
use asl_core::nonstationary::{
    recovery_time_statistics, run_nonstationary, simulate_worst_case_sojourns, worst_case_cycle_stats, Environment,
    RecoveryReport, RegimeState, LEFT_STOCHASTIC, NOMINAL,
};
use asl_core::{Error, LikelihoodModel, NetworkAnalysis, StrategyKind};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, MatrixRule, Resolved, StrategyName};
use crate::error::CliError;
use crate::output::{f, Artifacts, Table};

/// Random-stream family of the concentration sweep (one index per step size).
pub const CONCENTRATION_STREAM: u32 = 40;
/// Band half-width of the concentration sweep in Gaussian standard deviations.
pub const BAND_SIGMAS: f64 = 5.0;
/// Largest worst-case cycle length for which sojourns are simulated.
pub const SOJOURN_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Delta,
    Rule,
}

fn artifacts(r: &Resolved, command: &str) -> Result<Artifacts, CliError> {
    Artifacts::create(&r.out, command, &r.hash, r.config.seed)
}

fn finish<S: Serialize>(r: &Resolved, out: Artifacts, summary: &S) -> Result<PathBuf, CliError> {
    out.finish(&r.config.to_toml()?, summary)
}

fn mc_plan(r: &Resolved, deltas: Vec<f64>, reps: usize) -> McPlan {
    let mc = &r.config.montecarlo;
    McPlan { deltas, reps, horizon_factor: mc.horizon_factor, base_seed: r.config.seed, workers: mc.workers }
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|x| x + 1).collect()
}

fn wrong(h: usize, theta0: usize) -> impl Iterator<Item = usize> {
    (0..h).filter(move |&t| t != theta0)
}

pub fn cmd_simulate(r: &Resolved) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let strategy = cfg.strategy()?;
    let mut schedule = vec![(1, r.theta0)];
    schedule.extend(cfg.run.changes.iter().map(|&[step, hyp]| (step, hyp - 1)));
    let opts = RunOptions {
        horizon: cfg.run.horizon,
        seed: cfg.seed,
        thin: cfg.run.thin,
        initial: None,
        config_hash: r.hash.clone(),
    };
    let record = simulate(&r.model, &r.matrix, strategy, &HypothesisSchedule(schedule), &opts)?;
    let mut out = artifacts(r, "simulate")?;
    out.csv("trajectory", &record.to_csv(), "beliefs and decisions per recorded step, agent and hypothesis")?;
    let recoveries = if cfg.run.changes.is_empty() || cfg.run.thin > 1 {
        None
    } else {
        let report = recovery_time_statistics(&record)?;
        let mut t = recovery_table();
        push_recoveries(&mut t, strategy.label(), &report);
        out.csv("recovery", t.body(), "majority-decision recovery after each scripted change")?;
        Some(report.events.iter().map(|e| e.recovery).collect::<Vec<_>>())
    };
    let last = record.steps.last().expect("record holds step 0");
    let summary = json!({
        "strategy": strategy,
        "horizon": cfg.run.horizon,
        "final_step": last.step,
        "final_decisions": one_based(&last.decisions),
        "recoveries": recoveries,
    });
    finish(r, out, &summary)
}

fn recovery_table() -> Table {
    Table::new(&["strategy", "change_step", "from", "to", "recovery", "preceding_interval", "in_bad"])
}

fn push_recoveries(t: &mut Table, label: &str, report: &RecoveryReport) {
    for e in &report.events {
        t.row([
            label.to_string(),
            e.change_step.to_string(),
            (e.from + 1).to_string(),
            (e.to + 1).to_string(),
            e.recovery.map(|v| v.to_string()).unwrap_or_default(),
            e.preceding_interval.to_string(),
            e.in_bad.to_string(),
        ]);
    }
}

fn descriptor_tables(d: &SteadyStateDescriptors) -> (Table, Table) {
    let h = d.m_ave.len();
    let mut desc = Table::new(&["theta", "m_ave", "t_star", "phi_theta"]);
    for th in wrong(h, d.theta0) {
        desc.row([(th + 1).to_string(), f(d.m_ave[th]), f(d.t_star[th]), f(d.phi_theta[th])]);
    }
    let mut cov = Table::new(&["theta", "theta_prime", "c_ave"]);
    for i in wrong(h, d.theta0) {
        for j in wrong(h, d.theta0) {
            cov.row([(i + 1).to_string(), (j + 1).to_string(), f(d.c_ave[i][j])]);
        }
    }
    (desc, cov)
}

pub fn cmd_steady_state(r: &Resolved) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let ss = &cfg.steady_state;
    let net = analyze_network(&r.matrix)?;
    let d = steady_state_descriptors(&r.model, &net, r.theta0)?;
    let h = r.model.n_hypotheses();
    let n = r.model.n_agents();
    let c_ave = DMatrix::from_fn(h, h, |i, j| d.c_ave[i][j]);
    let mut out = artifacts(r, "steady-state")?;

    let (desc, cov) = descriptor_tables(&d);
    out.csv("descriptors", desc.body(), "network-average drift, exponent root and exponent per wrong hypothesis")?;
    out.csv("c_ave", cov.body(), "network-average LLR covariance over the wrong hypotheses")?;

    let mut conc = Table::new(&["delta", "agent", "theta", "lambda", "m_ave", "half_width"]);
    let mut inside = 0usize;
    let mut total = 0usize;
    for (j, &delta) in ss.sweep.values().iter().enumerate() {
        let lambda = final_log_ratios(
            &r.model,
            &r.matrix,
            r.theta0,
            delta,
            ss.sweep_horizon,
            cfg.seed,
            CONCENTRATION_STREAM,
            j as u32,
        );
        for (k, row) in lambda.iter().enumerate() {
            for th in wrong(h, r.theta0) {
                let half = BAND_SIGMAS * (delta * c_ave[(th, th)] / 2.0).sqrt();
                if delta <= 0.1 {
                    total += 1;
                    inside += ((row[th] - d.m_ave[th]).abs() <= half) as usize;
                }
                conc.row([f(delta), (k + 1).to_string(), (th + 1).to_string(), f(row[th]), f(d.m_ave[th]), f(half)]);
            }
        }
    }
    out.csv("concentration", conc.body(), "final log-belief ratios over the step-size sweep, one trajectory each")?;

    let plan = mc_plan(r, ss.ellipse_deltas.clone(), ss.ellipse_reps);
    let est = estimate_error_probability(&r.model, &r.matrix, r.theta0, &plan)?;
    let reports = empirical_steady_state_moments(&est, &d.m_ave, &c_ave, r.theta0);
    let mut means = Table::new(&["delta", "agent", "theta", "empirical", "mean_se", "refined", "small_step"]);
    let mut covs = Table::new(&["delta", "agent", "theta", "theta_prime", "empirical", "refined", "small_step"]);
    let mut cov_errors = Vec::new();
    for e in &est {
        let refined = refined_moments(&r.model, &r.matrix, e.delta, r.theta0, None)?;
        for k in 0..n {
            let rep = &reports[cov_errors.len()];
            cov_errors.push(json!({"delta": e.delta, "agent": k + 1, "relative_error": rep.covariance_relative_error}));
            for th in wrong(h, r.theta0) {
                means.row([
                    f(e.delta),
                    (k + 1).to_string(),
                    (th + 1).to_string(),
                    f(e.mean_lambda[k][th]),
                    f(rep.mean_se[th]),
                    f(refined.m[k][th]),
                    f(d.m_ave[th]),
                ]);
                for tp in wrong(h, r.theta0) {
                    covs.row([
                        f(e.delta),
                        (k + 1).to_string(),
                        (th + 1).to_string(),
                        (tp + 1).to_string(),
                        f(e.cov_lambda[k][(th, tp)]),
                        f(refined.c[k][(th, tp)]),
                        f(e.delta * c_ave[(th, tp)] / 2.0),
                    ]);
                }
            }
        }
    }
    out.csv("ellipse_means", means.body(), "empirical, refined and small-step means of the final log-ratios")?;
    out.csv(
        "ellipse_covariances",
        covs.body(),
        "empirical, refined and small-step covariances of the final log-ratios",
    )?;

    let summary = json!({
        "pi": net.pi,
        "beta2_magnitude": net.beta2_magnitude,
        "phi": d.phi,
        "concentration_inside_fraction": if total > 0 { inside as f64 / total as f64 } else { f64::NAN },
        "covariance_relative_errors": cov_errors,
    });
    finish(r, out, &summary)
}

fn gaussian_curve(
    r: &Resolved,
    m_ave: &[f64],
    c_ave: &DMatrix<f64>,
    deltas: &[f64],
) -> Result<Vec<(f64, f64, f64)>, CliError> {
    deltas
        .iter()
        .map(|&delta| {
            let (m, c) = restrict_to_wrong(m_ave, &(c_ave * (delta / 2.0)), r.theta0);
            let g = gaussian_error_probability(&m, &c, r.config.exponents.gaussian_samples, r.config.seed)?;
            Ok((delta, g.p, g.se))
        })
        .collect()
}

pub fn cmd_exponents(r: &Resolved) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let net = analyze_network(&r.matrix)?;
    let d = steady_state_descriptors(&r.model, &net, r.theta0)?;
    let ex = error_exponent(&r.model, &net.pi, r.theta0)?;
    let h = r.model.n_hypotheses();
    let c_ave = DMatrix::from_fn(h, h, |i, j| d.c_ave[i][j]);
    let mut out = artifacts(r, "exponents")?;

    let mut t = Table::new(&["theta", "m_ave", "t_star", "phi_theta", "worst"]);
    for e in &ex.entries {
        t.row([(e.theta + 1).to_string(), f(e.m_ave), f(e.t_star), f(e.phi), (e.theta == ex.worst).to_string()]);
    }
    out.csv("exponents", t.body(), "exponent per wrong hypothesis; the network exponent is the minimum")?;

    let deltas = cfg.montecarlo.delta_values();
    let mut g = Table::new(&["delta", "inverse_delta", "p_gauss", "p_gauss_se"]);
    let curve = gaussian_curve(r, &d.m_ave, &c_ave, &deltas)?;
    for &(delta, p, se) in &curve {
        g.row([f(delta), f(1.0 / delta), f(p), f(se)]);
    }
    out.csv("gaussian", g.body(), "Gaussian-approximation error probability over the step-size grid")?;

    let mut slopes = Vec::new();
    if cfg.exponents.monte_carlo {
        let est = estimate_error_probability(&r.model, &r.matrix, r.theta0, &mc_plan(r, deltas, cfg.montecarlo.reps))?;
        out.csv("mc_results", &results_csv(&est), "Monte Carlo error probability per step size and agent")?;
        let mut s = Table::new(&["agent", "slope", "stderr", "intercept", "used", "phi", "relative_error"]);
        for k in 0..r.model.n_agents() {
            let points: Vec<(f64, f64, usize)> = est.iter().map(|e| (e.delta, e.p_hat[k], e.reps)).collect();
            match exponent_slope(&points) {
                Ok(fit) => {
                    let rel = (fit.slope.abs() - ex.phi).abs() / ex.phi;
                    slopes.push(json!({"agent": k + 1, "slope": fit.slope, "relative_error": rel}));
                    s.row([
                        (k + 1).to_string(),
                        f(fit.slope),
                        f(fit.stderr),
                        f(fit.intercept),
                        fit.used.to_string(),
                        f(ex.phi),
                        f(rel),
                    ]);
                }
                Err(Error::InsufficientData { usable, .. }) => {
                    s.row([
                        (k + 1).to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        usable.to_string(),
                        f(ex.phi),
                        String::new(),
                    ]);
                }
                Err(e) => return Err(e.into()),
            }
        }
        out.csv("slope", s.body(), "least-squares slope of log error probability against 1/delta")?;
    }
    let summary = json!({
        "phi": ex.phi,
        "worst_theta": ex.worst + 1,
        "phi_theta": ex.entries.iter().map(|e| json!({"theta": e.theta + 1, "phi": e.phi, "t_star": e.t_star})).collect::<Vec<_>>(),
        "slopes": slopes,
    });
    finish(r, out, &summary)
}

fn case_label(case: TransientCase) -> &'static str {
    match case {
        TransientCase::Favorable => "favorable",
        TransientCase::Unfavorable => "unfavorable",
    }
}

/// Adaptation time or `None` when `epsilon` is outside the admissible range.
fn time_or_none(
    c: &TransientConstants,
    phi: f64,
    beta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<Option<asl_core::analysis::AdaptationTime>, CliError> {
    match adaptation_time(c, phi, beta, delta, epsilon) {
        Ok(t) => Ok(Some(t)),
        Err(Error::Parameter(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_transient(r: &Resolved) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let tr = &cfg.transient;
    let net = analyze_network(&r.matrix)?;
    let h = r.model.n_hypotheses();
    let n = r.model.n_agents();
    let mut out = artifacts(r, "transient")?;

    let mut consts = Table::new(&[
        "start",
        "theta0",
        "previous",
        "theta",
        "k1_theta",
        "k2_theta",
        "lambda_ave_0",
        "m_ave",
        "t_star",
        "kappa",
        "beta",
    ]);
    let mut push_constants = |start: &str, previous: Option<usize>, c: &TransientConstants| {
        for th in wrong(h, c.theta0) {
            consts.row([
                start.to_string(),
                (c.theta0 + 1).to_string(),
                previous.map(|p| (p + 1).to_string()).unwrap_or_default(),
                (th + 1).to_string(),
                f(c.k1_theta[th]),
                f(c.k2_theta[th]),
                f(c.lambda_ave_0[th]),
                f(c.m_ave[th]),
                f(c.t_star[th]),
                f(c.kappa),
                f(c.beta),
            ]);
        }
    };
    let uniform = transient_constants(&r.model, &net.pi, net.envelope, &vec![vec![0.0; h]; n], r.theta0)?;
    push_constants("uniform", None, &uniform);
    for theta0 in 0..h {
        for previous in wrong(h, theta0) {
            let lambda0 = changed_truth_ratios(&r.model, &net.pi, theta0, previous)?;
            let c = transient_constants(&r.model, &net.pi, net.envelope, &lambda0, theta0)?;
            push_constants("changed_truth", Some(previous), &c);
        }
    }
    out.csv("constants", consts.body(), "transient constants for the uniform start and every change of truth")?;

    let uniform_phi = error_exponent(&r.model, &net.pi, r.theta0)?;
    let mut times = Table::new(&[
        "start",
        "delta",
        "epsilon",
        "theta0",
        "previous",
        "case",
        "k1",
        "k2",
        "steps",
        "delta_times_steps",
    ]);
    let mut worst_per_delta = Vec::new();
    let mut bound_inputs = Vec::new();
    for &delta in &tr.deltas {
        for &epsilon in &tr.epsilons {
            let row =
                |start: &str, prev: String, c: &TransientConstants, t: Option<asl_core::analysis::AdaptationTime>| {
                    [
                        start.to_string(),
                        f(delta),
                        f(epsilon),
                        (c.theta0 + 1).to_string(),
                        prev,
                        t.map(|t| case_label(t.case).to_string()).unwrap_or_else(|| "inadmissible".into()),
                        f(c.k1),
                        f(c.k2),
                        t.map(|t| f(t.steps)).unwrap_or_default(),
                        t.map(|t| f(delta * t.steps)).unwrap_or_default(),
                    ]
                };
            let t = time_or_none(&uniform, uniform_phi.phi, net.envelope.beta, delta, epsilon)?;
            times.row(row("uniform", String::new(), &uniform, t));
            match worst_case_adaptation(&r.model, &net, delta, epsilon) {
                Ok(w) => {
                    times.row(row("changed_truth", (w.previous + 1).to_string(), &w.constants, Some(w.time)));
                    if epsilon == THREE_DB_EPSILON {
                        worst_per_delta.push(json!({"delta": delta, "steps": w.time.steps, "c": w.scaled(delta)}));
                    }
                    if epsilon == tr.epsilons[0] {
                        bound_inputs.push((delta, w.constants.clone()));
                    }
                }
                Err(Error::Parameter(_)) => times.row(row("changed_truth", String::new(), &uniform, None)),
                Err(e) => return Err(e.into()),
            }
        }
    }
    out.csv("adaptation", times.body(), "adaptation times over the step-size grid and tolerance list")?;

    let mut bound = Table::new(&["start", "delta", "step", "bound"]);
    let uniform_phi_theta = uniform_phi.phi_vector(h);
    for &delta in &tr.deltas {
        for i in 0..=tr.bound_steps {
            bound.row([
                "uniform".into(),
                f(delta),
                i.to_string(),
                f(instantaneous_bound(&uniform, &uniform_phi_theta, delta, i)),
            ]);
        }
    }
    for (delta, c) in &bound_inputs {
        let phi_theta = error_exponent(&r.model, &net.pi, c.theta0)?.phi_vector(h);
        for i in 0..=tr.bound_steps {
            bound.row([
                "changed_truth".into(),
                f(*delta),
                i.to_string(),
                f(instantaneous_bound(c, &phi_theta, *delta, i)),
            ]);
        }
    }
    out.csv("bound", bound.body(), "nominal instantaneous error bound, an exponent-level envelope clipped to 1")?;

    let summary = json!({
        "beta": net.envelope.beta,
        "kappa": net.envelope.kappa,
        "uniform_favorable": uniform.favorable(),
        "three_db": worst_per_delta,
    });
    finish(r, out, &summary)
}

pub fn cmd_nonstationary(r: &Resolved) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let env_spec = cfg
        .environment
        .as_ref()
        .ok_or_else(|| CliError::Config("nonstationary needs an [environment] block".into()))?;
    let h = r.model.n_hypotheses();
    let env = Environment {
        matrices: [
            ExperimentConfig::build_matrix(&r.adjacency, env_spec.matrices[0])?,
            ExperimentConfig::build_matrix(&r.adjacency, env_spec.matrices[1])?,
        ],
        process: env_spec.process(h)?,
        perturbation: env_spec.perturbation(),
        initial: RegimeState { hypothesis: r.theta0, matrix: LEFT_STOCHASTIC, functioning: NOMINAL },
    };
    let adaptive = match cfg.strategy.kind {
        StrategyName::Traditional => StrategyKind::asl(cfg.strategy.delta)?,
        _ => cfg.strategy()?,
    };
    let mut out = artifacts(r, "nonstationary")?;
    let mut recovery = recovery_table();
    let mut per_strategy = Vec::new();
    for strategy in [adaptive, StrategyKind::Traditional] {
        let record = run_nonstationary(&r.model, &env, strategy, env_spec.horizon, cfg.seed, &r.hash)?;
        let label = strategy.label();
        out.csv(&format!("trajectory_{label}"), &record.to_csv(), "beliefs, decisions and regime labels per step")?;
        let report = recovery_time_statistics(&record)?;
        push_recoveries(&mut recovery, label, &report);
        let clean = report.clean_recoveries();
        let mean = if clean.is_empty() { None } else { Some(clean.iter().sum::<usize>() as f64 / clean.len() as f64) };
        per_strategy.push(json!({
            "strategy": strategy,
            "changes": report.events.len(),
            "clean_recoveries": clean.len(),
            "mean_clean_recovery": mean,
            "bad_events": report.bad_events().len(),
        }));
    }
    out.csv("recovery", recovery.body(), "majority-decision recovery after each hypothesis change")?;

    let stats = worst_case_cycle_stats(env_spec.q_hyp, env_spec.q_mat, env_spec.q_fun);
    let mut cycles = Table::new(&["q_star", "t_lc", "divergent", "sojourns", "sojourn_mean", "sojourn_std"]);
    let (count, mean, std) = if !stats.divergent && stats.t_lc <= SOJOURN_LIMIT && env_spec.sojourns > 0 {
        let lens: Vec<f64> = simulate_worst_case_sojourns(&env.process, env_spec.sojourns, cfg.seed)
            .into_iter()
            .map(|l| l as f64)
            .collect();
        let m = lens.iter().sum::<f64>() / lens.len() as f64;
        let var = lens.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (lens.len() as f64 - 1.0).max(1.0);
        (lens.len(), f(m), f(var.sqrt()))
    } else {
        (0, String::new(), String::new())
    };
    cycles.row([f(stats.q_star), f(stats.t_lc), stats.divergent.to_string(), count.to_string(), mean, std]);
    out.csv("cycles", cycles.body(), "worst-case learning-cycle length and simulated sojourns")?;

    let summary = json!({ "t_lc": stats.t_lc, "q_star": stats.q_star, "strategies": per_strategy });
    finish(r, out, &summary)
}

/// Cached network analysis and descriptors for one (model, network, truth).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub analysis: NetworkAnalysis,
    pub descriptors: SteadyStateDescriptors,
}

/// Cache key: hash of the resolved edge list, model table, matrix rule and truth.
pub fn descriptor_key(r: &Resolved, rule: MatrixRule) -> String {
    let mut hasher = Sha256::new();
    hasher.update(r.adjacency.to_edge_list());
    hasher.update(format_model_assignment(&r.model));
    hasher.update(format!("rule {rule:?}\ntheta0 {}\n", r.theta0));
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Load the descriptors from `dir` or compute and store them; the flag
/// reports a cache hit.
pub fn cached_descriptors(r: &Resolved, rule: MatrixRule, dir: &Path) -> Result<(CacheEntry, bool), CliError> {
    let key = descriptor_key(r, rule);
    let path = dir.join(format!("{key}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
            if entry.key == key {
                return Ok((entry, true));
            }
        }
    }
    let matrix = ExperimentConfig::build_matrix(&r.adjacency, rule)?;
    let analysis = analyze_network(&matrix)?;
    let descriptors = steady_state_descriptors(&r.model, &analysis, r.theta0)?;
    let entry = CacheEntry { key, analysis, descriptors };
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let text = serde_json::to_string(&entry).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((entry, false))
}

pub fn cmd_sweep(r: &Resolved, axis: SweepAxis) -> Result<PathBuf, CliError> {
    let cfg = &r.config;
    let cache_dir = r.out.join("cache");
    let mut out = artifacts(r, "sweep")?;
    let mut cache = Vec::new();
    let summary = match axis {
        SweepAxis::Delta => {
            let (entry, hit) = cached_descriptors(r, cfg.network.rule, &cache_dir)?;
            cache.push(json!({"key": entry.key, "hit": hit}));
            let d = &entry.descriptors;
            let h = d.m_ave.len();
            let c_ave = DMatrix::from_fn(h, h, |i, j| d.c_ave[i][j]);
            let deltas = cfg.montecarlo.delta_values();
            let est: Vec<McEstimate> = estimate_error_probability(
                &r.model,
                &r.matrix,
                r.theta0,
                &mc_plan(r, deltas.clone(), cfg.montecarlo.reps),
            )?;
            let curve = gaussian_curve(r, &d.m_ave, &c_ave, &deltas)?;
            let mut t = Table::new(&["delta", "agent", "p_hat", "stderr", "reps", "horizon", "p_gauss", "phi"]);
            for (e, &(_, pg, _)) in est.iter().zip(&curve) {
                for k in 0..e.p_hat.len() {
                    t.row([
                        f(e.delta),
                        (k + 1).to_string(),
                        f(e.p_hat[k]),
                        f(e.stderr[k]),
                        e.reps.to_string(),
                        e.horizon.to_string(),
                        f(pg),
                        f(d.phi),
                    ]);
                }
            }
            out.csv("sweep_delta", t.body(), "Monte Carlo and Gaussian error probabilities over the step-size grid")?;
            json!({"axis": "delta", "phi": d.phi, "cache": cache})
        }
        SweepAxis::Rule => {
            let mut t = Table::new(&[
                "rule",
                "status",
                "beta2_magnitude",
                "pi_min",
                "pi_max",
                "phi",
                "worst_theta",
                "three_db_steps",
            ]);
            let delta = cfg.strategy.delta;
            for rule in [MatrixRule::Averaging, MatrixRule::Laplacian] {
                let name = format!("{rule:?}").to_lowercase();
                match cached_descriptors(r, rule, &cache_dir) {
                    Ok((entry, hit)) => {
                        cache.push(json!({"rule": name, "key": entry.key, "hit": hit}));
                        let d = &entry.descriptors;
                        let worst = wrong(d.phi_theta.len(), d.theta0).fold(None::<usize>, |b, th| match b {
                            Some(b) if d.phi_theta[b] <= d.phi_theta[th] => Some(b),
                            _ => Some(th),
                        });
                        let steps = match worst_case_adaptation(&r.model, &entry.analysis, delta, THREE_DB_EPSILON) {
                            Ok(w) => f(w.time.steps),
                            Err(Error::Parameter(_)) => String::new(),
                            Err(e) => return Err(e.into()),
                        };
                        t.row([
                            name,
                            "ok".into(),
                            f(entry.analysis.beta2_magnitude),
                            f(entry.analysis.pi_min()),
                            f(entry.analysis.pi_max()),
                            f(d.phi),
                            worst.map(|w| (w + 1).to_string()).unwrap_or_default(),
                            steps,
                        ]);
                    }
                    Err(CliError::Config(msg)) => {
                        let status = msg.replace(',', ";");
                        t.row([
                            name,
                            status,
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                        ]);
                    }
                    Err(e) => return Err(e),
                }
            }
            out.csv("sweep_rule", t.body(), "network descriptors and 3 dB adaptation time per combination policy")?;
            json!({"axis": "rule", "delta": delta, "cache": cache})
        }
    };
    finish(r, out, &summary)
}
