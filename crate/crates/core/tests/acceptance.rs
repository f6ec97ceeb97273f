//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use asl_core::analysis::{
    compute_c_ave, compute_m_ave, error_exponent, gaussian_error_probability, lambda_ave, rate_function,
    refined_moments, restrict_to_wrong, solve_t_star, worst_case_adaptation, THREE_DB_EPSILON,
};
use asl_core::engine::{
    adaptive_update, combine, llr_row, log_ratio_recursion_step, simulate, HypothesisSchedule, LogBeliefState,
    LogRatioState, RunOptions, StrategyKind,
};
use asl_core::graph::{analyze_network, build_laplacian_matrix, matrix_power_column, residual_inf, Adjacency};
use asl_core::models::{LaplaceFamily, LikelihoodModel};
use asl_core::montecarlo::{
    empirical_steady_state_moments, estimate_error_probability, exponent_slope, final_log_ratios, McPlan,
};
use asl_core::nonstationary::{
    recovery_time_statistics, simulate_worst_case_sojourns, worst_case_cycle_stats, RegimeProcess,
};
use asl_core::presets::{
    reduced_setup, reference_matrix_pair, reference_setup, setup_with_spacing, NONSTATIONARY_SPACING,
};
use asl_core::rng::stream_rng;
use asl_core::BeliefState;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exponents() -> Outcome {
    let s = reference_setup();
    let net = analyze_network(&s.matrix).unwrap();
    let ex = error_exponent(&s.model, &net.pi, 0).unwrap();
    let (p2, p3) = (ex.entry(1).unwrap().phi, ex.entry(2).unwrap().phi);
    let pass = (p2 - 0.03348).abs() <= 1e-4 && (p3 - 0.05051).abs() <= 1e-4 && (ex.phi - 0.03348).abs() <= 1e-4;
    outcome(pass, format!("Phi(2)={p2:.6} Phi(3)={p3:.6} Phi={:.6}", ex.phi))
}

fn cycle_duration() -> Outcome {
    let stats = worst_case_cycle_stats(5e-3, 1e-3, 1e-3);
    let process = RegimeProcess::new(5e-3, 1e-3, 1e-3, 3).unwrap();
    let lens = simulate_worst_case_sojourns(&process, 100_000, 2024);
    let mean = lens.iter().sum::<u64>() as f64 / lens.len() as f64;
    let pass = (stats.t_lc - 76.0).abs() <= 1.0 && (mean / stats.t_lc - 1.0).abs() < 0.05;
    outcome(pass, format!("T_LC={:.3} simulated mean={mean:.3}", stats.t_lc))
}

fn adaptation_scaling() -> Outcome {
    let s = setup_with_spacing(NONSTATIONARY_SPACING).unwrap();
    let nets: Vec<_> = reference_matrix_pair().iter().map(|a| analyze_network(a).unwrap()).collect();
    // worst case over both matrices, both truths and the previous truth
    let t_asl = |delta: f64| {
        nets.iter()
            .map(|net| worst_case_adaptation(&s.model, net, delta, THREE_DB_EPSILON).unwrap().time.steps)
            .fold(0.0, f64::max)
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [0.1, 0.05, 0.01] {
        let c = delta * t_asl(delta);
        pass &= (c / 2.7286 - 1.0).abs() <= 0.1;
        parts.push(format!("c({delta})={c:.4}"));
    }
    for delta in [0.05, 0.025, 0.01] {
        let ratio = t_asl(delta / 2.0) / t_asl(delta);
        pass &= (1.9..=2.1).contains(&ratio);
        parts.push(format!("T({})/T({delta})={ratio:.4}", delta / 2.0));
    }
    outcome(pass, parts.join(" "))
}

fn consistency() -> Outcome {
    let s = reference_setup();
    let net = analyze_network(&s.matrix).unwrap();
    let m = compute_m_ave(&s.model, &net.pi, 0).unwrap().values;
    let c = compute_c_ave(&s.model, &net.pi, 0).unwrap();
    let (mut inside, mut small) = (0, 0);
    for j in 0..50 {
        let delta = 10f64.powf(-3.0 + 3.0 * j as f64 / 49.0);
        let lambda = final_log_ratios(&s.model, &s.matrix, 0, delta, 8000, 77, 40, j);
        if delta <= 0.1 {
            small += 1;
            let ok = (1..3).all(|th| (lambda[0][th] - m[th]).abs() <= 5.0 * (delta * c[(th, th)] / 2.0).sqrt());
            inside += ok as usize;
        }
    }
    let frac = inside as f64 / small as f64;
    outcome(frac >= 0.9, format!("agent 1 inside band at {inside}/{small} points with delta <= 0.1"))
}

fn clt() -> Outcome {
    let s = reference_setup();
    let net = analyze_network(&s.matrix).unwrap();
    let delta = 0.01;
    let mut plan = McPlan::new(vec![delta], 2000, 1234);
    plan.workers = Some(8);
    let est = estimate_error_probability(&s.model, &s.matrix, 0, &plan).unwrap();
    let m = compute_m_ave(&s.model, &net.pi, 0).unwrap().values;
    let c = compute_c_ave(&s.model, &net.pi, 0).unwrap();
    let refined = refined_moments(&s.model, &s.matrix, delta, 0, None).unwrap();
    let report = &empirical_steady_state_moments(&est, &m, &c, 0)[0];
    let z: Vec<f64> = (1..3).map(|th| (report.mean[th] - refined.m[0][th]) / report.mean_se[th]).collect();
    let pass = report.covariance_relative_error < 0.15 && z.iter().all(|v| v.abs() <= 3.0);
    outcome(
        pass,
        format!(
            "agent 1: covariance rel. error {:.4}, mean z-scores vs refined mean {:.3} {:.3}",
            report.covariance_relative_error, z[0], z[1]
        ),
    )
}

fn decay_law() -> Outcome {
    let s = reduced_setup();
    let net = analyze_network(&s.matrix).unwrap();
    let phi = error_exponent(&s.model, &net.pi, 0).unwrap().phi;
    let deltas: Vec<f64> = (0..10).map(|j| 1.0 / (10.0 + 140.0 * j as f64 / 9.0)).collect();
    let est = estimate_error_probability(&s.model, &s.matrix, 0, &McPlan::new(deltas, 20_000, 555)).unwrap();
    let points: Vec<(f64, f64, usize)> = est.iter().map(|e| (e.delta, e.p_hat[0], e.reps)).collect();
    let fit = match exponent_slope(&points) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("slope fit failed: {e}")),
    };
    let rel = (fit.slope.abs() - phi).abs() / phi;
    let m = compute_m_ave(&s.model, &net.pi, 0).unwrap().values;
    let c = compute_c_ave(&s.model, &net.pi, 0).unwrap();
    let mut gauss_ok = true;
    let mut checked = 0;
    for e in &est {
        if e.errors[0] < 100 {
            continue;
        }
        checked += 1;
        let (mw, cw) = restrict_to_wrong(&m, &(&c * (e.delta / 2.0)), 0);
        let g = gaussian_error_probability(&mw, &cw, 1_000_000, 99).unwrap().p;
        gauss_ok &= g > 0.0 && (g / e.p_hat[0]).log10().abs() <= 1.0;
    }
    outcome(
        rel <= 0.2 && gauss_ok && checked > 0,
        format!(
            "Phi={phi:.5} slope={:.5} (rel. error {rel:.3}, {} points); Gaussian curve within a decade on {checked} points: {gauss_ok}",
            fit.slope, fit.used
        ),
    )
}

fn variant_equivalence() -> Outcome {
    let s = reference_setup();
    let n = s.model.n_agents();
    let mut worst: f64 = 0.0;
    let mut same = true;
    for delta in [0.3, 0.05] {
        let mut asl = LogBeliefState::uniform(n, 3);
        let mut flat = LogBeliefState::uniform(n, 3);
        let mut rng = stream_rng(8, 0, 0);
        let mut obs = vec![0.0; n];
        for _ in 0..1000 {
            asl_core::engine::draw_observations(&s.model, 0, &mut rng, &mut obs);
            asl.step(&s.model, StrategyKind::asl(delta).unwrap(), &obs, &s.matrix).unwrap();
            flat.step(&s.model, StrategyKind::flattened(delta).unwrap(), &obs, &s.matrix).unwrap();
            for (x, y) in asl.log_ratios(0).iter().flatten().zip(flat.log_ratios(0).iter().flatten()) {
                worst = worst.max((x - delta * y).abs());
            }
            same &= asl.decisions() == flat.decisions();
        }
    }
    outcome(
        worst <= 1e-9 && same,
        format!("max |lambda_ASL - delta lambda_flat| = {worst:.2e}, decisions identical: {same}"),
    )
}

fn domain_equivalence() -> Outcome {
    let s = reference_setup();
    let n = s.model.n_agents();
    let delta = 0.1;
    let strategy = StrategyKind::asl(delta).unwrap();
    let mut beliefs = BeliefState::uniform(n, 3);
    let mut ratios = LogRatioState::zeros(n, 3, 0);
    let mut rng = stream_rng(12, 0, 0);
    let mut obs = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        asl_core::engine::draw_observations(&s.model, 0, &mut rng, &mut obs);
        let psi: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let lik: Vec<f64> = (0..3).map(|th| s.model.density(k, obs[k], th)).collect();
                adaptive_update(&beliefs.beliefs[k], &lik, delta).unwrap()
            })
            .collect();
        beliefs = combine(&psi, &s.matrix).unwrap();
        ratios = log_ratio_recursion_step(&ratios, &llr_row(&s.model, &obs, 0), strategy, &s.matrix);
        for (row, lam) in beliefs.beliefs.iter().zip(&ratios.lambda) {
            for th in 0..3 {
                worst = worst.max(((row[0] / row[th]).ln() - lam[th]).abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("max |lambda_prob - lambda_rec| = {worst:.2e}"))
}

fn structural() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let mut setups = vec![reference_setup(), reduced_setup()];
    let lap = reference_matrix_pair()[1].clone();
    let mut extra = setup_with_spacing(NONSTATIONARY_SPACING).unwrap();
    extra.matrix = lap;
    setups.push(extra);
    for s in &setups {
        let net = analyze_network(&s.matrix).unwrap();
        check(residual_inf(&s.matrix, &net.pi) < 1e-10, "Perron residual");
        for k in 0..s.matrix.n() {
            for m in 0..=200 {
                let col = matrix_power_column(&s.matrix, m, k);
                let bound = net.envelope.kappa * net.envelope.beta.powi(m as i32) + 1e-12;
                check(col.iter().zip(&net.pi).all(|(v, p)| (v - p).abs() <= bound), "Property-1 envelope");
            }
        }
        let c = compute_c_ave(&s.model, &net.pi, 0).unwrap();
        check(c.symmetric_eigenvalues().iter().all(|&v| v >= -1e-10), "C_ave PSD");
        let ex = error_exponent(&s.model, &net.pi, 0).unwrap();
        for e in &ex.entries {
            let ts = solve_t_star(&s.model, &net.pi, 0, e.theta).unwrap();
            check(ts.abs() >= 1.0 / net.pi_max() - 1e-9 && ts.abs() <= 1.0 / net.pi_min() + 1e-9, "t* bracket");
            let star = rate_function(&s.model, &net.pi, 0.0, 0, e.theta).unwrap();
            check((star - e.phi).abs() <= 1e-8, "rate function at zero");
            check(lambda_ave(&s.model, &net.pi, 0.0, 0, e.theta).unwrap().abs() < 1e-12, "Lambda(0)");
            for k in 0..s.model.n_agents() {
                check(s.model.lmgf(k, 0.0, 0, e.theta).unwrap().abs() < 1e-12, "Lambda_k(0)");
                check(s.model.lmgf(k, -1.0, 0, e.theta).unwrap().abs() < 1e-12, "Lambda_k(-1)");
                for j in 0..80 {
                    let (a, b) = (-4.0 + 0.1 * j as f64, -3.0 + 0.1 * j as f64);
                    let mid = s.model.lmgf(k, 0.5 * (a + b), 0, e.theta).unwrap();
                    let avg = 0.5 * (s.model.lmgf(k, a, 0, e.theta).unwrap() + s.model.lmgf(k, b, 0, e.theta).unwrap());
                    check(mid <= avg + 1e-10, "Lambda convexity");
                }
            }
        }
    }
    // replicated agents on a doubly-stochastic matrix
    let adj =
        Adjacency::undirected_with_self_loops(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
    let a = build_laplacian_matrix(&adj).unwrap();
    let net = analyze_network(&a).unwrap();
    let row = vec![0.0, 0.4, -0.7];
    let one = error_exponent(&LaplaceFamily::new(vec![row.clone()]).unwrap(), &[1.0], 0).unwrap();
    let many = error_exponent(&LaplaceFamily::new(vec![row; 6]).unwrap(), &net.pi, 0).unwrap();
    for (x, y) in one.entries.iter().zip(&many.entries) {
        check((y.phi / (6.0 * x.phi) - 1.0).abs() <= 1e-8, "exponent additivity");
    }
    failures.dedup();
    let detail = if failures.is_empty() { "all invariants hold".to_string() } else { failures.join(", ") };
    outcome(failures.is_empty(), detail)
}

fn stubbornness() -> Outcome {
    let s = setup_with_spacing(NONSTATIONARY_SPACING).unwrap();
    let schedule = HypothesisSchedule(vec![(1, 0), (201, 2)]);
    let recovery = |strategy: StrategyKind, seed: u64| {
        let opts = RunOptions { horizon: 2000, seed, thin: 1, initial: None, config_hash: String::new() };
        let rec = simulate(&s.model, &s.matrix, strategy, &schedule, &opts).unwrap();
        recovery_time_statistics(&rec).unwrap().events[0].recovery.unwrap_or(usize::MAX)
    };
    let mut wins = 0;
    let mut examples = Vec::new();
    for seed in 0..100 {
        let tsl = recovery(StrategyKind::Traditional, seed);
        let asl = recovery(StrategyKind::asl(0.1).unwrap(), seed);
        wins += (tsl > 2 * asl) as usize;
        if seed < 3 {
            examples.push(format!("{tsl}/{asl}"));
        }
    }
    outcome(wins >= 95, format!("traditional > 2x ASL on {wins}/100 seeds (first seeds {})", examples.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("error exponents", exponents, Duration::from_secs(1)),
        ("worst-case cycle duration", cycle_duration, Duration::from_secs(10)),
        ("adaptation-time scaling", adaptation_scaling, Duration::from_secs(60)),
        ("consistency band", consistency, Duration::from_secs(60)),
        ("asymptotic normality", clt, Duration::from_secs(300)),
        ("exponential decay law", decay_law, Duration::from_secs(1200)),
        ("variant equivalence", variant_equivalence, Duration::from_secs(1)),
        ("domain equivalence", domain_equivalence, Duration::from_secs(1)),
        ("structural invariants", structural, Duration::from_secs(30)),
        ("stubbornness contrast", stubbornness, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= *limit;
        failed += (!pass) as usize;
        println!(
            "criterion {:>2} {} {name}: {} [{:.2?} of {:?}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed,
            limit
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
