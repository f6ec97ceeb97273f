use asl_core::engine::{simulate, HypothesisSchedule, RunOptions, StrategyKind};
use asl_core::presets::reference_setup;

fn opts(horizon: usize, seed: u64, thin: usize) -> RunOptions {
    RunOptions { horizon, seed, thin, initial: None, config_hash: String::new() }
}

#[test]
fn traditional_learning_concentrates_on_the_truth() {
    // the drift against each wrong hypothesis is about 0.0077 per step, so
    // the wrong beliefs shrink like exp(-0.0077 i)
    let s = reference_setup();
    let seeds = 20;
    let mut mean = [0.0; 3];
    for seed in 0..seeds {
        let rec = simulate(
            &s.model,
            &s.matrix,
            StrategyKind::Traditional,
            &HypothesisSchedule::constant(0),
            &opts(1000, seed, 250),
        )
        .unwrap();
        let at = |i: usize| {
            let step = rec.steps.iter().find(|t| t.step == i).unwrap();
            step.beliefs.iter().map(|row| row[0]).sum::<f64>() / step.beliefs.len() as f64
        };
        for (slot, i) in mean.iter_mut().zip([250, 500, 1000]) {
            *slot += at(i) / seeds as f64;
        }
    }
    assert!(mean[0] < mean[1] && mean[1] < mean[2], "{mean:?}");
    assert!(mean[2] > 0.99, "{mean:?}");
}

#[test]
fn beliefs_remain_distributions_over_long_runs() {
    let s = reference_setup();
    for delta in [0.5, 0.1, 0.01] {
        let rec = simulate(
            &s.model,
            &s.matrix,
            StrategyKind::asl(delta).unwrap(),
            &HypothesisSchedule::constant(0),
            &opts(10_000, 7, 1),
        )
        .unwrap();
        assert_eq!(rec.steps.len(), 10_001);
        for step in &rec.steps {
            for row in &step.beliefs {
                assert!(row.iter().all(|&p| p > 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn runs_are_reproducible_and_thinning_keeps_the_endpoints() {
    let s = reference_setup();
    let strategy = StrategyKind::asl(0.1).unwrap();
    let full = simulate(&s.model, &s.matrix, strategy, &HypothesisSchedule::constant(0), &opts(95, 3, 1)).unwrap();
    let again = simulate(&s.model, &s.matrix, strategy, &HypothesisSchedule::constant(0), &opts(95, 3, 1)).unwrap();
    assert_eq!(full, again);
    let thin = simulate(&s.model, &s.matrix, strategy, &HypothesisSchedule::constant(0), &opts(95, 3, 10)).unwrap();
    let steps: Vec<usize> = thin.steps.iter().map(|t| t.step).collect();
    assert_eq!(steps, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
    for t in &thin.steps {
        assert_eq!(t, &full.steps[t.step]);
    }
}
