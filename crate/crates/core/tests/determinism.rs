use std::fs;

use lfi_lab::bench::{run_experiment, write_outputs, Experiment, ExperimentConfig};

fn trials_jsonl(config: &ExperimentConfig, threads: usize) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let out = pool.install(|| run_experiment(config)).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    fs::read(dir.path().join("trials.jsonl")).unwrap()
}

#[test]
fn identical_config_gives_identical_bytes() {
    for experiment in Experiment::ALL {
        let n = match experiment {
            Experiment::Smc => 4000,
            Experiment::Adaptive => 2048,
            _ => 400,
        };
        let config = ExperimentConfig::new(experiment, vec![n], 4, 99);
        let a = trials_jsonl(&config, 1);
        let b = trials_jsonl(&config, 3);
        assert!(!a.is_empty());
        assert_eq!(a, b, "{experiment} depends on the thread count");
        assert_eq!(a, trials_jsonl(&config, 1), "{experiment} is not reproducible");
    }
}

#[test]
fn seed_changes_the_draws() {
    let a = trials_jsonl(&ExperimentConfig::new(Experiment::TwoParam, vec![200], 3, 1), 1);
    let b = trials_jsonl(&ExperimentConfig::new(Experiment::TwoParam, vec![200], 3, 2), 1);
    assert_ne!(a, b);
}

#[test]
fn every_strategy_sees_the_same_budget() {
    let config = ExperimentConfig::new(Experiment::TwoParam, vec![100, 300], 2, 5);
    let out = run_experiment(&config).unwrap();
    let strategies = config.strategy_tokens().len();
    assert_eq!(out.records.len(), 2 * 2 * strategies);
    for n in [100, 300] {
        assert_eq!(out.records.iter().filter(|r| r.n == n).count(), 2 * strategies);
    }
}
