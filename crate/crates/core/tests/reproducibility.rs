use rainbow_core::embed::{embed_almost_spanning, validate_tree_embedding, Constants, DegreeScale, SparsifyTarget};
use rainbow_core::harness::{run_trial, run_trials, write_csv, ExperimentKind, TrialConfig};
use rainbow_core::tree::gen_random_bounded_tree;
use rainbow_core::RandomSource;

fn almost_config() -> TrialConfig {
    TrialConfig {
        kind: ExperimentKind::AlmostSpanning,
        n: 200,
        p: 0.8,
        eps: Some(0.5),
        d: 3,
        trials: 12,
        base_seed: 31,
        constants: Constants {
            c_beta: 100.0,
            c_rho: 0.5,
            sparsify: SparsifyTarget::AllSurvivors,
            degree_scale: DegreeScale::MeanDegree,
            ..Constants::default()
        },
        ..TrialConfig::default()
    }
}

fn csv(cfg: &TrialConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&run_trials(cfg, false).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn csv_is_byte_identical_across_reruns() {
    for cfg in [
        almost_config(),
        TrialConfig {
            kind: ExperimentKind::RainbowSt,
            n: 40,
            p: 0.01,
            trials: 8,
            ..TrialConfig::default()
        },
    ] {
        let a = csv(&cfg);
        assert_eq!(a, csv(&cfg));
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), cfg.trials + 1);
    }
}

#[test]
fn trials_are_independent_of_batch() {
    let cfg = almost_config();
    let all = run_trials(&cfg, false).unwrap();
    for i in [0, 5, 11] {
        assert_eq!(run_trial(&cfg, i, false).unwrap(), all[i]);
    }
}

#[test]
fn successes_replay_and_validate() {
    let cfg = almost_config();
    let records = run_trials(&cfg, false).unwrap();
    let mut replayed = 0;
    for r in records.iter().filter(|r| r.is_success()) {
        // the trial stream fixes the tree and the host
        let mut rng = RandomSource::new(cfg.base_seed, r.trial as u64);
        let m = ((1.0 - 0.5) * cfg.n as f64 + 1e-9).floor() as usize;
        let tree = gen_random_bounded_tree(m, cfg.d, &mut rng).unwrap();
        let run = embed_almost_spanning(cfg.n, cfg.p, cfg.n, &tree, 0.5, cfg.d, &cfg.constants, &mut rng).unwrap();
        let emb = run.outcome.expect("a recorded success replays as a success");
        let colours = validate_tree_embedding(&tree, &emb.map, cfg.n, |u, v| emb.state.ledger.colour(u, v)).unwrap();
        assert_eq!(colours, emb.colours);
        replayed += 1;
    }
    assert!(replayed > 0, "no successes to replay");
}
