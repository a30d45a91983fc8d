use super::analysis::{collapse, late_start, mitigation, separability, stretched, summarize, utility_gap};
use super::io::{read_dataset, write_dataset, SuiteManifest, EPISODES_FILE};
use super::*;
use crate::consistency::ConsistencyConfig;
use crate::envs::TaskSpec;
use crate::wam::{Bias, WamSpec};

fn reach(id: &str) -> TaskSpec {
    TaskSpec {
        init_spread: 0.2,
        episode_horizon: 30,
        ..TaskSpec::point_reach(id, [1.2, 0.4])
    }
}

fn noisy() -> WamSpec {
    WamSpec {
        pred_noise_std: 0.05,
        policy_noise_std: 0.6,
        value_noise_std: 0.05,
        competence: 0.6,
        competence_spread: 0.3,
        error_coupling: 2.0,
        ..WamSpec::default()
    }
}

fn grid(strategies: Vec<Strategy>, candidates: Vec<usize>, seeds: u64) -> SuiteGrid {
    SuiteGrid {
        tasks: vec![
            reach("a"),
            TaskSpec {
                noise_std: 0.01,
                ..reach("b")
            },
        ],
        presets: vec![("noisy".into(), noisy())],
        strategies,
        candidates,
        tau: 1.0,
        consistency: ConsistencyConfig::default(),
        seeds,
        master_seed: 5,
    }
}

fn one(task: &TaskSpec, wam: &WamSpec, strategy: Strategy, n: usize, seed: u64) -> EpisodeLog {
    let env = Env::new(task.clone()).unwrap();
    let sel = SelectionConfig::new(strategy, n);
    let setup = EpisodeSetup {
        env: &env,
        preset: "p",
        wam,
        selection: &sel,
        consistency: &ConsistencyConfig::default(),
    };
    run_episode(setup, 9, seed).unwrap()
}

#[test]
fn oracle_single_reaches_goal_with_perfect_consistency() {
    let e = one(&reach("r"), &WamSpec::oracle(), Strategy::Single, 1, 0);
    assert!(e.success);
    assert!(e.steps.len() < 30);
    assert!(e.steps.iter().all(|s| s.c_t == 1.0));
    assert_eq!(e.episode_consistency, 1.0);
    assert_eq!(e.total_exploration_cost, 0);
}

#[test]
fn horizon_of_one_logs_one_step() {
    let task = TaskSpec {
        episode_horizon: 1,
        ..reach("short")
    };
    let e = one(&task, &noisy(), Strategy::ConsistencyConsensus, 4, 2);
    assert_eq!(e.steps.len(), 1);
    assert!(!e.success);
}

#[test]
fn episode_seed_ignores_strategy_and_preset() {
    let a = one(&reach("s"), &noisy(), Strategy::Single, 4, 3);
    let b = one(&reach("s"), &WamSpec::oracle(), Strategy::ConsistencyExploring, 8, 3);
    assert_eq!(a.episode_seed, b.episode_seed);
    assert_ne!(episode_seed("s", 3), episode_seed("s", 4));
    assert_ne!(episode_seed("s", 3), episode_seed("t", 3));
}

#[test]
fn strategies_see_the_same_first_branches() {
    let task = reach("m");
    let env = Env::new(task.clone()).unwrap();
    let wam = noisy();
    let seed = episode_seed("m", 1);
    let (state, obs) = env.reset(derive_stream(9, seed, 0, lanes::TRANSITION)).unwrap();
    let competence = episode_competence(&wam, 9, seed);
    let key = DecisionKey {
        master_seed: 9,
        episode: seed,
        step: 0,
    };
    let branches = sample_branches(
        &env,
        &state,
        &obs,
        4,
        &wam,
        competence,
        &CollapseTracker::default(),
        key,
    )
    .unwrap();
    for strategy in Strategy::ALL {
        let e = one(&task, &wam, strategy, 4, 1);
        let chosen = &branches[e.steps[0].chosen_branch];
        let realized = env.step(&state, &chosen.actions).unwrap().1.latent;
        let c = consistency_score(&chosen.predicted_future, &realized, &ConsistencyConfig::default()).unwrap();
        if strategy != Strategy::WeightedConsensus {
            assert_eq!(c, e.steps[0].c_t, "{strategy}");
        }
    }
}

#[test]
fn exploration_cost_is_counted_per_decision() {
    for strategy in Strategy::ALL {
        let e = one(&reach("c"), &noisy(), strategy, 6, 0);
        let expected = if strategy == Strategy::ConsistencyExploring {
            6 * e.steps.len()
        } else {
            0
        };
        assert_eq!(e.total_exploration_cost, expected, "{strategy}");
    }
}

#[test]
fn suite_size_and_order() {
    let g = SuiteGrid {
        tasks: vec![reach("only")],
        strategies: vec![Strategy::Single],
        candidates: vec![1],
        seeds: 3,
        ..grid(vec![], vec![], 0)
    };
    let ds = run_suite(&g, g.fingerprint(), RunOptions::default()).unwrap();
    assert_eq!(ds.episodes.len(), 3);
    let seeds: Vec<u64> = ds.episodes.iter().map(|e| e.seed_index).collect();
    assert_eq!(seeds, vec![0, 1, 2]);
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let g = grid(vec![Strategy::Single, Strategy::ConsistencyConsensus], vec![1, 4], 4);
    let a = run_suite(&g, g.fingerprint(), RunOptions { jobs: Some(1) }).unwrap();
    let b = run_suite(&g, g.fingerprint(), RunOptions { jobs: Some(4) }).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("a"), &a, SuiteManifest::of(&g), None).unwrap();
    write_dataset(&dir.path().join("b"), &b, SuiteManifest::of(&g), Some("later".into())).unwrap();
    let bytes = |d: &str| std::fs::read(dir.path().join(d).join(EPISODES_FILE)).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
}

#[test]
fn grid_order_does_not_change_the_dataset() {
    let g = grid(vec![Strategy::Single, Strategy::ValuePrediction], vec![2, 3], 2);
    let mut h = g.clone();
    h.tasks.reverse();
    h.strategies.reverse();
    h.candidates.reverse();
    let a = run_suite(&g, String::new(), RunOptions::default()).unwrap();
    let b = run_suite(&h, String::new(), RunOptions::default()).unwrap();
    assert_eq!(a.episodes, b.episodes);
}

#[test]
fn invalid_grids_are_rejected() {
    let mut g = grid(vec![Strategy::Single], vec![0], 1);
    assert!(run_suite(&g, String::new(), RunOptions::default()).is_err());
    g.candidates = vec![2];
    g.seeds = 0;
    assert!(g.validate().is_err());
    g.seeds = 1;
    g.presets[0].1.bias = Bias::Vector(vec![0.0; 3]);
    let err = g.validate().unwrap_err().to_string();
    assert!(err.contains("noisy"), "{err}");
}

#[test]
fn dataset_roundtrips_through_files() {
    let g = grid(vec![Strategy::Single], vec![2], 3);
    let ds = run_suite(&g, g.fingerprint(), RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (jsonl, _) = write_dataset(dir.path(), &ds, SuiteManifest::of(&g), Some("now".into())).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    assert_eq!(read_dataset(&jsonl).unwrap(), ds);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn malformed_jsonl_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(EPISODES_FILE);
    std::fs::write(&path, "\n{not json}\n").unwrap();
    let err = read_dataset(&path).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn all_success_task_is_undetermined() {
    let g = SuiteGrid {
        presets: vec![("oracle".into(), WamSpec::oracle())],
        ..grid(vec![Strategy::Single], vec![1], 3)
    };
    let ds = run_suite(&g, String::new(), RunOptions::default()).unwrap();
    assert!(ds.episodes.iter().all(|e| e.success));
    assert!(ds.alignment.values().all(|a| *a == Alignment::Undetermined));
    let r = separability(&ds, 1, 5);
    assert!(r.pooled_d.is_none());
    assert!(r.cv.is_none());
    assert!(!r.warnings.is_empty());
    let c = collapse(&ds);
    assert_eq!(c.cells.len(), 0);
    assert_eq!(c.missing_cells.len(), 4);
    assert!(utility_gap(&ds).is_err());
}

#[test]
fn summary_counts_every_episode() {
    let g = grid(vec![Strategy::Single, Strategy::ConsistencyExploring], vec![2, 4], 3);
    let ds = run_suite(&g, String::new(), RunOptions::default()).unwrap();
    let rows = summarize(&ds);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r.episodes).sum::<usize>(), ds.episodes.len());
    for r in &rows {
        assert_eq!(r.success_rate, r.successes as f64 / r.episodes as f64);
    }
}

#[test]
fn single_ignores_candidate_count() {
    let a = one(&reach("n"), &noisy(), Strategy::Single, 1, 4);
    let b = one(&reach("n"), &noisy(), Strategy::Single, 8, 4);
    assert_eq!(a.steps.len(), b.steps.len());
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!((x.c_t, x.delta_z), (y.c_t, y.delta_z));
    }
}

#[test]
fn mitigation_against_itself_is_zero() {
    let g = grid(vec![Strategy::Single], vec![3], 4);
    let ds = run_suite(&g, String::new(), RunOptions::default()).unwrap();
    let m = mitigation(&ds, Strategy::Single, 3).unwrap();
    assert_eq!(m.pairs, 8);
    assert!(m.delta_z.iter().chain(&m.consistency).all(|&d| d == 0.0));
    assert_eq!(m.late_positive, 0.0);
    assert!(mitigation(&ds, Strategy::ConsistencyConsensus, 3).is_err());
}

#[test]
fn late_window_is_the_final_third() {
    assert_eq!(late_start(0), 0);
    assert_eq!(late_start(1), 0);
    assert_eq!(late_start(3), 2);
    assert_eq!(late_start(10), 6);
    assert_eq!(late_start(30), 20);
}

#[test]
fn stretching_maps_final_thirds_onto_each_other() {
    let xs: Vec<f64> = (0..9).map(f64::from).collect();
    let bins = 27;
    let picked: Vec<f64> = (0..bins).map(|k| stretched(&xs, bins, k)).collect();
    assert_eq!(picked[0], 0.0);
    assert_eq!(picked[bins - 1], 8.0);
    assert!(picked.windows(2).all(|w| w[0] <= w[1]));
    assert!(picked[late_start(bins)..]
        .iter()
        .all(|&x| x >= xs[late_start(xs.len())]));
    assert_eq!(
        (0..5).map(|k| stretched(&[1.0, 2.0, 3.0, 4.0, 5.0], 5, k)).sum::<f64>(),
        15.0
    );
}
