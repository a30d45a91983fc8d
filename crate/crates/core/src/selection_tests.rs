use super::*;
use crate::envs::TaskSpec;
use crate::primitives::{derive_stream, mse_distance};
use crate::wam::{sample_branches, CollapseTracker, DecisionKey, WamSpec};
use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
use proptest::strategy::Strategy as PropStrategy;

fn branch(heading: f64, future: Vec<f64>, value: Option<f64>) -> Branch {
    Branch {
        actions: vec![ActionVec::new(vec![1.0], vec![heading])],
        predicted_future: Latent::new(future).unwrap(),
        predicted_value: value,
        perturbed: false,
    }
}

fn env(noise: f64) -> Env {
    Env::new(TaskSpec {
        noise_std: noise,
        init_spread: 0.4,
        ..TaskSpec::point_reach("sel", [1.2, -0.7])
    })
    .unwrap()
}

fn noisy_branches(env: &Env, state: &EnvState, n: usize, step: u64) -> Vec<Branch> {
    let wam = WamSpec {
        pred_noise_std: 0.05,
        competence: 0.5,
        policy_noise_std: 0.3,
        value_noise_std: 0.1,
        ..WamSpec::default()
    };
    let obs = env.observe(state);
    let key = DecisionKey {
        master_seed: 21,
        episode: 4,
        step,
    };
    sample_branches(env, state, &obs, n, &wam, 0.5, &CollapseTracker::default(), key).unwrap()
}

#[test]
fn strategy_names_roundtrip() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert!("greedy".parse::<Strategy>().is_err());
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax_lowest(&[0.2, 0.9, 0.9, 0.1]), Some(1));
    assert_eq!(argmax_lowest(&[f64::NAN, 0.0]), Some(1));
    assert_eq!(argmax_lowest::<f64>(&[]), None);
}

#[test]
fn single_takes_the_first_branch() {
    let bs = vec![branch(0.1, vec![0.0], None), branch(0.2, vec![1.0], None)];
    let out = select_single(&bs).unwrap();
    assert_eq!(out.chosen_index, 0);
    assert_eq!(out.executed_action, bs[0].actions);
    assert!(select_single(&[]).is_err());
}

#[test]
fn value_selection_examples() {
    let mk = |vs: &[f64]| vs.iter().map(|&v| branch(0.0, vec![0.0], Some(v))).collect::<Vec<_>>();
    assert_eq!(select_by_value(&mk(&[0.1, 0.9, 0.5])).unwrap().chosen_index, 1);
    assert_eq!(select_by_value(&mk(&[0.4, 0.4, 0.4])).unwrap().chosen_index, 0);
    let mut bs = mk(&[0.1, 0.2]);
    bs[1].predicted_value = None;
    assert!(matches!(
        select_by_value(&bs),
        Err(Error::MissingValue { branch: 1, .. })
    ));
}

#[test]
fn consensus_examples() {
    let cfg = ConsistencyConfig::default();
    let sel = SelectionConfig::new(Strategy::ConsistencyConsensus, 3);
    let same: Vec<_> = (0..3).map(|_| branch(0.0, vec![1.0, 2.0], None)).collect();
    let out = select_by_consensus(&same, &cfg, &sel).unwrap();
    assert_eq!(out.chosen_index, 0);
    for w in out.weights.unwrap() {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    let one = select_by_consensus(&same[..1], &cfg, &sel).unwrap();
    assert_eq!(one.weights, Some(vec![1.0]));
    assert!(select_by_consensus(&[], &cfg, &sel).is_err());
}

#[test]
fn logistic_weights() {
    let w = softmax_weights(&[1.0, 0.0], 1.0).unwrap();
    let e = std::f64::consts::E;
    assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
    assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
    assert!((w[0] - 0.7311).abs() < 5e-5 && (w[1] - 0.2689).abs() < 5e-5);
    let w32 = softmax_weights(&[1.0f32, 0.0], 1.0).unwrap();
    assert!((w32[0] - 0.7311).abs() < 1e-4);
}

#[test]
fn weighted_blend_of_opposite_headings_points_between() {
    let cfg = ConsistencyConfig::default();
    let sel = SelectionConfig::new(Strategy::WeightedConsensus, 2);
    // symmetric futures give equal weights
    let bs = vec![branch(3.0, vec![0.0], None), branch(-3.0, vec![0.0], None)];
    let out = select_weighted_consensus(&bs, &cfg, &sel).unwrap();
    assert_eq!(out.weights, Some(vec![0.5, 0.5]));
    assert_eq!(out.executed_action[0].angular[0], 0.0);
    assert_eq!(out.executed_action[0].linear[0], 1.0);
}

#[test]
fn weighted_identical_branches_execute_the_common_action() {
    let cfg = ConsistencyConfig::default();
    let sel = SelectionConfig::new(Strategy::WeightedConsensus, 4);
    let bs: Vec<_> = (0..4).map(|_| branch(0.7, vec![0.3, 0.1], None)).collect();
    let out = select_weighted_consensus(&bs, &cfg, &sel).unwrap();
    let a = &out.executed_action[0];
    assert!((a.angular[0] - 0.7).abs() < 1e-12 && (a.linear[0] - 1.0).abs() < 1e-12);
}

#[test]
fn sharp_temperature_converges_to_the_top_branch() {
    let cfg = ConsistencyConfig::default();
    let sel = SelectionConfig {
        tau: 1e-6,
        ..SelectionConfig::new(Strategy::WeightedConsensus, 3)
    };
    let bs = vec![
        branch(0.5, vec![0.0, 0.0], None),
        branch(-1.0, vec![3.0, 0.0], None),
        branch(2.0, vec![0.5, 0.2], None),
    ];
    let out = select_weighted_consensus(&bs, &cfg, &sel).unwrap();
    let top = out.chosen_index;
    let got = &out.executed_action[0];
    let want = &bs[top].actions[0];
    assert!((got.angular[0] - want.angular[0]).abs() < 1e-6);
    assert!((got.linear[0] - want.linear[0]).abs() < 1e-6);
}

#[test]
fn exploring_with_an_oracle_ties_to_zero() {
    let env = env(0.0);
    let (state, obs) = env.reset(derive_stream(3, 1, 0, 0)).unwrap();
    let oracle = WamSpec {
        competence: 0.5,
        policy_noise_std: 0.3,
        ..WamSpec::oracle()
    };
    let key = DecisionKey {
        master_seed: 1,
        episode: 1,
        step: 0,
    };
    let bs = sample_branches(&env, &state, &obs, 6, &oracle, 0.5, &CollapseTracker::default(), key).unwrap();
    let (out, _, _) = select_by_exploring(&bs, &env, &state.snapshot(), &ConsistencyConfig::default()).unwrap();
    assert!(out.scores.iter().all(|&c| c == 1.0));
    assert_eq!(out.chosen_index, 0);
    assert_eq!(out.exploration_cost, 6);
}

#[test]
fn exploring_finds_the_exact_branch() {
    let env = env(0.0);
    let (state, _) = env.reset(derive_stream(3, 2, 0, 0)).unwrap();
    let mut bs = noisy_branches(&env, &state, 8, 0);
    let exact = env.step(&state, &bs[5].actions).unwrap().1.latent;
    bs[5].predicted_future = exact;
    let (out, _, _) = select_by_exploring(&bs, &env, &state.snapshot(), &ConsistencyConfig::default()).unwrap();
    assert_eq!(out.chosen_index, 5);
    assert_eq!(out.scores[5], 1.0);
}

#[test]
fn exploring_is_independent_of_evaluation_order() {
    let env = env(0.05);
    let cfg = ConsistencyConfig::default();
    let (state, _) = env.reset(derive_stream(9, 9, 0, 0)).unwrap();
    let snap = state.snapshot();
    let bs = noisy_branches(&env, &state, 8, 2);
    let forward: Vec<f64> = bs
        .iter()
        .map(|b| score_by_execution(b, &env, &snap, &cfg).unwrap().0)
        .collect();
    let mut order: Vec<usize> = (0..8).collect();
    order.reverse();
    order.swap(1, 5);
    let mut permuted = [0.0; 8];
    for &i in &order {
        permuted[i] = score_by_execution(&bs[i], &env, &snap, &cfg).unwrap().0;
    }
    assert_eq!(forward, permuted);
    let (out, next, _) = select_by_exploring(&bs, &env, &snap, &cfg).unwrap();
    assert_eq!(out.scores, forward);
    // the winner is replayed from the snapshot
    let replay = env.step(&snap, &bs[out.chosen_index].actions).unwrap().0;
    assert!(next.same_as(&replay));
}

#[test]
fn single_candidate_matches_single_for_every_strategy() {
    let env = env(0.02);
    let (state, _) = env.reset(derive_stream(4, 4, 0, 0)).unwrap();
    let bs = noisy_branches(&env, &state, 1, 0);
    let cfg = ConsistencyConfig::default();
    let base = select_single(&bs).unwrap();
    for strategy in Strategy::ALL {
        let sel = SelectionConfig::new(strategy, 1);
        let out = select(&bs, &sel, &cfg, &env, &state).unwrap().outcome;
        assert_eq!(out.chosen_index, base.chosen_index, "{strategy}");
        assert_eq!(out.executed_action, base.executed_action, "{strategy}");
    }
}

#[test]
fn consensus_mean_is_a_better_proxy_than_any_single_prediction() {
    let sigma = 0.5;
    let n = 8;
    let mut s = derive_stream(77, 0, 0, 0);
    let (mut mean_err, mut single_err) = (0.0, 0.0);
    for _ in 0..1000 {
        let truth: Vec<f64> = (0..16).map(|_| s.uniform(-1.0, 1.0)).collect();
        let preds: Vec<Latent<f64>> = (0..n)
            .map(|_| Latent::new(truth.iter().map(|&t| t + s.normal(sigma)).collect()).unwrap())
            .collect();
        let truth = Latent::new(truth).unwrap();
        let consensus = mean_latent(&preds).unwrap();
        let e_mean = mse_distance(&consensus, &truth).unwrap();
        let e_single: f64 = preds.iter().map(|p| mse_distance(p, &truth).unwrap()).sum::<f64>() / n as f64;
        assert!(e_mean < e_single);
        mean_err += e_mean;
        single_err += e_single;
    }
    let ratio = (mean_err / single_err).sqrt();
    let target = 1.0 / (n as f64).sqrt();
    assert!((ratio - target).abs() / target < 0.15, "{ratio}");
}

#[test]
fn rejects_bad_selection_config() {
    assert!(SelectionConfig::new(Strategy::Single, 0).validate().is_err());
    let hot = SelectionConfig {
        tau: 0.0,
        ..SelectionConfig::new(Strategy::Single, 2)
    };
    assert!(hot.validate().is_err());
}

fn futures_strategy() -> impl PropStrategy<Value = Vec<Vec<f64>>> {
    (1usize..10, 1usize..6).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n))
}

proptest! {
    #[test]
    fn weights_lie_on_the_simplex(scores in prop::collection::vec(-50.0f64..50.0, 1..20), tau in 1e-3f64..100.0) {
        let w = softmax_weights(&scores, tau).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn winner_is_temperature_invariant(scores in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let picks: Vec<_> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&tau| argmax_lowest(&softmax_weights(&scores, tau).unwrap()))
            .collect();
        prop_assert_eq!(picks[0], argmax_lowest(&scores));
        prop_assert!(picks.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn consensus_winner_is_alpha_and_tau_invariant(futures in futures_strategy()) {
        let bs: Vec<Branch> = futures.into_iter().map(|f| branch(0.0, f, None)).collect();
        let mut picks = vec![];
        for alpha in [0.01, 0.1, 1.0] {
            for tau in [0.1, 1.0, 10.0] {
                let cfg = ConsistencyConfig::with_alpha(alpha).unwrap();
                let sel = SelectionConfig { tau, ..SelectionConfig::new(Strategy::ConsistencyConsensus, bs.len()) };
                picks.push(select_by_consensus(&bs, &cfg, &sel).unwrap().chosen_index);
            }
        }
        prop_assert!(picks.windows(2).all(|p| p[0] == p[1]), "{:?}", picks);
    }
}

#[test]
fn exploring_winner_is_alpha_invariant() {
    let env = env(0.03);
    for ep in 0..30 {
        let (state, _) = env.reset(derive_stream(5, ep, 0, 0)).unwrap();
        let bs = noisy_branches(&env, &state, 8, ep);
        let picks: Vec<usize> = [0.01, 0.1, 1.0]
            .iter()
            .map(|&a| {
                let cfg = ConsistencyConfig::with_alpha(a).unwrap();
                select_by_exploring(&bs, &env, &state.snapshot(), &cfg)
                    .unwrap()
                    .0
                    .chosen_index
            })
            .collect();
        assert!(picks.windows(2).all(|p| p[0] == p[1]), "{picks:?}");
    }
}

#[test]
fn two_candidates_always_tie_under_consensus() {
    let env = env(0.02);
    let cfg = ConsistencyConfig::default();
    let sel = SelectionConfig::new(Strategy::ConsistencyConsensus, 2);
    for seed in 0..200 {
        let (state, _) = env.reset(derive_stream(seed, 1, 0, 0)).unwrap();
        let branches = noisy_branches(&env, &state, 2, seed);
        assert_eq!(select_by_consensus(&branches, &cfg, &sel).unwrap().chosen_index, 0);
    }
}

#[test]
fn tolerant_argmin() {
    assert_eq!(argmin_within(&[1.0 + 1e-15, 1.0, 2.0], 1e-12), Some(0));
    assert_eq!(argmin_within(&[1.1, 1.0, 2.0], 1e-12), Some(1));
    assert_eq!(argmin_within(&[f64::NAN, 0.0, 0.0], 1e-12), Some(1));
    assert_eq!(argmin_within::<f64>(&[], 1e-12), None);
}
