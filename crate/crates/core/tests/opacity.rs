use proptest::prelude::*;

use opaque_core::envs::{build_grid_arm, build_line1d, GridArmParams, Line1DParams};
use opaque_core::opacity::{classify_with, expected_rollout_value, rollout_with, Verdict};
use opaque_core::{solve, AugmentedState, Belief, GameSpec, HumanModel, RobotTiming, SolutionTable};

const TIMING: RobotTiming = RobotTiming::Responsive;

fn line(t: usize) -> GameSpec {
    build_line1d(&Line1DParams::default()).unwrap().with_horizon(t)
}

fn all_roots(spec: &GameSpec, priors: &[f64]) -> Vec<AugmentedState> {
    (0..spec.states().len())
        .flat_map(|s| priors.iter().map(move |&p| AugmentedState::root(s, Belief::from_scalar(p).unwrap())))
        .collect()
}

#[test]
fn witnesses_replay_to_their_final_beliefs() {
    let spec = line(4);
    let roots = all_roots(&spec, &[0.2, 0.5, 0.8]);
    let table = solve(&spec, &HumanModel::incremental(0.3).unwrap(), &roots).unwrap();
    let mut seen = 0;
    for x in &roots {
        let v = classify_with(&table, x, TIMING).unwrap();
        if let Some(w) = v.witness {
            seen += 1;
            for i in 0..2 {
                let r = rollout_with(&table, x, i, Some(&w.human_sequences[i]), TIMING).unwrap();
                assert_eq!(r.final_belief(), &w.final_beliefs[i]);
            }
            assert!(!w.final_beliefs[0].approx_eq(&w.final_beliefs[1], 1e-9));
        } else {
            assert_eq!(v.verdict, Verdict::FullyOpaque);
        }
    }
    assert!(seen > 0);
}

/// Roots whose rational paths are the same for both types.
fn shared_rational_path(table: &SolutionTable, x: &AugmentedState) -> bool {
    let a = rollout_with(table, x, 0, None, TIMING).unwrap();
    let b = rollout_with(table, x, 1, None, TIMING).unwrap();
    a.robot_actions == b.robot_actions
}

#[test]
fn rational_rollouts_realize_the_root_value() {
    let spec = line(4);
    let roots = all_roots(&spec, &[0.0, 0.3, 0.6, 1.0]);
    let table = solve(&spec, &HumanModel::incremental(0.3).unwrap(), &roots).unwrap();
    let mut checked = 0;
    for x in &roots {
        if x.belief.get(0) == 0.0 || x.belief.get(0) == 1.0 || shared_rational_path(&table, x) {
            let v = expected_rollout_value(&table, x, TIMING).unwrap();
            assert!((v - table.value(x).unwrap()).abs() < 1e-9, "{x}");
            checked += 1;
        }
    }
    assert!(checked > roots.len() / 2);
}

#[test]
fn bayesian_human_learns_from_any_divergence() {
    let spec = build_grid_arm(&GridArmParams::small()).unwrap();
    let roots = all_roots(&spec, &[0.2, 0.5, 0.8]);
    let table = solve(&spec, &HumanModel::Bayesian, &roots).unwrap();
    for x in &roots {
        let v = classify_with(&table, x, TIMING).unwrap();
        let a = rollout_with(&table, x, 0, None, TIMING).unwrap();
        let b = rollout_with(&table, x, 1, None, TIMING).unwrap();
        let differ = a.robot_actions != b.robot_actions;
        assert_eq!(v.verdict == Verdict::Revealing, differ, "{x}");
    }
}

#[test]
fn fully_opaque_roots_are_rationally_opaque() {
    let spec = line(3);
    let roots = all_roots(&spec, &[0.1, 0.4, 0.7]);
    let table = solve(&spec, &HumanModel::incremental(0.5).unwrap(), &roots).unwrap();
    for x in &roots {
        let v = classify_with(&table, x, TIMING).unwrap();
        if v.verdict != Verdict::Revealing {
            assert!(v.rational_final_beliefs[0].approx_eq(&v.rational_final_beliefs[1], 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classification_is_deterministic(s in 0usize..21, p in 0usize..=10, rate in 1usize..=9, t in 1usize..=4) {
        let spec = line(t);
        let model = HumanModel::incremental(rate as f64 / 10.0).unwrap();
        let x = AugmentedState::root(s, Belief::from_scalar(p as f64 / 10.0).unwrap());
        let a = classify_with(&solve(&spec, &model, &[x.clone()]).unwrap(), &x, TIMING).unwrap();
        let b = classify_with(&solve(&spec, &model, &[x.clone()]).unwrap(), &x, TIMING).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rollout_beliefs_stay_on_the_simplex(s in 0usize..21, p in 0usize..=10, seq in prop::collection::vec(0usize..3, 4)) {
        let spec = line(4);
        let model = HumanModel::incremental(0.3).unwrap();
        let x = AugmentedState::root(s, Belief::from_scalar(p as f64 / 10.0).unwrap());
        let table = solve(&spec, &model, &[x.clone()]).unwrap();
        for i in 0..2 {
            for timing in [RobotTiming::Committed, RobotTiming::Responsive] {
                let r = rollout_with(&table, &x, i, Some(&seq), timing).unwrap();
                for y in &r.path {
                    let sum: f64 = y.belief.probs().iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                    prop_assert!(y.belief.probs().iter().all(|&q| (0.0..=1.0).contains(&q)));
                }
            }
        }
    }
}
