use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::two_types;
use crate::error::{Error, Result};
use crate::game::{Action, Belief, GameSpec, GameSpecParts, State};

const SMALL: i32 = 0;
const LARGE: i32 = 1;

/// Collaborative block stacking. Each round the human and the robot each add
/// one block; the state is the sequence of block sizes placed so far. Block
/// colors are cosmetic and only appear in the render model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TowerParams {
    pub rounds: usize,
    pub match_reward: f64,
    pub mismatch_reward: f64,
    /// Added per large block placed.
    pub large_bonus: f64,
    pub colors: Vec<String>,
    pub prior_capable: f64,
}

impl Default for TowerParams {
    fn default() -> Self {
        TowerParams {
            rounds: 3,
            match_reward: 0.5,
            mismatch_reward: -0.5,
            large_bonus: 0.1,
            colors: ["red", "blue", "green", "yellow"].map(String::from).to_vec(),
            prior_capable: 0.5,
        }
    }
}

impl TowerParams {
    pub fn round_reward(&self, human: i32, robot: i32) -> f64 {
        let base = if human == robot { self.match_reward } else { self.mismatch_reward };
        base + self.large_bonus * f64::from((human == LARGE) as i32 + (robot == LARGE) as i32)
    }
}

fn size_name(kind: i32) -> &'static str {
    if kind == LARGE {
        "large"
    } else {
        "small"
    }
}

pub fn build_tower(p: &TowerParams) -> Result<GameSpec> {
    if p.colors.is_empty() {
        return Err(Error::Spec("tower needs at least one color".into()));
    }
    let max_len = 2 * p.rounds;
    let mut states: Vec<Vec<i32>> = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..p.rounds {
        let mut next = Vec::new();
        for s in &frontier {
            for h in [SMALL, LARGE] {
                for r in [SMALL, LARGE] {
                    let mut t: Vec<i32> = s.clone();
                    t.extend([h, r]);
                    next.push(t);
                }
            }
        }
        states.extend(next.iter().cloned());
        frontier = next;
    }
    let index: std::collections::HashMap<Vec<i32>, usize> =
        states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let kinds = [SMALL, LARGE];
    let mut transitions = Vec::new();
    let mut stage_rewards = Vec::new();
    for s in &states {
        for &h in &kinds {
            for &r in &kinds {
                if s.len() < max_len {
                    let mut t = s.clone();
                    t.extend([h, r]);
                    transitions.push(index[&t]);
                    stage_rewards.push(p.round_reward(h, r));
                } else {
                    transitions.push(index[s]);
                    stage_rewards.push(0.0);
                }
            }
        }
    }
    let blocks = || vec![Action::new("small", vec![SMALL]), Action::new("large", vec![LARGE])];
    GameSpec::from_parts(GameSpecParts {
        name: "tower".into(),
        scale: 1.0,
        terminal_rewards: vec![0.0; states.len()],
        states: states.into_iter().map(State).collect(),
        human_actions: blocks(),
        robot_actions: blocks(),
        robot_types: two_types(vec![0, 1], vec![0]),
        transitions,
        stage_rewards,
        horizon: p.rounds,
        prior: Belief::from_scalar(p.prior_capable)?,
    })
}

pub(super) fn render(p: &TowerParams, spec: &GameSpec, state: usize) -> Value {
    let seq = &spec.states()[state].0;
    let blocks: Vec<Value> = seq
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            json!({
                "size": size_name(kind),
                "color": p.colors[i % p.colors.len()],
                "placed_by": if i % 2 == 0 { "human" } else { "robot" },
            })
        })
        .collect();
    json!({ "kind": "tower", "blocks": blocks, "rounds": p.rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Trajectory;

    #[test]
    fn round_rewards_follow_the_formula() {
        let p = TowerParams::default();
        assert_eq!(p.round_reward(SMALL, SMALL), 0.5);
        assert!((p.round_reward(LARGE, LARGE) - 0.7).abs() < 1e-12);
        assert!((p.round_reward(LARGE, SMALL) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn one_matching_small_round_pays_half() {
        let g = build_tower(&TowerParams { rounds: 1, ..Default::default() }).unwrap();
        let small = g.human_action_by_label("small").unwrap();
        let r = g.robot_action_by_label("small").unwrap();
        let traj = Trajectory { start: g.state_index(&State(vec![])).unwrap(), steps: vec![(small, r)] };
        assert_eq!(g.total_reward(&traj).unwrap(), 0.5);
    }

    #[test]
    fn confused_robot_against_large_picks() {
        let g = build_tower(&TowerParams::default()).unwrap();
        let large = g.human_action_by_label("large").unwrap();
        let small = g.robot_action_by_label("small").unwrap();
        let start = g.state_index(&State(vec![])).unwrap();
        let traj = Trajectory { start, steps: vec![(large, small); 3] };
        let per_round = -0.5 + 0.1 * 1.0;
        assert!((g.total_reward(&traj).unwrap() - 3.0 * per_round).abs() < 1e-12);
    }

    #[test]
    fn tower_grows_two_blocks_per_round() {
        let g = build_tower(&TowerParams::default()).unwrap();
        let start = g.state_index(&State(vec![])).unwrap();
        let mut s = start;
        for round in 1..=3 {
            s = g.transition(s, 1, 0).unwrap();
            assert_eq!(g.states()[s].0.len(), 2 * round);
        }
        let p = TowerParams::default();
        let blocks = render(&p, &g, s)["blocks"].as_array().unwrap().len();
        assert_eq!(blocks, 6);
        let (lo, hi) = g.reward_range(start);
        assert!((lo + 1.2).abs() < 1e-12 && (hi - 2.1).abs() < 1e-12);
    }
}
