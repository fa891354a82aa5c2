//! Shared-control driving on small grids. The car moves by the sum of the
//! human's and the robot's inputs; the confused robot cannot steer. Each
//! task scores its final state in [0, 1]. The geometry is a minimal
//! abstraction of the three scenarios, not a vehicle model.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_type_structure, two_types, union_actions};
use crate::error::Result;
use crate::game::{Action, Belief, GameSpec, GameSpecParts, State};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingTask {
    #[default]
    Passing,
    Turning,
    Parking,
}

impl DrivingTask {
    pub fn name(&self) -> &'static str {
        match self {
            DrivingTask::Passing => "passing",
            DrivingTask::Turning => "turning",
            DrivingTask::Parking => "parking",
        }
    }

    fn bounds(&self) -> [(i32, i32); 2] {
        match self {
            DrivingTask::Passing => [(-1, 2), (0, 6)],
            DrivingTask::Turning => [(0, 4), (0, 3)],
            DrivingTask::Parking => [(0, 1), (0, 3)],
        }
    }

    /// `[x, y, hazard flag]`
    pub(crate) fn start(&self) -> [i32; 3] {
        match self {
            DrivingTask::Passing | DrivingTask::Turning => [0, 0, 0],
            DrivingTask::Parking => [1, 0, 0],
        }
    }

    /// Cells that set the sticky hazard flag (collision or leaving the road).
    fn hazard(&self, x: i32, y: i32) -> bool {
        match self {
            DrivingTask::Passing => x == 0 && (y == 2 || y == 3),
            DrivingTask::Turning => !(x == 0 || y == 2),
            DrivingTask::Parking => x == 0 && y != 1,
        }
    }

    fn obstacles(&self) -> Vec<[i32; 2]> {
        let [(xl, xh), (yl, yh)] = self.bounds();
        (xl..=xh)
            .flat_map(|x| (yl..=yh).map(move |y| [x, y]))
            .filter(|&[x, y]| self.hazard(x, y))
            .collect()
    }

    fn score(&self, x: i32, y: i32, flagged: bool) -> f64 {
        match self {
            DrivingTask::Passing => {
                let progress = f64::from(y) / 6.0;
                let on_road = f64::from((x == 0 || x == 1) as i32);
                let no_collision = f64::from(!flagged as i32);
                (progress + on_road + no_collision) / 3.0
            }
            DrivingTask::Turning => {
                if flagged {
                    return 0.0;
                }
                let speed = (f64::from(x + y) / 6.0).min(1.0);
                let turned = f64::from((x >= 1) as i32);
                0.5 * speed + 0.5 * turned
            }
            DrivingTask::Parking => match (flagged, x, y) {
                (true, _, _) => 0.0,
                (false, 0, 1) => 1.0,
                (false, 1, 3) => 0.8,
                _ => 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivingParams {
    pub task: DrivingTask,
    pub horizon: usize,
    pub prior_capable: f64,
}

impl Default for DrivingParams {
    fn default() -> Self {
        DrivingParams { task: DrivingTask::Passing, horizon: 3, prior_capable: 0.5 }
    }
}

fn controls(labels: &[&str]) -> Vec<Action> {
    labels
        .iter()
        .map(|&l| {
            let delta = match l {
                "straight" => vec![0, 1],
                "left" => vec![-1, 0],
                "right" => vec![1, 0],
                _ => vec![0, 0],
            };
            Action::new(l, delta)
        })
        .collect()
}

pub fn build_driving(p: &DrivingParams) -> Result<GameSpec> {
    let task = p.task;
    let [(xl, xh), (yl, yh)] = task.bounds();
    let human = controls(&["straight", "left", "right", "brake"]);
    let (robot, cap, conf) =
        union_actions(&controls(&["straight", "brake", "left", "right"]), &controls(&["straight", "brake"]));
    check_type_structure(&cap, &conf)?;

    let mut states = Vec::new();
    for x in xl..=xh {
        for y in yl..=yh {
            for f in 0..2 {
                states.push(vec![x, y, f]);
            }
        }
    }
    let index = |x: i32, y: i32, f: i32| (((x - xl) * (yh - yl + 1) + (y - yl)) * 2 + f) as usize;
    let mut transitions = Vec::new();
    for s in &states {
        for h in &human {
            for r in &robot {
                let (dx, dy) = (h.delta[0] + r.delta[0], h.delta[1] + r.delta[1]);
                let nx = (s[0] + dx).clamp(xl, xh);
                let ny = (s[1] + dy).clamp(yl, yh);
                // a two-cell move also sweeps the cell in between
                let mid = task.hazard((s[0] + nx) / 2, (s[1] + ny) / 2) && (dx.abs() == 2 || dy.abs() == 2);
                let flag = s[2] == 1 || task.hazard(nx, ny) || mid;
                transitions.push(index(nx, ny, flag as i32));
            }
        }
    }
    let terminal_rewards = states.iter().map(|s| task.score(s[0], s[1], s[2] == 1)).collect();
    GameSpec::from_parts(GameSpecParts {
        name: format!("driving_{}", task.name()),
        scale: 1.0,
        stage_rewards: vec![0.0; transitions.len()],
        states: states.into_iter().map(State).collect(),
        human_actions: human,
        robot_actions: robot,
        robot_types: two_types(cap, conf),
        transitions,
        terminal_rewards,
        horizon: p.horizon,
        prior: Belief::from_scalar(p.prior_capable)?,
    })
}

pub(super) fn render(p: &DrivingParams, spec: &GameSpec, state: usize) -> Value {
    let s = &spec.states()[state].0;
    let [(xl, xh), (yl, yh)] = p.task.bounds();
    json!({
        "kind": "driving",
        "task": p.task.name(),
        "car": [s[0], s[1]],
        "hazard": s[2] == 1,
        "bounds": {"x": [xl, xh], "y": [yl, yh]},
        "obstacles": p.task.obstacles(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(g: &GameSpec, s: usize, h: &str, r: &str) -> usize {
        g.transition(s, g.human_action_by_label(h).unwrap(), g.robot_action_by_label(r).unwrap()).unwrap()
    }

    #[test]
    fn passing_collision_zeroes_the_avoidance_component() {
        let g = build_driving(&DrivingParams::default()).unwrap();
        let start = g.state_index(&State(vec![0, 0, 0])).unwrap();
        let s = step(&g, start, "straight", "straight");
        assert_eq!(g.states()[s].0, vec![0, 2, 1]);
        // progress 2/6, on road, collided
        let expected = (2.0 / 6.0 + 1.0 + 0.0) / 3.0;
        assert!((g.terminal_reward(s) - expected).abs() < 1e-12);
    }

    #[test]
    fn passing_around_the_obstacle_scores_high() {
        let g = build_driving(&DrivingParams::default()).unwrap();
        let mut s = g.state_index(&State(vec![0, 0, 0])).unwrap();
        s = step(&g, s, "right", "straight");
        s = step(&g, s, "straight", "straight");
        s = step(&g, s, "straight", "straight");
        assert_eq!(g.states()[s].0, vec![1, 5, 0]);
        assert!(g.terminal_reward(s) > 0.9);
    }

    #[test]
    fn scores_are_normalized() {
        for task in [DrivingTask::Passing, DrivingTask::Turning, DrivingTask::Parking] {
            let g = build_driving(&DrivingParams { task, ..Default::default() }).unwrap();
            for s in 0..g.states().len() {
                let r = g.terminal_reward(s);
                assert!((0.0..=1.0).contains(&r), "{task:?} {r}");
            }
        }
    }

    #[test]
    fn parking_spot_above_start() {
        let g = build_driving(&DrivingParams { task: DrivingTask::Parking, ..Default::default() }).unwrap();
        let s = g.state_index(&State(vec![1, 0, 0])).unwrap();
        let s = step(&g, s, "left", "straight");
        assert_eq!(g.states()[s].0, vec![0, 1, 0]);
        assert_eq!(g.terminal_reward(s), 1.0);
    }
}
