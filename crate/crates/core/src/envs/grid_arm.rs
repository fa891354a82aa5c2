use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_type_structure, two_types, union_actions, AdditiveGrid};
use crate::error::{Error, Result};
use crate::game::{Action, Belief, GameSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGoal {
    pub cell: [i32; 2],
    pub reward: f64,
}

/// Planar reaching on a table grid. The robot's base sits in the top-right
/// corner; the confused arm can only move down or left.
///
/// Layout and rewards are this crate's choice, not published constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridArmParams {
    pub width: i32,
    pub height: i32,
    /// Goals paying more the farther they are from the base.
    pub goals: Vec<GridGoal>,
    pub human_actions: Vec<String>,
    pub capable_actions: Vec<String>,
    pub confused_actions: Vec<String>,
    pub horizon: usize,
    pub prior_capable: f64,
}

impl Default for GridArmParams {
    fn default() -> Self {
        GridArmParams {
            width: 6,
            height: 6,
            goals: vec![
                GridGoal { cell: [3, 5], reward: 1.0 },
                GridGoal { cell: [5, 1], reward: 1.5 },
                GridGoal { cell: [0, 0], reward: 2.0 },
            ],
            human_actions: ["up", "down", "left", "right", "stay"].map(String::from).to_vec(),
            capable_actions: ["up", "down", "left", "right", "stay"].map(String::from).to_vec(),
            confused_actions: ["down", "left"].map(String::from).to_vec(),
            horizon: 4,
            prior_capable: 0.5,
        }
    }
}

impl GridArmParams {
    /// A 4x4 table with the goal pattern scaled down.
    pub fn small() -> Self {
        GridArmParams {
            width: 4,
            height: 4,
            goals: vec![
                GridGoal { cell: [1, 3], reward: 1.0 },
                GridGoal { cell: [3, 0], reward: 1.5 },
                GridGoal { cell: [0, 0], reward: 2.0 },
            ],
            horizon: 3,
            ..Default::default()
        }
    }

    pub fn base(&self) -> [i32; 2] {
        [self.width - 1, self.height - 1]
    }

    pub(crate) fn start_cell(&self) -> [i32; 2] {
        self.base()
    }
}

fn direction(label: &str) -> Result<Action> {
    let delta = match label {
        "up" => vec![0, 1],
        "down" => vec![0, -1],
        "left" => vec![-1, 0],
        "right" => vec![1, 0],
        "stay" => vec![0, 0],
        other => return Err(Error::Spec(format!("unknown arm direction {other:?}"))),
    };
    Ok(Action::new(label, delta))
}

fn directions(labels: &[String]) -> Result<Vec<Action>> {
    labels.iter().map(|l| direction(l)).collect()
}

fn manhattan(a: [i32; 2], b: [i32; 2]) -> i32 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

pub fn build_grid_arm(p: &GridArmParams) -> Result<GameSpec> {
    if p.width < 1 || p.height < 1 {
        return Err(Error::Spec("grid must be at least 1x1".into()));
    }
    let base = p.base();
    for (i, g) in p.goals.iter().enumerate() {
        let [x, y] = g.cell;
        if !(0..p.width).contains(&x) || !(0..p.height).contains(&y) {
            return Err(Error::Spec(format!("goal {:?} is off the grid", g.cell)));
        }
        if p.goals[..i].iter().any(|o| o.cell == g.cell) {
            return Err(Error::Spec(format!("duplicate goal {:?}", g.cell)));
        }
    }
    let mut by_distance: Vec<&GridGoal> = p.goals.iter().collect();
    by_distance.sort_by_key(|g| manhattan(g.cell, base));
    for w in by_distance.windows(2) {
        if manhattan(w[0].cell, base) >= manhattan(w[1].cell, base) || w[0].reward >= w[1].reward {
            return Err(Error::Spec("goal rewards must strictly increase with distance from the base".into()));
        }
    }
    let human = directions(&p.human_actions)?;
    let (robot, cap_idx, conf_idx) = union_actions(&directions(&p.capable_actions)?, &directions(&p.confused_actions)?);
    check_type_structure(&cap_idx, &conf_idx)?;
    let goals = p.goals.clone();
    let terminal = move |s: &[i32]| goals.iter().find(|g| g.cell == [s[0], s[1]]).map_or(0.0, |g| g.reward);
    AdditiveGrid {
        name: "grid_arm".into(),
        scale: 1.0,
        bounds: vec![(0, p.width - 1), (0, p.height - 1)],
        human_actions: human,
        robot_actions: robot,
        robot_types: two_types(cap_idx, conf_idx),
        horizon: p.horizon,
        prior: Belief::from_scalar(p.prior_capable)?,
        terminal: &terminal,
    }
    .build()
}

pub(super) fn render(p: &GridArmParams, spec: &GameSpec, state: usize) -> Value {
    let cell = &spec.states()[state].0;
    json!({
        "kind": "grid",
        "width": p.width,
        "height": p.height,
        "cell": cell,
        "base": p.base(),
        "goals": p.goals,
    })
}
