//! Builders for the concrete games: the 1-DoF line, the planar arm grid, the
//! block tower, and three small driving tasks.

mod driving;
mod grid_arm;
mod line1d;
mod tower;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::{Action, Belief, GameSpec, GameSpecParts, RobotType, State};

pub use driving::{build_driving, DrivingParams, DrivingTask};
pub use grid_arm::{build_grid_arm, GridArmParams, GridGoal};
pub use line1d::{build_line1d, Line1DParams, LineGoal};
pub use tower::{build_tower, TowerParams};

/// Label of robot type 0 in every built-in environment.
pub const CAPABLE: &str = "capable";
/// Label of robot type 1 in every built-in environment.
pub const CONFUSED: &str = "confused";

/// An environment family plus its parameters, as written in config files:
/// `{"kind": "line1d", "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum EnvConfig {
    Line1d(Line1DParams),
    GridArm(GridArmParams),
    Tower(TowerParams),
    Driving(DrivingParams),
}

impl EnvConfig {
    pub fn id(&self) -> String {
        match self {
            EnvConfig::Line1d(_) => "line1d".into(),
            EnvConfig::GridArm(_) => "grid_arm".into(),
            EnvConfig::Tower(_) => "tower".into(),
            EnvConfig::Driving(p) => format!("driving_{}", p.task.name()),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvConfig::Line1d(p) => p.horizon,
            EnvConfig::GridArm(p) => p.horizon,
            EnvConfig::Tower(p) => p.rounds,
            EnvConfig::Driving(p) => p.horizon,
        }
    }

    pub fn build(&self) -> Result<GameSpec> {
        match self {
            EnvConfig::Line1d(p) => build_line1d(p),
            EnvConfig::GridArm(p) => build_grid_arm(p),
            EnvConfig::Tower(p) => build_tower(p),
            EnvConfig::Driving(p) => build_driving(p),
        }
    }

    /// Start states swept by opacity analyses: every grid cell for the line and
    /// arm environments, the designated start elsewhere.
    pub fn sweep_states(&self, spec: &GameSpec) -> Vec<usize> {
        match self {
            EnvConfig::Line1d(_) | EnvConfig::GridArm(_) => (0..spec.states().len()).collect(),
            _ => vec![self.start_state(spec)],
        }
    }

    /// Start state of a live session.
    pub fn start_state(&self, spec: &GameSpec) -> usize {
        let found = match self {
            EnvConfig::Line1d(p) => spec.state_at(&[p.start]),
            EnvConfig::GridArm(p) => spec.state_index(&State(p.start_cell().to_vec())),
            EnvConfig::Tower(_) => spec.state_index(&State(vec![])),
            EnvConfig::Driving(p) => spec.state_index(&State(p.task.start().to_vec())),
        };
        found.unwrap_or(0)
    }

    /// Semantic description of a state for clients to draw.
    pub fn render(&self, spec: &GameSpec, state: usize) -> Value {
        match self {
            EnvConfig::Line1d(p) => line1d::render(p, spec, state),
            EnvConfig::GridArm(p) => grid_arm::render(p, spec, state),
            EnvConfig::Tower(p) => tower::render(p, spec, state),
            EnvConfig::Driving(p) => driving::render(p, spec, state),
        }
    }
}

/// Robot types in the built-in order: capable first, confused second.
pub(crate) fn two_types(capable: Vec<usize>, confused: Vec<usize>) -> Vec<RobotType> {
    vec![
        RobotType { index: 0, label: CAPABLE.into(), action_set: capable },
        RobotType { index: 1, label: CONFUSED.into(), action_set: confused },
    ]
}

/// Confused action set must be a strict subset of the capable one.
pub(crate) fn check_type_structure(capable: &[usize], confused: &[usize]) -> Result<()> {
    if !confused.iter().all(|a| capable.contains(a)) || confused.len() >= capable.len() {
        return Err(Error::Spec("confused actions must be a strict subset of capable actions".into()));
    }
    Ok(())
}

/// Tabulates an additive, clipped grid game over the box `bounds`
/// (inclusive per axis). `terminal` scores final states.
pub(crate) struct AdditiveGrid<'a> {
    pub name: String,
    pub scale: f64,
    pub bounds: Vec<(i32, i32)>,
    pub human_actions: Vec<Action>,
    pub robot_actions: Vec<Action>,
    pub robot_types: Vec<RobotType>,
    pub horizon: usize,
    pub prior: Belief,
    pub terminal: &'a dyn Fn(&[i32]) -> f64,
}

impl AdditiveGrid<'_> {
    pub fn build(self) -> Result<GameSpec> {
        let mut states: Vec<Vec<i32>> = vec![vec![]];
        for &(lo, hi) in &self.bounds {
            if lo > hi {
                return Err(Error::Spec(format!("empty axis [{lo}, {hi}]")));
            }
            states = states
                .into_iter()
                .flat_map(|prefix| {
                    (lo..=hi).map(move |c| {
                        let mut s = prefix.clone();
                        s.push(c);
                        s
                    })
                })
                .collect();
        }
        let dims = self.bounds.len();
        for a in self.human_actions.iter().chain(&self.robot_actions) {
            if a.delta.len() != dims {
                return Err(Error::Spec(format!("action {} has the wrong dimension", a.label)));
            }
        }
        let index = |s: &[i32]| -> usize {
            s.iter().zip(&self.bounds).fold(0usize, |acc, (&c, &(lo, hi))| {
                acc * (hi - lo + 1) as usize + (c - lo) as usize
            })
        };
        let mut transitions = Vec::with_capacity(states.len() * self.human_actions.len() * self.robot_actions.len());
        for s in &states {
            for h in &self.human_actions {
                for r in &self.robot_actions {
                    let next: Vec<i32> = (0..dims)
                        .map(|d| (s[d] + h.delta[d] + r.delta[d]).clamp(self.bounds[d].0, self.bounds[d].1))
                        .collect();
                    transitions.push(index(&next));
                }
            }
        }
        let terminal_rewards = states.iter().map(|s| (self.terminal)(s)).collect();
        let stage_rewards = vec![0.0; transitions.len()];
        GameSpec::from_parts(GameSpecParts {
            name: self.name,
            scale: self.scale,
            states: states.into_iter().map(State).collect(),
            human_actions: self.human_actions,
            robot_actions: self.robot_actions,
            robot_types: self.robot_types,
            transitions,
            stage_rewards,
            terminal_rewards,
            horizon: self.horizon,
            prior: self.prior,
        })
    }
}

/// Union of two labelled action lists, keeping first-seen order. Returns the
/// union plus each list's indices into it.
pub(crate) fn union_actions(a: &[Action], b: &[Action]) -> (Vec<Action>, Vec<usize>, Vec<usize>) {
    let mut all: Vec<Action> = Vec::new();
    let place = |x: &Action, all: &mut Vec<Action>| match all.iter().position(|y| y.label == x.label) {
        Some(i) => i,
        None => {
            all.push(x.clone());
            all.len() - 1
        }
    };
    let ia = a.iter().map(|x| place(x, &mut all)).collect();
    let ib = b.iter().map(|x| place(x, &mut all)).collect();
    (all, ia, ib)
}
