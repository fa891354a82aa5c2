use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_type_structure, two_types, union_actions, AdditiveGrid};
use crate::error::{Error, Result};
use crate::game::{Action, Belief, GameSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineGoal {
    pub position: f64,
    pub reward: f64,
}

/// The 1-DoF reaching task on a bounded line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Line1DParams {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub human_actions: Vec<f64>,
    pub capable_actions: Vec<f64>,
    pub confused_actions: Vec<f64>,
    /// Terminal rewards; every other final position pays 0.
    pub goals: Vec<LineGoal>,
    pub horizon: usize,
    /// Prior probability that the robot is capable.
    pub prior_capable: f64,
    /// Start position for live sessions.
    pub start: f64,
}

impl Default for Line1DParams {
    /// Human actions with the same magnitude as the robot's, as used in sweeps.
    fn default() -> Self {
        Line1DParams {
            lower: 0.0,
            upper: 2.0,
            step: 0.1,
            human_actions: vec![-0.1, 0.0, 0.1],
            capable_actions: vec![-0.1, 0.1],
            confused_actions: vec![-0.1],
            goals: vec![LineGoal { position: 0.0, reward: 1.0 }, LineGoal { position: 2.0, reward: 2.0 }],
            horizon: 5,
            prior_capable: 0.2,
            start: 0.6,
        }
    }
}

impl Line1DParams {
    /// The worked example: human steps of 0.2, five timesteps, prior 0.2.
    pub fn worked_example() -> Self {
        Line1DParams { human_actions: vec![-0.2, 0.0, 0.2], ..Default::default() }
    }
}

pub(crate) fn action_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:+}")
    }
}

fn to_units(v: f64, step: f64, what: &str) -> Result<i32> {
    let u = v / step;
    if (u - u.round()).abs() > 1e-9 {
        return Err(Error::Spec(format!("{what} {v} is not a multiple of the grid step {step}")));
    }
    Ok(u.round() as i32)
}

fn actions(values: &[f64], step: f64) -> Result<Vec<Action>> {
    values
        .iter()
        .map(|&v| Ok(Action::new(action_label(v), vec![to_units(v, step, "action")?])))
        .collect()
}

pub fn build_line1d(p: &Line1DParams) -> Result<GameSpec> {
    if !(p.step > 0.0) || p.upper <= p.lower {
        return Err(Error::Spec("line bounds/step are malformed".into()));
    }
    let lo = to_units(p.lower, p.step, "bound")?;
    let hi = to_units(p.upper, p.step, "bound")?;
    let human = actions(&p.human_actions, p.step)?;
    let capable = actions(&p.capable_actions, p.step)?;
    let confused = actions(&p.confused_actions, p.step)?;
    let (robot, cap_idx, conf_idx) = union_actions(&capable, &confused);
    check_type_structure(&cap_idx, &conf_idx)?;
    let goals: Vec<(i32, f64)> = p
        .goals
        .iter()
        .map(|g| Ok((to_units(g.position, p.step, "goal")?, g.reward)))
        .collect::<Result<_>>()?;
    let terminal = move |s: &[i32]| goals.iter().find(|(pos, _)| *pos == s[0]).map_or(0.0, |g| g.1);
    AdditiveGrid {
        name: "line1d".into(),
        scale: p.step,
        bounds: vec![(lo, hi)],
        human_actions: human,
        robot_actions: robot,
        robot_types: two_types(cap_idx, conf_idx),
        horizon: p.horizon,
        prior: Belief::from_scalar(p.prior_capable)?,
        terminal: &terminal,
    }
    .build()
}

pub(super) fn render(p: &Line1DParams, spec: &GameSpec, state: usize) -> Value {
    json!({
        "kind": "line",
        "position": spec.state_values(state)[0],
        "bounds": [p.lower, p.upper],
        "goals": p.goals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_shape() {
        let g = build_line1d(&Line1DParams::worked_example()).unwrap();
        assert_eq!(g.states().len(), 21);
        assert_eq!(g.human_actions().len(), 3);
        assert_eq!(g.n_types(), 2);
        assert_eq!(g.terminal_reward(g.state_at(&[0.0]).unwrap()), 1.0);
        assert_eq!(g.terminal_reward(g.state_at(&[2.0]).unwrap()), 2.0);
        assert_eq!(g.terminal_reward(g.state_at(&[1.0]).unwrap()), 0.0);
    }

    #[test]
    fn sweep_variant_differs_only_in_human_actions() {
        let a = build_line1d(&Line1DParams::worked_example()).unwrap();
        let b = build_line1d(&Line1DParams::default()).unwrap();
        assert_ne!(a.human_actions(), b.human_actions());
        assert_eq!(a.robot_actions(), b.robot_actions());
        assert_eq!(a.robot_types(), b.robot_types());
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn horizon_zero_is_valid() {
        let g = build_line1d(&Line1DParams { horizon: 0, ..Default::default() }).unwrap();
        assert_eq!(g.horizon(), 0);
    }

    #[test]
    fn misaligned_actions_are_rejected() {
        let p = Line1DParams { human_actions: vec![-0.15, 0.0, 0.15], ..Default::default() };
        assert!(matches!(build_line1d(&p), Err(Error::Spec(_))));
    }
}
