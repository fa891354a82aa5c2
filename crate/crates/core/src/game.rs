//! Game model: states, actions, robot types, tabulated dynamics and rewards,
//! beliefs, and the augmented (state, belief) transition.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::human::{self, HumanModel};

/// Tolerance on `sum(belief) == 1`.
pub const BELIEF_SUM_TOL: f64 = 1e-12;
/// Beliefs are compared (and deduplicated) at this resolution.
pub const BELIEF_EQ_TOL: f64 = 1e-9;

const SNAP_SCALE: f64 = 1e12;

/// A system state: a small vector of fixed-point grid coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<i32>);

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// A labelled action. `delta` is the grid displacement for additive environments
/// and empty for environments with arbitrary dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub label: String,
    #[serde(default)]
    pub delta: Vec<i32>,
}

impl Action {
    pub fn new(label: impl Into<String>, delta: Vec<i32>) -> Self {
        Action { label: label.into(), delta }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotType {
    pub index: usize,
    pub label: String,
    /// Indices into [`GameSpec::robot_actions`], in preference order for tie-breaking.
    pub action_set: Vec<usize>,
}

/// The human's probability distribution over robot types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Spec("belief must have at least one entry".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Spec(format!("belief entries must lie in [0, 1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > BELIEF_SUM_TOL {
            return Err(Error::Spec(format!("belief sums to {sum}, not 1")));
        }
        Ok(Belief(probs))
    }

    /// Two-type belief from the probability of type 0.
    pub fn from_scalar(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Spec(format!("belief {p} outside [0, 1]")));
        }
        Ok(Self::snapped(vec![p, 1.0 - p]))
    }

    /// All mass on `index`.
    pub fn vertex(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Belief(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self::snapped(vec![1.0 / n as f64; n])
    }

    /// Normalizes a non-negative weight vector with positive total and snaps it
    /// onto the 1e-12 grid so that rate arithmetic (0.2 + 0.2) lands on one
    /// canonical value.
    pub(crate) fn snapped(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut v: Vec<f64> = weights
            .iter()
            .map(|w| ((w / total) * SNAP_SCALE).round() / SNAP_SCALE)
            .collect();
        // absorb the snapping residue into the largest entry
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        let rest: f64 = v.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, p)| p).sum();
        v[imax] = (1.0 - rest).clamp(0.0, 1.0);
        Belief(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Probability of type 0; the scalar form of a two-type belief.
    pub fn scalar(&self) -> f64 {
        self.0[0]
    }

    /// Quantized identity used for deduplication.
    pub fn key(&self) -> Vec<i64> {
        self.0.iter().map(|p| (p / BELIEF_EQ_TOL).round() as i64).collect()
    }

    pub fn approx_eq(&self, other: &Belief, tol: f64) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

/// A node of the solved graph: timestep, state index, and the human's belief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub t: usize,
    pub state: usize,
    pub belief: Belief,
}

impl AugmentedState {
    pub fn new(t: usize, state: usize, belief: Belief) -> Self {
        AugmentedState { t, state, belief }
    }

    pub fn root(state: usize, belief: Belief) -> Self {
        Self::new(0, state, belief)
    }

    pub fn key(&self) -> NodeKey {
        NodeKey { t: self.t, state: self.state, belief: self.belief.key() }
    }
}

impl fmt::Display for AugmentedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t={}, s={}, b={})", self.t, self.state, self.belief)
    }
}

/// Hashable identity of an [`AugmentedState`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub t: usize,
    pub state: usize,
    pub belief: Vec<i64>,
}

/// One human action plus one action per robot type. Robot entries index into
/// the corresponding type's `action_set`, not into the global action list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionProfile {
    pub human: usize,
    pub robot: Vec<usize>,
}

impl ActionProfile {
    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        if self.human >= spec.human_actions.len() {
            return Err(Error::InvalidAction(format!("human action {} out of range", self.human)));
        }
        if self.robot.len() != spec.n_types() {
            return Err(Error::InvalidAction(format!(
                "profile has {} robot entries for {} types",
                self.robot.len(),
                spec.n_types()
            )));
        }
        for (i, &a) in self.robot.iter().enumerate() {
            if a >= spec.robot_types[i].action_set.len() {
                return Err(Error::InvalidAction(format!("type {i} action {a} out of range")));
            }
        }
        Ok(())
    }

    /// Global robot action assigned to type `i`.
    pub fn robot_action(&self, spec: &GameSpec, i: usize) -> usize {
        spec.robot_types[i].action_set[self.robot[i]]
    }
}

/// A played game: start state and one (human action, global robot action) per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    pub steps: Vec<(usize, usize)>,
}

/// Serialized form of a [`GameSpec`]. Tables are row-major over
/// `[state][human action][robot action]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameSpecParts {
    pub name: String,
    /// Physical size of one coordinate unit (0.1 for the line environment).
    #[serde(default = "unit_scale")]
    pub scale: f64,
    pub states: Vec<State>,
    pub human_actions: Vec<Action>,
    pub robot_actions: Vec<Action>,
    pub robot_types: Vec<RobotType>,
    pub transitions: Vec<usize>,
    pub stage_rewards: Vec<f64>,
    pub terminal_rewards: Vec<f64>,
    pub horizon: usize,
    pub prior: Belief,
}

fn unit_scale() -> f64 {
    1.0
}

/// A finite-horizon common-payoff game with a hidden robot type.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GameSpecParts", into = "GameSpecParts")]
pub struct GameSpec {
    name: String,
    scale: f64,
    states: Vec<State>,
    human_actions: Vec<Action>,
    robot_actions: Vec<Action>,
    robot_types: Vec<RobotType>,
    transitions: Vec<usize>,
    stage_rewards: Vec<f64>,
    terminal_rewards: Vec<f64>,
    horizon: usize,
    prior: Belief,
    state_index: HashMap<State, usize>,
    // [type][global robot action] -> local index
    local_action: Vec<Vec<Option<usize>>>,
}

impl TryFrom<GameSpecParts> for GameSpec {
    type Error = Error;
    fn try_from(p: GameSpecParts) -> Result<Self> {
        GameSpec::from_parts(p)
    }
}

impl From<GameSpec> for GameSpecParts {
    fn from(g: GameSpec) -> Self {
        GameSpecParts {
            name: g.name,
            scale: g.scale,
            states: g.states,
            human_actions: g.human_actions,
            robot_actions: g.robot_actions,
            robot_types: g.robot_types,
            transitions: g.transitions,
            stage_rewards: g.stage_rewards,
            terminal_rewards: g.terminal_rewards,
            horizon: g.horizon,
            prior: g.prior,
        }
    }
}

impl GameSpec {
    pub fn from_parts(p: GameSpecParts) -> Result<Self> {
        let ns = p.states.len();
        let nh = p.human_actions.len();
        let nr = p.robot_actions.len();
        let nt = p.robot_types.len();
        if ns == 0 || nh == 0 || nr == 0 || nt == 0 {
            return Err(Error::Spec("states, actions and types must be non-empty".into()));
        }
        if !(p.scale.is_finite() && p.scale > 0.0) {
            return Err(Error::Spec(format!("scale must be positive, got {}", p.scale)));
        }
        let mut state_index = HashMap::with_capacity(ns);
        for (i, s) in p.states.iter().enumerate() {
            if state_index.insert(s.clone(), i).is_some() {
                return Err(Error::Spec(format!("duplicate state {s}")));
            }
        }
        let mut local_action = Vec::with_capacity(nt);
        for (i, ty) in p.robot_types.iter().enumerate() {
            if ty.index != i {
                return Err(Error::Spec(format!("robot type at position {i} has index {}", ty.index)));
            }
            if ty.action_set.is_empty() {
                return Err(Error::Spec(format!("robot type {} has an empty action set", ty.label)));
            }
            let mut local = vec![None; nr];
            for (k, &a) in ty.action_set.iter().enumerate() {
                if a >= nr {
                    return Err(Error::Spec(format!("type {} references robot action {a}", ty.label)));
                }
                if local[a].replace(k).is_some() {
                    return Err(Error::Spec(format!("type {} lists action {a} twice", ty.label)));
                }
            }
            local_action.push(local);
        }
        let table = ns * nh * nr;
        if p.transitions.len() != table || p.stage_rewards.len() != table {
            return Err(Error::Spec(format!(
                "dynamics/reward tables must have {table} entries (got {} and {})",
                p.transitions.len(),
                p.stage_rewards.len()
            )));
        }
        if let Some(bad) = p.transitions.iter().find(|&&s| s >= ns) {
            return Err(Error::Spec(format!("dynamics leave the state set (index {bad})")));
        }
        if p.terminal_rewards.len() != ns {
            return Err(Error::Spec("terminal reward table must have one entry per state".into()));
        }
        if p.stage_rewards.iter().chain(&p.terminal_rewards).any(|r| !r.is_finite()) {
            return Err(Error::Spec("rewards must be finite".into()));
        }
        if p.prior.len() != nt {
            return Err(Error::Spec(format!("prior has {} entries for {nt} types", p.prior.len())));
        }
        Ok(GameSpec {
            name: p.name,
            scale: p.scale,
            states: p.states,
            human_actions: p.human_actions,
            robot_actions: p.robot_actions,
            robot_types: p.robot_types,
            transitions: p.transitions,
            stage_rewards: p.stage_rewards,
            terminal_rewards: p.terminal_rewards,
            horizon: p.horizon,
            prior: p.prior,
            state_index,
            local_action,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn human_actions(&self) -> &[Action] {
        &self.human_actions
    }

    pub fn robot_actions(&self) -> &[Action] {
        &self.robot_actions
    }

    pub fn robot_types(&self) -> &[RobotType] {
        &self.robot_types
    }

    pub fn n_types(&self) -> usize {
        self.robot_types.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn prior(&self) -> &Belief {
        &self.prior
    }

    pub fn with_horizon(&self, horizon: usize) -> GameSpec {
        GameSpec { horizon, ..self.clone() }
    }

    pub fn with_prior(&self, prior: Belief) -> Result<GameSpec> {
        if prior.len() != self.n_types() {
            return Err(Error::Spec("prior length does not match type count".into()));
        }
        Ok(GameSpec { prior, ..self.clone() })
    }

    pub fn state_index(&self, s: &State) -> Option<usize> {
        self.state_index.get(s).copied()
    }

    /// Looks a state up by physical coordinates (grid units times `scale`).
    pub fn state_at(&self, values: &[f64]) -> Option<usize> {
        let coords = values.iter().map(|v| (v / self.scale).round() as i32).collect();
        self.state_index(&State(coords))
    }

    /// Physical coordinates of a state.
    pub fn state_values(&self, s: usize) -> Vec<f64> {
        // 6 / 10 prints as 0.6; 6 * 0.1 does not.
        let inv = (1.0 / self.scale).round();
        if (inv * self.scale - 1.0).abs() < 1e-12 {
            self.states[s].0.iter().map(|&c| c as f64 / inv).collect()
        } else {
            self.states[s].0.iter().map(|&c| c as f64 * self.scale).collect()
        }
    }

    pub fn human_action_by_label(&self, label: &str) -> Option<usize> {
        self.human_actions.iter().position(|a| a.label == label)
    }

    pub fn robot_action_by_label(&self, label: &str) -> Option<usize> {
        self.robot_actions.iter().position(|a| a.label == label)
    }

    /// Local index of global robot action `a` within type `i`'s set.
    pub fn local_action(&self, i: usize, a: usize) -> Option<usize> {
        self.local_action.get(i).and_then(|l| l.get(a).copied().flatten())
    }

    pub fn type_allows(&self, i: usize, a: usize) -> bool {
        self.local_action(i, a).is_some()
    }

    #[inline]
    fn cell(&self, s: usize, h: usize, r: usize) -> usize {
        (s * self.human_actions.len() + h) * self.robot_actions.len() + r
    }

    /// Unchecked dynamics lookup for hot loops; indices must be valid.
    #[inline]
    pub fn next_state(&self, s: usize, h: usize, r: usize) -> usize {
        self.transitions[self.cell(s, h, r)]
    }

    #[inline]
    pub fn stage_reward(&self, s: usize, h: usize, r: usize) -> f64 {
        self.stage_rewards[self.cell(s, h, r)]
    }

    #[inline]
    pub fn terminal_reward(&self, s: usize) -> f64 {
        self.terminal_rewards[s]
    }

    /// Deterministic dynamics `s' = f(s, a_H, a_R)` with argument checks.
    pub fn transition(&self, s: usize, h: usize, r: usize) -> Result<usize> {
        if h >= self.human_actions.len() {
            return Err(Error::InvalidAction(format!("human action {h} not in the action set")));
        }
        if r >= self.robot_actions.len() || !(0..self.n_types()).any(|i| self.type_allows(i, r)) {
            return Err(Error::InvalidAction(format!("robot action {r} not in any type's action set")));
        }
        if s >= self.states.len() {
            return Err(Error::Spec(format!("state index {s} out of range")));
        }
        let next = self.next_state(s, h, r);
        if next >= self.states.len() {
            return Err(Error::Spec(format!("dynamics map state {s} outside the state set")));
        }
        Ok(next)
    }

    /// Sum of stage rewards along the trajectory plus the terminal reward at its end.
    pub fn total_reward(&self, trajectory: &Trajectory) -> Result<f64> {
        if trajectory.steps.len() != self.horizon {
            return Err(Error::Length { expected: self.horizon, got: trajectory.steps.len() });
        }
        let mut s = trajectory.start;
        if s >= self.states.len() {
            return Err(Error::Spec(format!("start state {s} out of range")));
        }
        let mut total = 0.0;
        for &(h, r) in &trajectory.steps {
            let next = self.transition(s, h, r)?;
            total += self.stage_reward(s, h, r);
            s = next;
        }
        Ok(total + self.terminal_reward(s))
    }

    /// Extremes of the total reward from `start` over all joint action sequences,
    /// used to normalize reported scores into [0, 1].
    pub fn reward_range(&self, start: usize) -> (f64, f64) {
        let ns = self.states.len();
        let mut lo: Vec<f64> = self.terminal_rewards.clone();
        let mut hi = lo.clone();
        let usable: Vec<usize> =
            (0..self.robot_actions.len()).filter(|&r| (0..self.n_types()).any(|i| self.type_allows(i, r))).collect();
        for _ in 0..self.horizon {
            let mut nlo = vec![f64::INFINITY; ns];
            let mut nhi = vec![f64::NEG_INFINITY; ns];
            for s in 0..ns {
                for h in 0..self.human_actions.len() {
                    for &r in &usable {
                        let n = self.next_state(s, h, r);
                        let w = self.stage_reward(s, h, r);
                        nlo[s] = nlo[s].min(w + lo[n]);
                        nhi[s] = nhi[s].max(w + hi[n]);
                    }
                }
            }
            lo = nlo;
            hi = nhi;
        }
        (lo[start], hi[start])
    }

    /// Maps a total reward into [0, 1] over the achievable range from `start`.
    pub fn normalized_score(&self, start: usize, total: f64) -> f64 {
        let (lo, hi) = self.reward_range(start);
        if hi - lo <= f64::EPSILON {
            return 1.0;
        }
        ((total - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Augmented dynamics: advance the state with the joint action and the belief
/// with the human model's update for the observed robot action.
pub fn augmented_step(
    spec: &GameSpec,
    model: &HumanModel,
    x: &AugmentedState,
    human_action: usize,
    observed: usize,
    profile: &ActionProfile,
) -> Result<AugmentedState> {
    if x.t >= spec.horizon() {
        return Err(Error::Spec(format!("cannot step past the horizon from {x}")));
    }
    let next = spec.transition(x.state, human_action, observed)?;
    let belief = human::belief_update(model, spec, &x.belief, x.state, observed, profile)?;
    Ok(AugmentedState::new(x.t + 1, next, belief))
}

/// Like [`augmented_step`] but a zero-mass Bayesian update keeps the incoming
/// belief instead of failing. The solver, oracle and rollouts all step this way
/// so that every visited node is in the enumerated graph.
pub fn augmented_step_lenient(
    spec: &GameSpec,
    model: &HumanModel,
    x: &AugmentedState,
    human_action: usize,
    observed: usize,
    profile: &ActionProfile,
) -> Result<AugmentedState> {
    match augmented_step(spec, model, x, human_action, observed, profile) {
        Err(Error::BeliefUpdate { belief }) => {
            let next = spec.transition(x.state, human_action, observed)?;
            Ok(AugmentedState::new(x.t + 1, next, belief))
        }
        other => other,
    }
}
