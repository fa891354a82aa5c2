//! Backward-induction solver over the reachable augmented-state graph, with an
//! optional legibility bonus, and a memo-free brute-force oracle.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::game::{augmented_step_lenient, ActionProfile, AugmentedState, GameSpec, NodeKey};
use crate::human::HumanModel;

pub const DEFAULT_NODE_CAP: usize = 10_000_000;
pub const BRUTE_FORCE_CAP: u128 = 10_000_000;
/// Values within this distance count as tied; the earlier profile wins.
pub const TIE_TOL: f64 = 1e-12;

/// When the robot picks its action relative to the human's.
///
/// `Committed`: the robot plays the stored profile before seeing the human's
/// action. `Responsive`: the robot plays the equilibrium response to the
/// action the human actually took, as in a sequential reading of the stage
/// game.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotTiming {
    Committed,
    #[default]
    Responsive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Weight of the per-type belief-gain bonus; 0 gives the opaque solver.
    pub lambda: f64,
    pub node_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { lambda: 0.0, node_cap: DEFAULT_NODE_CAP }
    }
}

/// Equilibrium choice at one non-terminal node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub human: usize,
    /// `responses[h]` is the robot vector (local indices) chosen against
    /// human action `h`. The profile is `(human, responses[human])`.
    pub responses: Vec<Vec<usize>>,
}

impl Decision {
    pub fn profile(&self) -> ActionProfile {
        ActionProfile { human: self.human, robot: self.responses[self.human].clone() }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub x: AugmentedState,
    pub value: f64,
    /// `None` at t = T.
    pub decision: Option<Decision>,
}

/// Values and equilibrium profiles for every augmented state reachable from
/// the roots under any joint action.
#[derive(Clone, Debug)]
pub struct SolutionTable {
    spec: GameSpec,
    model: HumanModel,
    lambda: f64,
    nodes: Vec<Node>,
    index: HashMap<NodeKey, usize>,
    roots: Vec<AugmentedState>,
}

/// Robot vectors in lexicographic order, type 0 most significant.
pub fn robot_vectors(spec: &GameSpec) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for ty in spec.robot_types() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..ty.action_set.len()).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

fn child(spec: &GameSpec, model: &HumanModel, x: &AugmentedState, h: usize, robot: &[usize], i: usize) -> Result<AugmentedState> {
    let profile = ActionProfile { human: h, robot: robot.to_vec() };
    let observed = profile.robot_action(spec, i);
    augmented_step_lenient(spec, model, x, h, observed, &profile)
}

/// Every child of `x` under any human action, any type, any action of that
/// type and (for profile-dependent models) any assumed profile.
fn children(spec: &GameSpec, model: &HumanModel, x: &AugmentedState, vectors: &[Vec<usize>]) -> Result<Vec<AugmentedState>> {
    let mut out = Vec::new();
    for h in 0..spec.human_actions().len() {
        if model.uses_profile() {
            for r in vectors {
                for i in 0..spec.n_types() {
                    out.push(child(spec, model, x, h, r, i)?);
                }
            }
        } else {
            let mut r = vec![0; spec.n_types()];
            for i in 0..spec.n_types() {
                for a in 0..spec.robot_types()[i].action_set.len() {
                    r[i] = a;
                    out.push(child(spec, model, x, h, &r, i)?);
                }
                r[i] = 0;
            }
        }
    }
    Ok(out)
}

fn check_roots(spec: &GameSpec, roots: &[AugmentedState]) -> Result<()> {
    for r in roots {
        if r.t != 0 {
            return Err(Error::Spec(format!("root {r} must have t = 0")));
        }
        if r.state >= spec.states().len() || r.belief.len() != spec.n_types() {
            return Err(Error::Spec(format!("root {r} does not fit the spec")));
        }
    }
    Ok(())
}

/// Breadth-first layers `0..=T` of the reachable augmented-state graph.
pub fn enumerate_reachable(
    spec: &GameSpec,
    model: &HumanModel,
    roots: &[AugmentedState],
) -> Result<Vec<Vec<AugmentedState>>> {
    enumerate_capped(spec, model, roots, DEFAULT_NODE_CAP)
}

fn enumerate_capped(
    spec: &GameSpec,
    model: &HumanModel,
    roots: &[AugmentedState],
    cap: usize,
) -> Result<Vec<Vec<AugmentedState>>> {
    model.validate()?;
    check_roots(spec, roots)?;
    let vectors = robot_vectors(spec);
    let mut seen = HashSet::new();
    let mut layer: Vec<AugmentedState> = roots.iter().filter(|r| seen.insert(r.key())).cloned().collect();
    let mut total = layer.len();
    let mut layers = Vec::with_capacity(spec.horizon() + 1);
    for _ in 0..spec.horizon() {
        let mut next = Vec::new();
        for x in &layer {
            for c in children(spec, model, x, &vectors)? {
                if seen.insert(c.key()) {
                    next.push(c);
                }
            }
        }
        total += next.len();
        if total > cap {
            return Err(Error::Capacity { what: "reachable augmented states".into(), size: total as u128, cap: cap as u128 });
        }
        layers.push(std::mem::replace(&mut layer, next));
    }
    layers.push(layer);
    Ok(layers)
}

pub fn solve(spec: &GameSpec, model: &HumanModel, roots: &[AugmentedState]) -> Result<SolutionTable> {
    solve_with(spec, model, roots, &SolveOptions::default())
}

pub fn solve_with(
    spec: &GameSpec,
    model: &HumanModel,
    roots: &[AugmentedState],
    opts: &SolveOptions,
) -> Result<SolutionTable> {
    if !(opts.lambda.is_finite() && opts.lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be a non-negative number, got {}", opts.lambda)));
    }
    let layers = enumerate_capped(spec, model, roots, opts.node_cap)?;
    let vectors = robot_vectors(spec);
    let mut nodes: Vec<Node> = Vec::with_capacity(layers.iter().map(Vec::len).sum());
    let mut index = HashMap::with_capacity(nodes.capacity());
    // fill from the last layer so children are always solved first
    for layer in layers.into_iter().rev() {
        let solved: Vec<Node> = layer
            .into_iter()
            .map(|x| {
                if x.t == spec.horizon() {
                    let value = spec.terminal_reward(x.state);
                    return Ok(Node { x, value, decision: None });
                }
                let lookup = |c: &AugmentedState| -> Result<f64> {
                    index
                        .get(&c.key())
                        .map(|&k: &usize| nodes[k].value)
                        .ok_or_else(|| Error::UnknownState(c.to_string()))
                };
                let (value, decision) = backup(spec, model, opts.lambda, &x, &vectors, lookup)?;
                Ok(Node { x, value, decision: Some(decision) })
            })
            .collect::<Result<_>>()?;
        for n in solved {
            index.insert(n.x.key(), nodes.len());
            nodes.push(n);
        }
    }
    Ok(SolutionTable { spec: spec.clone(), model: model.clone(), lambda: opts.lambda, nodes, index, roots: roots.to_vec() })
}

/// Per-type continuation `stage + lambda * belief gain + V(child)`.
fn term(
    spec: &GameSpec,
    model: &HumanModel,
    lambda: f64,
    x: &AugmentedState,
    h: usize,
    robot: &[usize],
    i: usize,
    value_of: &mut dyn FnMut(&AugmentedState) -> Result<f64>,
) -> Result<f64> {
    let c = child(spec, model, x, h, robot, i)?;
    let a = spec.robot_types()[i].action_set[robot[i]];
    let gain = c.belief.get(i) - x.belief.get(i);
    Ok(spec.stage_reward(x.state, h, a) + lambda * gain + value_of(&c)?)
}

fn backup(
    spec: &GameSpec,
    model: &HumanModel,
    lambda: f64,
    x: &AugmentedState,
    vectors: &[Vec<usize>],
    mut value_of: impl FnMut(&AugmentedState) -> Result<f64>,
) -> Result<(f64, Decision)> {
    let n = spec.n_types();
    let b = x.belief.probs();
    // without profile dependence each type's term depends on (h, own action) only
    let mut cache: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut terms = |h: usize, r: &[usize], i: usize, value_of: &mut dyn FnMut(&AugmentedState) -> Result<f64>| -> Result<f64> {
        if model.uses_profile() {
            return term(spec, model, lambda, x, h, r, i, value_of);
        }
        if let Some(&v) = cache.get(&(h, i, r[i])) {
            return Ok(v);
        }
        let v = term(spec, model, lambda, x, h, r, i, value_of)?;
        cache.insert((h, i, r[i]), v);
        Ok(v)
    };

    let mut best_value = f64::NEG_INFINITY;
    let mut best_h = 0;
    let mut responses = Vec::with_capacity(spec.human_actions().len());
    for h in 0..spec.human_actions().len() {
        let mut best_q = f64::NEG_INFINITY;
        let mut best_r: &[usize] = &vectors[0];
        for r in vectors {
            let mut q = 0.0;
            for i in 0..n {
                if b[i] > 0.0 {
                    q += b[i] * terms(h, r, i, &mut value_of)?;
                }
            }
            if q > best_q + TIE_TOL {
                best_q = q;
                best_r = r;
            }
        }
        // types the human rules out still act on their own best response
        let mut r = best_r.to_vec();
        for i in (0..n).filter(|&i| b[i] <= 0.0) {
            let mut best_a = 0;
            let mut best_t = f64::NEG_INFINITY;
            for a in 0..spec.robot_types()[i].action_set.len() {
                r[i] = a;
                let t = terms(h, &r, i, &mut value_of)?;
                if t > best_t + TIE_TOL {
                    best_t = t;
                    best_a = a;
                }
            }
            r[i] = best_a;
        }
        if best_q > best_value + TIE_TOL {
            best_value = best_q;
            best_h = h;
        }
        responses.push(r);
    }
    Ok((best_value, Decision { human: best_h, responses }))
}

impl SolutionTable {
    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn model(&self) -> &HumanModel {
        &self.model
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn roots(&self) -> &[AugmentedState] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes ordered from the last layer to the first.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn contains(&self, x: &AugmentedState) -> bool {
        self.index.contains_key(&x.key())
    }

    pub fn node(&self, x: &AugmentedState) -> Result<&Node> {
        self.index.get(&x.key()).map(|&k| &self.nodes[k]).ok_or_else(|| Error::UnknownState(x.to_string()))
    }

    pub fn value(&self, x: &AugmentedState) -> Result<f64> {
        Ok(self.node(x)?.value)
    }

    pub fn decision(&self, x: &AugmentedState) -> Result<&Decision> {
        self.node(x)?
            .decision
            .as_ref()
            .ok_or_else(|| Error::UnknownState(format!("{x} is terminal and has no profile")))
    }

    pub fn profile(&self, x: &AugmentedState) -> Result<ActionProfile> {
        Ok(self.decision(x)?.profile())
    }

    pub fn policy_human(&self, x: &AugmentedState) -> Result<usize> {
        Ok(self.decision(x)?.human)
    }

    /// Global robot action of type `i` under the stored profile.
    pub fn policy_robot(&self, x: &AugmentedState, i: usize) -> Result<usize> {
        self.check_type(i)?;
        Ok(self.profile(x)?.robot_action(&self.spec, i))
    }

    /// Global robot action of type `i` in answer to human action `h`.
    pub fn response(&self, x: &AugmentedState, h: usize, i: usize) -> Result<usize> {
        self.check_type(i)?;
        let d = self.decision(x)?;
        let r = d.responses.get(h).ok_or_else(|| Error::InvalidAction(format!("human action {h} out of range")))?;
        Ok(self.spec.robot_types()[i].action_set[r[i]])
    }

    fn check_type(&self, i: usize) -> Result<()> {
        if i >= self.spec.n_types() {
            return Err(Error::InvalidAction(format!("type index {i} out of range")));
        }
        Ok(())
    }

    /// Advances `x` with human action `h` and a robot of type `i`. Returns the
    /// next augmented state, the robot's global action and the stage reward.
    pub fn step(&self, x: &AugmentedState, h: usize, i: usize, timing: RobotTiming) -> Result<(AugmentedState, usize, f64)> {
        if h >= self.spec.human_actions().len() {
            return Err(Error::InvalidAction(format!("human action {h} out of range")));
        }
        self.check_type(i)?;
        let d = self.decision(x)?;
        let robot = match timing {
            RobotTiming::Committed => d.responses[d.human].clone(),
            RobotTiming::Responsive => d.responses[h].clone(),
        };
        let profile = ActionProfile { human: h, robot };
        let a = profile.robot_action(&self.spec, i);
        let next = augmented_step_lenient(&self.spec, &self.model, x, h, a, &profile)?;
        Ok((next, a, self.spec.stage_reward(x.state, h, a)))
    }

    /// Debug dump: `{"lambda", "entries": [{t, state, belief, value, profile}]}`.
    pub fn export_json(&self) -> Value {
        let entries: Vec<Value> = self
            .nodes
            .iter()
            .rev()
            .map(|n| {
                json!({
                    "t": n.x.t,
                    "state": self.spec.states()[n.x.state],
                    "belief": n.x.belief,
                    "value": n.value,
                    "profile": n.decision.as_ref().map(Decision::profile),
                    "responses": n.decision.as_ref().map(|d| &d.responses),
                })
            })
            .collect();
        json!({ "env": self.spec.name(), "model": self.model, "lambda": self.lambda, "entries": entries })
    }
}

/// Memo-free expectimax over histories; an independent check on [`solve`].
pub fn brute_force_value(spec: &GameSpec, model: &HumanModel, root: &AugmentedState) -> Result<f64> {
    brute_force_value_weighted(spec, model, root, 0.0)
}

pub fn brute_force_value_weighted(spec: &GameSpec, model: &HumanModel, root: &AugmentedState, lambda: f64) -> Result<f64> {
    model.validate()?;
    check_roots(spec, std::slice::from_ref(root))?;
    let branching: u128 = spec.human_actions().len() as u128
        * spec.robot_types().iter().map(|t| t.action_set.len() as u128).product::<u128>();
    let size = (0..spec.horizon()).try_fold(1u128, |acc, _| acc.checked_mul(branching)).unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_CAP {
        return Err(Error::Capacity { what: "brute-force profile histories".into(), size, cap: BRUTE_FORCE_CAP });
    }
    let vectors = robot_vectors(spec);
    expectimax(spec, model, lambda, root, &vectors)
}

fn expectimax(spec: &GameSpec, model: &HumanModel, lambda: f64, x: &AugmentedState, vectors: &[Vec<usize>]) -> Result<f64> {
    if x.t == spec.horizon() {
        return Ok(spec.terminal_reward(x.state));
    }
    // children met twice at this node are evaluated once; nothing is shared across nodes
    let mut local: HashMap<(usize, usize, usize, Vec<i64>), f64> = HashMap::new();
    let mut best = f64::NEG_INFINITY;
    for h in 0..spec.human_actions().len() {
        for r in vectors {
            let mut q = 0.0;
            for i in 0..spec.n_types() {
                let bi = x.belief.get(i);
                if bi <= 0.0 {
                    continue;
                }
                let c = child(spec, model, x, h, r, i)?;
                let key = (h, i, r[i], c.belief.key());
                let v = match local.get(&key) {
                    Some(&v) => v,
                    None => {
                        let a = spec.robot_types()[i].action_set[r[i]];
                        let v = spec.stage_reward(x.state, h, a)
                            + lambda * (c.belief.get(i) - x.belief.get(i))
                            + expectimax(spec, model, lambda, &c, vectors)?;
                        local.insert(key, v);
                        v
                    }
                };
                q += bi * v;
            }
            best = best.max(q);
        }
    }
    Ok(best)
}
