//! Live play sessions: one human against a solved robot of a hidden, sampled
//! type. The robot commits to its action before the human's input is read.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::game::{augmented_step_lenient, ActionProfile, AugmentedState, Belief, GameSpec, State};
use crate::human::HumanModel;
use crate::solver::{solve_with, RobotTiming, SolutionTable, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Opaque,
    Transparent,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Opaque => "opaque",
            Algorithm::Transparent => "transparent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    AwaitingGuess,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub t: usize,
    pub human_action: String,
    pub robot_action: String,
    /// Profile the human's belief update assumed (robot entries are local indices).
    pub assumed_profile: ActionProfile,
    /// State and belief after the step.
    pub state: State,
    pub belief: Belief,
    pub reward: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub robot_action: String,
    pub reward: f64,
    pub score: f64,
    pub done: bool,
    pub state: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessOutcome {
    pub true_type: String,
    pub correct: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session is {0:?}, not accepting this request")]
    WrongPhase(Status),
    #[error("step {got} was submitted but the session is at step {expected}")]
    StaleStep { expected: usize, got: usize },
    #[error("{0:?} is not in the action menu")]
    UnknownAction(String),
    #[error("invalid guess: {0}")]
    BadGuess(String),
    #[error(transparent)]
    Core(#[from] Error),
}

/// One human-robot interaction.
#[derive(Clone, Debug)]
pub struct Session {
    id: String,
    env: EnvConfig,
    algorithm: Algorithm,
    table: Arc<SolutionTable>,
    true_type: usize,
    start: AugmentedState,
    x: AugmentedState,
    score: f64,
    status: Status,
    transcript: Vec<TranscriptStep>,
    guess: Option<(String, u8)>,
    created_ms: u128,
    closed_ms: Option<u128>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl Session {
    /// `table` must contain the environment's start state with the spec prior.
    pub fn new(id: String, env: EnvConfig, algorithm: Algorithm, table: Arc<SolutionTable>, true_type: usize) -> Result<Self> {
        let spec = table.spec();
        if true_type >= spec.n_types() {
            return Err(Error::InvalidAction(format!("type {true_type} out of range")));
        }
        let start = AugmentedState::root(env.start_state(spec), spec.prior().clone());
        table.node(&start)?;
        Ok(Session {
            id,
            env,
            algorithm,
            true_type,
            x: start.clone(),
            start,
            table,
            score: 0.0,
            status: Status::Active,
            transcript: vec![],
            guess: None,
            created_ms: now_ms(),
            closed_ms: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn spec(&self) -> &GameSpec {
        self.table.spec()
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn t(&self) -> usize {
        self.x.t
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn current(&self) -> &AugmentedState {
        &self.x
    }

    pub fn start(&self) -> &AugmentedState {
        &self.start
    }

    pub fn transcript(&self) -> &[TranscriptStep] {
        &self.transcript
    }

    pub fn menu(&self) -> Vec<String> {
        self.spec().human_actions().iter().map(|a| a.label.clone()).collect()
    }

    pub fn render(&self) -> Value {
        self.env.render(self.spec(), self.x.state)
    }

    /// The robot's action for the current step, fixed before any human input.
    pub fn committed_robot_action(&self) -> Result<usize> {
        self.table.policy_robot(&self.x, self.true_type)
    }

    /// Plays one step. `t`, when given, must match the current step so that a
    /// resubmitted request cannot advance the game twice.
    pub fn act(&mut self, human_label: &str, t: Option<usize>) -> Result<StepOutcome, SessionError> {
        if self.status != Status::Active {
            return Err(SessionError::WrongPhase(self.status));
        }
        if let Some(t) = t {
            if t != self.x.t {
                return Err(SessionError::StaleStep { expected: self.x.t, got: t });
            }
        }
        let h = self
            .spec()
            .human_action_by_label(human_label)
            .ok_or_else(|| SessionError::UnknownAction(human_label.to_string()))?;
        let committed = self.committed_robot_action()?;
        let profile = ActionProfile { human: h, robot: self.table.profile(&self.x)?.robot };
        let (next, a, mut reward) = self.table.step(&self.x, h, self.true_type, RobotTiming::Committed)?;
        debug_assert_eq!(a, committed);
        if next.t == self.spec().horizon() {
            reward += self.spec().terminal_reward(next.state);
        }
        self.score += reward;
        let spec = self.table.spec();
        self.transcript.push(TranscriptStep {
            t: self.x.t,
            human_action: human_label.to_string(),
            robot_action: spec.robot_actions()[a].label.clone(),
            assumed_profile: profile,
            state: spec.states()[next.state].clone(),
            belief: next.belief.clone(),
            reward,
            score: self.score,
        });
        self.x = next;
        let done = self.x.t == spec.horizon();
        if done {
            self.status = Status::AwaitingGuess;
        }
        Ok(StepOutcome {
            t: self.x.t,
            robot_action: spec.robot_actions()[a].label.clone(),
            reward,
            score: self.score,
            done,
            state: self.render(),
        })
    }

    pub fn guess(&mut self, type_label: &str, preference: u8) -> Result<GuessOutcome, SessionError> {
        if self.status != Status::AwaitingGuess {
            return Err(SessionError::WrongPhase(self.status));
        }
        if !(1..=7).contains(&preference) {
            return Err(SessionError::BadGuess(format!("preference {preference} outside 1..=7")));
        }
        let types = self.spec().robot_types();
        if !types.iter().any(|ty| ty.label == type_label) {
            return Err(SessionError::BadGuess(format!("unknown robot type {type_label:?}")));
        }
        let true_type = types[self.true_type].label.clone();
        self.guess = Some((type_label.to_string(), preference));
        self.status = Status::Closed;
        self.closed_ms = Some(now_ms());
        Ok(GuessOutcome { correct: true_type == type_label, true_type })
    }

    pub fn true_type_label(&self) -> &str {
        &self.spec().robot_types()[self.true_type].label
    }

    /// The full record; only meaningful once closed.
    pub fn record(&self) -> Value {
        let spec = self.spec();
        json!({
            "session_id": self.id,
            "env": self.env.id(),
            "env_config": self.env,
            "algorithm": self.algorithm,
            "model": self.table.model(),
            "lambda": self.table.lambda(),
            "true_type": self.true_type_label(),
            "start": {"state": spec.states()[self.start.state], "belief": self.start.belief},
            "horizon": spec.horizon(),
            "transcript": self.transcript,
            "score": self.score,
            "guess": self.guess.as_ref().map(|g| &g.0),
            "preference": self.guess.as_ref().map(|g| g.1),
            "correct": self.guess.as_ref().map(|g| g.0 == self.true_type_label()),
            "timestamps": {"created_ms": self.created_ms as u64, "closed_ms": self.closed_ms.map(|m| m as u64)},
        })
    }
}

/// Recomputes states, beliefs and running score from a transcript.
pub fn replay(
    spec: &GameSpec,
    model: &HumanModel,
    start: &AugmentedState,
    steps: &[TranscriptStep],
) -> Result<Vec<(State, Belief, f64)>> {
    let mut x = start.clone();
    let mut score = 0.0;
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let h = spec
            .human_action_by_label(&step.human_action)
            .ok_or_else(|| Error::InvalidAction(step.human_action.clone()))?;
        let a = spec
            .robot_action_by_label(&step.robot_action)
            .ok_or_else(|| Error::InvalidAction(step.robot_action.clone()))?;
        let next = augmented_step_lenient(spec, model, &x, h, a, &step.assumed_profile)?;
        score += spec.stage_reward(x.state, h, a);
        if next.t == spec.horizon() {
            score += spec.terminal_reward(next.state);
        }
        out.push((spec.states()[next.state].clone(), next.belief.clone(), score));
        x = next;
    }
    Ok(out)
}

/// Draws a type index from `prior`.
pub fn sample_type<R: Rng + ?Sized>(rng: &mut R, prior: &Belief) -> usize {
    match WeightedIndex::new(prior.probs()) {
        Ok(d) => d.sample(rng),
        Err(_) => 0,
    }
}

/// Solved tables for every offered environment and algorithm, built once.
#[derive(Clone, Debug)]
pub struct Catalog {
    entries: BTreeMap<(String, Algorithm), (EnvConfig, Arc<SolutionTable>)>,
    order: Vec<String>,
}

impl Catalog {
    pub fn build(envs: &[EnvConfig], model: &HumanModel, transparent_lambda: f64) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut order = Vec::new();
        for env in envs {
            let spec = env.build()?;
            let root = AugmentedState::root(env.start_state(&spec), spec.prior().clone());
            let model = model.with_prior(spec.prior().clone());
            for (alg, lambda) in [(Algorithm::Opaque, 0.0), (Algorithm::Transparent, transparent_lambda)] {
                let opts = SolveOptions { lambda, ..Default::default() };
                let table = solve_with(&spec, &model, std::slice::from_ref(&root), &opts)?;
                entries.insert((env.id(), alg), (env.clone(), Arc::new(table)));
            }
            if !order.contains(&env.id()) {
                order.push(env.id());
            }
        }
        Ok(Catalog { entries, order })
    }

    pub fn get(&self, env_id: &str, algorithm: Algorithm) -> Option<(&EnvConfig, &Arc<SolutionTable>)> {
        self.entries.get(&(env_id.to_string(), algorithm)).map(|(e, t)| (e, t))
    }

    /// Environment ids in configuration order.
    pub fn env_ids(&self) -> &[String] {
        &self.order
    }

    /// `[{id, kind, horizon, human_actions, robot_types}]` for clients.
    pub fn describe(&self) -> Value {
        let envs: Vec<Value> = self
            .order
            .iter()
            .filter_map(|id| self.get(id, Algorithm::Opaque))
            .map(|(env, table)| {
                let spec = table.spec();
                json!({
                    "id": env.id(),
                    "horizon": spec.horizon(),
                    "human_actions": spec.human_actions().iter().map(|a| &a.label).collect::<Vec<_>>(),
                    "robot_types": spec.robot_types().iter().map(|t| &t.label).collect::<Vec<_>>(),
                    "algorithms": [Algorithm::Opaque, Algorithm::Transparent],
                })
            })
            .collect();
        json!({ "envs": envs })
    }
}
