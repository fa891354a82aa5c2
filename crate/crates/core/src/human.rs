//! Human belief-update models: fixed-rate incremental, exact Bayesian with the
//! robot policy as likelihood, and bounded memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ActionProfile, Belief, GameSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanModel {
    /// Moves `b(type 0)` by `rate` toward whichever type finds the observed
    /// action more plausible. Two types only, unless `interpolate` is set.
    Incremental {
        rate: f64,
        /// Experimental general-N variant `b' = (1-rate) b + rate normalize(b * L)`.
        /// Not calibrated against any reported result.
        #[serde(default)]
        interpolate: bool,
    },
    /// Knows the robot's policy and conditions on it exactly.
    Bayesian,
    /// Applies the incremental rule to `prior` every step, forgetting the past.
    BoundedMemory { rate: f64, prior: Belief },
}

impl HumanModel {
    pub fn incremental(rate: f64) -> Result<Self> {
        let m = HumanModel::Incremental { rate, interpolate: false };
        m.validate()?;
        Ok(m)
    }

    pub fn bounded_memory(rate: f64, prior: Belief) -> Result<Self> {
        let m = HumanModel::BoundedMemory { rate, prior };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HumanModel::Incremental { rate, .. } | HumanModel::BoundedMemory { rate, .. } => {
                if !(rate.is_finite() && *rate > 0.0 && *rate <= 1.0) {
                    return Err(Error::Model(format!("rate must lie in (0, 1], got {rate}")));
                }
                Ok(())
            }
            HumanModel::Bayesian => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            HumanModel::Incremental { .. } => "incremental",
            HumanModel::Bayesian => "bayesian",
            HumanModel::BoundedMemory { .. } => "bounded_memory",
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match self {
            HumanModel::Incremental { rate, .. } | HumanModel::BoundedMemory { rate, .. } => Some(*rate),
            HumanModel::Bayesian => None,
        }
    }

    /// Whether the update reads the action profile (only the Bayesian human does).
    pub fn uses_profile(&self) -> bool {
        matches!(self, HumanModel::Bayesian)
    }

    /// Same kind with a different learning rate; Bayesian is returned unchanged.
    pub fn with_rate(&self, rate: f64) -> Result<Self> {
        let m = match self {
            HumanModel::Incremental { interpolate, .. } => {
                HumanModel::Incremental { rate, interpolate: *interpolate }
            }
            HumanModel::BoundedMemory { prior, .. } => HumanModel::BoundedMemory { rate, prior: prior.clone() },
            HumanModel::Bayesian => HumanModel::Bayesian,
        };
        m.validate()?;
        Ok(m)
    }

    /// Same kind resetting to `prior` (bounded memory only).
    pub fn with_prior(&self, prior: Belief) -> Self {
        match self {
            HumanModel::BoundedMemory { rate, .. } => HumanModel::BoundedMemory { rate: *rate, prior },
            other => other.clone(),
        }
    }
}

/// `P(a_R | type)` under a uniform draw from the type's action set.
pub fn feasibility_likelihood(spec: &GameSpec, type_index: usize, observed: usize) -> f64 {
    let set = &spec.robot_types()[type_index].action_set;
    if set.contains(&observed) {
        1.0 / set.len() as f64
    } else {
        0.0
    }
}

fn incremental_rule(
    spec: &GameSpec,
    b: &Belief,
    observed: usize,
    rate: f64,
    interpolate: bool,
) -> Result<Belief> {
    let n = spec.n_types();
    if n == 1 {
        return Ok(b.clone());
    }
    let lik: Vec<f64> = (0..n).map(|i| feasibility_likelihood(spec, i, observed)).collect();
    if n == 2 && !interpolate {
        let p = b.scalar();
        let p = if lik[0] > lik[1] {
            (p + rate).min(1.0)
        } else if lik[0] < lik[1] {
            (p - rate).max(0.0)
        } else {
            p
        };
        return Belief::from_scalar(p);
    }
    if !interpolate {
        return Err(Error::Model(format!(
            "the incremental rule is defined for two types; {n} types need `interpolate`"
        )));
    }
    let weighted: Vec<f64> = b.probs().iter().zip(&lik).map(|(p, l)| p * l).collect();
    let mass: f64 = weighted.iter().sum();
    if mass <= 0.0 {
        return Ok(b.clone());
    }
    let mixed = b.probs().iter().zip(&weighted).map(|(p, w)| (1.0 - rate) * p + rate * w / mass).collect();
    Ok(Belief::snapped(mixed))
}

/// One belief update after observing robot action `observed` (a global action
/// index) at state `state`. `profile` is the equilibrium profile the human
/// assumes the robot types follow; only the Bayesian model reads it.
pub fn belief_update(
    model: &HumanModel,
    spec: &GameSpec,
    b: &Belief,
    _state: usize,
    observed: usize,
    profile: &ActionProfile,
) -> Result<Belief> {
    match model {
        HumanModel::Incremental { rate, interpolate } => incremental_rule(spec, b, observed, *rate, *interpolate),
        HumanModel::BoundedMemory { rate, prior } => incremental_rule(spec, prior, observed, *rate, false),
        HumanModel::Bayesian => {
            let posterior: Vec<f64> = (0..spec.n_types())
                .map(|i| if profile.robot_action(spec, i) == observed { b.get(i) } else { 0.0 })
                .collect();
            if posterior.iter().sum::<f64>() <= 0.0 {
                return Err(Error::BeliefUpdate { belief: b.clone() });
            }
            Ok(Belief::snapped(posterior))
        }
    }
}

/// All beliefs reachable from `prior` in at most `horizon` updates, sorted by key.
pub fn reachable_beliefs(model: &HumanModel, spec: &GameSpec, prior: &Belief, horizon: usize) -> Result<Vec<Belief>> {
    use std::collections::BTreeMap;
    let mut seen: BTreeMap<Vec<i64>, Belief> = BTreeMap::new();
    seen.insert(prior.key(), prior.clone());
    if horizon == 0 {
        return Ok(seen.into_values().collect());
    }
    match model {
        HumanModel::Bayesian => {
            // every observation partitions the types, so one step reaches any
            // renormalized restriction of the prior to a subset of its support
            let support: Vec<usize> = (0..prior.len()).filter(|&i| prior.get(i) > 0.0).collect();
            for mask in 1u64..(1u64 << support.len()) {
                let mut w = vec![0.0; prior.len()];
                for (bit, &i) in support.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        w[i] = prior.get(i);
                    }
                }
                let b = Belief::snapped(w);
                seen.insert(b.key(), b);
            }
        }
        _ => {
            let mut frontier = vec![prior.clone()];
            let empty = ActionProfile { human: 0, robot: vec![0; spec.n_types()] };
            for _ in 0..horizon {
                let mut next = Vec::new();
                for b in &frontier {
                    for a in 0..spec.robot_actions().len() {
                        if !(0..spec.n_types()).any(|i| spec.type_allows(i, a)) {
                            continue;
                        }
                        let nb = belief_update(model, spec, b, 0, a, &empty)?;
                        if !seen.contains_key(&nb.key()) {
                            seen.insert(nb.key(), nb.clone());
                            next.push(nb);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
        }
    }
    Ok(seen.into_values().collect())
}
