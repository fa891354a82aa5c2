//! Opacity classification of start conditions and percentage sweeps.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::game::{AugmentedState, Belief, GameSpec, NodeKey, BELIEF_EQ_TOL};
use crate::human::HumanModel;
use crate::solver::{solve_with, RobotTiming, SolutionTable, SolveOptions};

/// Open-loop sequences explored by [`classify`] at most.
pub const SEQUENCE_CAP: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    FullyOpaque,
    RationallyOpaque,
    Revealing,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Human play that separates the types. `human_sequences[i]` is what the
/// human did while paired with type `i`; for an open-loop witness all entries
/// are equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub human_sequences: Vec<Vec<usize>>,
    pub final_beliefs: Vec<Belief>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpacityVerdict {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub rational_final_beliefs: Vec<Belief>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub type_index: usize,
    /// Visited augmented states, root first, length `T + 1`.
    pub path: Vec<AugmentedState>,
    pub human_actions: Vec<usize>,
    /// Global robot action indices.
    pub robot_actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub total_reward: f64,
}

impl Rollout {
    pub fn final_belief(&self) -> &Belief {
        &self.path.last().expect("rollout path is never empty").belief
    }
}

/// Plays `root` to the horizon with a robot of type `type_index`. Without
/// `human_seq` the human follows the solved policy.
pub fn rollout(
    table: &SolutionTable,
    root: &AugmentedState,
    type_index: usize,
    human_seq: Option<&[usize]>,
) -> Result<Rollout> {
    rollout_with(table, root, type_index, human_seq, RobotTiming::default())
}

pub fn rollout_with(
    table: &SolutionTable,
    root: &AugmentedState,
    type_index: usize,
    human_seq: Option<&[usize]>,
    timing: RobotTiming,
) -> Result<Rollout> {
    let spec = table.spec();
    let horizon = spec.horizon();
    if let Some(seq) = human_seq {
        if seq.len() != horizon - root.t {
            return Err(Error::Length { expected: horizon - root.t, got: seq.len() });
        }
        if let Some(bad) = seq.iter().find(|&&h| h >= spec.human_actions().len()) {
            return Err(Error::InvalidAction(format!("human action {bad} out of range")));
        }
    }
    table.node(root)?;
    let mut x = root.clone();
    let mut out = Rollout {
        type_index,
        path: vec![x.clone()],
        human_actions: vec![],
        robot_actions: vec![],
        rewards: vec![],
        total_reward: 0.0,
    };
    for k in 0..horizon - root.t {
        let h = match human_seq {
            Some(seq) => seq[k],
            None => table.policy_human(&x)?,
        };
        let (next, a, reward) = table.step(&x, h, type_index, timing)?;
        out.human_actions.push(h);
        out.robot_actions.push(a);
        out.rewards.push(reward);
        out.total_reward += reward;
        out.path.push(next.clone());
        x = next;
    }
    out.total_reward += spec.terminal_reward(x.state);
    Ok(out)
}

fn diverge(beliefs: &[&Belief]) -> bool {
    beliefs.iter().any(|b| !b.approx_eq(beliefs[0], BELIEF_EQ_TOL))
}

pub fn classify(table: &SolutionTable, root: &AugmentedState) -> Result<OpacityVerdict> {
    classify_with(table, root, RobotTiming::default())
}

/// Rational rollouts first; if they already separate the types the root is
/// revealing. Otherwise every open-loop human sequence is tried in
/// lexicographic order. While the types act alike the human sees the same
/// thing whichever type they face, so open-loop sequences cover adaptive play.
pub fn classify_with(table: &SolutionTable, root: &AugmentedState, timing: RobotTiming) -> Result<OpacityVerdict> {
    let spec = table.spec();
    if root.t != 0 {
        return Err(Error::Spec(format!("classify needs a t = 0 root, got {root}")));
    }
    let n = spec.n_types();
    let rational: Vec<Rollout> = (0..n).map(|i| rollout_with(table, root, i, None, timing)).collect::<Result<_>>()?;
    let rational_final_beliefs: Vec<Belief> = rational.iter().map(|r| r.final_belief().clone()).collect();
    if diverge(&rational_final_beliefs.iter().collect::<Vec<_>>()) {
        let witness = Witness {
            human_sequences: rational.iter().map(|r| r.human_actions.clone()).collect(),
            final_beliefs: rational_final_beliefs.clone(),
        };
        return Ok(OpacityVerdict { verdict: Verdict::Revealing, witness: Some(witness), rational_final_beliefs });
    }
    let nh = spec.human_actions().len() as u128;
    let size = (0..spec.horizon()).try_fold(1u128, |acc, _| acc.checked_mul(nh)).unwrap_or(u128::MAX);
    if size > SEQUENCE_CAP {
        return Err(Error::Capacity { what: "open-loop human sequences".into(), size, cap: SEQUENCE_CAP });
    }
    let mut search = Search { table, timing, explored: HashSet::new(), seq: Vec::with_capacity(spec.horizon()) };
    let xs = vec![root.clone(); n];
    let verdict = match search.first_divergence(&xs)? {
        None => OpacityVerdict { verdict: Verdict::FullyOpaque, witness: None, rational_final_beliefs },
        Some(final_beliefs) => OpacityVerdict {
            verdict: Verdict::RationallyOpaque,
            witness: Some(Witness { human_sequences: vec![search.seq.clone(); n], final_beliefs }),
            rational_final_beliefs,
        },
    };
    Ok(verdict)
}

struct Search<'a> {
    table: &'a SolutionTable,
    timing: RobotTiming,
    // per-type positions whose subtrees hold no divergence
    explored: HashSet<Vec<NodeKey>>,
    seq: Vec<usize>,
}

impl Search<'_> {
    /// Depth-first over human actions; on success `seq` holds the witness.
    fn first_divergence(&mut self, xs: &[AugmentedState]) -> Result<Option<Vec<Belief>>> {
        let spec = self.table.spec();
        if xs[0].t == spec.horizon() {
            let finals: Vec<&Belief> = xs.iter().map(|x| &x.belief).collect();
            return Ok(diverge(&finals).then(|| finals.into_iter().cloned().collect()));
        }
        let key: Vec<NodeKey> = xs.iter().map(AugmentedState::key).collect();
        if self.explored.contains(&key) {
            return Ok(None);
        }
        for h in 0..spec.human_actions().len() {
            let next: Vec<AugmentedState> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| self.table.step(x, h, i, self.timing).map(|s| s.0))
                .collect::<Result<_>>()?;
            self.seq.push(h);
            if let Some(found) = self.first_divergence(&next)? {
                return Ok(Some(found));
            }
            self.seq.pop();
        }
        self.explored.insert(key);
        Ok(None)
    }
}

/// Prior-weighted realized reward of the rational rollouts.
pub fn expected_rollout_value(table: &SolutionTable, root: &AugmentedState, timing: RobotTiming) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..table.spec().n_types() {
        let p = root.belief.get(i);
        if p > 0.0 {
            total += p * rollout_with(table, root, i, None, timing)?.total_reward;
        }
    }
    Ok(total)
}

pub const CSV_HEADER: [&str; 7] =
    ["env", "horizon", "model", "rate", "n_roots", "pct_fully_opaque", "pct_rationally_opaque"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub env: String,
    pub horizon: usize,
    pub model: String,
    pub rate: Option<f64>,
    pub n_roots: usize,
    pub pct_fully_opaque: f64,
    pub pct_rationally_opaque: f64,
}

/// A sweep cell that could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub env: String,
    pub horizon: usize,
    pub rate: Option<f64>,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub env: EnvConfig,
    pub model: HumanModel,
    pub horizons: Vec<usize>,
    /// Ignored for the Bayesian model; empty means the model's own rate.
    pub rates: Vec<f64>,
    /// Prior probabilities of type 0.
    pub prior_grid: Vec<f64>,
    pub lambda: f64,
    pub timing: RobotTiming,
}

/// Solves the roots together, except under a bounded-memory human, who
/// forgets back to its own prior: there each distinct root belief is a
/// separate game with that belief as the model prior. Groups keep first-seen
/// order.
pub fn solve_grouped(
    spec: &GameSpec,
    model: &HumanModel,
    roots: Vec<AugmentedState>,
    opts: &SolveOptions,
) -> Result<Vec<(SolutionTable, Vec<AugmentedState>)>> {
    if !matches!(model, HumanModel::BoundedMemory { .. }) {
        let table = solve_with(spec, model, &roots, opts)?;
        return Ok(vec![(table, roots)]);
    }
    let mut groups: Vec<(Belief, Vec<AugmentedState>)> = Vec::new();
    for r in roots {
        match groups.iter_mut().find(|(b, _)| b.key() == r.belief.key()) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.belief.clone(), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(b, roots)| Ok((solve_with(spec, &model.with_prior(b), &roots, opts)?, roots)))
        .collect()
}

/// Per-root verdicts for one (horizon, model) cell.
pub fn classify_cell(
    env: &EnvConfig,
    model: &HumanModel,
    horizon: usize,
    prior_grid: &[f64],
    lambda: f64,
    timing: RobotTiming,
) -> Result<Vec<(AugmentedState, Verdict)>> {
    let spec = env.build()?.with_horizon(horizon);
    let beliefs: Vec<Belief> = prior_grid.iter().map(|&p| Belief::from_scalar(p)).collect::<Result<_>>()?;
    let roots: Vec<AugmentedState> = env
        .sweep_states(&spec)
        .into_iter()
        .flat_map(|s| beliefs.iter().map(move |b| AugmentedState::root(s, b.clone())))
        .collect();
    let opts = SolveOptions { lambda, ..Default::default() };
    let mut out = Vec::new();
    for (table, roots) in solve_grouped(&spec, model, roots, &opts)? {
        let verdicts: Vec<Verdict> =
            roots.par_iter().map(|r| classify_with(&table, r, timing).map(|v| v.verdict)).collect::<Result<_>>()?;
        out.extend(roots.into_iter().zip(verdicts));
    }
    Ok(out)
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepReport> {
    if spec.horizons.is_empty() || spec.prior_grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let rates: Vec<Option<f64>> = match spec.model {
        HumanModel::Bayesian => vec![None],
        _ if spec.rates.is_empty() => vec![spec.model.rate()],
        _ => spec.rates.iter().map(|&r| Some(r)).collect(),
    };
    let mut cells: Vec<(Option<f64>, usize)> =
        rates.iter().flat_map(|&r| spec.horizons.iter().map(move |&h| (r, h))).collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    cells.dedup();
    let env_id = spec.env.id();
    let results: Vec<std::result::Result<SweepRow, SkippedCell>> = cells
        .par_iter()
        .map(|&(rate, horizon)| {
            let skipped = |e: Error| SkippedCell { env: env_id.clone(), horizon, rate, error: e.to_string() };
            let model = match rate {
                Some(r) => spec.model.with_rate(r).map_err(skipped)?,
                None => spec.model.clone(),
            };
            tracing::debug!(env = %env_id, horizon, ?rate, "sweep cell");
            let verdicts = classify_cell(&spec.env, &model, horizon, &spec.prior_grid, spec.lambda, spec.timing)
                .map_err(|e| {
                    tracing::warn!(env = %env_id, horizon, ?rate, error = %e, "sweep cell skipped");
                    skipped(e)
                })?;
            let n = verdicts.len();
            let fully = verdicts.iter().filter(|(_, v)| *v == Verdict::FullyOpaque).count();
            let rational = verdicts.iter().filter(|(_, v)| *v != Verdict::Revealing).count();
            let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
            Ok(SweepRow {
                env: env_id.clone(),
                horizon,
                model: spec.model.kind_name().into(),
                rate,
                n_roots: n,
                pct_fully_opaque: pct(fully),
                pct_rationally_opaque: pct(rational),
            })
        })
        .collect();
    let mut report = SweepReport::default();
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err(cell) => report.skipped.push(cell),
        }
    }
    Ok(report)
}

/// Writes rows as CSV with the fixed header; percentages to two decimals.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.env.clone(),
            r.horizon.to_string(),
            r.model.clone(),
            r.rate.map(|x| x.to_string()).unwrap_or_default(),
            r.n_roots.to_string(),
            format!("{:.2}", r.pct_fully_opaque),
            format!("{:.2}", r.pct_rationally_opaque),
        ])?;
    }
    w.flush()?;
    Ok(())
}
