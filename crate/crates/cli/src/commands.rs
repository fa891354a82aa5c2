use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use opaque_core::config::ExperimentConfig;
use opaque_core::opacity::{classify_with, solve_grouped, sweep, write_csv, SweepReport, SweepSpec, Verdict};
use opaque_core::session::{sample_type, Algorithm, Session, SessionError};
use opaque_core::solver::{brute_force_value_weighted, SolutionTable, SolveOptions};
use opaque_core::{AugmentedState, Error, GameSpec, Result};

/// Command-line overrides of the config grids.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub horizon: Option<usize>,
    pub rate: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(h) = self.horizon {
            cfg.horizons = vec![h];
        }
        if let Some(r) = self.rate {
            cfg.rates = vec![r];
        }
        cfg.validate()
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn pick<'a>(out: Option<&'a Path>, configured: &'a Option<PathBuf>) -> Option<&'a Path> {
    out.or(configured.as_deref())
}

fn spec_for(cfg: &ExperimentConfig, horizon: usize) -> Result<GameSpec> {
    Ok(cfg.env.build()?.with_horizon(horizon))
}

fn solve_roots(cfg: &ExperimentConfig, spec: &GameSpec) -> Result<Vec<(SolutionTable, Vec<AugmentedState>)>> {
    let opts = SolveOptions { lambda: cfg.lambda, ..Default::default() };
    solve_grouped(spec, &cfg.primary_model()?, cfg.roots(spec)?, &opts)
}

fn root_json(spec: &GameSpec, x: &AugmentedState) -> Value {
    json!({"state": spec.state_values(x.state), "belief": x.belief})
}

/// Root values and equilibrium profiles, one block per horizon.
pub fn cmd_solve(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Value> {
    let mut blocks = Vec::new();
    for horizon in cfg.horizons() {
        let spec = spec_for(cfg, horizon)?;
        let mut nodes = 0;
        let mut roots = Vec::new();
        for (table, rs) in solve_roots(cfg, &spec)? {
            nodes += table.len();
            for x in rs {
                let mut r = root_json(&spec, &x);
                r["value"] = json!(table.value(&x)?);
                if horizon > 0 {
                    let h = table.policy_human(&x)?;
                    let robot: Vec<&str> = (0..spec.n_types())
                        .map(|i| table.policy_robot(&x, i).map(|a| spec.robot_actions()[a].label.as_str()))
                        .collect::<Result<_>>()?;
                    r["human_action"] = json!(spec.human_actions()[h].label);
                    r["robot_actions"] = json!(robot);
                }
                roots.push(r);
            }
        }
        tracing::info!(horizon, nodes, "solved");
        blocks.push(json!({
            "env": cfg.env.id(),
            "model": cfg.primary_model()?,
            "lambda": cfg.lambda,
            "horizon": horizon,
            "nodes": nodes,
            "roots": roots,
        }));
    }
    let summary = Value::Array(blocks);
    let mut w = open_out(pick(out, &cfg.outputs.json))?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassifyRecord {
    pub horizon: usize,
    pub state: Vec<f64>,
    pub prior: f64,
    pub verdict: Verdict,
    /// Per-type human action labels that separate the types.
    pub witness: Option<Vec<Vec<String>>>,
    pub witness_final_beliefs: Option<Vec<f64>>,
    pub rational_final_beliefs: Vec<f64>,
}

/// One verdict line per root on `lines`; witnesses go to the JSON output when
/// one is given.
pub fn cmd_classify<W: Write>(cfg: &ExperimentConfig, out: Option<&Path>, lines: &mut W) -> Result<Vec<ClassifyRecord>> {
    let mut records = Vec::new();
    for horizon in cfg.horizons() {
        let spec = spec_for(cfg, horizon)?;
        for (table, rs) in solve_roots(cfg, &spec)? {
            for x in rs {
                let v = classify_with(&table, &x, cfg.robot_timing)?;
                let labels = |seq: &Vec<usize>| seq.iter().map(|&h| spec.human_actions()[h].label.clone()).collect();
                let rec = ClassifyRecord {
                    horizon,
                    state: spec.state_values(x.state),
                    prior: x.belief.scalar(),
                    verdict: v.verdict,
                    witness: v.witness.as_ref().map(|w| w.human_sequences.iter().map(labels).collect()),
                    witness_final_beliefs: v.witness.as_ref().map(|w| w.final_beliefs.iter().map(|b| b.scalar()).collect()),
                    rational_final_beliefs: v.rational_final_beliefs.iter().map(|b| b.scalar()).collect(),
                };
                writeln!(lines, "T={} state={:?} prior={} {}", horizon, rec.state, rec.prior, rec.verdict)?;
                records.push(rec);
            }
        }
    }
    if let Some(path) = pick(out, &cfg.outputs.json) {
        let mut w = open_out(Some(path))?;
        serde_json::to_writer_pretty(&mut w, &records)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(records)
}

/// Writes the sweep CSV; skipped cells are reported, not written.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepReport> {
    let report = sweep(&SweepSpec {
        env: cfg.env.clone(),
        model: cfg.model.clone(),
        horizons: cfg.horizons(),
        rates: cfg.rates.clone(),
        prior_grid: cfg.prior_grid.clone(),
        lambda: cfg.lambda,
        timing: cfg.robot_timing,
    })?;
    for cell in &report.skipped {
        tracing::warn!(env = %cell.env, horizon = cell.horizon, rate = ?cell.rate, error = %cell.error, "cell skipped");
    }
    write_csv(&report.rows, open_out(pick(out, &cfg.outputs.csv))?)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleLine {
    pub horizon: usize,
    pub state: Vec<f64>,
    pub prior: f64,
    pub solve: f64,
    pub brute_force: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleReport {
    pub tolerance: f64,
    pub lines: Vec<OracleLine>,
}

impl OracleReport {
    pub fn failures(&self) -> usize {
        self.lines.iter().filter(|l| !l.pass).count()
    }
}

/// Compares solver root values with the memo-free expectimax.
pub fn cmd_oracle<W: Write>(cfg: &ExperimentConfig, tolerance: f64, lines: &mut W) -> Result<OracleReport> {
    let mut report = OracleReport { tolerance, lines: vec![] };
    for horizon in cfg.horizons() {
        let spec = spec_for(cfg, horizon)?;
        for (table, rs) in solve_roots(cfg, &spec)? {
            for x in rs {
                let solve = table.value(&x)?;
                let brute_force = brute_force_value_weighted(&spec, table.model(), &x, cfg.lambda)?;
                let line = OracleLine {
                    horizon,
                    state: spec.state_values(x.state),
                    prior: x.belief.scalar(),
                    solve,
                    brute_force,
                    pass: (solve - brute_force).abs() <= tolerance,
                };
                writeln!(
                    lines,
                    "{} T={} state={:?} prior={} solve={} brute_force={}",
                    if line.pass { "PASS" } else { "FAIL" },
                    horizon,
                    line.state,
                    line.prior,
                    solve,
                    brute_force
                )?;
                report.lines.push(line);
            }
        }
    }
    writeln!(lines, "{} roots, {} failures", report.lines.len(), report.failures())?;
    Ok(report)
}

fn prompt<R: BufRead, W: Write>(input: &mut R, output: &mut W, text: &str) -> Result<Option<String>> {
    write!(output, "{text}")?;
    output.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

/// Terminal session against the configured environment. The robot is
/// opaque when the config lambda is 0 and transparent otherwise. Returns the
/// session record, or `None` if input ended early.
pub fn cmd_play<R: BufRead, W: Write>(cfg: &ExperimentConfig, input: &mut R, output: &mut W) -> Result<Option<Value>> {
    let spec = cfg.env.build()?;
    let model = cfg.primary_model()?.with_prior(spec.prior().clone());
    let root = AugmentedState::root(cfg.env.start_state(&spec), spec.prior().clone());
    let opts = SolveOptions { lambda: cfg.lambda, ..Default::default() };
    let table = opaque_core::solve_with(&spec, &model, std::slice::from_ref(&root), &opts)?;
    let algorithm = if cfg.lambda > 0.0 { Algorithm::Transparent } else { Algorithm::Opaque };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ty = sample_type(&mut rng, spec.prior());
    let mut session = Session::new("terminal".into(), cfg.env.clone(), algorithm, table.into(), ty)?;
    let menu = session.menu().join(" | ");
    writeln!(output, "{} for {} steps. Actions: {menu}", cfg.env.id(), spec.horizon())?;
    writeln!(output, "{}", session.render())?;
    while session.t() < spec.horizon() {
        let Some(line) = prompt(input, output, &format!("t={} > ", session.t()))? else {
            return Ok(None);
        };
        match session.act(&line, None) {
            Ok(step) => writeln!(
                output,
                "robot: {}  reward: {}  score: {}\n{}",
                step.robot_action, step.reward, step.score, step.state
            )?,
            Err(SessionError::UnknownAction(a)) => writeln!(output, "{a:?} is not one of: {menu}")?,
            Err(SessionError::Core(e)) => return Err(e),
            Err(e) => return Err(Error::InvalidAction(e.to_string())),
        }
    }
    let types: Vec<String> = spec.robot_types().iter().map(|t| t.label.clone()).collect();
    loop {
        let Some(guess) = prompt(input, output, &format!("Which robot was this ({})? ", types.join("/")))? else {
            return Ok(None);
        };
        let Some(pref) = prompt(input, output, "How much did you like working with it (1-7)? ")? else {
            return Ok(None);
        };
        let pref: u8 = pref.parse().unwrap_or(0);
        match session.guess(&guess, pref) {
            Ok(g) => {
                writeln!(output, "It was {}. {}", g.true_type, if g.correct { "Correct." } else { "Wrong." })?;
                return Ok(Some(session.record()));
            }
            Err(e) => writeln!(output, "{e}")?,
        }
    }
}
