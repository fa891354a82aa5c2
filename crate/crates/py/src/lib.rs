//! Python bindings: build games, solve them, classify start conditions and
//! run sweeps.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use opaque_core::envs::EnvConfig;
use opaque_core::opacity::{self, SweepSpec};
use opaque_core::{solver, AugmentedState, Belief, RobotTiming, SolveOptions};

fn err(e: opaque_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn timing(name: &str) -> PyResult<RobotTiming> {
    match name {
        "responsive" => Ok(RobotTiming::Responsive),
        "committed" => Ok(RobotTiming::Committed),
        other => Err(PyValueError::new_err(format!("unknown timing {other:?}"))),
    }
}

/// A built environment.
#[pyclass(frozen)]
struct Game {
    env: EnvConfig,
    spec: opaque_core::GameSpec,
}

#[pymethods]
impl Game {
    /// `kind` is one of line1d, grid_arm, tower, driving; `params` is a JSON object string.
    #[new]
    #[pyo3(signature = (kind, params = "{}", horizon = None))]
    fn new(kind: &str, params: &str, horizon: Option<usize>) -> PyResult<Self> {
        let params: serde_json::Value = serde_json::from_str(params).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let env: EnvConfig = serde_json::from_value(serde_json::json!({"kind": kind, "params": params}))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let mut spec = env.build().map_err(err)?;
        if let Some(h) = horizon {
            spec = spec.with_horizon(h);
        }
        Ok(Game { env, spec })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name().to_string()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    #[getter]
    fn human_actions(&self) -> Vec<String> {
        self.spec.human_actions().iter().map(|a| a.label.clone()).collect()
    }

    #[getter]
    fn robot_actions(&self) -> Vec<String> {
        self.spec.robot_actions().iter().map(|a| a.label.clone()).collect()
    }

    #[getter]
    fn robot_types(&self) -> Vec<String> {
        self.spec.robot_types().iter().map(|t| t.label.clone()).collect()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.spec.states().len()
    }

    /// Index of the state with physical coordinates `values`.
    fn state_at(&self, values: Vec<f64>) -> PyResult<usize> {
        self.spec
            .state_at(&values)
            .ok_or_else(|| PyValueError::new_err(format!("no state at {values:?}")))
    }

    fn state_values(&self, state: usize) -> PyResult<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.spec.state_values(state))
    }

    fn start_state(&self) -> usize {
        self.env.start_state(&self.spec)
    }

    fn render(&self, state: usize) -> PyResult<String> {
        self.check_state(state)?;
        Ok(self.env.render(&self.spec, state).to_string())
    }
}

impl Game {
    fn check_state(&self, state: usize) -> PyResult<()> {
        if state >= self.spec.states().len() {
            return Err(PyValueError::new_err(format!("state {state} out of range")));
        }
        Ok(())
    }
}

/// How the human updates their belief about the robot's type.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct HumanModel(opaque_core::HumanModel);

#[pymethods]
impl HumanModel {
    #[staticmethod]
    fn incremental(rate: f64) -> PyResult<Self> {
        opaque_core::HumanModel::incremental(rate).map(HumanModel).map_err(err)
    }

    #[staticmethod]
    fn bayesian() -> Self {
        HumanModel(opaque_core::HumanModel::Bayesian)
    }

    /// `prior` is the probability of the capable type the human resets to.
    #[staticmethod]
    fn bounded_memory(rate: f64, prior: f64) -> PyResult<Self> {
        let prior = Belief::from_scalar(prior).map_err(err)?;
        opaque_core::HumanModel::bounded_memory(rate, prior).map(HumanModel).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind_name()
    }

    #[getter]
    fn rate(&self) -> Option<f64> {
        self.0.rate()
    }

    fn __repr__(&self) -> String {
        serde_json::to_string(&self.0).unwrap_or_default()
    }
}

fn root(game: &Game, state: usize, prior: f64, t: usize) -> PyResult<AugmentedState> {
    game.check_state(state)?;
    Ok(AugmentedState::new(t, state, Belief::from_scalar(prior).map_err(err)?))
}

/// A solved game over the states reachable from the given roots.
#[pyclass(frozen)]
struct Table {
    game: Py<Game>,
    table: opaque_core::SolutionTable,
}

#[pymethods]
impl Table {
    fn __len__(&self) -> usize {
        self.table.len()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.table.lambda()
    }

    #[pyo3(signature = (state, prior, t = 0))]
    fn value(&self, state: usize, prior: f64, t: usize) -> PyResult<f64> {
        let x = root(self.game.get(), state, prior, t)?;
        self.table.value(&x).map_err(err)
    }

    /// `(human action, [robot action per type])` labels of the stored profile.
    #[pyo3(signature = (state, prior, t = 0))]
    fn policy(&self, state: usize, prior: f64, t: usize) -> PyResult<(String, Vec<String>)> {
        let game = self.game.get();
        let x = root(game, state, prior, t)?;
        let spec = &game.spec;
        let h = self.table.policy_human(&x).map_err(err)?;
        let robot = (0..spec.n_types())
            .map(|i| self.table.policy_robot(&x, i).map(|a| spec.robot_actions()[a].label.clone()))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        Ok((spec.human_actions()[h].label.clone(), robot))
    }

    /// Verdict name plus witness and final beliefs, as a dict.
    #[pyo3(signature = (state, prior, timing = "responsive"))]
    fn classify<'py>(&self, py: Python<'py>, state: usize, prior: f64, timing: &str) -> PyResult<Bound<'py, PyDict>> {
        let game = self.game.get();
        let x = root(game, state, prior, 0)?;
        let v = opacity::classify_with(&self.table, &x, self::timing(timing)?).map_err(err)?;
        let labels = |seq: &Vec<usize>| -> Vec<String> {
            seq.iter().map(|&h| game.spec.human_actions()[h].label.clone()).collect()
        };
        let out = PyDict::new(py);
        out.set_item("verdict", v.verdict.to_string())?;
        out.set_item("rational_final_beliefs", v.rational_final_beliefs.iter().map(Belief::scalar).collect::<Vec<_>>())?;
        match v.witness {
            Some(w) => {
                out.set_item("witness", w.human_sequences.iter().map(labels).collect::<Vec<_>>())?;
                out.set_item("witness_final_beliefs", w.final_beliefs.iter().map(Belief::scalar).collect::<Vec<_>>())?;
            }
            None => {
                out.set_item("witness", py.None())?;
                out.set_item("witness_final_beliefs", py.None())?;
            }
        }
        Ok(out)
    }

    /// Prior-weighted task reward of the rational rollouts.
    #[pyo3(signature = (state, prior, timing = "committed"))]
    fn expected_value(&self, state: usize, prior: f64, timing: &str) -> PyResult<f64> {
        let x = root(self.game.get(), state, prior, 0)?;
        opacity::expected_rollout_value(&self.table, &x, self::timing(timing)?).map_err(err)
    }

    fn to_json(&self) -> String {
        self.table.export_json().to_string()
    }
}

/// Solves `game` from every `(state, prior)` root.
#[pyfunction]
#[pyo3(signature = (game, model, roots, lambda_ = 0.0))]
fn solve(py: Python<'_>, game: Py<Game>, model: HumanModel, roots: Vec<(usize, f64)>, lambda_: f64) -> PyResult<Table> {
    let g = game.get();
    let roots: Vec<AugmentedState> = roots.iter().map(|&(s, p)| root(g, s, p, 0)).collect::<PyResult<_>>()?;
    let spec = g.spec.clone();
    let opts = SolveOptions { lambda: lambda_, ..Default::default() };
    let table = py.detach(|| opaque_core::solve_with(&spec, &model.0, &roots, &opts)).map_err(err)?;
    Ok(Table { game, table })
}

/// Memo-free expectimax value of one root.
#[pyfunction]
#[pyo3(signature = (game, model, state, prior, lambda_ = 0.0))]
fn brute_force_value(game: &Game, model: &HumanModel, state: usize, prior: f64, lambda_: f64) -> PyResult<f64> {
    let x = root(game, state, prior, 0)?;
    solver::brute_force_value_weighted(&game.spec, &model.0, &x, lambda_).map_err(err)
}

/// Runs a sweep and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (game, model, horizons, rates = Vec::new(), prior_grid = None, lambda_ = 0.0, timing = "responsive"))]
fn sweep(
    py: Python<'_>,
    game: &Game,
    model: &HumanModel,
    horizons: Vec<usize>,
    rates: Vec<f64>,
    prior_grid: Option<Vec<f64>>,
    lambda_: f64,
    timing: &str,
) -> PyResult<String> {
    let spec = SweepSpec {
        env: game.env.clone(),
        model: model.0.clone(),
        horizons,
        rates,
        prior_grid: prior_grid.unwrap_or_else(opaque_core::config::default_prior_grid),
        lambda: lambda_,
        timing: self::timing(timing)?,
    };
    let report = py.detach(|| opacity::sweep(&spec)).map_err(err)?;
    let mut buf = Vec::new();
    opacity::write_csv(&report.rows, &mut buf).map_err(err)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

#[pymodule]
fn opaque_games(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Game>()?;
    m.add_class::<HumanModel>()?;
    m.add_class::<Table>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_value, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
