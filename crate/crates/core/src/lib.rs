//! Finite-horizon common-payoff games with a hidden robot type: modelling,
//! equilibrium solving, opacity analysis and live play sessions.

pub mod config;
pub mod envs;
pub mod error;
pub mod game;
pub mod human;
pub mod opacity;
pub mod session;
pub mod solver;

pub use error::{Error, Result};
pub use game::{ActionProfile, AugmentedState, Belief, GameSpec, State, Trajectory};
pub use human::HumanModel;
pub use solver::{solve, solve_with, RobotTiming, SolutionTable, SolveOptions};
