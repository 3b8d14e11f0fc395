//! Receding-horizon controller with trust-adaptive barrier constraints.

mod controller;
mod problem;

pub use controller::{solve, ControllerConfig, MpcController, MpcSolution, ReferenceMode, SolveStatus};
pub use problem::{Bounds2, MpcParams, MpcProblem};

use thiserror::Error;

use crate::cbf::{AgentState, CbfError, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Cbf(#[from] CbfError),
}

/// Single-integrator step: the commanded velocity moves the position and
/// becomes the new velocity.
pub fn predict_ego(state: &AgentState, u: &Vec2, dt: f64) -> AgentState {
    AgentState {
        position: state.position + u * dt,
        velocity: *u,
    }
}

/// Constant-velocity rollout of every pedestrian `k` steps ahead.
pub fn predict_pedestrians(pedestrians: &[AgentState], dt: f64, k: usize) -> Vec<AgentState> {
    let horizon = k as f64 * dt;
    pedestrians
        .iter()
        .map(|p| AgentState {
            position: p.position + p.velocity * horizon,
            velocity: p.velocity,
        })
        .collect()
}

/// Squared deviation from the reference velocity.
pub fn stage_cost(u: &Vec2, u_ref: &Vec2) -> f64 {
    (u - u_ref).norm_squared()
}
