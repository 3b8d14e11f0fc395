//! Distance barrier, safe-set membership and the trust-adaptive decay rate.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("invalid barrier parameters: {0}")]
    InvalidParams(String),
    #[error("trust {0} is outside [0, 1]")]
    TrustDomain(f64),
}

/// Position and velocity of an agent in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl AgentState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
    }
}

/// Safety radius and the parameters of the trust-to-decay-rate map
/// `gamma = gamma_ini + delta * tau^lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfParams {
    radius: f64,
    gamma_ini: f64,
    delta: f64,
    lambda: f64,
}

impl CbfParams {
    /// Rejects parameter sets for which gamma could leave `[0, 1]`.
    pub fn new(radius: f64, gamma_ini: f64, delta: f64, lambda: f64) -> Result<Self, CbfError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(CbfError::InvalidParams(format!("radius must be > 0, got {radius}")));
        }
        if !(gamma_ini >= 0.0) {
            return Err(CbfError::InvalidParams(format!(
                "gamma_ini must be >= 0, got {gamma_ini}"
            )));
        }
        if !(delta >= 0.0) {
            return Err(CbfError::InvalidParams(format!("delta must be >= 0, got {delta}")));
        }
        if !(gamma_ini + delta <= 1.0) {
            return Err(CbfError::InvalidParams(format!(
                "gamma_ini + delta must be ≤ 1, got {}",
                gamma_ini + delta
            )));
        }
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(CbfError::InvalidParams(format!("lambda must be ≥ 1, got {lambda}")));
        }
        Ok(Self {
            radius,
            gamma_ini,
            delta,
            lambda,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn gamma_ini(&self) -> f64 {
        self.gamma_ini
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `||x_e - x_j||^2 - R^2`. Non-negative outside the safety disk.
pub fn barrier(ego: &Vec2, other: &Vec2, radius: f64) -> f64 {
    (ego - other).norm_squared() - radius * radius
}

pub fn barrier_vector(ego: &Vec2, pedestrians: &[AgentState], radius: f64) -> Vec<f64> {
    pedestrians
        .iter()
        .map(|p| barrier(ego, &p.position, radius))
        .collect()
}

pub fn in_safe_set(ego: &Vec2, pedestrians: &[AgentState], radius: f64) -> bool {
    barrier_vector(ego, pedestrians, radius)
        .into_iter()
        .all(|h| h >= 0.0)
}

/// Decay rate allowed for the barrier of a pedestrian with trust `tau`.
/// Lower trust gives a smaller rate and a more conservative approach.
pub fn gamma_from_trust(tau: f64, params: &CbfParams) -> Result<f64, CbfError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(CbfError::TrustDomain(tau));
    }
    Ok(params.gamma_ini + params.delta * tau.powf(params.lambda))
}

/// `h_next - (1 - gamma) * h_curr`; the discrete-time condition holds when
/// this is non-negative.
pub fn discrete_cbf_residual(h_next: f64, h_curr: f64, gamma: f64) -> f64 {
    h_next - (1.0 - gamma) * h_curr
}
