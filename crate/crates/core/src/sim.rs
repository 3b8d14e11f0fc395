//! Deterministic closed-loop simulation of the ego among open-loop
//! pedestrians.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::{barrier, gamma_from_trust, AgentState, CbfError, Vec2};
use crate::config::{ConfigError, ScenarioConfig, TrustMode};
use crate::mpc::{predict_ego, predict_pedestrians, MpcController, MpcError, SolveStatus};
use crate::trust::{PedestrianId, TrustError, TrustEstimator};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(#[from] MpcError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Trust(#[from] TrustError),
}

/// Bounded proportional reference: `kp * (x_g - x_e)` scaled down to norm
/// `u_max` when it is longer.
pub fn reference_velocity(x_e: &Vec2, x_g: &Vec2, kp: f64, u_max: f64) -> Vec2 {
    let v = (x_g - x_e) * kp;
    let n = v.norm();
    if n > u_max {
        v * (u_max / n)
    } else {
        v
    }
}

/// How solve times are recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    /// Record 0.0 so traces are reproducible byte for byte.
    #[default]
    Off,
    WallClock,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub timing: Timing,
    /// Overrides the configured trust decimation when set.
    pub trust_decimation: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSample {
    pub position: Vec2,
    pub distance: f64,
    pub trust: f64,
    pub gamma: f64,
    /// Barrier value at the recorded positions.
    pub h: f64,
}

/// State after executing one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    /// Time at the end of the step.
    pub time: f64,
    pub ego: Vec2,
    pub control: Vec2,
    pub reference: Vec2,
    pub pedestrians: Vec<PedestrianSample>,
    pub min_cbf_residual: Option<f64>,
    pub status: SolveStatus,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min_dist_per_ped: Vec<f64>,
    /// Executed steps until the goal tolerance was met.
    pub steps_to_goal: Option<u64>,
    /// Steps at which some pedestrian was closer than the safety radius.
    pub violations: u64,
    pub fallback_steps: u64,
    pub total_solve_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub summary: Summary,
}

impl SimResult {
    /// Distance to pedestrian `j` at every recorded step.
    pub fn distance_series(&self, j: usize) -> Vec<f64> {
        self.trace.iter().map(|r| r.pedestrians[j].distance).collect()
    }

    /// Run stopped short of the goal while stuck in the fallback.
    pub fn ended_in_fallback(&self) -> bool {
        self.summary.steps_to_goal.is_none()
            && self
                .trace
                .last()
                .is_some_and(|r| r.status == SolveStatus::InfeasibleFallback)
    }
}

/// Per-pedestrian trust, fixed or estimated online.
struct TrustSource<'a> {
    config: &'a ScenarioConfig,
    estimator: TrustEstimator,
    decimation: u64,
}

impl<'a> TrustSource<'a> {
    fn new(config: &'a ScenarioConfig, decimation: u64) -> Result<Self, SimError> {
        Ok(Self {
            config,
            estimator: TrustEstimator::new(config.trust.clone())?,
            decimation,
        })
    }

    fn update(&mut self, step: u64) -> Result<Vec<f64>, SimError> {
        let mut out = Vec::with_capacity(self.config.pedestrians.len());
        for (j, ped) in self.config.pedestrians.iter().enumerate() {
            let id = PedestrianId(j as u64 + 1);
            let tau = match &ped.trust {
                TrustMode::Fixed { value } => *value,
                TrustMode::Dynamic { script } => {
                    if step.is_multiple_of(self.decimation) {
                        if let Some(c) = script.confidences_at(step) {
                            self.estimator.observe(id, c, step)?;
                        }
                    }
                    // Never observed: no evidence of attentiveness yet.
                    self.estimator.trust(id).unwrap_or(0.0)
                }
            };
            out.push(tau);
        }
        Ok(out)
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<SimResult, SimError> {
    run_scenario_with(config, &SimOptions::default())
}

pub fn run_scenario_with(config: &ScenarioConfig, options: &SimOptions) -> Result<SimResult, SimError> {
    config.validate()?;
    let decimation = options.trust_decimation.unwrap_or(config.trust_decimation);
    if decimation < 1 {
        return Err(ConfigError::Invalid("trust_decimation must be ≥ 1".into()).into());
    }
    let cbf = config.cbf_params()?;
    let mut controller = MpcController::new(config.controller_config()?)?;
    let mut trust = TrustSource::new(config, decimation)?;

    let goal = Vec2::from(config.goal);
    let initial: Vec<AgentState> = config.pedestrians.iter().map(|p| p.initial_state()).collect();
    let mut ego = AgentState::at_rest(Vec2::from(config.ego_start));
    let mut peds = initial.clone();
    let n_p = peds.len();

    let mut trace = Vec::new();
    let mut min_dist = vec![f64::INFINITY; n_p];
    let mut steps_to_goal = None;
    let (mut violations, mut fallback_steps, mut total_time) = (0u64, 0u64, 0.0);

    for step in 0..config.max_steps {
        if (ego.position - goal).norm() <= config.goal_tol {
            steps_to_goal = Some(step);
            break;
        }
        let taus = trust.update(step)?;
        let gammas = taus
            .iter()
            .map(|t| gamma_from_trust(*t, &cbf))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = controller.reference(&ego, &goal)[0];
        let (u, solution) = controller.step(&ego, &peds, &taus, &goal)?;

        ego = predict_ego(&ego, &u, config.dt);
        // Recomputed from the start so ground truth carries no accumulated rounding.
        peds = predict_pedestrians(&initial, config.dt, step as usize + 1);

        let samples: Vec<PedestrianSample> = peds
            .iter()
            .zip(taus.iter().zip(&gammas))
            .map(|(p, (tau, gamma))| PedestrianSample {
                position: p.position,
                distance: (ego.position - p.position).norm(),
                trust: *tau,
                gamma: *gamma,
                h: barrier(&ego.position, &p.position, cbf.radius()),
            })
            .collect();
        for (m, s) in min_dist.iter_mut().zip(&samples) {
            *m = m.min(s.distance);
        }
        if samples.iter().any(|s| s.distance < cbf.radius()) {
            violations += 1;
        }
        if solution.status == SolveStatus::InfeasibleFallback {
            fallback_steps += 1;
        }
        let solve_time = match options.timing {
            Timing::Off => 0.0,
            Timing::WallClock => solution.solve_time,
        };
        total_time += solve_time;
        trace.push(TraceRow {
            step,
            time: (step + 1) as f64 * config.dt,
            ego: ego.position,
            control: u,
            reference,
            pedestrians: samples,
            min_cbf_residual: solution.min_cbf_residual,
            status: solution.status,
            solve_time,
        });
    }
    if steps_to_goal.is_none() && (ego.position - goal).norm() <= config.goal_tol {
        steps_to_goal = Some(trace.len() as u64);
    }

    Ok(SimResult {
        trace,
        summary: Summary {
            min_dist_per_ped: min_dist,
            steps_to_goal,
            violations,
            fallback_steps,
            total_solve_time_s: total_time,
        },
    })
}
