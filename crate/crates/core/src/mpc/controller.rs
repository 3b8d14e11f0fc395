use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{predict_ego, MpcError, MpcParams, MpcProblem};
use crate::cbf::{AgentState, CbfParams, Vec2};
use crate::sim::reference_velocity;
use crate::sqp::{self, NlpProblem, SqpSettings, SqpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    InfeasibleFallback,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleSuboptimal => "feasible_suboptimal",
            SolveStatus::InfeasibleFallback => "infeasible_fallback",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub controls: Vec<Vec2>,
    /// `N_h + 1` states starting at the current ego state.
    pub predicted_ego: Vec<AgentState>,
    pub cost: f64,
    pub status: SolveStatus,
    /// Smallest barrier decay residual over all constraints; `None` without
    /// pedestrians.
    pub min_cbf_residual: Option<f64>,
    /// Wall-clock solve time in seconds.
    pub solve_time: f64,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

fn clip(v: f64, lim: f64) -> f64 {
    v.clamp(-lim, lim)
}

fn predicted_states(problem: &MpcProblem, controls: &[Vec2]) -> Vec<AgentState> {
    let dt = problem.params().dt;
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut s = *problem.ego();
    states.push(s);
    for u in controls {
        s = predict_ego(&s, u, dt);
        states.push(s);
    }
    states
}

/// Solve the problem from `initial` (the reference sequence when `None`).
///
/// Never fails: if no feasible point is found the solution carries zero
/// controls and [`SolveStatus::InfeasibleFallback`].
pub fn solve(problem: &MpcProblem, initial: Option<&[Vec2]>) -> MpcSolution {
    let start = Instant::now();
    let params = problem.params();
    let guess = match initial {
        Some(g) if g.len() == params.horizon => g,
        _ => problem.reference(),
    };
    let x0: Vec<f64> = MpcProblem::flatten(guess)
        .into_iter()
        .map(|v| clip(v, params.u_max))
        .collect();

    let settings = SqpSettings {
        feasibility_tol: params.solver_tol,
        step_tol: 1e-9,
        max_iters: params.max_iters,
    };
    let out = sqp::minimize(problem, &x0, &settings);

    let (controls, status, diagnostic) = match out.status {
        SqpStatus::Converged => (MpcProblem::controls_from_flat(&out.x), SolveStatus::Optimal, None),
        SqpStatus::Feasible => (
            MpcProblem::controls_from_flat(&out.x),
            SolveStatus::FeasibleSuboptimal,
            Some(format!("stopped after {} iterations", out.iterations)),
        ),
        SqpStatus::Infeasible => (
            vec![Vec2::zeros(); params.horizon],
            SolveStatus::InfeasibleFallback,
            Some(format!(
                "no feasible point after {} iterations (violation {:.3e})",
                out.iterations, out.max_violation
            )),
        ),
    };
    let flat = MpcProblem::flatten(&controls);
    let min_cbf_residual = problem
        .cbf_residuals(&flat)
        .into_iter()
        .reduce(f64::min);
    MpcSolution {
        predicted_ego: predicted_states(problem, &controls),
        cost: problem.objective(&flat),
        controls,
        status,
        min_cbf_residual,
        solve_time: start.elapsed().as_secs_f64(),
        iterations: out.iterations,
        diagnostic,
    }
}

/// How the reference velocity is generated across the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Evaluated once at the current state and held.
    #[default]
    Constant,
    /// Re-evaluated at each predicted state along the nominal trajectory
    /// (the shifted previous solution, or the constant reference on a cold
    /// start).
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub mpc: MpcParams,
    pub cbf: CbfParams,
    /// Gain of the bounded proportional reference law.
    pub kp: f64,
    pub reference_mode: ReferenceMode,
}

/// Receding-horizon controller owning its warm-start state.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: ControllerConfig,
    warm: Option<Vec<Vec2>>,
}

impl MpcController {
    pub fn new(config: ControllerConfig) -> Result<Self, MpcError> {
        config.mpc.validate()?;
        if !(config.kp > 0.0) {
            return Err(MpcError::InvalidParams(format!("kp must be > 0, got {}", config.kp)));
        }
        Ok(Self { config, warm: None })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Drop the warm start; the next step starts cold.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn warm_start(&self) -> Option<&[Vec2]> {
        self.warm.as_deref()
    }

    /// Reference velocities over the horizon for the current state.
    pub fn reference(&self, ego: &AgentState, goal: &Vec2) -> Vec<Vec2> {
        let cfg = &self.config;
        let n = cfg.mpc.horizon;
        let here = reference_velocity(&ego.position, goal, cfg.kp, cfg.mpc.u_max);
        match cfg.reference_mode {
            ReferenceMode::Constant => vec![here; n],
            ReferenceMode::Nominal => {
                let mut out = Vec::with_capacity(n);
                let mut p = ego.position;
                for k in 0..n {
                    let r = reference_velocity(&p, goal, cfg.kp, cfg.mpc.u_max);
                    out.push(r);
                    let u = self.warm.as_ref().map_or(r, |w| w[k]);
                    p += u * cfg.mpc.dt;
                }
                out
            }
        }
    }

    /// One control step: build the reference, assemble, solve and return
    /// the first control together with the full solution.
    pub fn step(
        &mut self,
        ego: &AgentState,
        pedestrians: &[AgentState],
        trusts: &[f64],
        goal: &Vec2,
    ) -> Result<(Vec2, MpcSolution), MpcError> {
        let reference = self.reference(ego, goal);
        let problem = MpcProblem::assemble(
            *ego,
            pedestrians.to_vec(),
            trusts,
            reference,
            self.config.mpc,
            self.config.cbf,
        )?
        .with_terminal_target(*goal);
        let solution = solve(&problem, self.warm.as_deref());
        self.warm = match solution.status {
            SolveStatus::InfeasibleFallback => None,
            _ => {
                let mut shifted = solution.controls[1..].to_vec();
                shifted.push(*solution.controls.last().unwrap());
                Some(shifted)
            }
        };
        Ok((solution.controls[0], solution))
    }
}
