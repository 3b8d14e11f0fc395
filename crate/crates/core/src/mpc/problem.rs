use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{predict_pedestrians, MpcError};
use crate::cbf::{barrier, discrete_cbf_residual, gamma_from_trust, AgentState, CbfParams, Vec2};
use crate::sqp::NlpProblem;

/// Axis-aligned box in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds2 {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds2 {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

impl Default for Bounds2 {
    /// The 50 x 50 grid of the 2D experiments.
    fn default() -> Self {
        Self {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(50.0, 50.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcParams {
    /// Step time in seconds.
    pub dt: f64,
    pub horizon: usize,
    /// Bound on each control component, `||u||_inf <= u_max`.
    pub u_max: f64,
    pub state_bounds: Bounds2,
    pub solver_tol: f64,
    pub max_iters: usize,
    /// Weight of `||x_N - goal||^2` at the end of the horizon. Zero disables
    /// the terminal cost.
    pub terminal_weight: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 7,
            u_max: 5.0,
            state_bounds: Bounds2::default(),
            solver_tol: 1e-6,
            max_iters: 200,
            terminal_weight: 0.0,
        }
    }
}

impl MpcParams {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |msg: String| Err(MpcError::InvalidParams(msg));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.horizon < 1 {
            return bad("horizon must be ≥ 1".into());
        }
        if !(self.u_max > 0.0) {
            return bad(format!("u_max must be > 0, got {}", self.u_max));
        }
        if !(self.solver_tol > 0.0) {
            return bad(format!("solver_tol must be > 0, got {}", self.solver_tol));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be ≥ 1".into());
        }
        if !(self.terminal_weight >= 0.0) {
            return bad(format!("terminal_weight must be ≥ 0, got {}", self.terminal_weight));
        }
        let b = &self.state_bounds;
        if !(b.min.x < b.max.x && b.min.y < b.max.y) {
            return bad("state bounds must have min < max on both axes".into());
        }
        Ok(())
    }
}

/// Finite-horizon problem over the control sequence only.
///
/// Ego positions are eliminated by forward substitution of the single
/// integrator and pedestrian positions are rolled out at constant velocity,
/// so every constraint is an explicit function of the controls. Constraint
/// layout (all of the form `g(u) >= 0`):
///
/// 1. `N_p * N_h` barrier decay constraints, pedestrian-major;
/// 2. `4 * N_h` control bounds;
/// 3. `4 * N_h` bounds on the predicted positions `x(t+1) .. x(t+N_h)`.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    ego: AgentState,
    pedestrians: Vec<AgentState>,
    gammas: Vec<f64>,
    reference: Vec<Vec2>,
    params: MpcParams,
    cbf: CbfParams,
    terminal_target: Option<Vec2>,
    /// `ped_rollout[j][k]` is pedestrian `j` at `t + k`, `k = 0..=N_h`.
    ped_rollout: Vec<Vec<Vec2>>,
}

impl MpcProblem {
    /// Build the problem from per-pedestrian trust values.
    pub fn assemble(
        ego: AgentState,
        pedestrians: Vec<AgentState>,
        trusts: &[f64],
        reference: Vec<Vec2>,
        params: MpcParams,
        cbf: CbfParams,
    ) -> Result<Self, MpcError> {
        if trusts.len() != pedestrians.len() {
            return Err(MpcError::Shape(format!(
                "{} trust values for {} pedestrians",
                trusts.len(),
                pedestrians.len()
            )));
        }
        let gammas = trusts
            .iter()
            .map(|&t| gamma_from_trust(t, &cbf))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_gammas(ego, pedestrians, gammas, reference, params, cbf)
    }

    /// Build the problem from decay rates directly.
    pub fn with_gammas(
        ego: AgentState,
        pedestrians: Vec<AgentState>,
        gammas: Vec<f64>,
        reference: Vec<Vec2>,
        params: MpcParams,
        cbf: CbfParams,
    ) -> Result<Self, MpcError> {
        params.validate()?;
        if gammas.len() != pedestrians.len() {
            return Err(MpcError::Shape(format!(
                "{} gamma values for {} pedestrians",
                gammas.len(),
                pedestrians.len()
            )));
        }
        if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(MpcError::InvalidParams(format!("gamma {g} is outside [0, 1]")));
        }
        if reference.len() != params.horizon {
            return Err(MpcError::Shape(format!(
                "reference has {} entries, horizon is {}",
                reference.len(),
                params.horizon
            )));
        }
        if !ego.is_finite() || pedestrians.iter().any(|p| !p.is_finite()) {
            return Err(MpcError::InvalidParams("non-finite agent state".into()));
        }
        let ped_rollout = (0..=params.horizon)
            .map(|k| predict_pedestrians(&pedestrians, params.dt, k))
            .collect::<Vec<_>>();
        // Transpose to pedestrian-major.
        let ped_rollout = (0..pedestrians.len())
            .map(|j| ped_rollout.iter().map(|step| step[j].position).collect())
            .collect();
        Ok(Self {
            ego,
            pedestrians,
            gammas,
            reference,
            params,
            cbf,
            terminal_target: None,
            ped_rollout,
        })
    }

    /// Target of the terminal cost; ignored while `terminal_weight` is zero.
    pub fn with_terminal_target(mut self, target: Vec2) -> Self {
        self.terminal_target = Some(target);
        self
    }

    pub fn ego(&self) -> &AgentState {
        &self.ego
    }

    pub fn pedestrians(&self) -> &[AgentState] {
        &self.pedestrians
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn reference(&self) -> &[Vec2] {
        &self.reference
    }

    pub fn params(&self) -> &MpcParams {
        &self.params
    }

    pub fn cbf(&self) -> &CbfParams {
        &self.cbf
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// Predicted pedestrian `j` position at `t + k`.
    pub fn pedestrian_at(&self, j: usize, k: usize) -> Vec2 {
        self.ped_rollout[j][k]
    }

    pub fn cbf_constraint_count(&self) -> usize {
        self.pedestrians.len() * self.params.horizon
    }

    fn control_bound_offset(&self) -> usize {
        self.cbf_constraint_count()
    }

    fn state_bound_offset(&self) -> usize {
        self.cbf_constraint_count() + 4 * self.params.horizon
    }

    pub fn controls_from_flat(x: &[f64]) -> Vec<Vec2> {
        x.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
    }

    pub fn flatten(controls: &[Vec2]) -> Vec<f64> {
        controls.iter().flat_map(|u| [u.x, u.y]).collect()
    }

    /// Ego positions `x(t) .. x(t+N_h)` under the flattened controls.
    pub fn rollout(&self, x: &[f64]) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.params.horizon + 1);
        let mut p = self.ego.position;
        out.push(p);
        for u in x.chunks_exact(2) {
            p += Vec2::new(u[0], u[1]) * self.params.dt;
            out.push(p);
        }
        out
    }

    /// Barrier decay residuals, pedestrian-major.
    pub fn cbf_residuals(&self, x: &[f64]) -> Vec<f64> {
        let ego = self.rollout(x);
        let r = self.cbf.radius();
        let mut out = Vec::with_capacity(self.cbf_constraint_count());
        for (j, gamma) in self.gammas.iter().enumerate() {
            let peds = &self.ped_rollout[j];
            for k in 0..self.params.horizon {
                let h_now = barrier(&ego[k], &peds[k], r);
                let h_next = barrier(&ego[k + 1], &peds[k + 1], r);
                out.push(discrete_cbf_residual(h_next, h_now, *gamma));
            }
        }
        out
    }

    fn terminal(&self) -> Option<(f64, Vec2)> {
        match self.terminal_target {
            Some(t) if self.params.terminal_weight > 0.0 => Some((self.params.terminal_weight, t)),
            _ => None,
        }
    }
}

impl NlpProblem for MpcProblem {
    fn num_vars(&self) -> usize {
        2 * self.params.horizon
    }

    fn num_constraints(&self) -> usize {
        self.cbf_constraint_count() + 8 * self.params.horizon
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut cost: f64 = x
            .chunks_exact(2)
            .zip(&self.reference)
            .map(|(u, r)| super::stage_cost(&Vec2::new(u[0], u[1]), r))
            .sum();
        if let Some((w, target)) = self.terminal() {
            let end = *self.rollout(x).last().unwrap();
            cost += w * (end - target).norm_squared();
        }
        cost
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for (k, r) in self.reference.iter().enumerate() {
            g[2 * k] = 2.0 * (x[2 * k] - r.x);
            g[2 * k + 1] = 2.0 * (x[2 * k + 1] - r.y);
        }
        if let Some((w, target)) = self.terminal() {
            let end = *self.rollout(x).last().unwrap();
            let d = (end - target) * (2.0 * w * self.params.dt);
            for k in 0..self.params.horizon {
                g[2 * k] += d.x;
                g[2 * k + 1] += d.y;
            }
        }
        g
    }

    fn constraints(&self, x: &[f64]) -> DVector<f64> {
        let n = self.params.horizon;
        let mut g = DVector::zeros(self.num_constraints());
        for (i, v) in self.cbf_residuals(x).into_iter().enumerate() {
            g[i] = v;
        }
        let off = self.control_bound_offset();
        let u_max = self.params.u_max;
        for (i, v) in x.iter().enumerate() {
            g[off + 2 * i] = u_max - v;
            g[off + 2 * i + 1] = v + u_max;
        }
        let off = self.state_bound_offset();
        let b = &self.params.state_bounds;
        for (k, p) in self.rollout(x).iter().skip(1).enumerate() {
            for a in 0..2 {
                g[off + 4 * k + 2 * a] = p[a] - b.min[a];
                g[off + 4 * k + 2 * a + 1] = b.max[a] - p[a];
            }
        }
        debug_assert_eq!(off + 4 * n, g.len());
        g
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.params.horizon;
        let dt = self.params.dt;
        let mut jac = DMatrix::zeros(self.num_constraints(), 2 * n);
        let ego = self.rollout(x);
        for (j, gamma) in self.gammas.iter().enumerate() {
            let peds = &self.ped_rollout[j];
            for k in 0..n {
                let row = j * n + k;
                // d h(x_{k+1}) / d u_i = 2 dt (x_{k+1} - p_{k+1}) for i <= k,
                // d h(x_k) / d u_i = 2 dt (x_k - p_k) for i < k.
                let next = (ego[k + 1] - peds[k + 1]) * (2.0 * dt);
                let now = (ego[k] - peds[k]) * (2.0 * dt * (1.0 - gamma));
                for i in 0..=k {
                    let mut d = next;
                    if i < k {
                        d -= now;
                    }
                    jac[(row, 2 * i)] = d.x;
                    jac[(row, 2 * i + 1)] = d.y;
                }
            }
        }
        let off = self.control_bound_offset();
        for i in 0..2 * n {
            jac[(off + 2 * i, i)] = -1.0;
            jac[(off + 2 * i + 1, i)] = 1.0;
        }
        let off = self.state_bound_offset();
        for k in 0..n {
            // Position k+1 depends on controls 0..=k.
            for i in 0..=k {
                for a in 0..2 {
                    jac[(off + 4 * k + 2 * a, 2 * i + a)] = dt;
                    jac[(off + 4 * k + 2 * a + 1, 2 * i + a)] = -dt;
                }
            }
        }
        jac
    }

    fn lagrangian_hessian(&self, _x: &[f64], multipliers: &[f64]) -> DMatrix<f64> {
        let n = self.params.horizon;
        let dt2 = self.params.dt * self.params.dt;
        // Hessian of ||x_m - p||^2 w.r.t. the controls is 2 dt^2 on every
        // (i, l) block with i, l < m, times the 2x2 identity. Accumulate the
        // scalar block weights first.
        let mut blocks = DMatrix::<f64>::zeros(n, n);
        let mut add_prefix = |m: usize, w: f64| {
            for i in 0..m {
                for l in 0..m {
                    blocks[(i, l)] += w;
                }
            }
        };
        if let Some((w, _)) = self.terminal() {
            add_prefix(n, 2.0 * w * dt2);
        }
        for (j, gamma) in self.gammas.iter().enumerate() {
            for k in 0..n {
                let mu = multipliers.get(j * n + k).copied().unwrap_or(0.0);
                if mu == 0.0 {
                    continue;
                }
                add_prefix(k + 1, -mu * 2.0 * dt2);
                add_prefix(k, mu * (1.0 - gamma) * 2.0 * dt2);
            }
        }
        let mut h = DMatrix::identity(2 * n, 2 * n) * 2.0;
        for i in 0..n {
            for l in 0..n {
                let w = blocks[(i, l)];
                h[(2 * i, 2 * l)] += w;
                h[(2 * i + 1, 2 * l + 1)] += w;
            }
        }
        h
    }
}
