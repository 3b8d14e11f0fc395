//! Dense sequential quadratic programming for small inequality-constrained
//! problems.
//!
//! Solves `min f(x) s.t. g(x) >= 0` with a line search on the l1 exact
//! penalty. Each iteration solves a strictly convex QP built from the
//! Lagrangian Hessian (eigenvalues floored to keep it positive definite) and
//! the linearised constraints. When the linearisation is inconsistent the QP
//! is relaxed with a single penalised slack.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// A smooth problem with inequality constraints `g(x) >= 0`.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn constraints(&self, x: &[f64]) -> DVector<f64>;
    /// Row `i` holds the gradient of constraint `i`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Hessian of `f(x) - sum_i multipliers[i] * g_i(x)`.
    fn lagrangian_hessian(&self, x: &[f64], multipliers: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpSettings {
    /// Constraint violation accepted at a solution.
    pub feasibility_tol: f64,
    /// Infinity-norm of the QP step below which the iterate is stationary.
    pub step_tol: f64,
    pub max_iters: usize,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            step_tol: 1e-9,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqpStatus {
    /// KKT point within tolerances.
    Converged,
    /// Stopped early at a feasible point.
    Feasible,
    /// No feasible point found.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SqpOutcome {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub status: SqpStatus,
}

const EIG_FLOOR: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;
const MIN_ALPHA: f64 = 1e-10;
const ELASTIC_WEIGHT: f64 = 1e4;

fn max_violation(g: &DVector<f64>) -> f64 {
    g.iter().fold(0.0f64, |m, &v| m.max(-v))
}

fn l1_violation(g: &DVector<f64>) -> f64 {
    g.iter().map(|&v| (-v).max(0.0)).sum()
}

/// Symmetrise and lift every eigenvalue to at least `floor * max(1, |λ|max)`.
fn make_positive_definite(h: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let floor = EIG_FLOOR * scale;
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return sym;
    }
    let lifted = eig.eigenvalues.map(|v| v.max(floor));
    &eig.eigenvectors * DMatrix::from_diagonal(&lifted) * eig.eigenvectors.transpose()
}

struct QpStep {
    d: DVector<f64>,
    multipliers: Vec<f64>,
    /// Slack needed to make the linearisation consistent; zero for a regular QP.
    slack: f64,
}

/// `min 0.5 d'Hd + c'd  s.t.  J d + g >= 0`.
fn solve_qp(h: &DMatrix<f64>, c: &DVector<f64>, jac: &DMatrix<f64>, g: &DVector<f64>) -> Option<QpStep> {
    let n = c.len();
    let m = g.len();
    let mut q: Vec<f64> = h.transpose().iter().copied().collect();
    // quadprog wants A d <= b in row-major order: A = -J, b = g.
    let mut a = Vec::with_capacity(n * m);
    for i in 0..m {
        a.extend(jac.row(i).iter().map(|v| -v));
    }
    let b: Vec<f64> = g.iter().copied().collect();
    let sol = quadprog::solve_qp(&mut q, c.as_slice(), &a, &b, 0, false).ok()?;
    if sol.sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(QpStep {
        d: DVector::from_vec(sol.sol),
        multipliers: sol.lagr,
        slack: 0.0,
    })
}

/// Relaxed subproblem with one shared slack `s >= 0` on every constraint.
fn solve_elastic_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    jac: &DMatrix<f64>,
    g: &DVector<f64>,
    weight: f64,
) -> Option<QpStep> {
    let n = c.len();
    let m = g.len();
    let mut he = DMatrix::zeros(n + 1, n + 1);
    he.view_mut((0, 0), (n, n)).copy_from(h);
    he[(n, n)] = 1.0;
    let mut ce = DVector::zeros(n + 1);
    ce.rows_mut(0, n).copy_from(c);
    ce[n] = weight;

    let mut je = DMatrix::zeros(m + 1, n + 1);
    je.view_mut((0, 0), (m, n)).copy_from(jac);
    for i in 0..m {
        je[(i, n)] = 1.0;
    }
    je[(m, n)] = 1.0;
    let mut ge = DVector::zeros(m + 1);
    ge.rows_mut(0, m).copy_from(g);

    let step = solve_qp(&he, &ce, &je, &ge)?;
    let slack = step.d[n].max(0.0);
    let mut multipliers = step.multipliers;
    multipliers.truncate(m);
    Some(QpStep {
        d: step.d.rows(0, n).into_owned(),
        multipliers,
        slack,
    })
}

/// Run SQP from `x0`. Deterministic for identical inputs.
pub fn minimize<P: NlpProblem>(problem: &P, x0: &[f64], settings: &SqpSettings) -> SqpOutcome {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    assert_eq!(x0.len(), n, "initial point has wrong dimension");

    let mut x = DVector::from_column_slice(x0);
    let mut lambda = vec![0.0; m];
    let mut penalty = 1.0f64;
    let mut f = problem.objective(x.as_slice());
    let mut g = problem.constraints(x.as_slice());
    let mut status = None;
    let mut iterations = 0;

    for it in 0..settings.max_iters {
        iterations = it + 1;
        let grad = problem.gradient(x.as_slice());
        let jac = problem.jacobian(x.as_slice());
        let hess = make_positive_definite(problem.lagrangian_hessian(x.as_slice(), &lambda));

        let step = match solve_qp(&hess, &grad, &jac, &g) {
            Some(s) => s,
            None => {
                let weight = ELASTIC_WEIGHT * penalty.max(1.0);
                match solve_elastic_qp(&hess, &grad, &jac, &g, weight) {
                    Some(s) => s,
                    None => {
                        status = Some(SqpStatus::Infeasible);
                        break;
                    }
                }
            }
        };

        let viol = max_violation(&g);
        let step_norm = step.d.amax();
        if step_norm <= settings.step_tol * (1.0 + x.amax()) {
            lambda = step.multipliers;
            status = Some(if viol <= settings.feasibility_tol {
                SqpStatus::Converged
            } else {
                SqpStatus::Infeasible
            });
            break;
        }

        let lambda_max = step.multipliers.iter().fold(0.0f64, |a, &b| a.max(b));
        penalty = penalty.max(1.1 * lambda_max + 1e-3);
        if step.slack > 0.0 {
            penalty = penalty.max(ELASTIC_WEIGHT);
        }

        let merit = |f: f64, g: &DVector<f64>| f + penalty * l1_violation(g);
        let merit0 = merit(f, &g);
        let descent = grad.dot(&step.d) - penalty * l1_violation(&g);

        let mut alpha = 1.0;
        let accepted = loop {
            let trial = &x + &step.d * alpha;
            let ft = problem.objective(trial.as_slice());
            let gt = problem.constraints(trial.as_slice());
            let mt = merit(ft, &gt);
            let bound = merit0 + ARMIJO * alpha * descent.min(0.0);
            // Accept ties at the rounding level so tiny final steps are not rejected.
            if mt <= bound || mt <= merit0 + 1e-14 * merit0.abs().max(1.0) && descent >= 0.0 {
                break Some((trial, ft, gt));
            }
            alpha *= 0.5;
            if alpha < MIN_ALPHA {
                break None;
            }
        };

        match accepted {
            Some((xt, ft, gt)) => {
                x = xt;
                f = ft;
                g = gt;
                lambda = step.multipliers;
            }
            None => {
                status = Some(if viol <= settings.feasibility_tol {
                    SqpStatus::Feasible
                } else {
                    SqpStatus::Infeasible
                });
                break;
            }
        }
    }

    let viol = max_violation(&g);
    let status = status.unwrap_or(if viol <= settings.feasibility_tol {
        SqpStatus::Feasible
    } else {
        SqpStatus::Infeasible
    });
    SqpOutcome {
        x: x.iter().copied().collect(),
        multipliers: lambda,
        objective: f,
        max_violation: viol,
        iterations,
        status,
    }
}
