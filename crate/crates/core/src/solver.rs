//! Inequality-constrained maximization via the augmented Lagrange
//! multiplier method.
//!
//! The caller supplies the *negative* objective (so the solver minimizes)
//! together with constraint functions h_k that are feasible when h_k ≤ 0.
//! Each outer iteration minimizes
//!
//! L_ρ(θ, λ) = f(θ) + Σ λ_k h_k(θ) + Σ (ρ/2) max(0, h_k(θ))²
//!
//! with a limited-memory quasi-Newton inner solver, then updates
//! λ_k ← max(0, λ_k + 2ρ h_k(θ*)) and ρ ← cρ. Multipliers are clamped at
//! zero: an unclamped update drives λ negative whenever a constraint is
//! inactive, which the max(0,·)² penalty never compensates.

use crate::{Error, Result};

/// Feasibility tolerance required at a converged exit.
const FEASIBILITY_TOL: f64 = 1e-6;

/// A smooth objective with inequality constraints h_k(θ) ≤ 0.
pub trait Problem {
    fn dim(&self) -> usize;
    /// Value being minimized (for likelihood problems, the negative log-likelihood).
    fn objective(&self, theta: &[f64]) -> Result<f64>;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
    /// Constraint values h_k(θ); feasible when every entry is ≤ 0.
    fn constraints(&self, theta: &[f64]) -> Vec<f64>;
    /// Gradients of each constraint, one vector per constraint.
    fn constraint_gradients(&self, theta: &[f64]) -> Vec<Vec<f64>>;
}

/// Outer/inner iteration controls.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Initial penalty parameter ρ⁽⁰⁾ > 0.
    pub rho0: f64,
    /// Penalty increment factor c > 1.
    pub c: f64,
    /// Outer stationarity tolerance on ‖∇_θ L_ρ‖.
    pub epsilon: f64,
    pub max_outer: usize,
    /// Inner gradient-norm tolerance.
    pub inner_tol: f64,
    pub inner_max: usize,
    /// Jittered restarts used by fitting layers built on this solver.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho0: 1.0,
            c: 10.0,
            epsilon: 1e-6,
            max_outer: 20,
            inner_tol: 1e-8,
            inner_max: 500,
            restarts: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0) || !(self.c > 1.0) || !(self.epsilon > 0.0) {
            return Err(Error::domain(format!(
                "solver config requires rho0 > 0, c > 1, epsilon > 0; got rho0={}, c={}, epsilon={}",
                self.rho0, self.c, self.epsilon
            )));
        }
        Ok(())
    }
}

/// One outer-iteration snapshot of the solve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Raw objective f(θ) (NLL for likelihood problems).
    pub objective: f64,
    /// ‖∇_θ L_ρ‖ at the inner minimizer, before the multiplier update.
    pub grad_norm: f64,
    pub max_constraint: f64,
    pub rho: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxOuterReached,
    /// The line search could not make progress; best iterate returned.
    InnerStalled,
}

/// Result of a solve: final iterate, multipliers and per-iteration trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub max_constraint: f64,
    pub status: SolveStatus,
    pub trace: Vec<TraceRecord>,
    /// Echoed seed; the solve itself is deterministic, the seed only tags
    /// diagnostics so replicated runs can be told apart.
    pub seed: u64,
}

/// L_ρ(θ, λ) = f(θ) + Σ λ_k h_k + Σ (ρ/2) max(0, h_k)².
pub fn augmented_objective(
    problem: &dyn Problem,
    theta: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Result<f64> {
    let f = problem.objective(theta)?;
    let hs = problem.constraints(theta);
    let mut val = f;
    for (h, l) in hs.iter().zip(lambda) {
        val += l * h + 0.5 * rho * h.max(0.0) * h.max(0.0);
    }
    Ok(val)
}

/// ∇_θ L_ρ = ∇f + Σ (λ_k + ρ max(0, h_k)) ∇h_k.
pub fn augmented_gradient(
    problem: &dyn Problem,
    theta: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let mut g = problem.gradient(theta)?;
    let hs = problem.constraints(theta);
    let hgs = problem.constraint_gradients(theta);
    for ((h, l), hg) in hs.iter().zip(lambda).zip(&hgs) {
        let w = l + rho * h.max(0.0);
        if w != 0.0 {
            for (gi, hgi) in g.iter_mut().zip(hg) {
                *gi += w * hgi;
            }
        }
    }
    Ok(g)
}

/// Inner-loop objective: the shifted inequality penalty
/// f + Σ (ρ/2)[max(0, h_k + λ_k/ρ)² − (λ_k/ρ)²].
///
/// This agrees with [`augmented_objective`] wherever λ_k + ρh_k ≥ 0 (up to
/// the θ-independent constant) but switches the multiplier term off deep in
/// the feasible region. The plain λ·h term rewards constraint slack there,
/// which lets overshooting multipliers drag the inner minimizer past the
/// optimum; the shifted form is the standard inequality treatment.
fn shifted_objective(
    problem: &dyn Problem,
    theta: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Result<f64> {
    let f = problem.objective(theta)?;
    let hs = problem.constraints(theta);
    let mut val = f;
    for (h, l) in hs.iter().zip(lambda) {
        let shift = l / rho;
        let active = (h + shift).max(0.0);
        val += 0.5 * rho * (active * active - shift * shift);
    }
    Ok(val)
}

/// Gradient of [`shifted_objective`]: ∇f + Σ max(0, λ_k + ρh_k) ∇h_k.
fn shifted_gradient(
    problem: &dyn Problem,
    theta: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let mut g = problem.gradient(theta)?;
    let hs = problem.constraints(theta);
    let hgs = problem.constraint_gradients(theta);
    for ((h, l), hg) in hs.iter().zip(lambda).zip(&hgs) {
        let w = (l + rho * h).max(0.0);
        if w != 0.0 {
            for (gi, hgi) in g.iter_mut().zip(hg) {
                *gi += w * hgi;
            }
        }
    }
    Ok(g)
}

/// Run the augmented Lagrange multiplier loop from a strictly feasible start.
pub fn solve(
    problem: &dyn Problem,
    theta0: &[f64],
    config: &SolverConfig,
    seed: u64,
) -> Result<Solution> {
    config.validate()?;
    if theta0.len() != problem.dim() {
        return Err(Error::Dimension(format!(
            "initial point has length {}, problem dimension is {}",
            theta0.len(),
            problem.dim()
        )));
    }
    let n_con = problem.constraints(theta0).len();
    let mut lambda = vec![0.0; n_con];
    let mut rho = config.rho0;
    let mut theta = theta0.to_vec();
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxOuterReached;
    let mut grad_norm = f64::INFINITY;
    let mut max_h = f64::INFINITY;

    for t in 0..config.max_outer {
        let inner = lbfgs_minimize(
            |x| shifted_objective(problem, x, &lambda, rho),
            |x| shifted_gradient(problem, x, &lambda, rho),
            &theta,
            config.inner_tol,
            config.inner_max,
        )?;
        theta = inner.x;
        grad_norm = inner.grad_norm;
        let hs = problem.constraints(&theta);
        max_h = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Complementary slackness: λ_k |h_k| must die out before the
        // multiplier estimates are trustworthy.
        let comp = hs
            .iter()
            .zip(&lambda)
            .map(|(h, l)| l * h.abs())
            .fold(0.0_f64, f64::max);
        trace.push(TraceRecord {
            iteration: t,
            objective: problem.objective(&theta)?,
            grad_norm,
            max_constraint: max_h,
            rho,
            lambda: lambda.clone(),
        });

        // Stationarity is tested at the pre-update iterate.
        if grad_norm <= config.epsilon && max_h <= FEASIBILITY_TOL && comp <= FEASIBILITY_TOL {
            status = SolveStatus::Converged;
            break;
        }
        if !inner.made_progress && grad_norm > config.epsilon {
            status = SolveStatus::InnerStalled;
            break;
        }
        for (l, h) in lambda.iter_mut().zip(&hs) {
            *l = (*l + 2.0 * rho * h).max(0.0);
        }
        rho *= config.c;
    }

    Ok(Solution {
        objective: problem.objective(&theta)?,
        theta,
        lambda,
        grad_norm,
        max_constraint: max_h,
        status,
        trace,
        seed,
    })
}

struct InnerResult {
    x: Vec<f64>,
    grad_norm: f64,
    /// False when the first line search already failed.
    made_progress: bool,
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

/// Limited-memory BFGS with Armijo backtracking. Objective failures
/// (non-finite regions) are treated as +∞ by the line search.
fn lbfgs_minimize(
    f: impl Fn(&[f64]) -> Result<f64>,
    g: impl Fn(&[f64]) -> Result<Vec<f64>>,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerResult> {
    let _n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::NonFinite("objective not finite at the starting point".into()));
    }
    let mut grad = g(&x)?;
    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut rho_list: Vec<f64> = Vec::new();
    let mut made_progress = false;

    for _iter in 0..max_iter {
        let gnorm = norm(&grad);
        if gnorm <= tol {
            return Ok(InnerResult { x, grad_norm: gnorm, made_progress: true });
        }

        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let k = s_list.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho_list[i] * dot(&s_list[i], &q);
            axpy(&mut q, -alpha[i], &y_list[i]);
        }
        let gamma = if k > 0 {
            let sy = dot(&s_list[k - 1], &y_list[k - 1]);
            let yy = dot(&y_list[k - 1], &y_list[k - 1]);
            (sy / yy).max(1e-12)
        } else {
            1.0 / gnorm.max(1.0)
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for i in 0..k {
            let beta = rho_list[i] * dot(&y_list[i], &q);
            axpy(&mut q, alpha[i] - beta, &s_list[i]);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // Curvature information went stale; restart from steepest descent.
            s_list.clear();
            y_list.clear();
            rho_list.clear();
            dir = grad.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&grad, &dir);
        }

        // Backtracking line search with sufficient decrease.
        let mut step = 1.0;
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial: Vec<f64> =
                x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            match f(&trial) {
                Ok(ft) if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope => {
                    accepted = Some((trial, ft));
                    break;
                }
                _ => step *= BACKTRACK,
            }
        }
        let Some((x_new, f_new)) = accepted else {
            return Ok(InnerResult { x, grad_norm: gnorm, made_progress });
        };
        made_progress = true;

        let grad_new = g(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-10 * norm(&s) * norm(&yv) {
            if s_list.len() == LBFGS_MEMORY {
                s_list.remove(0);
                y_list.remove(0);
                rho_list.remove(0);
            }
            rho_list.push(1.0 / sy);
            s_list.push(s);
            y_list.push(yv);
        }
        x = x_new;
        fx = f_new;
        grad = grad_new;
    }
    let gnorm = norm(&grad);
    Ok(InnerResult { x, grad_norm: gnorm, made_progress })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
