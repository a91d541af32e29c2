//! Constrained maximum likelihood for the composite GBII regression.
//!
//! The program max ℓ(β, α) s.t. ε₁ − (α₁+α₅) ≤ 0, ε₂ − (α₂+α₆) ≤ 0 is
//! handed to the augmented Lagrangian solver. The indicator yᵢ ≤ u(xᵢ; β)
//! makes ℓ only piecewise smooth, so each solve runs with component
//! assignments frozen at the incoming iterate; assignments are then
//! recomputed and the solve repeats until they are stable across two
//! consecutive rounds.

use super::*;
use crate::solver::{self, Problem, SolveStatus, SolverConfig, TraceRecord};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fitting controls; `solver.restarts` jittered restarts keep the best NLL.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub solver: SolverConfig,
    /// Constraint slacks: α₁+α₅ ≥ eps1 and α₂+α₆ ≥ eps2.
    pub eps1: f64,
    pub eps2: f64,
    pub seed: u64,
    pub max_assignment_rounds: usize,
    pub compute_covariance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            solver: SolverConfig::default(),
            eps1: 1e-5,
            eps2: 1e-5,
            seed: 0,
            max_assignment_rounds: 30,
            compute_covariance: true,
        }
    }
}

/// Outcome summary of a fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitReport {
    pub nll: f64,
    pub converged: bool,
    pub assignments_stable: bool,
    pub grad_norm: f64,
    pub max_constraint: f64,
    pub assignment_rounds: usize,
    pub n_head: usize,
    pub restart_used: usize,
    pub trace: Vec<TraceRecord>,
}

struct FrozenProblem<'a> {
    data: &'a RegressionData<'a>,
    map: &'a ParamMap,
    assign: &'a [bool],
    eps1: f64,
    eps2: f64,
}

impl FrozenProblem<'_> {
    /// Treat parameter regions where the composite degenerates (mode
    /// constraints violated, overflowed likelihood) as infinitely bad
    /// rather than hard errors, so the line search backs off.
    fn nll(&self, theta: &[f64]) -> Result<f64> {
        let (beta, alpha) = self.map.expand(theta);
        let sc = match ShapeConstants::new(&alpha) {
            Ok(sc) => sc,
            Err(Error::Constraint(_)) | Err(Error::NonFinite(_)) | Err(Error::Domain(_)) => {
                return Ok(f64::INFINITY)
            }
            Err(e) => return Err(e),
        };
        match loglik_frozen(self.data, &beta, &alpha, &sc, self.assign) {
            Ok(ll) => Ok(-ll),
            Err(Error::NonFinite(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

impl Problem for FrozenProblem<'_> {
    fn dim(&self) -> usize {
        self.map.n_free
    }

    fn objective(&self, theta: &[f64]) -> Result<f64> {
        self.nll(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let (beta, alpha) = self.map.expand(theta);
        let sc = ShapeConstants::new(&alpha)?;
        let (d_beta, d_alpha) = grad_loglik_frozen(self.data, &beta, &alpha, &sc, self.assign)?;
        Ok(self.map.contract(&d_beta, &d_alpha).into_iter().map(|g| -g).collect())
    }

    fn constraints(&self, theta: &[f64]) -> Vec<f64> {
        let (_, alpha) = self.map.expand(theta);
        vec![
            self.eps1 - (alpha[ALPHA_P1] + alpha[ALPHA_NU1]),
            self.eps2 - (alpha[ALPHA_P2] + alpha[ALPHA_NU2]),
        ]
    }

    fn constraint_gradients(&self, _theta: &[f64]) -> Vec<Vec<f64>> {
        let mut d1 = [0.0; 6];
        d1[ALPHA_P1] = -1.0;
        d1[ALPHA_NU1] = -1.0;
        let mut d2 = [0.0; 6];
        d2[ALPHA_P2] = -1.0;
        d2[ALPHA_NU2] = -1.0;
        let zero = vec![0.0; self.map.n_beta];
        vec![self.map.contract(&zero, &d1), self.map.contract(&zero, &d2)]
    }
}

/// Fit a composite GBII regression by constrained maximum likelihood.
pub fn fit(
    data: &RegressionData,
    family: CompositeFamily,
    config: &FitConfig,
) -> Result<(RegressionModel, FitReport)> {
    fit_with_init(data, family, config, None)
}

/// [`fit`] with an explicit warm start (used by bootstrap refits).
pub fn fit_with_init(
    data: &RegressionData,
    family: CompositeFamily,
    config: &FitConfig,
    init: Option<(&[f64], &[f64; 6])>,
) -> Result<(RegressionModel, FitReport)> {
    let n = data.n();
    let k = data.x.ncols() - 1;
    if n <= k + 7 {
        return Err(Error::Data(format!(
            "need more observations than parameters: n = {n} but k+7 = {}",
            k + 7
        )));
    }
    check_full_rank(data.x)?;

    let map = ParamMap::new(family, k + 1);
    let base_theta = match init {
        Some((beta, alpha)) => map.pack(beta, alpha),
        None => {
            let beta0 = ols_log_response(data)?;
            let alpha0 = [
                2.0_f64.ln(),
                2.0_f64.ln(),
                1.5_f64.ln(),
                1.5_f64.ln(),
                1.2_f64.ln(),
                1.2_f64.ln(),
            ];
            map.pack(&beta0, &alpha0)
        }
    };

    let mut best: Option<(Vec<f64>, FitReport)> = None;
    for restart in 0..config.solver.restarts.max(1) {
        let mut theta = base_theta.clone();
        if restart > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
            for t in theta.iter_mut() {
                // Box-Muller keeps the dependency surface small here.
                let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                *t += 0.3 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
        }
        ensure_feasible(&map, &mut theta, config.eps1, config.eps2);

        match run_assignment_rounds(data, &map, theta, config, restart as u64) {
            Ok((theta_hat, report)) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        (report.converged && !b.converged)
                            || (report.converged == b.converged && report.nll < b.nll)
                    }
                };
                if better {
                    best = Some((theta_hat, report));
                }
            }
            Err(Error::NonFinite(_)) | Err(Error::Convergence(_)) => continue,
            Err(e) => return Err(e),
        }
    }

    let (theta_hat, mut report) =
        best.ok_or_else(|| Error::Convergence("every restart failed to produce a fit".into()))?;
    let (beta, alpha) = map.expand(&theta_hat);
    let mut model = RegressionModel {
        family,
        beta,
        covariate_names: data.x.names().to_vec(),
        alpha,
        covariance: None,
    };
    if config.compute_covariance {
        if let Ok((_, cov)) = std_errors(&model, data) {
            model.covariance = Some(cov);
        }
    }
    report.restart_used = report.restart_used.min(config.solver.restarts);
    Ok((model, report))
}

fn run_assignment_rounds(
    data: &RegressionData,
    map: &ParamMap,
    mut theta: Vec<f64>,
    config: &FitConfig,
    restart: u64,
) -> Result<(Vec<f64>, FitReport)> {
    let (beta, alpha) = map.expand(&theta);
    let sc = ShapeConstants::new(&alpha)?;
    let mut assign = assignments(data, &beta, &sc);
    check_split(&assign)?;

    let mut rounds = 0;
    let mut stable = false;
    let mut last_solution = None;
    while rounds < config.max_assignment_rounds {
        let problem = FrozenProblem { data, map, assign: &assign, eps1: config.eps1, eps2: config.eps2 };
        let sol = solver::solve(&problem, &theta, &config.solver, config.seed ^ restart)?;
        theta = sol.theta.clone();
        rounds += 1;
        let (beta, alpha) = map.expand(&theta);
        let sc = ShapeConstants::new(&alpha)?;
        let new_assign = assignments(data, &beta, &sc);
        check_split(&new_assign)?;
        let flipped = new_assign != assign;
        assign = new_assign;
        last_solution = Some(sol);
        if !flipped {
            stable = true;
            break;
        }
    }
    let sol = last_solution.expect("at least one assignment round runs");
    let (beta, alpha) = map.expand(&theta);
    let nll = -loglik(data, &beta, &alpha)?;
    let report = FitReport {
        nll,
        converged: stable && sol.status == SolveStatus::Converged,
        assignments_stable: stable,
        grad_norm: sol.grad_norm,
        max_constraint: sol.max_constraint,
        assignment_rounds: rounds,
        n_head: assign.iter().filter(|h| **h).count(),
        restart_used: restart as usize,
        trace: sol.trace,
    };
    Ok((theta, report))
}

/// An emptied component means the spliced structure degenerated to a single
/// GBII (r → 0 or 1 pins the head shapes against the p·ν = 1 singularity);
/// the restart loop retries from a jittered start instead.
fn check_split(assign: &[bool]) -> Result<()> {
    let n_head = assign.iter().filter(|h| **h).count();
    if n_head == 0 || n_head == assign.len() {
        return Err(Error::Convergence(format!(
            "component assignment degenerated ({n_head} of {} in head)",
            assign.len()
        )));
    }
    Ok(())
}

/// Nudge the starting point until both mode constraints hold with margin
/// (p·ν ≥ ~2.2), adjusting whichever slot of the product is free.
fn ensure_feasible(map: &ParamMap, theta: &mut [f64], eps1: f64, eps2: f64) {
    for (p_idx, nu_idx, eps) in
        [(ALPHA_P1, ALPHA_NU1, eps1), (ALPHA_P2, ALPHA_NU2, eps2)]
    {
        for _ in 0..8 {
            let (_, alpha) = map.expand(theta);
            let sum = alpha[p_idx] + alpha[nu_idx];
            let target = eps + 0.8;
            if sum >= target {
                break;
            }
            let bump = target - sum;
            let slot = match (map.slots[p_idx], map.slots[nu_idx]) {
                (AlphaSlot::Free(j), _) => Some(j),
                (_, AlphaSlot::Free(j)) => Some(j),
                _ => None,
            };
            match slot {
                Some(j) => theta[j] += bump,
                None => break,
            }
        }
    }
}

fn check_full_rank(x: &DesignMatrix) -> Result<()> {
    let m = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x.row(i)[j]);
    let svd = m.svd(false, false);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-10 * max_sv).count();
    if rank < x.ncols() {
        return Err(Error::Singular(format!(
            "design matrix is rank deficient: rank {rank} < {} columns",
            x.ncols()
        )));
    }
    Ok(())
}

/// Ordinary least squares of log y on the design matrix, the starting β.
fn ols_log_response(data: &RegressionData) -> Result<Vec<f64>> {
    let n = data.n();
    let p = data.x.ncols();
    let x = DMatrix::from_fn(n, p, |i, j| data.x.row(i)[j]);
    let z = DVector::from_fn(n, |i, _| data.y[i].ln());
    let xtx = x.transpose() * &x;
    let xtz = x.transpose() * z;
    xtx.lu()
        .solve(&xtz)
        .map(|b| b.iter().copied().collect())
        .ok_or_else(|| Error::Singular("normal equations are singular".into()))
}

/// Standard errors from the observed information matrix.
///
/// The Hessian of the negative log-likelihood over the free parameters is
/// built from central differences of the analytic gradient, then inverted.
/// Natural-scale and implied-quantity errors follow by the delta method.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StdErrors {
    /// SE of each free parameter, in θ order (β first, then free α slots).
    pub theta: Vec<f64>,
    pub names: Vec<String>,
    /// SE per α slot: `None` marks a fixed slot (reported as "—").
    pub alpha: [Option<f64>; 6],
    /// Delta-method SE of the natural-scale shapes (p₁, p₂, τ₁, τ₂, ν₁, ν₂).
    pub natural_shapes: [Option<f64>; 6],
    /// Delta-method SE of μ₂ = exp(β₀) (intercept-only models).
    pub mu2: Option<f64>,
    /// Delta-method SE of the implied (μ₁, u, r) (intercept-only models).
    pub implied: Option<(f64, f64, f64)>,
    pub condition_number: f64,
}

pub fn std_errors(
    model: &RegressionModel,
    data: &RegressionData,
) -> Result<(StdErrors, CovarianceMatrix)> {
    let map = ParamMap::new(model.family, model.beta.len());
    let theta = map.pack(&model.beta, &model.alpha);
    let dim = map.n_free;

    let grad_at = |t: &[f64]| -> Result<Vec<f64>> {
        let (beta, alpha) = map.expand(t);
        let sc = ShapeConstants::new(&alpha)?;
        let assign = assignments(data, &beta, &sc);
        let (d_beta, d_alpha) = grad_loglik_frozen(data, &beta, &alpha, &sc, &assign)?;
        // Hessian of the NLL, so negate.
        Ok(map.contract(&d_beta, &d_alpha).into_iter().map(|g| -g).collect())
    };

    let mut h = DMatrix::zeros(dim, dim);
    for l in 0..dim {
        let step = 1e-5 * theta[l].abs().max(1.0);
        let mut up = theta.clone();
        up[l] += step;
        let mut dn = theta.clone();
        dn[l] -= step;
        let gu = grad_at(&up)?;
        let gd = grad_at(&dn)?;
        for i in 0..dim {
            h[(i, l)] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    // enforce symmetry before inversion
    let h = (h.clone() + h.transpose()) * 0.5;

    let eig = h.clone().symmetric_eigen();
    let max_e = eig.eigenvalues.max();
    let min_e = eig.eigenvalues.min();
    let cond = max_e / min_e;
    if !(min_e > 0.0) {
        return Err(Error::Singular(format!(
            "observed information is not positive definite (min eigenvalue {min_e:.3e}, \
             condition number {cond:.3e})"
        )));
    }
    let cov_m = h
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("Hessian inversion failed (cond {cond:.3e})")))?;

    let se_theta: Vec<f64> = (0..dim).map(|i| cov_m[(i, i)].max(0.0).sqrt()).collect();

    let mut se_alpha = [None; 6];
    let mut se_natural = [None; 6];
    let shapes = {
        let (head, tail) = model.shapes()?;
        [head.p, tail.p, head.tau, tail.tau, head.nu, tail.nu]
    };
    for (i, slot) in map.slots.iter().enumerate() {
        let free_index = match slot {
            AlphaSlot::Free(j) => Some(*j),
            AlphaSlot::Tied(t) => match map.slots[*t] {
                AlphaSlot::Free(j) => Some(j),
                _ => None,
            },
            AlphaSlot::Fixed(_) => None,
        };
        if let Some(j) = free_index {
            se_alpha[i] = Some(se_theta[j]);
            se_natural[i] = Some(shapes[i] * se_theta[j]);
        }
    }

    let intercept_only = model.beta.len() == 1;
    let se_mu2 = intercept_only.then(|| model.beta[0].exp() * se_theta[0]);
    let implied = if intercept_only {
        Some(implied_delta_errors(&map, &theta, &cov_m)?)
    } else {
        None
    };

    let cov = CovarianceMatrix {
        dim,
        data: (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| cov_m[(i, j)]).collect(),
    };
    Ok((
        StdErrors {
            theta: se_theta,
            names: map.names(&model.covariate_names),
            alpha: se_alpha,
            natural_shapes: se_natural,
            mu2: se_mu2,
            implied,
            condition_number: cond,
        },
        cov,
    ))
}

/// Delta-method SEs for (μ₁, u, r) through a finite-difference Jacobian of
/// the implied-quantity map.
fn implied_delta_errors(
    map: &ParamMap,
    theta: &[f64],
    cov: &DMatrix<f64>,
) -> Result<(f64, f64, f64)> {
    let eval = |t: &[f64]| -> Result<[f64; 3]> {
        let (beta, alpha) = map.expand(t);
        let sc = ShapeConstants::new(&alpha)?;
        let mu2 = beta[0].exp();
        Ok([mu2 * sc.mu1_scale, mu2 * sc.u_scale, sc.r])
    };
    let dim = theta.len();
    let mut jac = DMatrix::zeros(3, dim);
    for l in 0..dim {
        let step = 1e-6 * theta[l].abs().max(1.0);
        let mut up = theta.to_vec();
        up[l] += step;
        let mut dn = theta.to_vec();
        dn[l] -= step;
        let fu = eval(&up)?;
        let fd = eval(&dn)?;
        for i in 0..3 {
            jac[(i, l)] = (fu[i] - fd[i]) / (2.0 * step);
        }
    }
    let sandwich = &jac * cov * jac.transpose();
    Ok((
        sandwich[(0, 0)].max(0.0).sqrt(),
        sandwich[(1, 1)].max(0.0).sqrt(),
        sandwich[(2, 2)].max(0.0).sqrt(),
    ))
}
