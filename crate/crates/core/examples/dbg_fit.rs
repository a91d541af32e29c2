// debug binary
use comgbii::dataio::{design_matrix, simulate_regression};
use comgbii::regression::*;
use comgbii::solver::SolverConfig;

fn main() {
    let alpha = [1.5_f64.ln(), 0.0, 2.0_f64.ln(), 1.5_f64.ln(), 2.0_f64.ln(), 1.5_f64.ln()];
    let ds = simulate_regression(1500, &[2.0, 0.5, 0.2], &alpha, 11).unwrap();
    let dm = design_matrix(&ds, &["x1".to_string(), "x2".to_string()]).unwrap();
    let data = RegressionData::new(&ds.response, &dm).unwrap();
    let config = FitConfig {
        solver: SolverConfig { restarts: 1, ..Default::default() },
        compute_covariance: false,
        ..Default::default()
    };
    let (model, report) = fit(&data, CompositeFamily::ComGbii, &config).unwrap();
    println!("beta = {:?}", model.beta);
    println!("alpha = {:?}", model.alpha);
    println!("nll = {}, converged = {}, stable = {}, rounds = {}, grad_norm = {:e}, n_head = {}",
        report.nll, report.converged, report.assignments_stable, report.assignment_rounds,
        report.grad_norm, report.n_head);
    for t in &report.trace {
        println!("  outer {}: obj {:.4} grad {:.3e} maxh {:.3e} rho {:.1e} lambda {:?}",
            t.iteration, t.objective, t.grad_norm, t.max_constraint, t.rho, t.lambda);
    }
}
