//! Model selection, residual diagnostics, goodness-of-fit testing with a
//! parametric bootstrap, and risk-measure comparison.

use crate::regression::{
    fit_with_init, location, FitConfig, RegressionData, RegressionModel,
};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Residuals are clamped to ±8 when the PIT saturates numerically.
const RESIDUAL_CLAMP: f64 = 8.0;

/// AIC = 2·NLL + 2m and BIC = 2·NLL + m·ln n.
pub fn aic_bic(nll: f64, m: usize, n: usize) -> (f64, f64) {
    let aic = 2.0 * nll + 2.0 * m as f64;
    let bic = 2.0 * nll + m as f64 * (n as f64).ln();
    (aic, bic)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Probability integral transform F(yᵢ) under the fitted model, using the
/// per-observation location.
pub fn pit_values(model: &RegressionModel, data: &RegressionData) -> Result<Vec<f64>> {
    // The composite is a scale family in μ₂: F(y; μ₂) = F(y/μ₂; 1).
    let (head, tail) = model.shapes()?;
    let unit = crate::composite::CompositeDist::new(crate::composite::CompositeParams::new(
        1.0, head, tail,
    )?)?;
    (0..data.n())
        .map(|i| {
            let mu2 = location(data.x.row(i), &model.beta)?;
            unit.cdf(data.y[i] / mu2)
        })
        .collect()
}

/// Randomized quantile residuals Φ⁻¹(F(yᵢ)); returns the residuals and the
/// count of observations whose PIT saturated at 0 or 1 and was clamped.
pub fn quantile_residuals(
    model: &RegressionModel,
    data: &RegressionData,
) -> Result<(Vec<f64>, usize)> {
    let normal = standard_normal();
    let mut clamped = 0;
    let residuals = pit_values(model, data)?
        .into_iter()
        .map(|f| {
            if f <= 0.0 {
                clamped += 1;
                -RESIDUAL_CLAMP
            } else if f >= 1.0 {
                clamped += 1;
                RESIDUAL_CLAMP
            } else {
                normal.inverse_cdf(f).clamp(-RESIDUAL_CLAMP, RESIDUAL_CLAMP)
            }
        })
        .collect();
    Ok((residuals, clamped))
}

/// Sorted (theoretical, empirical) normal quantile pairs of the residuals
/// plus the Pearson correlation R of the QQ plot.
pub fn qq_data(model: &RegressionModel, data: &RegressionData) -> Result<(Vec<(f64, f64)>, f64)> {
    let (mut residuals, _) = quantile_residuals(model, data)?;
    residuals.sort_by(f64::total_cmp);
    let n = residuals.len();
    let normal = standard_normal();
    let pairs: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .map(|(i, r)| (normal.inverse_cdf((i as f64 + 0.5) / n as f64), *r))
        .collect();
    let r = pearson(&pairs);
    Ok((pairs, r))
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// KS, AD and CvM statistics from PIT values (unsorted accepted).
pub fn gof_statistics(pit: &[f64]) -> (f64, f64, f64) {
    let mut z = pit.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let nf = n as f64;
    let mut ks = 0.0_f64;
    let mut cvm = 1.0 / (12.0 * nf);
    let mut ad = 0.0_f64;
    for (i, zi) in z.iter().enumerate() {
        let i1 = (i + 1) as f64;
        ks = ks.max((i1 / nf - zi).max(zi - (i1 - 1.0) / nf));
        let d = zi - (2.0 * i1 - 1.0) / (2.0 * nf);
        cvm += d * d;
        // AD pairs z_i with z_{n+1-i}; saturated PIT values push it to +∞.
        let zc = z[n - 1 - i];
        ad += (2.0 * i1 - 1.0) * (zi.ln() + (-zc).ln_1p());
    }
    let ad = -nf - ad / nf;
    (ks, ad, cvm)
}

/// Asymptotic Kolmogorov p-value Q(λ) with the small-sample correction
/// λ = (√n + 0.12 + 0.11/√n)·D.
pub fn ks_pvalue(statistic: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1.0_f64).powi(j + 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Goodness-of-fit report for an intercept-only (distribution) fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GofReport {
    pub ks: f64,
    pub ad: f64,
    pub cvm: f64,
    pub p_ks: f64,
    pub p_ad: f64,
    pub p_cvm: f64,
    pub qq_correlation: f64,
    pub n_boot: usize,
    /// Replicates whose refit failed; p-values average over the rest.
    pub n_failed: usize,
    pub seed: u64,
}

/// KS/AD/CvM statistics with parametric-bootstrap p-values: each replicate
/// resamples from the fitted model, refits (warm-started at the observed
/// fit), and recomputes the statistics; the p-value is the fraction of
/// replicates at or above the observed statistic.
pub fn gof_tests(
    y: &[f64],
    model: &RegressionModel,
    n_boot: usize,
    seed: u64,
) -> Result<GofReport> {
    if model.beta.len() != 1 {
        return Err(Error::Data(
            "bootstrap goodness-of-fit applies to intercept-only distribution fits".into(),
        ));
    }
    if n_boot < 1 {
        return Err(Error::domain("n_boot must be >= 1"));
    }
    let n = y.len();
    let design = crate::dataio::DesignMatrix::intercept_only(n);
    let data = RegressionData::new(y, &design)?;
    let pit = pit_values(model, &data)?;
    let (ks, ad, cvm) = gof_statistics(&pit);
    let (_, qq_correlation) = qq_data(model, &data)?;

    let (head, tail) = model.shapes()?;
    let unit = crate::composite::CompositeDist::new(crate::composite::CompositeParams::new(
        1.0, head, tail,
    )?)?;
    let mu2 = model.beta[0].exp();

    let refit_config = FitConfig {
        solver: crate::solver::SolverConfig { restarts: 1, ..Default::default() },
        compute_covariance: false,
        seed,
        ..Default::default()
    };

    // Independent seeded replicates, reduced in index order.
    let results: Vec<Option<(f64, f64, f64)>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64 + 1));
            let resample: Vec<f64> = (0..n)
                .map(|_| {
                    let q = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    unit.var_q(q).map(|v| v * mu2)
                })
                .collect::<Result<_>>()
                .ok()?;
            let rd_design = crate::dataio::DesignMatrix::intercept_only(n);
            let rd = RegressionData::new(&resample, &rd_design).ok()?;
            let (refit, _) = fit_with_init(
                &rd,
                model.family,
                &refit_config,
                Some((&model.beta, &model.alpha)),
            )
            .ok()?;
            let pit_b = pit_values(&refit, &rd).ok()?;
            Some(gof_statistics(&pit_b))
        })
        .collect();

    let mut n_failed = 0;
    let (mut ge_ks, mut ge_ad, mut ge_cvm, mut ok) = (0usize, 0usize, 0usize, 0usize);
    for r in results {
        match r {
            Some((ks_b, ad_b, cvm_b)) => {
                ok += 1;
                ge_ks += usize::from(ks_b >= ks);
                ge_ad += usize::from(ad_b >= ad);
                ge_cvm += usize::from(cvm_b >= cvm);
            }
            None => n_failed += 1,
        }
    }
    if ok == 0 {
        return Err(Error::Convergence("every bootstrap refit failed".into()));
    }
    Ok(GofReport {
        ks,
        ad,
        cvm,
        p_ks: ge_ks as f64 / ok as f64,
        p_ad: ge_ad as f64 / ok as f64,
        p_cvm: ge_cvm as f64 / ok as f64,
        qq_correlation,
        n_boot,
        n_failed,
        seed,
    })
}

/// Empirical versus model risk measures at one level.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RiskComparison {
    pub level: f64,
    pub var_empirical: f64,
    pub var_model: f64,
    pub var_diff_pct: f64,
    pub tvar_empirical: f64,
    pub tvar_model: f64,
    pub tvar_diff_pct: f64,
}

pub fn risk_comparison(y: &[f64], model: &RegressionModel, level: f64) -> Result<RiskComparison> {
    if model.beta.len() != 1 {
        return Err(Error::Data("risk comparison applies to intercept-only fits".into()));
    }
    let (var_emp, tvar_emp) = empirical_risk(y, level)?;
    let dist = model.distribution_at(&[1.0])?;
    let var_model = dist.var_q(level)?;
    let tvar_model = dist.tvar_q(level)?;
    Ok(RiskComparison {
        level,
        var_empirical: var_emp,
        var_model,
        var_diff_pct: 100.0 * (var_model - var_emp) / var_emp,
        tvar_empirical: tvar_emp,
        tvar_model,
        tvar_diff_pct: 100.0 * (tvar_model - tvar_emp) / tvar_emp,
    })
}

/// Empirical VaR (type-7 interpolated quantile) and TVaR (mean of
/// observations strictly above the VaR).
pub fn empirical_risk(y: &[f64], q: f64) -> Result<(f64, f64)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("level must be in (0,1), got {q}")));
    }
    if y.len() < 2 {
        return Err(Error::Data("need at least two observations".into()));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let var = if lo + 1 < n {
        sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    };
    let tail: Vec<f64> = sorted.iter().copied().filter(|v| *v > var).collect();
    let tvar = if tail.is_empty() {
        // A constant sample has an empty strict tail; fall back to the VaR.
        if sorted.iter().all(|v| *v == sorted[0]) {
            var
        } else {
            return Err(Error::Data(format!(
                "no observations above the empirical VaR at level {q}"
            )));
        }
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Ok((var, tvar))
}

/// Σ (yᵢ − VaR_q(Yᵢ; xᵢ))² over the given data partition.
pub fn mse_q(model: &RegressionModel, data: &RegressionData, q: f64) -> Result<f64> {
    let (head, tail) = model.shapes()?;
    let unit = crate::composite::CompositeDist::new(crate::composite::CompositeParams::new(
        1.0, head, tail,
    )?)?;
    let unit_var = unit.var_q(q)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        let pred = location(data.x.row(i), &model.beta)? * unit_var;
        total += (data.y[i] - pred) * (data.y[i] - pred);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DesignMatrix;
    use crate::regression::CompositeFamily;
    use approx::assert_relative_eq;

    fn sim_model() -> RegressionModel {
        RegressionModel {
            family: CompositeFamily::ComGbii,
            beta: vec![0.5],
            covariate_names: vec!["Intercept".into()],
            alpha: [1.5_f64.ln(), 0.0, 2.0_f64.ln(), 1.5_f64.ln(), 2.0_f64.ln(), 1.5_f64.ln()],
            covariance: None,
        }
    }

    #[test]
    fn aic_bic_reported_row() {
        // Best-model row of the Danish selection table.
        let (aic, bic) = aic_bic(3813.94, 5, 2492);
        assert_relative_eq!(aic, 7637.88, epsilon = 1e-10);
        assert!((bic - 7666.98).abs() < 5e-3, "bic = {bic}");
    }

    #[test]
    fn aic_bic_trivia() {
        let (aic, bic) = aic_bic(100.0, 0, 50);
        assert_eq!(aic, 200.0);
        assert_eq!(bic, 200.0);
        for n in [8usize, 100, 2492] {
            let m = 4;
            let (aic, bic) = aic_bic(10.0, m, n);
            assert_relative_eq!(bic - aic, m as f64 * ((n as f64).ln() - 2.0), epsilon = 1e-12);
            assert!(bic > aic);
        }
    }

    #[test]
    fn residual_at_median_is_zero() {
        let model = sim_model();
        let dist = model.distribution_at(&[1.0]).unwrap();
        let median = dist.var_q(0.5).unwrap();
        let y = [median];
        let design = DesignMatrix::intercept_only(1);
        let data = RegressionData::new(&y, &design).unwrap();
        let (res, clamped) = quantile_residuals(&model, &data).unwrap();
        assert!(res[0].abs() < 1e-7, "residual {}", res[0]);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn residual_at_threshold_is_normal_score_of_r() {
        let model = sim_model();
        let dist = model.distribution_at(&[1.0]).unwrap();
        let y = [dist.threshold()];
        let design = DesignMatrix::intercept_only(1);
        let data = RegressionData::new(&y, &design).unwrap();
        let (res, _) = quantile_residuals(&model, &data).unwrap();
        let expect = standard_normal().inverse_cdf(dist.mixing_weight());
        assert_relative_eq!(res[0], expect, epsilon = 1e-9);
    }

    #[test]
    fn residual_clamps_saturated_pit() {
        let model = sim_model();
        let y = [1e300];
        let design = DesignMatrix::intercept_only(1);
        let data = RegressionData::new(&y, &design).unwrap();
        let (res, clamped) = quantile_residuals(&model, &data).unwrap();
        assert_eq!(res[0], RESIDUAL_CLAMP);
        assert_eq!(clamped, 1);
    }

    #[test]
    fn qq_two_points_is_perfectly_linear() {
        let model = sim_model();
        let dist = model.distribution_at(&[1.0]).unwrap();
        let y = [dist.var_q(0.3).unwrap(), dist.var_q(0.8).unwrap()];
        let design = DesignMatrix::intercept_only(2);
        let data = RegressionData::new(&y, &design).unwrap();
        let (pairs, r) = qq_data(&model, &data).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_relative_eq!(r.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gof_statistics_uniform_grid() {
        // Perfectly uniform PIT minimizes the statistics.
        let n = 100;
        let pit: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let (ks, ad, cvm) = gof_statistics(&pit);
        assert!(ks <= 0.5 / n as f64 + 1e-12);
        assert!(cvm < 0.01);
        assert!(ad < 0.5);
        // saturated PIT drives AD to +∞ but leaves KS/CvM finite
        let mut bad = pit.clone();
        bad[0] = 0.0;
        let (ks2, ad2, _) = gof_statistics(&bad);
        assert!(ad2.is_infinite() && ad2 > 0.0);
        assert!(ks2.is_finite());
    }

    #[test]
    fn ks_pvalue_known_points() {
        // Q(1.0) ≈ 0.27 and Q(1.36) ≈ 0.049 for large n.
        let n = 1_000_000;
        let d1 = 1.0 / (n as f64).sqrt();
        assert!((ks_pvalue(d1, n) - 0.2700).abs() < 2e-3);
        let d2 = 1.36 / (n as f64).sqrt();
        assert!((ks_pvalue(d2, n) - 0.0495).abs() < 2e-3);
    }

    #[test]
    fn empirical_risk_examples() {
        let y: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (var, tvar) = empirical_risk(&y, 0.95).unwrap();
        // type-7: h = 99·0.95 = 94.05 → 95.05
        assert_relative_eq!(var, 95.05, epsilon = 1e-12);
        // strictly above 95.05: 96..100
        assert_relative_eq!(tvar, 98.0, epsilon = 1e-12);
        assert!(tvar >= var);

        // q below 1/n lands on the smallest observation
        let (var_low, _) = empirical_risk(&y, 0.005).unwrap();
        assert_relative_eq!(var_low, 1.495, epsilon = 1e-12);

        let constant = vec![4.2; 10];
        let (v, t) = empirical_risk(&constant, 0.9).unwrap();
        assert_eq!(v, 4.2);
        assert_eq!(t, 4.2);
    }

    #[test]
    fn mse_q_exact_cases() {
        let model = sim_model();
        let design = DesignMatrix::intercept_only(1);
        // prediction exactly equals the observation → 0
        let dist = model.distribution_at(&[1.0]).unwrap();
        let pred = dist.var_q(0.4).unwrap();
        let y = [pred];
        let data = RegressionData::new(&y, &design).unwrap();
        assert!(mse_q(&model, &data, 0.4).unwrap() < 1e-18);
        // single observation y = 3 against prediction 1 → 4
        let y3 = [3.0];
        let data3 = RegressionData::new(&y3, &design).unwrap();
        // level whose prediction is exactly 1.0: F(1; μ₂) = F_unit(1/μ₂)
        let q_for_one = dist.cdf(1.0).unwrap();
        let m = mse_q(&model, &data3, q_for_one).unwrap();
        assert!((m - 4.0).abs() < 1e-6, "mse = {m}");
    }
}
