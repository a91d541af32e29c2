//! Composite GBII regression with a varying threshold.
//!
//! Covariates enter the tail location through a log link,
//! log μ₂(xᵢ) = xᵢᵀβ, while the six shape parameters are estimated on the
//! log scale α = log(p₁, p₂, τ₁, τ₂, ν₁, ν₂). Mode matching then gives every
//! observation its own head location μ₁(xᵢ) and threshold u(xᵢ), both
//! proportional to exp(xᵢᵀβ).
//!
//! The log-likelihood is assembled from the splicing terms directly
//! (log r + log f₁ − log I₁ on the head side, mirrored on the tail side);
//! [`loglik`] is therefore an independent code path from
//! [`crate::composite::CompositeDist::ln_pdf`], and the two are tested
//! against each other.

mod fit;

pub use fit::{fit, fit_with_init, std_errors, FitConfig, FitReport, StdErrors};

use crate::composite::{ComponentShapes, CompositeDist, CompositeParams};
use crate::dataio::DesignMatrix;
use crate::gbii::{ShapeMask, Slot, Subfamily};
use crate::specfun::{digamma, log_beta, reg_inc_beta_param_grad, SeriesControl};
use crate::{Error, Result};

/// Roster of composite families: the head varies over GBII subfamilies, the
/// tail is the full GBII for `ComGbii` and otherwise the three-parameter
/// family with ν₂ pinned at 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CompositeFamily {
    ComGbii,
    Gbiig,
    Biig,
    Bg,
    Ibg,
    Pg,
    Ipg,
}

impl CompositeFamily {
    pub const ALL: [CompositeFamily; 7] = [
        CompositeFamily::ComGbii,
        CompositeFamily::Gbiig,
        CompositeFamily::Biig,
        CompositeFamily::Bg,
        CompositeFamily::Ibg,
        CompositeFamily::Pg,
        CompositeFamily::Ipg,
    ];

    pub fn head_mask(&self) -> ShapeMask {
        match self {
            CompositeFamily::ComGbii | CompositeFamily::Gbiig => Subfamily::Gbii.mask(),
            CompositeFamily::Biig => Subfamily::BetaII.mask(),
            CompositeFamily::Bg => Subfamily::Burr.mask(),
            CompositeFamily::Ibg => Subfamily::InverseBurr.mask(),
            CompositeFamily::Pg => Subfamily::Paralogistic.mask(),
            CompositeFamily::Ipg => Subfamily::InverseParalogistic.mask(),
        }
    }

    pub fn tail_mask(&self) -> ShapeMask {
        match self {
            CompositeFamily::ComGbii => Subfamily::Gbii.mask(),
            // ν₂ = 1/2 tail shared by the whole G-tailed roster.
            _ => Subfamily::InverseGlmga.mask(),
        }
    }

    /// Number of estimated distribution parameters (μ₂ plus free shapes),
    /// i.e. the `Npars` column of intercept-only model tables.
    pub fn n_distribution_params(&self) -> usize {
        1 + self.n_free_shapes()
    }

    pub fn n_free_shapes(&self) -> usize {
        let count = |m: &ShapeMask| {
            [m.p, m.nu, m.tau].iter().filter(|s| matches!(s, Slot::Free)).count()
        };
        count(&self.head_mask()) + count(&self.tail_mask())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CompositeFamily::ComGbii => "ComGBII",
            CompositeFamily::Gbiig => "GBIIG",
            CompositeFamily::Biig => "BIIG",
            CompositeFamily::Bg => "BG",
            CompositeFamily::Ibg => "IBG",
            CompositeFamily::Pg => "PG",
            CompositeFamily::Ipg => "IPG",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        CompositeFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Data(format!(
                    "unknown family '{s}' (expected one of ComGBII, GBIIG, BIIG, BG, IBG, PG, IPG)"
                ))
            })
    }
}

impl std::fmt::Display for CompositeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of each log-shape in the α vector: α = log(p₁, p₂, τ₁, τ₂, ν₁, ν₂).
pub const ALPHA_P1: usize = 0;
pub const ALPHA_P2: usize = 1;
pub const ALPHA_TAU1: usize = 2;
pub const ALPHA_TAU2: usize = 3;
pub const ALPHA_NU1: usize = 4;
pub const ALPHA_NU2: usize = 5;

pub(crate) const ALPHA_NAMES: [&str; 6] =
    ["log(p1)", "log(p2)", "log(tau1)", "log(tau2)", "log(nu1)", "log(nu2)"];

/// How each α slot is determined under a family mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum AlphaSlot {
    /// Free, stored at this position of the θ vector.
    Free(usize),
    /// Pinned at this log-value.
    Fixed(f64),
    /// Copies another α slot (paralogistic ties τ₁ or ν₁ to p₁).
    Tied(usize),
}

/// Mapping between the free parameter vector θ = (β, free α slots) and the
/// full (β, α) parameterization.
#[derive(Debug, Clone)]
pub(crate) struct ParamMap {
    pub n_beta: usize,
    pub slots: [AlphaSlot; 6],
    pub n_free: usize,
}

impl ParamMap {
    pub fn new(family: CompositeFamily, n_beta: usize) -> Self {
        let head = family.head_mask();
        let tail = family.tail_mask();
        let order = [
            (ALPHA_P1, head.p),
            (ALPHA_P2, tail.p),
            (ALPHA_TAU1, head.tau),
            (ALPHA_TAU2, tail.tau),
            (ALPHA_NU1, head.nu),
            (ALPHA_NU2, tail.nu),
        ];
        let mut slots = [AlphaSlot::Fixed(0.0); 6];
        let mut next = n_beta;
        for (idx, slot) in order {
            slots[idx] = match slot {
                Slot::Free => {
                    let s = AlphaSlot::Free(next);
                    next += 1;
                    s
                }
                Slot::Fixed(v) => AlphaSlot::Fixed(v.ln()),
                Slot::TiedToP => {
                    // Ties always point at the p-slot of the same component.
                    let target = if idx == ALPHA_TAU1 || idx == ALPHA_NU1 {
                        ALPHA_P1
                    } else {
                        ALPHA_P2
                    };
                    AlphaSlot::Tied(target)
                }
            };
        }
        ParamMap { n_beta, slots, n_free: next }
    }

    pub fn expand(&self, theta: &[f64]) -> (Vec<f64>, [f64; 6]) {
        let beta = theta[..self.n_beta].to_vec();
        let mut alpha = [0.0; 6];
        for (i, slot) in self.slots.iter().enumerate() {
            alpha[i] = match slot {
                AlphaSlot::Free(j) => theta[*j],
                AlphaSlot::Fixed(v) => *v,
                AlphaSlot::Tied(_) => 0.0,
            };
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if let AlphaSlot::Tied(j) = slot {
                alpha[i] = alpha[*j];
            }
        }
        (beta, alpha)
    }

    /// Contract a full (β, α) gradient onto θ, accumulating tied slots.
    pub fn contract(&self, d_beta: &[f64], d_alpha: &[f64; 6]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_free];
        g[..self.n_beta].copy_from_slice(d_beta);
        for (i, slot) in self.slots.iter().enumerate() {
            match slot {
                AlphaSlot::Free(j) => g[*j] += d_alpha[i],
                AlphaSlot::Tied(target) => {
                    if let AlphaSlot::Free(j) = self.slots[*target] {
                        g[j] += d_alpha[i];
                    }
                }
                AlphaSlot::Fixed(_) => {}
            }
        }
        g
    }

    /// Pack a full (β, α) point into θ (used for warm starts).
    pub fn pack(&self, beta: &[f64], alpha: &[f64; 6]) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_free];
        theta[..self.n_beta].copy_from_slice(beta);
        for (i, slot) in self.slots.iter().enumerate() {
            if let AlphaSlot::Free(j) = slot {
                theta[*j] = alpha[i];
            }
        }
        theta
    }

    /// Names of the free θ coordinates.
    pub fn names(&self, covariates: &[String]) -> Vec<String> {
        let mut out: Vec<String> = covariates.to_vec();
        for (i, slot) in self.slots.iter().enumerate() {
            if matches!(slot, AlphaSlot::Free(_)) {
                out.push(ALPHA_NAMES[i].to_string());
            }
        }
        out
    }
}

/// A fitted composite GBII regression model.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RegressionModel {
    pub family: CompositeFamily,
    /// Coefficients of log μ₂, intercept first.
    pub beta: Vec<f64>,
    /// Column names matching `beta`.
    pub covariate_names: Vec<String>,
    /// Full log-shape vector including fixed/tied slots.
    pub alpha: [f64; 6],
    /// Covariance of the free parameters (β, free α), row-major.
    pub covariance: Option<CovarianceMatrix>,
}

/// Row-major symmetric matrix with its dimension, kept serializable.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CovarianceMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }
}

impl RegressionModel {
    pub fn shapes(&self) -> Result<(ComponentShapes, ComponentShapes)> {
        shapes_from_alpha(&self.alpha)
    }

    /// Composite distribution at covariate vector x.
    pub fn distribution_at(&self, x: &[f64]) -> Result<CompositeDist> {
        let (head, tail) = self.shapes()?;
        let mu2 = location(x, &self.beta)?;
        CompositeDist::new(CompositeParams::new(mu2, head, tail)?)
    }

    /// Per-observation threshold u(x).
    pub fn threshold_at(&self, x: &[f64]) -> Result<f64> {
        threshold(x, &self.beta, &self.alpha)
    }

    pub fn n_free_params(&self) -> usize {
        self.beta.len() + self.family.n_free_shapes()
    }
}

/// Head/tail component assignment of one observation under a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObservationFit {
    pub mu2: f64,
    pub threshold: f64,
    pub is_head: bool,
}

pub(crate) fn shapes_from_alpha(alpha: &[f64; 6]) -> Result<(ComponentShapes, ComponentShapes)> {
    let head = ComponentShapes::new(
        alpha[ALPHA_P1].exp(),
        alpha[ALPHA_NU1].exp(),
        alpha[ALPHA_TAU1].exp(),
    )?;
    let tail = ComponentShapes::new(
        alpha[ALPHA_P2].exp(),
        alpha[ALPHA_NU2].exp(),
        alpha[ALPHA_TAU2].exp(),
    )?;
    Ok((head, tail))
}

/// exp(xᵀβ): the tail location at covariates x.
pub fn location(x: &[f64], beta: &[f64]) -> Result<f64> {
    if x.len() != beta.len() {
        return Err(Error::Dimension(format!(
            "covariate vector has length {}, beta has length {}",
            x.len(),
            beta.len()
        )));
    }
    Ok(x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
}

/// Per-observation threshold u(x) = μ₂(x)·((p₂ν₂−1)/(p₂τ₂+1))^{1/p₂}.
pub fn threshold(x: &[f64], beta: &[f64], alpha: &[f64; 6]) -> Result<f64> {
    let (_, tail) = shapes_from_alpha(alpha)?;
    let pn = tail.p * tail.nu;
    if pn <= 1.0 {
        return Err(Error::Constraint(format!("threshold requires p2*nu2 > 1, got {pn}")));
    }
    let g2 = (pn - 1.0) / (tail.p * tail.tau + 1.0);
    Ok(location(x, beta)? * (g2.ln() / tail.p).exp())
}

/// Conditional moment E[Y^h | x] = w(α)·exp(xᵀβ)^h.
pub fn conditional_moment(h: f64, x: &[f64], beta: &[f64], alpha: &[f64; 6]) -> Result<f64> {
    let (head, tail) = shapes_from_alpha(alpha)?;
    let dist = CompositeDist::new(CompositeParams::new(location(x, beta)?, head, tail)?)?;
    dist.moment(h)
}

/// VaR prediction at covariates x: the composite quantile with μ₂ = exp(xᵀβ).
pub fn predict_var(model: &RegressionModel, x: &[f64], q: f64) -> Result<f64> {
    model.distribution_at(x)?.var_q(q)
}

/// Shape-only constants shared by every observation: the composite at unit
/// location, its splicing normalizers, and the scale factors that turn
/// exp(xᵀβ) into μ₁(x) and u(x).
pub(crate) struct ShapeConstants {
    pub head: ComponentShapes,
    pub tail: ComponentShapes,
    /// u(x)/μ₂(x) = g₂^{1/p₂}.
    pub u_scale: f64,
    /// μ₁(x)/μ₂(x).
    pub mu1_scale: f64,
    pub ln_r: f64,
    pub ln_1mr: f64,
    pub r: f64,
    /// I₁ = F₁(u), ln of it, and the tail complement 1 − I₂.
    pub i1: f64,
    pub ln_i1: f64,
    pub i2c: f64,
    pub ln_i2c: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub ln_b1: f64,
    pub ln_b2: f64,
}

impl ShapeConstants {
    pub fn new(alpha: &[f64; 6]) -> Result<Self> {
        let (head, tail) = shapes_from_alpha(alpha)?;
        let dist = CompositeDist::new(CompositeParams::new(1.0, head, tail)?)?;
        let implied = dist.implied();
        Ok(ShapeConstants {
            head,
            tail,
            u_scale: implied.u,
            mu1_scale: implied.mu1,
            ln_r: dist.ln_r(),
            ln_1mr: dist.ln_one_minus_r(),
            r: implied.r,
            i1: dist.head_norm(),
            ln_i1: dist.head_norm().ln(),
            i2c: dist.tail_norm(),
            ln_i2c: dist.tail_norm().ln(),
            pi1: (head.p * head.nu - 1.0) / (head.p * (head.nu + head.tau)),
            pi2: (tail.p * tail.nu - 1.0) / (tail.p * (tail.nu + tail.tau)),
            ln_b1: log_beta(head.nu, head.tau)?,
            ln_b2: log_beta(tail.nu, tail.tau)?,
        })
    }
}

/// Responses paired with a design matrix.
#[derive(Debug, Clone, Copy)]
pub struct RegressionData<'a> {
    pub y: &'a [f64],
    pub x: &'a DesignMatrix,
}

impl<'a> RegressionData<'a> {
    pub fn new(y: &'a [f64], x: &'a DesignMatrix) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} responses but {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Data(format!("response must be positive, got {v} at row {i}")));
        }
        Ok(RegressionData { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Component assignments (true = head) at the given parameters.
pub(crate) fn assignments(data: &RegressionData, beta: &[f64], sc: &ShapeConstants) -> Vec<bool> {
    (0..data.n())
        .map(|i| {
            let eta: f64 = data.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            data.y[i] <= eta.exp() * sc.u_scale
        })
        .collect()
}

/// Log-likelihood of the composite GBII regression.
///
/// Equals Σᵢ log f_com(yᵢ) with the per-observation μ₂(xᵢ), but is built
/// from the splicing terms (log r + log f₁ − log I₁ / log(1−r) + log f₂ −
/// log(1−I₂)) as an independent evaluation path.
pub fn loglik(data: &RegressionData, beta: &[f64], alpha: &[f64; 6]) -> Result<f64> {
    let sc = ShapeConstants::new(alpha)?;
    let assign = assignments(data, beta, &sc);
    loglik_frozen(data, beta, alpha, &sc, &assign)
}

pub(crate) fn loglik_frozen(
    data: &RegressionData,
    beta: &[f64],
    _alpha: &[f64; 6],
    sc: &ShapeConstants,
    assign: &[bool],
) -> Result<f64> {
    if beta.len() != data.x.ncols() {
        return Err(Error::Dimension(format!(
            "beta has length {}, design matrix has {} columns",
            beta.len(),
            data.x.ncols()
        )));
    }
    let mut ll = 0.0;
    for i in 0..data.n() {
        let eta: f64 = data.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        let ln_y = data.y[i].ln();
        let term = if assign[i] {
            let ln_mu1 = eta + sc.mu1_scale.ln();
            sc.ln_r + ln_pdf_raw(ln_y, ln_mu1, &sc.head, sc.ln_b1) - sc.ln_i1
        } else {
            sc.ln_1mr + ln_pdf_raw(ln_y, eta, &sc.tail, sc.ln_b2) - sc.ln_i2c
        };
        ll += term;
    }
    if !ll.is_finite() {
        return Err(Error::NonFinite(format!(
            "log-likelihood is {ll}; parameters are degenerate for this data"
        )));
    }
    Ok(ll)
}

/// GBII log-density written directly in terms of ln y and ln μ.
fn ln_pdf_raw(ln_y: f64, ln_mu: f64, s: &ComponentShapes, ln_b: f64) -> f64 {
    let hi = ln_y.max(ln_mu);
    let lo = ln_y.min(ln_mu);
    let lse = s.p * hi + (-(s.p * (hi - lo))).exp().ln_1p();
    s.p.ln() - ln_b - ln_y + s.p * s.tau * ln_mu + s.p * s.nu * ln_y - (s.nu + s.tau) * lse
}

/// Everything the per-observation gradient loop needs that depends only on
/// the shape parameters.
pub(crate) struct GradConstants {
    /// A_s = ∂I_j/∂s / norm_j − ∂lnφ/∂s for each shape s, ordered
    /// (p1, p2, τ1, τ2, ν1, ν2); ∂r/∂s = r(1−r)·A_s.
    pub a: [f64; 6],
    /// ∂I₁/∂s / I₁ for the head shapes (p1, τ1, ν1).
    pub dlni1: [f64; 3],
    /// ∂I₂/∂s / (1−I₂) for the tail shapes (p2, τ2, ν2).
    pub di2_over_i2c: [f64; 3],
    /// ∂ln μ₁/∂s for all six shapes in α order.
    pub dlnmu1: [f64; 6],
    /// ψ(ν+τ) − ψ(τ) and ψ(ν+τ) − ψ(ν) per component.
    pub psi_tau1: f64,
    pub psi_nu1: f64,
    pub psi_tau2: f64,
    pub psi_nu2: f64,
}

impl GradConstants {
    pub fn new(sc: &ShapeConstants, control: &SeriesControl) -> Result<Self> {
        let h = &sc.head;
        let t = &sc.tail;

        // Total derivatives of I_j = I_{ν,τ}(π(ν,τ)): the fixed-argument
        // parameter partials plus the beta-density route through
        // π = (pν−1)/(p(ν+τ)), which moves with ν and τ as well as p.
        let di1_dp = di_dp(h, sc.ln_b1);
        let (mut di1_dnu, mut di1_dtau) = reg_inc_beta_param_grad(sc.pi1, h.nu, h.tau, control)?;
        let pdf1 = ((h.nu - 1.0) * sc.pi1.ln() + (h.tau - 1.0) * (-sc.pi1).ln_1p() - sc.ln_b1)
            .exp();
        let denom1 = h.p * (h.nu + h.tau) * (h.nu + h.tau);
        di1_dnu += pdf1 * (h.p * h.tau + 1.0) / denom1;
        di1_dtau -= pdf1 * (h.p * h.nu - 1.0) / denom1;

        let di2_dp = di_dp(t, sc.ln_b2);
        let (mut di2_dnu, mut di2_dtau) = reg_inc_beta_param_grad(sc.pi2, t.nu, t.tau, control)?;
        let pdf2 = ((t.nu - 1.0) * sc.pi2.ln() + (t.tau - 1.0) * (-sc.pi2).ln_1p() - sc.ln_b2)
            .exp();
        let denom2 = t.p * (t.nu + t.tau) * (t.nu + t.tau);
        di2_dnu += pdf2 * (t.p * t.tau + 1.0) / denom2;
        di2_dtau -= pdf2 * (t.p * t.nu - 1.0) / denom2;

        let dlnphi = dlnphi_all(h, t)?;

        let dlni1 = [di1_dp / sc.i1, di1_dtau / sc.i1, di1_dnu / sc.i1];
        let di2_over_i2c = [di2_dp / sc.i2c, di2_dtau / sc.i2c, di2_dnu / sc.i2c];

        // A_s: head shapes use ∂I₁/∂s/I₁, tail shapes use ∂I₂/∂s/(1−I₂);
        // both subtract ∂lnφ/∂s.
        let a = [
            dlni1[0] - dlnphi[0],
            di2_over_i2c[0] - dlnphi[1],
            dlni1[1] - dlnphi[2],
            di2_over_i2c[1] - dlnphi[3],
            dlni1[2] - dlnphi[4],
            di2_over_i2c[2] - dlnphi[5],
        ];

        let g1 = (h.p * h.nu - 1.0) / (h.p * h.tau + 1.0);
        let g2 = (t.p * t.nu - 1.0) / (t.p * t.tau + 1.0);
        // ln μ₁ = ln μ₂ + ln(g₂)/p₂ − ln(g₁)/p₁
        let dlnmu1 = [
            g1.ln() / (h.p * h.p) - (h.nu / (h.p * h.nu - 1.0) - h.tau / (h.p * h.tau + 1.0)) / h.p,
            -g2.ln() / (t.p * t.p) + (t.nu / (t.p * t.nu - 1.0) - t.tau / (t.p * t.tau + 1.0)) / t.p,
            1.0 / (h.p * h.tau + 1.0),
            -1.0 / (t.p * t.tau + 1.0),
            -1.0 / (h.p * h.nu - 1.0),
            1.0 / (t.p * t.nu - 1.0),
        ];

        Ok(GradConstants {
            a,
            dlni1,
            di2_over_i2c,
            dlnmu1,
            psi_tau1: digamma(h.nu + h.tau)? - digamma(h.tau)?,
            psi_nu1: digamma(h.nu + h.tau)? - digamma(h.nu)?,
            psi_tau2: digamma(t.nu + t.tau)? - digamma(t.tau)?,
            psi_nu2: digamma(t.nu + t.tau)? - digamma(t.nu)?,
        })
    }
}

/// ∂I_{ν,τ}(π)/∂p at π = (pν−1)/(pν+pτ):
/// (pτ+1)^{τ−1}(pν−1)^{ν−1} / (B(ν,τ)·p·(pν+pτ)^{ν+τ−1}), in log space.
fn di_dp(s: &ComponentShapes, ln_b: f64) -> f64 {
    ((s.tau - 1.0) * (s.p * s.tau + 1.0).ln() + (s.nu - 1.0) * (s.p * s.nu - 1.0).ln()
        - ln_b
        - s.p.ln()
        - (s.nu + s.tau - 1.0) * (s.p * (s.nu + s.tau)).ln())
    .exp()
}

/// ∂lnφ/∂(p₁, p₂, τ₁, τ₂, ν₁, ν₂).
fn dlnphi_all(h: &ComponentShapes, t: &ComponentShapes) -> Result<[f64; 6]> {
    let psi = digamma;
    Ok([
        1.0 / h.p + (h.nu + h.tau) / (h.p * (h.p * h.nu - 1.0) * (h.p * h.tau + 1.0)),
        -(1.0 / t.p + (t.nu + t.tau) / (t.p * (t.p * t.nu - 1.0) * (t.p * t.tau + 1.0))),
        ((h.p * h.tau + 1.0) / (h.p * (h.nu + h.tau))).ln() - 1.0 / (h.p * h.tau + 1.0)
            - psi(h.tau)?
            + psi(h.nu + h.tau)?,
        ((t.p * (t.nu + t.tau)) / (t.p * t.tau + 1.0)).ln() + 1.0 / (t.p * t.tau + 1.0)
            + psi(t.tau)?
            - psi(t.nu + t.tau)?,
        ((h.p * h.nu - 1.0) / (h.p * (h.nu + h.tau))).ln() + 1.0 / (h.p * h.nu - 1.0)
            - psi(h.nu)?
            + psi(h.nu + h.tau)?,
        ((t.p * (t.nu + t.tau)) / (t.p * t.nu - 1.0)).ln() - 1.0 / (t.p * t.nu - 1.0)
            + psi(t.nu)?
            - psi(t.nu + t.tau)?,
    ])
}

/// Analytic gradient of [`loglik`] in the full parameterization:
/// (∂ℓ/∂β₀…∂β_k, ∂ℓ/∂α₁…∂α₆). Component assignments are frozen at the
/// supplied (β, α), matching the piecewise-smooth treatment of the
/// likelihood.
pub fn grad_loglik(data: &RegressionData, beta: &[f64], alpha: &[f64; 6]) -> Result<Vec<f64>> {
    let sc = ShapeConstants::new(alpha)?;
    let assign = assignments(data, beta, &sc);
    let (d_beta, d_alpha) = grad_loglik_frozen(data, beta, alpha, &sc, &assign)?;
    Ok(d_beta.into_iter().chain(d_alpha).collect())
}

/// Gradient with explicit frozen assignments; returns (∂ℓ/∂β, ∂ℓ/∂α).
pub(crate) fn grad_loglik_frozen(
    data: &RegressionData,
    beta: &[f64],
    alpha: &[f64; 6],
    sc: &ShapeConstants,
    assign: &[bool],
) -> Result<(Vec<f64>, [f64; 6])> {
    if beta.len() != data.x.ncols() {
        return Err(Error::Dimension(format!(
            "beta has length {}, design matrix has {} columns",
            beta.len(),
            data.x.ncols()
        )));
    }
    let gc = GradConstants::new(sc, &SeriesControl::default())?;
    let h = &sc.head;
    let t = &sc.tail;
    let ln_mu1_scale = sc.mu1_scale.ln();

    let k1 = beta.len();
    let mut d_beta = vec![0.0; k1];
    // Gradient with respect to the raw shapes (p1, p2, τ1, τ2, ν1, ν2).
    let mut d_shape = [0.0; 6];
    let mut n_head = 0usize;
    let mut n_tail = 0usize;

    for i in 0..data.n() {
        let xi = data.x.row(i);
        let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
        let ln_y = data.y[i].ln();
        if assign[i] {
            n_head += 1;
            let ln_mu = eta + ln_mu1_scale;
            let tt = h.p * (ln_y - ln_mu);
            let sig_pos = logistic(tt);
            let sig_neg = 1.0 - sig_pos;
            // ∂lnf/∂lnμ = p(τ·σ(t) − ν·σ(−t))
            let dlnf_dlnmu = h.p * (h.tau * sig_pos - h.nu * sig_neg);
            for (g, x) in d_beta.iter_mut().zip(xi) {
                *g += dlnf_dlnmu * x;
            }
            // direct density partials at fixed μ₁
            let dlnf_dp = 1.0 / h.p + (ln_mu - ln_y) * (h.tau * sig_pos - h.nu * sig_neg);
            let dlnf_dtau = -softplus(tt) + gc.psi_tau1;
            let dlnf_dnu = -softplus(-tt) + gc.psi_nu1;
            d_shape[0] += dlnf_dp + dlnf_dlnmu * gc.dlnmu1[0];
            d_shape[1] += dlnf_dlnmu * gc.dlnmu1[1];
            d_shape[2] += dlnf_dtau + dlnf_dlnmu * gc.dlnmu1[2];
            d_shape[3] += dlnf_dlnmu * gc.dlnmu1[3];
            d_shape[4] += dlnf_dnu + dlnf_dlnmu * gc.dlnmu1[4];
            d_shape[5] += dlnf_dlnmu * gc.dlnmu1[5];
        } else {
            n_tail += 1;
            let tt = t.p * (ln_y - eta);
            let sig_pos = logistic(tt);
            let sig_neg = 1.0 - sig_pos;
            let dlnf_dlnmu = t.p * (t.tau * sig_pos - t.nu * sig_neg);
            for (g, x) in d_beta.iter_mut().zip(xi) {
                *g += dlnf_dlnmu * x;
            }
            let dlnf_dp = 1.0 / t.p + (eta - ln_y) * (t.tau * sig_pos - t.nu * sig_neg);
            d_shape[1] += dlnf_dp;
            d_shape[3] += -softplus(tt) + gc.psi_tau2;
            d_shape[5] += -softplus(-tt) + gc.psi_nu2;
        }
    }

    // Observation-independent terms: the mixing weight, the head normalizer
    // I₁ and the tail normalizer 1 − I₂.
    let nh = n_head as f64;
    let nt = n_tail as f64;
    let r = sc.r;
    // shape order in `a`/α convention: (p1, p2, τ1, τ2, ν1, ν2)
    for (j, a_s) in gc.a.iter().enumerate() {
        // Σ_head (1/r)∂r/∂s + Σ_tail (1/(r−1))∂r/∂s
        d_shape[j] += (nh * (1.0 - r) - nt * r) * a_s;
    }
    // − Σ_head ∂ln I₁/∂s  over head shapes (p1, τ1, ν1)
    d_shape[0] -= nh * gc.dlni1[0];
    d_shape[2] -= nh * gc.dlni1[1];
    d_shape[4] -= nh * gc.dlni1[2];
    // − Σ_tail ∂ln(1−I₂)/∂s = + Σ_tail ∂I₂/∂s/(1−I₂)  over (p2, τ2, ν2)
    d_shape[1] += nt * gc.di2_over_i2c[0];
    d_shape[3] += nt * gc.di2_over_i2c[1];
    d_shape[5] += nt * gc.di2_over_i2c[2];

    // Chain to the log-scale: ∂ℓ/∂α_j = shape_j · ∂ℓ/∂shape_j.
    let shapes = [h.p, t.p, h.tau, t.tau, h.nu, t.nu];
    let mut d_alpha = [0.0; 6];
    for j in 0..6 {
        d_alpha[j] = shapes[j] * d_shape[j];
    }
    Ok((d_beta, d_alpha))
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t), stable for large |t|.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Per-observation fit summary under a model.
pub fn observation_fits(model: &RegressionModel, data: &RegressionData) -> Result<Vec<ObservationFit>> {
    let sc = ShapeConstants::new(&model.alpha)?;
    (0..data.n())
        .map(|i| {
            let mu2 = location(data.x.row(i), &model.beta)?;
            let u = mu2 * sc.u_scale;
            Ok(ObservationFit { mu2, threshold: u, is_head: data.y[i] <= u })
        })
        .collect()
}

#[cfg(test)]
mod tests;
