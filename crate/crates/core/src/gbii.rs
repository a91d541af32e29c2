//! The four-parameter GBII distribution.
//!
//! Density, cdf, quantile, mode, complete and incomplete moments, plus the
//! subfamily constructors (Burr, inverse Burr, BII, GLMGA, inverse GLMGA,
//! paralogistic, inverse paralogistic) obtained by pinning shape slots.
//!
//! Every evaluation runs in log space: fitted shapes from real loss data
//! reach p ≈ 709 and τ ≈ 7e6, which overflow any naive `powf` formulation.

use crate::specfun::{inv_reg_inc_beta_pair, log_beta, reg_inc_beta};
use crate::{Error, Result};

/// Slack used by the moment-existence checks; the open interval
/// −pν < h < pτ is enforced with this margin so boundary cases error out.
const EXISTENCE_SLACK: f64 = 1e-12;

/// Parameters of a GBII distribution in canonical (p > 0) form.
///
/// A negative scale parameter is admitted at construction and normalized
/// through the reciprocal identity GBII(y; −p, μ, τ, ν) = GBII(y; p, μ, ν, τ),
/// so downstream mode and threshold logic can assume p > 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GbiiParams {
    p: f64,
    mu: f64,
    nu: f64,
    tau: f64,
}

impl GbiiParams {
    pub fn new(p: f64, mu: f64, nu: f64, tau: f64) -> Result<Self> {
        if p == 0.0 || !p.is_finite() {
            return Err(Error::domain(format!("scale parameter p must be nonzero, got {p}")));
        }
        if !(mu > 0.0) || !(nu > 0.0) || !(tau > 0.0) {
            return Err(Error::domain(format!(
                "GBII requires mu, nu, tau > 0, got mu={mu}, nu={nu}, tau={tau}"
            )));
        }
        if p > 0.0 {
            Ok(GbiiParams { p, mu, nu, tau })
        } else {
            Ok(GbiiParams { p: -p, mu, nu: tau, tau: nu })
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same shapes relocated to a new location parameter.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        GbiiParams::new(self.p, mu, self.nu, self.tau)
    }

    /// Log-density at y > 0.
    pub fn ln_pdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("GBII density requires y > 0, got {y}")));
        }
        let ln_y = y.ln();
        let ln_mu = self.mu.ln();
        let lse = ln_sum_pow(self.p, ln_y, ln_mu);
        Ok(self.p.ln() - log_beta(self.nu, self.tau)? - ln_y
            + self.p * self.tau * ln_mu
            + self.p * self.nu * ln_y
            - (self.nu + self.tau) * lse)
    }

    /// Density at y > 0.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        Ok(self.ln_pdf(y)?.exp())
    }

    /// Distribution function F(y) = I_{ν,τ}[(y/μ)^p / (1 + (y/μ)^p)].
    pub fn cdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("GBII cdf requires y > 0, got {y}")));
        }
        let w = self.beta_argument(y);
        reg_inc_beta(w, self.nu, self.tau)
    }

    /// Survival function 1 − F(y), computed through the mirrored incomplete
    /// beta so the upper tail keeps precision.
    pub fn sf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("GBII sf requires y > 0, got {y}")));
        }
        let wc = self.beta_argument_complement(y);
        reg_inc_beta(wc, self.tau, self.nu)
    }

    /// (y/μ)^p / (1 + (y/μ)^p), evaluated as a logistic in p·(ln y − ln μ).
    pub(crate) fn beta_argument(&self, y: f64) -> f64 {
        logistic(self.p * (y.ln() - self.mu.ln()))
    }

    pub(crate) fn beta_argument_complement(&self, y: f64) -> f64 {
        logistic(-self.p * (y.ln() - self.mu.ln()))
    }

    /// Quantile function for q in (0, 1).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("GBII quantile requires q in (0,1), got {q}")));
        }
        let (x, xc) = inv_reg_inc_beta_pair(q, self.nu, self.tau)?;
        Ok(self.mu * ((x.ln() - xc.ln()) / self.p).exp())
    }

    /// Mode: μ((pν−1)/(pτ+1))^{1/p} when pν > 1, zero otherwise.
    pub fn mode(&self) -> f64 {
        let pn = self.p * self.nu;
        if pn > 1.0 {
            self.mu * (((pn - 1.0) / (self.p * self.tau + 1.0)).ln() / self.p).exp()
        } else {
            0.0
        }
    }

    /// Whether E[Y^h] exists, i.e. −pν < h < pτ with a small slack.
    pub fn moment_exists(&self, h: f64) -> bool {
        h - (-self.p * self.nu) >= EXISTENCE_SLACK && self.p * self.tau - h >= EXISTENCE_SLACK
    }

    fn check_moment(&self, h: f64) -> Result<()> {
        if self.moment_exists(h) {
            Ok(())
        } else {
            Err(Error::Existence(format!(
                "E[Y^{h}] requires -p*nu < h < p*tau, got p*nu={}, p*tau={}",
                self.p * self.nu,
                self.p * self.tau
            )))
        }
    }

    /// h-th moment E[Y^h] = μ^h B(ν + h/p, τ − h/p)/B(ν, τ).
    pub fn moment(&self, h: f64) -> Result<f64> {
        self.check_moment(h)?;
        let ln = h * self.mu.ln() + log_beta(self.nu + h / self.p, self.tau - h / self.p)?
            - log_beta(self.nu, self.tau)?;
        Ok(ln.exp())
    }

    /// Conditional (incomplete) moment E[Y^h | Y ≤ s] or E[Y^h | Y > s].
    pub fn incomplete_moment(&self, h: f64, s: f64, side: Side) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain(format!("incomplete moment requires s > 0, got {s}")));
        }
        self.check_moment(h)?;
        let m = self.moment(h)?;
        let a_shift = self.nu + h / self.p;
        let b_shift = self.tau - h / self.p;
        match side {
            Side::Below => {
                let w = self.beta_argument(s);
                Ok(m * reg_inc_beta(w, a_shift, b_shift)? / reg_inc_beta(w, self.nu, self.tau)?)
            }
            Side::Above => {
                let wc = self.beta_argument_complement(s);
                Ok(m * reg_inc_beta(wc, b_shift, a_shift)?
                    / reg_inc_beta(wc, self.tau, self.nu)?)
            }
        }
    }
}

/// Which side of the truncation point an incomplete moment conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// ln(y^p + μ^p) without overflow: p·max(ln y, ln μ) + ln(1 + e^{−p|ln y − ln μ|}).
fn ln_sum_pow(p: f64, ln_y: f64, ln_mu: f64) -> f64 {
    let hi = ln_y.max(ln_mu);
    let lo = ln_y.min(ln_mu);
    p * hi + (-(p * (hi - lo))).exp().ln_1p()
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Distributions nested in the GBII by pinning shape slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Subfamily {
    /// Full four-parameter family.
    Gbii,
    /// Beta distribution of the second kind: p = 1.
    BetaII,
    /// Burr (Singh-Maddala): ν = 1.
    Burr,
    /// Inverse Burr: τ = 1.
    InverseBurr,
    /// GLMGA: τ = 1/2.
    Glmga,
    /// Inverse GLMGA: ν = 1/2.
    InverseGlmga,
    /// Paralogistic: ν = 1, τ = p.
    Paralogistic,
    /// Inverse paralogistic: ν = p, τ = 1.
    InverseParalogistic,
}

/// How one shape slot of a subfamily is determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Free,
    Fixed(f64),
    /// The slot mirrors the scale parameter p (paralogistic families).
    TiedToP,
}

/// Fixed-slot pattern for (p, ν, τ); μ is always free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMask {
    pub p: Slot,
    pub nu: Slot,
    pub tau: Slot,
}

impl Subfamily {
    pub fn mask(&self) -> ShapeMask {
        use Slot::*;
        match self {
            Subfamily::Gbii => ShapeMask { p: Free, nu: Free, tau: Free },
            Subfamily::BetaII => ShapeMask { p: Fixed(1.0), nu: Free, tau: Free },
            Subfamily::Burr => ShapeMask { p: Free, nu: Fixed(1.0), tau: Free },
            Subfamily::InverseBurr => ShapeMask { p: Free, nu: Free, tau: Fixed(1.0) },
            Subfamily::Glmga => ShapeMask { p: Free, nu: Free, tau: Fixed(0.5) },
            Subfamily::InverseGlmga => ShapeMask { p: Free, nu: Fixed(0.5), tau: Free },
            Subfamily::Paralogistic => ShapeMask { p: Free, nu: Fixed(1.0), tau: TiedToP },
            Subfamily::InverseParalogistic => ShapeMask { p: Free, nu: TiedToP, tau: Fixed(1.0) },
        }
    }

    /// Number of free parameters including μ.
    pub fn arity(&self) -> usize {
        let mask = self.mask();
        1 + [mask.p, mask.nu, mask.tau].iter().filter(|s| matches!(s, Slot::Free)).count()
    }

    /// Build the embedded GBII parameters from the free parameter list, in
    /// the order (p, μ, ν, τ) with fixed/tied slots skipped.
    pub fn build(&self, free: &[f64]) -> Result<GbiiParams> {
        let mask = self.mask();
        let mut it = free.iter().copied();
        let mut take = |name: &str| {
            it.next().ok_or_else(|| {
                Error::Dimension(format!(
                    "subfamily {self:?} expects {} free parameters, missing {name}",
                    self.arity()
                ))
            })
        };
        let p = match mask.p {
            Slot::Free => take("p")?,
            Slot::Fixed(v) => v,
            Slot::TiedToP => unreachable!("p cannot be tied to itself"),
        };
        let mu = take("mu")?;
        let nu = match mask.nu {
            Slot::Free => take("nu")?,
            Slot::Fixed(v) => v,
            Slot::TiedToP => p,
        };
        let tau = match mask.tau {
            Slot::Free => take("tau")?,
            Slot::Fixed(v) => v,
            Slot::TiedToP => p,
        };
        if it.next().is_some() {
            return Err(Error::Dimension(format!(
                "subfamily {self:?} expects {} free parameters, got {}",
                self.arity(),
                free.len()
            )));
        }
        GbiiParams::new(p, mu, nu, tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pdf_reduces_to_lomax() {
        // p = μ = ν = τ = 1 is Lomax with density 1/(1+y)².
        let d = GbiiParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(d.pdf(1.0).unwrap(), 0.25, epsilon = 1e-14);
        assert!(d.pdf(0.0).is_err());
        assert!(d.pdf(-1.0).is_err());
    }

    #[test]
    fn reciprocal_identity_is_canonicalized() {
        let pos = GbiiParams::new(1.3, 0.8, 2.0, 0.6).unwrap();
        let neg = GbiiParams::new(-1.3, 0.8, 0.6, 2.0).unwrap();
        assert_eq!(pos, neg);
        assert_relative_eq!(pos.pdf(2.5).unwrap(), neg.pdf(2.5).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn cdf_closed_forms() {
        let d = GbiiParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        // F(y) = y/(1+y)
        assert_relative_eq!(d.cdf(1.0).unwrap(), 0.5, epsilon = 1e-13);
        assert_relative_eq!(d.cdf(3.0).unwrap(), 0.75, epsilon = 1e-13);
        // y = μ gives I_{ν,τ}(1/2) for any p.
        for (p, nu, tau) in [(2.0, 1.5, 0.8), (5.12, 0.5, 0.28), (16.19, 1.0, 1146.7)] {
            let d = GbiiParams::new(p, 3.0, nu, tau).unwrap();
            let want = reg_inc_beta(0.5, nu, tau).unwrap();
            assert_relative_eq!(d.cdf(3.0).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn sf_complements_cdf() {
        let d = GbiiParams::new(2.0, 3.0, 1.5, 0.8).unwrap();
        for y in [0.5, 2.0, 10.0, 1e4] {
            let s = d.cdf(y).unwrap() + d.sf(y).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_roundtrips() {
        let d = GbiiParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(d.quantile(0.5).unwrap(), 1.0, epsilon = 1e-12);
        let heavy = GbiiParams::new(5.12, 1.03, 0.5, 0.28).unwrap();
        for q in [0.05, 0.5, 0.95] {
            for d in [&d, &heavy] {
                let y = d.quantile(q).unwrap();
                assert!((d.cdf(y).unwrap() - q).abs() < 1e-8, "roundtrip at q={q}");
            }
        }
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn quantile_tail_value_frozen() {
        // Frozen from 60-digit bisection on the exact cdf.
        let d = GbiiParams::new(5.12, 1.03, 0.5, 0.28).unwrap();
        assert_relative_eq!(d.quantile(0.95).unwrap(), 6.7716930558184785, epsilon = 1e-10);
    }

    #[test]
    fn mode_cases() {
        let d = GbiiParams::new(2.0, 2.0, 1.5, 1.5).unwrap();
        assert_relative_eq!(d.mode(), 2.0_f64.sqrt(), epsilon = 1e-14);
        // pν = 0.5 < 1: mode at the origin.
        assert_eq!(GbiiParams::new(1.0, 5.0, 0.5, 2.0).unwrap().mode(), 0.0);
        assert_relative_eq!(
            GbiiParams::new(1.0, 1.0, 2.0, 1.0).unwrap().mode(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn mode_is_argmax_of_pdf() {
        for (p, mu, nu, tau) in [(2.0, 2.0, 1.5, 1.5), (1.0, 1.0, 2.0, 1.0), (1.5, 3.4, 1.5, 2.5)] {
            let d = GbiiParams::new(p, mu, nu, tau).unwrap();
            let m = d.mode();
            assert!(m > 0.0);
            // coarse grid argmax
            let mut best = (0.0, f64::NEG_INFINITY);
            let mut y = m / 50.0;
            while y < m * 50.0 {
                let f = d.ln_pdf(y).unwrap();
                if f > best.1 {
                    best = (y, f);
                }
                y *= 1.001;
            }
            assert!((best.0 - m).abs() / m < 2e-3, "grid argmax {} vs mode {m}", best.0);
        }
    }

    #[test]
    fn moment_closed_forms() {
        // Lomax(α=2): mean = λ/(α−1) = 1.
        let d = GbiiParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(d.moment(1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.moment(0.0).unwrap(), 1.0, epsilon = 1e-14);
        // h = pτ boundary must error.
        let b = GbiiParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(b.moment(1.0), Err(Error::Existence(_))));
        assert!(matches!(b.moment(-1.0), Err(Error::Existence(_))));
    }

    #[test]
    fn incomplete_moments_total_expectation() {
        let d = GbiiParams::new(2.0, 1.0, 1.5, 1.5).unwrap();
        let (h, s) = (1.0, 2.0);
        let below = d.incomplete_moment(h, s, Side::Below).unwrap();
        let above = d.incomplete_moment(h, s, Side::Above).unwrap();
        let f = d.cdf(s).unwrap();
        let total = f * below + (1.0 - f) * above;
        assert_relative_eq!(total, d.moment(h).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn incomplete_moment_limits() {
        let d = GbiiParams::new(2.0, 1.0, 1.5, 1.5).unwrap();
        let below = d.incomplete_moment(1.0, 1e6 * d.mu(), Side::Below).unwrap();
        assert_relative_eq!(below, d.moment(1.0).unwrap(), epsilon = 1e-6);
        // Lomax E[Y | Y > 1] = 3 for α = 2, λ = 1.
        let lomax = GbiiParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(
            lomax.incomplete_moment(1.0, 1.0, Side::Above).unwrap(),
            3.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn subfamily_constructors() {
        let burr = Subfamily::Burr.build(&[2.0, 1.0, 3.0]).unwrap();
        let full = GbiiParams::new(2.0, 1.0, 1.0, 3.0).unwrap();
        assert_relative_eq!(burr.pdf(1.0).unwrap(), full.pdf(1.0).unwrap(), epsilon = 1e-14);

        let para = Subfamily::Paralogistic.build(&[2.0, 1.0]).unwrap();
        assert_eq!(para.nu(), 1.0);
        assert_eq!(para.tau(), 2.0);

        // GLMGA pins the τ slot at 1/2 while p, μ, ν stay free.
        let g = Subfamily::Glmga.build(&[5.12, 1.03, 0.5]).unwrap();
        assert_eq!(g.tau(), 0.5);
        assert!(matches!(Subfamily::Glmga.mask().tau, Slot::Fixed(v) if v == 0.5));

        assert!(Subfamily::Burr.build(&[2.0, 1.0]).is_err());
        assert!(Subfamily::Burr.build(&[2.0, 1.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn extreme_shape_density_is_finite() {
        // ComGBII column of the Danish fits.
        let d = GbiiParams::new(709.11, 1.17, 0.02, 7e6).unwrap();
        for y in [0.4, 1.0, 1.16, 1.17] {
            let v = d.ln_pdf(y).unwrap();
            assert!(v.is_finite(), "ln_pdf({y}) = {v}");
        }
        let bg = GbiiParams::new(16.19, 1.4648759710245927, 1.0, 1146.7).unwrap();
        for y in [0.31, 0.5, 0.9, 0.94] {
            assert!(bg.ln_pdf(y).unwrap().is_finite());
        }
    }
}
