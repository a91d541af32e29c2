//! Scalar special functions used by the distribution and estimation code.
//!
//! Everything here is pure and thread-safe. The fitted shape parameters this
//! crate must digest span roughly 0.02 to 7e6, so all internal products are
//! carried in log space and the incomplete beta machinery is written to stay
//! finite across that range.

use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Truncation control for series expansions (₃F̃₂ and the beta continued
/// fraction fallback paths).
#[derive(Debug, Clone, Copy)]
pub struct SeriesControl {
    /// Relative tolerance on the trailing term versus the partial sum.
    pub rel_tol: f64,
    /// Hard cap on the number of series terms.
    pub max_terms: usize,
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::domain(format!("rel_tol must be > 0, got {rel_tol}")));
        }
        if max_terms == 0 {
            return Err(Error::domain("max_terms must be >= 1"));
        }
        Ok(SeriesControl { rel_tol, max_terms })
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        // The gradient formulas evaluate the series at arguments strictly
        // inside the unit interval where convergence is geometric.
        SeriesControl { rel_tol: 1e-12, max_terms: 10_000 }
    }
}

/// Natural log of the beta function, `ln B(a, b)`.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!("log_beta requires a, b > 0, got a={a}, b={b}")));
    }
    let (s, l) = if a <= b { (a, b) } else { (b, a) };
    if l < 30.0 {
        return Ok(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    }
    // For a large second argument, ln Γ(l) − ln Γ(s+l) cancels catastrophically
    // (both are O(l ln l) while the difference is O(s ln l)). Expand the
    // difference through the Stirling series instead.
    let diff = -(l - 0.5) * (s / l).ln_1p() - s * (s + l).ln() + s
        + stirling_tail(l)
        - stirling_tail(s + l);
    Ok(ln_gamma(s) + diff)
}

/// Remainder J(z) of the Stirling series, valid for z ≥ 30:
/// ln Γ(z) = (z − 1/2) ln z − z + ln(2π)/2 + J(z).
fn stirling_tail(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z
}

/// Digamma function ψ(x) for x > 0.
///
/// Recurrence-shifts the argument above 10 and applies the asymptotic
/// Bernoulli expansion.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("digamma requires x > 0, got {x}")));
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // ψ(z) = ln z − 1/(2z) − Σ B_{2n}/(2n z^{2n})
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    Ok(shift + z.ln() - 0.5 * inv - series)
}

const INC_BETA_MAX_ITER: usize = 400;

/// Regularized incomplete beta function I_x(a, b).
///
/// Continued fraction (modified Lentz) with the symmetry split at
/// x = (a+1)/(a+b+2); the prefactor is assembled in log space so extreme
/// shape parameters do not overflow.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "reg_inc_beta requires a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("reg_inc_beta requires x in [0,1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x <= (a + 1.0) / (a + b + 2.0) {
        inc_beta_cf(x, a, b)
    } else {
        Ok(1.0 - inc_beta_cf(1.0 - x, b, a)?)
    }
}

/// Lentz continued fraction for I_x(a,b), valid for x below the symmetry split.
fn inc_beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - log_beta(a, b)?;
    let prefix = (ln_prefix - a.ln()).exp();

    let tiny = 1e-300;
    let eps = f64::EPSILON;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut f = d;

    for m in 1..=INC_BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let num = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        f *= d * c;

        let num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;

        if (delta - 1.0).abs() < eps {
            return Ok((prefix * f).clamp(0.0, 1.0));
        }
    }
    Err(Error::Convergence(format!(
        "incomplete beta continued fraction stalled at a={a}, b={b}, x={x}"
    )))
}

/// Inverse of the regularized incomplete beta function.
///
/// Newton iteration safeguarded by bisection on the bracket [0, 1];
/// terminates when |I(x) − q| ≤ 1e−12 or the bracket collapses to machine
/// resolution.
pub fn inv_reg_inc_beta(q: f64, a: f64, b: f64) -> Result<f64> {
    Ok(inv_reg_inc_beta_pair(q, a, b)?.0)
}

/// Inverse incomplete beta returning `(x, 1 − x)` with both sides computed
/// at full precision. Quantile formulas need the ratio x/(1−x), which loses
/// all accuracy near x = 1 unless the complement is solved directly.
pub fn inv_reg_inc_beta_pair(q: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "inv_reg_inc_beta requires a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("inv_reg_inc_beta requires q in (0,1), got {q}")));
    }
    let x = inv_inc_beta_root(q, a, b)?;
    if x <= 0.5 {
        Ok((x, 1.0 - x))
    } else {
        // Solve the mirrored problem so the complement keeps full precision.
        let y = inv_inc_beta_root(1.0 - q, b, a)?;
        Ok((1.0 - y, y))
    }
}

const INV_BETA_TOL: f64 = 1e-12;
const INV_BETA_MAX_ITER: usize = 200;

fn inv_inc_beta_root(q: f64, a: f64, b: f64) -> Result<f64> {
    let ln_beta = log_beta(a, b)?;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    // Mean of the Beta(a,b) distribution as the starting point.
    let mut x = (a / (a + b)).clamp(1e-300, 1.0 - 1e-16);

    for _ in 0..INV_BETA_MAX_ITER {
        let fx = reg_inc_beta(x, a, b)? - q;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // Newton step using the beta density; bisect when it leaves the bracket.
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta;
        let mut next = f64::NAN;
        let mut step = f64::INFINITY;
        if ln_pdf > -700.0 {
            step = fx / ln_pdf.exp();
            next = x - step;
        }
        // The function tolerance alone leaves x sloppy in flat regions, so
        // also require the Newton step to be negligible.
        if fx.abs() <= INV_BETA_TOL && step.abs() <= 1e-12 * x.max(1e-100) {
            return Ok(x);
        }
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        x = next;
    }
    Err(Error::Convergence(format!(
        "inverse incomplete beta stalled at q={q}, a={a}, b={b}"
    )))
}

/// Regularized generalized hypergeometric function
/// ₃F̃₂(a₁,a₂,a₃; b₁,b₂; z) = Σₖ (a₁)ₖ(a₂)ₖ(a₃)ₖ zᵏ / (Γ(b₁+k)Γ(b₂+k) k!).
///
/// Direct truncated series; errors with [`Error::Convergence`] when
/// `max_terms` is exhausted before the relative tolerance is met (which
/// signals z too close to 1 for this expansion).
pub fn reg_hyp_3f2(a: [f64; 3], b: [f64; 2], z: f64, control: &SeriesControl) -> Result<f64> {
    let (sum, ln_scale) = reg_hyp_3f2_scaled(a, b, z, control)?;
    Ok(sum * ln_scale.exp())
}

/// Scaled variant of [`reg_hyp_3f2`]: returns `(s, ln_c)` with the function
/// value equal to `s · exp(ln_c)`, keeping the huge Γ(b) normalizers out of
/// the floating-point range of the partial sums.
pub(crate) fn reg_hyp_3f2_scaled(
    a: [f64; 3],
    b: [f64; 2],
    z: f64,
    control: &SeriesControl,
) -> Result<(f64, f64)> {
    if !(b[0] > 0.0) || !(b[1] > 0.0) {
        return Err(Error::domain(format!(
            "reg_hyp_3f2 requires b1, b2 > 0, got b1={}, b2={}",
            b[0], b[1]
        )));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(Error::domain(format!("reg_hyp_3f2 requires z in [0,1), got {z}")));
    }
    let ln_scale = -ln_gamma(b[0]) - ln_gamma(b[1]);
    let mut term = 1.0_f64;
    let mut sum = term;
    if z == 0.0 {
        return Ok((sum, ln_scale));
    }
    let mut small_streak = 0;
    for k in 0..control.max_terms {
        let kf = k as f64;
        term *= (a[0] + kf) * (a[1] + kf) * (a[2] + kf) * z
            / ((b[0] + kf) * (b[1] + kf) * (kf + 1.0));
        sum += term;
        if term == 0.0 {
            // A Pochhammer factor hit zero: the series terminates exactly.
            return Ok((sum, ln_scale));
        }
        if term.abs() <= control.rel_tol * sum.abs() {
            small_streak += 1;
            // Alternating-sign parameter lists can produce one spuriously
            // small term; require two in a row.
            if small_streak >= 2 {
                return Ok((sum, ln_scale));
            }
        } else {
            small_streak = 0;
        }
        if !sum.is_finite() {
            return Err(Error::NonFinite(format!(
                "reg_hyp_3f2 partial sum overflowed at term {k} (z={z})"
            )));
        }
    }
    Err(Error::Convergence(format!(
        "reg_hyp_3f2 needed more than {} terms at z={z}",
        control.max_terms
    )))
}

/// Partial derivatives (∂I/∂a, ∂I/∂b) of the regularized incomplete beta
/// function with respect to its shape parameters at fixed x.
///
/// Uses the closed hypergeometric forms
///   ∂I/∂a = −exp(−ln B(a,b) − 2 ln a + a ln x)·S_a + I_{a,b}(x)[ψ(a+b) − ψ(a) + ln x]
///   ∂I/∂b = +exp(−ln B(a,b) − 2 ln b + b ln(1−x))·S_b + (1−I_{a,b}(x))[ψ(b) − ψ(a+b) − ln(1−x)]
/// where S_a, S_b are scaled ₃F̃₂ series. When a series does not converge
/// (x too close to an endpoint for the expansion) the affected derivative
/// falls back to a central finite difference with step 1e−6.
pub fn reg_inc_beta_param_grad(
    x: f64,
    a: f64,
    b: f64,
    control: &SeriesControl,
) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "reg_inc_beta_param_grad requires a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!(
            "reg_inc_beta_param_grad requires x in (0,1), got {x}"
        )));
    }
    let ln_b = log_beta(a, b)?;
    let i_ab = reg_inc_beta(x, a, b)?;
    let ln_x = x.ln();
    let ln_1mx = (-x).ln_1p();
    let psi_ab = digamma(a + b)?;

    let d_a = match reg_hyp_3f2_scaled([a, a, 1.0 - b], [a + 1.0, a + 1.0], x, control) {
        Ok((s, _)) => {
            let pre = (-ln_b - 2.0 * a.ln() + a * ln_x).exp();
            let v = -pre * s + i_ab * (psi_ab - digamma(a)? + ln_x);
            if v.is_finite() {
                v
            } else {
                fd_param_grad(x, a, b, GradSlot::A)?
            }
        }
        Err(Error::Convergence(_)) => fd_param_grad(x, a, b, GradSlot::A)?,
        Err(e) => return Err(e),
    };

    let d_b = match reg_hyp_3f2_scaled([b, b, 1.0 - a], [b + 1.0, b + 1.0], 1.0 - x, control) {
        Ok((s, _)) => {
            let pre = (-ln_b - 2.0 * b.ln() + b * ln_1mx).exp();
            let v = pre * s + (1.0 - i_ab) * (digamma(b)? - psi_ab - ln_1mx);
            if v.is_finite() {
                v
            } else {
                fd_param_grad(x, a, b, GradSlot::B)?
            }
        }
        Err(Error::Convergence(_)) => fd_param_grad(x, a, b, GradSlot::B)?,
        Err(e) => return Err(e),
    };

    Ok((d_a, d_b))
}

enum GradSlot {
    A,
    B,
}

fn fd_param_grad(x: f64, a: f64, b: f64, slot: GradSlot) -> Result<f64> {
    let h = 1e-6;
    let (up, down) = match slot {
        GradSlot::A => (reg_inc_beta(x, a + h, b)?, reg_inc_beta(x, (a - h).max(a * 0.5), b)?),
        GradSlot::B => (reg_inc_beta(x, a, b + h)?, reg_inc_beta(x, a, (b - h).max(b * 0.5))?),
    };
    let denom = match slot {
        GradSlot::A => (a + h) - (a - h).max(a * 0.5),
        GradSlot::B => (b + h) - (b - h).max(b * 0.5),
    };
    Ok((up - down) / denom)
}
