//! Special-function helpers on top of statrs: the regularized lower
//! incomplete gamma, its inverse (used as the gamma quantile function), and
//! the derivative of the quantile with respect to the shape parameter.

use crate::error::{Error, Result};
use statrs::function::erf::erf_inv;
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Regularized lower incomplete gamma P(a, x), extended to the x<=0 boundary.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// log of the Gamma(a, 1) density at x.
pub fn gamma_logpdf(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - ln_gamma(a)
}

/// Standard normal quantile via the inverse error function.
pub fn normal_quantile(u: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(2.0 * u - 1.0)
}

/// Inverse of P(a, .) at probability `u`: the Gamma(a, 1) quantile.
///
/// Wilson–Hilferty initial guess refined by safeguarded Newton in log-space,
/// so tiny quantiles at small shapes stay well conditioned.
pub fn gamma_quantile(a: f64, u: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!("gamma shape must be positive, got {a}")));
    }
    if !(0.0 < u && u < 1.0) {
        return Err(Error::invalid(format!("quantile probability must lie in (0,1), got {u}")));
    }

    // Wilson–Hilferty: x ~= a * (1 - 1/(9a) + z*sqrt(1/(9a)))^3
    let z = normal_quantile(u);
    let c = 1.0 / (9.0 * a);
    let wh = a * (1.0 - c + z * c.sqrt()).powi(3);
    let mut x = if wh.is_finite() && wh > 1e-300 {
        wh
    } else {
        // small-shape fallback: P(a, x) ~ x^a / Gamma(a+1) for x -> 0
        ((u.ln() + ln_gamma(a + 1.0)) / a).exp().max(1e-300)
    };

    // Newton on t = ln x, steps clamped so a bad initial guess cannot fling
    // the iterate hundreds of orders of magnitude away; fall back to
    // bisection in log-space (geometric mean), which closes huge brackets
    // in a couple dozen halvings where linear bisection would stall.
    let mut lo = 0.0_f64; // exclusive
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let p = reg_lower_gamma(a, x);
        let diff = p - u;
        if diff > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        // d/dt P(a, e^t) = pdf(x) * x
        let dlog = (gamma_logpdf(a, x) + x.ln()).exp();
        let mut next = if dlog > 0.0 && dlog.is_finite() {
            (x.ln() - (diff / dlog).clamp(-5.0, 5.0)).exp()
        } else {
            f64::NAN
        };
        if !next.is_finite() || next <= lo || next >= hi {
            next = if hi.is_finite() {
                if lo > 0.0 {
                    (0.5 * (lo.ln() + hi.ln())).exp()
                } else {
                    0.5 * hi
                }
            } else {
                (lo.max(x) * 2.0).max(1e-300)
            };
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// d/da of the gamma quantile at fixed probability u, via the implicit
/// function theorem: dx/da = -(dP/da) / pdf(x). dP/da uses a central
/// difference, the one derivative the incomplete gamma has no simple
/// closed form for.
pub fn gamma_quantile_dalpha(a: f64, x: f64) -> f64 {
    let h = 1e-6 * a.max(1e-3);
    let dp_da = (reg_lower_gamma(a + h, x) - reg_lower_gamma(a - h, x)) / (2.0 * h);
    let pdf = gamma_logpdf(a, x).exp();
    if pdf > 0.0 && pdf.is_finite() {
        -dp_da / pdf
    } else {
        0.0
    }
}
