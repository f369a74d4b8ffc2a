//! Thin wrappers over double-exponential quadrature from the `quadrature` crate.

use crate::error::{Error, Result};

/// `int_a^b f` to within `max(abs_tol, rel_tol |I|)`. Non-finite integrand
/// values are treated as zero. Nodes near the endpoints lose precision, so an
/// integrable endpoint singularity costs about seven digits; substitute first.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let coarse = quadrature::double_exponential::integrate(&f, a, b, abs_tol.max(1e-6));
    let target = abs_tol.max(rel_tol * coarse.integral.abs());
    let out = quadrature::double_exponential::integrate(&f, a, b, target);
    if !out.integral.is_finite() || out.error_estimate.is_nan() || out.error_estimate > 1e3 * target.max(f64::MIN_POSITIVE) {
        return Err(Error::NoConvergence {
            iterations: out.num_function_evaluations as usize,
            last: out.integral,
            residual: out.error_estimate,
        });
    }
    Ok(out.integral)
}

/// `int_a^inf f` via `t = a + s / (1 - s)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |s| {
            let w = 1.0 - s;
            f(a + s / w) / (w * w)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}
