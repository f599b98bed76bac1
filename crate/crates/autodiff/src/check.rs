//! Central finite differences, for validating backward rules.

/// Default perturbation used by the gradient checks.
pub const STEP: f64 = 1e-5;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(mut f: F, x: &[f64], index: usize, step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    probe[index] = x[index] + step;
    let up = f(&probe);
    probe[index] = x[index] - step;
    let down = f(&probe);
    (up - down) / (2.0 * step)
}

/// `|analytic - numeric| / (|numeric| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}
