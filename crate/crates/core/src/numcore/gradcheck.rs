use crate::error::{Error, Result};

/// Compare an analytic gradient against central differences.
///
/// Returns the largest per-coordinate relative error
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check<F>(mut f: F, analytic: &[f64], params: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "grad_check",
            format!(
                "{} analytic components for {} parameters",
                analytic.len(),
                params.len()
            ),
        ));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let plus = f(&probe)?;
        probe[i] = params[i] - step;
        let minus = f(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::non_finite(format!(
                "function value at coordinate {i} +/- {step}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
