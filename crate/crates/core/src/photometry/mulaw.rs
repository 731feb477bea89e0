use crate::error::{Error, Result};

/// `log(1 + mu x) / log(1 + mu)`.
#[inline]
pub fn mu_law_value(x: f64, mu: f64) -> f64 {
    (mu * x).ln_1p() / mu.ln_1p()
}

/// Derivative of [`mu_law_value`] with respect to `x`.
#[inline]
pub fn mu_law_derivative(x: f64, mu: f64) -> f64 {
    mu / ((1.0 + mu * x) * mu.ln_1p())
}

/// Elementwise compression of non-negative radiance values.
pub fn mu_law(values: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_mu(mu)?;
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v < 0.0 || !v.is_finite() {
                Err(Error::NegativeRadiance { index, value: v })
            } else {
                Ok(mu_law_value(v, mu))
            }
        })
        .collect()
}

/// Compressed values together with their elementwise derivatives.
pub fn mu_law_with_derivative(values: &[f64], mu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let compressed = mu_law(values, mu)?;
    let deriv = values.iter().map(|&v| mu_law_derivative(v, mu)).collect();
    Ok((compressed, deriv))
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::config(format!("mu must be positive, got {mu}")));
    }
    Ok(())
}
