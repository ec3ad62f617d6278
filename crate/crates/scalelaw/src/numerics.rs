//! Overflow-guarded log-space primitives.
//!
//! Every addition of nonnegative quantities in this crate goes through
//! [`logsumexp`], every `log(1 + e^z)` through [`softplus`]. Both subtract
//! the running maximum so that inputs with magnitude up to ~700 never
//! overflow.

/// Stable `log(1 + e^z)`, branchless form `max(z, 0) + log1p(e^{-|z|})`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z.is_nan() {
        return z;
    }
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`]: the logistic sigmoid, computed without
/// overflow for any finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(sum(exp(terms)))` with the maximum subtracted before
/// exponentiation. Terms equal to negative infinity contribute nothing;
/// an all-`-inf` input returns `-inf`.
pub fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

/// `log((e^{log_body}^{-1} + e^{log_inverse})^{-1})`: combines a log-space
/// body with a reciprocal-summed limit constant. `log_inverse = -inf`
/// (an infinite limit) returns the body unchanged.
#[inline]
pub fn limit_combine(log_body: f64, log_inverse: f64) -> f64 {
    if log_inverse == f64::NEG_INFINITY {
        return log_body;
    }
    if log_body == f64::NEG_INFINITY {
        return log_body;
    }
    log_body - softplus(log_body + log_inverse)
}
