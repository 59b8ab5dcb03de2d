//! Closed-form targets the estimators are compared against.

/// Hausdorff dimension of the support of the limiting boundary measure.
pub fn support_dimension(beta: f64, lambda: f64) -> f64 {
    (2.0 * beta / (1.0 + 2.0 * lambda)).min(1.0)
}

/// Hausdorff dimension of the limit set of all branches.
pub fn limit_set_dimension(beta: f64, lambda: f64) -> f64 {
    let a = 1.0 + 2.0 * lambda;
    let disc = a * a - 8.0 * beta;
    if disc < 0.0 {
        1.0
    } else {
        0.5 * (a - disc.sqrt())
    }
}

/// Decay exponent of the second moment of the typical measure of an
/// interval of length `ε`, up to an arbitrarily small loss: `2 ∧ (1 + 2β)`.
pub fn moment_exponent_bound(beta: f64) -> f64 {
    (1.0 + 2.0 * beta).min(2.0)
}

/// Every exponent below this is a Hölder exponent of the CDF of the full
/// limiting measure.
pub fn holder_bound(beta: f64) -> f64 {
    0.5f64.min(beta / 3.0)
}

/// Same for the typical measure.
pub fn typical_holder_bound(beta: f64) -> f64 {
    1.0f64.min(2.0 * beta)
}

/// Expected population at time `t`.
pub fn mean_population(beta: f64, t: f64) -> f64 {
    (beta * t).exp()
}

/// `P(N_t = k)` for the Yule process started from one particle.
pub fn yule_pmf(beta: f64, t: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let p = (-beta * t).exp();
    p * (1.0 - p).powf((k - 1) as f64)
}
