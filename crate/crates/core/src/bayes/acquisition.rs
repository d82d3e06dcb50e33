use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

#[inline]
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Expected improvement over `best` for maximization.
///
/// `EI = (mean - best) Phi(u) + sigma phi(u)`, `u = (mean - best) / sigma`;
/// with zero variance it reduces to `max(mean - best, 0)`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gain = mean - best;
    if sigma == 0.0 {
        return gain.max(0.0);
    }
    let u = gain / sigma;
    (gain * normal_cdf(u) + sigma * normal_pdf(u)).max(0.0)
}
