use crate::numkit::RngStream;

/// Draw from `N(0, τ²)` on `(0, ∞)` tilted by `exp(-s / γ²)`, i.e. a normal
/// with mean `-τ²/γ²` truncated to the positive half-line. Uses exponential
/// proposals (optimal rate for the standardized bound). Returns the draw and
/// the number of proposals spent.
pub fn sample_tilted_half_normal(tau: f64, gamma_sq: f64, rng: &mut RngStream) -> (f64, u32) {
    // standardized lower bound of N(-τ²/γ², τ²) at 0
    let a = tau / gamma_sq;
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let mut tries = 0;
    loop {
        tries += 1;
        let z = a - (1.0 - rng.uniform()).ln() / rate;
        if rng.uniform().ln() <= -0.5 * (z - rate).powi(2) {
            // back to the s scale: s = μ + τ z with μ = -τ a
            return (tau * (z - a), tries);
        }
    }
}

/// Exact draw of one filter (length `d`) under
/// `N(w; 0, σ² I) · exp(-|Σ w| / γ²)`.
///
/// The sum `s = 1·w` and the orthogonal part are independent: the orthogonal
/// part is isotropic `N(0, σ²)` and `s` has density `∝ N(s; 0, dσ²) e^{-|s|/γ²}`.
pub fn sample_filter(d: usize, variance: f64, gamma_sq: f64, rng: &mut RngStream) -> (Vec<f64>, u32) {
    let tau = (d as f64 * variance).sqrt();
    let (mag, tries) = sample_tilted_half_normal(tau, gamma_sq, rng);
    let s = if rng.uniform() < 0.5 { -mag } else { mag };
    let sd = variance.sqrt();
    let mut g = rng.normal_vec(d);
    let gm = g.iter().sum::<f64>() / d as f64;
    for v in &mut g {
        *v = sd * (*v - gm) + s / d as f64;
    }
    (g, tries)
}
