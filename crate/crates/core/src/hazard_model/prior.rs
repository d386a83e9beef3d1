//! Prior densities: Gaussian coefficients, the AR(1) log-hazard process,
//! N(0,1) process mean, scaled Beta(2,2) autocorrelation and Gam(1,1) scales.

use super::params::{ModelKind, ParameterState, PriorConfig};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn log_normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI
}

/// Density of Beta(2,2) rescaled to (−1, 1): (3/4)(1 − ρ²).
pub fn scaled_beta22_density(rho: f64) -> f64 {
    if rho.abs() >= 1.0 {
        0.0
    } else {
        0.75 * (1.0 - rho * rho)
    }
}

/// P(ρ ≤ r) under the scaled Beta(2,2): 3u² − 2u³ with u = (r + 1)/2.
pub fn scaled_beta22_cdf(rho: f64) -> f64 {
    let u = ((rho + 1.0) / 2.0).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Conditional means of the AR(1) process: m_1 = η, m_k = η(1−ρ) + ρθ̃_{k−1}.
pub(crate) fn process_means(theta_tilde: &[f64], eta: f64, rho: f64) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(eta).chain(theta_tilde.windows(2).map(move |w| eta * (1.0 - rho) + rho * w[0]))
}

/// Log density of the log-hazard process given (η, ρ, ν).
pub fn log_process_density(state: &ParameterState) -> f64 {
    process_means(&state.theta_tilde, state.eta, state.rho)
        .zip(&state.theta_tilde)
        .zip(&state.nu)
        .map(|((m, &t), &nu)| log_normal_density(t, m, nu))
        .sum()
}

/// Full log prior. Returns −∞ on the boundary (ν = 0, |ρ| = 1).
pub fn log_prior(state: &ParameterState, config: &PriorConfig) -> f64 {
    if state.nu.iter().any(|&v| v <= 0.0) || state.rho.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let beta: f64 = state
        .beta
        .iter()
        .map(|&b| log_normal_density(b, 0.0, config.sigma))
        .sum();
    let eta = log_normal_density(state.eta, 0.0, 1.0);
    let rho = match config.model_kind {
        ModelKind::Ar1 => scaled_beta22_density(state.rho).ln(),
        ModelKind::Independent => 0.0,
    };
    let nu: f64 = state.nu.iter().map(|v| -v).sum();
    beta + log_process_density(state) + eta + rho + nu
}
