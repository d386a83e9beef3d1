//! Sampling coordinates for the hazard posterior.
//!
//! The sampler does not move θ̃ directly. It moves the innovations ε_k of
//! the prior recursion
//!
//! ```text
//! θ̃_1 = η + ν_1 ε_1,   θ̃_k = η(1 − ρ) + ρ θ̃_{k−1} + ν_k ε_k
//! ```
//!
//! together with standardized coefficients b_j = s_j β_j and a shifted
//! level η' = η + x̄'β, where x̄ and s are the design column means and
//! standard deviations. Small ν_k no longer squeeze the scale of the
//! sampled coordinates, and the intercept-like direction shared by η and
//! x̄'β is decoupled from β. The map to the model's unconstrained vector
//! has log-Jacobian Σ log ν_k plus a constant, which cancels the 1/ν_k of
//! each process density term.

use super::hmc::LogDensity;
use crate::hazard_model::{HazardTarget, Layout, PriorConfig, SurvivalData};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Non-centered, standardized view of a [`HazardTarget`]. Coordinates share
/// the model layout: `(ε, b, η', [atanh ρ], log ν)`.
#[derive(Debug, Clone)]
pub struct NonCentered<'a> {
    layout: Layout,
    prior: PriorConfig,
    data: Option<&'a SurvivalData>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl<'a> NonCentered<'a> {
    pub fn new(target: &'a HazardTarget) -> Self {
        let p = target.layout.p;
        let (mut mean, mut scale) = (vec![0.0; p], vec![1.0; p]);
        if let Some(data) = &target.data {
            let n = data.n() as f64;
            for j in 0..p {
                let col = data.design.column(j);
                let m = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
                mean[j] = m;
                if var > 0.0 {
                    scale[j] = var.sqrt();
                }
            }
        }
        NonCentered {
            layout: target.layout,
            prior: target.prior,
            data: target.data.as_ref(),
            mean,
            scale,
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    fn rho(&self, v: &[f64]) -> f64 {
        self.layout.rho().map_or(0.0, |i| v[i].tanh())
    }

    /// (β, η) from sampler coordinates.
    fn beta_eta(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let l = &self.layout;
        let beta: Vec<f64> = v[l.beta()].iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = beta.iter().zip(&self.mean).map(|(b, m)| b * m).sum();
        (beta, v[l.eta()] - shift)
    }

    fn theta_tilde(&self, v: &[f64], eta: f64, rho: f64) -> Vec<f64> {
        let l = &self.layout;
        let eps = &v[l.theta()];
        let log_nu = &v[l.nu()];
        let mut theta = Vec::with_capacity(l.k);
        for k in 0..l.k {
            let mean = if k == 0 { eta } else { eta * (1.0 - rho) + rho * theta[k - 1] };
            theta.push(mean + log_nu[k].exp() * eps[k]);
        }
        theta
    }

    /// The model's unconstrained vector `(θ̃, β, η, [atanh ρ], log ν)`.
    pub fn to_model(&self, v: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let (beta, eta) = self.beta_eta(v);
        let theta = self.theta_tilde(v, eta, self.rho(v));
        let mut u = v.to_vec();
        u[l.theta()].copy_from_slice(&theta);
        u[l.beta()].copy_from_slice(&beta);
        u[l.eta()] = eta;
        u
    }

    /// Inverse of [`to_model`](Self::to_model).
    pub fn from_model(&self, u: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let rho = self.rho(u);
        let eta = u[l.eta()];
        let theta = &u[l.theta()];
        let mut v = u.to_vec();
        for k in 0..l.k {
            let mean = if k == 0 { eta } else { eta * (1.0 - rho) + rho * theta[k - 1] };
            v[l.theta().start + k] = (theta[k] - mean) / u[l.nu().start + k].exp();
        }
        let beta = &u[l.beta()];
        let shift: f64 = beta.iter().zip(&self.mean).map(|(b, m)| b * m).sum();
        for (j, i) in l.beta().enumerate() {
            v[i] = beta[j] * self.scale[j];
        }
        v[l.eta()] = eta + shift;
        v
    }
}

impl LogDensity for NonCentered<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_grad(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let (k, p) = (l.k, l.p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let rho = self.rho(v);
        let (beta, eta) = self.beta_eta(v);
        let theta = self.theta_tilde(v, eta, rho);
        let eps = &v[l.theta()];
        let log_nu = &v[l.nu()];

        // likelihood gradient with respect to θ̃ and β
        let mut g_theta = vec![0.0; k];
        let mut g_beta = vec![0.0; p];
        let mut value = match self.data {
            Some(d) => d.value_and_grad(&theta, &beta, &mut g_theta, &mut g_beta),
            None => 0.0,
        };

        // adjoints through the recursion: a_k = g_k + ρ a_{k+1}
        let mut adj = g_theta;
        for kk in (0..k.saturating_sub(1)).rev() {
            adj[kk] += rho * adj[kk + 1];
        }
        let mut g_eta = adj.first().copied().unwrap_or(0.0) + (1.0 - rho) * adj.iter().skip(1).sum::<f64>();
        let g_rho: f64 = (1..k).map(|kk| adj[kk] * (theta[kk - 1] - eta)).sum();

        let nu_off = l.nu().start;
        for kk in 0..k {
            let nu = log_nu[kk].exp();
            value += -0.5 * eps[kk] * eps[kk] - LN_SQRT_2PI;
            grad[kk] = adj[kk] * nu - eps[kk];
            // Gam(1,1) prior on ν with the log ν Jacobian
            value += -nu + log_nu[kk];
            grad[nu_off + kk] = adj[kk] * nu * eps[kk] - nu + 1.0;
        }

        value += -0.5 * eta * eta - LN_SQRT_2PI;
        g_eta -= eta;

        let sigma = self.prior.sigma;
        for j in 0..p {
            let z = beta[j] / sigma;
            value += -0.5 * z * z - sigma.ln() - LN_SQRT_2PI;
            g_beta[j] -= beta[j] / (sigma * sigma);
        }
        // β_j = b_j / s_j and η = η' − Σ x̄_j b_j / s_j
        for (j, i) in l.beta().enumerate() {
            grad[i] = (g_beta[j] - self.mean[j] * g_eta) / self.scale[j];
        }
        grad[l.eta()] = g_eta;

        if let Some(ri) = l.rho() {
            let r = v[ri];
            value += 0.75f64.ln() + 2.0 * crate::hazard_model::log1m_tanh2(r);
            grad[ri] = (1.0 - rho * rho) * g_rho - 4.0 * rho;
        }
        value
    }
}
