//! Log posterior and its analytic gradient in unconstrained coordinates.

use super::likelihood::SurvivalData;
use super::params::{log1m_tanh2, Layout, PriorConfig};
use super::prior::{log_normal_density, process_means};
use super::HazardError;

/// Posterior density over the unconstrained parameter vector. Without data it
/// is the prior (pushed through the same transform).
#[derive(Debug, Clone)]
pub struct HazardTarget {
    pub layout: Layout,
    pub prior: PriorConfig,
    pub data: Option<SurvivalData>,
}

impl HazardTarget {
    pub fn new(data: SurvivalData, prior: PriorConfig) -> Result<Self, HazardError> {
        prior.validate()?;
        if data.k() != prior.k {
            return Err(HazardError::Dimension(format!(
                "partition has {} intervals, prior config says K={}",
                data.k(),
                prior.k
            )));
        }
        Ok(HazardTarget {
            layout: Layout::new(prior.k, data.p(), prior.model_kind),
            prior,
            data: Some(data),
        })
    }

    /// Prior-only target with `p` coefficients.
    pub fn prior_only(p: usize, prior: PriorConfig) -> Result<Self, HazardError> {
        prior.validate()?;
        Ok(HazardTarget {
            layout: Layout::new(prior.k, p, prior.model_kind),
            prior,
            data: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Log posterior (up to a constant) at `u`, writing the gradient into
    /// `grad`. May return a non-finite value far out in the tails.
    pub fn log_density_and_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        debug_assert_eq!(u.len(), l.dim());
        grad.iter_mut().for_each(|g| *g = 0.0);

        let theta = &u[l.theta()];
        let beta = &u[l.beta()];
        let eta = u[l.eta()];
        let (rho, r) = match l.rho() {
            Some(i) => (u[i].tanh(), u[i]),
            None => (0.0, 0.0),
        };
        let log_nu = &u[l.nu()];

        let mut value = 0.0;
        if let Some(data) = &self.data {
            let (gt, rest) = grad.split_at_mut(l.k);
            value += data.value_and_grad(theta, beta, gt, &mut rest[..l.p]);
        }

        let var = self.prior.sigma * self.prior.sigma;
        for (j, &b) in beta.iter().enumerate() {
            value += log_normal_density(b, 0.0, self.prior.sigma);
            grad[l.k + j] -= b / var;
        }

        // process term; e_k = (θ̃_k − m_k)/ν_k²
        let mut e = vec![0.0; l.k];
        let nu_off = l.nu().start;
        let mut rho_sum = 0.0;
        for (kk, m) in process_means(theta, eta, rho).enumerate() {
            let nu = log_nu[kk].exp();
            let z = (theta[kk] - m) / nu;
            value += -0.5 * z * z - log_nu[kk] - 0.918_938_533_204_672_8;
            e[kk] = z / nu;
            // prior Gam(1,1) on ν plus the log ν Jacobian
            value += -nu + log_nu[kk];
            grad[nu_off + kk] += z * z - nu;
            if kk > 0 {
                rho_sum += e[kk] * (theta[kk - 1] - eta);
            }
        }
        for kk in 0..l.k {
            grad[kk] -= e[kk];
            if kk + 1 < l.k {
                grad[kk] += rho * e[kk + 1];
            }
        }
        let e_tail: f64 = e.iter().skip(1).sum();
        let eta_off = l.eta();
        grad[eta_off] += e.first().copied().unwrap_or(0.0) + (1.0 - rho) * e_tail;

        value += log_normal_density(eta, 0.0, 1.0);
        grad[eta_off] -= eta;

        if let Some(ri) = l.rho() {
            // scaled Beta(2,2) density plus d ρ / d atanh ρ, each log(1 − ρ²)
            let lsech2 = log1m_tanh2(r);
            value += 0.75f64.ln() + 2.0 * lsech2;
            grad[ri] += (1.0 - rho * rho) * rho_sum - 4.0 * rho;
        }
        value
    }
}

/// Log posterior with Jacobian and its gradient at unconstrained `u`.
pub fn log_posterior_grad(
    u: &[f64],
    data: &SurvivalData,
    config: &PriorConfig,
) -> Result<(f64, Vec<f64>), HazardError> {
    let target = HazardTarget::new(data.clone(), *config)?;
    if u.len() != target.dim() {
        return Err(HazardError::Dimension(format!(
            "expected {} unconstrained values, got {}",
            target.dim(),
            u.len()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(HazardError::NonFinite);
    }
    let mut grad = vec![0.0; target.dim()];
    let v = target.log_density_and_grad(u, &mut grad);
    if !v.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(HazardError::NonFinite);
    }
    Ok((v, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard_model::ModelKind;
    use crate::design::DesignMatrix;
    use crate::hazard_model::{log_prior, make_partition};
    use approx::assert_relative_eq;

    fn small_data() -> SurvivalData {
        let y = vec![0.5, 1.7, 3.2, 4.0, 2.2, 0.1, 3.9];
        let delta = vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let x = vec![0.0, 1.2, 1.0, -0.3, 1.0, 0.4, 0.0, 2.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.5];
        let design = DesignMatrix::from_matrix(vec!["A".into(), "x".into()], x, y, delta);
        SurvivalData::new(design, make_partition(4.0, 4).unwrap()).unwrap()
    }

    #[test]
    fn value_is_sum_of_parts() {
        let data = small_data();
        for kind in [ModelKind::Ar1, ModelKind::Independent] {
            let cfg = PriorConfig { model_kind: kind, sigma: 3.0, k: 4 };
            let target = HazardTarget::new(data.clone(), cfg).unwrap();
            let u: Vec<f64> = (0..target.dim()).map(|i| 0.1 * (i as f64).sin() - 0.5).collect();
            let (v, _) = log_posterior_grad(&u, &data, &cfg).unwrap();
            let (state, jac) = target.layout.from_unconstrained(&u).unwrap();
            let ll = data.log_likelihood(&state.theta_tilde, &state.beta);
            assert_relative_eq!(v, ll + log_prior(&state, &cfg) + jac, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_design_beta_gradient_is_prior_only() {
        let y = vec![1.0, 2.0, 3.0];
        let design = DesignMatrix::from_matrix(vec!["A".into()], vec![0.0; 3], y, vec![1.0, 0.0, 1.0]);
        let data = SurvivalData::new(design, make_partition(3.0, 3).unwrap()).unwrap();
        let cfg = PriorConfig { model_kind: ModelKind::Independent, sigma: 3.0, k: 3 };
        let target = HazardTarget::new(data.clone(), cfg).unwrap();
        let mut u = vec![0.0; target.dim()];
        let bi = target.layout.beta().start;
        u[bi] = 1.7;
        let (_, g) = log_posterior_grad(&u, &data, &cfg).unwrap();
        assert_eq!(g[bi], -1.7 / 9.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        let data = small_data();
        let cfg = PriorConfig { model_kind: ModelKind::Ar1, sigma: 3.0, k: 4 };
        let mut u = vec![0.0; 2 * 4 + 2 + 2];
        u[3] = f64::INFINITY;
        assert!(matches!(log_posterior_grad(&u, &data, &cfg), Err(HazardError::NonFinite)));
    }
}
