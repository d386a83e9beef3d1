use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HazardError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// ρ ≡ 0: each log-hazard is shrunk independently toward η.
    Independent,
    /// AR(1) smoothing across adjacent intervals with a scaled Beta(2,2) prior on ρ.
    Ar1,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Independent => "independent",
            ModelKind::Ar1 => "ar1",
        })
    }
}

impl FromStr for ModelKind {
    type Err = HazardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "independent" | "ind" => Ok(ModelKind::Independent),
            "ar1" => Ok(ModelKind::Ar1),
            other => Err(HazardError::BadConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub model_kind: ModelKind,
    /// Prior SD of every regression coefficient.
    pub sigma: f64,
    /// Number of partition intervals.
    pub k: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            model_kind: ModelKind::Ar1,
            sigma: 3.0,
            k: 100,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), HazardError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(HazardError::BadConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.k == 0 {
            return Err(HazardError::BadConfig("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// Log baseline hazard per interval.
    pub theta_tilde: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta: f64,
    /// Always 0 for the independent model.
    pub rho: f64,
    pub nu: Vec<f64>,
}

impl ParameterState {
    pub fn hazards(&self) -> Vec<f64> {
        self.theta_tilde.iter().map(|t| t.exp()).collect()
    }
}

/// Offsets of each block in the flat parameter vector
/// `(θ̃_1..θ̃_K, β_1..β_p, η, [ρ], ν_1..ν_K)`. In unconstrained space the
/// ρ slot holds atanh ρ and the ν slots hold log ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub p: usize,
    pub kind: ModelKind,
}

impl Layout {
    pub fn new(k: usize, p: usize, kind: ModelKind) -> Self {
        Layout { k, p, kind }
    }

    pub fn has_rho(&self) -> bool {
        self.kind == ModelKind::Ar1
    }

    pub fn dim(&self) -> usize {
        2 * self.k + self.p + 1 + usize::from(self.has_rho())
    }

    pub fn theta(&self) -> std::ops::Range<usize> {
        0..self.k
    }

    pub fn beta(&self) -> std::ops::Range<usize> {
        self.k..self.k + self.p
    }

    pub fn eta(&self) -> usize {
        self.k + self.p
    }

    pub fn rho(&self) -> Option<usize> {
        self.has_rho().then_some(self.k + self.p + 1)
    }

    pub fn nu(&self) -> std::ops::Range<usize> {
        let start = self.k + self.p + 1 + usize::from(self.has_rho());
        start..start + self.k
    }

    /// Names of the constrained parameters in layout order.
    pub fn names(&self, term_names: &[String]) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.k).map(|k| format!("theta_{k}")).collect();
        v.extend(term_names.iter().cloned());
        v.push("eta".into());
        if self.has_rho() {
            v.push("rho".into());
        }
        v.extend((1..=self.k).map(|k| format!("nu_{k}")));
        v
    }

    pub fn check_state(&self, s: &ParameterState) -> Result<(), HazardError> {
        if s.theta_tilde.len() != self.k || s.nu.len() != self.k || s.beta.len() != self.p {
            return Err(HazardError::Dimension(format!(
                "state has K={}/{} and p={}, layout expects K={} and p={}",
                s.theta_tilde.len(),
                s.nu.len(),
                s.beta.len(),
                self.k,
                self.p
            )));
        }
        if !self.has_rho() && s.rho != 0.0 {
            return Err(HazardError::InvalidState("independent model requires rho = 0".into()));
        }
        if !(s.rho.abs() < 1.0) {
            return Err(HazardError::InvalidState(format!("|rho| must be < 1, got {}", s.rho)));
        }
        if let Some(v) = s.nu.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(HazardError::InvalidState(format!("nu must be positive, got {v}")));
        }
        let finite = s.theta_tilde.iter().chain(&s.beta).all(|x| x.is_finite()) && s.eta.is_finite();
        if !finite {
            return Err(HazardError::InvalidState("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Flat constrained vector (the draws-file row layout).
    pub fn to_constrained(&self, s: &ParameterState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend(&s.theta_tilde);
        v.extend(&s.beta);
        v.push(s.eta);
        if self.has_rho() {
            v.push(s.rho);
        }
        v.extend(&s.nu);
        v
    }

    pub fn from_constrained(&self, v: &[f64]) -> Result<ParameterState, HazardError> {
        if v.len() != self.dim() {
            return Err(HazardError::Dimension(format!(
                "expected {} values, got {}",
                self.dim(),
                v.len()
            )));
        }
        let s = ParameterState {
            theta_tilde: v[self.theta()].to_vec(),
            beta: v[self.beta()].to_vec(),
            eta: v[self.eta()],
            rho: self.rho().map_or(0.0, |r| v[r]),
            nu: v[self.nu()].to_vec(),
        };
        self.check_state(&s)?;
        Ok(s)
    }

    /// ν ↦ log ν, ρ ↦ atanh ρ, everything else identity.
    pub fn to_unconstrained(&self, s: &ParameterState) -> Result<Vec<f64>, HazardError> {
        self.check_state(s)?;
        let mut v = Vec::with_capacity(self.dim());
        v.extend(&s.theta_tilde);
        v.extend(&s.beta);
        v.push(s.eta);
        if self.has_rho() {
            v.push(s.rho.atanh());
        }
        v.extend(s.nu.iter().map(|x| x.ln()));
        Ok(v)
    }

    /// Inverse of [`Layout::to_unconstrained`]; also returns the log-Jacobian
    /// `Σ_k log ν_k + log(1 − ρ²)`.
    pub fn from_unconstrained(&self, u: &[f64]) -> Result<(ParameterState, f64), HazardError> {
        if u.len() != self.dim() {
            return Err(HazardError::Dimension(format!(
                "expected {} values, got {}",
                self.dim(),
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(HazardError::NonFinite);
        }
        let log_nu = &u[self.nu()];
        let (rho, rho_jac) = match self.rho() {
            Some(r) => {
                let rho = u[r].tanh();
                (rho, log1m_tanh2(u[r]))
            }
            None => (0.0, 0.0),
        };
        let s = ParameterState {
            theta_tilde: u[self.theta()].to_vec(),
            beta: u[self.beta()].to_vec(),
            eta: u[self.eta()],
            rho,
            nu: log_nu.iter().map(|x| x.exp()).collect(),
        };
        let log_jac = log_nu.iter().sum::<f64>() + rho_jac;
        Ok((s, log_jac))
    }
}

/// log(1 − tanh²(x)) computed without cancellation for large |x|.
pub(crate) fn log1m_tanh2(x: f64) -> f64 {
    // 1 − tanh² = sech² = 4 / (e^x + e^-x)²
    let a = x.abs();
    2.0 * std::f64::consts::LN_2 - 2.0 * a - 2.0 * (-2.0 * a).exp().ln_1p()
}
