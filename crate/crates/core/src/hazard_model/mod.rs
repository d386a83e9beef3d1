//! Piecewise-exponential hazard model: partition and person-time layout,
//! Poisson-form likelihood, smoothing priors and the unconstrained
//! parameterization used by the sampler.

mod likelihood;
mod params;
mod partition;
mod posterior;
mod prior;

use thiserror::Error;

pub use likelihood::{log_likelihood, SurvivalData};
pub use params::{Layout, ModelKind, ParameterState, PriorConfig};
pub(crate) use params::log1m_tanh2;
pub use partition::{
    cum_base_hazard, cum_base_hazard_at_endpoints, expand_person_time, make_partition, Partition,
    PersonTime,
};
pub use posterior::{log_posterior_grad, HazardTarget};
pub use prior::{
    log_normal_density, log_prior, log_process_density, scaled_beta22_cdf, scaled_beta22_density,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HazardError {
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("invalid prior configuration: {0}")]
    BadConfig(String),
    #[error("subject {index}: time {time} outside (0, {horizon}]")]
    TimeOutOfRange { index: usize, time: f64, horizon: f64 },
    #[error("time {time} is beyond the maximum observed time {horizon}")]
    BeyondHorizon { time: f64, horizon: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter state: {0}")]
    InvalidState(String),
    #[error("non-finite log posterior or gradient")]
    NonFinite,
}
