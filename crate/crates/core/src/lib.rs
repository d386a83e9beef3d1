//! Bayesian piecewise-exponential hazard regression with smoothing priors,
//! sampled by Hamiltonian Monte Carlo, and posterior g-computation of
//! marginal survival curves and their difference under a binary treatment.

pub mod dataset;
pub mod design;
pub mod diagnostics;
pub mod formula;
pub mod freq_oracle;
pub mod gcomp;
pub mod hazard_model;
pub mod rng;
pub mod sampler;

pub use dataset::{load_csv, Dataset, DatasetError};
pub use design::{build_design, DesignError, DesignMatrix};
pub use formula::{parse_formula, FormulaError, FormulaSpec, Term};
pub use hazard_model::{HazardError, ModelKind, Partition, PriorConfig};
