use thiserror::Error;

use survcausal::diagnostics::DiagnosticsError;
use survcausal::freq_oracle::MleError;
use survcausal::gcomp::GcompError;
use survcausal::sampler::SamplerError;
use survcausal::{DatasetError, DesignError, FormulaError, HazardError};

/// Error kinds, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// 1 usage, 2 data or validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(format!("dataset: {e}"))
    }
}

impl From<FormulaError> for CliError {
    fn from(e: FormulaError) -> Self {
        CliError::Data(format!("formula: {e}"))
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        CliError::Data(format!("design: {e}"))
    }
}

impl From<HazardError> for CliError {
    fn from(e: HazardError) -> Self {
        match e {
            HazardError::NonFinite => CliError::Numerical(format!("hazard model: {e}")),
            _ => CliError::Data(format!("hazard model: {e}")),
        }
    }
}

fn sampler_is_numerical(e: &SamplerError) -> bool {
    match e {
        SamplerError::InitFailed | SamplerError::TooManyDivergences { .. } => true,
        SamplerError::Hazard(HazardError::NonFinite) => true,
        SamplerError::Chain { source, .. } => sampler_is_numerical(source),
        _ => false,
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        let msg = format!("sampler: {e}");
        if sampler_is_numerical(&e) {
            CliError::Numerical(msg)
        } else {
            CliError::Data(msg)
        }
    }
}

impl From<GcompError> for CliError {
    fn from(e: GcompError) -> Self {
        CliError::Data(format!("gcomp: {e}"))
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::ZeroWithinVariance(_) => CliError::Numerical(format!("diagnostics: {e}")),
            _ => CliError::Data(format!("diagnostics: {e}")),
        }
    }
}

impl From<MleError> for CliError {
    fn from(e: MleError) -> Self {
        match e {
            MleError::NoEvents | MleError::Io(_) => CliError::Data(format!("mle: {e}")),
            _ => CliError::Numerical(format!("mle: {e}")),
        }
    }
}
