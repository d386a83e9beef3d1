//! Fit configuration from flags and an optional flat JSON file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use survcausal::formula::Term;
use survcausal::sampler::SamplerConfig;
use survcausal::{parse_formula, ModelKind, PriorConfig};

use crate::error::CliError;

/// Flags of `fit`. The JSON config file uses the same names as keys.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    /// JSON file of flag-name keys; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model formula, e.g. `Surv(y,delta) ~ A + age`.
    #[arg(long)]
    pub formula: Option<String>,
    /// Time column; defaults to the formula response.
    #[arg(long)]
    pub time_col: Option<String>,
    /// Event column; defaults to the formula response.
    #[arg(long)]
    pub event_col: Option<String>,
    /// Binary treatment column; defaults to the first formula term.
    #[arg(long)]
    pub treat_col: Option<String>,
    /// Prior on the log-hazard levels: independent or ar1 [default: ar1].
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Number of partition intervals K [default: 100].
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Prior SD of the regression coefficients [default: 3].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Warmup iterations per chain [default: 1000].
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Retained draws per chain [default: 1000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Number of chains [default: 1].
    #[arg(long)]
    pub chains: Option<usize>,
    /// Base seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leapfrog steps per trajectory [default: 32].
    #[arg(long)]
    pub leapfrog_steps: Option<usize>,
    /// Target acceptance rate for step-size adaptation [default: 0.8].
    #[arg(long)]
    pub target_accept: Option<f64>,
    /// Worker threads [default: one per chain].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl FitArgs {
    /// Field-wise `self` over `file`.
    pub fn over(self, file: FitArgs) -> FitArgs {
        FitArgs {
            config: self.config,
            data: self.data.or(file.data),
            formula: self.formula.or(file.formula),
            time_col: self.time_col.or(file.time_col),
            event_col: self.event_col.or(file.event_col),
            treat_col: self.treat_col.or(file.treat_col),
            model: self.model.or(file.model),
            partitions: self.partitions.or(file.partitions),
            sigma: self.sigma.or(file.sigma),
            warmup: self.warmup.or(file.warmup),
            iters: self.iters.or(file.iters),
            chains: self.chains.or(file.chains),
            seed: self.seed.or(file.seed),
            leapfrog_steps: self.leapfrog_steps.or(file.leapfrog_steps),
            target_accept: self.target_accept.or(file.target_accept),
            threads: self.threads.or(file.threads),
            out_dir: self.out_dir.or(file.out_dir),
        }
    }

    /// Merges the config file, if any, and fills defaults.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let args = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let file: FitArgs = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                self.over(file)
            }
            None => self,
        };
        let data = args.data.ok_or_else(|| CliError::Usage("fit: --data is required".into()))?;
        let formula = args.formula.ok_or_else(|| CliError::Usage("fit: --formula is required".into()))?;
        let spec = parse_formula(&formula)?;
        let treat_col = match args.treat_col {
            Some(t) => t,
            None => match spec.terms.first() {
                Some(Term::MainEffect(v)) => v.clone(),
                _ => {
                    return Err(CliError::Usage(
                        "fit: --treat-col is required when the formula does not start with a main effect".into(),
                    ))
                }
            },
        };
        let prior = PriorConfig::default();
        let sampler = SamplerConfig::default();
        Ok(RunConfig {
            time_col: args.time_col.unwrap_or_else(|| spec.time_var.clone()),
            event_col: args.event_col.unwrap_or_else(|| spec.event_var.clone()),
            data,
            formula,
            treat_col,
            model_kind: args.model.unwrap_or(prior.model_kind),
            k: args.partitions.unwrap_or(prior.k),
            sigma: args.sigma.unwrap_or(prior.sigma),
            warmup: args.warmup.unwrap_or(sampler.warmup),
            post_iter: args.iters.unwrap_or(sampler.post_iter),
            chains: args.chains.unwrap_or(sampler.chains),
            seed: args.seed.unwrap_or(sampler.seed),
            leapfrog_steps: args.leapfrog_steps.unwrap_or(sampler.leapfrog_steps),
            target_accept: args.target_accept.unwrap_or(sampler.target_accept),
            threads: args.threads.unwrap_or(0),
            out_dir: args.out_dir.unwrap_or_else(|| PathBuf::from(".")),
        })
    }
}

/// Fully resolved `fit` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub formula: String,
    pub time_col: String,
    pub event_col: String,
    pub treat_col: String,
    pub model_kind: ModelKind,
    pub k: usize,
    pub sigma: f64,
    pub warmup: usize,
    pub post_iter: usize,
    pub chains: usize,
    pub seed: u64,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    /// 0 means one thread per chain.
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything but the data and formula.
    pub fn new(data: impl AsRef<Path>, formula: &str) -> Result<RunConfig, CliError> {
        FitArgs {
            data: Some(data.as_ref().to_path_buf()),
            formula: Some(formula.to_string()),
            ..Default::default()
        }
        .resolve()
    }

    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            model_kind: self.model_kind,
            sigma: self.sigma,
            k: self.k,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            warmup: self.warmup,
            post_iter: self.post_iter,
            chains: self.chains,
            seed: self.seed,
            leapfrog_steps: self.leapfrog_steps,
            target_accept: self.target_accept,
            threads: self.threads,
            ..SamplerConfig::default()
        }
    }
}
