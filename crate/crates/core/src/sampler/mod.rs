//! Posterior sampling of the hazard model.

pub mod hmc;
pub mod reparam;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::design::{build_design, DesignError, DesignMatrix};
use crate::formula::FormulaSpec;
use crate::hazard_model::{
    make_partition, HazardError, HazardTarget, Layout, ModelKind, ParameterState, Partition,
    PriorConfig, SurvivalData,
};
use crate::rng::{self, Purpose};
use hmc::{run_chain, ChainSettings, LogDensity};
use reparam::NonCentered;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("log posterior is not finite at any of 100 random initial points")]
    InitFailed,
    #[error(
        "divergence rate {rate:.3} exceeds 0.2 after warmup (step size {step_size:.3e}); \
         increase target_accept or reduce the step size"
    )]
    TooManyDivergences { rate: f64, step_size: f64 },
    #[error("chain {chain}: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<SamplerError>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub warmup: usize,
    /// Retained draws per chain.
    pub post_iter: usize,
    pub chains: usize,
    pub seed: u64,
    /// Leapfrog steps per trajectory.
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub init_jitter: f64,
    /// Worker threads for chain-level parallelism; 0 means one per chain.
    #[serde(default)]
    pub threads: usize,
    /// Adapt a diagonal metric during warmup.
    #[serde(default = "default_true")]
    pub adapt_metric: bool,
    /// Relative step-size jitter per transition.
    #[serde(default = "default_jitter")]
    pub step_jitter: f64,
}

fn default_jitter() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            warmup: 1000,
            post_iter: 1000,
            chains: 1,
            seed: 1,
            leapfrog_steps: 32,
            target_accept: 0.8,
            init_jitter: 1.0,
            threads: 0,
            adapt_metric: true,
            step_jitter: 0.2,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.into()));
        if self.warmup < 1 {
            return bad("warmup must be at least 1");
        }
        if self.post_iter < 1 {
            return bad("post_iter must be at least 1");
        }
        if self.chains < 1 {
            return bad("chains must be at least 1");
        }
        if self.leapfrog_steps < 1 {
            return bad("leapfrog_steps must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return bad("step_jitter must lie in [0, 1)");
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return bad("init_jitter must be non-negative");
        }
        Ok(())
    }

    fn settings(&self) -> ChainSettings {
        ChainSettings {
            warmup: self.warmup,
            draws: self.post_iter,
            steps: self.leapfrog_steps,
            target_accept: self.target_accept,
            init_jitter: self.init_jitter,
            max_divergence_rate: 0.2,
            adapt_metric: self.adapt_metric,
            step_jitter: self.step_jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub accept_rate: f64,
    pub mean_accept_prob: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
}

/// Retained posterior draws in constrained space, layout
/// `(θ̃_1..θ̃_K, β_1..β_p, η, [ρ], ν_1..ν_K)`, chains stacked in order.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardPosterior {
    pub draws: Vec<Vec<f64>>,
    /// Chain index of each row.
    pub chain: Vec<usize>,
    /// Post-warmup iteration (1-based) of each row.
    pub iter: Vec<usize>,
    pub partition: Partition,
    pub term_names: Vec<String>,
    pub treat_col: String,
    pub formula: String,
    pub model_kind: ModelKind,
    pub chain_stats: Vec<ChainStats>,
}

impl HazardPosterior {
    pub fn layout(&self) -> Layout {
        Layout::new(self.partition.k(), self.term_names.len(), self.model_kind)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn state(&self, m: usize) -> ParameterState {
        self.layout()
            .from_constrained(&self.draws[m])
            .expect("draws respect the layout")
    }

    pub fn column_names(&self) -> Vec<String> {
        self.layout().names(&self.term_names)
    }

    pub fn divergences(&self) -> usize {
        self.chain_stats.iter().map(|c| c.divergences).sum()
    }

    pub fn accept_rate(&self) -> f64 {
        let n = self.chain_stats.len().max(1) as f64;
        self.chain_stats.iter().map(|c| c.accept_rate).sum::<f64>() / n
    }

    /// Rows belonging to one chain.
    pub fn chain_draws(&self, chain: usize) -> Vec<&[f64]> {
        self.draws
            .iter()
            .zip(&self.chain)
            .filter(|(_, &c)| c == chain)
            .map(|(d, _)| d.as_slice())
            .collect()
    }
}

/// Runs every chain of `target`; chain c draws from stream `(seed, c)`.
pub fn sample_target<T: LogDensity>(
    target: &T,
    cfg: &SamplerConfig,
    inv_metric: &[f64],
) -> Result<Vec<hmc::ChainOutput>, SamplerError> {
    cfg.validate()?;
    let settings = cfg.settings();
    let run = |c: usize| {
        let mut rng = rng::stream(cfg.seed, Purpose::Sampler, c as u64);
        run_chain(target, &settings, inv_metric, &mut rng).map_err(|e| SamplerError::Chain {
            chain: c,
            source: Box::new(e),
        })
    };
    let threads = if cfg.threads == 0 { cfg.chains } else { cfg.threads };
    if threads <= 1 || cfg.chains == 1 {
        return (0..cfg.chains).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SamplerError::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..cfg.chains).into_par_iter().map(run).collect())
}

/// Samples the posterior of the hazard model for `data` under `spec`.
pub fn sample(
    data: &Dataset,
    spec: &FormulaSpec,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<HazardPosterior, SamplerError> {
    let design = build_design(data, spec)?;
    sample_design(design, &spec.to_string(), prior, cfg)
}

/// As [`sample`], starting from an already expanded design.
pub fn sample_design(
    design: DesignMatrix,
    formula: &str,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<HazardPosterior, SamplerError> {
    prior.validate()?;
    let max_time = design.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let partition = make_partition(max_time, prior.k)?;
    let term_names = design.names.clone();
    let treat_col = design.treat_col.clone();
    let data = SurvivalData::new(design, partition.clone())?;
    let target = HazardTarget::new(data, *prior)?;
    let meta = Meta { partition, term_names, treat_col, formula: formula.to_string() };
    run_target(&target, meta, prior, cfg)
}

/// Samples the prior alone (no likelihood) for terms named `term_names`.
pub fn sample_prior(
    term_names: Vec<String>,
    partition: Partition,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<HazardPosterior, SamplerError> {
    let target = HazardTarget::prior_only(term_names.len(), *prior)?;
    if partition.k() != prior.k {
        return Err(SamplerError::Config(format!(
            "partition has {} intervals, prior config says K={}",
            partition.k(),
            prior.k
        )));
    }
    let treat_col = term_names.first().cloned().unwrap_or_default();
    let meta = Meta { partition, term_names, treat_col, formula: String::new() };
    run_target(&target, meta, prior, cfg)
}

struct Meta {
    partition: Partition,
    term_names: Vec<String>,
    treat_col: String,
    formula: String,
}

fn run_target(
    target: &HazardTarget,
    meta: Meta,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<HazardPosterior, SamplerError> {
    let layout = target.layout;
    let coords = NonCentered::new(target);
    let inv_metric = vec![1.0; layout.dim()];
    let chains = sample_target(&coords, cfg, &inv_metric)?;

    let mut draws = Vec::with_capacity(cfg.chains * cfg.post_iter);
    let (mut chain_ix, mut iter_ix) = (Vec::new(), Vec::new());
    let mut stats = Vec::new();
    for (c, out) in chains.into_iter().enumerate() {
        for (m, v) in out.draws.iter().enumerate() {
            let (state, _) = layout.from_unconstrained(&coords.to_model(v))?;
            draws.push(layout.to_constrained(&state));
            chain_ix.push(c);
            iter_ix.push(m + 1);
        }
        stats.push(ChainStats {
            step_size: out.step_size,
            accept_rate: out.accept_rate,
            mean_accept_prob: out.mean_accept_prob,
            divergences: out.divergences,
            warmup_divergences: out.warmup_divergences,
        });
    }
    Ok(HazardPosterior {
        draws,
        chain: chain_ix,
        iter: iter_ix,
        partition: meta.partition,
        term_names: meta.term_names,
        treat_col: meta.treat_col,
        formula: meta.formula,
        model_kind: prior.model_kind,
        chain_stats: stats,
    })
}
