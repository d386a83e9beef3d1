//! Posterior g-computation of marginal survival curves and the average
//! treatment effect Ψ(t) = P(T¹ > t) − P(T⁰ > t).
//!
//! For every posterior draw m a fresh Bayesian-bootstrap weight vector π^(m)
//! is drawn over the observed covariate rows. Each subject is then
//! simulated B times under both treatment values by inverting the
//! piecewise-linear cumulative hazard, and the per-subject survival curves
//! are averaged with π^(m).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::DesignMatrix;
use crate::hazard_model::{cum_base_hazard_at_endpoints, Partition};
use crate::rng::{self, Purpose};
use crate::sampler::HazardPosterior;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcompError {
    #[error(
        "evaluation time {time} is beyond the maximum observed time {horizon}; \
         survival cannot be estimated past the last follow-up"
    )]
    BeyondHorizon { time: f64, horizon: f64 },
    #[error("evaluation time {0} is negative or not finite")]
    BadTime(f64),
    #[error("reference level must be 0 or 1, got {0}")]
    BadReference(u8),
    #[error("number of simulations B must be at least 1")]
    BadSimulationCount,
    #[error("posterior has no draws")]
    NoDraws,
    #[error("design does not match the posterior: {0}")]
    Mismatch(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Bayesian-bootstrap weights over the n observed covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BBWeights {
    pub pi: Vec<f64>,
}

/// Dirichlet(1, …, 1) weights: n unit exponentials normalized by their sum.
pub fn draw_bb_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BBWeights {
    assert!(n >= 1, "need at least one subject");
    let mut pi: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    BBWeights { pi }
}

/// Cumulative baseline hazard on the partition grid for one draw, ready for
/// inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct CumHazard<'a> {
    partition: &'a Partition,
    hazards: Vec<f64>,
    /// Λ₀ at the K + 1 endpoints.
    cum: Vec<f64>,
}

impl<'a> CumHazard<'a> {
    pub fn new(hazards: Vec<f64>, partition: &'a Partition) -> Self {
        let cum = cum_base_hazard_at_endpoints(&hazards, partition);
        CumHazard { partition, hazards, cum }
    }

    /// Time returned for subjects still event-free at the horizon.
    pub fn sentinel(&self) -> f64 {
        self.partition.horizon() + self.partition.width
    }

    /// Λ₀(t) for t within the horizon.
    pub fn at(&self, t: f64) -> f64 {
        let k = match self.partition.interval_of(t) {
            Some(k) => k,
            None => return 0.0,
        };
        self.cum[k - 1] + self.hazards[k - 1] * (t - self.partition.endpoints[k - 1])
    }

    /// Smallest t with Λ₀(t) = `target`, or the sentinel if Λ₀(τ_K) < target.
    pub fn invert(&self, target: f64) -> f64 {
        let k_max = self.hazards.len();
        if target > self.cum[k_max] {
            return self.sentinel();
        }
        // first endpoint index j ≥ 1 with cum[j] ≥ target
        let j = self.cum[1..].partition_point(|&c| c < target) + 1;
        let j = j.min(k_max);
        let h = self.hazards[j - 1];
        let lo = self.partition.endpoints[j - 1];
        if h > 0.0 {
            (lo + (target - self.cum[j - 1]) / h).min(self.partition.endpoints[j])
        } else {
            lo
        }
    }
}

/// B event times for one subject with linear predictor `lp`: Λ(t) =
/// exp(lp)·Λ₀(t) is inverted at B unit-exponential thresholds.
pub fn simulate_event_times<R: Rng + ?Sized>(
    cum: &CumHazard<'_>,
    lp: f64,
    b: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(b);
    simulate_into(cum, lp, b, rng, &mut out);
    out
}

fn simulate_into<R: Rng + ?Sized>(cum: &CumHazard<'_>, lp: f64, b: usize, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    let w = lp.exp();
    for _ in 0..b {
        let e: f64 = rng.sample(Exp1);
        out.push(cum.invert(e / w));
    }
}

/// Fraction of `sim_times` strictly greater than each grid point. All grid
/// points share the same simulations, so the curve is nonincreasing in t.
pub fn conditional_survival(sim_times: &[f64], grid: &[f64]) -> Vec<f64> {
    let order = sorted_order(grid);
    let sorted: Vec<f64> = order.iter().map(|&j| grid[j]).collect();
    let mut out = vec![0.0; grid.len()];
    survival_counts(sim_times, &sorted, &order, &mut out);
    out
}

fn sorted_order(grid: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    order
}

/// Writes P̂(T > t) into `out` (in original grid order).
fn survival_counts(sim_times: &[f64], sorted_grid: &[f64], order: &[usize], out: &mut [f64]) {
    let t = sorted_grid.len();
    // hist[c]: simulations exceeding exactly the c smallest grid points
    let mut hist = vec![0usize; t + 1];
    for &s in sim_times {
        hist[sorted_grid.partition_point(|&g| g < s)] += 1;
    }
    let b = sim_times.len() as f64;
    let mut above = 0usize;
    for j in (0..t).rev() {
        above += hist[j + 1];
        out[order[j]] = above as f64 / b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSource {
    Midpoints,
    User,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcompConfig {
    pub ref_level: u8,
    /// Simulations per subject, arm and draw.
    pub b: usize,
    /// Evaluation times; partition midpoints when absent.
    pub grid: Option<Vec<f64>>,
    pub seed: u64,
    /// Draw Bayesian-bootstrap weights; when false every subject gets 1/n.
    pub bayesian_bootstrap: bool,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl Default for GcompConfig {
    fn default() -> Self {
        GcompConfig {
            ref_level: 0,
            b: 1000,
            grid: None,
            seed: 1,
            bayesian_bootstrap: true,
            threads: 0,
        }
    }
}

/// Draws of the marginal survival curves and the ATE, M rows × T columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GcompResult {
    pub times: Vec<f64>,
    pub surv_ref: Vec<Vec<f64>>,
    pub surv_trt: Vec<Vec<f64>>,
    /// `surv_trt − surv_ref`.
    pub ate: Vec<Vec<f64>>,
    /// Chain index of each row, copied from the posterior.
    pub chain: Vec<usize>,
    pub ref_level: u8,
    pub b: usize,
    pub grid_source: GridSource,
}

impl GcompResult {
    /// ATE rows of one chain.
    pub fn chain_ate(&self, chain: usize) -> Vec<Vec<f64>> {
        self.ate
            .iter()
            .zip(&self.chain)
            .filter(|(_, &c)| c == chain)
            .map(|(r, _)| r.clone())
            .collect()
    }
}

/// Checks `grid` against the horizon and returns it with its source.
pub fn resolve_grid(grid: Option<&[f64]>, partition: &Partition) -> Result<(Vec<f64>, GridSource), GcompError> {
    let horizon = partition.horizon();
    match grid {
        None => Ok((partition.midpoints.clone(), GridSource::Midpoints)),
        Some(g) => {
            for &t in g {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(GcompError::BadTime(t));
                }
                if t > horizon {
                    return Err(GcompError::BeyondHorizon { time: t, horizon });
                }
            }
            Ok((g.to_vec(), GridSource::User))
        }
    }
}

struct Prepared {
    times: Vec<f64>,
    source: GridSource,
    /// Designs under A = 0 and A = 1.
    arms: [DesignMatrix; 2],
}

fn prepare(posterior: &HazardPosterior, design: &DesignMatrix, cfg: &GcompConfig) -> Result<Prepared, GcompError> {
    if cfg.ref_level > 1 {
        return Err(GcompError::BadReference(cfg.ref_level));
    }
    if cfg.b == 0 {
        return Err(GcompError::BadSimulationCount);
    }
    if posterior.is_empty() {
        return Err(GcompError::NoDraws);
    }
    if design.names != posterior.term_names {
        return Err(GcompError::Mismatch(format!(
            "design terms {:?} vs posterior terms {:?}",
            design.names, posterior.term_names
        )));
    }
    if design.treat_col != posterior.treat_col {
        return Err(GcompError::Mismatch(format!(
            "treatment `{}` vs `{}`",
            design.treat_col, posterior.treat_col
        )));
    }
    let (times, source) = resolve_grid(cfg.grid.as_deref(), &posterior.partition)?;
    Ok(Prepared {
        times,
        source,
        arms: [design.intervene(0.0), design.intervene(1.0)],
    })
}

fn run_draws<F>(posterior: &HazardPosterior, cfg: &GcompConfig, prep: Prepared, per_draw: F) -> Result<GcompResult, GcompError>
where
    F: Fn(usize, &[f64], &mut ChaCha8Rng, &[DesignMatrix; 2], &[f64]) -> [Vec<f64>; 2] + Sync,
{
    let n = prep.arms[0].n;
    let compute = |m: usize| {
        let mut rng = rng::stream(cfg.seed, Purpose::Gcomp, m as u64);
        let pi = if cfg.bayesian_bootstrap {
            draw_bb_weights(n, &mut rng).pi
        } else {
            vec![1.0 / n as f64; n]
        };
        let [p0, p1] = per_draw(m, &pi, &mut rng, &prep.arms, &prep.times);
        if cfg.ref_level == 0 {
            (p0, p1)
        } else {
            (p1, p0)
        }
    };
    let m_total = posterior.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = if cfg.threads == 0 {
        (0..m_total).into_par_iter().map(compute).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| GcompError::Threads(e.to_string()))?
            .install(|| (0..m_total).into_par_iter().map(compute).collect())
    };
    let (surv_ref, surv_trt): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let ate = surv_ref
        .iter()
        .zip(&surv_trt)
        .map(|(r, t): (&Vec<f64>, &Vec<f64>)| t.iter().zip(r).map(|(a, b)| a - b).collect())
        .collect();
    Ok(GcompResult {
        times: prep.times,
        surv_ref,
        surv_trt,
        ate,
        chain: posterior.chain.clone(),
        ref_level: cfg.ref_level,
        b: cfg.b,
        grid_source: prep.source,
    })
}

/// Simulation-based g-computation over every posterior draw. `design` must
/// be the design the posterior was fitted on. Each draw m uses its own
/// random stream, so results do not depend on the thread count.
pub fn gcompute(posterior: &HazardPosterior, design: &DesignMatrix, cfg: &GcompConfig) -> Result<GcompResult, GcompError> {
    let prep = prepare(posterior, design, cfg)?;
    let order = sorted_order(&prep.times);
    let sorted: Vec<f64> = order.iter().map(|&j| prep.times[j]).collect();
    let b = cfg.b;
    run_draws(posterior, cfg, prep, |m, pi, rng, arms, times| {
        let state = posterior.state(m);
        let cum = CumHazard::new(state.hazards(), &posterior.partition);
        let t = times.len();
        let mut sims = Vec::with_capacity(b);
        let mut subject = vec![0.0; t];
        let mut arm_curves = [vec![0.0; t], vec![0.0; t]];
        for i in 0..pi.len() {
            for (a, arm) in arms.iter().enumerate() {
                let lp: f64 = arm.row(i).iter().zip(&state.beta).map(|(x, bb)| x * bb).sum();
                simulate_into(&cum, lp, b, rng, &mut sims);
                survival_counts(&sims, &sorted, &order, &mut subject);
                for (acc, s) in arm_curves[a].iter_mut().zip(&subject) {
                    *acc += pi[i] * s;
                }
            }
        }
        arm_curves
    })
}

/// Same estimand with the per-subject survival computed exactly as
/// exp(−exp(x'β)Λ₀(t)) instead of by simulation. Uses the same weight
/// streams as [`gcompute`].
pub fn gcompute_exact(posterior: &HazardPosterior, design: &DesignMatrix, cfg: &GcompConfig) -> Result<GcompResult, GcompError> {
    let prep = prepare(posterior, design, cfg)?;
    run_draws(posterior, cfg, prep, |m, pi, _rng, arms, times| {
        let state = posterior.state(m);
        let cum = CumHazard::new(state.hazards(), &posterior.partition);
        let lambda0: Vec<f64> = times.iter().map(|&t| cum.at(t)).collect();
        let mut arm_curves = [vec![0.0; times.len()], vec![0.0; times.len()]];
        for i in 0..pi.len() {
            for (a, arm) in arms.iter().enumerate() {
                let lp: f64 = arm.row(i).iter().zip(&state.beta).map(|(x, bb)| x * bb).sum();
                let w = lp.exp();
                for (acc, l0) in arm_curves[a].iter_mut().zip(&lambda0) {
                    *acc += pi[i] * (-w * l0).exp();
                }
            }
        }
        arm_curves
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard_model::make_partition;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_weight() {
        assert_eq!(draw_bb_weights(1, &mut rng(1)).pi, vec![1.0]);
    }

    #[test]
    fn weights_sum_to_one() {
        let w = draw_bb_weights(137, &mut rng(2));
        assert!((w.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.pi.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn counting_examples() {
        assert_eq!(conditional_survival(&[1.0, 2.0, 3.0, 4.0], &[2.5]), vec![0.5]);
        assert_eq!(conditional_survival(&[5.0; 3], &[1.0, 2.0, 4.9]), vec![1.0; 3]);
        // ties: T > t is strict
        assert_eq!(conditional_survival(&[1.0, 2.0], &[1.0, 2.0, 0.0]), vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn unsorted_grid_matches_direct_count() {
        let sims = [0.3, 2.2, 1.1, 5.0, 0.9, 3.3];
        let grid = [3.0, 0.5, 2.2, 1.0];
        let direct: Vec<f64> = grid
            .iter()
            .map(|&g| sims.iter().filter(|&&s| s > g).count() as f64 / sims.len() as f64)
            .collect();
        assert_eq!(conditional_survival(&sims, &grid), direct);
    }

    #[test]
    fn inversion_round_trip() {
        let part = make_partition(10.0, 5).unwrap();
        let cum = CumHazard::new(vec![0.1, 0.0, 0.3, 0.2, 0.05], &part);
        for &t in &[0.5, 1.9, 4.1, 5.5, 7.2, 9.9] {
            let l = cum.at(t);
            if l > cum.at(t - 1e-9) {
                assert_relative_eq!(cum.invert(l), t, epsilon = 1e-9);
            }
        }
        assert_eq!(cum.invert(10.0), cum.sentinel());
        // flat interval: earliest time reaching the level
        assert_relative_eq!(cum.invert(cum.at(2.0)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn beyond_horizon_rejected() {
        let part = make_partition(999.0, 100).unwrap();
        let err = resolve_grid(Some(&[365.0, 1200.0]), &part).unwrap_err();
        assert_eq!(err, GcompError::BeyondHorizon { time: 1200.0, horizon: 999.0 });
        assert!(err.to_string().contains("999"));
        let (g, src) = resolve_grid(None, &part).unwrap();
        assert_eq!(src, GridSource::Midpoints);
        assert_relative_eq!(g[0], 4.995, epsilon = 1e-12);
        assert_relative_eq!(g[1], 14.985, epsilon = 1e-12);
    }
}
