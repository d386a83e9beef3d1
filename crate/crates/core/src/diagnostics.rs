//! Posterior summaries and multi-chain convergence diagnostics.
//!
//! Quantiles use linear interpolation between order statistics
//! (Hyndman–Fan type 7, the R default): for sorted `x_0..x_{N-1}` and
//! probability p, `h = (N−1)p` and `q = x_⌊h⌋ + (h−⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋)`.
//!
//! The time-series standard error uses non-overlapping batch means with
//! batch size ⌊√M⌋ and is reported only when at least four batches fit.

use std::fmt;

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("chains have unequal shapes: {0}")]
    Shape(String),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("parameter `{0}` has zero within-chain variance")]
    ZeroWithinVariance(String),
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor n − 1.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Variance of the sample mean estimated by batch means, if ≥ 4 batches fit.
pub fn batch_means_var_of_mean(x: &[f64]) -> Option<f64> {
    let b = (x.len() as f64).sqrt().floor() as usize;
    if b == 0 {
        return None;
    }
    let a = x.len() / b;
    if a < 4 {
        return None;
    }
    let batch: Vec<f64> = x.chunks_exact(b).take(a).map(mean).collect();
    let grand = mean(&batch);
    let s2 = b as f64 * batch.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a as f64 - 1.0);
    Some(s2 / (a * b) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub naive_se: f64,
    pub ts_se: Option<f64>,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub probs: Vec<f64>,
    pub rows: Vec<SummaryRow>,
    pub chains: usize,
    pub draws_per_chain: usize,
}

/// Summarizes a list of chains, each a list of draws (rows) of Q parameters.
/// Pooled moments and quantiles treat all draws as one sample; the
/// time-series SE combines per-chain batch-means estimates.
pub fn summarize(
    chains: &[Vec<Vec<f64>>],
    names: &[String],
    probs: &[f64],
) -> Result<SummaryTable, DiagnosticsError> {
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(DiagnosticsError::BadProbability(p));
    }
    let total: usize = chains.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(DiagnosticsError::TooFewDraws { need: 2, got: total });
    }
    let q = names.len();
    for (c, ch) in chains.iter().enumerate() {
        if let Some(row) = ch.iter().find(|r| r.len() != q) {
            return Err(DiagnosticsError::Shape(format!(
                "chain {c} has a row of length {} but {q} names",
                row.len()
            )));
        }
    }
    let mut rows = Vec::with_capacity(q);
    for (j, name) in names.iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = chains
            .iter()
            .map(|ch| ch.iter().map(|r| r[j]).collect())
            .collect();
        let all: Vec<f64> = per_chain.iter().flatten().copied().collect();
        let m = mean(&all);
        let sd = variance(&all).max(0.0).sqrt();
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let ts_se = per_chain
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| {
                let w = c.len() as f64 / total as f64;
                batch_means_var_of_mean(c).map(|v| w * w * v)
            })
            .sum::<Option<f64>>()
            .map(f64::sqrt);
        rows.push(SummaryRow {
            name: name.clone(),
            mean: m,
            sd,
            naive_se: sd / (total as f64).sqrt(),
            ts_se,
            quantiles: probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect(),
        });
    }
    Ok(SummaryTable {
        probs: probs.to_vec(),
        rows,
        chains: chains.len(),
        draws_per_chain: chains.first().map_or(0, Vec::len),
    })
}

/// Column label of a quantile level, `0.025` → `2.5%`.
pub fn prob_label(p: f64) -> String {
    let pct = p * 100.0;
    let s = format!("{pct:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
        writeln!(f, "Number of chains = {}", self.chains)?;
        writeln!(f, "Sample size per chain = {}", self.draws_per_chain)?;
        writeln!(f)?;
        writeln!(f, "1. Empirical mean and standard deviation for each variable,")?;
        writeln!(f, "   plus standard error of the mean:")?;
        writeln!(f)?;
        writeln!(
            f,
            "{:w$} {:>12} {:>12} {:>12} {:>14}",
            "", "Mean", "SD", "Naive SE", "Time-series SE"
        )?;
        for r in &self.rows {
            let ts = r.ts_se.map_or_else(|| "NA".to_string(), |v| format!("{v:.6e}"));
            writeln!(
                f,
                "{:w$} {:>12.6} {:>12.6} {:>12.6e} {:>14}",
                r.name, r.mean, r.sd, r.naive_se, ts
            )?;
        }
        writeln!(f)?;
        writeln!(f, "2. Quantiles for each variable:")?;
        writeln!(f)?;
        write!(f, "{:w$}", "")?;
        for &p in &self.probs {
            write!(f, " {:>12}", prob_label(p))?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(f, "{:w$}", r.name)?;
            for q in &r.quantiles {
                write!(f, " {q:>12.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrfRow {
    pub name: String,
    pub point: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrfReport {
    pub rows: Vec<PsrfRow>,
    pub confidence: f64,
}

impl fmt::Display for PsrfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
        writeln!(f, "Potential scale reduction factors:")?;
        writeln!(f)?;
        writeln!(f, "{:w$} {:>10} {:>10}", "", "Point est.", "Upper C.I.")?;
        for r in &self.rows {
            writeln!(f, "{:w$} {:>10.3} {:>10.3}", r.name, r.point, r.upper)?;
        }
        Ok(())
    }
}

/// Covariance with divisor n − 1.
fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Gelman–Rubin potential scale reduction for one scalar parameter, with
/// the Brooks–Gelman degrees-of-freedom correction. Returns (point, upper)
/// where `upper` uses the `confidence` quantile of the F approximation.
pub fn psrf_scalar(chains: &[Vec<f64>], confidence: f64) -> Result<(f64, f64), DiagnosticsError> {
    let c = chains.len();
    if c < 2 {
        return Err(DiagnosticsError::TooFewChains(c));
    }
    let n = chains[0].len();
    if chains.iter().any(|ch| ch.len() != n) {
        return Err(DiagnosticsError::Shape("chains must have equal length".into()));
    }
    if n < 4 {
        return Err(DiagnosticsError::TooFewDraws { need: 4, got: n });
    }
    let (nf, cf) = (n as f64, c as f64);
    let s2: Vec<f64> = chains.iter().map(|ch| variance(ch)).collect();
    let xbar: Vec<f64> = chains.iter().map(|ch| mean(ch)).collect();
    let w = mean(&s2);
    if !(w > 0.0) {
        return Err(DiagnosticsError::ZeroWithinVariance(String::new()));
    }
    let b = nf * variance(&xbar);
    let muhat = mean(&xbar);
    let var_w = variance(&s2) / cf;
    let var_b = 2.0 * b * b / (cf - 1.0);
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let cov_wb = (nf / cf) * (covariance(&s2, &xbar2) - 2.0 * muhat * covariance(&s2, &xbar));
    let v = (nf - 1.0) * w / nf + (1.0 + 1.0 / cf) * b / nf;
    let var_v = ((nf - 1.0).powi(2) * var_w
        + (1.0 + 1.0 / cf).powi(2) * var_b
        + 2.0 * (nf - 1.0) * (1.0 + 1.0 / cf) * cov_wb)
        / (nf * nf);
    let df_v = 2.0 * v * v / var_v;
    let df_adj = if df_v.is_finite() { (df_v + 3.0) / (df_v + 1.0) } else { 1.0 };
    let b_df = cf - 1.0;
    let w_df = 2.0 * w * w / var_w;
    let r2_fixed = (nf - 1.0) / nf;
    let r2_random = (1.0 + 1.0 / cf) * (1.0 / nf) * (b / w);
    let q = (1.0 + confidence) / 2.0;
    let f_quantile = if w_df.is_finite() && w_df < 1e8 {
        FisherSnedecor::new(b_df, w_df).expect("positive d.f.").inverse_cdf(q)
    } else {
        // F(d1, ∞) is χ²(d1)/d1
        ChiSquared::new(b_df).expect("positive d.f.").inverse_cdf(q) / b_df
    };
    let point = (df_adj * (r2_fixed + r2_random)).sqrt();
    let upper = (df_adj * (r2_fixed + f_quantile * r2_random)).sqrt();
    Ok((point, upper))
}

/// PSRF for every parameter; `chains[c][m][j]` is draw m of parameter j in chain c.
pub fn psrf(chains: &[Vec<Vec<f64>>], names: &[String]) -> Result<PsrfReport, DiagnosticsError> {
    let confidence = 0.95;
    let mut rows = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = chains
            .iter()
            .map(|ch| {
                ch.iter()
                    .map(|r| r.get(j).copied().ok_or_else(|| DiagnosticsError::Shape(format!("row shorter than {} columns", names.len()))))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let (point, upper) = psrf_scalar(&per_chain, confidence).map_err(|e| match e {
            DiagnosticsError::ZeroWithinVariance(_) => DiagnosticsError::ZeroWithinVariance(name.clone()),
            e => e,
        })?;
        rows.push(PsrfRow { name: name.clone(), point, upper });
    }
    Ok(PsrfReport { rows, confidence })
}
