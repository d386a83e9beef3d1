//! Maximum-likelihood fit of the piecewise-constant hazard model.
//!
//! Newton–Raphson runs jointly over (θ̃, β) with the exact Hessian. The θ̃
//! block of the Hessian is diagonal, so each step only needs a p×p solve
//! of the Schur complement. Intervals without events have θ̂ → 0; a log
//! hazard falling below −20 is frozen and reported as exactly 0.

use std::io::Write;

use thiserror::Error;

use crate::hazard_model::{Partition, SurvivalData};

pub const MAX_ITER: usize = 200;
pub const GRAD_TOL: f64 = 1e-8;
const POLISH_TOL: f64 = 1e-13;
/// Log hazards below this are treated as zero hazards.
pub const FREEZE_BELOW: f64 = -20.0;
pub const SEPARATION_BOUND: f64 = 20.0;

#[derive(Debug, Error)]
pub enum MleError {
    #[error("no events: the hazard MLE is not defined")]
    NoEvents,
    #[error("Newton-Raphson did not converge in {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("coefficient `{term}` diverges ({value:.3}); the data are separated and the MLE is not finite")]
    Separation { term: String, value: f64 },
    #[error("non-finite log-likelihood during Newton-Raphson")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    /// Hazard levels θ̂_k, 0 for intervals whose log hazard was frozen.
    pub theta_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the gradient over non-frozen coordinates.
    pub max_grad_norm: f64,
    pub log_likelihood: f64,
}

/// Poisson-form log-likelihood at hazard levels `theta` (zeros allowed) and
/// coefficients `beta`. Agrees with [`SurvivalData::log_likelihood`] when
/// every hazard is positive.
pub fn poisson_log_likelihood(data: &SurvivalData, theta: &[f64], beta: &[f64]) -> f64 {
    let pt = &data.person_time;
    let width = pt.width;
    let mut prefix = vec![0.0];
    for h in theta {
        prefix.push(prefix.last().unwrap() + h);
    }
    let mut value = 0.0;
    for i in 0..data.n() {
        let lp: f64 = data.design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
        let ks = pt.k_star[i] - 1;
        let last = pt.last_exposure[i];
        let mu_last = lp.exp() * theta[ks] * last;
        if data.design.delta[i] == 1.0 {
            value += mu_last.ln();
        }
        value -= lp.exp() * (width * prefix[ks]) + mu_last;
    }
    value
}

struct Derivs {
    value: f64,
    g_theta: Vec<f64>,
    g_beta: Vec<f64>,
    /// −∂²/∂θ̃_k² (diagonal of the negated θ̃ block)
    d_theta: Vec<f64>,
    /// −∂²/∂θ̃_k∂β_j, K×p row-major
    c: Vec<f64>,
    /// −∂²/∂β∂β', p×p row-major
    b: Vec<f64>,
}

fn derivs(data: &SurvivalData, log_h: &[f64], frozen: &[bool], beta: &[f64]) -> Derivs {
    let (k, p) = (data.k(), data.p());
    let pt = &data.person_time;
    let h: Vec<f64> = log_h
        .iter()
        .zip(frozen)
        .map(|(t, &f)| if f { 0.0 } else { t.exp() })
        .collect();
    let mut g_theta = data.events_per_interval.clone();
    let mut g_beta = vec![0.0; p];
    let mut d_theta = vec![0.0; k];
    let mut c = vec![0.0; k * p];
    let mut b = vec![0.0; p * p];
    for i in 0..data.n() {
        let x = data.design.row(i);
        let w = x.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>().exp();
        let ks = pt.k_star[i];
        let mut s = 0.0;
        for kk in 0..ks {
            let e = if kk + 1 == ks { pt.last_exposure[i] } else { pt.width };
            let mu = w * h[kk] * e;
            s += mu;
            g_theta[kk] -= mu;
            d_theta[kk] += mu;
            for j in 0..p {
                c[kk * p + j] += mu * x[j];
            }
        }
        let resid = data.design.delta[i] - s;
        for j in 0..p {
            g_beta[j] += resid * x[j];
            for l in 0..p {
                b[j * p + l] += s * x[j] * x[l];
            }
        }
    }
    for kk in 0..k {
        if frozen[kk] {
            g_theta[kk] = 0.0;
        }
    }
    let value = poisson_log_likelihood(data, &h, beta);
    Derivs { value, g_theta, g_beta, d_theta, c, b }
}

/// Solves the symmetric positive-definite system `a x = rhs` (a is n×n
/// row-major) by Cholesky factorization; None if not positive definite.
fn cholesky_solve(a: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for m in 0..j {
                s -= l[i * n + m] * l[j * n + m];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        for m in 0..i {
            y[i] -= l[i * n + m] * y[m];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for m in i + 1..n {
            y[i] -= l[m * n + i] * y[m];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

/// Newton direction from the block-structured negative Hessian.
fn newton_direction(dv: &Derivs, frozen: &[bool]) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = dv.d_theta.len();
    let p = dv.g_beta.len();
    let active = |kk: usize| !frozen[kk] && dv.d_theta[kk] > 0.0;
    // Schur complement S = B − C'D⁻¹C and reduced gradient g_β − C'D⁻¹g_θ
    let mut s = dv.b.clone();
    let mut rhs = dv.g_beta.clone();
    for kk in (0..k).filter(|&kk| active(kk)) {
        let dinv = 1.0 / dv.d_theta[kk];
        for j in 0..p {
            let cj = dv.c[kk * p + j];
            rhs[j] -= cj * dinv * dv.g_theta[kk];
            for l in 0..p {
                s[j * p + l] -= cj * dinv * dv.c[kk * p + l];
            }
        }
    }
    let d_beta = if p == 0 { vec![] } else { cholesky_solve(&s, &rhs)? };
    let d_theta = (0..k)
        .map(|kk| {
            if !active(kk) {
                return 0.0;
            }
            let cd: f64 = (0..p).map(|j| dv.c[kk * p + j] * d_beta[j]).sum();
            (dv.g_theta[kk] - cd) / dv.d_theta[kk]
        })
        .collect();
    Some((d_theta, d_beta))
}

fn max_norm(dv: &Derivs) -> f64 {
    dv.g_theta.iter().chain(&dv.g_beta).fold(0.0, |m, g| m.max(g.abs()))
}

/// Fits the piecewise-constant hazard model by maximum likelihood.
pub fn pch_mle(data: &SurvivalData) -> Result<MleFit, MleError> {
    let k = data.k();
    let p = data.p();
    let total_events: f64 = data.events_per_interval.iter().sum();
    if total_events == 0.0 {
        return Err(MleError::NoEvents);
    }
    // start from the covariate-free crude rates
    let exposure = {
        let mut e = vec![0.0; k];
        let pt = &data.person_time;
        for i in 0..data.n() {
            for (kk, x) in pt.exposures(i).into_iter().enumerate() {
                e[kk] += x;
            }
        }
        e
    };
    let mut log_h: Vec<f64> = (0..k)
        .map(|kk| ((data.events_per_interval[kk] + 0.5) / exposure[kk]).ln())
        .collect();
    let mut frozen = vec![false; k];
    let mut beta = vec![0.0; p];

    let mut dv = derivs(data, &log_h, &frozen, &beta);
    if !dv.value.is_finite() {
        return Err(MleError::NonFinite);
    }
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let before = max_norm(&dv);
        // iterate past the tolerance while steps still help, so closed-form
        // optima are hit to rounding and empty intervals reach the cutoff
        if before < POLISH_TOL {
            break;
        }
        iterations += 1;
        let (d_theta, d_beta) = newton_direction(&dv, &frozen).ok_or(MleError::NonFinite)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand_h: Vec<f64> = log_h.iter().zip(&d_theta).map(|(t, d)| t + step * d).collect();
            let cand_b: Vec<f64> = beta.iter().zip(&d_beta).map(|(b, d)| b + step * d).collect();
            let cand = derivs(data, &cand_h, &frozen, &cand_b);
            if cand.value.is_finite() && cand.value >= dv.value - 1e-12 * dv.value.abs() {
                accepted = Some((cand_h, cand_b, cand));
                break;
            }
            step *= 0.5;
        }
        let Some((h, b, cand)) = accepted else {
            // no ascent possible at machine precision
            break;
        };
        log_h = h;
        beta = b;
        dv = cand;
        let mut refreeze = false;
        for kk in 0..k {
            if !frozen[kk] && log_h[kk] < FREEZE_BELOW && data.events_per_interval[kk] == 0.0 {
                frozen[kk] = true;
                refreeze = true;
            }
        }
        if refreeze {
            dv = derivs(data, &log_h, &frozen, &beta);
        }
        if before < GRAD_TOL && max_norm(&dv) >= before {
            break;
        }
        if let Some((j, &v)) = beta.iter().enumerate().find(|(_, b)| b.abs() > SEPARATION_BOUND) {
            return Err(MleError::Separation {
                term: data.design.names[j].clone(),
                value: v,
            });
        }
    }
    let grad_norm = max_norm(&dv);
    if grad_norm >= GRAD_TOL {
        return Err(MleError::NotConverged { iterations, grad_norm });
    }
    let theta_hat = log_h
        .iter()
        .zip(&frozen)
        .map(|(t, &f)| if f { 0.0 } else { t.exp() })
        .collect();
    Ok(MleFit {
        theta_hat,
        beta_hat: beta,
        converged: true,
        iterations,
        max_grad_norm: grad_norm,
        log_likelihood: dv.value,
    })
}

/// Writes `midpoint,hazard` rows for overlay plots.
pub fn write_hazard_csv<W: Write>(fit: &MleFit, partition: &Partition, out: W) -> Result<(), MleError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["midpoint", "hazard"]).map_err(csv_io)?;
    for (m, h) in partition.midpoints.iter().zip(&fit.theta_hat) {
        w.write_record([format!("{m:.17e}"), format!("{h:.17e}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> MleError {
    MleError::Io(std::io::Error::other(e))
}
