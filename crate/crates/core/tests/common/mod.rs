#![allow(dead_code)]

pub mod profile;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use survcausal::design::DesignMatrix;
use survcausal::hazard_model::{make_partition, Layout, ModelKind, ParameterState, SurvivalData};
use survcausal::sampler::hmc::LogDensity;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn veteran_path() -> String {
    format!("{}/data/veteran.csv", env!("CARGO_MANIFEST_DIR"))
}

/// Random survival data: a binary treatment first, then `p − 1` covariates
/// drawn around `center` with unit spread, exponential-ish event times and
/// about 20% censoring.
pub fn random_data(seed: u64, n: usize, p: usize, k: usize, center: f64) -> SurvivalData {
    let mut r = rng(seed);
    let normal = Normal::new(center, 1.0).unwrap();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for _ in 0..n {
        x.push(f64::from(r.random_bool(0.5)));
        for _ in 1..p {
            x.push(normal.sample(&mut r));
        }
        y.push(r.random_range(0.01..10.0));
        delta.push(f64::from(r.random_bool(0.8)));
    }
    // at least one event
    delta[0] = 1.0;
    let names: Vec<String> = std::iter::once("A".to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect();
    let max_y = y.iter().copied().fold(0.0, f64::max);
    let design = DesignMatrix::from_matrix(names, x, y, delta);
    SurvivalData::new(design, make_partition(max_y, k).unwrap()).unwrap()
}

/// A random state well inside the support.
pub fn random_state(seed: u64, layout: &Layout) -> ParameterState {
    let mut r = rng(seed);
    let n = |r: &mut ChaCha8Rng, m: f64, s: f64| Normal::new(m, s).unwrap().sample(r);
    ParameterState {
        theta_tilde: (0..layout.k).map(|_| n(&mut r, -2.0, 0.7)).collect(),
        beta: (0..layout.p).map(|_| n(&mut r, 0.0, 0.2)).collect(),
        eta: n(&mut r, -2.0, 0.5),
        rho: if layout.kind == ModelKind::Ar1 { r.random_range(-0.9..0.9) } else { 0.0 },
        nu: (0..layout.k).map(|_| r.random_range(0.2..2.0)).collect(),
    }
}

/// Kolmogorov–Smirnov statistic of `sample` against `cdf` and its
/// asymptotic p-value.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Monte Carlo standard error of a sample mean by non-overlapping batch means.
pub fn mcse(x: &[f64]) -> f64 {
    survcausal::diagnostics::batch_means_var_of_mean(x).unwrap().sqrt()
}

/// ∫_0^t f with the range split at the partition endpoints and a 16-point
/// midpoint rule on every piece.
pub fn piecewise_quadrature(data: &SurvivalData, t: f64, f: impl Fn(f64) -> f64) -> f64 {
    let ends = &data.partition.endpoints;
    let mut total = 0.0;
    for w in ends.windows(2) {
        let (lo, hi) = (w[0], w[1].min(t));
        if hi <= lo {
            break;
        }
        let h = (hi - lo) / 16.0;
        total += (0..16).map(|s| f(lo + (s as f64 + 0.5) * h) * h).sum::<f64>();
    }
    total
}

/// Continuous-time log-likelihood Σ δ_i log λ(y_i) − Λ(y_i), with Λ computed
/// by quadrature of the step hazard.
pub fn continuous_log_lik(data: &SurvivalData, theta: &[f64], beta: &[f64]) -> f64 {
    let part = &data.partition;
    let mut total = 0.0;
    for i in 0..data.n() {
        let y = data.design.y[i];
        let lp: f64 = data.design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
        let hazard_at = |t: f64| theta[part.interval_of(t).unwrap() - 1].exp() * lp.exp();
        let cum = piecewise_quadrature(data, y, hazard_at);
        if data.design.delta[i] == 1.0 {
            total += hazard_at(y).ln();
        }
        total -= cum;
    }
    total
}

/// Correlated bivariate Gaussian.
pub struct Bivariate {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub corr: f64,
}

impl LogDensity for Bivariate {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let z0 = (x[0] - self.mean[0]) / self.sd[0];
        let z1 = (x[1] - self.mean[1]) / self.sd[1];
        let r = self.corr;
        let c = 1.0 / (1.0 - r * r);
        g[0] = -c * (z0 - r * z1) / self.sd[0];
        g[1] = -c * (z1 - r * z0) / self.sd[1];
        -0.5 * c * (z0 * z0 - 2.0 * r * z0 * z1 + z1 * z1)
    }
}

/// Small random instance: n ≤ 30, K ≤ 6, p ≤ 3, treatment first.
pub fn random_instance(seed: u64) -> profile::Instance {
    let mut r = rng(seed);
    let n = r.random_range(15..=30);
    let k = r.random_range(2..=6);
    let p = r.random_range(1..=3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n * p);
    let (mut y, mut delta) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let row: Vec<f64> = (0..p)
            .map(|j| if j == 0 { f64::from(r.random_bool(0.5)) } else { normal.sample(&mut r) })
            .collect();
        let lp: f64 = row.iter().enumerate().map(|(j, v)| v * 0.4 / (j + 1) as f64).sum();
        let t = Exp::new(0.3 * f64::exp(lp)).unwrap().sample(&mut r);
        let c = r.random_range(1.0..12.0);
        y.push(t.min(c));
        delta.push(f64::from(t <= c));
        x.extend(row);
    }
    delta[0] = 1.0;
    profile::Instance { x, y, delta, p, k }
}

pub fn instance_data(inst: &profile::Instance) -> SurvivalData {
    let names = (0..inst.p).map(|j| format!("x{j}")).collect();
    let design = DesignMatrix::from_matrix(names, inst.x.clone(), inst.y.clone(), inst.delta.clone());
    let max_y = inst.y.iter().copied().fold(0.0, f64::max);
    SurvivalData::new(design, make_partition(max_y, inst.k).unwrap()).unwrap()
}
