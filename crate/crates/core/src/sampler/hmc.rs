//! Static-length Hamiltonian Monte Carlo with dual-averaging step-size
//! adaptation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SamplerError;

/// A differentiable log density on R^d.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes ∇ log p(x) into `grad` and returns log p(x) (possibly non-finite).
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for crate::hazard_model::HazardTarget {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        crate::hazard_model::HazardTarget::log_density_and_grad(self, x, grad)
    }
}

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_and_grad(&position, &mut grad);
        PhasePoint { position, momentum, log_density, grad }
    }

    /// −log p(x) + ½ pᵀ M⁻¹ p with diagonal inverse metric.
    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let kinetic: f64 = self
            .momentum
            .iter()
            .zip(inv_metric)
            .map(|(p, m)| 0.5 * p * p * m)
            .sum();
        kinetic - self.log_density
    }

    fn is_finite(&self) -> bool {
        self.log_density.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.position.iter().all(|x| x.is_finite())
            && self.momentum.iter().all(|p| p.is_finite())
    }
}

/// Result of integrating a trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub end: PhasePoint,
    /// A non-finite state was reached; the remaining steps were skipped.
    pub diverged: bool,
}

/// `steps` velocity-Verlet updates with diagonal inverse metric.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    start: &PhasePoint,
    step_size: f64,
    steps: usize,
    inv_metric: &[f64],
) -> Trajectory {
    let mut z = start.clone();
    for _ in 0..steps {
        for (p, g) in z.momentum.iter_mut().zip(&z.grad) {
            *p += 0.5 * step_size * g;
        }
        for ((x, p), m) in z.position.iter_mut().zip(&z.momentum).zip(inv_metric) {
            *x += step_size * m * p;
        }
        z.log_density = target.log_density_and_grad(&z.position, &mut z.grad);
        for (p, g) in z.momentum.iter_mut().zip(&z.grad) {
            *p += 0.5 * step_size * g;
        }
        if !z.is_finite() {
            return Trajectory { end: z, diverged: true };
        }
    }
    Trajectory { end: z, diverged: false }
}

pub fn sample_momentum<R: Rng + ?Sized>(rng: &mut R, inv_metric: &[f64]) -> Vec<f64> {
    inv_metric
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            z / m.sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub accept_prob: f64,
    pub accepted: bool,
    pub divergent: bool,
    pub energy_error: f64,
}

/// One Metropolis-corrected HMC transition. `current` is updated in place.
pub fn hmc_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &mut PhasePoint,
    step_size: f64,
    steps: usize,
    inv_metric: &[f64],
    rng: &mut R,
) -> Transition {
    current.momentum = sample_momentum(rng, inv_metric);
    let h0 = current.hamiltonian(inv_metric);
    let traj = leapfrog(target, current, step_size, steps, inv_metric);
    let h1 = traj.end.hamiltonian(inv_metric);
    let energy_error = h1 - h0;
    let divergent = traj.diverged || !energy_error.is_finite() || energy_error.abs() > DIVERGENCE_THRESHOLD;
    let accept_prob = if divergent { 0.0 } else { (-energy_error).exp().min(1.0) };
    let u: f64 = rng.random();
    let accepted = !divergent && u < accept_prob;
    if accepted {
        *current = traj.end;
    }
    Transition { accept_prob, accepted, divergent, energy_error }
}

/// Nesterov dual averaging on log step size.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    h_bar: f64,
    log_step: f64,
    log_step_bar: f64,
    t: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_step).ln(),
            target: target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            h_bar: 0.0,
            log_step: initial_step.ln(),
            log_step_bar: 0.0,
            t: 0.0,
        }
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let w = 1.0 / (self.t + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_step = self.mu - self.t.sqrt() / self.gamma * self.h_bar;
        let eta = self.t.powf(-self.kappa);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn averaged(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

/// Doubling/halving search from step 1 until a single leapfrog step has
/// acceptance probability inside (0.25, 0.95).
pub fn find_initial_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    point: &PhasePoint,
    inv_metric: &[f64],
    rng: &mut R,
) -> f64 {
    let accept = |step: f64, rng: &mut R| {
        let mut z = point.clone();
        z.momentum = sample_momentum(rng, inv_metric);
        let h0 = z.hamiltonian(inv_metric);
        let t = leapfrog(target, &z, step, 1, inv_metric);
        let dh = t.end.hamiltonian(inv_metric) - h0;
        if t.diverged || !dh.is_finite() {
            0.0
        } else {
            (-dh).exp().min(1.0)
        }
    };
    let mut step = 1.0;
    let a = accept(step, rng);
    if a < 0.25 {
        for _ in 0..100 {
            step *= 0.5;
            if accept(step, rng) >= 0.25 {
                break;
            }
        }
    } else if a > 0.95 {
        for _ in 0..100 {
            let next = step * 2.0;
            if accept(next, rng) <= 0.95 {
                break;
            }
            step = next;
        }
    }
    step
}

#[derive(Debug, Clone)]
pub struct ChainSettings {
    pub warmup: usize,
    pub draws: usize,
    pub steps: usize,
    pub target_accept: f64,
    pub init_jitter: f64,
    /// Maximum tolerated post-warmup divergence fraction.
    pub max_divergence_rate: f64,
    /// Estimate a diagonal inverse metric from warmup draws.
    pub adapt_metric: bool,
    /// Each transition scales the step size by a uniform factor in
    /// [1 − jitter, 1 + jitter], so a fixed trajectory length cannot
    /// resonate with a near-Gaussian direction.
    pub step_jitter: f64,
}

fn jittered<R: Rng + ?Sized>(step: f64, jitter: f64, rng: &mut R) -> f64 {
    if jitter > 0.0 {
        step * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0))
    } else {
        step
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Post-warmup positions, one per iteration.
    pub draws: Vec<Vec<f64>>,
    pub step_size: f64,
    pub mean_accept_prob: f64,
    pub accept_rate: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    /// Diagonal inverse metric used after warmup.
    pub inv_metric: Vec<f64>,
}

/// Draws a finite starting point uniformly from [−jitter, jitter]^d.
pub fn initial_point<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    jitter: f64,
    rng: &mut R,
) -> Result<PhasePoint, SamplerError> {
    let d = target.dim();
    for _ in 0..100 {
        let x: Vec<f64> = (0..d)
            .map(|_| if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 })
            .collect();
        let z = PhasePoint::new(target, x, vec![0.0; d]);
        if z.is_finite() {
            return Ok(z);
        }
    }
    Err(SamplerError::InitFailed)
}

/// Warmup phases for metric adaptation: a fast initial buffer, slow windows
/// that double in length and end with a metric update, and a final fast
/// buffer. Returns the iteration indices at which windows close.
pub fn metric_windows(warmup: usize) -> Vec<usize> {
    let (init, term, first) = (75, 50, 25);
    if warmup < init + term + first {
        return vec![];
    }
    let last = warmup - term;
    let mut ends = Vec::new();
    let (mut start, mut len) = (init, first);
    loop {
        let end = start + len;
        // stretch the final slow window to the terminal buffer
        if end + 2 * len > last {
            ends.push(last);
            break;
        }
        ends.push(end);
        start = end;
        len *= 2;
    }
    ends
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.n;
            *s += delta * (v - *m);
        }
    }

    /// Sample variances shrunk toward 1e−3 for short windows.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| (n / (n + 5.0)) * s / (n - 1.0) + 1e-3 * (5.0 / (n + 5.0)))
            .collect()
    }
}

/// Runs warmup (step-size and optionally metric adaptation) then `draws`
/// retained iterations.
pub fn run_chain<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    settings: &ChainSettings,
    inv_metric: &[f64],
    rng: &mut R,
) -> Result<ChainOutput, SamplerError> {
    let mut metric = inv_metric.to_vec();
    let mut current = initial_point(target, settings.init_jitter, rng)?;
    let step0 = find_initial_step(target, &current, &metric, rng);
    let mut adapt = DualAveraging::new(step0, settings.target_accept);
    let windows = if settings.adapt_metric { metric_windows(settings.warmup) } else { vec![] };
    let window_start = |w: usize| if w == 0 { 75 } else { windows[w - 1] };
    let mut next_window = 0;
    let mut moments = Moments::new(target.dim());
    let mut warmup_divergences = 0;
    for it in 0..settings.warmup {
        let step = jittered(adapt.current(), settings.step_jitter, rng);
        let t = hmc_step(target, &mut current, step, settings.steps, &metric, rng);
        warmup_divergences += usize::from(t.divergent);
        adapt.update(t.accept_prob);
        if next_window < windows.len() && it >= window_start(next_window) {
            moments.push(&current.position);
            if it + 1 == windows[next_window] {
                metric = moments.regularized_variance();
                moments = Moments::new(target.dim());
                next_window += 1;
                let step = find_initial_step(target, &current, &metric, rng);
                adapt = DualAveraging::new(step, settings.target_accept);
            }
        }
    }
    let step_size = adapt.averaged();

    let mut draws = Vec::with_capacity(settings.draws);
    let (mut accepted, mut divergences, mut prob_sum) = (0usize, 0usize, 0.0);
    for _ in 0..settings.draws {
        let step = jittered(step_size, settings.step_jitter, rng);
        let t = hmc_step(target, &mut current, step, settings.steps, &metric, rng);
        accepted += usize::from(t.accepted);
        divergences += usize::from(t.divergent);
        prob_sum += t.accept_prob;
        draws.push(current.position.clone());
    }
    let n = settings.draws.max(1) as f64;
    let rate = divergences as f64 / n;
    if rate > settings.max_divergence_rate {
        return Err(SamplerError::TooManyDivergences {
            rate,
            step_size,
        });
    }
    Ok(ChainOutput {
        draws,
        step_size,
        mean_accept_prob: prob_sum / n,
        accept_rate: accepted as f64 / n,
        divergences,
        warmup_divergences,
        inv_metric: metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    struct Quadratic {
        precision: Vec<f64>,
    }

    impl LogDensity for Quadratic {
        fn dim(&self) -> usize {
            self.precision.len()
        }
        fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for i in 0..x.len() {
                g[i] = -self.precision[i] * x[i];
                v -= 0.5 * self.precision[i] * x[i] * x[i];
            }
            v
        }
    }

    struct Flat;

    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_and_grad(&self, _x: &[f64], g: &mut [f64]) -> f64 {
            g.iter_mut().for_each(|v| *v = 0.0);
            0.0
        }
    }

    #[test]
    fn zero_gradient_moves_linearly() {
        let start = PhasePoint::new(&Flat, vec![1.0, -2.0], vec![0.5, 0.25]);
        let t = leapfrog(&Flat, &start, 0.1, 10, &[1.0, 1.0]);
        assert!((t.end.position[0] - 1.5).abs() < 1e-12);
        assert!((t.end.position[1] + 1.75).abs() < 1e-12);
        assert_eq!(t.end.momentum, vec![0.5, 0.25]);
    }

    #[test]
    fn energy_error_is_second_order() {
        let q = Quadratic { precision: vec![1.0] };
        let start = PhasePoint::new(&q, vec![0.7], vec![-1.1]);
        let t = leapfrog(&q, &start, 1e-3, 100, &[1.0]);
        let err = (t.end.hamiltonian(&[1.0]) - start.hamiltonian(&[1.0])).abs();
        assert!(err < 1e-4, "energy error {err}");
        // halving the step shrinks the error roughly fourfold
        let t2 = leapfrog(&q, &start, 0.2, 10, &[1.0]);
        let t3 = leapfrog(&q, &start, 0.1, 20, &[1.0]);
        let e2 = (t2.end.hamiltonian(&[1.0]) - start.hamiltonian(&[1.0])).abs();
        let e3 = (t3.end.hamiltonian(&[1.0]) - start.hamiltonian(&[1.0])).abs();
        assert!(e3 < e2 / 2.0, "{e2} {e3}");
    }

    #[test]
    fn leapfrog_is_reversible() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let q = Quadratic { precision: vec![0.5, 2.0, 7.0, 0.1] };
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = sample_momentum(&mut rng, &[1.0; 4]);
        let start = PhasePoint::new(&q, x, p);
        let fwd = leapfrog(&q, &start, 0.05, 37, &[1.0; 4]);
        let mut back_start = fwd.end.clone();
        back_start.momentum.iter_mut().for_each(|p| *p = -*p);
        let back = leapfrog(&q, &back_start, 0.05, 37, &[1.0; 4]);
        for i in 0..4 {
            assert!((back.end.position[i] - start.position[i]).abs() < 1e-8);
            assert!((back.end.momentum[i] + start.momentum[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_state_is_divergent() {
        struct Cliff;
        impl LogDensity for Cliff {
            fn dim(&self) -> usize {
                1
            }
            fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
                g[0] = -1.0;
                if x[0] > 1.0 { f64::NEG_INFINITY } else { -x[0] }
            }
        }
        let start = PhasePoint::new(&Cliff, vec![0.0], vec![5.0]);
        assert!(leapfrog(&Cliff, &start, 0.5, 10, &[1.0]).diverged);
    }

    #[test]
    fn dual_averaging_reaches_target() {
        let q = Quadratic { precision: vec![1.0; 10] };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let settings = ChainSettings {
            warmup: 500,
            draws: 500,
            steps: 8,
            target_accept: 0.8,
            init_jitter: 1.0,
            max_divergence_rate: 0.2,
            adapt_metric: false,
            step_jitter: 0.0,
        };
        let out = run_chain(&q, &settings, &[1.0; 10], &mut rng).unwrap();
        assert!((out.mean_accept_prob - 0.8).abs() < 0.1, "{}", out.mean_accept_prob);
        assert_eq!(out.draws.len(), 500);
    }
}
