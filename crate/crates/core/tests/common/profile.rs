//! Derivative-free reference maximizer for the piecewise-constant hazard
//! model. Only plain slices are used, so it shares no code with the crate.
//!
//! For fixed β the hazard MLE is closed form, θ_k = d_k / E_k(β) with
//! E_k(β) = Σ_i exp(x_i'β) Δt_ik, and Nelder–Mead maximizes the profile
//! log-likelihood over β.

pub struct Instance {
    /// Row-major n × p.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
    pub p: usize,
    pub k: usize,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn width(&self) -> f64 {
        self.y.iter().copied().fold(0.0, f64::max) / self.k as f64
    }

    /// 0-based interval of t, right-closed.
    fn interval(&self, t: f64) -> usize {
        let w = self.width();
        let mut k = (t / w).ceil() as usize;
        // guard against t/w landing just past an integer
        while k > 1 && t <= (k - 1) as f64 * w {
            k -= 1;
        }
        k.clamp(1, self.k) - 1
    }

    fn exposure(&self, i: usize, k: usize) -> f64 {
        let w = self.width();
        let lo = k as f64 * w;
        (self.y[i].min(lo + w) - lo).max(0.0)
    }

    fn lp(&self, i: usize, beta: &[f64]) -> f64 {
        (0..self.p).map(|j| self.x[i * self.p + j] * beta[j]).sum()
    }

    /// Σ_i δ_i log Δt_{i,k*_i}: the constant separating the Poisson and
    /// continuous-time forms.
    pub fn poisson_offset(&self) -> f64 {
        (0..self.n())
            .filter(|&i| self.delta[i] == 1.0)
            .map(|i| self.exposure(i, self.interval(self.y[i])).ln())
            .sum()
    }

    /// Continuous-time log-likelihood at hazards `theta` (zeros allowed).
    pub fn log_likelihood(&self, theta: &[f64], beta: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..self.n() {
            let lp = self.lp(i, beta);
            if self.delta[i] == 1.0 {
                v += theta[self.interval(self.y[i])].ln() + lp;
            }
            let cum: f64 = (0..self.k).map(|k| theta[k] * self.exposure(i, k)).sum();
            v -= lp.exp() * cum;
        }
        v
    }

    pub fn profile_hazards(&self, beta: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.k];
        let mut e = vec![0.0; self.k];
        for i in 0..self.n() {
            if self.delta[i] == 1.0 {
                d[self.interval(self.y[i])] += 1.0;
            }
            let w = self.lp(i, beta).exp();
            for (k, ek) in e.iter_mut().enumerate() {
                *ek += w * self.exposure(i, k);
            }
        }
        d.iter().zip(&e).map(|(d, e)| d / e).collect()
    }

    pub fn profile(&self, beta: &[f64]) -> f64 {
        self.log_likelihood(&self.profile_hazards(beta), beta)
    }
}

/// Maximizes `f` by Nelder–Mead with restarts until a restart no longer
/// improves the best value by more than 1e−13.
pub fn nelder_mead_max(f: impl Fn(&[f64]) -> f64, start: &[f64]) -> (Vec<f64>, f64) {
    let neg = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() { -v } else { f64::INFINITY }
    };
    let mut best = start.to_vec();
    let mut best_val = neg(&best);
    for _ in 0..50 {
        let (x, v) = nm_minimize(&neg, &best, 0.5);
        let improved = best_val - v;
        if v < best_val {
            best = x;
            best_val = v;
        }
        if improved <= 1e-13 {
            break;
        }
    }
    (best, -best_val)
}

fn nm_minimize(f: &impl Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut v = start.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[d] - vals[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < 1e-15 && size < 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = towards(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = towards(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = towards(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = towards(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let shrunk: Vec<f64> = simplex[i].iter().zip(&simplex[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    vals[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let i = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[i].clone(), vals[i])
}
