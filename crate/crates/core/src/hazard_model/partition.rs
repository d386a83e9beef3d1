use serde::{Deserialize, Serialize};

use super::HazardError;

/// Equally spaced grid `0 = τ_0 < τ_1 < … < τ_K = max_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub endpoints: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub width: f64,
}

impl Partition {
    pub fn k(&self) -> usize {
        self.midpoints.len()
    }

    pub fn horizon(&self) -> f64 {
        self.endpoints[self.k()]
    }

    /// 1-based index of the interval `(τ_{k-1}, τ_k]` holding `t`.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        if !(t > 0.0 && t <= self.horizon()) {
            return None;
        }
        let kk = self.k();
        let mut k = ((t / self.width).ceil() as usize).clamp(1, kk);
        while k > 1 && t <= self.endpoints[k - 1] {
            k -= 1;
        }
        while k < kk && t > self.endpoints[k] {
            k += 1;
        }
        Some(k)
    }

    /// Rebuilds a partition from stored endpoints, checking equal spacing.
    pub fn from_endpoints(endpoints: Vec<f64>) -> Result<Partition, HazardError> {
        if endpoints.len() < 2 || endpoints[0] != 0.0 {
            return Err(HazardError::BadPartition("endpoints must start at 0 and have K+1 >= 2 entries".into()));
        }
        let k = endpoints.len() - 1;
        let p = make_partition(endpoints[k], k)?;
        let tol = 1e-9 * p.horizon();
        if p.endpoints.iter().zip(&endpoints).any(|(a, b)| (a - b).abs() > tol) {
            return Err(HazardError::BadPartition("endpoints are not equally spaced".into()));
        }
        Ok(p)
    }
}

pub fn make_partition(max_time: f64, k: usize) -> Result<Partition, HazardError> {
    if !(max_time.is_finite() && max_time > 0.0) {
        return Err(HazardError::BadPartition(format!(
            "maximum time must be positive and finite, got {max_time}"
        )));
    }
    if k == 0 {
        return Err(HazardError::BadPartition("need at least one interval".into()));
    }
    let width = max_time / k as f64;
    let mut endpoints: Vec<f64> = (0..=k).map(|j| j as f64 * width).collect();
    endpoints[k] = max_time;
    let midpoints = endpoints.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(Partition {
        endpoints,
        midpoints,
        width,
    })
}

/// Person-time layout: subject i occupies intervals `1..=k_star[i]`, with full
/// width exposure in all but the last, where it has `last_exposure[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonTime {
    pub k_star: Vec<usize>,
    pub last_exposure: Vec<f64>,
    pub width: f64,
}

impl PersonTime {
    pub fn n(&self) -> usize {
        self.k_star.len()
    }

    /// Exposure vector `Δt_i1..Δt_ik*` of subject i.
    pub fn exposures(&self, i: usize) -> Vec<f64> {
        let ks = self.k_star[i];
        let mut v = vec![self.width; ks];
        v[ks - 1] = self.last_exposure[i];
        v
    }

    /// Total rows of the transposed (subject, interval) table.
    pub fn cell_count(&self) -> usize {
        self.k_star.iter().sum()
    }
}

pub fn expand_person_time(y: &[f64], partition: &Partition) -> Result<PersonTime, HazardError> {
    let mut k_star = Vec::with_capacity(y.len());
    let mut last_exposure = Vec::with_capacity(y.len());
    for (i, &t) in y.iter().enumerate() {
        let k = partition.interval_of(t).ok_or(HazardError::TimeOutOfRange {
            index: i,
            time: t,
            horizon: partition.horizon(),
        })?;
        k_star.push(k);
        last_exposure.push(t - partition.endpoints[k - 1]);
    }
    Ok(PersonTime {
        k_star,
        last_exposure,
        width: partition.width,
    })
}

/// Λ₀(t) = Σ_k θ_k · |(τ_{k-1}, τ_k] ∩ (0, t]| for hazard levels θ_k.
pub fn cum_base_hazard(hazards: &[f64], partition: &Partition, t: f64) -> Result<f64, HazardError> {
    if !(t >= 0.0) || t > partition.horizon() {
        return Err(HazardError::BeyondHorizon {
            time: t,
            horizon: partition.horizon(),
        });
    }
    assert_eq!(hazards.len(), partition.k(), "one hazard per interval");
    let mut total = 0.0;
    for (k, h) in hazards.iter().enumerate() {
        let lo = partition.endpoints[k];
        if t <= lo {
            break;
        }
        let hi = partition.endpoints[k + 1].min(t);
        total += h * (hi - lo);
    }
    Ok(total)
}

/// Λ₀ at every endpoint, `cum[0] = 0`, `cum[K] = Λ₀(τ_K)`.
pub fn cum_base_hazard_at_endpoints(hazards: &[f64], partition: &Partition) -> Vec<f64> {
    let mut cum = Vec::with_capacity(hazards.len() + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for (k, h) in hazards.iter().enumerate() {
        acc += h * (partition.endpoints[k + 1] - partition.endpoints[k]);
        cum.push(acc);
    }
    cum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_widths() {
        let p = make_partition(365.0, 100).unwrap();
        assert_relative_eq!(p.width, 3.65, epsilon = 1e-12);
        let p = make_partition(999.0, 100).unwrap();
        assert_relative_eq!(p.width, 9.99, epsilon = 1e-12);
        assert_eq!(p.endpoints[100], 999.0);
        assert_relative_eq!(p.midpoints[0], 4.995, epsilon = 1e-12);
        assert_relative_eq!(p.midpoints[1], 14.985, epsilon = 1e-12);
        let p = make_partition(10.0, 1).unwrap();
        assert_eq!(p.endpoints, vec![0.0, 10.0]);
        assert_eq!(p.midpoints, vec![5.0]);
        assert!(make_partition(0.0, 3).is_err());
        assert!(make_partition(-1.0, 3).is_err());
        assert!(make_partition(1.0, 0).is_err());
    }

    #[test]
    fn person_time_conventions() {
        let p = make_partition(365.0, 100).unwrap();
        let pt = expand_person_time(&[5.0, 365.0, p.endpoints[1]], &p).unwrap();
        assert_eq!(pt.k_star, vec![2, 100, 1]);
        let e = pt.exposures(0);
        assert_relative_eq!(e[0], 3.65, epsilon = 1e-12);
        assert_relative_eq!(e[1], 1.35, epsilon = 1e-12);
        assert_relative_eq!(pt.last_exposure[1], p.width, epsilon = 1e-9);
        assert_eq!(pt.exposures(2), vec![p.width]);
        assert!(expand_person_time(&[0.0], &p).is_err());
        assert!(expand_person_time(&[365.5], &p).is_err());
    }

    #[test]
    fn exposures_sum_to_time() {
        let p = make_partition(999.0, 100).unwrap();
        let ys: Vec<f64> = (1..=999).map(|t| t as f64).collect();
        let pt = expand_person_time(&ys, &p).unwrap();
        for (i, &y) in ys.iter().enumerate() {
            let s: f64 = pt.exposures(i).iter().sum();
            assert!((s - y).abs() <= 4.0 * f64::EPSILON * y, "{y} vs {s}");
            assert!(pt.last_exposure[i] > 0.0 && pt.last_exposure[i] <= p.width * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cumulative_hazard_cases() {
        let p = make_partition(10.0, 5).unwrap();
        let c = vec![0.3; 5];
        for t in [0.0, 1.0, 3.3, 10.0] {
            assert_relative_eq!(cum_base_hazard(&c, &p, t).unwrap(), 0.3 * t, epsilon = 1e-12);
        }
        let h = vec![0.1, 0.7, 0.2, 0.2, 0.4];
        assert_relative_eq!(
            cum_base_hazard(&h, &p, p.endpoints[2]).unwrap(),
            0.1 * 2.0 + 0.7 * 2.0,
            epsilon = 1e-12
        );
        assert!(cum_base_hazard(&h, &p, 10.5).is_err());
        let ends = cum_base_hazard_at_endpoints(&h, &p);
        for (k, &e) in p.endpoints.iter().enumerate() {
            assert_relative_eq!(ends[k], cum_base_hazard(&h, &p, e).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn from_endpoints_checks_spacing() {
        let p = make_partition(999.0, 100).unwrap();
        assert_eq!(Partition::from_endpoints(p.endpoints.clone()).unwrap(), p);
        assert!(Partition::from_endpoints(vec![0.0, 1.0, 3.0]).is_err());
    }
}
