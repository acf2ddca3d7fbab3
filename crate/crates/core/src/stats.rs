use serde::{Deserialize, Serialize};

use crate::exec::tree_reduce;

/// Verdict threshold on |z| used by every statistical check.
pub const Z_THRESHOLD: f64 = 4.0;

/// Streaming mean/variance (Welford), mergeable with Chan's update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = if d == 0.0 {
            self.mean
        } else {
            self.mean + d * (other.n as f64 / n as f64)
        };
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        Moments { n, mean, m2 }
    }

    pub fn from_slice(xs: &[f64]) -> Moments {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    /// Tree-merges chunk accumulators in order.
    pub fn reduce(parts: Vec<Moments>) -> Moments {
        tree_reduce(parts, Moments::merge).unwrap_or_default()
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Elementwise `Moments` over a fixed-length vector of statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentsVec(pub Vec<Moments>);

impl MomentsVec {
    pub fn new(len: usize) -> Self {
        MomentsVec(vec![Moments::default(); len])
    }

    pub fn push(&mut self, xs: &[f64]) {
        for (m, &x) in self.0.iter_mut().zip(xs) {
            m.push(x);
        }
    }

    pub fn merge(self, other: MomentsVec) -> MomentsVec {
        MomentsVec(self.0.into_iter().zip(other.0).map(|(a, b)| a.merge(b)).collect())
    }

    pub fn reduce(parts: Vec<MomentsVec>, len: usize) -> MomentsVec {
        tree_reduce(parts, MomentsVec::merge).unwrap_or_else(|| MomentsVec::new(len))
    }
}

/// A Monte Carlo (or deterministic) estimate together with its verdict
/// against an optional reference value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub reference: Option<f64>,
    pub z_score: Option<f64>,
}

impl EstimatorResult {
    pub fn new(estimate: f64, std_error: f64, n_samples: u64, seed: u64) -> Self {
        EstimatorResult {
            estimate,
            std_error,
            n_samples,
            seed,
            reference: None,
            z_score: None,
        }
    }

    pub fn from_moments(m: &Moments, seed: u64) -> Self {
        Self::new(m.mean, m.std_error(), m.n, seed)
    }

    /// Attaches a reference and computes z. With zero standard error the
    /// estimate must match the reference to rounding (z = 0) or z is left
    /// undefined and the result fails.
    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self.z_score = z_score(self.estimate, reference, self.std_error);
        self
    }

    /// Scales estimate and standard error by a known constant.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.estimate *= factor;
        self.std_error *= factor.abs();
        self
    }

    pub fn pass(&self) -> bool {
        match (self.reference, self.z_score) {
            (Some(_), Some(z)) => z.abs() <= Z_THRESHOLD,
            (Some(_), None) => false,
            (None, _) => true,
        }
    }
}

pub fn z_score(estimate: f64, reference: f64, std_error: f64) -> Option<f64> {
    let diff = estimate - reference;
    if std_error > 0.0 {
        Some(diff / std_error)
    } else if diff.abs() <= 1e-12 * reference.abs().max(1.0) {
        Some(0.0)
    } else {
        None
    }
}

/// z-score of the difference of two independent estimates.
pub fn paired_z(a: f64, se_a: f64, b: f64, se_b: f64) -> Option<f64> {
    z_score(a, b, se_a.hypot(se_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole = Moments::from_slice(&xs);
        let parts: Vec<Moments> = xs.chunks(77).map(Moments::from_slice).collect();
        let merged = Moments::reduce(parts);
        assert_eq!(merged.n, whole.n);
        assert_relative_eq!(merged.mean, whole.mean, max_relative = 1e-13);
        assert_relative_eq!(merged.m2, whole.m2, max_relative = 1e-12);
    }

    #[test]
    fn constant_stream_has_zero_error() {
        let parts: Vec<Moments> = (0..9).map(|_| Moments::from_slice(&[1.0; 100])).collect();
        let m = Moments::reduce(parts);
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.std_error(), 0.0);
    }

    #[test]
    fn verdicts() {
        let r = EstimatorResult::new(1.0, 0.1, 10, 0).with_reference(1.5);
        assert_relative_eq!(r.z_score.unwrap(), -5.0, max_relative = 1e-12);
        assert!(!r.pass());
        let exact = EstimatorResult::new(2.0, 0.0, 1, 0).with_reference(2.0);
        assert!(exact.pass());
        let wrong = EstimatorResult::new(2.0, 0.0, 1, 0).with_reference(2.1);
        assert!(wrong.z_score.is_none() && !wrong.pass());
        assert!(EstimatorResult::new(0.0, 0.0, 0, 0).pass());
    }
}
