//! Random training tasks `(α, φ)`.
//!
//! `α` has a density growing linearly with `|α|` on `[0, α_max(1 + δ)]`
//! (optionally mirrored to negative values), and `φ` is uniform on
//! `[−δπ, (1 + δ)π]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fractional extension of each range beyond its nominal edges.
pub const DEFAULT_EDGE_EXTENSION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSampler {
    pub alpha_max: f64,
    pub edge_extension: f64,
    /// Draw `α` of either sign with equal probability.
    pub mirror_alpha: bool,
}

impl TaskSampler {
    pub fn new(alpha_max: f64, edge_extension: f64, mirror_alpha: bool) -> Result<Self> {
        if !(alpha_max > 0.0 && alpha_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha_max {alpha_max}")));
        }
        if !(0.0..1.0).contains(&edge_extension) {
            return Err(Error::InvalidArgument(format!("edge extension {edge_extension}")));
        }
        Ok(Self {
            alpha_max,
            edge_extension,
            mirror_alpha,
        })
    }

    pub fn alpha_hi(&self) -> f64 {
        self.alpha_max * (1.0 + self.edge_extension)
    }

    pub fn phi_range(&self) -> (f64, f64) {
        (-self.edge_extension * PI, (1.0 + self.edge_extension) * PI)
    }

    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let mut alpha = self.alpha_hi() * u.sqrt();
        if self.mirror_alpha && rng.random::<bool>() {
            alpha = -alpha;
        }
        let (lo, hi) = self.phi_range();
        let phi = rng.random_range(lo..hi);
        (alpha, phi)
    }

    pub fn sample_batch<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_batch() {
        let s = TaskSampler::new(2.0, 0.1, false).unwrap();
        assert!(s.sample_batch(&mut ChaCha8Rng::seed_from_u64(0), 0).is_empty());
    }

    #[test]
    fn linear_density_passes_ks() {
        let s = TaskSampler::new(2.0, 0.1, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut a: Vec<f64> = s.sample_batch(&mut rng, n).into_iter().map(|x| x.0).collect();
        a.sort_by(f64::total_cmp);
        let hi = s.alpha_hi();
        let d = a
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x / hi).powi(2);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // Critical value at the 1% level.
        assert!(d < 1.628 / (n as f64).sqrt(), "KS distance {d}");
        assert!(a[0] >= 0.0 && a[n - 1] <= hi);
    }

    #[test]
    fn phi_is_uniform() {
        let s = TaskSampler::new(2.0, 0.1, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let (lo, hi) = s.phi_range();
        let mut bins = [0usize; 20];
        let mut neg = 0;
        for (a, p) in s.sample_batch(&mut rng, n) {
            assert!(p >= lo && p < hi);
            bins[((p - lo) / (hi - lo) * 20.0) as usize] += 1;
            neg += (a < 0.0) as usize;
        }
        let expect = n as f64 / 20.0;
        let sigma = (expect * (1.0 - 0.05)).sqrt();
        for b in bins {
            assert!((b as f64 - expect).abs() < 3.0 * sigma + 1.0);
        }
        assert!((neg as f64 / n as f64 - 0.5).abs() < 0.01);
    }
}
