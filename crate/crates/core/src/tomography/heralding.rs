//! Repeated-Ramsey heralding of the TLS ground state.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeraldingSpec {
    pub n_repeats: u32,
    /// Per-shot pass probability with the TLS in its ground state.
    pub p0: f64,
    /// Per-shot pass probability with the TLS excited.
    pub p1: f64,
    /// Accept when at least this many shots pass.
    pub threshold: u32,
}

impl Default for HeraldingSpec {
    fn default() -> Self {
        Self {
            n_repeats: 30,
            p0: 0.80,
            p1: 0.45,
            threshold: 20,
        }
    }
}

impl HeraldingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) || !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::Probability {
                value: if (0.0..=1.0).contains(&self.p0) { self.p1 } else { self.p0 },
                context: "heralding shot probability".into(),
            });
        }
        if self.p1 > self.p0 {
            return Err(Error::InvalidArgument(format!(
                "excited-TLS pass probability {} exceeds the ground one {}",
                self.p1, self.p0
            )));
        }
        Ok(())
    }
}

/// `P(R ≥ k)` for `R ~ Binomial(n, p)`.
pub fn binomial_tail(n: u32, p: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // Sum the smaller side to limit cancellation.
    let pmf = |j: u32| -> f64 {
        let mut c = 1.0;
        for i in 0..j.min(n - j) {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32)
    };
    let upper: f64 = (k..=n).map(pmf).sum();
    if upper <= 0.5 {
        upper
    } else {
        1.0 - (0..k).map(pmf).sum::<f64>()
    }
}

/// `(P(R ≥ threshold | ground), P(R ≥ threshold | excited))`.
pub fn heralding_probabilities(spec: &HeraldingSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    Ok((
        binomial_tail(spec.n_repeats, spec.p0, spec.threshold),
        binomial_tail(spec.n_repeats, spec.p1, spec.threshold),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_rational::Ratio;
    use num_traits::ToPrimitive;

    /// Exact tail for `p = num/den`.
    fn exact_tail(n: u32, num: u64, den: u64, k: u32) -> f64 {
        let mut total = Ratio::new(BigUint::from(0u32), BigUint::from(1u32));
        for j in k..=n {
            let mut c = BigUint::from(1u32);
            for i in 0..j {
                c = c * BigUint::from(n - i) / BigUint::from(i + 1);
            }
            let term = c * BigUint::from(num).pow(j) * BigUint::from(den - num).pow(n - j);
            total += Ratio::new(term, BigUint::from(den).pow(n));
        }
        total.numer().to_f64().unwrap() / total.denom().to_f64().unwrap()
    }

    #[test]
    fn defaults_against_exact_rationals() {
        let (g, e) = heralding_probabilities(&HeraldingSpec::default()).unwrap();
        assert!((g - exact_tail(30, 4, 5, 20)).abs() < 1e-12);
        assert!((e - exact_tail(30, 9, 20, 20)).abs() < 1e-12);
    }

    #[test]
    fn trivial_cases() {
        let mut s = HeraldingSpec { threshold: 0, ..Default::default() };
        assert_eq!(heralding_probabilities(&s).unwrap(), (1.0, 1.0));
        s.threshold = 20;
        s.p1 = s.p0;
        let (a, b) = heralding_probabilities(&s).unwrap();
        assert_eq!(a, b);
        s.p1 = 0.9;
        assert!(heralding_probabilities(&s).is_err());
        s.p0 = 1.2;
        assert!(heralding_probabilities(&s).is_err());
    }

    #[test]
    fn tail_matches_exact_for_many_cases() {
        for (num, den) in [(1, 2), (3, 10), (7, 8), (1, 100)] {
            for k in [1, 5, 15, 29, 30] {
                let p = num as f64 / den as f64;
                assert!((binomial_tail(30, p, k) - exact_tail(30, num, den, k)).abs() < 1e-12);
            }
        }
    }
}
