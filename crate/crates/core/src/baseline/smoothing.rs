//! Coarse-to-fine resampling and Gaussian smoothing of piecewise controls.

use crate::dynamics::PiecewiseControls;
use crate::{Error, Result, C64};

/// Steps of the fine grid.
pub const FINE_STEPS: usize = 2000;
/// Span of the fine grid, µs.
pub const FINE_DURATION: f64 = 2.0;
/// Standard deviation of the smoothing kernel, µs.
pub const SMOOTHING_SIGMA: f64 = 0.011;

/// Convolves with a normalised Gaussian of `sigma` samples; values beyond
/// either end count as zero.
pub fn gaussian_smooth(values: &[C64], sigma: f64) -> Vec<C64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let half = (5.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (m, w) in kernel.iter().enumerate() {
                let j = i + m as isize - half;
                if (0..n).contains(&j) {
                    acc += values[j as usize] * *w;
                }
            }
            acc / norm
        })
        .collect()
}

/// Linear interpolation between the centres of the coarse steps, held
/// flat out to the edges of the coarse window and zero outside it.
fn resample(values: &[C64], coarse_dt: f64, offset: f64, t: f64) -> C64 {
    let n = values.len();
    let s = t - offset;
    if s < 0.0 || s > coarse_dt * n as f64 {
        return C64::new(0.0, 0.0);
    }
    let u = s / coarse_dt - 0.5;
    if u <= 0.0 {
        return values[0];
    }
    if u >= (n - 1) as f64 {
        return values[n - 1];
    }
    let j = u.floor() as usize;
    let f = u - j as f64;
    values[j] * (1.0 - f) + values[j + 1] * f
}

/// Resamples `coarse` onto `fine_steps` intervals spanning `fine_duration`
/// with the coarse window centred, then smooths with a Gaussian of `sigma`.
pub fn upsample_and_smooth(
    coarse: &PiecewiseControls,
    fine_steps: usize,
    fine_duration: f64,
    sigma: f64,
) -> Result<PiecewiseControls> {
    if fine_steps == 0 || !(fine_duration > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resampling onto {fine_steps} steps over {fine_duration} µs with σ = {sigma}"
        )));
    }
    let offset = 0.5 * (fine_duration - coarse.duration());
    if offset < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "coarse window {} µs exceeds the fine one {fine_duration} µs",
            coarse.duration()
        )));
    }
    let dt = fine_duration / fine_steps as f64;
    let sample = |v: &[C64]| -> Vec<C64> {
        let raw: Vec<C64> = (0..fine_steps)
            .map(|k| resample(v, coarse.dt, offset, (k as f64 + 0.5) * dt))
            .collect();
        gaussian_smooth(&raw, sigma / dt)
    };
    PiecewiseControls::new(dt, sample(&coarse.eps_c), sample(&coarse.eps_q))
}
