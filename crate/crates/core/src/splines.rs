//! Clamped B-spline basis used to encode drive waveforms.
//!
//! With `n` basis functions of degree `k` on `[0, T]` the knot vector holds
//! `k + 1` copies of each endpoint and `n − k − 1` uniform interior knots.
//! The first and last splines are the only ones that are nonzero at the
//! endpoints, so excluding them forces every pulse to start and end at zero.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Number of real control fields: Re/Im of the cavity drive, Re/Im of the qubit drive.
pub const N_CONTROLS: usize = 4;

/// Default basis size.
pub const DEFAULT_N: usize = 11;
/// Default spline degree.
pub const DEFAULT_DEGREE: usize = 3;

/// Largest allowed magnitude of a single coefficient, rad/µs.
pub const AMPLITUDE_CAP: f64 = 2.0 * std::f64::consts::PI * 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotSequence(Vec<f64>);

impl KnotSequence {
    pub fn clamped_uniform(n: usize, k: usize, duration: f64) -> Self {
        let interior = n - k - 1;
        let mut knots = vec![0.0; k + 1];
        for j in 1..=interior {
            knots.push(duration * j as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(duration, k + 1));
        Self(knots)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    n: usize,
    k: usize,
    duration: f64,
    knots: KnotSequence,
}

impl BSplineBasis {
    pub fn new(n: usize, k: usize, duration: f64) -> Result<Self> {
        if n <= k {
            return Err(Error::InvalidArgument(format!(
                "basis size {n} must exceed degree {k}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidArgument(
                "need at least three splines to keep any after edge exclusion".into(),
            ));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration {duration}")));
        }
        Ok(Self {
            n,
            k,
            duration,
            knots: KnotSequence::clamped_uniform(n, k, duration),
        })
    }

    /// The 11-spline cubic basis.
    pub fn standard(duration: f64) -> Result<Self> {
        Self::new(DEFAULT_N, DEFAULT_DEGREE, duration)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    /// Splines kept after dropping the first and last.
    pub fn n_active(&self) -> usize {
        self.n - 2
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.duration).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                duration: self.duration,
            })
        }
    }

    /// All `n` basis values at `t` by the Cox–de Boor recursion.
    ///
    /// Terms with a vanishing knot span contribute zero. At `t = T` the
    /// left limit is taken so that the basis still sums to one.
    pub fn evaluate_full(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let knots = self.knots.as_slice();
        let m = knots.len() - 1;
        let mut b: Vec<f64> = (0..m)
            .map(|i| {
                let inside = knots[i] <= t && t < knots[i + 1];
                let right_end = t == self.duration && knots[i] < t && knots[i + 1] == t;
                if inside || right_end {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for d in 1..=self.k {
            let next: Vec<f64> = (0..m - d)
                .map(|i| {
                    let left = ratio(t - knots[i], knots[i + d] - knots[i]) * b[i];
                    let right = ratio(knots[i + d + 1] - t, knots[i + d + 1] - knots[i + 1]) * b[i + 1];
                    left + right
                })
                .collect();
            b = next;
        }
        Ok(b)
    }

    /// Values of the active splines (all but the first and last) at `t`.
    pub fn evaluate_active(&self, t: f64) -> Result<Vec<f64>> {
        let full = self.evaluate_full(t)?;
        Ok(full[1..self.n - 1].to_vec())
    }

    /// Precomputes the active basis on a set of sample times.
    pub fn sample(&self, times: &[f64]) -> Result<BasisMatrix> {
        let mut values = Array2::zeros((self.n_active(), times.len()));
        for (j, &t) in times.iter().enumerate() {
            for (i, v) in self.evaluate_active(t)?.into_iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        Ok(BasisMatrix {
            times: times.to_vec(),
            values,
        })
    }

    /// Writes `t, B2, …, B(n-1)` rows for plotting.
    pub fn write_csv<W: Write>(&self, times: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((2..self.n).map(|i| format!("B{i}")));
        w.write_record(&header)?;
        for &t in times {
            let mut row = vec![t.to_string()];
            row.extend(self.evaluate_active(t)?.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Active basis values on a fixed set of times, `n_active × n_times`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix {
    times: Vec<f64>,
    values: Array2<f64>,
}

impl BasisMatrix {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_active(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }

    /// Pulls per-sample control sensitivities `∂L/∂w_r(t_j)` back to
    /// coefficient sensitivities `∂L/∂c_{r,i}`.
    pub fn pullback(&self, waveform_grad: &Array2<f64>) -> Array2<f64> {
        waveform_grad.dot(&self.values.t())
    }
}

/// The `4 × n_active` real coefficients of one pulse sequence, rad/µs.
///
/// Rows are Re ε_c, Im ε_c, Re ε_q, Im ε_q.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    coeffs: Array2<f64>,
}

impl CoefficientSet {
    pub fn new(coeffs: Array2<f64>) -> Result<Self> {
        if coeffs.nrows() != N_CONTROLS {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix has {} rows, expected {N_CONTROLS}",
                coeffs.nrows()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                context: "pulse coefficients".into(),
            });
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n_active: usize) -> Self {
        Self {
            coeffs: Array2::zeros((N_CONTROLS, n_active)),
        }
    }

    /// Row-major `[row0…, row1…, row2…, row3…]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % N_CONTROLS != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into {N_CONTROLS} rows",
                flat.len()
            )));
        }
        let cols = flat.len() / N_CONTROLS;
        let arr = Array2::from_shape_vec((N_CONTROLS, cols), flat.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(arr)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coeffs.iter().copied().collect()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn n_active(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Optional per-drive calibration gain applied before synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveGain {
    pub cavity: f64,
    pub qubit: f64,
}

impl Default for DriveGain {
    fn default() -> Self {
        Self {
            cavity: 1.0,
            qubit: 1.0,
        }
    }
}

/// Sampled real control fields, `4 × n_times`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveforms {
    times: Vec<f64>,
    rows: Array2<f64>,
}

impl Waveforms {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn eps_c(&self, j: usize) -> C64 {
        C64::new(self.rows[[0, j]], self.rows[[1, j]])
    }

    pub fn eps_q(&self, j: usize) -> C64 {
        C64::new(self.rows[[2, j]], self.rows[[3, j]])
    }

    pub fn max_amplitude(&self) -> f64 {
        (0..self.len())
            .map(|j| self.eps_c(j).norm().max(self.eps_q(j).norm()))
            .fold(0.0, f64::max)
    }
}

/// `w_r(t_j) = Σ_i c_{r,i} B_i(t_j)`.
pub fn synthesize(coeffs: &CoefficientSet, basis: &BasisMatrix) -> Result<Waveforms> {
    synthesize_with_gain(coeffs, basis, DriveGain::default())
}

pub fn synthesize_with_gain(
    coeffs: &CoefficientSet,
    basis: &BasisMatrix,
    gain: DriveGain,
) -> Result<Waveforms> {
    if coeffs.n_active() != basis.n_active() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients per control for a basis of {} splines",
            coeffs.n_active(),
            basis.n_active()
        )));
    }
    let cap = coeffs.max_abs();
    if cap > AMPLITUDE_CAP {
        return Err(Error::AmplitudeCap {
            value: cap,
            cap: AMPLITUDE_CAP,
        });
    }
    let mut rows = coeffs.matrix().dot(basis.values());
    for (r, mut row) in rows.rows_mut().into_iter().enumerate() {
        let g = if r < 2 { gain.cavity } else { gain.qubit };
        if g != 1.0 {
            row.mapv_inplace(|x| x * g);
        }
    }
    Ok(Waveforms {
        times: basis.times().to_vec(),
        rows,
    })
}
