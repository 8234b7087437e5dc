//! Small dense complex linear-algebra kernels.
//!
//! Everything here works on `ndarray` matrices of [`C64`]. Dimensions in this
//! crate stay below a few hundred, so plain O(n³) algorithms are adequate.

use ndarray::{Array2, Axis};

use crate::C64;

pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum()
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(a: &Array2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry of |A - A†|.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().iter().sum()
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));

    let eye = identity(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = PADE13.map(|x| C64::new(x, 0.0));

    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = scaled.dot(&(a6.dot(&inner_u) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1]));
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = a6.dot(&inner_v) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];

    let mut r = solve(&(&v - &u), &(&v + &u)).expect("Pade denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    r
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Option<Array2<C64>> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[[i, col]].norm().total_cmp(&lu[[j, col]].norm()))
            .unwrap();
        if lu[[pivot, col]].norm() == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                lu.swap([pivot, k], [col, k]);
            }
            for k in 0..x.ncols() {
                x.swap([pivot, k], [col, k]);
            }
        }
        let d = lu[[col, col]];
        for row in col + 1..n {
            let f = lu[[row, col]] / d;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = lu[[col, k]];
                lu[[row, k]] -= f * v;
            }
            for k in 0..x.ncols() {
                let v = x[[col, k]];
                x[[row, k]] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[[col, col]];
        for k in 0..x.ncols() {
            let mut s = x[[col, k]];
            for j in col + 1..n {
                s -= lu[[col, j]] * x[[j, k]];
            }
            x[[col, k]] = s / d;
        }
    }
    Some(x)
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// The complex problem is embedded in the real symmetric matrix
/// `[[Re H, -Im H], [Im H, Re H]]`, whose spectrum is that of `H` with every
/// eigenvalue doubled, and solved with cyclic Jacobi rotations.
pub fn hermitian_eigenvalues(h: &Array2<C64>) -> Vec<f64> {
    let n = h.nrows();
    let m = 2 * n;
    let mut s = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = 0.5 * (h[[i, j]] + h[[j, i]].conj());
            s[i * m + j] = z.re;
            s[(i + n) * m + (j + n)] = z.re;
            s[(i + n) * m + j] = z.im;
            s[i * m + (j + n)] = -z.im;
        }
    }
    jacobi_eigenvalues(&mut s, m);
    let mut eig: Vec<f64> = (0..m).map(|i| s[i * m + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig.into_iter().step_by(2).collect()
}

fn jacobi_eigenvalues(a: &mut [f64], n: usize) {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        let scale: f64 = (0..n).map(|i| a[i * n + i].powi(2)).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
            }
        }
    }
}

/// Trace distance ½‖A − B‖₁ between Hermitian matrices.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expm_of_pauli_rotation() {
        // exp(-i θ σx) = cos θ I - i sin θ σx
        let theta = 0.7;
        let a = array![[c(0.0, 0.0), c(0.0, -theta)], [c(0.0, -theta), c(0.0, 0.0)]];
        let e = expm(&a);
        assert!((e[[0, 0]] - c(theta.cos(), 0.0)).norm() < 1e-14);
        assert!((e[[0, 1]] - c(0.0, -theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_large_norm_diagonal() {
        let a = array![[c(-30.0, 2.0), c(0.0, 0.0)], [c(0.0, 0.0), c(3.0, -40.0)]];
        let e = expm(&a);
        assert!((e[[0, 0]] - c(-30.0, 2.0).exp()).norm() < 1e-24);
        assert!((e[[1, 1]] - c(3.0, -40.0).exp()).norm() / 3f64.exp() < 1e-12);
    }

    #[test]
    fn solve_recovers_identity() {
        let a = array![[c(2.0, 1.0), c(0.0, 1.0)], [c(1.0, 0.0), c(0.0, 3.0)]];
        let x = solve(&a, &identity(2)).unwrap();
        let p = a.dot(&x);
        assert!((p - identity(2)).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn hermitian_spectrum_of_sigma_y() {
        let sy = array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]];
        let e = hermitian_eigenvalues(&sy);
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
    }
}
