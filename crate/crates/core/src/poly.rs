//! Dense univariate polynomials with coefficients stored lowest degree first.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn eval(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

pub fn eval_complex(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn eval_complex_coeffs(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Divides by `(z - root)`; returns the quotient and the remainder `p(root)`.
pub fn synthetic_division<T>(coeffs: &[T], root: T) -> (Vec<T>, T)
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + Default,
{
    let Some((&lead, rest)) = coeffs.split_last() else {
        return (Vec::new(), T::default());
    };
    let mut quotient = vec![T::default(); rest.len()];
    let mut carry = lead;
    for (k, &c) in rest.iter().enumerate().rev() {
        quotient[k] = carry;
        carry = c + root * carry;
    }
    (quotient, carry)
}

/// Monic polynomial `prod (z - r)`.
pub fn from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= r * c;
        }
        coeffs = next;
    }
    coeffs
}

pub fn norm(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Strips trailing (highest degree) zero coefficients.
pub fn trim(mut coeffs: Vec<f64>) -> Vec<f64> {
    while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
        coeffs.pop();
    }
    coeffs
}

/// Companion matrix of the monic polynomial with coefficients `coeffs / lead`.
fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let d = coeffs.len() - 1;
    let lead = coeffs[d];
    let mut m = DMatrix::zeros(d, d);
    for k in 0..d {
        m[(0, k)] = -coeffs[d - 1 - k] / lead;
    }
    for k in 1..d {
        m[(k, k - 1)] = 1.0;
    }
    m
}

/// Diagonal similarity scaling by powers of two so rows and columns have
/// comparable norms before the eigenvalue iteration.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0_f64;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += m[(j, i)].abs();
                    row += m[(i, j)].abs();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let sum = col + row;
            let mut f = 1.0;
            let mut c = col;
            while c < row / radix {
                c *= radix;
                f *= radix;
            }
            while c >= row * radix {
                c /= radix;
                f /= radix;
            }
            if (c + row / f) / f < 0.95 * sum {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// All complex roots of a polynomial whose leading coefficient is nonzero.
///
/// Eigenvalues of the balanced companion matrix, each followed by up to two
/// Newton steps on `polish` (kept only when they reduce the residual).
pub fn roots(coeffs: &[f64], polish: &[f64]) -> Result<Vec<Complex64>> {
    let coeffs = trim(coeffs.to_vec());
    let d = coeffs.len() - 1;
    if d == 0 {
        return Ok(Vec::new());
    }
    if d == 1 {
        return Ok(vec![Complex64::new(-coeffs[0] / coeffs[1], 0.0)]);
    }
    // Highly symmetric inputs (e.g. z^n - 1) can stall the unshifted QR
    // iteration; a real shift of the variable breaks the symmetry.
    let eig = [0.0, 0.0625, -0.1875]
        .iter()
        .find_map(|&shift| {
            companion_eigenvalues(&taylor_shift(&coeffs, shift))
                .map(|e| e.into_iter().map(|z| z + shift).collect::<Vec<_>>())
        })
        .ok_or(Error::EigenFailure)?;
    let dpolish = derivative(polish);
    Ok(eig
        .iter()
        .map(|&z| newton_polish(polish, &dpolish, z, 2))
        .collect())
}

fn companion_eigenvalues(coeffs: &[f64]) -> Option<Vec<Complex64>> {
    let mut m = companion(coeffs);
    balance(&mut m);
    let schur = Schur::try_new(m, f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Coefficients of `p(w + shift)`.
pub fn taylor_shift(coeffs: &[f64], shift: f64) -> Vec<f64> {
    if shift == 0.0 {
        return coeffs.to_vec();
    }
    let mut rest = coeffs.to_vec();
    let mut out = Vec::with_capacity(coeffs.len());
    while !rest.is_empty() {
        let (q, r) = synthetic_division(&rest, shift);
        out.push(r);
        rest = q;
    }
    out
}

fn newton_polish(p: &[f64], dp: &[f64], mut z: Complex64, steps: usize) -> Complex64 {
    let mut res = eval_complex(p, z).norm();
    for _ in 0..steps {
        let d = eval_complex(dp, z);
        if d.norm() == 0.0 {
            break;
        }
        let cand = z - eval_complex(p, z) / d;
        let cres = eval_complex(p, cand).norm();
        if cres < res && cand.is_finite() {
            z = cand;
            res = cres;
        } else {
            break;
        }
    }
    z
}
