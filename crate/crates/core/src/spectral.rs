//! The two polynomials governing the generating function of the occupancy
//! offset walk, and the location of their zeros relative to the unit circle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FluidState, ModelParams};
use crate::poly;

/// Band around the unit circle in which a deflated root cannot be classified.
pub const CIRCLE_TOL: f64 = 1e-9;
/// Largest imaginary part tolerated for a root reported as real.
pub const REAL_TOL: f64 = 1e-9;
/// Relative separation below which two roots are treated as one.
pub const REPEATED_TOL: f64 = 1e-8;

/// Coefficients (lowest degree first) of `P1` (degree `A_J + 1`) and `P2`
/// (degree `2 A_J`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPair {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

impl PolyPair {
    pub fn p1_at(&self, z: Complex64) -> Complex64 {
        poly::eval_complex(&self.p1, z)
    }

    pub fn p2_at(&self, z: Complex64) -> Complex64 {
        poly::eval_complex(&self.p2, z)
    }

    /// `P1'(1) = sum_j (A_j mu_j ell_j - lambda_j)`.
    pub fn p1_slope_at_one(&self) -> f64 {
        poly::eval(&poly::derivative(&self.p1), 1.0)
    }

    /// `P2'(1) = sum_j A_j (lambda_j - mu_j ell_j)`.
    pub fn p2_slope_at_one(&self) -> f64 {
        poly::eval(&poly::derivative(&self.p2), 1.0)
    }
}

/// Zeros of `P1` and `P2` other than 1, split by the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootProfile {
    /// The real zero of `P1` beyond 1.
    pub z1: f64,
    pub p1_in_disk: Vec<Complex64>,
    /// The real zero of `P2` in `(0, 1)`; also listed in `p2_in_disk`.
    pub z2: f64,
    pub p2_in_disk: Vec<Complex64>,
    pub p2_out_disk: Vec<Complex64>,
}

impl RootProfile {
    /// All zeros of `P1` other than 1.
    pub fn p1_roots(&self) -> Vec<Complex64> {
        let mut r = self.p1_in_disk.clone();
        r.push(Complex64::new(self.z1, 0.0));
        r
    }

    /// All zeros of `P2` other than 1.
    pub fn p2_roots(&self) -> Vec<Complex64> {
        let mut r = self.p2_in_disk.clone();
        r.extend_from_slice(&self.p2_out_disk);
        r
    }
}

/// Builds `P1` and `P2` at fluid state `ell`:
///
/// ```text
/// P1(z) = sum_j (lambda_j + mu_j l_j) z^AJ - lambda_j z^(AJ+1) - mu_j l_j z^(AJ-A_j)
/// P2(z) = sum_j lambda_j z^(AJ+A_j) + mu_j l_j z^(AJ-A_j) - (lambda_j + mu_j l_j) z^AJ
/// ```
pub fn build_polynomials(params: &ModelParams, ell: &FluidState) -> Result<PolyPair> {
    params.check_structure()?;
    if ell.ell.len() != params.classes() || ell.ell.iter().any(|x| *x < 0.0) {
        return Err(Error::StructuralInvalid(
            "fluid state must have one nonnegative component per class".into(),
        ));
    }
    let aj = params.a_max() as usize;
    if aj < 2 || params.lambda_a() <= 0.0 {
        return Err(Error::DegenerateModel(
            "no arrivals request more than one unit (Lambda_A = 0)".into(),
        ));
    }
    let mut p1 = vec![0.0; aj + 2];
    let mut p2 = vec![0.0; 2 * aj + 1];
    for j in 0..params.classes() {
        let a = params.a[j] as usize;
        let lam = params.lambda[j];
        let out = params.mu[j] * ell.ell[j];
        p1[aj] += lam + out;
        p1[aj + 1] -= lam;
        p1[aj - a] -= out;
        p2[aj + a] += lam;
        p2[aj - a] += out;
        p2[aj] -= lam + out;
    }
    Ok(PolyPair { p1, p2 })
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= REAL_TOL * z.norm().max(1.0)
}

fn check_off_circle(poly: &'static str, roots: &[Complex64]) -> Result<()> {
    if let Some(z) = roots.iter().find(|z| (z.norm() - 1.0).abs() <= CIRCLE_TOL) {
        return Err(Error::RootCountMismatch {
            poly,
            detail: format!("root {z} lies on the unit circle"),
        });
    }
    Ok(())
}

fn deflated_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let (deflated, _) = poly::synthetic_division(coeffs, 1.0);
    poly::roots(&deflated, coeffs)
}

/// Finds every zero of `P1` and `P2`, removes the common zero at 1 and
/// classifies the rest against the unit circle.
pub fn locate_roots(pair: &PolyPair) -> Result<RootProfile> {
    let aj = (pair.p2.len() - 1) / 2;
    if pair.p1.len() != aj + 2 || aj < 2 {
        return Err(Error::StructuralInvalid("malformed polynomial pair".into()));
    }
    if pair.p2[2 * aj] == 0.0 || pair.p2[0] == 0.0 || pair.p1[aj + 1] == 0.0 {
        return Err(Error::DegenerateModel(
            "the largest class needs positive arrival rate and positive occupation".into(),
        ));
    }

    let r1 = deflated_roots(&pair.p1)?;
    check_off_circle("P1", &r1)?;
    let (p1_out, p1_in): (Vec<_>, Vec<_>) = r1.into_iter().partition(|z| z.norm() > 1.0);
    if p1_out.len() != 1 || p1_in.len() != aj - 1 {
        return Err(Error::RootCountMismatch {
            poly: "P1",
            detail: format!(
                "expected 1 root outside and {} inside the unit disk, found {} and {}",
                aj - 1,
                p1_out.len(),
                p1_in.len()
            ),
        });
    }
    let z1 = p1_out[0];
    if !is_real(z1) || z1.re <= 1.0 {
        return Err(Error::RootCountMismatch {
            poly: "P1",
            detail: format!("outer root {z1} is not real and greater than 1"),
        });
    }

    let r2 = deflated_roots(&pair.p2)?;
    check_off_circle("P2", &r2)?;
    for (k, a) in r2.iter().enumerate() {
        if r2[k + 1..]
            .iter()
            .any(|b| (a - b).norm() <= REPEATED_TOL * a.norm().max(1.0))
        {
            return Err(Error::RepeatedRootDetected { re: a.re, im: a.im });
        }
    }
    let (p2_out, mut p2_in): (Vec<_>, Vec<_>) = r2.into_iter().partition(|z| z.norm() > 1.0);
    if p2_in.len() != aj || p2_out.len() != aj - 1 {
        return Err(Error::RootCountMismatch {
            poly: "P2",
            detail: format!(
                "expected {} roots inside and {} outside the unit disk, found {} and {}",
                aj,
                aj - 1,
                p2_in.len(),
                p2_out.len()
            ),
        });
    }
    let positive: Vec<usize> = (0..p2_in.len())
        .filter(|&k| is_real(p2_in[k]) && p2_in[k].re > 0.0)
        .collect();
    if positive.len() != 1 {
        return Err(Error::RootCountMismatch {
            poly: "P2",
            detail: format!(
                "expected exactly one positive real root in the disk, found {}",
                positive.len()
            ),
        });
    }
    let z2 = p2_in[positive[0]].re;
    p2_in[positive[0]] = Complex64::new(z2, 0.0);

    Ok(RootProfile {
        z1: z1.re,
        p1_in_disk: p1_in,
        z2,
        p2_in_disk: p2_in,
        p2_out_disk: p2_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video() -> (ModelParams, FluidState) {
        let p = ModelParams::new(vec![1, 2], vec![0.0, 0.7], vec![1.0, 1.0], 1.0, 0.95);
        let s = FluidState::new(&p, vec![0.45, 0.25]).unwrap();
        (p, s)
    }

    #[test]
    fn video_polynomials() {
        let (p, s) = video();
        let pair = build_polynomials(&p, &s).unwrap();
        let want1 = [-0.25, -0.45, 1.4, -0.7];
        let want2 = [0.25, 0.45, -1.4, 0.0, 0.7];
        for (g, w) in pair.p1.iter().zip(want1) {
            assert!((g - w).abs() < 1e-15);
        }
        for (g, w) in pair.p2.iter().zip(want2) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(poly::eval(&pair.p1, 1.0).abs() < 1e-12);
        assert!(poly::eval(&pair.p2, 1.0).abs() < 1e-12);
    }

    #[test]
    fn slopes_at_one() {
        let (p, s) = video();
        let pair = build_polynomials(&p, &s).unwrap();
        // sum_j (A_j mu_j l_j - lambda_j) and sum_j A_j (lambda_j - mu_j l_j)
        assert!((pair.p1_slope_at_one() - (0.45 + 0.5 - 0.7)).abs() < 1e-12);
        assert!((pair.p2_slope_at_one() - (-0.45 + 2.0 * (0.7 - 0.25))).abs() < 1e-12);
    }

    #[test]
    fn video_roots() {
        let (p, s) = video();
        let pair = build_polynomials(&p, &s).unwrap();
        let prof = locate_roots(&pair).unwrap();
        let z1 = (0.7 + (0.49f64 + 0.7).sqrt()) / 1.4;
        assert!((prof.z1 - z1).abs() < 1e-12, "{} vs {}", prof.z1, z1);
        assert_eq!(prof.p1_in_disk.len(), 1);
        assert_eq!(prof.p2_in_disk.len(), 2);
        assert_eq!(prof.p2_out_disk.len(), 1);
        assert!(prof.z2 > 0.0 && prof.z2 < 1.0);
        // every other in-disk root of P2 is inside D(z2)
        assert!(prof
            .p2_in_disk
            .iter()
            .filter(|q| q.re != prof.z2)
            .all(|q| q.norm() < prof.z2));
        // Vieta: 1 + sum of roots = -p2[3]/p2[4] = 0
        let sum: Complex64 = prof.p2_roots().iter().sum();
        assert!((sum + 1.0).norm() < 1e-8);
    }

    #[test]
    fn degenerate_when_no_wide_class_arrives() {
        let p = ModelParams::new(vec![1, 2], vec![0.7, 0.0], vec![1.0, 1.0], 1.0, 0.95);
        let s = FluidState::new(&p, vec![0.5, 0.2]).unwrap();
        assert!(matches!(build_polynomials(&p, &s), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn off_delta0_state_is_rejected() {
        // P1'(1) < 0: the walk drifts to -inf above zero and P1 loses its outer root
        let p = ModelParams::new(vec![1, 2], vec![0.0, 0.7], vec![1.0, 1.0], 1.0, 0.95);
        let s = FluidState::new(&p, vec![0.1, 0.2]).unwrap();
        let pair = build_polynomials(&p, &s).unwrap();
        assert!(matches!(
            locate_roots(&pair),
            Err(Error::RootCountMismatch { .. })
        ));
    }
}
