//! Explicit invariant distribution of the occupancy offset walk at a state of
//! `Delta0`, assembled from the zeros of `P1` and `P2` by partial fractions.
//!
//! With `R_D(z) = prod_{q in D} (z - q)` over the in-disk zeros of `P2` and
//! `kappa = (z1 - 1) R_D(1) / Lambda_A`, the law is
//!
//! ```text
//! pi(n) = kappa * sum_q w_q q^(-n-1)                   n < 0
//!       = kappa * (alpha_n + T z1^(-n-1))              0 <= n < A_J - 1
//!       = kappa * T z1^(-n-1)                          n >= A_J - 1
//! ```
//!
//! where `w_q = -P1(q) / ((q - z1)(q - 1) R_D'(q))`, `T = P2(z1) / ((z1 - 1) R_D(z1))`
//! and `alpha_n` are the coefficients of `-lambda_J (R_Dc(z) - R_Dc(z1)) / (z - z1)`,
//! `R_Dc` being the monic polynomial of the out-of-disk zeros of `P2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FluidState, ModelParams, RegionTag};
use crate::poly;
use crate::spectral::{self, PolyPair, RootProfile};

/// Largest imaginary residue tolerated when a product over conjugate pairs is
/// taken as real.
const REAL_PRODUCT_TOL: f64 = 1e-9;
/// Distance to a pole below which the generating functions are not evaluated.
const POLE_TOL: f64 = 1e-8;
/// Relative distance from the fixed point accepted by [`InvariantDistribution::moments`].
const FIXED_POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantDistribution {
    pub kappa: f64,
    pub z1: f64,
    /// In-disk zeros of `P2`.
    pub roots_d: Vec<Complex64>,
    /// `alpha_0 .. alpha_{A_J - 2}`.
    pub alpha: Vec<f64>,
    /// Geometric tail prefactor `T`.
    pub tail_const: f64,
    /// Residue weights `w_q`, aligned with `roots_d`.
    pub neg_weights: Vec<Complex64>,
    pub state: FluidState,
    pub polys: PolyPair,
    pub roots: RootProfile,
    /// Monic polynomial of the out-of-disk zeros of `P2`, lowest degree first.
    pub outer_poly: Vec<f64>,
    lambda_a: f64,
    lambda_total: f64,
    lambda_top: f64,
    a_max: u32,
}

/// Closed-form mean, variance and third central moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
    pub standardized_skew: f64,
    /// `theta_i = sum_j lambda_j A_j^(i-1) (A_j - 1)` for `i = 1..4`.
    pub theta: [f64; 4],
    /// `S(1)`, `S'(1)`, `S''(1)` with `S(z) = 1/(z - z1) + sum_{q in D} 1/(z - q)`.
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Moments obtained by summing the distribution branch by branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummedMoments {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
}

fn real_part_checked(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() > REAL_PRODUCT_TOL * z.norm().max(1.0) {
        return Err(Error::RootCountMismatch {
            poly: "P2",
            detail: format!("{what} has imaginary part {:e}; roots are not in conjugate pairs", z.im),
        });
    }
    Ok(z.re)
}

fn product_at(roots: &[Complex64], z: Complex64) -> Complex64 {
    roots.iter().map(|q| z - q).product()
}

impl InvariantDistribution {
    /// Builds the invariant law of the offset walk at `ell`, which must lie in `Delta0`.
    pub fn build(params: &ModelParams, ell: &FluidState) -> Result<Self> {
        let tag = params.classify(ell)?;
        if tag != RegionTag::Delta0 {
            return Err(Error::NotErgodic(tag));
        }
        let polys = spectral::build_polynomials(params, ell)?;
        let roots = spectral::locate_roots(&polys)?;
        let z1 = roots.z1;
        let z1c = Complex64::new(z1, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let lambda_a = params.lambda_a();
        let lambda_top = *params.lambda.last().unwrap();

        let roots_d = roots.p2_in_disk.clone();
        let rd_one = real_part_checked(product_at(&roots_d, one), "R_D(1)")?;
        let kappa = (z1 - 1.0) * rd_one / lambda_a;

        let outer_c = poly::from_roots(&roots.p2_out_disk);
        let outer_poly = outer_c
            .iter()
            .map(|c| real_part_checked(*c, "R_Dc coefficient"))
            .collect::<Result<Vec<f64>>>()?;
        let (quotient, _) = poly::synthetic_division(&outer_poly, z1);
        let alpha: Vec<f64> = quotient.iter().map(|q| -lambda_top * q).collect();

        let rd_z1 = real_part_checked(product_at(&roots_d, z1c), "R_D(z1)")?;
        let tail_const = poly::eval(&polys.p2, z1) / ((z1 - 1.0) * rd_z1);

        let neg_weights = roots_d
            .iter()
            .enumerate()
            .map(|(k, &q)| {
                let rd_prime: Complex64 = roots_d
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != k)
                    .map(|(_, &p)| q - p)
                    .product();
                -polys.p1_at(q) / ((q - z1) * (q - 1.0) * rd_prime)
            })
            .collect();

        Ok(InvariantDistribution {
            kappa,
            z1,
            roots_d,
            alpha,
            tail_const,
            neg_weights,
            state: ell.clone(),
            polys,
            roots,
            outer_poly,
            lambda_a,
            lambda_total: params.lambda_total(),
            lambda_top,
            a_max: params.a_max(),
        })
    }

    /// Convenience constructor at the fixed point of `params`.
    pub fn at_fixed_point(params: &ModelParams) -> Result<Self> {
        let fp = params.fixed_point()?;
        Self::build(params, &fp.state)
    }

    /// `pi(n)` before discarding the imaginary residue of the `n < 0` branch.
    pub fn evaluate_complex(&self, n: i64) -> Complex64 {
        let head = self.a_max as i64 - 1;
        if n < 0 {
            let k = -(n + 1);
            if k > i32::MAX as i64 {
                return Complex64::new(0.0, 0.0);
            }
            let sum: Complex64 = self
                .roots_d
                .iter()
                .zip(&self.neg_weights)
                .map(|(q, w)| w * q.powi(k as i32))
                .sum();
            sum * self.kappa
        } else {
            let geometric = self.tail_const * self.z1.powf(-(n as f64) - 1.0);
            let v = if n < head {
                self.alpha[n as usize] + geometric
            } else {
                geometric
            };
            Complex64::new(self.kappa * v, 0.0)
        }
    }

    pub fn evaluate(&self, n: i64) -> f64 {
        self.evaluate_complex(n).re
    }

    /// `pi(Z_-^*)` summed in closed form from the residues.
    pub fn negative_mass(&self) -> f64 {
        let s: Complex64 = self
            .roots_d
            .iter()
            .zip(&self.neg_weights)
            .map(|(q, w)| w / (1.0 - q))
            .sum();
        self.kappa * s.re
    }

    /// `P(Y >= k)`, with every infinite branch summed in closed form.
    pub fn tail_at_or_above(&self, k: i64) -> f64 {
        let head = self.a_max as i64 - 1;
        if k >= head {
            return self.kappa * self.tail_const * self.z1.powf(-(k as f64)) / (self.z1 - 1.0);
        }
        if k >= 0 {
            let middle: f64 = self.alpha[k as usize..].iter().sum();
            return self.kappa
                * (middle + self.tail_const * self.z1.powf(-(k as f64)) / (self.z1 - 1.0));
        }
        // P(Y >= 0) plus the residue sums over k..=-1
        let count = -k;
        let partial: Complex64 = self
            .roots_d
            .iter()
            .zip(&self.neg_weights)
            .map(|(q, w)| {
                let qk = if count > i32::MAX as i64 {
                    Complex64::new(0.0, 0.0)
                } else {
                    q.powi(count as i32)
                };
                w * (1.0 - qk) / (1.0 - q)
            })
            .sum();
        self.tail_at_or_above(0) + self.kappa * partial.re
    }

    /// Total mass of the three branches, summed in closed form.
    pub fn total_mass(&self) -> f64 {
        self.negative_mass() + self.tail_at_or_above(0)
    }

    /// Pole-free closed forms of the generating-function halves
    /// `phi+(z) = E[z^Y; Y >= 0]` and `phi-(z) = E[z^Y; Y < 0]`.
    pub fn generating_split(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let poles = std::iter::once(Complex64::new(self.z1, 0.0)).chain(self.roots_d.iter().copied());
        if let Some(d) = poles.map(|p| (z - p).norm()).find(|d| *d < POLE_TOL) {
            return Err(Error::PoleProximity { distance: d });
        }
        let phi_plus = -self.kappa * self.lambda_top * poly::eval_complex(&self.outer_poly, z)
            / (z - self.z1);
        let phi_minus = self.kappa * self.lambda_total * product_at(&self.roots.p1_in_disk, z)
            / product_at(&self.roots_d, z);
        Ok((phi_plus, phi_minus))
    }

    /// Mean, variance and third central moment from the log-derivatives of the
    /// generating function at 1. Only offered at the fixed point.
    pub fn moments(&self, params: &ModelParams) -> Result<MomentSummary> {
        let fp = params.fixed_point()?;
        let scale = fp.state.ell.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let dist = fp.state.distance(&self.state);
        if dist > FIXED_POINT_TOL * scale {
            return Err(Error::NotFixedPoint(dist));
        }
        let theta: [f64; 4] = std::array::from_fn(|i| {
            params
                .a
                .iter()
                .zip(&params.lambda)
                .map(|(&a, l)| l * (a as f64).powi(i as i32) * (a as f64 - 1.0))
                .sum()
        });
        let [t1, t2, t3, t4] = theta;
        let poles = std::iter::once(Complex64::new(self.z1, 0.0)).chain(self.roots_d.iter().copied());
        let (mut s0, mut s1, mut s2) = (Complex64::default(), Complex64::default(), Complex64::default());
        for p in poles {
            let d = 1.0 - p;
            s0 += 1.0 / d;
            s1 -= 1.0 / (d * d);
            s2 += 2.0 / (d * d * d);
        }
        let (s0, s1, s2) = (s0.re, s1.re, s2.re);
        let half = t2 / (2.0 * t1);
        let mean = self.a_max as f64 + half - s0;
        let variance = (2.0 * t3 - t2) / (6.0 * t1) - half * half - (s0 + s1);
        let third_central = t2.powi(3) / (4.0 * t1.powi(3))
            + t2 * (t2 - 2.0 * t3) / (4.0 * t1 * t1)
            + (t4 - t3) / (4.0 * t1)
            - (s0 + 3.0 * s1 + s2);
        Ok(MomentSummary {
            mean,
            variance,
            third_central,
            standardized_skew: third_central / variance.powf(1.5),
            theta,
            s0,
            s1,
            s2,
        })
    }

    /// First three moments by summing `n^p pi(n)` over each branch, with the
    /// geometric and residue series summed analytically. Valid at any `Delta0` state.
    pub fn summed_moments(&self) -> SummedMoments {
        // sum_{m >= 1} m^p x^(m-1) for p = 1, 2, 3
        let neg_series = |x: Complex64| {
            let d = 1.0 - x;
            [
                1.0 / (d * d),
                (1.0 + x) / (d * d * d),
                (1.0 + 4.0 * x + x * x) / (d * d * d * d),
            ]
        };
        let mut raw = [0.0_f64; 3];
        for (q, w) in self.roots_d.iter().zip(&self.neg_weights) {
            let s = neg_series(*q);
            // n = -m contributes (-m)^p
            raw[0] -= (w * s[0]).re * self.kappa;
            raw[1] += (w * s[1]).re * self.kappa;
            raw[2] -= (w * s[2]).re * self.kappa;
        }
        for (n, a) in self.alpha.iter().enumerate() {
            let n = n as f64;
            raw[0] += self.kappa * a * n;
            raw[1] += self.kappa * a * n * n;
            raw[2] += self.kappa * a * n * n * n;
        }
        // sum_{n >= 0} n^p r^n with r = 1/z1, times T r
        let r = 1.0 / self.z1;
        let d = 1.0 - r;
        let pre = self.kappa * self.tail_const * r;
        raw[0] += pre * r / (d * d);
        raw[1] += pre * r * (1.0 + r) / (d * d * d);
        raw[2] += pre * r * (1.0 + 4.0 * r + r * r) / (d * d * d * d);

        let mean = raw[0];
        let variance = raw[1] - mean * mean;
        let third_central = raw[2] - 3.0 * mean * raw[1] + 2.0 * mean.powi(3);
        SummedMoments {
            mean,
            variance,
            third_central,
        }
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }
}
