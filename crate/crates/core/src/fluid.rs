//! Fluid limit of the scaled occupation `L^N / N`.
//!
//! Each class follows `d l_j/dt = lambda_j p_j - mu_j l_j`, where the
//! admission split `p_j` is set by the law of the fast occupancy offset:
//! class `j >= 2` is admitted at its own rate with probability `pi_l(Z_-^*)`
//! and the rest of its arrivals join class 1. Below the threshold that
//! probability is 1; on `Delta0` it is the closed form
//! [`ModelParams::negative_mass`], which keeps the flow on the hyperplane.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FluidState, ModelParams, RegionTag};

/// Largest fractional change of a component allowed in one step.
const MAX_STEP_CHANGE: f64 = 0.1;
/// Time resolution of the threshold hitting time.
const HIT_TIME_TOL: f64 = 1e-10;
const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FluidState>,
    pub region_tags: Vec<RegionTag>,
}

impl FluidTrajectory {
    pub fn last(&self) -> &FluidState {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// Least-squares slope of `ln |l(t) - target|` over the samples whose
    /// distance lies in `[lo, hi]`.
    pub fn decay_rate(&self, target: &FluidState, lo: f64, hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.states)
            .filter_map(|(&t, s)| {
                let d = s.distance(target);
                (d >= lo && d <= hi).then(|| (t, d.ln()))
            })
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// Keeps every `k`-th sample plus the last one.
    pub fn decimate(&self, k: usize) -> FluidTrajectory {
        let k = k.max(1);
        let last = self.times.len() - 1;
        let keep: Vec<usize> = (0..=last).filter(|i| i % k == 0 || *i == last).collect();
        FluidTrajectory {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            states: keep.iter().map(|&i| self.states[i].clone()).collect(),
            region_tags: keep.iter().map(|&i| self.region_tags[i]).collect(),
        }
    }
}

/// Linearisation of the flow on the hyperplane in the coordinates `l_2..l_J`:
/// `dz/dt = e_b + B z`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    /// Row-major `(J-1) x (J-1)` matrix `B_jk = lambda_j b_k - mu_j 1{j = k}`.
    pub b_matrix: Vec<Vec<f64>>,
    pub e_b: Vec<f64>,
    /// `b_0 = (mu_1 c0 - Lambda) / Lambda_A`.
    pub b0: f64,
    /// `b_j = A_j (mu_j - mu_1) / Lambda_A` for `j >= 2`.
    pub b: Vec<f64>,
    pub determinant: f64,
    /// `F(0) = sum_j b_j lambda_j / mu_j`; the spectrum is stable when below 1.
    pub f0: f64,
    /// `-B^{-1} e_b`, the limit of `(l_2..l_J)`.
    pub equilibrium: Vec<f64>,
}

fn admitted_fraction(params: &ModelParams, x: &[f64], tag: RegionTag) -> f64 {
    match tag {
        RegionTag::Delta0 => params.negative_mass(x),
        RegionTag::DeltaMinus | RegionTag::InteriorBelow => 1.0,
        RegionTag::DeltaPlus | RegionTag::InteriorAbove => 0.0,
    }
}

fn field_with(params: &ModelParams, x: &[f64], below: f64) -> Vec<f64> {
    let diverted: f64 = params.lambda[1..].iter().sum::<f64>() * (1.0 - below);
    (0..params.classes())
        .map(|j| {
            let inflow = if j == 0 {
                params.lambda[0] + diverted
            } else {
                params.lambda[j] * below
            };
            inflow - params.mu[j] * x[j]
        })
        .collect()
}

/// `dl/dt` at `state`, with the admission split chosen by its region.
pub fn vector_field(params: &ModelParams, state: &FluidState) -> Result<Vec<f64>> {
    let tag = params.classify(state)?;
    Ok(field_with(
        params,
        &state.ell,
        admitted_fraction(params, &state.ell, tag),
    ))
}

/// Right-hand side of the hyperplane dynamics written out directly:
///
/// ```text
/// dy_1/dt = -mu_1 y_1 + lambda_1 + (sum_{k>=2} lambda_k) sum_k A_k (lambda_k - mu_k y_k) / Lambda_A
/// dy_j/dt = -mu_j y_j + lambda_j sum_k (A_k mu_k y_k - lambda_k) / Lambda_A
/// ```
pub fn boundary_field(params: &ModelParams, y: &[f64]) -> Vec<f64> {
    let la = params.lambda_a();
    let upper: f64 = params.lambda[1..].iter().sum();
    let up: f64 = (0..params.classes())
        .map(|k| params.a[k] as f64 * (params.lambda[k] - params.mu[k] * y[k]))
        .sum();
    let down: f64 = (0..params.classes())
        .map(|k| params.a[k] as f64 * params.mu[k] * y[k] - params.lambda[k])
        .sum();
    (0..params.classes())
        .map(|j| {
            if j == 0 {
                -params.mu[0] * y[0] + params.lambda[0] + upper * up / la
            } else {
                -params.mu[j] * y[j] + params.lambda[j] * down / la
            }
        })
        .collect()
}

fn rk4<F>(x: &[f64], h: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(a, b)| a + s * b).collect()
    };
    let k1 = f(x);
    let k2 = f(&axpy(x, h / 2.0, &k1));
    let k3 = f(&axpy(x, h / 2.0, &k2));
    let k4 = f(&axpy(x, h, &k3));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Moves `x` onto the threshold hyperplane by adjusting the class-1 component.
fn project(params: &ModelParams, x: &mut [f64]) {
    let upper: f64 = (1..params.classes())
        .map(|j| params.a[j] as f64 * x[j])
        .sum();
    x[0] = params.c0 - upper;
}

/// Default step, a thousandth of the fastest service time.
pub fn default_step(params: &ModelParams) -> f64 {
    let mu_max = params.mu.iter().cloned().fold(0.0, f64::max);
    1e-3 / mu_max
}

/// Integrates the fluid dynamics from `ell0` up to `horizon` with fixed-step RK4.
///
/// Below the threshold the free flow is followed until the occupancy reaches
/// `c0`; the hitting time is located by bisection and the state placed on the
/// hyperplane, after which every step is re-projected onto it.
pub fn integrate(
    params: &ModelParams,
    ell0: &FluidState,
    horizon: f64,
    step: f64,
) -> Result<FluidTrajectory> {
    params.check_structure()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::StructuralInvalid(format!("step must be positive, got {step}")));
    }
    if params.lambda_a() <= 0.0 {
        return Err(Error::DegenerateModel("Lambda_A = 0".into()));
    }
    let mut x = ell0.ell.clone();
    let mut tag = params.classify(ell0)?;
    if tag == RegionTag::Delta0 {
        project(params, &mut x);
    }
    let mut t = 0.0;
    let mut traj = FluidTrajectory {
        times: vec![0.0],
        states: vec![FluidState::from_raw(params, x.clone())],
        region_tags: vec![tag],
    };
    let band = params.hyperplane_band();

    while t < horizon * (1.0 - 1e-15) {
        let h = step.min(horizon - t);
        let (next, dt, next_tag) = match tag {
            RegionTag::DeltaPlus | RegionTag::InteriorAbove => {
                return Err(Error::RegionUnsupported(tag));
            }
            RegionTag::Delta0 => {
                let mut y = rk4(&x, h, |v| field_with(params, v, params.negative_mass(v)));
                project(params, &mut y);
                let s = FluidState::from_raw(params, y.clone());
                (y, h, params.classify(&s)?)
            }
            RegionTag::DeltaMinus | RegionTag::InteriorBelow => {
                let free = |v: &[f64]| field_with(params, v, 1.0);
                let y = rk4(&x, h, free);
                if params.dot_a(&y) > params.c0 + band {
                    // bisect for the step length that lands on the hyperplane
                    let (mut lo, mut hi) = (0.0, h);
                    while hi - lo > HIT_TIME_TOL {
                        let mid = 0.5 * (lo + hi);
                        if params.dot_a(&rk4(&x, mid, free)) > params.c0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let mut y = rk4(&x, hi, free);
                    project(params, &mut y);
                    let s = FluidState::from_raw(params, y.clone());
                    (y, hi, params.classify(&s)?)
                } else {
                    let s = FluidState::from_raw(params, y.clone());
                    (y, h, params.classify(&s)?)
                }
            }
        };
        for (j, (a, b)) in x.iter().zip(&next).enumerate() {
            let delta = (b - a).abs();
            if delta > MAX_STEP_CHANGE * a.abs().max(params.c0) {
                return Err(Error::StepTooLarge { t, component: j, delta });
            }
        }
        t += dt;
        x = next;
        tag = next_tag;
        traj.times.push(t);
        traj.states.push(FluidState::from_raw(params, x.clone()));
        traj.region_tags.push(tag);
    }
    Ok(traj)
}

/// Builds `B` and `e_b` at the current threshold and analyses their spectrum.
pub fn stability_report(params: &ModelParams) -> Result<StabilityReport> {
    params.require_threshold_regime()?;
    let j = params.classes();
    let la = params.lambda_a();
    if j < 2 || la <= 0.0 {
        return Err(Error::DegenerateModel(
            "stability analysis needs a class requesting more than one unit".into(),
        ));
    }
    let mu1 = params.mu[0];
    let b0 = (mu1 * params.c0 - params.lambda_total()) / la;
    let b: Vec<f64> = (1..j)
        .map(|k| params.a[k] as f64 * (params.mu[k] - mu1) / la)
        .collect();
    let n = j - 1;
    let bm = DMatrix::from_fn(n, n, |r, c| {
        params.lambda[r + 1] * b[c] - if r == c { params.mu[r + 1] } else { 0.0 }
    });
    let e_b: Vec<f64> = params.lambda[1..].iter().map(|l| b0 * l).collect();
    let determinant = bm.clone().lu().determinant();
    if determinant.abs() < SINGULAR_DET {
        return Err(Error::SingularB(determinant.abs()));
    }
    let eigenvalues: Vec<Complex64> = Schur::try_new(bm.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let rhs = -DVector::from_vec(e_b.clone());
    let equilibrium = bm
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularB(determinant.abs()))?
        .iter()
        .copied()
        .collect();
    let f0 = (1..j)
        .map(|k| b[k - 1] * params.lambda[k] / params.mu[k])
        .sum();
    Ok(StabilityReport {
        eigenvalues,
        max_real_part,
        b_matrix: (0..n).map(|r| (0..n).map(|c| bm[(r, c)]).collect()).collect(),
        e_b,
        b0,
        b,
        determinant,
        f0,
        equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video() -> ModelParams {
        ModelParams::new(vec![1, 2], vec![0.0, 0.7], vec![1.0, 1.0], 1.0, 0.95)
    }

    fn mixed() -> ModelParams {
        ModelParams::new(
            vec![1, 2, 4],
            vec![0.2, 0.3, 0.3],
            vec![1.0, 1.5, 2.5],
            1.0,
            0.9,
        )
    }

    #[test]
    fn field_vanishes_at_fixed_point() {
        for p in [video(), mixed()] {
            let fp = p.fixed_point().unwrap();
            let f = vector_field(&p, &fp.state).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        }
    }

    #[test]
    fn free_field_below_threshold() {
        let p = mixed();
        let s = FluidState::new(&p, vec![0.1, 0.1, 0.05]).unwrap();
        let f = vector_field(&p, &s).unwrap();
        for j in 0..3 {
            assert!((f[j] - (p.lambda[j] - p.mu[j] * s.ell[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn field_is_tangent_to_hyperplane() {
        let p = video();
        let s = FluidState::new(&p, vec![0.55, 0.2]).unwrap();
        assert_eq!(p.classify(&s).unwrap(), RegionTag::Delta0);
        let f = vector_field(&p, &s).unwrap();
        assert!(p.dot_a(&f).abs() < 1e-14);
        let g = boundary_field(&p, &s.ell);
        assert!(f.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn equal_service_rates_give_diagonal_b() {
        let p = ModelParams::new(
            vec![1, 2, 4, 8, 16],
            vec![0.25, 0.2, 0.15, 0.1, 0.05],
            vec![1.0; 5],
            1.0,
            0.97,
        );
        let r = stability_report(&p).unwrap();
        assert!(r.b.iter().all(|b| *b == 0.0));
        for (i, row) in r.b_matrix.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == k { -1.0 } else { 0.0 });
            }
        }
        assert!(r.eigenvalues.iter().all(|z| (z.re + 1.0).abs() < 1e-12));
    }

    #[test]
    fn equilibrium_of_linear_system_is_fixed_point() {
        let p = mixed();
        let r = stability_report(&p).unwrap();
        let fp = p.fixed_point().unwrap();
        for (k, z) in r.equilibrium.iter().enumerate() {
            assert!((z - fp.state.ell[k + 1]).abs() < 1e-10);
        }
        assert!(r.f0 < 1.0);
        assert!(r.max_real_part < 0.0);
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let p = mixed();
        let fp = p.fixed_point().unwrap();
        let traj = integrate(&p, &fp.state, 5.0, default_step(&p)).unwrap();
        assert!(traj.states.iter().all(|s| s.distance(&fp.state) < 1e-10));
    }

    #[test]
    fn free_flow_matches_closed_form_until_hit() {
        let p = mixed();
        let s0 = FluidState::new(&p, vec![0.05, 0.02, 0.01]).unwrap();
        let traj = integrate(&p, &s0, 10.0, 1e-3).unwrap();
        let rho = p.rho();
        let hit = traj
            .region_tags
            .iter()
            .position(|t| *t == RegionTag::Delta0)
            .expect("reaches the threshold");
        assert!(hit > 10);
        for i in 0..hit {
            let t = traj.times[i];
            let closed: f64 = p.a_rho()
                + (0..3)
                    .map(|j| p.a[j] as f64 * (s0.ell[j] - rho[j]) * (-p.mu[j] * t).exp())
                    .sum::<f64>();
            assert!((traj.states[i].occupancy - closed).abs() < 1e-6);
        }
        for s in &traj.states[hit..] {
            assert!((s.occupancy - p.c0).abs() < 1e-8);
        }
    }

    #[test]
    fn above_threshold_is_unsupported() {
        let p = video();
        let s = FluidState::new(&p, vec![0.5, 0.24]).unwrap();
        assert!(matches!(
            integrate(&p, &s, 1.0, 1e-3),
            Err(Error::RegionUnsupported(RegionTag::InteriorAbove))
        ));
    }

    #[test]
    fn oversized_step_is_caught() {
        let p = video();
        let s = FluidState::new(&p, vec![0.05, 0.05]).unwrap();
        assert!(matches!(
            integrate(&p, &s, 10.0, 0.5),
            Err(Error::StepTooLarge { .. })
        ));
    }
}
