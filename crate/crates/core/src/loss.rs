//! Pure-loss benchmark: the same link without downgrading, where a request
//! that does not fit is rejected.
//!
//! In the scaled regime class `j` is accepted with probability `beta^A_j`,
//! where `beta` solves `sum_j A_j rho_j beta^A_j = c`. The loads served at
//! the requested rate are
//!
//! ```text
//! W_L = (1/Lambda) sum_j rho_j beta^A_j
//! W_D = (1/Lambda) sum_j rho_j pi_minus(c0)
//! ```
//!
//! for the loss system and the downgrading policy respectively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErlangSolution {
    pub beta: f64,
    /// `beta^A_j`.
    pub acceptance: Vec<f64>,
    /// `1 - beta^A_j`.
    pub loss: Vec<f64>,
    /// `sum_j A_j rho_j beta^A_j - c`; zero unless the link is underloaded.
    pub residual: f64,
    /// Set when `<A, rho> <= c`: nothing is lost and `beta = 1`.
    pub underloaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub c0: f64,
    pub beta: f64,
    pub acceptance: Vec<f64>,
    pub w_l: f64,
    pub w_d: f64,
    /// `W_L - W_D`.
    pub delta: f64,
}

/// One point of a parameter sweep; `w_d` is NaN where the threshold regime
/// fails, and the point is kept with `regime_ok = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub beta: f64,
    pub w_l: f64,
    pub w_d: f64,
    pub regime_ok: bool,
    pub underloaded: bool,
}

fn load_at(params: &ModelParams, rho: &[f64], beta: f64) -> f64 {
    params
        .a
        .iter()
        .zip(rho)
        .map(|(a, r)| *a as f64 * r * beta.powi(*a as i32))
        .sum()
}

/// Solves `sum_j A_j rho_j beta^A_j = c` on `(0, 1)` by bisection.
pub fn erlang_fixed_point(params: &ModelParams) -> Result<ErlangSolution> {
    params.check_structure()?;
    let rho = params.rho();
    let underloaded = params.a_rho() <= params.c;
    let beta = if underloaded {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if load_at(params, &rho, mid) < params.c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let acceptance: Vec<f64> = params.a.iter().map(|a| beta.powi(*a as i32)).collect();
    Ok(ErlangSolution {
        beta,
        loss: acceptance.iter().map(|x| 1.0 - x).collect(),
        acceptance,
        residual: load_at(params, &rho, beta) - params.c,
        underloaded,
    })
}

/// `W_L = (1/Lambda) sum_j rho_j beta^A_j`.
pub fn w_loss(params: &ModelParams, sol: &ErlangSolution) -> f64 {
    let rho = params.rho();
    rho.iter().zip(&sol.acceptance).map(|(r, b)| r * b).sum::<f64>() / params.lambda_total()
}

/// `W_D = (1/Lambda) sum_j rho_j pi_minus`.
pub fn w_downgrade(params: &ModelParams) -> Result<f64> {
    let pi = params.pi_minus()?;
    Ok(params.rho().iter().sum::<f64>() * pi / params.lambda_total())
}

/// Compares both policies for each threshold in `c0_grid`.
pub fn compare(params: &ModelParams, c0_grid: &[f64]) -> Result<Vec<ComparisonResult>> {
    let sol = erlang_fixed_point(params)?;
    let w_l = w_loss(params, &sol);
    let lo = params.min_rate_load();
    c0_grid
        .iter()
        .map(|&c0| {
            if !(c0 > lo && c0 < params.c) {
                return Err(Error::Regime(format!(
                    "c0 = {c0} outside (Lambda/mu_1, c) = ({lo}, {})",
                    params.c
                )));
            }
            let w_d = w_downgrade(&params.with_c0(c0))?;
            Ok(ComparisonResult {
                c0,
                beta: sol.beta,
                acceptance: sol.acceptance.clone(),
                w_l,
                w_d,
                delta: w_l - w_d,
            })
        })
        .collect()
}

/// Evaluates both loads for each template produced by `make` over `grid`.
pub fn sweep<F>(grid: &[f64], make: F) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> ModelParams,
{
    grid.iter()
        .map(|&x| {
            let p = make(x);
            let sol = erlang_fixed_point(&p)?;
            let regime_ok = p.validate()?.threshold_ok();
            let w_d = if regime_ok { w_downgrade(&p)? } else { f64::NAN };
            Ok(SweepRow {
                sweep_var: x,
                beta: sol.beta,
                w_l: w_loss(&p, &sol),
                w_d,
                regime_ok,
                underloaded: sol.underloaded,
            })
        })
        .collect()
}

/// Two classes with `A = (1, 3)`, `lambda_1 = 0.2`, unit service rates,
/// `c = 1`, `c0 = 0.99`, as a function of `lambda_2`.
pub fn two_class_sweep_params(lambda2: f64) -> ModelParams {
    ModelParams::new(vec![1, 3], vec![0.2, lambda2], vec![1.0; 2], 1.0, 0.99)
}

/// Three classes with `A = (1, 2, 3)`, `lambda_1 = lambda_2 = 0.2`, unit
/// service rates, `c = 1`, `c0 = 0.99`, as a function of `lambda_3`.
pub fn three_class_sweep_params(lambda3: f64) -> ModelParams {
    ModelParams::new(vec![1, 2, 3], vec![0.2, 0.2, lambda3], vec![1.0; 3], 1.0, 0.99)
}

/// `n` evenly spaced points strictly inside `(lo, hi)`.
pub fn open_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64)
        .collect()
}
