//! Threshold sizing for a link of `C` units: the largest threshold fraction
//! `alpha = C0 / C` whose limiting loss probability `P(Y + C0 > C)` stays
//! below a target `epsilon`.
//!
//! The offset law `Y` is the `N -> infinity` limit, so the result is an
//! approximation for a physical link of finite size (see
//! [`FINITE_SIZE_NOTE`] and [`simulated_rejection`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::InvariantDistribution;
use crate::loss::erlang_fixed_point;
use crate::model::ModelParams;
use crate::sim::{simulate, SimConfig};

/// Carried into output metadata alongside every provisioning result.
pub const FINITE_SIZE_NOTE: &str =
    "loss probabilities use the limiting offset law (N -> infinity); at finite capacity they are approximations";

const REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvisionQuery {
    /// Template parameters with `c = 1`; `c0` is overwritten by `alpha`.
    pub params: ModelParams,
    /// Link size `C` in bandwidth units.
    pub capacity_units: u64,
    pub epsilon: f64,
    /// Spacing of the threshold scan.
    #[serde(default = "default_grid")]
    pub alpha_grid: f64,
}

fn default_grid() -> f64 {
    1e-3
}

/// One point of a downgrade curve. Points where the computation fails keep
/// their `lambda2` with `ok = false`, NaN values and the failure message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epsilon: f64,
    pub lambda2: f64,
    pub alpha_eps: f64,
    pub pi_minus_eps: f64,
    /// Class-2 loss fraction `1 - beta^A_2` of the uncontrolled link.
    pub loss_fraction_uncontrolled: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ProvisionQuery {
    pub fn new(params: ModelParams, capacity_units: u64, epsilon: f64) -> Self {
        ProvisionQuery {
            params,
            capacity_units,
            epsilon,
            alpha_grid: default_grid(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let q: ProvisionQuery =
            serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        q.params.check_shape()?;
        Ok(q)
    }

    fn check(&self) -> Result<()> {
        if self.params.c != 1.0 {
            return Err(Error::StructuralInvalid(format!(
                "provisioning templates use c = 1, got {}",
                self.params.c
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::StructuralInvalid(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.capacity_units < self.params.a_max() as u64 {
            return Err(Error::StructuralInvalid(format!(
                "capacity {} below the largest requirement {}",
                self.capacity_units,
                self.params.a_max()
            )));
        }
        if !(self.alpha_grid > 0.0 && self.alpha_grid < 0.5) {
            return Err(Error::StructuralInvalid("alpha grid must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    /// Headroom `K = C - round(alpha C)` in units.
    pub fn headroom(&self, alpha: f64) -> i64 {
        let c = self.capacity_units as f64;
        self.capacity_units as i64 - (alpha * c).round() as i64
    }
}

/// `P(Y + C0 > C) = P(Y >= K + 1)` at the fixed point for `c0 = alpha`.
pub fn loss_probability(query: &ProvisionQuery, alpha: f64) -> Result<f64> {
    query.check()?;
    let params = query.params.with_c0(alpha);
    let dist = InvariantDistribution::at_fixed_point(&params)?;
    Ok(dist.tail_at_or_above(query.headroom(alpha) + 1))
}

/// Largest `alpha` with `loss_probability(alpha) < epsilon`: a full scan of
/// `(Lambda/mu_1 + h, 1 - h)` at spacing `h`, then bisection between the
/// last feasible grid point and its successor. No monotonicity in `alpha`
/// is assumed by the scan.
pub fn max_threshold(query: &ProvisionQuery) -> Result<f64> {
    query.check()?;
    let h = query.alpha_grid;
    let lo = query.params.min_rate_load() + h;
    let hi = 1.0 - h;
    if lo > hi {
        return Err(Error::Infeasible("empty threshold interval".into()));
    }
    let steps = ((hi - lo) / h).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| lo + k as f64 * h).collect();
    let feasible = |a: f64| -> Result<bool> { Ok(loss_probability(query, a)? < query.epsilon) };

    let mut best = None;
    for (k, &a) in grid.iter().enumerate() {
        if feasible(a)? {
            best = Some(k);
        }
    }
    let Some(k) = best else {
        return Err(Error::Infeasible(format!(
            "no threshold in [{lo}, {hi}] keeps the loss below {}",
            query.epsilon
        )));
    };
    let Some(&upper) = grid.get(k + 1) else {
        return Ok(grid[k]);
    };
    let (mut a, mut b) = (grid[k], upper);
    while b - a > REFINE_TOL {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

/// `alpha_eps` and the matching non-downgrade probability for each class-2
/// arrival rate in `lambda2_grid`.
pub fn downgrade_curve(query: &ProvisionQuery, lambda2_grid: &[f64]) -> Result<Vec<CurveRow>> {
    query.check()?;
    if query.params.classes() < 2 {
        return Err(Error::StructuralInvalid("downgrade curves need two classes".into()));
    }
    Ok(lambda2_grid
        .iter()
        .map(|&l2| {
            let mut q = query.clone();
            q.params.lambda[1] = l2;
            let row = |alpha: f64, pi: f64, loss: f64, note: Option<String>| CurveRow {
                epsilon: q.epsilon,
                lambda2: l2,
                alpha_eps: alpha,
                pi_minus_eps: pi,
                loss_fraction_uncontrolled: loss,
                ok: note.is_none(),
                note,
            };
            let loss = erlang_fixed_point(&q.params)
                .map(|s| s.loss[1])
                .unwrap_or(f64::NAN);
            match max_threshold(&q).and_then(|a| Ok((a, q.params.with_c0(a).pi_minus()?))) {
                Ok((a, pi)) => row(a, pi, loss, None),
                Err(e) => row(f64::NAN, f64::NAN, loss, Some(e.to_string())),
            }
        })
        .collect())
}

/// Rejection fraction of a simulated link of the query's physical size with
/// `C0 = round(alpha C)`; a finite-size cross-check of [`loss_probability`].
pub fn simulated_rejection(
    query: &ProvisionQuery,
    alpha: f64,
    seed: u64,
    horizon: f64,
    warmup: f64,
) -> Result<f64> {
    query.check()?;
    let cfg = SimConfig::new(
        query.params.with_c0(alpha),
        query.capacity_units,
        seed,
        horizon,
        warmup,
    );
    Ok(simulate(&cfg)?.rejection_fraction())
}

/// Class-2 rates used for the downgrade curves when none are given.
pub fn default_lambda2_grid() -> Vec<f64> {
    (0..16).map(|k| 0.52 + 0.03 * k as f64).collect()
}
