//! Link parameters, regime checks, region classification of fluid states and
//! the closed-form equilibrium of the fluid dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative band around the threshold hyperplane `<A, x> = c0` inside which a
/// state is considered to lie on it.
pub const HYPERPLANE_TOL: f64 = 1e-9;

/// Parameters of a single link shared by `J` job classes.
///
/// Rates and capacities are per unit of scale; the simulator multiplies
/// arrival rates and capacities by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Bandwidth units requested by each class, `A[0] = 1`, strictly increasing.
    #[serde(rename = "A")]
    pub a: Vec<u32>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub c: f64,
    pub c0: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

/// Outcome of [`ModelParams::validate`]: which load conditions hold, plus the
/// derived quantities they are stated in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Overload with requested rates and underload at the minimal rate:
    /// `<A, rho> > c` and `Lambda / mu_1 < c`.
    pub overload: bool,
    /// `<A, rho> > c0`.
    pub above_threshold: bool,
    /// `Lambda / mu_1 < c0`.
    pub below_threshold: bool,
    /// Whether some capacity `c` could satisfy the overload condition at all.
    pub feasible: bool,
    pub lambda_total: f64,
    pub rho: Vec<f64>,
    pub a_rho: f64,
    pub min_rate_load: f64,
    pub lambda_a: f64,
    pub notes: Vec<String>,
}

impl RegimeReport {
    /// Both threshold conditions hold, so the fixed point exists.
    pub fn threshold_ok(&self) -> bool {
        self.above_threshold && self.below_threshold
    }
}

/// Region of the fluid state space relative to the threshold hyperplane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionTag {
    /// On the hyperplane with the offset walk ergodic.
    Delta0,
    /// On the hyperplane with the walk drifting to `-inf`.
    DeltaMinus,
    /// On the hyperplane with the walk drifting to `+inf`.
    DeltaPlus,
    InteriorBelow,
    InteriorAbove,
}

impl RegionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionTag::Delta0 => "delta0",
            RegionTag::DeltaMinus => "delta_minus",
            RegionTag::DeltaPlus => "delta_plus",
            RegionTag::InteriorBelow => "interior_below",
            RegionTag::InteriorAbove => "interior_above",
        }
    }
}

/// Per-class fluid occupation `ell` together with its occupancy `<A, ell>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub ell: Vec<f64>,
    pub occupancy: f64,
}

impl FluidState {
    pub fn new(params: &ModelParams, ell: Vec<f64>) -> Result<Self> {
        if ell.len() != params.classes() {
            return Err(Error::StructuralInvalid(format!(
                "fluid state has {} components, expected {}",
                ell.len(),
                params.classes()
            )));
        }
        if let Some(j) = ell.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::StructuralInvalid(format!(
                "fluid state component {} is {} (must be finite and nonnegative)",
                j + 1,
                ell[j]
            )));
        }
        let occupancy = params.dot_a(&ell);
        Ok(FluidState { ell, occupancy })
    }

    pub(crate) fn from_raw(params: &ModelParams, ell: Vec<f64>) -> Self {
        let occupancy = params.dot_a(&ell);
        FluidState { ell, occupancy }
    }

    pub fn distance(&self, other: &FluidState) -> f64 {
        self.ell
            .iter()
            .zip(&other.ell)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Equilibrium of the fluid dynamics and the matching non-downgrade probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: FluidState,
    pub pi_minus: f64,
}

impl ModelParams {
    pub fn new(a: Vec<u32>, lambda: Vec<f64>, mu: Vec<f64>, c: f64, c0: f64) -> Self {
        ModelParams { a, lambda, mu, c, c0, n: None }
    }

    /// Parses the JSON document `{"A", "lambda", "mu", "c", "c0", "N"?}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let params: ModelParams =
            serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        params.check_shape()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters always serialize")
    }

    pub fn with_c0(&self, c0: f64) -> Self {
        ModelParams { c0, ..self.clone() }
    }

    pub fn classes(&self) -> usize {
        self.a.len()
    }

    /// Largest requirement `A_J`.
    pub fn a_max(&self) -> u32 {
        *self.a.last().unwrap_or(&0)
    }

    pub fn lambda_total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn rho(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l / m).collect()
    }

    pub fn dot_a(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(&a, x)| a as f64 * x).sum()
    }

    /// `<A, rho>`, the requested load.
    pub fn a_rho(&self) -> f64 {
        self.dot_a(&self.rho())
    }

    /// `Lambda / mu_1`, the load if every job ran at the minimal rate.
    pub fn min_rate_load(&self) -> f64 {
        self.lambda_total() / self.mu[0]
    }

    /// `Lambda_A = sum_k lambda_k (A_k - 1)`.
    pub fn lambda_a(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.lambda)
            .map(|(&a, l)| l * (a as f64 - 1.0))
            .sum()
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        let j = self.a.len();
        if j == 0 {
            return Err(Error::Load("at least one class is required".into()));
        }
        if self.lambda.len() != j || self.mu.len() != j {
            return Err(Error::Load(format!(
                "vector lengths disagree: A has {}, lambda has {}, mu has {}",
                j,
                self.lambda.len(),
                self.mu.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_structure(&self) -> Result<()> {
        self.check_shape()
            .map_err(|e| Error::StructuralInvalid(e.to_string()))?;
        if self.a[0] != 1 {
            return Err(Error::StructuralInvalid(format!(
                "A_1 must be 1, got {}",
                self.a[0]
            )));
        }
        if let Some(w) = self.a.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::StructuralInvalid(format!(
                "A must be strictly increasing (A_{} = {} >= A_{} = {})",
                w + 1,
                self.a[w],
                w + 2,
                self.a[w + 1]
            )));
        }
        if let Some(j) = self.lambda.iter().position(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::StructuralInvalid(format!(
                "lambda_{} = {} must be finite and nonnegative",
                j + 1,
                self.lambda[j]
            )));
        }
        if let Some(j) = self.mu.iter().position(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::StructuralInvalid(format!(
                "mu_{} = {} must be finite and positive",
                j + 1,
                self.mu[j]
            )));
        }
        if let Some(j) = self.mu.iter().position(|m| *m < self.mu[0]) {
            return Err(Error::StructuralInvalid(format!(
                "mu_1 must be minimal, but mu_{} = {} < mu_1 = {}",
                j + 1,
                self.mu[j],
                self.mu[0]
            )));
        }
        if !(self.c0 > 0.0 && self.c0 < self.c && self.c.is_finite()) {
            return Err(Error::StructuralInvalid(format!(
                "need 0 < c0 < c, got c0 = {}, c = {}",
                self.c0, self.c
            )));
        }
        if self.lambda_total() <= 0.0 {
            return Err(Error::StructuralInvalid(
                "total arrival rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Checks structural invariants and reports which load conditions hold.
    pub fn validate(&self) -> Result<RegimeReport> {
        self.check_structure()?;
        let lambda_total = self.lambda_total();
        let rho = self.rho();
        let a_rho = self.dot_a(&rho);
        let min_rate_load = self.min_rate_load();
        let lambda_a = self.lambda_a();
        let overload = a_rho > self.c && min_rate_load < self.c;
        let above_threshold = a_rho > self.c0;
        let below_threshold = min_rate_load < self.c0;
        let feasible = a_rho > min_rate_load && lambda_a > 0.0;

        let mut notes = Vec::new();
        if !feasible {
            notes.push(format!(
                "regime infeasible: <A,rho> = {a_rho} does not exceed Lambda/mu_1 = {min_rate_load}, \
                 so no capacity makes the link overloaded yet servable at the minimal rate"
            ));
        }
        if lambda_a <= 0.0 {
            notes.push("no arrivals request more than one unit (Lambda_A = 0)".into());
        }
        if !overload {
            notes.push("overload condition (<A,rho> > c and Lambda/mu_1 < c) fails".into());
        }
        if !above_threshold {
            notes.push("threshold below requested load (<A,rho> > c0) fails".into());
        }
        if !below_threshold {
            notes.push("threshold above minimal-rate load (Lambda/mu_1 < c0) fails".into());
        }
        Ok(RegimeReport {
            overload,
            above_threshold,
            below_threshold,
            feasible,
            lambda_total,
            rho,
            a_rho,
            min_rate_load,
            lambda_a,
            notes,
        })
    }

    pub(crate) fn require_threshold_regime(&self) -> Result<RegimeReport> {
        let report = self.validate()?;
        if !report.threshold_ok() {
            return Err(Error::Regime(format!(
                "need Lambda/mu_1 < c0 < <A,rho>, got Lambda/mu_1 = {}, c0 = {}, <A,rho> = {}",
                report.min_rate_load, self.c0, report.a_rho
            )));
        }
        Ok(report)
    }

    /// Half-width of the band treated as lying on the threshold hyperplane.
    pub fn hyperplane_band(&self) -> f64 {
        HYPERPLANE_TOL * self.c0.max(1.0)
    }

    /// Drift of the offset walk below zero, `sum_j (lambda_j - mu_j x_j) A_j`.
    pub fn upward_drift(&self, x: &[f64]) -> f64 {
        (0..self.classes())
            .map(|j| (self.lambda[j] - self.mu[j] * x[j]) * self.a[j] as f64)
            .sum()
    }

    /// Downward drift of the offset walk above zero, `sum_j mu_j x_j A_j - Lambda`.
    pub fn downward_drift(&self, x: &[f64]) -> f64 {
        (0..self.classes())
            .map(|j| self.mu[j] * x[j] * self.a[j] as f64)
            .sum::<f64>()
            - self.lambda_total()
    }

    /// Mass of the offset walk's invariant law below zero at a state of `Delta0`,
    /// `sum_j (A_j mu_j x_j - lambda_j) / Lambda_A`.
    pub fn negative_mass(&self, x: &[f64]) -> f64 {
        let num: f64 = (0..self.classes())
            .map(|j| self.a[j] as f64 * self.mu[j] * x[j] - self.lambda[j])
            .sum();
        num / self.lambda_a()
    }

    /// Places `state` in one of the five regions of the state space.
    pub fn classify(&self, state: &FluidState) -> Result<RegionTag> {
        let occ = self.dot_a(&state.ell);
        let band = self.hyperplane_band();
        if occ > self.c + HYPERPLANE_TOL * self.c.max(1.0) {
            return Err(Error::OutOfStateSpace {
                occupancy: occ,
                capacity: self.c,
            });
        }
        if (occ - self.c0).abs() <= band {
            let up = self.upward_drift(&state.ell);
            let down = self.downward_drift(&state.ell);
            Ok(if up <= 0.0 {
                RegionTag::DeltaMinus
            } else if down <= 0.0 {
                RegionTag::DeltaPlus
            } else {
                RegionTag::Delta0
            })
        } else if occ < self.c0 {
            Ok(RegionTag::InteriorBelow)
        } else {
            Ok(RegionTag::InteriorAbove)
        }
    }

    /// Non-downgrade probability `(c0 - Lambda/mu_1) / (<A,rho> - Lambda/mu_1)`.
    pub fn pi_minus(&self) -> Result<f64> {
        let report = self.require_threshold_regime()?;
        Ok((self.c0 - report.min_rate_load) / (report.a_rho - report.min_rate_load))
    }

    /// Unique equilibrium of the fluid dynamics, lying on the threshold hyperplane.
    pub fn fixed_point(&self) -> Result<FixedPoint> {
        let pi_minus = self.pi_minus()?;
        let rho = self.rho();
        let mut ell: Vec<f64> = rho.iter().map(|r| r * pi_minus).collect();
        let upper: f64 = (1..self.classes())
            .map(|j| self.a[j] as f64 * ell[j])
            .sum();
        ell[0] = self.c0 - upper;
        Ok(FixedPoint {
            state: FluidState::from_raw(self, ell),
            pi_minus,
        })
    }
}
