//! Exact event-driven simulation of the finite system at scale `N`.
//!
//! Class-`j` jobs arrive at rate `lambda_j N` and each job in service leaves
//! at rate `mu_j`. An arrival that finds the occupancy below `C0^N` joins at
//! its requested rate, one that finds it in `[C0^N, C^N)` joins as a class-1
//! job, and one that finds the link full is rejected. Statistics are
//! time-weighted over the window `[warmup, horizon]`.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Identifier of the generator driving every run, recorded in each outcome.
pub const PRNG_ID: &str = "ChaCha20Rng (rand_chacha 0.9, seed_from_u64)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Model parameters; the scale `N` must be set.
    pub params: ModelParams,
    pub seed: u64,
    pub horizon: f64,
    #[serde(default)]
    pub warmup: f64,
    /// Initial number of jobs per class; empty means an empty link.
    #[serde(default)]
    pub initial_state: Vec<u64>,
    /// Sampling period of the `(t, L/N)` trace; no trace when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_interval: Option<f64>,
    /// Also record the time spent in every full state vector.
    #[serde(default)]
    pub record_states: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub arrived: u64,
    pub accepted_full: u64,
    pub downgraded: u64,
    pub rejected: u64,
}

impl ClassCounts {
    fn add(&mut self, other: &ClassCounts) {
        self.arrived += other.arrived;
        self.accepted_full += other.accepted_full;
        self.downgraded += other.downgraded;
        self.rejected += other.rejected;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    /// `L^N(t) / N`.
    pub ell: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateWeight {
    pub state: Vec<u64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub prng: String,
    pub seeds: Vec<u64>,
    pub n: u64,
    pub capacity: u64,
    pub threshold: u64,
    /// Per-class counters over the observation window.
    pub counts: Vec<ClassCounts>,
    /// Time spent at each offset `m = <A, L> - C0^N` during the window.
    pub m_histogram: BTreeMap<i64, f64>,
    /// Time averages of `L_j / N` over the window.
    pub mean_occupation: Vec<f64>,
    pub window: f64,
    pub events: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_sample: Option<Vec<TracePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_occupation: Option<Vec<StateWeight>>,
    pub final_state: Vec<u64>,
}

impl SimOutcome {
    /// Fraction of window arrivals admitted at their requested rate.
    pub fn full_rate_fraction(&self) -> f64 {
        let arrived: u64 = self.counts.iter().map(|c| c.arrived).sum();
        let full: u64 = self.counts.iter().map(|c| c.accepted_full).sum();
        full as f64 / arrived as f64
    }

    pub fn rejection_fraction(&self) -> f64 {
        let arrived: u64 = self.counts.iter().map(|c| c.arrived).sum();
        let rejected: u64 = self.counts.iter().map(|c| c.rejected).sum();
        rejected as f64 / arrived as f64
    }

    pub fn total_arrivals(&self) -> u64 {
        self.counts.iter().map(|c| c.arrived).sum()
    }
}

/// Scaled capacities `(C^N, C0^N) = (round(c N), round(c0 N))`.
pub fn scaled_capacities(params: &ModelParams, n: u64) -> (u64, u64) {
    let nf = n as f64;
    ((params.c * nf).round() as u64, (params.c0 * nf).round() as u64)
}

fn occupancy(a: &[u32], state: &[u64]) -> u64 {
    a.iter().zip(state).map(|(a, l)| *a as u64 * l).sum()
}

impl SimConfig {
    pub fn new(params: ModelParams, n: u64, seed: u64, horizon: f64, warmup: f64) -> Self {
        let mut params = params;
        params.n = Some(n);
        SimConfig {
            params,
            seed,
            horizon,
            warmup,
            initial_state: Vec::new(),
            trace_interval: None,
            record_states: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        cfg.params.check_shape()?;
        Ok(cfg)
    }

    fn scale(&self) -> Result<u64> {
        match self.params.n {
            Some(n) if n > 0 => Ok(n),
            _ => Err(Error::StructuralInvalid("simulation needs a positive scale N".into())),
        }
    }

    /// Checks the configuration and returns the initial state.
    fn initial(&self) -> Result<Vec<u64>> {
        self.params.check_structure()?;
        let n = self.scale()?;
        if !(self.horizon.is_finite() && self.warmup >= 0.0 && self.horizon > self.warmup) {
            return Err(Error::StructuralInvalid(format!(
                "need 0 <= warmup < horizon, got warmup {} and horizon {}",
                self.warmup, self.horizon
            )));
        }
        if let Some(dt) = self.trace_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::StructuralInvalid("trace interval must be positive".into()));
            }
        }
        let (cap, thr) = scaled_capacities(&self.params, n);
        if thr == 0 || thr > cap {
            return Err(Error::StructuralInvalid(format!(
                "scaled capacities C = {cap}, C0 = {thr} need 0 < C0 <= C"
            )));
        }
        let state = if self.initial_state.is_empty() {
            vec![0; self.params.classes()]
        } else {
            self.initial_state.clone()
        };
        if state.len() != self.params.classes() {
            return Err(Error::StructuralInvalid(format!(
                "initial state has {} entries, expected {}",
                state.len(),
                self.params.classes()
            )));
        }
        let occ = occupancy(&self.params.a, &state);
        if occ > cap {
            return Err(Error::OutOfStateSpace {
                occupancy: occ as f64,
                capacity: cap as f64,
            });
        }
        Ok(state)
    }
}

/// Runs one replica. The output is a deterministic function of the config.
pub fn simulate(config: &SimConfig) -> Result<SimOutcome> {
    let mut state = config.initial()?;
    let p = &config.params;
    let n = config.scale()?;
    let nf = n as f64;
    let (cap, thr) = scaled_capacities(p, n);
    let j = p.classes();
    let arrival: Vec<f64> = p.lambda.iter().map(|l| l * nf).collect();
    let arrival_total: f64 = arrival.iter().sum();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let mut counts = vec![ClassCounts::default(); j];
    let mut hist: BTreeMap<i64, f64> = BTreeMap::new();
    let mut states: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut mean = vec![0.0; j];
    let mut trace = config.trace_interval.map(|_| Vec::new());
    let mut next_sample = 0.0;
    let mut occ = occupancy(&p.a, &state);
    let mut t = 0.0;
    let mut events = 0u64;

    loop {
        let departure_total: f64 = (0..j).map(|k| p.mu[k] * state[k] as f64).sum();
        let total = arrival_total + departure_total;
        let hold = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        let t_next = (t + hold).min(config.horizon);

        if let (Some(tr), Some(dt)) = (trace.as_mut(), config.trace_interval) {
            while next_sample <= t_next && next_sample <= config.horizon {
                tr.push(TracePoint {
                    t: next_sample,
                    ell: state.iter().map(|l| *l as f64 / nf).collect(),
                });
                next_sample += dt;
            }
        }
        let w = t_next - t.max(config.warmup);
        if w > 0.0 {
            *hist.entry(occ as i64 - thr as i64).or_insert(0.0) += w;
            for k in 0..j {
                mean[k] += w * state[k] as f64 / nf;
            }
            if config.record_states {
                *states.entry(state.clone()).or_insert(0.0) += w;
            }
        }
        if t + hold >= config.horizon {
            break;
        }
        t += hold;
        events += 1;
        let counting = t >= config.warmup;

        let mut u = rng.random::<f64>() * total;
        let mut handled = false;
        for k in 0..j {
            if u < arrival[k] {
                let a = p.a[k] as u64;
                let c = &mut counts[k];
                if occ < thr && occ + a <= cap {
                    state[k] += 1;
                    occ += a;
                    if counting {
                        c.accepted_full += 1;
                    }
                } else if occ < cap {
                    state[0] += 1;
                    occ += 1;
                    if counting {
                        if k == 0 {
                            c.accepted_full += 1;
                        } else {
                            c.downgraded += 1;
                        }
                    }
                } else if counting {
                    c.rejected += 1;
                }
                if counting {
                    c.arrived += 1;
                }
                handled = true;
                break;
            }
            u -= arrival[k];
        }
        if !handled {
            // departures; the last class absorbs rounding in `u`
            let mut k = 0;
            loop {
                let r = p.mu[k] * state[k] as f64;
                if u < r || k == j - 1 {
                    break;
                }
                u -= r;
                k += 1;
            }
            while state[k] == 0 {
                k -= 1;
            }
            state[k] -= 1;
            occ -= p.a[k] as u64;
        }
    }

    let window = config.horizon - config.warmup;
    let state_occupation = config.record_states.then(|| {
        let mut v: Vec<StateWeight> = states
            .into_iter()
            .map(|(state, time)| StateWeight { state, time })
            .collect();
        v.sort_by(|a, b| a.state.cmp(&b.state));
        v
    });
    Ok(SimOutcome {
        prng: PRNG_ID.to_string(),
        seeds: vec![config.seed],
        n,
        capacity: cap,
        threshold: thr,
        counts,
        m_histogram: hist,
        mean_occupation: mean.iter().map(|m| m / window).collect(),
        window,
        events,
        path_sample: trace,
        state_occupation,
        final_state: state,
    })
}

/// Combines independent replicas of the same model and scale. Counters,
/// histograms and windows add up; the result does not depend on the order.
pub fn merge(outcomes: &[SimOutcome]) -> Result<SimOutcome> {
    let first = outcomes.first().ok_or(Error::EmptyWindow)?;
    let mut out = first.clone();
    out.path_sample = None;
    out.state_occupation = None;
    for o in &outcomes[1..] {
        if o.n != first.n || o.counts.len() != first.counts.len() {
            return Err(Error::StructuralInvalid("replicas differ in scale or classes".into()));
        }
        out.seeds.extend_from_slice(&o.seeds);
        for (c, d) in out.counts.iter_mut().zip(&o.counts) {
            c.add(d);
        }
        for (m, w) in &o.m_histogram {
            *out.m_histogram.entry(*m).or_insert(0.0) += w;
        }
        out.events += o.events;
        out.window += o.window;
    }
    out.seeds.sort_unstable();
    for (k, m) in out.mean_occupation.iter_mut().enumerate() {
        *m = outcomes.iter().map(|o| o.mean_occupation[k] * o.window).sum::<f64>() / out.window;
    }
    out.final_state = Vec::new();
    Ok(out)
}

/// Normalised time-weighted histogram of the offset `m^N`.
pub fn empirical_offset_distribution(outcome: &SimOutcome) -> Result<BTreeMap<i64, f64>> {
    let total: f64 = outcome.m_histogram.values().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyWindow);
    }
    Ok(outcome
        .m_histogram
        .iter()
        .map(|(m, w)| (*m, w / total))
        .collect())
}

/// The sampled `(t, L/N)` path, every `stride`-th point.
pub fn fluid_trace(outcome: &SimOutcome, stride: usize) -> Result<Vec<TracePoint>> {
    let path = outcome.path_sample.as_ref().ok_or(Error::TraceDisabled)?;
    Ok(path.iter().step_by(stride.max(1)).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(n: u64, seed: u64) -> SimConfig {
        let p = ModelParams::new(vec![1, 2], vec![0.0, 0.7], vec![1.0, 1.0], 1.0, 0.95);
        SimConfig::new(p, n, seed, 60.0, 10.0)
    }

    #[test]
    fn counters_balance_and_histogram_covers_window() {
        let out = simulate(&video(200, 3)).unwrap();
        for c in &out.counts {
            assert_eq!(c.arrived, c.accepted_full + c.downgraded + c.rejected);
        }
        let mass: f64 = out.m_histogram.values().sum();
        assert!((mass - 50.0).abs() < 1e-9 * 50.0);
        assert!(out.m_histogram.keys().all(|m| *m <= (out.capacity - out.threshold) as i64));
    }

    #[test]
    fn same_seed_same_outcome() {
        let a = serde_json::to_string(&simulate(&video(100, 9)).unwrap()).unwrap();
        let b = serde_json::to_string(&simulate(&video(100, 9)).unwrap()).unwrap();
        let c = serde_json::to_string(&simulate(&video(100, 10)).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_initial_state_is_rejected() {
        let mut cfg = video(10, 1);
        cfg.initial_state = vec![3, 4];
        assert!(matches!(simulate(&cfg), Err(Error::OutOfStateSpace { .. })));
        cfg.initial_state = vec![1];
        assert!(matches!(simulate(&cfg), Err(Error::StructuralInvalid(_))));
        let mut cfg = video(10, 1);
        cfg.params.n = None;
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn trace_is_optional() {
        let out = simulate(&video(50, 1)).unwrap();
        assert!(matches!(fluid_trace(&out, 1), Err(Error::TraceDisabled)));
        let mut cfg = video(50, 1);
        cfg.trace_interval = Some(0.5);
        let out = simulate(&cfg).unwrap();
        let tr = fluid_trace(&out, 1).unwrap();
        assert_eq!(tr.len(), 121);
        assert_eq!(tr[0].ell, vec![0.0, 0.0]);
    }

    #[test]
    fn merge_is_order_independent() {
        let a = simulate(&video(50, 1)).unwrap();
        let b = simulate(&video(50, 2)).unwrap();
        let ab = merge(&[a.clone(), b.clone()]).unwrap();
        let ba = merge(&[b, a]).unwrap();
        assert_eq!(ab.counts, ba.counts);
        assert_eq!(ab.seeds, ba.seeds);
        for (x, y) in ab.m_histogram.values().zip(ba.m_histogram.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        assert!((ab.window - 100.0).abs() < 1e-12);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let mut out = simulate(&video(20, 1)).unwrap();
        out.m_histogram.clear();
        assert!(matches!(empirical_offset_distribution(&out), Err(Error::EmptyWindow)));
    }
}
