//! Reference computations shared by the integration tests. None of them
//! touches the spectral machinery of the library: they build generators
//! directly from the transition rules and solve the balance equations.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use downgrade::{FluidState, ModelParams};

pub fn video() -> ModelParams {
    ModelParams::new(vec![1, 2], vec![0.0, 0.7], vec![1.0, 1.0], 1.0, 0.95)
}

pub fn figure1() -> ModelParams {
    ModelParams::new(
        vec![1, 2, 4, 8, 16],
        vec![0.25, 0.2, 0.15, 0.1, 0.05],
        vec![1.0; 5],
        1.0,
        0.97,
    )
}

/// Three classes with distinct service rates, so the stability matrix is
/// not diagonal.
pub fn three_class() -> ModelParams {
    ModelParams::new(
        vec![1, 2, 3],
        vec![0.2, 0.3, 0.3],
        vec![1.0, 1.5, 2.5],
        1.0,
        0.9,
    )
}

pub fn mixed_rates() -> ModelParams {
    ModelParams::new(
        vec![1, 2, 4],
        vec![0.2, 0.3, 0.3],
        vec![1.0, 1.5, 2.5],
        1.0,
        0.9,
    )
}

/// Solves `x^T Q = 0, sum x = 1` for a generator whose nonzero entries lie
/// within `band` of the diagonal. Unknown `pin` is fixed to 1 (choose a
/// state of large mass), which leaves a column-diagonally-dominant banded
/// system that Gaussian elimination handles without pivoting.
pub fn stationary_banded(q: &[Vec<f64>], band: usize, pin: usize) -> Vec<f64> {
    let n = q.len();
    let m = n - 1;
    // reduced index of state i != pin
    let r = |i: usize| if i < pin { i } else { i - 1 };
    let band = band + 1;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    // balance at state k: sum_{i != pin} x_i q[i][k] = -q[pin][k]
    for k in (0..n).filter(|k| *k != pin) {
        let lo = k.saturating_sub(band);
        let hi = (k + band).min(n - 1);
        for i in (lo..=hi).filter(|i| *i != pin) {
            a[r(k)][r(i)] = q[i][k];
        }
        b[r(k)] = -q[pin][k];
    }
    for p in 0..m {
        let hi = (p + band).min(m - 1);
        for row in p + 1..=hi {
            let f = a[row][p] / a[p][p];
            if f == 0.0 {
                continue;
            }
            for c in p..=(p + 2 * band).min(m - 1) {
                a[row][c] -= f * a[p][c];
            }
            b[row] -= f * b[p];
        }
    }
    let mut x = vec![0.0; m];
    for p in (0..m).rev() {
        let hi = (p + 2 * band).min(m - 1);
        let s: f64 = (p + 1..=hi).map(|c| a[p][c] * x[c]).sum();
        x[p] = (b[p] - s) / a[p][p];
    }
    x.insert(pin, 1.0);
    let total: f64 = x.iter().sum();
    x.iter().map(|v| v / total).collect()
}

/// Stationary law of the offset walk at fluid state `ell`, truncated to
/// `-m..=m`; jumps that would leave the window are suppressed.
pub fn truncated_offset_law(params: &ModelParams, ell: &[f64], m: i64) -> BTreeMap<i64, f64> {
    let n = (2 * m + 1) as usize;
    let idx = |x: i64| (x + m) as usize;
    let mut q = vec![vec![0.0; n]; n];
    let lambda: f64 = params.lambda.iter().sum();
    for x in -m..=m {
        let mut add = |to: i64, rate: f64| {
            if rate > 0.0 && (-m..=m).contains(&to) {
                q[idx(x)][idx(to)] += rate;
                q[idx(x)][idx(x)] -= rate;
            }
        };
        for j in 0..params.a.len() {
            let a = params.a[j] as i64;
            add(x - a, params.mu[j] * ell[j]);
            if x < 0 {
                add(x + a, params.lambda[j]);
            }
        }
        if x >= 0 {
            add(x + 1, lambda);
        }
    }
    let band = params.a.iter().copied().max().unwrap() as usize;
    let pi = stationary_banded(&q, band, idx(0));
    (-m..=m).zip(pi).collect()
}

pub fn total_variation<F: Fn(i64) -> f64>(oracle: &BTreeMap<i64, f64>, f: F) -> f64 {
    0.5 * oracle.iter().map(|(n, p)| (p - f(*n)).abs()).sum::<f64>()
}

/// Exact stationary law of the finite system with capacities `(cap, thr)`
/// and arrival rates `lambda` (already scaled), by enumeration of every
/// state `l` with `<A, l> <= cap`.
pub fn small_system_law(params: &ModelParams, cap: u64, thr: u64) -> HashMap<Vec<u64>, f64> {
    let j = params.a.len();
    let mut states: Vec<Vec<u64>> = vec![vec![]];
    for k in 0..j {
        let mut next = Vec::new();
        for s in &states {
            for l in 0..=cap / params.a[k] as u64 {
                let mut t = s.clone();
                t.push(l);
                next.push(t);
            }
        }
        states = next;
    }
    let occ = |s: &[u64]| -> u64 { s.iter().zip(&params.a).map(|(l, a)| l * *a as u64).sum() };
    states.retain(|s| occ(s) <= cap);
    let index: HashMap<Vec<u64>, usize> =
        states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let n = states.len();
    let mut q = vec![vec![0.0; n]; n];
    for (i, s) in states.iter().enumerate() {
        let o = occ(s);
        let mut go = |t: Vec<u64>, rate: f64| {
            if rate > 0.0 {
                let k = index[&t];
                q[i][k] += rate;
                q[i][i] -= rate;
            }
        };
        for k in 0..j {
            let a = params.a[k] as u64;
            if o < thr && o + a <= cap {
                let mut t = s.clone();
                t[k] += 1;
                go(t, params.lambda[k]);
            } else if o < cap {
                let mut t = s.clone();
                t[0] += 1;
                go(t, params.lambda[k]);
            }
            if s[k] > 0 {
                let mut t = s.clone();
                t[k] -= 1;
                go(t, params.mu[k] * s[k] as f64);
            }
        }
    }
    let pi = stationary_banded(&q, n, 0);
    states.into_iter().zip(pi).collect()
}

/// Uniform draws in `[0, 1)` from a 64-bit linear congruential sequence,
/// used to build reproducible random instances outside of proptest.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// A random instance together with a state on the ergodic part of the
/// threshold hyperplane. `u` supplies uniforms in `[0, 1)`.
pub fn random_delta0_instance(mut u: impl FnMut() -> f64) -> (ModelParams, FluidState) {
    let j = 2 + (u() * 4.0) as usize;
    // strictly increasing requirements with A_1 = 1 and A_J <= 16
    let mut pool: Vec<u32> = (2..=16).collect();
    let mut a = vec![1u32];
    for _ in 1..j {
        let k = (u() * pool.len() as f64) as usize;
        a.push(pool.remove(k));
    }
    a.sort_unstable();
    let lambda: Vec<f64> = (0..j).map(|_| 0.05 + u()).collect();
    let mu1 = 0.5 + u();
    let mu: Vec<f64> = (0..j)
        .map(|k| if k == 0 { mu1 } else { mu1 + 2.0 * u() })
        .collect();
    let v: Vec<f64> = (0..j).map(|_| 0.05 + u()).collect();
    let big_lambda: f64 = lambda.iter().sum();
    let a_lambda: f64 = a.iter().zip(&lambda).map(|(a, l)| *a as f64 * l).sum();
    // the departure load sum A mu l must land strictly inside (Lambda, <A, lambda>)
    let target = big_lambda + (a_lambda - big_lambda) * (0.05 + 0.9 * u());
    let scale = target / (0..j).map(|k| a[k] as f64 * mu[k] * v[k]).sum::<f64>();
    let ell: Vec<f64> = v.iter().map(|x| x * scale).collect();
    let c0: f64 = a.iter().zip(&ell).map(|(a, l)| *a as f64 * l).sum();
    let params = ModelParams::new(a, lambda, mu, 2.0 * c0, c0);
    let state = FluidState::new(&params, ell).unwrap();
    (params, state)
}
