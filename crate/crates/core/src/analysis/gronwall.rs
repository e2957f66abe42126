//! Gronwall-type inequalities as executable checks.
//!
//! The windowed inequality: with non-negative `y, a, b, Delta`, a
//! non-decreasing non-negative `c`, `C > 0` and `B >= sup b`,
//!
//! ```text
//! y_n <= b_n c_n + C sum_{k=n-Delta_n}^{n-1} a_k y_k            (hypothesis)
//! N   = min { N : C sum_{k=n-Delta_n}^{n-1} a_k <= 1 - exp(-C t(N)) for all n >= N }
//! y_n <= c_n (b_n + B C exp(C t(N)) sum_{k=n-Delta_n}^{n-1} a_k)  (conclusion, n >= N)
//! ```
//!
//! Sequences are indexed from `n = 1` (`vec[n - 1]`), window lower limits are
//! clamped at 1 and `t(n) = sum_{k=1}^{n-1} a_k`. All comparisons allow a
//! relative slack for roundoff.

use rand::Rng;

use crate::aoi::{AoiGenerator, AoiModel};
use crate::error::{param, Result};
use crate::rng::{aoi_stream, stream_rng};

pub const DEFAULT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallInstance {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub delta: Vec<u64>,
    pub c: Vec<f64>,
    pub big_c: f64,
    pub big_b: f64,
}

impl GronwallInstance {
    pub fn validate(&self) -> Result<()> {
        let len = self.y.len();
        if len == 0 {
            return Err(param("empty instance"));
        }
        for (name, l) in [("a", self.a.len()), ("b", self.b.len()), ("delta", self.delta.len()), ("c", self.c.len())] {
            if l != len {
                return Err(param(format!("sequence {name} has length {l}, expected {len}")));
            }
        }
        let nonneg = |s: &[f64]| s.iter().all(|v| *v >= 0.0 && v.is_finite());
        if !(nonneg(&self.y) && nonneg(&self.a) && nonneg(&self.b) && nonneg(&self.c)) {
            return Err(param("y, a, b, c must be finite and non-negative"));
        }
        if self.c.windows(2).any(|w| w[1] < w[0]) {
            return Err(param("c must be non-decreasing"));
        }
        if !(self.big_c > 0.0) {
            return Err(param(format!("C={} must be positive", self.big_c)));
        }
        let sup_b = self.b.iter().copied().fold(0.0, f64::max);
        if !(self.big_b > 0.0 && self.big_b >= sup_b) {
            return Err(param(format!("B={} must be positive and >= sup b = {sup_b}", self.big_b)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `t(n)` for `n = 0..=len`.
    pub fn times(&self) -> Vec<f64> {
        let mut t = vec![0.0, 0.0];
        for k in 1..self.len() {
            t.push(t[k] + self.a[k - 1]);
        }
        t
    }

    /// `sum_{k=max(1, n-Delta_n)}^{n-1} a_k`.
    pub fn window(&self, n: usize) -> f64 {
        let lo = lower(n, self.delta[n - 1]);
        (lo..n).map(|k| self.a[k - 1]).sum()
    }

    fn weighted_window(&self, n: usize) -> f64 {
        let lo = lower(n, self.delta[n - 1]);
        (lo..n).map(|k| self.a[k - 1] * self.y[k - 1]).sum()
    }
}

fn lower(n: usize, delta: u64) -> usize {
    n.saturating_sub(usize::try_from(delta).unwrap_or(usize::MAX)).max(1)
}

/// Smallest `N` in `0..=len` satisfying the averaging condition for every
/// `n >= max(N, 1)` up to the horizon.
pub fn gronwall_threshold(inst: &GronwallInstance) -> Option<usize> {
    let len = inst.len();
    let t = inst.times();
    // suffix maxima of C * window(n)
    let mut suffix = vec![0.0f64; len + 2];
    for n in (1..=len).rev() {
        suffix[n] = suffix[n + 1].max(inst.big_c * inst.window(n));
    }
    (0..=len).find(|&big_n| {
        let rhs = 1.0 - (-inst.big_c * t[big_n]).exp();
        suffix[big_n.max(1)] <= rhs
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GronwallVerdict {
    Holds,
    /// The instance does not satisfy the hypothesis at this `n`.
    HypothesisViolated { n: usize },
    ThresholdNotFound,
    BoundViolated { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub verdict: GronwallVerdict,
    pub threshold: Option<usize>,
    /// Largest `y_n / bound_n` over `n >= N` (<= 1 when the bound holds).
    pub worst_ratio: f64,
    /// When `b_n` and the windows decay: whether `y_n / c_n` over the last
    /// quarter stays below its level over the second quarter.
    pub corollary_trend: Option<bool>,
}

pub fn gronwall_bound_check(inst: &GronwallInstance, slack: f64) -> Result<GronwallReport> {
    inst.validate()?;
    let len = inst.len();
    for n in 1..=len {
        let rhs = inst.b[n - 1] * inst.c[n - 1] + inst.big_c * inst.weighted_window(n);
        if inst.y[n - 1] > rhs * (1.0 + slack) + f64::MIN_POSITIVE {
            return Ok(GronwallReport {
                verdict: GronwallVerdict::HypothesisViolated { n },
                threshold: None,
                worst_ratio: f64::NAN,
                corollary_trend: None,
            });
        }
    }
    let Some(big_n) = gronwall_threshold(inst) else {
        return Ok(GronwallReport {
            verdict: GronwallVerdict::ThresholdNotFound,
            threshold: None,
            worst_ratio: f64::NAN,
            corollary_trend: None,
        });
    };
    let t = inst.times();
    let factor = inst.big_b * inst.big_c * (inst.big_c * t[big_n]).exp();
    let mut worst: f64 = 0.0;
    let mut verdict = GronwallVerdict::Holds;
    for n in big_n.max(1)..=len {
        let bound = inst.c[n - 1] * (inst.b[n - 1] + factor * inst.window(n));
        let y = inst.y[n - 1];
        if y > 0.0 {
            worst = worst.max(if bound > 0.0 { y / bound } else { f64::INFINITY });
        }
        if y > bound * (1.0 + slack) + f64::MIN_POSITIVE && verdict == GronwallVerdict::Holds {
            verdict = GronwallVerdict::BoundViolated { n };
        }
    }
    Ok(GronwallReport { verdict, threshold: Some(big_n), worst_ratio: worst, corollary_trend: corollary_trend(inst) })
}

fn corollary_trend(inst: &GronwallInstance) -> Option<bool> {
    let len = inst.len();
    if len < 8 {
        return None;
    }
    let q = len / 4;
    let early_b = inst.b[q..2 * q].iter().copied().fold(0.0, f64::max);
    let late_b = inst.b[3 * q..].iter().copied().fold(0.0, f64::max);
    let early_w = (q + 1..=2 * q).map(|n| inst.window(n)).fold(0.0, f64::max);
    let late_w = (3 * q + 1..=len).map(|n| inst.window(n)).fold(0.0, f64::max);
    if !(late_b < early_b && late_w <= early_w) {
        return None;
    }
    let ratio = |n: usize| if inst.c[n - 1] > 0.0 { inst.y[n - 1] / inst.c[n - 1] } else { 0.0 };
    let early = (q + 1..=2 * q).map(ratio).fold(0.0, f64::max);
    let late = (3 * q + 1..=len).map(ratio).fold(0.0, f64::max);
    Some(late <= early)
}

/// Builds `y` by running the hypothesis with equality.
pub fn equality_recursion(
    a: Vec<f64>,
    b: Vec<f64>,
    delta: Vec<u64>,
    c: Vec<f64>,
    big_c: f64,
    big_b: f64,
) -> GronwallInstance {
    let len = a.len();
    let mut inst = GronwallInstance { y: vec![0.0; len], a, b, delta, c, big_c, big_b };
    for n in 1..=len {
        let y = inst.b[n - 1] * inst.c[n - 1] + big_c * inst.weighted_window(n);
        inst.y[n - 1] = y;
    }
    inst
}

/// A randomized equality-recursion instance: harmonic `a`, windows from a
/// Bernoulli-refresh delay path, `C` uniform in `[0.1, 2]`.
pub fn random_instance<R: Rng>(rng: &mut R, horizon: usize, path_seed: u64) -> GronwallInstance {
    let a: Vec<f64> = (1..=horizon).map(|k| 1.0 / k as f64).collect();
    let q = rng.random_range(0.1..0.9);
    let model = AoiModel::bernoulli(q).expect("q in (0, 1)");
    let mut gen = AoiGenerator::new(model, path_seed, aoi_stream(0, 1));
    let delta: Vec<u64> = (0..horizon).map(|_| gen.next_aoi()).collect();
    let big_b = rng.random_range(0.5..2.0);
    let decay = rng.random::<bool>();
    let b: Vec<f64> = (1..=horizon)
        .map(|n| {
            let u: f64 = rng.random();
            if decay {
                big_b * u / (n as f64).sqrt()
            } else {
                big_b * u
            }
        })
        .collect();
    let mut c = Vec::with_capacity(horizon);
    let mut level = rng.random_range(0.0..2.0);
    for _ in 0..horizon {
        level += rng.random_range(0.0..0.05);
        c.push(level);
    }
    let big_c = rng.random_range(0.1..=2.0);
    equality_recursion(a, b, delta, c, big_c, big_b)
}

/// Classical discrete Gronwall: from `x_{n+1} <= C + L sum_{m=0}^{n} a_m x_m`
/// (and `x_0 <= C`) conclude `x_{n+1} <= C exp(L sum_{m=0}^{n} a_m)`.
/// Sequences are 0-indexed here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalVerdict {
    Holds,
    HypothesisViolated { n: usize },
    BoundViolated { n: usize },
}

pub fn classical_gronwall_check(x: &[f64], a: &[f64], big_c: f64, l: f64, slack: f64) -> Result<ClassicalVerdict> {
    if x.len() != a.len() || x.is_empty() {
        return Err(param("x and a must be nonempty and of equal length"));
    }
    if !(big_c > 0.0 && l >= 0.0) {
        return Err(param("need C > 0 and L >= 0"));
    }
    if x.iter().chain(a).any(|v| !(*v >= 0.0)) {
        return Err(param("x and a must be non-negative"));
    }
    let tol = |v: f64| v * (1.0 + slack) + f64::MIN_POSITIVE;
    if x[0] > tol(big_c) {
        return Ok(ClassicalVerdict::HypothesisViolated { n: 0 });
    }
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for n in 0..x.len() - 1 {
        weighted += a[n] * x[n];
        mass += a[n];
        if x[n + 1] > tol(big_c + l * weighted) {
            return Ok(ClassicalVerdict::HypothesisViolated { n: n + 1 });
        }
        if x[n + 1] > tol(big_c * (l * mass).exp()) {
            return Ok(ClassicalVerdict::BoundViolated { n: n + 1 });
        }
    }
    Ok(ClassicalVerdict::Holds)
}

/// `x_0 = C`, `x_{n+1} = C + L sum_{m<=n} a_m x_m`.
pub fn classical_equality_recursion(a: &[f64], big_c: f64, l: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(a.len());
    x.push(big_c);
    let mut weighted = 0.0;
    for n in 0..a.len().saturating_sub(1) {
        weighted += a[n] * x[n];
        x.push(big_c + l * weighted);
    }
    x
}

/// A seeded stream of random instances, reproducible from one seed.
pub fn random_instances(seed: u64, count: usize, horizon: usize) -> Vec<GronwallInstance> {
    let mut rng = stream_rng(seed, crate::rng::aux_stream(0x6777));
    (0..count)
        .map(|k| random_instance(&mut rng, horizon, seed.wrapping_mul(1_000_003).wrapping_add(k as u64)))
        .collect()
}
