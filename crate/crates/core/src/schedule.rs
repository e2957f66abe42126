//! Stepsize schedules and the time axis they induce.
//!
//! Two regimes are tied to the delay moment order `p` the schedule targets:
//! `a(n) = a / n` when `p <= 1`, and `a(n) = a n^(-1/q)` with
//! `1 < q < min(2, p)` when `p > 1`. The time axis `t(n) = sum_{i<n} a(i)`
//! is cut into segments of length at least `T`.

use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{param, Result};

/// Indices checked when validating a custom schedule against its class.
pub const CUSTOM_CHECK_LEN: usize = 10_000;

#[derive(Clone)]
pub enum Regime {
    Harmonic,
    Power { q: f64 },
    /// User-supplied stepsizes, declared to be no larger asymptotically than
    /// the reference regime `class`.
    Custom { steps: Arc<dyn Fn(usize) -> f64 + Send + Sync>, class: Box<Regime> },
    /// Constant stepsize. Not summable-square; only for exercising the time
    /// axis arithmetic.
    Constant,
}

impl fmt::Debug for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Harmonic => f.write_str("Harmonic"),
            Regime::Power { q } => write!(f, "Power {{ q: {q} }}"),
            Regime::Custom { class, .. } => write!(f, "Custom {{ class: {class:?} }}"),
            Regime::Constant => f.write_str("Constant"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepSchedule {
    regime: Regime,
    scale: f64,
    p_assumed: f64,
}

impl StepSchedule {
    pub fn harmonic(scale: f64, p_assumed: f64) -> Result<Self> {
        Self::new(Regime::Harmonic, scale, p_assumed)
    }

    pub fn power(scale: f64, q: f64, p_assumed: f64) -> Result<Self> {
        Self::new(Regime::Power { q }, scale, p_assumed)
    }

    /// Power schedule with `q` from [`choose_q`].
    pub fn power_for(scale: f64, p_assumed: f64) -> Result<Self> {
        Self::power(scale, choose_q(p_assumed)?, p_assumed)
    }

    /// The A5-compatible schedule for a delay moment order `p`.
    pub fn for_moment(scale: f64, p: f64) -> Result<Self> {
        if p > 1.0 {
            Self::power_for(scale, p)
        } else {
            Self::harmonic(scale, p)
        }
    }

    pub fn constant(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(param(format!("stepsize scale {scale} must be positive")));
        }
        Ok(Self { regime: Regime::Constant, scale, p_assumed: f64::INFINITY })
    }

    pub fn custom(
        steps: impl Fn(usize) -> f64 + Send + Sync + 'static,
        class: StepSchedule,
    ) -> Result<Self> {
        for n in 1..=CUSTOM_CHECK_LEN {
            let v = steps(n);
            let reference = class.stepsize(n);
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(format!("custom stepsize a({n})={v} is not positive")));
            }
            if v > 2.0 * reference {
                return Err(param(format!(
                    "custom stepsize a({n})={v} exceeds twice its reference {reference}"
                )));
            }
        }
        let p_assumed = class.p_assumed;
        let scale = class.scale;
        Ok(Self {
            regime: Regime::Custom { steps: Arc::new(steps), class: Box::new(class.regime) },
            scale,
            p_assumed,
        })
    }

    pub fn new(regime: Regime, scale: f64, p_assumed: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(param(format!("stepsize scale {scale} must be positive")));
        }
        if !(p_assumed > 0.0) {
            return Err(param(format!("moment order p={p_assumed} must be positive")));
        }
        match &regime {
            Regime::Harmonic => {
                if p_assumed > 1.0 {
                    return Err(param(format!(
                        "harmonic regime requires p in (0, 1], got p={p_assumed}; use the power regime"
                    )));
                }
            }
            Regime::Power { q } => {
                if p_assumed <= 1.0 {
                    return Err(param(format!(
                        "power regime requires p > 1, got p={p_assumed}"
                    )));
                }
                let upper = p_assumed.min(2.0);
                if !(*q > 1.0 && *q < upper) {
                    return Err(param(format!(
                        "power regime requires 1 < q < min(2, p) = {upper}, got q={q}"
                    )));
                }
            }
            Regime::Custom { .. } | Regime::Constant => {
                return Err(param("use StepSchedule::custom / StepSchedule::constant"));
            }
        }
        Ok(Self { regime, scale, p_assumed })
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn p_assumed(&self) -> f64 {
        self.p_assumed
    }

    /// `a(n)` for `n >= 1`.
    pub fn stepsize(&self, n: usize) -> f64 {
        debug_assert!(n >= 1, "stepsizes are indexed from 1");
        let n = n.max(1) as f64;
        match &self.regime {
            Regime::Harmonic => self.scale / n,
            Regime::Power { q } => self.scale * n.powf(-1.0 / q),
            Regime::Custom { steps, .. } => steps(n as usize),
            Regime::Constant => self.scale,
        }
    }

    pub fn describe(&self) -> String {
        match &self.regime {
            Regime::Harmonic => format!("harmonic(a={})", self.scale),
            Regime::Power { q } => format!("power(a={}, q={q})", self.scale),
            Regime::Custom { class, .. } => format!("custom(class={class:?})"),
            Regime::Constant => format!("constant(a={})", self.scale),
        }
    }
}

/// Midpoint of the admissible interval `(1, min(2, p))`.
pub fn choose_q(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(param(format!("p={p} <= 1 requires the harmonic regime")));
    }
    Ok((1.0 + p.min(2.0)) / 2.0)
}

#[derive(Debug, Default)]
struct AxisCache {
    /// `t[n]` for `n = 0..t.len()`.
    t: Vec<f64>,
    /// `n(m)` for `m = 0..starts.len()`.
    starts: Vec<usize>,
}

/// Prefix sums `t(n)` and segment boundaries, extended lazily.
///
/// Readers share the cache; extension takes the write lock.
#[derive(Debug)]
pub struct TimeAxis {
    schedule: StepSchedule,
    segment_length: f64,
    cache: RwLock<AxisCache>,
}

impl Clone for TimeAxis {
    fn clone(&self) -> Self {
        let cache = self.cache.read().expect("time axis lock");
        Self {
            schedule: self.schedule.clone(),
            segment_length: self.segment_length,
            cache: RwLock::new(AxisCache { t: cache.t.clone(), starts: cache.starts.clone() }),
        }
    }
}

impl TimeAxis {
    pub fn new(schedule: StepSchedule, segment_length: f64) -> Result<Self> {
        if !(segment_length > 0.0 && segment_length.is_finite()) {
            return Err(param(format!("segment length T={segment_length} must be positive")));
        }
        let cache = AxisCache { t: vec![0.0, 0.0], starts: vec![1] };
        Ok(Self { schedule, segment_length, cache: RwLock::new(cache) })
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn segment_length(&self) -> f64 {
        self.segment_length
    }

    pub fn stepsize(&self, n: usize) -> f64 {
        self.schedule.stepsize(n)
    }

    fn ensure_time(&self, n: usize) {
        if self.cache.read().expect("time axis lock").t.len() > n {
            return;
        }
        let mut cache = self.cache.write().expect("time axis lock");
        let t = &mut cache.t;
        while t.len() <= n {
            let k = t.len();
            let next = t[k - 1] + self.schedule.stepsize(k - 1);
            t.push(next);
        }
    }

    /// `t(0) = 0`, `t(n) = sum_{i=1}^{n-1} a(i)`.
    pub fn time(&self, n: usize) -> f64 {
        self.ensure_time(n);
        self.cache.read().expect("time axis lock").t[n]
    }

    /// `sum_{k=n-tau}^{n-1} a(k)` with the lower limit clamped at 1.
    pub fn window_sum(&self, n: usize, tau: u64) -> f64 {
        if tau == 0 || n <= 1 {
            return 0.0;
        }
        let lo = clamp_lower(n, tau);
        self.ensure_time(n);
        let cache = self.cache.read().expect("time axis lock");
        cache.t[n] - cache.t[lo]
    }

    /// Grows the segment table until `n(m)` is known for `m <= upto`.
    fn ensure_segment(&self, upto: usize) {
        loop {
            {
                let cache = self.cache.read().expect("time axis lock");
                if cache.starts.len() > upto {
                    return;
                }
            }
            let (start, target) = {
                let cache = self.cache.read().expect("time axis lock");
                let last = *cache.starts.last().expect("nonempty");
                (last, cache.t[last] + self.segment_length)
            };
            let mut n = start + 1;
            loop {
                self.ensure_time(n);
                if self.cache.read().expect("time axis lock").t[n] >= target {
                    break;
                }
                n += 1;
            }
            let mut cache = self.cache.write().expect("time axis lock");
            if *cache.starts.last().expect("nonempty") == start {
                cache.starts.push(n);
            }
        }
    }

    /// `T_m = t(n(m))`.
    pub fn segment_start_time(&self, m: usize) -> f64 {
        self.time(self.segment_start(m))
    }

    /// `n(m)`.
    pub fn segment_start(&self, m: usize) -> usize {
        self.ensure_segment(m);
        self.cache.read().expect("time axis lock").starts[m]
    }

    /// `m(n)`: the largest `m` with `T_m <= t(n)`.
    pub fn segment_index(&self, n: usize) -> usize {
        if n <= 1 {
            return 0;
        }
        loop {
            {
                let cache = self.cache.read().expect("time axis lock");
                let last = *cache.starts.last().expect("nonempty");
                if last > n {
                    // first start exceeding n, minus one
                    return cache.starts.partition_point(|&s| s <= n) - 1;
                }
            }
            let len = self.cache.read().expect("time axis lock").starts.len();
            self.ensure_segment(len);
        }
    }

    pub fn segment_bounds(&self, m: usize) -> SegmentBounds {
        let start = self.segment_start(m);
        let end = self.segment_start(m + 1);
        SegmentBounds {
            t_start: self.time(start),
            t_end: self.time(end),
            n_start: start,
            n_end: end,
        }
    }

    /// Number of complete segments `[T_m, T_{m+1}]` with `n(m+1) <= horizon`.
    pub fn complete_segments(&self, horizon: usize) -> usize {
        let mut m = 0;
        while self.segment_start(m + 1) <= horizon {
            m += 1;
        }
        m
    }
}

/// `(T_m, T_{m+1}, n(m), n(m+1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentBounds {
    pub t_start: f64,
    pub t_end: f64,
    pub n_start: usize,
    pub n_end: usize,
}

/// `max(1, n - tau)` for `n >= 1`.
pub fn clamp_lower(n: usize, tau: u64) -> usize {
    let tau = usize::try_from(tau).unwrap_or(usize::MAX);
    n.saturating_sub(tau).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepsize_examples() {
        assert_eq!(StepSchedule::harmonic(1.0, 1.0).unwrap().stepsize(4), 0.25);
        let a32 = StepSchedule::power(1.0, 1.25, 1.5).unwrap().stepsize(32);
        assert!((a32 - 0.0625).abs() < 1e-15, "{a32}");
        assert_eq!(StepSchedule::harmonic(0.5, 0.7).unwrap().stepsize(1), 0.5);
    }

    #[test]
    fn regime_validation() {
        assert!(StepSchedule::harmonic(1.0, 1.5).is_err());
        assert!(StepSchedule::power(1.0, 1.25, 0.5).is_err());
        assert!(StepSchedule::power(1.0, 1.6, 1.5).is_err());
        assert!(StepSchedule::power(1.0, 1.0, 3.0).is_err());
        assert!(StepSchedule::power(1.0, 2.0, 3.0).is_err());
        assert!(StepSchedule::harmonic(0.0, 1.0).is_err());
        assert!(StepSchedule::harmonic(1.0, 0.0).is_err());
        assert!(StepSchedule::new(Regime::Constant, 1.0, 1.0).is_err());
    }

    #[test]
    fn choose_q_midpoint() {
        assert_eq!(choose_q(1.5).unwrap(), 1.25);
        assert_eq!(choose_q(3.0).unwrap(), 1.5);
        assert!((choose_q(1.1).unwrap() - 1.05).abs() < 1e-15);
        assert!(choose_q(1.0).is_err());
        assert!(choose_q(0.5).is_err());
    }

    #[test]
    fn custom_schedule_validation() {
        let reference = StepSchedule::harmonic(1.0, 1.0).unwrap();
        let ok = StepSchedule::custom(|n| 1.5 / (n as f64 + 1.0), reference.clone()).unwrap();
        assert_eq!(ok.stepsize(2), 0.5);
        assert!(StepSchedule::custom(|n| 1.0 / (n as f64).sqrt(), reference).is_err());
    }

    #[test]
    fn time_instants() {
        let axis = TimeAxis::new(StepSchedule::harmonic(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(axis.time(0), 0.0);
        assert_eq!(axis.time(1), 0.0);
        assert_eq!(axis.time(3), 1.5);
    }

    #[test]
    fn window_sums() {
        let axis = TimeAxis::new(StepSchedule::harmonic(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(axis.window_sum(17, 0), 0.0);
        assert_eq!(axis.window_sum(3, 2), 1.5);
        // clamped: n=3, tau=10 sums a(1) + a(2)
        assert_eq!(axis.window_sum(3, 10), 1.5);
        assert_eq!(axis.window_sum(1, 5), 0.0);
    }

    #[test]
    fn constant_schedule_segments() {
        let axis = TimeAxis::new(StepSchedule::constant(1.0).unwrap(), 2.0).unwrap();
        assert_eq!(axis.segment_start(0), 1);
        assert_eq!(axis.segment_start(1), 3);
        assert_eq!(axis.segment_start(2), 5);
        assert_eq!(axis.segment_start_time(1), 2.0);
        assert_eq!(axis.segment_start_time(2), 4.0);
        assert_eq!(axis.segment_index(1), 0);
        assert_eq!(axis.segment_index(2), 0);
        assert_eq!(axis.segment_index(3), 1);
        assert_eq!(axis.segment_index(6), 2);
        let b = axis.segment_bounds(1);
        assert_eq!((b.t_start, b.t_end, b.n_start, b.n_end), (2.0, 4.0, 3, 5));
    }

    #[test]
    fn harmonic_first_segment_by_scan() {
        let axis = TimeAxis::new(StepSchedule::harmonic(1.0, 1.0).unwrap(), 1.0).unwrap();
        // prefix-sum scan: t(1)=0, t(2)=1, t(3)=1.5
        let prefix: Vec<f64> = (0..10)
            .map(|n: usize| (1..n).map(|i| 1.0 / i as f64).sum())
            .collect();
        let scan = (1..10).find(|&n| prefix[n] >= 1.0).unwrap();
        assert_eq!(scan, 2);
        assert_eq!(axis.segment_start(1), scan);
    }

    #[test]
    fn clamp() {
        assert_eq!(clamp_lower(5, 2), 3);
        assert_eq!(clamp_lower(5, 9), 1);
        assert_eq!(clamp_lower(5, u64::MAX), 1);
    }
}
