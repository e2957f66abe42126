//! The distributed iteration with delayed reads, and its heavy-ball variant.
//!
//! At step `n` agent `i` reads block `j` from `x_{n - tau_ij(n)}` (clamped to
//! index 1), evaluates its local drift there, adds its noise, and moves its
//! own block:
//!
//! ```text
//! x^i_{n+1} = x^i_n + a(n) [ h^i(x^1_{n-tau_i1(n)}, ..., x^D_{n-tau_iD(n)}) + M^i_{n+1} ]
//! ```
//!
//! The heavy-ball variant replaces the bracket by the momentum
//! `m_n = beta m_{n-1} + (1 - beta) g_n`, `g_n = h(delayed) + M_{n+1}`.
//!
//! Histories keep every iterate: delays are unbounded, so any truncation
//! could silently change which value a delayed read sees.

use std::io::Write;

use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::aoi::{AoiGenerator, AoiModel};
use crate::dynamics::{DriftField, NoiseModel, QuadraticObjective, Vector};
use crate::error::{param, Error, Result};
use crate::rng::{aoi_stream, noise_stream, stream_rng};
use crate::schedule::{clamp_lower, StepSchedule};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Where drift and noise come from.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// A drift field plus independent additive noise.
    Additive { field: DriftField, noise: NoiseModel },
    /// Per-agent stochastic gradients of a quadratic objective; the noise is
    /// the deviation of the sample drift from the mean drift.
    Sgd { objective: QuadraticObjective, field: DriftField },
}

impl Dynamics {
    pub fn additive(field: DriftField, noise: NoiseModel) -> Self {
        Dynamics::Additive { field, noise }
    }

    pub fn sgd(objective: QuadraticObjective) -> Self {
        let field = objective.mean_drift();
        Dynamics::Sgd { objective, field }
    }

    pub fn field(&self) -> &DriftField {
        match self {
            Dynamics::Additive { field, .. } | Dynamics::Sgd { field, .. } => field,
        }
    }

    /// Returns `(h^i(view), M^i_{n+1})`.
    fn draw(&self, i: usize, view: &Vector, rng: &mut ChaCha8Rng) -> (Vector, Vector) {
        match self {
            Dynamics::Additive { field, noise } => {
                let h = field.eval_block_unchecked(i, view);
                let m = noise.sample(rng, view, h.len());
                (h, m)
            }
            Dynamics::Sgd { objective, field } => {
                let h = field.eval_block_unchecked(i, view);
                let s = objective.sgd_sample_drift(i, view, rng);
                let m = s - &h;
                (h, m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Plain,
    HeavyBall { beta: f64 },
}

/// How the heavy-ball analysis picks its window length `tau(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentumWindow {
    /// `ceil(n / ln(n + 1))`.
    #[default]
    LogRatio,
    /// `ceil(n / sum_{k<=n} a(k))`.
    StepsizeRatio,
}

/// `D x D` table of delay models; entry `(i, j)` drives `tau_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    d: usize,
    models: Vec<AoiModel>,
}

impl DelayMatrix {
    pub fn new(d: usize, models: Vec<AoiModel>) -> Result<Self> {
        if models.len() != d * d {
            return Err(Error::Dimension { expected: d * d, found: models.len() });
        }
        Ok(Self { d, models })
    }

    pub fn zero(d: usize) -> Self {
        Self::uniform(d, AoiModel::zero(), false)
    }

    /// Every off-diagonal pair uses `model`; the diagonal is `model` too when
    /// `delay_self`, otherwise zero.
    pub fn uniform(d: usize, model: AoiModel, delay_self: bool) -> Self {
        let models = (0..d * d)
            .map(|k| if k / d == k % d && !delay_self { AoiModel::zero() } else { model.clone() })
            .collect();
        Self { d, models }
    }

    pub fn agents(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> &AoiModel {
        &self.models[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, model: AoiModel) {
        self.models[i * self.d + j] = model;
    }

    pub fn all_zero(&self) -> bool {
        self.models.iter().all(AoiModel::is_zero)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dynamics: Dynamics,
    pub delays: DelayMatrix,
    pub schedule: StepSchedule,
    /// Number of iterates `N`; the run performs `N - 1` steps.
    pub horizon: usize,
    pub x1: Vector,
    pub seed: u64,
    pub variant: Variant,
    /// When set, abort if a delayed read reaches further back than this.
    pub history_cap: Option<usize>,
    pub divergence_threshold: f64,
}

impl SimConfig {
    pub fn new(dynamics: Dynamics, schedule: StepSchedule, x1: Vector, horizon: usize) -> Self {
        let d = dynamics.field().blocks().count();
        Self {
            dynamics,
            delays: DelayMatrix::zero(d),
            schedule,
            horizon,
            x1,
            seed: 0,
            variant: Variant::Plain,
            history_cap: None,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    pub fn with_delays(mut self, delays: DelayMatrix) -> Self {
        self.delays = delays;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let field = self.dynamics.field();
        if self.horizon < 1 {
            return Err(param("horizon must be at least 1"));
        }
        if self.x1.len() != field.dim() {
            return Err(Error::Dimension { expected: field.dim(), found: self.x1.len() });
        }
        if self.delays.agents() != field.blocks().count() {
            return Err(param(format!(
                "delay matrix is {0}x{0} but the drift has {1} blocks",
                self.delays.agents(),
                field.blocks().count()
            )));
        }
        if let Variant::HeavyBall { beta } = self.variant {
            if !(0.0..1.0).contains(&beta) {
                return Err(param(format!("momentum beta={beta} outside [0, 1)")));
            }
        }
        if !self.x1.iter().all(|v| v.is_finite()) {
            return Err(param("initial state must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Completed,
    /// `x_n` became non-finite or exceeded the divergence threshold.
    Diverged { n: usize },
    /// A delayed read at step `n` needed an iterate older than the cap.
    CapExceeded { n: usize, lag: usize },
}

impl Verdict {
    pub fn is_completed(&self) -> bool {
        matches!(self, Verdict::Completed)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Completed => f.write_str("completed"),
            Verdict::Diverged { n } => write!(f, "diverged@{n}"),
            Verdict::CapExceeded { n, lag } => write!(f, "cap-exceeded@{n}(lag={lag})"),
        }
    }
}

/// Everything a run realised. Step quantities (`tau`, `noise`, `drift_error`,
/// `g`, `momentum`) are indexed by the step `n = 1..` that produced `x_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimHistory {
    pub x: Vec<Vector>,
    /// `tau[n-1][i * D + j] = tau_ij(n)`.
    pub tau: Vec<Vec<u64>>,
    /// `M_{n+1}`.
    pub noise: Vec<Vector>,
    /// `e_n = h(delayed) - h(x_n)`.
    pub drift_error: Vec<Vector>,
    /// `g_n = h(delayed) + M_{n+1}`; recorded for the heavy-ball variant only.
    pub g: Vec<Vector>,
    /// `m_n`; heavy-ball only.
    pub momentum: Vec<Vector>,
    pub steps: Vec<f64>,
    pub agents: usize,
    pub variant: Variant,
    pub verdict: Verdict,
}

impl SimHistory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `x_n` for `n >= 1`.
    pub fn at(&self, n: usize) -> &Vector {
        &self.x[n - 1]
    }

    pub fn last(&self) -> &Vector {
        self.x.last().expect("history holds x_1")
    }

    pub fn steps_taken(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self, n: usize, i: usize, j: usize) -> u64 {
        self.tau[n - 1][i * self.agents + j]
    }

    /// The realised `tau_ij` path over all steps.
    pub fn tau_path(&self, i: usize, j: usize) -> Vec<u64> {
        self.tau.iter().map(|row| row[i * self.agents + j]).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.x.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Writes one row per iterate. Columns: `n, x_1..x_d, tau_i_j..., e_norm,
    /// step`, plus `m_1..m_d, delta_norm, c_n` for heavy-ball histories. The
    /// step columns are empty on the last row (no step was taken from it).
    pub fn write_csv<W: Write>(&self, mut w: W, window: MomentumWindow) -> std::io::Result<()> {
        let d = self.x.first().map_or(0, |v| v.len());
        let heavy = matches!(self.variant, Variant::HeavyBall { .. });
        let mut header: Vec<String> = vec!["n".into()];
        header.extend((1..=d).map(|k| format!("x_{k}")));
        for i in 1..=self.agents {
            for j in 1..=self.agents {
                header.push(format!("tau_{i}_{j}"));
            }
        }
        header.push("e_norm".into());
        header.push("step".into());
        let profile = if heavy {
            header.extend((1..=d).map(|k| format!("m_{k}")));
            header.push("delta_norm".into());
            header.push("c_n".into());
            Some(tail_profile(self, window))
        } else {
            None
        };
        writeln!(w, "{}", header.join(","))?;
        let steps = self.steps_taken();
        let blank_cols = self.agents * self.agents + 2 + if heavy { d + 2 } else { 0 };
        for (k, x) in self.x.iter().enumerate() {
            let mut row: Vec<String> = vec![(k + 1).to_string()];
            row.extend(x.iter().map(|v| format_float(*v)));
            if k < steps {
                row.extend(self.tau[k].iter().map(u64::to_string));
                row.push(format_float(self.drift_error[k].norm()));
                row.push(format_float(self.steps[k]));
                if let Some(profile) = &profile {
                    row.extend(self.momentum[k].iter().map(|v| format_float(*v)));
                    let (delta, c) = profile[k];
                    row.push(format_float(delta));
                    row.push(format_float(c));
                }
            } else {
                row.extend(std::iter::repeat_n(String::new(), blank_cols));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shortest representation that round-trips.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Executes the configured variant to the horizon or until divergence.
pub fn run(config: &SimConfig) -> Result<SimHistory> {
    config.validate()?;
    let field = config.dynamics.field();
    let blocks = field.blocks().clone();
    let agents = blocks.count();
    let d = blocks.dim();
    let horizon = config.horizon;

    let mut delay_gens: Vec<AoiGenerator> = (0..agents * agents)
        .map(|k| {
            let (i, j) = (k / agents, k % agents);
            AoiGenerator::new(config.delays.get(i, j).clone(), config.seed, aoi_stream(i, j))
        })
        .collect();
    let mut noise_rngs: Vec<ChaCha8Rng> =
        (0..agents).map(|i| stream_rng(config.seed, noise_stream(i))).collect();

    let heavy_beta = match config.variant {
        Variant::HeavyBall { beta } => Some(beta),
        Variant::Plain => None,
    };
    let steps_cap = horizon.saturating_sub(1);
    let mut hist = SimHistory {
        x: Vec::with_capacity(horizon),
        tau: Vec::with_capacity(steps_cap),
        noise: Vec::with_capacity(steps_cap),
        drift_error: Vec::with_capacity(steps_cap),
        g: Vec::new(),
        momentum: Vec::new(),
        steps: Vec::with_capacity(steps_cap),
        agents,
        variant: config.variant,
        verdict: Verdict::Completed,
    };
    hist.x.push(config.x1.clone());
    let mut momentum = Vector::zeros(d);

    for n in 1..horizon {
        let a = config.schedule.stepsize(n);
        let taus: Vec<u64> = delay_gens.iter_mut().map(AoiGenerator::next_aoi).collect();
        let xn = hist.x[n - 1].clone();

        let mut h_delayed = Vector::zeros(d);
        let mut noise = Vector::zeros(d);
        let mut err = Vector::zeros(d);
        for i in 0..agents {
            let mut view = Vector::zeros(d);
            for j in 0..agents {
                let read = clamp_lower(n, taus[i * agents + j]);
                if let Some(cap) = config.history_cap {
                    let lag = n - read;
                    if lag > cap {
                        hist.verdict = Verdict::CapExceeded { n, lag };
                        return Ok(hist);
                    }
                }
                let r = blocks.range(j);
                view.rows_mut(r.start, r.len()).copy_from(&hist.x[read - 1].rows(r.start, r.len()));
            }
            let (h, m) = config.dynamics.draw(i, &view, &mut noise_rngs[i]);
            let h_now = field.eval_block_unchecked(i, &xn);
            let r = blocks.range(i);
            err.rows_mut(r.start, r.len()).copy_from(&(&h - h_now));
            h_delayed.rows_mut(r.start, r.len()).copy_from(&h);
            noise.rows_mut(r.start, r.len()).copy_from(&m);
        }

        let g = &h_delayed + &noise;
        let next = match heavy_beta {
            None => &xn + &g * a,
            Some(beta) => {
                momentum = &momentum * beta + &g * (1.0 - beta);
                hist.g.push(g);
                hist.momentum.push(momentum.clone());
                &xn + &momentum * a
            }
        };
        hist.tau.push(taus);
        hist.noise.push(noise);
        hist.drift_error.push(err);
        hist.steps.push(a);
        let bad = !next.iter().all(|v| v.is_finite()) || next.norm() > config.divergence_threshold;
        hist.x.push(next);
        if bad {
            hist.verdict = Verdict::Diverged { n: n + 1 };
            break;
        }
    }
    Ok(hist)
}

/// Recomputes the trajectory from the recorded delays and noise alone.
pub fn replay(config: &SimConfig, recorded: &SimHistory) -> Result<Vec<Vector>> {
    config.validate()?;
    let field = config.dynamics.field();
    let blocks = field.blocks();
    let agents = blocks.count();
    let d = blocks.dim();
    let mut x = vec![config.x1.clone()];
    let mut momentum = Vector::zeros(d);
    for n in 1..=recorded.steps_taken() {
        let xn = x[n - 1].clone();
        let mut h_delayed = Vector::zeros(d);
        for i in 0..agents {
            let mut view = Vector::zeros(d);
            for j in 0..agents {
                let read = clamp_lower(n, recorded.tau(n, i, j));
                let r = blocks.range(j);
                view.rows_mut(r.start, r.len()).copy_from(&x[read - 1].rows(r.start, r.len()));
            }
            let r = blocks.range(i);
            h_delayed.rows_mut(r.start, r.len()).copy_from(&field.eval_block_unchecked(i, &view));
        }
        let g = &h_delayed + &recorded.noise[n - 1];
        let a = config.schedule.stepsize(n);
        let next = match config.variant {
            Variant::Plain => &xn + &g * a,
            Variant::HeavyBall { beta } => {
                momentum = &momentum * beta + &g * (1.0 - beta);
                &xn + &momentum * a
            }
        };
        x.push(next);
    }
    Ok(x)
}

/// Largest relative residual of `x_{n+1} - x_n = a(n) [h(x_n) + e_n + M_{n+1}]`
/// over a plain-variant history.
pub fn decomposition_residual(field: &DriftField, hist: &SimHistory) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=hist.steps_taken() {
        let lhs = hist.at(n + 1) - hist.at(n);
        let rhs = (field.eval_unchecked(hist.at(n)) + &hist.drift_error[n - 1] + &hist.noise[n - 1])
            * hist.steps[n - 1];
        let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    worst
}

/// Runs `config` once per seed, concurrently; results come back in seed order.
pub fn run_replications(config: &SimConfig, seeds: &[u64]) -> Vec<(u64, Result<SimHistory>)> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = config.clone().with_seed(seed);
            (seed, run(&cfg))
        })
        .collect()
}

/// The heavy-ball window length `tau(n)`.
pub fn momentum_tau(n: usize, window: MomentumWindow, schedule: &StepSchedule) -> usize {
    let nf = n as f64;
    let tau = match window {
        MomentumWindow::LogRatio => (nf / (nf + 1.0).ln()).ceil(),
        MomentumWindow::StepsizeRatio => {
            let total: f64 = (1..=n).map(|k| schedule.stepsize(k)).sum();
            (nf / total).ceil()
        }
    };
    tau as usize
}

/// `c(n) = sum_{i = max(1, n - tau)}^{n} beta^{n-i}`.
pub fn window_mass(n: usize, tau: usize, beta: f64) -> f64 {
    let lo = n.saturating_sub(tau).max(1);
    let len = (n + 1 - lo) as i32;
    if beta == 0.0 {
        return 1.0;
    }
    (1.0 - beta.powi(len)) / (1.0 - beta)
}

/// The split of `m_n` into recent and old drift contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumSplit {
    pub tau: usize,
    pub c: f64,
    /// `(1 - beta) sum_{i=n-tau}^{n} beta^{n-i} g_i`.
    pub window: Vector,
    /// `(1 - beta) c(n) delta_n`.
    pub tail: Vector,
    /// `delta_n = (1 / c(n)) sum_{i=1}^{n-tau-1} beta^{n-i} g_i`.
    pub delta: Vector,
}

/// Splits `m_n` of a heavy-ball history at `tau(n)`; `n` ranges over the
/// steps taken.
pub fn momentum_split(hist: &SimHistory, n: usize, beta: f64, tau: usize) -> Result<MomentumSplit> {
    if hist.g.len() < n || n == 0 {
        return Err(param(format!("momentum split needs g_1..g_{n}; history has {}", hist.g.len())));
    }
    Ok(split_sequence(&hist.g, n, beta, tau))
}

/// [`momentum_split`] over a bare sequence `g_1..` (`g[k] = g_{k+1}`).
pub fn split_sequence(g: &[Vector], n: usize, beta: f64, tau: usize) -> MomentumSplit {
    let d = g[0].len();
    let lo = n.saturating_sub(tau).max(1);
    let c = window_mass(n, tau, beta);
    let mut window = Vector::zeros(d);
    for i in lo..=n {
        window += &g[i - 1] * beta.powi((n - i) as i32);
    }
    window *= 1.0 - beta;
    let mut old = Vector::zeros(d);
    // tail runs to n - tau - 1, empty when that is below 1
    if n > tau + 1 {
        for i in 1..n - tau {
            old += &g[i - 1] * beta.powi((n - i) as i32);
        }
    }
    let delta = &old / c;
    MomentumSplit { tau, c, window, tail: old * (1.0 - beta), delta }
}

/// `(|delta_n|, c(n))` for every step, computed incrementally.
pub fn tail_profile(hist: &SimHistory, window: MomentumWindow) -> Vec<(f64, f64)> {
    let beta = match hist.variant {
        Variant::HeavyBall { beta } => beta,
        Variant::Plain => return Vec::new(),
    };
    let mut prefix = Vec::with_capacity(hist.steps.len() + 1);
    prefix.push(0.0);
    for a in &hist.steps {
        prefix.push(prefix.last().unwrap() + a);
    }
    let schedule_sum = |n: usize| -> f64 { prefix[n.min(hist.steps.len())] };
    let mut out = Vec::with_capacity(hist.g.len());
    if hist.g.is_empty() {
        return out;
    }
    let d = hist.g[0].len();
    let mut old = Vector::zeros(d);
    let mut upto = 0usize; // old holds sum_{i<=upto} beta^{n-i} g_i
    let mut prev_n = 0usize;
    for n in 1..=hist.g.len() {
        let nf = n as f64;
        let tau = match window {
            MomentumWindow::LogRatio => (nf / (nf + 1.0).ln()).ceil() as usize,
            MomentumWindow::StepsizeRatio => (nf / schedule_sum(n)).ceil() as usize,
        };
        let last = n.saturating_sub(tau + 1);
        if last < upto {
            // window shrank; rebuild from scratch
            old = Vector::zeros(d);
            for i in 1..=last {
                old += &hist.g[i - 1] * beta.powi((n - i) as i32);
            }
        } else {
            old *= beta.powi((n - prev_n) as i32);
            for i in upto + 1..=last {
                old += &hist.g[i - 1] * beta.powi((n - i) as i32);
            }
        }
        upto = last;
        prev_n = n;
        let c = window_mass(n, tau, beta);
        out.push((old.norm() / c, c));
    }
    out
}
