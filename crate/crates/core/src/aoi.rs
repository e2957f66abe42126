//! Age-of-Information processes (AoIPs).
//!
//! An AoIP is a non-negative integer process `tau(n)`, indexed from `n = 1`,
//! with unit growth `tau(n+1) <= tau(n) + 1`. Over the integers unit growth is
//! the same statement as `n - tau(n)` being non-decreasing, but both are
//! checked separately by [`PathCheck`] so a violation report names the
//! property that broke.
//!
//! The model catalog:
//!
//! | kind                | transition `tau(n) -> tau(n+1)`                         |
//! |---------------------|---------------------------------------------------------|
//! | `zero`              | `0`                                                     |
//! | `constant(c)`       | `c`                                                     |
//! | `bounded-uniform(B)`| `min(tau + 1, U)`, `U ~ Uniform{0..=B}`                 |
//! | `bernoulli-refresh` | `0` with probability `q`, else `tau + 1`                |
//! | `pareto-refresh`    | `0` at renewal times, else `tau + 1`; gaps `P(G >= k) = k^-(1+alpha)` |
//! | `walk-with-reset`   | `0` w.p. `q`, else `tau +/- 1` equiprobable, floored at 0 |
//! | `scripted`          | replays a validated path, then grows by one per step    |
//!
//! Generation starts from `tau(0) = 0`, so the first realized value is the
//! first transition (`constant` and `scripted` excepted).
//!
//! For `pareto-refresh` the gaps have finite mean, and the AoI itself has tail
//! index `alpha`: `P(tau(n) > m) <= (m + 1)^-alpha / alpha` uniformly in `n`.

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum AoiKind {
    Zero,
    Constant(u64),
    BoundedUniform(u64),
    BernoulliRefresh(f64),
    ParetoRefresh(f64),
    WalkWithReset(f64),
    Scripted(Arc<[u64]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoiModel {
    pub kind: AoiKind,
    /// Added to the pair's stream id; lets two pairs with the same model draw
    /// independent paths without touching the master seed.
    pub seed_offset: u64,
}

impl AoiModel {
    pub fn new(kind: AoiKind) -> Result<Self> {
        match &kind {
            AoiKind::BernoulliRefresh(q) | AoiKind::WalkWithReset(q) => {
                if !(0.0..=1.0).contains(q) {
                    return Err(param(format!("refresh probability {q} outside [0, 1]")));
                }
            }
            AoiKind::ParetoRefresh(alpha) => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(param(format!("pareto tail index {alpha} must be positive")));
                }
            }
            AoiKind::Scripted(path) => validate_path(path)?,
            AoiKind::Zero | AoiKind::Constant(_) | AoiKind::BoundedUniform(_) => {}
        }
        Ok(Self { kind, seed_offset: 0 })
    }

    pub fn zero() -> Self {
        Self { kind: AoiKind::Zero, seed_offset: 0 }
    }

    pub fn constant(c: u64) -> Self {
        Self { kind: AoiKind::Constant(c), seed_offset: 0 }
    }

    pub fn bernoulli(q: f64) -> Result<Self> {
        Self::new(AoiKind::BernoulliRefresh(q))
    }

    pub fn pareto(alpha: f64) -> Result<Self> {
        Self::new(AoiKind::ParetoRefresh(alpha))
    }

    pub fn scripted(path: Vec<u64>) -> Result<Self> {
        Self::new(AoiKind::Scripted(path.into()))
    }

    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        self.seed_offset = offset;
        self
    }

    /// Parses the config notation `name` or `name:param`, e.g.
    /// `bernoulli-refresh:0.5`, `constant:3`, `zero`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let real = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| param(format!("{name} needs a {what} parameter")))?
                .parse::<f64>()
                .map_err(|e| param(format!("{name}: bad {what}: {e}")))
        };
        let int = |what: &str| -> Result<u64> {
            arg.ok_or_else(|| param(format!("{name} needs a {what} parameter")))?
                .parse::<u64>()
                .map_err(|e| param(format!("{name}: bad {what}: {e}")))
        };
        let kind = match name {
            "zero" => AoiKind::Zero,
            "constant" => AoiKind::Constant(int("delay")?),
            "bounded-uniform" => AoiKind::BoundedUniform(int("bound")?),
            "bernoulli-refresh" => AoiKind::BernoulliRefresh(real("probability")?),
            "pareto-refresh" => AoiKind::ParetoRefresh(real("tail index")?),
            "walk-with-reset" => AoiKind::WalkWithReset(real("probability")?),
            "scripted" => {
                let file = arg.ok_or_else(|| param("scripted needs a file path"))?;
                return Ok(Self::new(AoiKind::Scripted(AoiTrace::load(file)?.values.into()))?);
            }
            other => return Err(param(format!("unknown delay model `{other}`"))),
        };
        Self::new(kind)
    }

    /// Short identifier used in traces and reports.
    pub fn id(&self) -> String {
        match &self.kind {
            AoiKind::Zero => "zero".into(),
            AoiKind::Constant(c) => format!("constant:{c}"),
            AoiKind::BoundedUniform(b) => format!("bounded-uniform:{b}"),
            AoiKind::BernoulliRefresh(q) => format!("bernoulli-refresh:{q}"),
            AoiKind::ParetoRefresh(a) => format!("pareto-refresh:{a}"),
            AoiKind::WalkWithReset(q) => format!("walk-with-reset:{q}"),
            AoiKind::Scripted(p) => format!("scripted[{}]", p.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, AoiKind::Zero) || matches!(self.kind, AoiKind::Constant(0))
    }

    /// Tail of a variable that stochastically dominates every `tau(n)` of
    /// this model, when one is known in closed form.
    pub fn dominance(&self, p: f64) -> Result<DominanceSpec> {
        if !(p > 0.0) {
            return Err(param(format!("moment order p={p} must be positive")));
        }
        let tail = match &self.kind {
            AoiKind::Zero => Some(DominatingTail::Zero),
            AoiKind::Constant(c) => Some(DominatingTail::Point(*c)),
            AoiKind::BoundedUniform(b) => Some(DominatingTail::Uniform(*b)),
            AoiKind::BernoulliRefresh(q) | AoiKind::WalkWithReset(q) if *q > 0.0 => {
                Some(DominatingTail::Geometric(*q))
            }
            AoiKind::ParetoRefresh(a) => Some(DominatingTail::Pareto(*a)),
            _ => None,
        };
        Ok(DominanceSpec { p, tail })
    }
}

impl fmt::Display for AoiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Closed-form tails `P(tau_bar > m)` of dominating variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DominatingTail {
    Zero,
    Point(u64),
    Uniform(u64),
    /// Steps since the last refresh when refreshes happen w.p. `q`.
    Geometric(f64),
    /// `P(tau_bar > m) = min(1, (m + 1)^-alpha / alpha)`.
    Pareto(f64),
}

impl DominatingTail {
    pub fn exceedance(&self, m: u64) -> f64 {
        match *self {
            DominatingTail::Zero => 0.0,
            DominatingTail::Point(c) => f64::from(u8::from(m < c)),
            DominatingTail::Uniform(b) => {
                if m >= b {
                    0.0
                } else {
                    (b - m) as f64 / (b + 1) as f64
                }
            }
            DominatingTail::Geometric(q) => (1.0 - q).powf(m as f64 + 1.0),
            DominatingTail::Pareto(a) => ((m as f64 + 1.0).powf(-a) / a).min(1.0),
        }
    }

    /// Whether `E[tau_bar^p]` is finite.
    pub fn has_moment(&self, p: f64) -> bool {
        match *self {
            DominatingTail::Pareto(a) => p < a,
            DominatingTail::Geometric(q) => q > 0.0,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceSpec {
    pub p: f64,
    pub tail: Option<DominatingTail>,
}

impl DominanceSpec {
    /// `None` when the model admits no closed-form dominating tail.
    pub fn moment_finite(&self) -> Option<bool> {
        self.tail.map(|t| t.has_moment(self.p))
    }
}

/// Stateful generator of one delay path.
#[derive(Debug, Clone)]
pub struct AoiGenerator {
    model: AoiModel,
    rng: ChaCha8Rng,
    prev: u64,
    n: usize,
    next_refresh: u64,
}

impl AoiGenerator {
    pub fn new(model: AoiModel, master_seed: u64, stream: u64) -> Self {
        let rng = stream_rng(master_seed, stream.wrapping_add(model.seed_offset));
        Self { model, rng, prev: 0, n: 0, next_refresh: 0 }
    }

    /// Index of the value the next call to [`next_aoi`](Self::next_aoi) returns.
    pub fn next_index(&self) -> usize {
        self.n + 1
    }

    pub fn model(&self) -> &AoiModel {
        &self.model
    }

    /// Produces `tau(n)` for the next `n`, starting at `n = 1`.
    pub fn next_aoi(&mut self) -> u64 {
        self.n += 1;
        let grown = self.prev + 1;
        let value = match &self.model.kind {
            AoiKind::Zero => 0,
            AoiKind::Constant(c) => *c,
            AoiKind::BoundedUniform(b) => grown.min(self.rng.random_range(0..=*b)),
            AoiKind::BernoulliRefresh(q) => {
                if self.rng.random::<f64>() < *q {
                    0
                } else {
                    grown
                }
            }
            AoiKind::ParetoRefresh(alpha) => {
                let n = self.n as u64;
                if self.next_refresh == 0 {
                    self.next_refresh = pareto_gap(&mut self.rng, *alpha);
                }
                if n == self.next_refresh {
                    self.next_refresh = n.saturating_add(pareto_gap(&mut self.rng, *alpha));
                    0
                } else {
                    grown
                }
            }
            AoiKind::WalkWithReset(q) => {
                if self.rng.random::<f64>() < *q {
                    0
                } else if self.rng.random::<bool>() {
                    grown
                } else {
                    self.prev.saturating_sub(1)
                }
            }
            AoiKind::Scripted(path) => path.get(self.n - 1).copied().unwrap_or(grown),
        };
        self.prev = value;
        value
    }

    pub fn take_trace(&mut self, len: usize, seed: u64) -> AoiTrace {
        let values = (0..len).map(|_| self.next_aoi()).collect();
        AoiTrace { values, model_id: self.model.id(), seed }
    }
}

/// Gap law with `P(G >= k) = k^-(1+alpha)` for `k >= 1`, by inversion.
fn pareto_gap(rng: &mut ChaCha8Rng, alpha: f64) -> u64 {
    // 1 - U lies in (0, 1], so the power is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    let y = u.powf(-1.0 / (1.0 + alpha)).floor();
    if y >= u64::MAX as f64 {
        u64::MAX / 2
    } else {
        y as u64
    }
}

/// Generates `len` values of a model's path on the given stream.
pub fn generate(model: &AoiModel, master_seed: u64, stream: u64, len: usize) -> AoiTrace {
    AoiGenerator::new(model.clone(), master_seed, stream).take_trace(len, master_seed)
}

/// A realized delay path; `values[k]` is `tau(k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiTrace {
    pub values: Vec<u64>,
    pub model_id: String,
    pub seed: u64,
}

impl AoiTrace {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(param("AoI trace must be nonempty"));
        }
        validate_path(&values)?;
        Ok(Self { values, model_id: "scripted".into(), seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `tau(n)` for `n >= 1`.
    pub fn at(&self, n: usize) -> u64 {
        self.values[n - 1]
    }

    /// Reads one non-negative integer per line; line 1 is `tau(1)`.
    /// Blank lines are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut values = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v = t.parse::<u64>().map_err(|e| Error::Parse {
                line: k + 1,
                message: format!("`{t}` is not a non-negative integer ({e})"),
            })?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut trace = Self::read(std::io::BufReader::new(file))?;
        trace.model_id = format!("scripted:{}", path.display());
        Ok(trace)
    }

    pub fn check(&self) -> PathCheck {
        PathCheck::of(&self.values)
    }

    pub fn max(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

/// Rejects paths that break unit growth.
pub fn validate_path(values: &[u64]) -> Result<()> {
    for (k, w) in values.windows(2).enumerate() {
        if w[1] > w[0] + 1 {
            return Err(Error::UnitGrowth { index: k + 1, prev: w[0], next: w[1] });
        }
    }
    Ok(())
}

/// Violation counts for the two AoIP path properties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathCheck {
    pub unit_growth_violations: usize,
    pub freshness_violations: usize,
}

impl PathCheck {
    pub fn of(values: &[u64]) -> Self {
        let mut out = Self::default();
        for (k, w) in values.windows(2).enumerate() {
            if w[1] > w[0] + 1 {
                out.unit_growth_violations += 1;
            }
            // n - tau(n) as signed, n = k + 1
            let fresh_now = (k as i128 + 1) - i128::from(w[0]);
            let fresh_next = (k as i128 + 2) - i128::from(w[1]);
            if fresh_next < fresh_now {
                out.freshness_violations += 1;
            }
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.unit_growth_violations == 0 && self.freshness_violations == 0
    }
}

/// `(1/N) sum_n tau(n)^p`.
pub fn empirical_moment(trace: &AoiTrace, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(param(format!("moment order p={p} must be positive")));
    }
    if trace.is_empty() {
        return Err(param("empty trace"));
    }
    let sum: f64 = trace.values.iter().map(|&t| (t as f64).powf(p)).sum();
    Ok(sum / trace.len() as f64)
}

/// Largest `n` with `tau(n) > eps * n` (`p <= 1`) or `tau(n) > eps * n^(1/p)`
/// (`p > 1`); `None` if no index violates.
pub fn fraction_exceedance(trace: &AoiTrace, eps: f64, p: f64) -> Result<Option<usize>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(param(format!("epsilon {eps} outside (0, 1)")));
    }
    if !(p > 0.0) {
        return Err(param(format!("moment order p={p} must be positive")));
    }
    let exponent = if p <= 1.0 { 1.0 } else { 1.0 / p };
    let last = trace
        .values
        .iter()
        .enumerate()
        .rev()
        .find(|&(k, &t)| t as f64 > eps * ((k + 1) as f64).powf(exponent))
        .map(|(k, _)| k + 1);
    Ok(last)
}
