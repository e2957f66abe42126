//! Empirical checks of the AoI growth and stepsize-window statements across
//! seeds.

use rayon::prelude::*;

use crate::aoi::{fraction_exceedance, AoiGenerator, AoiModel, AoiTrace};
use crate::error::Result;
use crate::rng::aoi_stream;
use crate::schedule::TimeAxis;

/// Per-seed outcome of the "AoI eventually stays below a fraction" scan.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiLemmaRow {
    pub seed: u64,
    pub last_exceedance: Option<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoiLemmaReport {
    pub eps: f64,
    pub p: f64,
    /// A seed passes when its last exceedance index lies strictly below this.
    pub index_limit: usize,
    pub rows: Vec<AoiLemmaRow>,
}

impl AoiLemmaReport {
    pub fn passing(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }
}

pub fn verify_lemma_aoi(traces: &[AoiTrace], eps: f64, p: f64, index_limit: usize) -> Result<AoiLemmaReport> {
    let rows = traces
        .iter()
        .map(|t| {
            let last = fraction_exceedance(t, eps, p)?;
            Ok(AoiLemmaRow { seed: t.seed, last_exceedance: last, pass: last.is_none_or(|n| n < index_limit) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AoiLemmaReport { eps, p, index_limit, rows })
}

/// One trace per seed, generated concurrently and returned in seed order.
pub fn traces_for_seeds(model: &AoiModel, seeds: &[u64], len: usize) -> Vec<AoiTrace> {
    seeds
        .par_iter()
        .map(|&s| AoiGenerator::new(model.clone(), s, aoi_stream(0, 1)).take_trace(len, s))
        .collect()
}

/// Maximum of a per-index series over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecadeMax {
    pub lo: usize,
    pub hi: usize,
    pub max: f64,
}

/// Splits `burn_in..=len` at powers of ten and takes the maximum of
/// `series[n - 1]` on each piece. The last piece is closed at `len`.
pub fn decade_maxima(series: &[f64], burn_in: usize) -> Vec<DecadeMax> {
    let len = series.len();
    let mut out = Vec::new();
    let mut lo = burn_in.max(1);
    while lo <= len {
        let mut next = 10usize;
        while next <= lo {
            next *= 10;
        }
        let mut hi = (next - 1).min(len);
        if hi + 1 == len {
            // fold a lone final index into the last decade
            hi = len;
        }
        let max = series[lo - 1..hi].iter().copied().fold(0.0, f64::max);
        out.push(DecadeMax { lo, hi, max });
        lo = hi + 1;
    }
    out
}

/// `sum_{k=n-tau(n)}^{n-1} a(k)` along a delay path.
pub fn window_series(trace: &AoiTrace, axis: &TimeAxis) -> Vec<f64> {
    trace.values.iter().enumerate().map(|(k, &tau)| axis.window_sum(k + 1, tau)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub seed: u64,
    pub decades: Vec<DecadeMax>,
    pub final_max: f64,
    pub non_increasing: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub burn_in: usize,
    pub tolerance: f64,
    pub require_monotone: bool,
    pub rows: Vec<WindowRow>,
}

impl WindowReport {
    pub fn passing(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }
}

/// Decade maxima of window sums per trace. A seed passes when the final
/// decade max is below `tolerance` and, if `require_monotone`, the decade
/// maxima never increase.
pub fn verify_lemma_window(
    traces: &[AoiTrace],
    axis: &TimeAxis,
    burn_in: usize,
    tolerance: f64,
    require_monotone: bool,
) -> WindowReport {
    let rows = traces
        .iter()
        .map(|t| {
            let series = window_series(t, axis);
            let decades = decade_maxima(&series, burn_in);
            let final_max = decades.last().map_or(0.0, |d| d.max);
            let non_increasing = decades.windows(2).all(|w| w[1].max <= w[0].max);
            let pass = final_max < tolerance && (non_increasing || !require_monotone);
            WindowRow { seed: t.seed, decades, final_max, non_increasing, pass }
        })
        .collect();
    WindowReport { burn_in, tolerance, require_monotone, rows }
}

/// Elementwise maximum of window series over replications. This is an
/// across-seed empirical envelope, not a bound that holds uniformly over the
/// probability space.
pub fn window_envelope(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len).map(|k| series.iter().map(|s| s[k]).fold(0.0, f64::max)).collect()
}
