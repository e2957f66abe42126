//! Preconfigured experiments: delayed distributed SGD on a stochastic
//! quadratic, and heavy-ball SA against its plain twin.
//!
//! Replications run concurrently; rows come back in seed order.

use rayon::prelude::*;

use crate::dynamics::{DriftField, QuadraticObjective, Vector};
use crate::engine::{
    run, tail_profile, DelayMatrix, Dynamics, MomentumWindow, SimConfig, SimHistory, Variant, Verdict,
};
use crate::error::{param, Result};
use crate::schedule::StepSchedule;

/// Per-seed outcome, matching the CSV columns
/// `seed, verdict, final_error, max_norm, final_window_sum, max_delta_tail`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub seed: u64,
    pub verdict: Verdict,
    pub final_error: f64,
    pub max_norm: f64,
    pub final_window_sum: f64,
    /// `max |delta_n|` over the tail; zero for plain runs.
    pub max_delta_tail: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    }
}

/// Largest `sum_{k=n-tau_ij(n)}^{n-1} a(k)` over pairs at the last step taken.
pub fn final_window_sum(hist: &SimHistory, schedule: &StepSchedule) -> f64 {
    let n = hist.steps_taken();
    if n == 0 {
        return 0.0;
    }
    hist.tau[n - 1]
        .iter()
        .map(|&tau| {
            let lo = crate::schedule::clamp_lower(n, tau);
            (lo..n).map(|k| schedule.stepsize(k)).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct SgdExperiment {
    pub objective: QuadraticObjective,
    pub delays: DelayMatrix,
    /// Moment order the delay models are declared to satisfy.
    pub declared_p: f64,
    pub schedule: StepSchedule,
    pub horizon: usize,
    pub x1: Vector,
    pub seeds: Vec<u64>,
}

impl SgdExperiment {
    pub fn validate(&self) -> Result<()> {
        let s_min = self.objective.min_eigenvalue();
        if !(s_min > 0.0) {
            return Err(param(format!(
                "E[A] + E[A]^T is not positive definite (smallest eigenvalue {s_min})"
            )));
        }
        if self.schedule.p_assumed() != self.declared_p {
            return Err(param(format!(
                "schedule targets p={} but delays declare p={}",
                self.schedule.p_assumed(),
                self.declared_p
            )));
        }
        if self.seeds.is_empty() {
            return Err(param("at least one replication is required"));
        }
        Ok(())
    }

    pub fn config(&self, seed: u64) -> SimConfig {
        SimConfig::new(Dynamics::sgd(self.objective.clone()), self.schedule.clone(), self.x1.clone(), self.horizon)
            .with_delays(self.delays.clone())
            .with_seed(seed)
    }
}

#[derive(Debug, Clone)]
pub struct SgdReport {
    pub x_star: Vector,
    /// `|h(x*)|`, checked before any run.
    pub drift_at_star: f64,
    pub rows: Vec<SeedRow>,
}

impl SgdReport {
    pub fn median_final_error(&self) -> f64 {
        median(&self.rows.iter().map(|r| r.final_error).collect::<Vec<_>>())
    }

    pub fn max_final_error(&self) -> f64 {
        self.rows.iter().map(|r| r.final_error).fold(0.0, f64::max)
    }

    pub fn diverged(&self) -> usize {
        self.rows.iter().filter(|r| !r.verdict.is_completed()).count()
    }

    pub fn max_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.max_norm).fold(0.0, f64::max)
    }
}

pub fn run_sgd_experiment(spec: &SgdExperiment) -> Result<SgdReport> {
    spec.validate()?;
    let x_star = spec.objective.minimizer()?;
    let drift_at_star = spec.objective.mean_drift().eval(&x_star)?.norm();
    if drift_at_star > 1e-10 {
        return Err(param(format!("analytic minimiser leaves drift {drift_at_star}")));
    }
    let rows = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let hist = run(&spec.config(seed))?;
            Ok(SeedRow {
                seed,
                verdict: hist.verdict,
                final_error: (hist.last() - &x_star).norm(),
                max_norm: hist.max_norm(),
                final_window_sum: final_window_sum(&hist, &spec.schedule),
                max_delta_tail: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SgdReport { x_star, drift_at_star, rows })
}

#[derive(Debug, Clone)]
pub struct MomentumExperiment {
    pub dynamics: Dynamics,
    pub beta: f64,
    pub schedule: StepSchedule,
    pub horizon: usize,
    pub x1: Vector,
    pub delays: Option<DelayMatrix>,
    pub seeds: Vec<u64>,
    /// Known equilibrium for final-error reporting, if any.
    pub reference: Option<Vector>,
    /// First step of the `delta_n` tail window.
    pub tail_from: usize,
    pub window: MomentumWindow,
}

impl MomentumExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(param(format!("momentum beta={} outside [0, 1)", self.beta)));
        }
        if self.seeds.is_empty() {
            return Err(param("at least one replication is required"));
        }
        Ok(())
    }

    fn base(&self, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.dynamics.clone(), self.schedule.clone(), self.x1.clone(), self.horizon)
            .with_seed(seed);
        if let Some(d) = &self.delays {
            cfg = cfg.with_delays(d.clone());
        }
        cfg
    }

    pub fn heavy_config(&self, seed: u64) -> SimConfig {
        self.base(seed).with_variant(Variant::HeavyBall { beta: self.beta })
    }

    pub fn plain_config(&self, seed: u64) -> SimConfig {
        self.base(seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinRow {
    pub heavy: SeedRow,
    pub plain: SeedRow,
    /// `|x^heavy_N - x^plain_N|`.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct MomentumReport {
    pub rows: Vec<TwinRow>,
}

impl MomentumReport {
    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn diverged(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| !r.heavy.verdict.is_completed() || !r.plain.verdict.is_completed())
            .count()
    }

    pub fn max_delta_tail(&self) -> f64 {
        self.rows.iter().map(|r| r.heavy.max_delta_tail).fold(0.0, f64::max)
    }
}

fn seed_row(seed: u64, hist: &SimHistory, reference: Option<&Vector>, schedule: &StepSchedule, delta_tail: f64) -> SeedRow {
    SeedRow {
        seed,
        verdict: hist.verdict,
        final_error: reference.map_or(f64::NAN, |r| (hist.last() - r).norm()),
        max_norm: hist.max_norm(),
        final_window_sum: final_window_sum(hist, schedule),
        max_delta_tail: delta_tail,
    }
}

pub fn run_momentum_experiment(spec: &MomentumExperiment) -> Result<MomentumReport> {
    spec.validate()?;
    let rows = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let heavy = run(&spec.heavy_config(seed))?;
            let plain = run(&spec.plain_config(seed))?;
            let tail = tail_profile(&heavy, spec.window)
                .iter()
                .skip(spec.tail_from.saturating_sub(1))
                .map(|(d, _)| *d)
                .fold(0.0, f64::max);
            Ok(TwinRow {
                gap: (heavy.last() - plain.last()).norm(),
                heavy: seed_row(seed, &heavy, spec.reference.as_ref(), &spec.schedule, tail),
                plain: seed_row(seed, &plain, spec.reference.as_ref(), &spec.schedule, 0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentumReport { rows })
}

/// The equilibrium of a drift when it is affine with invertible matrix.
pub fn affine_equilibrium(field: &DriftField) -> Option<Vector> {
    match field.kind() {
        crate::dynamics::DriftKind::Linear(_) => Some(Vector::zeros(field.dim())),
        crate::dynamics::DriftKind::Affine(m, c) => m.clone().lu().solve(&-c),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aoi::AoiModel;
    use crate::dynamics::{Blocks, NoiseModel};
    use nalgebra::DMatrix;

    #[test]
    fn deterministic_contraction_to_origin() {
        let objective = QuadraticObjective::new(DMatrix::identity(1, 1), 0.0, Vector::zeros(1), 0.0, Blocks::single(1)).unwrap();
        let spec = SgdExperiment {
            objective,
            delays: DelayMatrix::zero(1),
            declared_p: 1.0,
            schedule: StepSchedule::harmonic(1.0, 1.0).unwrap(),
            horizon: 10_000,
            x1: Vector::from_element(1, 3.0),
            seeds: vec![1],
        };
        let r = run_sgd_experiment(&spec).unwrap();
        assert!(r.rows[0].final_error < 1e-6);
        assert!(r.drift_at_star <= 1e-10);
    }

    #[test]
    fn rejects_indefinite_objective_and_mismatched_p() {
        let objective = QuadraticObjective::new(-DMatrix::identity(1, 1), 0.0, Vector::zeros(1), 0.0, Blocks::single(1)).unwrap();
        let mut spec = SgdExperiment {
            objective,
            delays: DelayMatrix::zero(1),
            declared_p: 1.0,
            schedule: StepSchedule::harmonic(1.0, 1.0).unwrap(),
            horizon: 10,
            x1: Vector::zeros(1),
            seeds: vec![1],
        };
        assert!(run_sgd_experiment(&spec).is_err());
        spec.objective = QuadraticObjective::new(DMatrix::identity(1, 1), 0.0, Vector::zeros(1), 0.0, Blocks::single(1)).unwrap();
        spec.declared_p = 0.7;
        assert!(run_sgd_experiment(&spec).is_err());
    }

    #[test]
    fn zero_beta_twins_have_zero_gap() {
        let spec = MomentumExperiment {
            dynamics: Dynamics::additive(DriftField::negative_identity(2), NoiseModel::uniform(0.5).unwrap()),
            beta: 0.0,
            schedule: StepSchedule::harmonic(1.0, 1.0).unwrap(),
            horizon: 2_000,
            x1: Vector::from_column_slice(&[1.0, 2.0]),
            delays: None,
            seeds: vec![1, 2, 3],
            reference: Some(Vector::zeros(2)),
            tail_from: 1,
            window: MomentumWindow::LogRatio,
        };
        let r = run_momentum_experiment(&spec).unwrap();
        assert!(r.rows.iter().all(|row| row.gap == 0.0));
        assert_eq!(r.rows.iter().map(|r| r.heavy.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn one_dimensional_two_point_objective() {
        let objective = QuadraticObjective::new(
            DMatrix::identity(1, 1),
            0.5,
            Vector::from_element(1, 2.0),
            1.0,
            Blocks::single(1),
        )
        .unwrap();
        let spec = SgdExperiment {
            objective,
            delays: DelayMatrix::uniform(1, AoiModel::bernoulli(0.2).unwrap(), true),
            declared_p: 1.0,
            schedule: StepSchedule::harmonic(1.0, 1.0).unwrap(),
            horizon: 100_000,
            x1: Vector::zeros(1),
            seeds: (0..20).collect(),
        };
        let r = run_sgd_experiment(&spec).unwrap();
        assert!((r.x_star[0] + 1.0).abs() < 1e-15);
        assert_eq!(r.diverged(), 0);
        assert!(r.median_final_error() < 1e-2, "median {}", r.median_final_error());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
