//! Subcommand bodies. Each returns the files to emit and a summary; the
//! caller writes them and maps the outcome to an exit code.

use anyhow::{Context, Result};

use aoisa_core::analysis::gronwall::{
    classical_equality_recursion, classical_gronwall_check, gronwall_bound_check, random_instances, ClassicalVerdict,
    GronwallVerdict, DEFAULT_SLACK,
};
use aoisa_core::analysis::verify::{traces_for_seeds, verify_lemma_window};
use aoisa_core::analysis::{build_rescaled, tracking_non_increasing, tracking_table};
use aoisa_core::aoi::{fraction_exceedance, AoiModel};
use aoisa_core::apps::{
    affine_equilibrium, run_momentum_experiment, run_sgd_experiment, MomentumExperiment, SeedRow, SgdExperiment,
};
use aoisa_core::engine::{run_replications, SimHistory, Variant};
use aoisa_core::schedule::TimeAxis;

use crate::config::{ConfigError, DriftSpec, ExperimentConfig};
use crate::output::{csv_bytes, Summary};

pub struct Outcome {
    pub summary: Summary,
    pub files: Vec<(String, Vec<u8>)>,
    pub diverged: bool,
}

impl Outcome {
    fn new(command: &str, hash: &str) -> Self {
        Self { summary: Summary::new(command, hash), files: Vec::new(), diverged: false }
    }
}

pub const SEED_HEADER: &[&str] = &["seed", "verdict", "final_error", "max_norm", "final_window_sum", "max_delta_tail"];

fn seed_record(r: &SeedRow) -> Vec<String> {
    vec![
        r.seed.to_string(),
        r.verdict.to_string(),
        r.final_error.to_string(),
        r.max_norm.to_string(),
        r.final_window_sum.to_string(),
        r.max_delta_tail.to_string(),
    ]
}

fn inconsistent(msg: impl Into<String>) -> anyhow::Error {
    ConfigError::Inconsistent(vec![msg.into()]).into()
}

fn default_model(cfg: &ExperimentConfig, command: &str) -> Result<AoiModel> {
    cfg.default_delay.clone().ok_or_else(|| inconsistent(format!("{command} needs delays.default to name a delay model")))
}

fn histories(cfg: &ExperimentConfig) -> Result<Vec<(u64, SimHistory)>> {
    run_replications(&cfg.sim_config(cfg.run.seed), &cfg.run.seeds())
        .into_iter()
        .map(|(s, h)| Ok((s, h.with_context(|| format!("seed {s}"))?)))
        .collect()
}

/// Appends per-segment tracking rows and checks for one run.
fn track_one(cfg: &ExperimentConfig, seed: u64, hist: &SimHistory, out: &mut Outcome) -> Result<()> {
    let an = &cfg.analysis;
    let axis = TimeAxis::new(cfg.schedule.clone(), an.segment_length)?;
    let rescaled = build_rescaled(hist, &axis);
    let field = cfg.drift.field();
    let table = tracking_table(hist, &rescaled, &axis, &field, None)?;
    let errors: Vec<f64> = table.iter().map(|s| s.error).collect();
    let trend = tracking_non_increasing(&errors, an.tracking_burn_in, an.tracking_slack);
    let last = errors.last().copied().unwrap_or(f64::NAN);
    out.summary.set(&format!("seed.{seed}.segments"), errors.len());
    out.summary.set(&format!("seed.{seed}.final_tracking_error"), last);
    out.summary.check(&format!("tracking_trend.seed{seed}"), trend);
    out.summary.check(&format!("tracking_final.seed{seed}"), last < an.tracking_final_tol);
    let rows = table.iter().map(|s| {
        vec![
            s.m.to_string(),
            s.t_start.to_string(),
            s.t_end.to_string(),
            s.n_start.to_string(),
            s.n_end.to_string(),
            s.scale.to_string(),
            s.error.to_string(),
        ]
    });
    let bytes = csv_bytes(&["segment", "t_start", "t_end", "n_start", "n_end", "scale", "error"], rows)?;
    out.files.push((format!("tracking_seed{seed}.csv"), bytes));
    Ok(())
}

fn record_verdicts(hists: &[(u64, SimHistory)], out: &mut Outcome) {
    for (seed, h) in hists {
        out.summary.set(&format!("seed.{seed}.verdict"), h.verdict);
        out.summary.set(&format!("seed.{seed}.max_norm"), h.max_norm());
        out.summary.set(&format!("seed.{seed}.final_norm"), h.last().norm());
        if !h.verdict.is_completed() {
            out.diverged = true;
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("run", &cfg.hash);
    let hists = histories(cfg)?;
    record_verdicts(&hists, &mut out);
    for (seed, h) in &hists {
        let mut buf = Vec::new();
        h.write_csv(&mut buf, cfg.run.window)?;
        out.files.push((format!("run_seed{seed}.csv"), buf));
        if cfg.analysis.verifiers.contains("aoip") {
            let d = h.agents;
            let clean = (0..d * d).all(|k| aoisa_core::aoi::PathCheck::of(&h.tau_path(k / d, k % d)).is_clean());
            out.summary.check(&format!("aoip.seed{seed}"), clean);
        }
        if cfg.analysis.verifiers.contains("tracking") && h.verdict.is_completed() {
            track_one(cfg, *seed, h, &mut out)?;
        }
    }
    Ok(out)
}

pub fn track(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("track", &cfg.hash);
    let hists = histories(cfg)?;
    record_verdicts(&hists, &mut out);
    for (seed, h) in &hists {
        if h.verdict.is_completed() {
            track_one(cfg, *seed, h, &mut out)?;
        }
    }
    Ok(out)
}

pub fn verify_aoi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("verify-aoi", &cfg.hash);
    let model = default_model(cfg, "verify-aoi")?;
    let an = &cfg.analysis;
    let traces = traces_for_seeds(&model, &cfg.run.seeds(), cfg.run.horizon);
    let mut rows = Vec::new();
    let (mut clean, mut passing) = (true, 0usize);
    for t in &traces {
        let pc = t.check();
        let last = fraction_exceedance(t, an.aoi_eps, an.aoi_p)?;
        let pass = last.is_none_or(|n| n < an.aoi_index_limit);
        clean &= pc.is_clean();
        passing += usize::from(pass);
        rows.push(vec![
            t.seed.to_string(),
            pc.unit_growth_violations.to_string(),
            pc.freshness_violations.to_string(),
            last.map_or_else(|| "none".to_string(), |n| n.to_string()),
            pass.to_string(),
        ]);
    }
    let need = an.aoi_min_passing.unwrap_or(traces.len());
    out.summary.set("model", model.id());
    out.summary.set("eps", an.aoi_eps);
    out.summary.set("p", an.aoi_p);
    out.summary.set("index_limit", an.aoi_index_limit);
    out.summary.set("passing_seeds", format!("{passing}/{}", traces.len()));
    out.summary.check("aoip_axioms", clean);
    out.summary.check("exceedance", passing >= need);
    out.files.push((
        "aoi_seeds.csv".into(),
        csv_bytes(&["seed", "unit_growth_violations", "freshness_violations", "last_exceedance", "pass"], rows)?,
    ));
    Ok(out)
}

pub fn verify_window(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("verify-window", &cfg.hash);
    let model = default_model(cfg, "verify-window")?;
    let an = &cfg.analysis;
    let axis = TimeAxis::new(cfg.schedule.clone(), an.segment_length)?;
    let traces = traces_for_seeds(&model, &cfg.run.seeds(), cfg.run.horizon);
    let report = verify_lemma_window(&traces, &axis, an.window_burn_in, an.window_tol, an.window_monotone);
    let mut decade_rows = Vec::new();
    let mut seed_rows = Vec::new();
    for r in &report.rows {
        for d in &r.decades {
            decade_rows.push(vec![r.seed.to_string(), d.lo.to_string(), d.hi.to_string(), d.max.to_string()]);
        }
        seed_rows.push(vec![
            r.seed.to_string(),
            r.final_max.to_string(),
            r.non_increasing.to_string(),
            r.pass.to_string(),
        ]);
    }
    let need = an.window_min_passing.unwrap_or(report.rows.len());
    out.summary.set("model", model.id());
    out.summary.set("schedule", cfg.schedule.describe());
    out.summary.set("passing_seeds", format!("{}/{}", report.passing(), report.rows.len()));
    out.summary.check("window_sums", report.passing() >= need);
    out.files.push(("window_decades.csv".into(), csv_bytes(&["seed", "lo", "hi", "max"], decade_rows)?));
    out.files.push(("window_seeds.csv".into(), csv_bytes(&["seed", "final_max", "non_increasing", "pass"], seed_rows)?));
    Ok(out)
}

pub fn verify_gronwall(count: usize, seed: u64, horizon: usize, hash: &str) -> Result<Outcome> {
    let mut out = Outcome::new("verify-gronwall", hash);
    let instances = random_instances(seed, count, horizon);
    let mut rows = Vec::new();
    let (mut found, mut new_ok, mut classical_ok) = (0usize, true, true);
    for (k, inst) in instances.iter().enumerate() {
        let rep = gronwall_bound_check(inst, DEFAULT_SLACK)?;
        match rep.verdict {
            GronwallVerdict::Holds => found += 1,
            GronwallVerdict::ThresholdNotFound => {}
            GronwallVerdict::HypothesisViolated { .. } | GronwallVerdict::BoundViolated { .. } => {
                found += usize::from(rep.threshold.is_some());
                new_ok = false;
            }
        }
        let x = classical_equality_recursion(&inst.a, inst.big_b, inst.big_c);
        let classical = classical_gronwall_check(&x, &inst.a, inst.big_b, inst.big_c, DEFAULT_SLACK)?;
        classical_ok &= classical == ClassicalVerdict::Holds;
        rows.push(vec![
            k.to_string(),
            rep.threshold.map_or_else(|| "none".to_string(), |n| n.to_string()),
            format!("{:?}", rep.verdict),
            rep.worst_ratio.to_string(),
            format!("{classical:?}"),
        ]);
    }
    out.summary.set("instances", count);
    out.summary.set("seed", seed);
    out.summary.set("horizon", horizon);
    out.summary.set("thresholds_found", found);
    out.summary.check("new_gronwall", new_ok);
    out.summary.check("classical_gronwall", classical_ok);
    out.files.push((
        "gronwall_instances.csv".into(),
        csv_bytes(&["instance", "threshold", "verdict", "worst_ratio", "classical"], rows)?,
    ));
    Ok(out)
}

pub fn sgd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("sgd", &cfg.hash);
    let DriftSpec::Quadratic(objective) = &cfg.drift else {
        return Err(inconsistent("sgd needs drift.kind = \"quadratic\""));
    };
    if cfg.run.variant != Variant::Plain {
        return Err(inconsistent("sgd runs the plain iteration; use `momentum` for heavy-ball"));
    }
    let spec = SgdExperiment {
        objective: objective.clone(),
        delays: cfg.delays.clone(),
        declared_p: cfg.declared_p,
        schedule: cfg.schedule.clone(),
        horizon: cfg.run.horizon,
        x1: cfg.run.x1.clone(),
        seeds: cfg.run.seeds(),
    };
    let report = run_sgd_experiment(&spec)?;
    let an = &cfg.analysis;
    let bound = an.norm_factor * (1.0 + cfg.run.x1.norm() + report.x_star.norm());
    out.diverged = report.diverged() > 0;
    out.summary.set("x_star", format!("{:?}", report.x_star.as_slice()));
    out.summary.set("drift_at_x_star", report.drift_at_star);
    out.summary.set("replications", report.rows.len());
    out.summary.set("diverged", report.diverged());
    out.summary.set("median_final_error", report.median_final_error());
    out.summary.set("max_final_error", report.max_final_error());
    out.summary.set("max_norm", report.max_norm());
    out.summary.set("norm_bound", bound);
    out.summary.check("median_final_error", report.median_final_error() < an.median_error_tol);
    out.summary.check("norm_bound", report.rows.iter().all(|r| r.max_norm <= bound));
    out.files.push(("sgd_seeds.csv".into(), csv_bytes(SEED_HEADER, report.rows.iter().map(seed_record))?));
    Ok(out)
}

pub fn momentum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::new("momentum", &cfg.hash);
    let Variant::HeavyBall { beta } = cfg.run.variant else {
        return Err(inconsistent("momentum needs run.variant = \"heavy-ball\""));
    };
    let reference = match &cfg.drift {
        DriftSpec::Quadratic(q) => Some(q.minimizer()?),
        DriftSpec::Field(f) => affine_equilibrium(f),
    };
    let an = &cfg.analysis;
    let spec = MomentumExperiment {
        dynamics: cfg.dynamics(),
        beta,
        schedule: cfg.schedule.clone(),
        horizon: cfg.run.horizon,
        x1: cfg.run.x1.clone(),
        delays: (!cfg.delays.all_zero()).then(|| cfg.delays.clone()),
        seeds: cfg.run.seeds(),
        reference,
        tail_from: an.tail_from,
        window: cfg.run.window,
    };
    let report = run_momentum_experiment(&spec)?;
    out.diverged = report.diverged() > 0;
    out.summary.set("beta", beta);
    out.summary.set("replications", report.rows.len());
    out.summary.set("diverged", report.diverged());
    out.summary.set("max_twin_gap", report.max_gap());
    out.summary.set("max_delta_tail", report.max_delta_tail());
    out.summary.check("twin_gap", report.max_gap() <= an.gap_tol);
    if let Some(tol) = an.tail_tol {
        out.summary.check("delta_tail", report.max_delta_tail() < tol);
    }
    let heavy = report.rows.iter().map(|r| seed_record(&r.heavy));
    let plain = report.rows.iter().map(|r| seed_record(&r.plain));
    let gaps = report.rows.iter().map(|r| vec![r.heavy.seed.to_string(), r.gap.to_string()]);
    out.files.push(("momentum_seeds.csv".into(), csv_bytes(SEED_HEADER, heavy)?));
    out.files.push(("momentum_plain_seeds.csv".into(), csv_bytes(SEED_HEADER, plain)?));
    out.files.push(("momentum_gaps.csv".into(), csv_bytes(&["seed", "gap"], gaps)?));
    Ok(out)
}
