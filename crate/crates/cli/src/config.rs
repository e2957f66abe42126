//! Experiment configuration: a TOML document with the sections `drift`,
//! `noise`, `delays`, `schedule`, `run`, `analysis` and `output`.
//!
//! Parsing collects every schema problem before giving up, then runs the
//! cross-field checks and collects those too.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use aoisa_core::aoi::AoiModel;
use aoisa_core::dynamics::{Blocks, DriftField, NoiseKind, NoiseModel, QuadraticObjective, Vector};
use aoisa_core::engine::{DelayMatrix, Dynamics, MomentumWindow, SimConfig, Variant, DEFAULT_DIVERGENCE_THRESHOLD};
use aoisa_core::schedule::{choose_q, StepSchedule};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub const DEFAULT_HORIZON: usize = 100_000;
pub const DEFAULT_REPLICATIONS: usize = 20;

#[derive(Debug)]
pub enum ConfigError {
    Missing(PathBuf),
    Schema(Vec<String>),
    Inconsistent(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, head: &str, errs: &[String]| {
            writeln!(f, "{head} ({} problem(s)):", errs.len())?;
            for e in errs {
                writeln!(f, "  - {e}")?;
            }
            Ok(())
        };
        match self {
            ConfigError::Missing(p) => write!(f, "config file not found: {}", p.display()),
            ConfigError::Schema(e) => list(f, "config schema violation", e),
            ConfigError::Inconsistent(e) => list(f, "inconsistent config", e),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Summary,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "summary" => Some(Format::Summary),
            "both" => Some(Format::Both),
            _ => None,
        }
    }

    pub fn csv(self) -> bool {
        self != Format::Summary
    }

    pub fn summary(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Debug, Clone)]
pub enum DriftSpec {
    Field(DriftField),
    Quadratic(QuadraticObjective),
}

impl DriftSpec {
    pub fn field(&self) -> DriftField {
        match self {
            DriftSpec::Field(f) => f.clone(),
            DriftSpec::Quadratic(q) => q.mean_drift(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub variant: Variant,
    pub window: MomentumWindow,
    pub horizon: usize,
    pub seed: u64,
    pub replications: usize,
    pub x1: Vector,
    pub divergence_threshold: f64,
    pub history_cap: Option<usize>,
}

impl RunSpec {
    /// `seed, seed + 1, ...`, one per replication.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub verifiers: BTreeSet<String>,
    pub segment_length: f64,
    pub tracking_burn_in: usize,
    pub tracking_slack: f64,
    pub tracking_final_tol: f64,
    pub aoi_eps: f64,
    pub aoi_p: f64,
    pub aoi_index_limit: usize,
    pub aoi_min_passing: Option<usize>,
    pub window_burn_in: usize,
    pub window_tol: f64,
    pub window_monotone: bool,
    pub window_min_passing: Option<usize>,
    pub median_error_tol: f64,
    pub norm_factor: f64,
    pub gap_tol: f64,
    pub tail_from: usize,
    pub tail_tol: Option<f64>,
}

pub const VERIFIERS: &[&str] = &["aoip", "tracking"];

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub drift: DriftSpec,
    pub noise: NoiseModel,
    pub delays: DelayMatrix,
    /// The model named by `delays.default`, used by the single-path verifiers.
    pub default_delay: Option<AoiModel>,
    pub declared_p: f64,
    pub schedule: StepSchedule,
    pub run: RunSpec,
    pub analysis: AnalysisSpec,
    pub output: OutputSpec,
    /// Hex SHA-256 of the config text and the command-line overrides.
    pub hash: String,
}

impl ExperimentConfig {
    pub fn dynamics(&self) -> Dynamics {
        match &self.drift {
            DriftSpec::Field(f) => Dynamics::additive(f.clone(), self.noise.clone()),
            DriftSpec::Quadratic(q) => Dynamics::sgd(q.clone()),
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.dynamics(), self.schedule.clone(), self.run.x1.clone(), self.run.horizon)
            .with_delays(self.delays.clone())
            .with_seed(seed)
            .with_variant(self.run.variant);
        cfg.divergence_threshold = self.run.divergence_threshold;
        cfg.history_cap = self.run.history_cap;
        cfg
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub replications: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Overrides {
    fn fingerprint(&self) -> String {
        // output location and format do not change results
        format!("seed={:?};horizon={:?};replications={:?}", self.seed, self.horizon, self.replications)
    }
}

pub fn config_hash(text: &str, overrides: &Overrides) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(b"\n#overrides\n");
    h.update(overrides.fingerprint().as_bytes());
    hex::encode(h.finalize())
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ConfigError::Missing(path.to_path_buf())),
        Err(e) => return Err(ConfigError::Schema(vec![format!("cannot read {}: {e}", path.display())])),
    };
    parse_str(&text, path.parent().unwrap_or(Path::new(".")), overrides)
}

/// Parses a document; relative `scripted:` paths resolve against `base`.
pub fn parse_str(text: &str, base: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Schema(vec![e.to_string()]))?;
    let mut r = Reader::default();
    r.allow_keys("", &root, &["drift", "noise", "delays", "schedule", "run", "analysis", "output"]);

    let drift = r.section(&root, "drift", true, &[
        "kind", "dim", "blocks", "matrix", "offset", "kappa", "mean_a", "a_spread", "mean_b", "b_spread", "grid", "values",
    ]);
    let noise = r.section(&root, "noise", false, &["kind", "scale"]);
    let delays = r.section(&root, "delays", false, &["p", "default", "delay_self", "matrix"]);
    let schedule = r.section(&root, "schedule", false, &["regime", "scale", "q"]);
    let run = r.section(&root, "run", false, &[
        "variant", "beta", "window", "horizon", "seed", "replications", "x1", "divergence_threshold", "history_cap",
    ]);
    let analysis = r.section(&root, "analysis", false, &[
        "verifiers", "segment_length", "tracking_burn_in", "tracking_slack", "tracking_final_tol", "aoi_eps", "aoi_p",
        "aoi_index_limit", "aoi_min_passing", "window_burn_in", "window_tol", "window_monotone", "window_min_passing",
        "median_error_tol", "norm_factor", "gap_tol", "tail_from", "tail_tol",
    ]);
    let output = r.section(&root, "output", false, &["dir", "format"]);

    // --- drift ---
    let kind = r.string(&drift, "drift", "kind").unwrap_or_default();
    let dim = r.count(&drift, "drift", "dim");
    let block_sizes = r.counts(&drift, "drift", "blocks");
    let matrix = r.matrix(&drift, "drift", "matrix");
    let offset = r.vector(&drift, "drift", "offset");
    let kappa = r.real(&drift, "drift", "kappa");
    let mean_a = r.matrix(&drift, "drift", "mean_a");
    let a_spread = r.real(&drift, "drift", "a_spread").unwrap_or(0.0);
    let mean_b = r.vector(&drift, "drift", "mean_b");
    let b_spread = r.real(&drift, "drift", "b_spread").unwrap_or(0.0);
    let grid = r.vector(&drift, "drift", "grid");
    let values = r.vector(&drift, "drift", "values");
    let kinds = ["linear", "negative-identity", "affine", "quadratic", "table"];
    if drift.is_some() && !kinds.contains(&kind.as_str()) {
        r.schema(format!("drift.kind must be one of {kinds:?}, got `{kind}`"));
    }

    // --- noise ---
    let noise_kind = r.string(&noise, "noise", "kind").unwrap_or_else(|| "zero".into());
    let noise_scale = r.real(&noise, "noise", "scale").unwrap_or(0.0);
    let noise_kind = match noise_kind.as_str() {
        "zero" => Some(NoiseKind::Zero),
        "gaussian" => Some(NoiseKind::GaussianScaled),
        "uniform" => Some(NoiseKind::BoundedUniform),
        other => {
            r.schema(format!("noise.kind must be zero, gaussian or uniform, got `{other}`"));
            None
        }
    };

    // --- delays ---
    let declared_p = r.real(&delays, "delays", "p").unwrap_or(1.0);
    let default_spec = r.string(&delays, "delays", "default");
    let delay_self = r.boolean(&delays, "delays", "delay_self").unwrap_or(false);
    let delay_table = r.string_matrix(&delays, "delays", "matrix");

    // --- schedule ---
    let regime = r.string(&schedule, "schedule", "regime").unwrap_or_else(|| "harmonic".into());
    let step_scale = r.real(&schedule, "schedule", "scale").unwrap_or(1.0);
    let q = r.real(&schedule, "schedule", "q");
    if !["harmonic", "power"].contains(&regime.as_str()) {
        r.schema(format!("schedule.regime must be harmonic or power, got `{regime}`"));
    }

    // --- run ---
    let variant = r.string(&run, "run", "variant").unwrap_or_else(|| "plain".into());
    let beta = r.real(&run, "run", "beta");
    let window = r.string(&run, "run", "window").unwrap_or_else(|| "log-ratio".into());
    let horizon = r.count(&run, "run", "horizon").unwrap_or(DEFAULT_HORIZON);
    let seed = r.int(&run, "run", "seed").unwrap_or(0);
    let replications = r.count(&run, "run", "replications").unwrap_or(DEFAULT_REPLICATIONS);
    let x1 = r.vector(&run, "run", "x1");
    let divergence_threshold = r.real(&run, "run", "divergence_threshold").unwrap_or(DEFAULT_DIVERGENCE_THRESHOLD);
    let history_cap = r.count(&run, "run", "history_cap");
    if !["plain", "heavy-ball"].contains(&variant.as_str()) {
        r.schema(format!("run.variant must be plain or heavy-ball, got `{variant}`"));
    }
    let window = match window.as_str() {
        "log-ratio" => MomentumWindow::LogRatio,
        "stepsize-ratio" => MomentumWindow::StepsizeRatio,
        other => {
            r.schema(format!("run.window must be log-ratio or stepsize-ratio, got `{other}`"));
            MomentumWindow::LogRatio
        }
    };

    // --- analysis ---
    let a = &analysis;
    let verifiers: BTreeSet<String> = r.strings(a, "analysis", "verifiers").unwrap_or_default().into_iter().collect();
    for v in &verifiers {
        if !VERIFIERS.contains(&v.as_str()) {
            r.schema(format!("analysis.verifiers: unknown verifier `{v}` (known: {VERIFIERS:?})"));
        }
    }
    let analysis_spec = AnalysisSpec {
        verifiers,
        segment_length: r.real(a, "analysis", "segment_length").unwrap_or(1.0),
        tracking_burn_in: r.count(a, "analysis", "tracking_burn_in").unwrap_or(5),
        tracking_slack: r.real(a, "analysis", "tracking_slack").unwrap_or(0.2),
        tracking_final_tol: r.real(a, "analysis", "tracking_final_tol").unwrap_or(0.1),
        aoi_eps: r.real(a, "analysis", "aoi_eps").unwrap_or(0.05),
        aoi_p: r.real(a, "analysis", "aoi_p").unwrap_or(declared_p),
        aoi_index_limit: r.count(a, "analysis", "aoi_index_limit").unwrap_or(10_000),
        aoi_min_passing: r.count(a, "analysis", "aoi_min_passing"),
        window_burn_in: r.count(a, "analysis", "window_burn_in").unwrap_or(1_000),
        window_tol: r.real(a, "analysis", "window_tol").unwrap_or(0.05),
        window_monotone: r.boolean(a, "analysis", "window_monotone").unwrap_or(true),
        window_min_passing: r.count(a, "analysis", "window_min_passing"),
        median_error_tol: r.real(a, "analysis", "median_error_tol").unwrap_or(1e-2),
        norm_factor: r.real(a, "analysis", "norm_factor").unwrap_or(100.0),
        gap_tol: r.real(a, "analysis", "gap_tol").unwrap_or(1e-2),
        tail_from: r.count(a, "analysis", "tail_from").unwrap_or(1_000),
        tail_tol: r.real(a, "analysis", "tail_tol"),
    };

    // --- output ---
    let out_dir = r.string(&output, "output", "dir").unwrap_or_else(|| "out".into());
    let format = r.string(&output, "output", "format").unwrap_or_else(|| "both".into());
    let format = Format::parse(&format).unwrap_or_else(|| {
        r.schema(format!("output.format must be csv, summary or both, got `{format}`"));
        Format::Both
    });

    if !r.schema.is_empty() {
        return Err(ConfigError::Schema(r.schema));
    }

    // ---------------- cross-field checks ----------------
    let mut x = Vec::new();
    let horizon = overrides.horizon.unwrap_or(horizon);
    let replications = overrides.replications.unwrap_or(replications);
    let seed = overrides.seed.unwrap_or(seed);
    if horizon < 2 {
        x.push(format!("run.horizon={horizon} must be at least 2"));
    }
    if replications == 0 {
        x.push("run.replications must be at least 1".into());
    }

    let inferred_dim = dim
        .or_else(|| block_sizes.as_ref().map(|b| b.iter().sum()))
        .or_else(|| matrix.as_ref().map(|m| m.nrows()))
        .or_else(|| mean_a.as_ref().map(|m| m.nrows()))
        .or_else(|| grid.as_ref().map(|_| 1));
    let blocks = match (&block_sizes, inferred_dim) {
        (Some(sizes), d) => match Blocks::new(sizes.clone()) {
            Ok(b) => {
                if let Some(d) = d.filter(|&d| d != b.dim()) {
                    x.push(format!("drift.blocks sum to {} but the drift has dimension {d}", b.dim()));
                }
                Some(b)
            }
            Err(e) => {
                x.push(format!("drift.blocks: {e}"));
                None
            }
        },
        (None, Some(d)) if d > 0 => Some(Blocks::scalar(d)),
        _ => {
            x.push("drift dimension cannot be determined; set drift.dim".into());
            None
        }
    };

    let need = |what: &str, present: bool, x: &mut Vec<String>| {
        if !present {
            x.push(format!("drift.kind = \"{kind}\" requires drift.{what}"));
        }
    };
    let drift_spec = blocks.clone().and_then(|blocks| {
        let built = match kind.as_str() {
            "negative-identity" => Ok(DriftField::linear(-DMatrix::identity(blocks.dim(), blocks.dim()), blocks)),
            "linear" => {
                need("matrix", matrix.is_some(), &mut x);
                matrix.clone().map(|m| DriftField::linear(m, blocks)).ok_or(())
            }
            "affine" => {
                need("matrix", matrix.is_some(), &mut x);
                need("offset", offset.is_some(), &mut x);
                match (&matrix, &offset) {
                    (Some(m), Some(c)) => Ok(DriftField::affine(m.clone(), c.clone(), blocks)),
                    _ => Err(()),
                }
            }
            "table" => {
                need("grid", grid.is_some(), &mut x);
                need("values", values.is_some(), &mut x);
                match (&grid, &values) {
                    (Some(g), Some(v)) => Ok(DriftField::table(g.as_slice().to_vec(), v.as_slice().to_vec())),
                    _ => Err(()),
                }
            }
            "quadratic" => {
                need("mean_a", mean_a.is_some(), &mut x);
                need("mean_b", mean_b.is_some(), &mut x);
                return match (&mean_a, &mean_b) {
                    (Some(ma), Some(mb)) => {
                        match QuadraticObjective::new(ma.clone(), a_spread, mb.clone(), b_spread, blocks) {
                            Ok(q) => {
                                if !q.is_positive_definite() {
                                    x.push(format!(
                                        "drift.mean_a: E[A] + E[A]^T is not positive definite (smallest eigenvalue {})",
                                        q.min_eigenvalue()
                                    ));
                                }
                                Some(DriftSpec::Quadratic(q))
                            }
                            Err(e) => {
                                x.push(format!("drift: {e}"));
                                None
                            }
                        }
                    }
                    _ => None,
                };
            }
            _ => Err(()),
        };
        match built {
            Ok(Ok(f)) => match kappa {
                Some(k) => match DriftField::regularized(f, k) {
                    Ok(f) => Some(DriftSpec::Field(f)),
                    Err(e) => {
                        x.push(format!("drift.kappa: {e}"));
                        None
                    }
                },
                None => Some(DriftSpec::Field(f)),
            },
            Ok(Err(e)) => {
                x.push(format!("drift: {e}"));
                None
            }
            Err(()) => None,
        }
    });
    if kappa.is_some() && kind == "quadratic" {
        x.push("drift.kappa does not apply to a quadratic objective".into());
    }

    let noise_model = noise_kind.and_then(|k| match NoiseModel::new(k, noise_scale) {
        Ok(n) => Some(n),
        Err(e) => {
            x.push(format!("noise: {e}"));
            None
        }
    });
    if matches!(drift_spec, Some(DriftSpec::Quadratic(_))) && noise_model.as_ref().is_some_and(|n| !n.is_zero()) {
        x.push("noise section must be zero for a quadratic objective; its sampling noise is intrinsic".into());
    }

    let resolve = |spec: &str| -> String {
        match spec.split_once(':') {
            Some(("scripted", file)) if Path::new(file.trim()).is_relative() => {
                format!("scripted:{}", base.join(file.trim()).display())
            }
            _ => spec.to_string(),
        }
    };
    let parse_model = |spec: &str, where_: &str, x: &mut Vec<String>| match AoiModel::parse(&resolve(spec)) {
        Ok(m) => {
            match m.dominance(declared_p).map(|d| d.moment_finite()) {
                Ok(Some(false)) => x.push(format!(
                    "{where_}: model `{spec}` has no finite moment of order delays.p={declared_p}"
                )),
                Err(e) => x.push(format!("delays.p: {e}")),
                _ => {}
            }
            Some(m)
        }
        Err(e) => {
            x.push(format!("{where_}: {e}"));
            None
        }
    };
    let default_delay = default_spec.as_deref().and_then(|s| parse_model(s, "delays.default", &mut x));
    let agents = blocks.as_ref().map(Blocks::count);
    let delay_matrix = match (&delay_table, agents) {
        (Some(rows), Some(d)) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                x.push(format!("delays.matrix must be {d}x{d} to match the drift blocks"));
                None
            } else {
                let mut models = Vec::with_capacity(d * d);
                for (i, row) in rows.iter().enumerate() {
                    for (j, s) in row.iter().enumerate() {
                        models.push(parse_model(s, &format!("delays.matrix[{i}][{j}]"), &mut x));
                    }
                }
                models.into_iter().collect::<Option<Vec<_>>>().and_then(|m| DelayMatrix::new(d, m).ok())
            }
        }
        (None, Some(d)) => Some(match &default_delay {
            Some(m) => DelayMatrix::uniform(d, m.clone(), delay_self),
            None => DelayMatrix::zero(d),
        }),
        _ => None,
    };

    let schedule_built = match regime.as_str() {
        "harmonic" => {
            if q.is_some() {
                x.push("schedule.q only applies to the power regime".into());
            }
            StepSchedule::harmonic(step_scale, declared_p)
        }
        _ => match q {
            Some(q) => StepSchedule::power(step_scale, q, declared_p),
            // the regime check reports p <= 1 before q matters
            None => StepSchedule::power(step_scale, choose_q(declared_p).unwrap_or(1.5), declared_p),
        },
    };
    let schedule_built = match schedule_built {
        Ok(s) => Some(s),
        Err(e) => {
            x.push(format!("schedule vs delays.p: {e}"));
            None
        }
    };

    let run_variant = match variant.as_str() {
        "heavy-ball" => {
            let b = beta.unwrap_or(0.9);
            if !(0.0..1.0).contains(&b) {
                x.push(format!("run.beta={b} must lie in [0, 1)"));
            }
            if regime != "harmonic" {
                x.push("heavy-ball momentum requires the harmonic schedule".into());
            }
            Variant::HeavyBall { beta: b }
        }
        _ => {
            if let Some(b) = beta {
                if !(0.0..1.0).contains(&b) {
                    x.push(format!("run.beta={b} must lie in [0, 1)"));
                }
            }
            Variant::Plain
        }
    };

    let x1 = match (x1, blocks.as_ref()) {
        (Some(v), Some(b)) => {
            if v.len() != b.dim() {
                x.push(format!("run.x1 has length {} but the drift has dimension {}", v.len(), b.dim()));
            }
            Some(v)
        }
        (None, Some(b)) => Some(Vector::zeros(b.dim())),
        _ => None,
    };

    let an = &analysis_spec;
    if !(an.segment_length > 0.0) {
        x.push("analysis.segment_length must be positive".into());
    }
    if !(an.aoi_eps > 0.0 && an.aoi_eps < 1.0) {
        x.push(format!("analysis.aoi_eps={} must lie in (0, 1)", an.aoi_eps));
    }
    if !(an.aoi_p > 0.0) {
        x.push(format!("analysis.aoi_p={} must be positive", an.aoi_p));
    }
    for (name, v) in [("aoi_min_passing", an.aoi_min_passing), ("window_min_passing", an.window_min_passing)] {
        if let Some(v) = v.filter(|&v| v > replications) {
            x.push(format!("analysis.{name}={v} exceeds run.replications={replications}"));
        }
    }
    if an.tail_from == 0 {
        x.push("analysis.tail_from must be at least 1".into());
    }

    if !x.is_empty() {
        return Err(ConfigError::Inconsistent(x));
    }
    let (Some(drift), Some(noise), Some(delays), Some(schedule), Some(x1)) =
        (drift_spec, noise_model, delay_matrix, schedule_built, x1)
    else {
        return Err(ConfigError::Inconsistent(vec!["config could not be assembled".into()]));
    };

    Ok(ExperimentConfig {
        drift,
        noise,
        delays,
        default_delay,
        declared_p,
        schedule,
        run: RunSpec { variant: run_variant, window, horizon, seed, replications, x1, divergence_threshold, history_cap },
        analysis: analysis_spec,
        output: OutputSpec { dir: overrides.out.clone().unwrap_or_else(|| PathBuf::from(out_dir)), format: overrides.format.unwrap_or(format) },
        hash: config_hash(text, overrides),
    })
}

#[derive(Default)]
struct Reader {
    schema: Vec<String>,
}

impl Reader {
    fn schema(&mut self, msg: String) {
        self.schema.push(msg);
    }

    fn allow_keys(&mut self, section: &str, table: &Table, allowed: &[&str]) {
        for k in table.keys() {
            if !allowed.contains(&k.as_str()) {
                let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
                self.schema(format!("unknown key `{k}` in {place}"));
            }
        }
    }

    fn section(&mut self, root: &Table, name: &str, required: bool, allowed: &[&str]) -> Option<Table> {
        match root.get(name) {
            Some(Value::Table(t)) => {
                self.allow_keys(name, t, allowed);
                Some(t.clone())
            }
            Some(_) => {
                self.schema(format!("`{name}` must be a table"));
                None
            }
            None => {
                if required {
                    self.schema(format!("missing required section [{name}]"));
                }
                None
            }
        }
    }

    fn get<'t>(&self, t: &'t Option<Table>, key: &str) -> Option<&'t Value> {
        t.as_ref().and_then(|t| t.get(key))
    }

    fn wrong(&mut self, sec: &str, key: &str, want: &str, got: &Value) {
        self.schema(format!("{sec}.{key} must be {want}, got {} `{got}`", got.type_str()));
    }

    fn real(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<f64> {
        let v = self.get(t, key)?;
        match as_real(v) {
            Some(f) if f.is_finite() => Some(f),
            _ => {
                self.wrong(sec, key, "a finite number", v);
                None
            }
        }
    }

    fn int(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<u64> {
        let v = self.get(t, key)?;
        match v.as_integer().and_then(|i| u64::try_from(i).ok()) {
            Some(i) => Some(i),
            None => {
                self.wrong(sec, key, "a non-negative integer", v);
                None
            }
        }
    }

    fn count(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<usize> {
        self.int(t, sec, key).map(|v| v as usize)
    }

    fn boolean(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<bool> {
        let v = self.get(t, key)?;
        match v.as_bool() {
            Some(b) => Some(b),
            None => {
                self.wrong(sec, key, "a boolean", v);
                None
            }
        }
    }

    fn string(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<String> {
        let v = self.get(t, key)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.wrong(sec, key, "a string", v);
                None
            }
        }
    }

    fn strings(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<Vec<String>> {
        let v = self.get(t, key)?;
        match v.as_array().and_then(|a| a.iter().map(|e| e.as_str().map(String::from)).collect()) {
            Some(s) => Some(s),
            None => {
                self.wrong(sec, key, "an array of strings", v);
                None
            }
        }
    }

    fn counts(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<Vec<usize>> {
        let v = self.get(t, key)?;
        let parsed = v.as_array().and_then(|a| {
            a.iter().map(|e| e.as_integer().and_then(|i| usize::try_from(i).ok())).collect::<Option<Vec<_>>>()
        });
        match parsed {
            Some(s) => Some(s),
            None => {
                self.wrong(sec, key, "an array of non-negative integers", v);
                None
            }
        }
    }

    fn vector(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<Vector> {
        let v = self.get(t, key)?;
        match real_row(v) {
            Some(r) if !r.is_empty() => Some(Vector::from_vec(r)),
            _ => {
                self.wrong(sec, key, "a nonempty array of numbers", v);
                None
            }
        }
    }

    fn matrix(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<DMatrix<f64>> {
        let v = self.get(t, key)?;
        let rows = v.as_array().and_then(|a| a.iter().map(real_row).collect::<Option<Vec<_>>>());
        match rows {
            Some(rows) if !rows.is_empty() && rows.iter().all(|r| r.len() == rows.len()) => {
                let d = rows.len();
                Some(DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()))
            }
            _ => {
                self.wrong(sec, key, "a square array of number arrays", v);
                None
            }
        }
    }

    fn string_matrix(&mut self, t: &Option<Table>, sec: &str, key: &str) -> Option<Vec<Vec<String>>> {
        let v = self.get(t, key)?;
        let rows = v.as_array().and_then(|a| {
            a.iter()
                .map(|r| r.as_array().and_then(|r| r.iter().map(|e| e.as_str().map(String::from)).collect()))
                .collect::<Option<Vec<Vec<String>>>>()
        });
        match rows {
            Some(r) => Some(r),
            None => {
                self.wrong(sec, key, "an array of string arrays", v);
                None
            }
        }
    }
}

fn as_real(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn real_row(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(|e| as_real(e).filter(|f| f.is_finite())).collect()
}
