//! Run orchestration: configuration layering, manifests and file output.
//!
//! A run directory holds
//!
//! ```text
//! manifest.toml                  resolved configuration, seeds, version
//! trace.csv                      iter,grad_evals,mean_rel_error,max_rel_error
//! control.csv                    t,u1,...,uL  (final control, Q rows)
//! snapshots/control_iter_K.csv   stored controls, same layout
//! histograms/hist_iter_K_step_N.csv   one gradient value per row
//! ```
//!
//! Floats are written with 17 significant digits, so every value read back
//! is bitwise the value written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlField, TimeGrid};
use crate::error::{Error, Result};
use crate::evaluate::{default_snapshot_steps, evaluate, gradient_histogram, EvaluationReport, TraceRecord};
use crate::linalg::Scalar;
use crate::optimize::{run_optimization, EvalSchedule, OptimizerConfig, OptimizerKind};
use crate::sampling::{make_test_set, DEFAULT_TEST_SIZE, TEST_STREAM, TRAINING_STREAM};
use crate::systems::{SystemId, SystemSpec, SystemVisitor};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "ENSEMBLE_CONTROL_OUT";

/// Output root used when [`OUTPUT_ROOT_ENV`] is unset.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const CONTROL_FILE: &str = "control.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const HISTOGRAM_DIR: &str = "histograms";

/// Learning rate, budget and evaluation stride used when nothing else is
/// given. Adam defaults to `α = 0.01` on every system.
fn system_defaults(id: SystemId) -> (f64, usize, usize) {
    match id {
        SystemId::Spin2 => (500.0, 2500, 1),
        SystemId::Lambda3 => (100.0, 20_000, 10),
        SystemId::Relax3d => (10.0, 10_000, 10),
        SystemId::Relax6d => (10.0, 10_000, 25),
    }
}

const ADAM_DEFAULT_ALPHA: f64 = 0.01;

/// `<root>/<system>-<optimizer>-seed<seed>`.
pub fn default_output_dir(root: &Path, system: SystemId, kind: OptimizerKind, seed: u64) -> PathBuf {
    root.join(format!("{}-{}-seed{}", system, kind.as_str(), seed))
}

/// Output root from [`OUTPUT_ROOT_ENV`], or [`DEFAULT_OUTPUT_ROOT`].
pub fn output_root_from_env() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Optimizer keys that may be left unset in one configuration layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerOverrides {
    pub kind: Option<OptimizerKind>,
    pub alpha: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub batch_size: Option<usize>,
    pub grid_points: Option<usize>,
    pub budget: Option<usize>,
}

impl OptimizerOverrides {
    /// Keys set in `top` win.
    pub fn layered(self, top: Self) -> Self {
        Self {
            kind: top.kind.or(self.kind),
            alpha: top.alpha.or(self.alpha),
            beta1: top.beta1.or(self.beta1),
            beta2: top.beta2.or(self.beta2),
            epsilon: top.epsilon.or(self.epsilon),
            lambda: top.lambda.or(self.lambda),
            batch_size: top.batch_size.or(self.batch_size),
            grid_points: top.grid_points.or(self.grid_points),
            budget: top.budget.or(self.budget),
        }
    }
}

/// One layer of run configuration: a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub system: Option<SystemId>,
    pub seed: Option<u64>,
    #[serde(alias = "T")]
    pub total_time: Option<f64>,
    #[serde(alias = "Q")]
    pub steps: Option<usize>,
    pub test_size: Option<usize>,
    pub eval_stride: Option<usize>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub snapshot_iterations: Option<Vec<usize>>,
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub optimizer: OptimizerOverrides,
}

impl RunOverrides {
    /// Parses a configuration file. A run manifest is accepted too; its
    /// `[config]` table is used.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::parse(origin, e))?;
        let table = match table.get("config") {
            Some(toml::Value::Table(inner)) if table.contains_key("version") => inner.clone(),
            _ => table,
        };
        table.try_into().map_err(|e| Error::parse(origin, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Keys set in `top` win.
    pub fn layered(self, top: Self) -> Self {
        Self {
            system: top.system.or(self.system),
            seed: top.seed.or(self.seed),
            total_time: top.total_time.or(self.total_time),
            steps: top.steps.or(self.steps),
            test_size: top.test_size.or(self.test_size),
            eval_stride: top.eval_stride.or(self.eval_stride),
            threads: top.threads.or(self.threads),
            output: top.output.or(self.output),
            snapshot_iterations: top.snapshot_iterations.or(self.snapshot_iterations),
            snapshot_times: top.snapshot_times.or(self.snapshot_times),
            optimizer: self.optimizer.layered(top.optimizer),
        }
    }

    /// Fills unset keys from the system defaults and validates the result.
    /// Relative output paths are kept as given; an unset output goes under
    /// `output_root`.
    pub fn resolve(self, output_root: &Path) -> Result<RunConfig> {
        let system = self
            .system
            .ok_or_else(|| Error::Config("no system given (use --system or `system = ...`)".into()))?;
        let (gd_alpha, budget, stride) = system_defaults(system);
        let (default_time, default_steps) = system.visit(DefaultGrid);
        let o = self.optimizer;
        let kind = o.kind.unwrap_or(OptimizerKind::Sgd);
        let base = OptimizerConfig::new(
            kind,
            match kind {
                OptimizerKind::Adam => ADAM_DEFAULT_ALPHA,
                _ => gd_alpha,
            },
            budget,
        );
        let optimizer = OptimizerConfig {
            kind,
            alpha: o.alpha.unwrap_or(base.alpha),
            beta1: o.beta1.unwrap_or(base.beta1),
            beta2: o.beta2.unwrap_or(base.beta2),
            epsilon: o.epsilon.unwrap_or(base.epsilon),
            lambda: o.lambda.unwrap_or(base.lambda),
            batch_size: o.batch_size.unwrap_or(base.batch_size),
            grid_points: o.grid_points.unwrap_or(base.grid_points),
            budget: o.budget.unwrap_or(base.budget),
        };
        let seed = self.seed.unwrap_or(0);
        let total_time = self.total_time.unwrap_or(default_time);
        let config = RunConfig {
            system,
            seed,
            total_time,
            steps: self.steps.unwrap_or(default_steps),
            test_size: self.test_size.unwrap_or(DEFAULT_TEST_SIZE),
            eval_stride: self.eval_stride.unwrap_or(stride),
            threads: self.threads.unwrap_or(0),
            output: self
                .output
                .unwrap_or_else(|| default_output_dir(output_root, system, kind, seed)),
            snapshot_iterations: self.snapshot_iterations.unwrap_or_default(),
            snapshot_times: self
                .snapshot_times
                .unwrap_or_else(|| default_snapshot_times(total_time)),
            optimizer,
        };
        config.validate()?;
        Ok(config)
    }
}

/// `0, T/5, …, T`, ending exactly at `T`.
fn default_snapshot_times(total_time: f64) -> Vec<f64> {
    (0..=5)
        .map(|k| if k == 5 { total_time } else { k as f64 * total_time / 5.0 })
        .collect()
}

struct DefaultGrid;

impl SystemVisitor for DefaultGrid {
    type Output = (f64, usize);
    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> (f64, usize) {
        (spec.default_time, spec.default_steps)
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemId,
    pub seed: u64,
    pub total_time: f64,
    pub steps: usize,
    pub test_size: usize,
    pub eval_stride: usize,
    /// Worker threads; 0 uses one per available core.
    pub threads: usize,
    pub output: PathBuf,
    /// Iterations whose controls are stored and histogrammed.
    pub snapshot_iterations: Vec<usize>,
    /// Histogram times, mapped to the step whose left endpoint is nearest.
    pub snapshot_times: Vec<f64>,
    pub optimizer: OptimizerConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        TimeGrid::new(self.total_time, self.steps)?;
        self.optimizer.validate()?;
        if self.optimizer.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be positive".into()));
        }
        if self.eval_stride == 0 {
            return Err(Error::Config("eval_stride must be positive".into()));
        }
        // TOML integers are signed 64-bit.
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| !(t.is_finite() && (0.0..=self.total_time).contains(&t)))
        {
            return Err(Error::Config(format!(
                "snapshot time {t} outside [0, {}]",
                self.total_time
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.total_time, self.steps)
    }

    /// Distinct steps for [`snapshot_times`](Self::snapshot_times), in order.
    pub fn snapshot_steps(&self) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        let mut steps: Vec<usize> = if self.snapshot_times.is_empty() {
            default_snapshot_steps(&grid)
        } else {
            self.snapshot_times.iter().map(|&t| grid.step_index(t)).collect()
        };
        steps.dedup();
        Ok(steps)
    }

    fn schedule(&self) -> EvalSchedule {
        EvalSchedule {
            test_size: self.test_size,
            stride: self.eval_stride,
            snapshot_iterations: self.snapshot_iterations.clone(),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", self.threads)))
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Seconds since the Unix epoch when the run started.
    pub created_unix: u64,
    pub master_seed: u64,
    pub training_stream: u64,
    pub test_stream: u64,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            master_seed: config.seed,
            training_stream: TRAINING_STREAM,
            test_stream: TEST_STREAM,
            config,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub iterations: usize,
    pub grad_evals: usize,
    pub final_record: TraceRecord,
    pub histogram_files: Vec<PathBuf>,
}

/// Runs the optimizer described by `config` and writes the run directory.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let dir = config.output.clone();
    create_dir(&dir)?;
    let manifest = RunManifest::new(config.clone());
    write_file(&dir.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;

    let pool = config.pool()?;
    pool.install(|| config.system.visit(RunVisitor { config, dir: &dir }))
}

struct RunVisitor<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
}

impl SystemVisitor for RunVisitor<'_> {
    type Output = Result<RunSummary>;

    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> Result<RunSummary> {
        let config = self.config;
        let outcome = run_optimization(
            spec,
            config.grid()?,
            &config.optimizer,
            config.seed,
            &config.schedule(),
        )?;
        write_trace(&self.dir.join(TRACE_FILE), outcome.trace.records())?;
        write_control(&self.dir.join(CONTROL_FILE), &outcome.control)?;
        if !outcome.snapshots.is_empty() {
            create_dir(&self.dir.join(SNAPSHOT_DIR))?;
        }
        for (k, u) in &outcome.snapshots {
            write_control(&snapshot_path(self.dir, *k), u)?;
        }
        let iterations: Vec<usize> = outcome.snapshots.keys().copied().collect();
        let histogram_files = write_histograms(spec, config, self.dir, &iterations)?;
        let final_record = *outcome
            .trace
            .last()
            .ok_or_else(|| Error::Config("run produced no trace".into()))?;
        Ok(RunSummary {
            dir: self.dir.to_path_buf(),
            iterations: outcome.state.iteration,
            grad_evals: outcome.state.grad_evals,
            final_record,
            histogram_files,
        })
    }
}

pub fn snapshot_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR)
        .join(format!("control_iter_{iteration}.csv"))
}

pub fn histogram_path(dir: &Path, iteration: usize, step: usize) -> PathBuf {
    dir.join(HISTOGRAM_DIR)
        .join(format!("hist_iter_{iteration}_step_{step}.csv"))
}

/// Recomputes gradient histograms for stored snapshots of a finished run.
/// All requested iterations must have a snapshot; nothing is written
/// otherwise.
pub fn emit_histograms(run_dir: &Path, iterations: &[usize]) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(&run_dir.join(MANIFEST_FILE))?;
    if let Some(&k) = iterations
        .iter()
        .find(|&&k| !snapshot_path(run_dir, k).is_file())
    {
        return Err(Error::MissingSnapshot(k));
    }
    if iterations.is_empty() {
        return Ok(Vec::new());
    }
    let config = &manifest.config;
    let pool = config.pool()?;
    pool.install(|| {
        config.system.visit(HistogramVisitor {
            config,
            dir: run_dir,
            iterations,
        })
    })
}

struct HistogramVisitor<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
    iterations: &'a [usize],
}

impl SystemVisitor for HistogramVisitor<'_> {
    type Output = Result<Vec<PathBuf>>;

    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> Result<Vec<PathBuf>> {
        write_histograms(spec, self.config, self.dir, self.iterations)
    }
}

fn write_histograms<S: Scalar>(
    spec: &SystemSpec<S>,
    config: &RunConfig,
    dir: &Path,
    iterations: &[usize],
) -> Result<Vec<PathBuf>> {
    if iterations.is_empty() {
        return Ok(Vec::new());
    }
    let test = make_test_set(&spec.domain, config.test_size, config.seed)?;
    let steps = config.snapshot_steps()?;
    let grid = config.grid()?;
    create_dir(&dir.join(HISTOGRAM_DIR))?;
    let mut files = Vec::new();
    for &k in iterations {
        let u = read_control(&snapshot_path(dir, k), spec.channels, Some(grid))?;
        for snap in gradient_histogram(spec, &u, &test, &steps, k)? {
            let path = histogram_path(dir, k, snap.step);
            let mut text = String::new();
            for v in &snap.values {
                text.push_str(&fmt_float(*v));
                text.push('\n');
            }
            write_file(&path, text.as_bytes())?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Test-set evaluation of a control file, with the files it was written to.
#[derive(Debug, Clone)]
pub struct EvaluationOutput {
    pub report: EvaluationReport,
    pub summary_file: PathBuf,
    pub samples_file: PathBuf,
}

/// Evaluates a `control.csv` against the test set of `seed` and writes
/// `evaluation.toml` (summary) and `evaluation_samples.csv` (one row per test
/// parameter) into `out_dir`.
///
/// The horizon is read from the time column; `total_time` overrides it and
/// is required when the file has a single row.
pub fn evaluate_control(
    control: &Path,
    system: SystemId,
    seed: u64,
    test_size: usize,
    total_time: Option<f64>,
    out_dir: &Path,
) -> Result<EvaluationOutput> {
    system.visit(EvaluateVisitor {
        control,
        seed,
        test_size,
        total_time,
        out_dir,
    })
}

struct EvaluateVisitor<'a> {
    control: &'a Path,
    seed: u64,
    test_size: usize,
    total_time: Option<f64>,
    out_dir: &'a Path,
}

impl SystemVisitor for EvaluateVisitor<'_> {
    type Output = Result<EvaluationOutput>;

    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> Result<EvaluationOutput> {
        let u = read_control_with_time(self.control, spec.channels, self.total_time)?;
        let test = make_test_set(&spec.domain, self.test_size, self.seed)?;
        let report = evaluate(spec, &u, &test)?;

        create_dir(self.out_dir)?;
        let summary_file = self.out_dir.join("evaluation.toml");
        let summary = EvaluationSummary {
            system: spec.name.to_string(),
            control: self.control.to_path_buf(),
            seed: self.seed,
            test_size: self.test_size,
            total_time: u.grid().total_time(),
            steps: u.steps(),
            mean_rel_error: report.mean_rel_error,
            max_rel_error: report.max_rel_error,
            mean_relative_fidelity: report.mean_relative_fidelity(),
        };
        let text = toml::to_string(&summary)
            .map_err(|e| Error::Config(format!("cannot encode evaluation summary: {e}")))?;
        write_file(&summary_file, text.as_bytes())?;

        let samples_file = self.out_dir.join("evaluation_samples.csv");
        let mut w = csv_writer(&samples_file)?;
        let d = spec.domain.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("theta{i}")).collect();
        header.extend(["fidelity", "f_max", "rel_error"].map(String::from));
        w.write_record(&header).map_err(|e| csv_err(&samples_file, e))?;
        for (theta, &(f, fm)) in test.samples.iter().zip(&report.per_sample) {
            let mut row: Vec<String> = theta.values().iter().map(|&x| fmt_float(x)).collect();
            row.extend([f, fm, 1.0 - f / fm].map(fmt_float));
            w.write_record(&row).map_err(|e| csv_err(&samples_file, e))?;
        }
        w.flush().map_err(|e| Error::io(&samples_file, e))?;
        Ok(EvaluationOutput {
            report,
            summary_file,
            samples_file,
        })
    }
}

#[derive(Serialize)]
struct EvaluationSummary {
    system: String,
    control: PathBuf,
    seed: u64,
    test_size: usize,
    total_time: f64,
    steps: usize,
    mean_rel_error: f64,
    max_rel_error: f64,
    mean_relative_fidelity: f64,
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "grad_evals", "mean_rel_error", "max_rel_error"])
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.grad_evals.to_string(),
            fmt_float(r.mean_rel_error),
            fmt_float(r.max_rel_error),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv_reader(path)?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["iter", "grad_evals", "mean_rel_error", "max_rel_error"] {
        return Err(Error::parse(path, format!("unexpected trace header {headers:?}")));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            Ok(TraceRecord {
                iteration: parse_field(path, &row[0])?,
                grad_evals: parse_field(path, &row[1])?,
                mean_rel_error: parse_field(path, &row[2])?,
                max_rel_error: parse_field(path, &row[3])?,
            })
        })
        .collect()
}

/// Writes `t,u1,...,uL` with `t = n·Δt`, one row per step.
pub fn write_control(path: &Path, u: &ControlField) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=u.channels()).map(|l| format!("u{l}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for n in 0..u.steps() {
        let mut row = vec![fmt_float(u.grid().time(n))];
        row.extend((0..u.channels()).map(|l| fmt_float(u.get(l, n))));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a control file with `channels` control columns on `grid`. Without a
/// grid the horizon comes from the time column.
pub fn read_control(path: &Path, channels: usize, grid: Option<TimeGrid>) -> Result<ControlField> {
    read_control_with_time(path, channels, grid.map(|g| g.total_time()))
        .and_then(|u| match grid {
            Some(g) if g.steps() != u.steps() => Err(Error::Shape(format!(
                "{}: {} rows, expected {}",
                path.display(),
                u.steps(),
                g.steps()
            ))),
            _ => Ok(u),
        })
}

fn read_control_with_time(path: &Path, channels: usize, total_time: Option<f64>) -> Result<ControlField> {
    let mut r = csv_reader(path)?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut expected = vec!["t".to_string()];
    expected.extend((1..=channels).map(|l| format!("u{l}")));
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Shape(format!(
            "{}: header {:?}, expected {}",
            path.display(),
            headers.iter().collect::<Vec<_>>(),
            expected.join(",")
        )));
    }
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.len() != channels + 1 {
            return Err(Error::Shape(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                rows.len() + 1,
                row.len(),
                channels + 1
            )));
        }
        times.push(parse_field::<f64>(path, &row[0])?);
        rows.push(
            row.iter()
                .skip(1)
                .map(|s| parse_field(path, s))
                .collect::<Result<_>>()?,
        );
    }
    let q = rows.len();
    if q == 0 {
        return Err(Error::Shape(format!("{}: no control rows", path.display())));
    }
    let total_time = match total_time {
        Some(t) => t,
        None if q >= 2 => times[1] * q as f64,
        None => {
            return Err(Error::Config(format!(
                "{}: a single row does not fix the horizon; give it explicitly",
                path.display()
            )))
        }
    };
    let grid = TimeGrid::new(total_time, q)?;
    for (n, &t) in times.iter().enumerate() {
        if (t - grid.time(n)).abs() > 1e-9 * total_time.max(1.0) {
            return Err(Error::Shape(format!(
                "{}: row {} has t = {t}, expected {}",
                path.display(),
                n + 1,
                grid.time(n)
            )));
        }
    }
    let mut values = vec![0.0; channels * q];
    for (n, row) in rows.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            values[l * q + n] = v;
        }
    }
    ControlField::from_values(grid, channels, values)
}

/// Lines for `list-systems`.
pub fn system_table() -> Vec<String> {
    SystemId::ALL
        .iter()
        .map(|&id| {
            let (dim, channels, d, t, q) = id.visit(Shape);
            format!(
                "{:<8} N={dim} L={channels} d={d} T={t:.6} Q={q}  {}",
                id.as_str(),
                id.description()
            )
        })
        .collect()
}

struct Shape;

impl SystemVisitor for Shape {
    type Output = (usize, usize, usize, f64, usize);
    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> Self::Output {
        (
            spec.dim(),
            spec.channels,
            spec.domain.dim(),
            spec.default_time,
            spec.default_steps,
        )
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| Error::parse(path, format!("`{s}`: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }
    } else {
        Error::parse(path, e)
    }
}
