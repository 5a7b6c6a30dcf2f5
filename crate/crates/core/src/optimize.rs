//! Stochastic optimizers over the control field and the fixed-grid baseline.
//!
//! Every iteration draws a fresh mini-batch of parameters (or reuses the
//! tensor grid), averages the per-parameter gradients and takes one step.
//! Cost is counted in per-parameter gradient evaluations, so one stochastic
//! iteration costs `M` and one grid iteration costs `p^d`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{loss_and_gradient, ControlField, GradientField, TimeGrid};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, ConvergenceTrace, TraceRecord};
use crate::linalg::Scalar;
use crate::sampling::{fixed_grid, make_test_set, sample_batch, SeededRng, DEFAULT_TEST_SIZE};
use crate::systems::{ParameterSample, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Momentum,
    FixedGrid,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::FixedGrid => "fixed_grid",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "momentum" => Ok(OptimizerKind::Momentum),
            "fixed_grid" | "fixed-grid" | "grid" => Ok(OptimizerKind::FixedGrid),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd, adam, momentum, fixed_grid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub alpha: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Decay of the momentum kind.
    #[serde(default = "default_beta1")]
    pub lambda: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Maximum cumulative gradient evaluations.
    pub budget: usize,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    1
}
fn default_grid_points() -> usize {
    5
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, alpha: f64, budget: usize) -> Self {
        Self {
            kind,
            alpha,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            lambda: default_beta1(),
            batch_size: default_batch(),
            grid_points: default_grid_points(),
            budget,
        }
    }

    pub fn sgd(alpha: f64, batch_size: usize, budget: usize) -> Self {
        Self {
            batch_size,
            ..Self::new(OptimizerKind::Sgd, alpha, budget)
        }
    }

    pub fn adam(alpha: f64, batch_size: usize, budget: usize) -> Self {
        Self {
            batch_size,
            ..Self::new(OptimizerKind::Adam, alpha, budget)
        }
    }

    pub fn fixed_grid(alpha: f64, grid_points: usize, budget: usize) -> Self {
        Self {
            grid_points,
            ..Self::new(OptimizerKind::FixedGrid, alpha, budget)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("lambda", self.lambda)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.kind == OptimizerKind::FixedGrid && self.grid_points < 2 {
            return bad(format!(
                "grid_points must be at least 2, got {}",
                self.grid_points
            ));
        }
        Ok(())
    }

    /// Gradient evaluations per iteration for a `dim`-dimensional parameter box.
    pub fn iteration_cost(&self, dim: usize) -> Result<usize> {
        match self.kind {
            OptimizerKind::FixedGrid => self
                .grid_points
                .checked_pow(dim as u32)
                .ok_or_else(|| Error::Config("grid size overflows".into())),
            _ => Ok(self.batch_size),
        }
    }
}

/// Moment-estimate update shared by Adam and its momentum specialisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamRule {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl AdamRule {
    pub fn standard(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            bias_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub iteration: usize,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub control: ControlField,
    pub grad_evals: usize,
}

impl OptimizerState {
    /// Fresh state with both moment estimates at zero.
    pub fn new(control: ControlField) -> Self {
        Self::with_second_moment(control, 0.0)
    }

    pub fn with_second_moment(control: ControlField, v0: f64) -> Self {
        let n = control.values().len();
        Self {
            iteration: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![v0; n],
            control,
            grad_evals: 0,
        }
    }
}

fn check_shape(state: &OptimizerState, g: &GradientField) {
    assert_eq!(
        state.control.values().len(),
        g.values.len(),
        "gradient and control shapes differ"
    );
}

/// `u ← u − α g`.
pub fn sgd_step(state: &mut OptimizerState, g: &GradientField, alpha: f64) {
    check_shape(state, g);
    for (u, &gi) in state.control.values_mut().iter_mut().zip(&g.values) {
        *u -= alpha * gi;
    }
    state.iteration += 1;
}

/// One Adam update; the iteration counter is advanced before the bias
/// correction so the first step uses `k = 1`.
pub fn adam_step(state: &mut OptimizerState, g: &GradientField, rule: &AdamRule, alpha: f64) {
    check_shape(state, g);
    state.iteration += 1;
    let k = state.iteration as i32;
    let (c1, c2) = if rule.bias_correction {
        (1.0 - rule.beta1.powi(k), 1.0 - rule.beta2.powi(k))
    } else {
        (1.0, 1.0)
    };
    let u = state.control.values_mut();
    for i in 0..u.len() {
        let gi = g.values[i];
        let mu = rule.beta1 * state.first_moment[i] + (1.0 - rule.beta1) * gi;
        let v = rule.beta2 * state.second_moment[i] + (1.0 - rule.beta2) * (gi * gi);
        state.first_moment[i] = mu;
        state.second_moment[i] = v;
        let (mu_hat, v_hat) = if rule.bias_correction {
            (mu / c1, v / c2)
        } else {
            (mu, v)
        };
        u[i] -= alpha * mu_hat / (v_hat.sqrt() + rule.epsilon);
    }
}

/// Heavy-ball update `μ ← λμ + (1−λ)g`, `u ← u − αμ/(1+ε)`.
pub fn momentum_step(
    state: &mut OptimizerState,
    g: &GradientField,
    lambda: f64,
    alpha: f64,
    epsilon: f64,
) {
    check_shape(state, g);
    state.iteration += 1;
    let denom = 1.0 + epsilon;
    let u = state.control.values_mut();
    for i in 0..u.len() {
        let mu = lambda * state.first_moment[i] + (1.0 - lambda) * g.values[i];
        state.first_moment[i] = mu;
        u[i] -= alpha * mu / denom;
    }
}

/// Mean loss and mean gradient over `batch`. Per-parameter work runs on the
/// current rayon pool; the sum is taken in batch order.
pub fn minibatch_gradient<S: Scalar>(
    spec: &SystemSpec<S>,
    u: &ControlField,
    batch: &[ParameterSample],
) -> Result<(f64, GradientField)> {
    if batch.is_empty() {
        return Err(Error::Config("empty mini-batch".into()));
    }
    let parts = batch
        .par_iter()
        .map(|theta| loss_and_gradient(spec, theta, u))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = GradientField::zeros(u.channels(), u.steps());
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (acc, v) in grad.values.iter_mut().zip(&g.values) {
            *acc += v;
        }
    }
    let m = batch.len() as f64;
    for v in grad.values.iter_mut() {
        *v /= m;
    }
    Ok((loss / m, grad))
}

/// When to evaluate on the test set and which controls to keep.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSchedule {
    pub test_size: usize,
    /// Evaluate every `stride` iterations (plus the start and the end).
    pub stride: usize,
    /// Iterations whose control field is stored in the outcome.
    pub snapshot_iterations: Vec<usize>,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        Self {
            test_size: DEFAULT_TEST_SIZE,
            stride: 1,
            snapshot_iterations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub control: ControlField,
    pub trace: ConvergenceTrace,
    pub snapshots: BTreeMap<usize, ControlField>,
    pub state: OptimizerState,
}

/// Runs `config` from `uₗ(t_n) = sin(t_n)` until the next iteration would
/// exceed the gradient-evaluation budget.
///
/// Parameters are drawn on the training stream of `seed`; the test set on the
/// test stream. Test-set evaluations are not charged to the budget.
pub fn run_optimization<S: Scalar>(
    spec: &SystemSpec<S>,
    grid: TimeGrid,
    config: &OptimizerConfig,
    seed: u64,
    schedule: &EvalSchedule,
) -> Result<OptimizationOutcome> {
    config.validate()?;
    if schedule.stride == 0 {
        return Err(Error::Config("evaluation stride must be at least 1".into()));
    }
    let cost = config.iteration_cost(spec.domain.dim())?;
    if config.budget > 0 && config.budget < cost {
        return Err(Error::Config(format!(
            "budget {} is below the cost of one iteration ({cost})",
            config.budget
        )));
    }

    let test = make_test_set(&spec.domain, schedule.test_size, seed)?;
    let mut rng = SeededRng::training(seed);
    let quadrature = match config.kind {
        OptimizerKind::FixedGrid => Some(fixed_grid(&spec.domain, config.grid_points)?),
        _ => None,
    };
    let rule = AdamRule::standard(config.beta1, config.beta2, config.epsilon);

    let mut state = OptimizerState::new(ControlField::sine(grid, spec.channels));
    let mut trace = ConvergenceTrace::new();
    let mut snapshots = BTreeMap::new();
    let record = |state: &OptimizerState, trace: &mut ConvergenceTrace| -> Result<()> {
        let report = evaluate(spec, &state.control, &test)?;
        trace.push(TraceRecord {
            iteration: state.iteration,
            grad_evals: state.grad_evals,
            mean_rel_error: report.mean_rel_error,
            max_rel_error: report.max_rel_error,
        })
    };

    record(&state, &mut trace)?;
    if schedule.snapshot_iterations.contains(&0) {
        snapshots.insert(0, state.control.clone());
    }

    while state.grad_evals + cost <= config.budget {
        let drawn;
        let batch: &[ParameterSample] = match &quadrature {
            Some(points) => points,
            None => {
                drawn = sample_batch(&spec.domain, config.batch_size, &mut rng)?;
                &drawn
            }
        };
        let (_, g) = minibatch_gradient(spec, &state.control, batch)?;
        match config.kind {
            OptimizerKind::Sgd | OptimizerKind::FixedGrid => sgd_step(&mut state, &g, config.alpha),
            OptimizerKind::Adam => adam_step(&mut state, &g, &rule, config.alpha),
            OptimizerKind::Momentum => {
                momentum_step(&mut state, &g, config.lambda, config.alpha, config.epsilon)
            }
        }
        state.grad_evals += cost;

        if schedule.snapshot_iterations.contains(&state.iteration) {
            snapshots.insert(state.iteration, state.control.clone());
        }
        let finished = state.grad_evals + cost > config.budget;
        if state.iteration % schedule.stride == 0 || finished {
            record(&state, &mut trace)?;
        }
    }

    Ok(OptimizationOutcome {
        control: state.control.clone(),
        trace,
        snapshots,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::spin2;

    fn field(values: Vec<f64>) -> ControlField {
        let grid = TimeGrid::new(1.0, values.len()).unwrap();
        ControlField::from_values(grid, 1, values).unwrap()
    }

    fn grad(values: Vec<f64>) -> GradientField {
        GradientField {
            channels: 1,
            steps: values.len(),
            values,
        }
    }

    #[test]
    fn sgd_leaves_control_alone_without_signal() {
        let mut s = OptimizerState::new(field(vec![0.5, -1.0]));
        sgd_step(&mut s, &grad(vec![0.0, 0.0]), 3.0);
        assert_eq!(s.control.values(), &[0.5, -1.0]);
        sgd_step(&mut s, &grad(vec![1.0, 2.0]), 0.0);
        assert_eq!(s.control.values(), &[0.5, -1.0]);
        assert_eq!(s.iteration, 2);
    }

    #[test]
    fn sgd_accumulates_linearly() {
        let mut s = OptimizerState::new(field(vec![0.0, 0.0]));
        let g = grad(vec![0.25, -0.5]);
        for _ in 0..3 {
            sgd_step(&mut s, &g, 2.0);
        }
        assert_eq!(s.control.values(), &[-1.5, 3.0]);
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let mut s = OptimizerState::new(field(vec![0.0; 4]));
        let g = grad(vec![1e-3, -2.0, 0.0, 5e-9]);
        let alpha = 0.01;
        adam_step(&mut s, &g, &AdamRule::standard(0.9, 0.999, 1e-8), alpha);
        for (u, gi) in s.control.values().iter().zip(&g.values) {
            let want = -alpha * gi / (gi.abs() + 1e-8);
            assert!((u - want).abs() <= 1e-12 * alpha, "{u} vs {want}");
        }
        assert!(s.second_moment.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adam_is_inert_with_zero_gradient() {
        let mut s = OptimizerState::new(field(vec![0.3, 0.4]));
        for _ in 0..50 {
            adam_step(&mut s, &grad(vec![0.0, 0.0]), &AdamRule::standard(0.9, 0.999, 1e-8), 1.0);
        }
        assert_eq!(s.control.values(), &[0.3, 0.4]);
    }

    #[test]
    fn adam_constant_gradient_settles_to_sign_step() {
        let mut s = OptimizerState::new(field(vec![0.0, 0.0]));
        let g = grad(vec![0.7, -3.0]);
        let rule = AdamRule::standard(0.9, 0.999, 1e-8);
        let alpha = 0.05;
        let mut before = s.control.values().to_vec();
        for _ in 0..1000 {
            before = s.control.values().to_vec();
            adam_step(&mut s, &g, &rule, alpha);
        }
        // Constant g gives μ̂ = g and v̂ = g² in exact arithmetic.
        for ((u, b), gi) in s.control.values().iter().zip(&before).zip(&g.values) {
            let step = u - b;
            let want = -alpha * gi / (gi.abs() + 1e-8);
            assert!((step - want).abs() < 1e-9 * alpha, "{step} vs {want}");
        }
    }

    #[test]
    fn momentum_without_memory_is_scaled_sgd() {
        let mut m = OptimizerState::new(field(vec![1.0, 2.0]));
        let g = grad(vec![0.5, -0.25]);
        momentum_step(&mut m, &g, 0.0, 2.0, 1e-8);
        for (u, (u0, gi)) in m.control.values().iter().zip([1.0, 2.0].iter().zip(&g.values)) {
            assert_eq!(*u, u0 - 2.0 * gi / (1.0 + 1e-8));
        }
    }

    #[test]
    fn momentum_keeps_moving_on_inertia() {
        let mut m = OptimizerState::new(field(vec![0.0]));
        momentum_step(&mut m, &grad(vec![1.0]), 0.9, 1.0, 1e-8);
        let after_first = m.control.values()[0];
        momentum_step(&mut m, &grad(vec![0.0]), 0.9, 1.0, 1e-8);
        assert!(m.control.values()[0] < after_first);
    }

    #[test]
    fn momentum_is_adam_without_second_moment() {
        let lambda = 0.8;
        let rule = AdamRule {
            beta1: lambda,
            beta2: 1.0,
            epsilon: 1e-8,
            bias_correction: false,
        };
        let mut a = OptimizerState::with_second_moment(field(vec![0.1, -0.2, 0.3]), 1.0);
        let mut m = OptimizerState::new(field(vec![0.1, -0.2, 0.3]));
        for k in 0..25 {
            let x = k as f64;
            let g = grad(vec![(x * 0.3).sin(), (x * 1.7).cos() * 1e-3, 5.0 - x]);
            adam_step(&mut a, &g, &rule, 0.3);
            momentum_step(&mut m, &g, lambda, 0.3, 1e-8);
            assert_eq!(a.control, m.control);
            assert_eq!(a.first_moment, m.first_moment);
        }
    }

    #[test]
    fn minibatch_of_duplicates_is_the_single_gradient() {
        let s = spin2();
        let u = ControlField::sine(TimeGrid::new(2.0, 50).unwrap(), 2);
        let th = ParameterSample(vec![0.9, 1.1]);
        let (_, one) = loss_and_gradient(&s, &th, &u).unwrap();
        let (_, single) = minibatch_gradient(&s, &u, std::slice::from_ref(&th)).unwrap();
        assert_eq!(single, one);
        let (_, pair) = minibatch_gradient(&s, &u, &[th.clone(), th]).unwrap();
        assert_eq!(pair, one);
        assert!(minibatch_gradient(&s, &u, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::sgd(1.0, 1, 10).validate().is_ok());
        assert!(OptimizerConfig::sgd(0.0, 1, 10).validate().is_err());
        assert!(OptimizerConfig::sgd(1.0, 0, 10).validate().is_err());
        let mut c = OptimizerConfig::adam(0.01, 4, 100);
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
        c.beta2 = 0.999;
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        assert!(OptimizerConfig::fixed_grid(1.0, 1, 10).validate().is_err());
        assert_eq!(OptimizerConfig::fixed_grid(1.0, 5, 10).iteration_cost(2).unwrap(), 25);
        assert_eq!(OptimizerConfig::sgd(1.0, 4, 10).iteration_cost(6).unwrap(), 4);
    }

    #[test]
    fn budget_below_one_iteration_is_an_error() {
        let s = spin2();
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let cfg = OptimizerConfig::fixed_grid(500.0, 5, 10);
        assert!(run_optimization(&s, grid, &cfg, 1, &EvalSchedule::default()).is_err());
    }

    #[test]
    fn zero_budget_records_only_the_start() {
        let s = spin2();
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let cfg = OptimizerConfig::sgd(500.0, 1, 0);
        let sched = EvalSchedule {
            test_size: 10,
            ..Default::default()
        };
        let out = run_optimization(&s, grid, &cfg, 1, &sched).unwrap();
        assert_eq!(out.trace.records().len(), 1);
        assert_eq!(out.trace.records()[0].grad_evals, 0);
        assert_eq!(out.control, ControlField::sine(grid, 2));
    }

    #[test]
    fn evaluation_bookkeeping() {
        let s = spin2();
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let sched = EvalSchedule {
            test_size: 10,
            stride: 3,
            snapshot_iterations: vec![0, 2, 100],
        };
        let cfg = OptimizerConfig::sgd(50.0, 4, 30);
        let out = run_optimization(&s, grid, &cfg, 5, &sched).unwrap();
        assert_eq!(out.state.iteration, 7);
        assert_eq!(out.state.grad_evals, 28);
        let iters: Vec<usize> = out.trace.records().iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 3, 6, 7]);
        assert_eq!(out.snapshots.keys().copied().collect::<Vec<_>>(), vec![0, 2]);

        let grid_cfg = OptimizerConfig::fixed_grid(50.0, 5, 60);
        let out = run_optimization(&s, grid, &grid_cfg, 5, &sched).unwrap();
        assert_eq!(out.state.grad_evals, 50);
        assert_eq!(out.trace.last().unwrap().grad_evals, 50);
    }
}
