//! Forward propagation of the coefficient vector, backward propagation of the
//! adjoint, and the exact gradient of the discrete per-parameter loss.
//!
//! With piecewise-constant controls the state obeys
//! `C_{n+1} = e^{Δt X(u(t_n))} C_n` and the adjoint runs backwards through the
//! same propagators, `λ_n = e^{Δt X(u(t_n))†} λ_{n+1}`. The derivative of the
//! loss with respect to `uₗ(t_n)` is then
//!
//! ```text
//! Re ⟨λ_{n+1}, D_{ℓ,n} C_n⟩,   D_{ℓ,n} = d/dh e^{Δt X(u(t_n)) + h Δt Xₗ} at h = 0
//! ```
//!
//! which is exact for the discrete scheme (no time-continuous approximation).

use crate::error::{Error, Result};
use crate::linalg::{expm_frechet_many, expm_order8, inner, Matrix, Scalar, Vector};
use crate::systems::{ParameterSample, SystemSpec, Target};

/// Uniform grid `t_n = n·dt`, `dt = T/Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    total_time: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(total_time: f64, steps: usize) -> Result<Self> {
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::Config(format!(
                "total time must be positive, got {total_time}"
            )));
        }
        if steps == 0 {
            return Err(Error::Config("number of time steps must be at least 1".into()));
        }
        Ok(Self { total_time, steps })
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.steps as f64
    }

    /// Left endpoint of step `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Step whose left endpoint is closest to `t`, clamped to the last step.
    pub fn step_index(&self, t: f64) -> usize {
        let n = (t / self.dt()).round();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.steps - 1)
        }
    }
}

/// Piecewise-constant controls: `uₗ` holds `values[ℓ·Q + n]` on `[t_n, t_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    grid: TimeGrid,
    channels: usize,
    values: Vec<f64>,
}

impl ControlField {
    pub fn zeros(grid: TimeGrid, channels: usize) -> Self {
        Self {
            grid,
            channels,
            values: vec![0.0; channels * grid.steps()],
        }
    }

    /// `uₗ(t_n) = sin(t_n)` on every channel.
    pub fn sine(grid: TimeGrid, channels: usize) -> Self {
        Self::from_fn(grid, channels, |_, t| t.sin())
    }

    /// Fills channel `ℓ` at step `n` with `f(ℓ, t_n)`.
    pub fn from_fn(grid: TimeGrid, channels: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let values = (0..channels)
            .flat_map(|l| (0..grid.steps()).map(move |n| (l, n)))
            .map(|(l, n)| f(l, grid.time(n)))
            .collect();
        Self {
            grid,
            channels,
            values,
        }
    }

    /// Channel-major values, `channels × steps` long.
    pub fn from_values(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != channels * grid.steps() {
            return Err(Error::Shape(format!(
                "{} control values for {channels} channels × {} steps",
                values.len(),
                grid.steps()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("control field".into()));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[channel * self.steps() + step]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let q = self.steps();
        &self.values[channel * q..(channel + 1) * q]
    }

    /// All channel values at step `n`.
    pub fn at_step(&self, step: usize) -> Vec<f64> {
        (0..self.channels).map(|l| self.get(l, step)).collect()
    }
}

/// Same layout as [`ControlField`]: `values[ℓ·Q + n] = ∂loss/∂uₗ(t_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub channels: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(channels: usize, steps: usize) -> Self {
        Self {
            channels,
            steps,
            values: vec![0.0; channels * steps],
        }
    }

    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[channel * self.steps + step]
    }
}

/// States `C₀ … C_Q`.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<Vector<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn final_state(&self) -> &[S] {
        self.states.last().expect("trajectory always holds C₀")
    }
}

fn check_control<S: Scalar>(spec: &SystemSpec<S>, u: &ControlField) -> Result<()> {
    if u.channels() != spec.channels {
        return Err(Error::Shape(format!(
            "control has {} channels, {} expects {}",
            u.channels(),
            spec.name,
            spec.channels
        )));
    }
    Ok(())
}

/// `Δt·X₀(θ)` and `Δt·X_ℓ(θ)`, built once per parameter value.
struct StepGenerators<S: Scalar> {
    drift: Matrix<S>,
    controls: Vec<Matrix<S>>,
}

impl<S: Scalar> StepGenerators<S> {
    fn new(spec: &SystemSpec<S>, theta: &[f64], dt: f64) -> Self {
        Self {
            drift: (spec.drift)(theta).scaled(dt),
            controls: (0..spec.channels)
                .map(|l| (spec.control)(theta, l).scaled(dt))
                .collect(),
        }
    }

    /// `out ← Δt·X(θ, u(t_n))`.
    fn assemble(&self, u: &ControlField, n: usize, out: &mut Matrix<S>) {
        out.as_mut_slice().copy_from_slice(self.drift.as_slice());
        for (l, c) in self.controls.iter().enumerate() {
            let ul = u.get(l, n);
            for (o, &x) in out.as_mut_slice().iter_mut().zip(c.as_slice()) {
                *o += x.scale(ul);
            }
        }
    }
}

#[cfg(test)]
fn step_exponent<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &[f64],
    u: &ControlField,
    n: usize,
) -> Matrix<S> {
    spec.generator_unchecked(theta, &u.at_step(n))
        .scaled(u.grid().dt())
}

/// `C_{n+1} = e^{Δt X(θ, u(t_n))} C_n` from the system's initial state.
pub fn propagate_forward<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &ParameterSample,
    u: &ControlField,
) -> Result<Trajectory<S>> {
    spec.domain.check(theta)?;
    check_control(spec, u)?;
    let gens = StepGenerators::new(spec, theta.values(), u.grid().dt());
    let mut a = Matrix::zeros(spec.dim());
    let mut states = Vec::with_capacity(u.steps() + 1);
    states.push(spec.initial_state.clone());
    for n in 0..u.steps() {
        gens.assemble(u, n, &mut a);
        let e = expm_order8(&a)?;
        let next = e.mul_vec(&states[n]);
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Fidelity of `u` for one parameter value.
pub fn fidelity<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &ParameterSample,
    u: &ControlField,
) -> Result<f64> {
    let traj = propagate_forward(spec, theta, u)?;
    spec.target_overlap(traj.final_state())
}

/// Per-parameter loss of a final state: `½(1 − |⟨C_target, C_Q⟩|²)` for
/// overlap targets, `1 − (C_Q)_j` for coordinate targets.
pub fn terminal_loss<S: Scalar>(spec: &SystemSpec<S>, final_state: &[S]) -> Result<f64> {
    check_dim(spec, final_state)?;
    Ok(match &spec.target {
        Target::Overlap(target) => {
            let f = inner(target, final_state).modulus();
            0.5 * (1.0 - f * f)
        }
        Target::Coordinate(j) => 1.0 - final_state[*j].re(),
    })
}

/// Gradient of [`terminal_loss`] with respect to the final state, in the
/// sense `dloss = Re⟨λ_Q, dC_Q⟩`.
pub fn terminal_adjoint<S: Scalar>(spec: &SystemSpec<S>, final_state: &[S]) -> Result<Vector<S>> {
    check_dim(spec, final_state)?;
    Ok(match &spec.target {
        Target::Overlap(target) => {
            let f = inner(target, final_state);
            target.iter().map(|&t| -(f * t)).collect()
        }
        Target::Coordinate(j) => {
            let mut v = vec![S::zero(); spec.dim()];
            v[*j] = -S::one();
            v
        }
    })
}

fn check_dim<S: Scalar>(spec: &SystemSpec<S>, v: &[S]) -> Result<()> {
    if v.len() != spec.dim() {
        return Err(Error::Shape(format!(
            "vector has {} coefficients, {} has {}",
            v.len(),
            spec.name,
            spec.dim()
        )));
    }
    Ok(())
}

/// `λ_n = e^{Δt X(θ, u(t_n))†} λ_{n+1}`, returned as `λ₀ … λ_Q`.
pub fn propagate_adjoint<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &ParameterSample,
    u: &ControlField,
    terminal: &[S],
) -> Result<Vec<Vector<S>>> {
    spec.domain.check(theta)?;
    check_control(spec, u)?;
    check_dim(spec, terminal)?;
    let q = u.steps();
    let gens = StepGenerators::new(spec, theta.values(), u.grid().dt());
    let mut a = Matrix::zeros(spec.dim());
    let mut adjoint = vec![Vec::new(); q + 1];
    adjoint[q] = terminal.to_vec();
    for n in (0..q).rev() {
        gens.assemble(u, n, &mut a);
        adjoint[n] = expm_order8(&a.conj_transpose())?.mul_vec(&adjoint[n + 1]);
    }
    Ok(adjoint)
}

/// Loss and its exact discrete gradient for one parameter value.
pub fn loss_and_gradient<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &ParameterSample,
    u: &ControlField,
) -> Result<(f64, GradientField)> {
    spec.domain.check(theta)?;
    check_control(spec, u)?;
    let th = theta.values();
    let q = u.steps();
    let dt = u.grid().dt();
    let gens = StepGenerators::new(spec, th, dt);
    let mut a = Matrix::zeros(spec.dim());

    // Forward sweep keeps each propagator and the vectors D_{ℓ,n} C_n.
    let mut propagators = Vec::with_capacity(q);
    let mut sensitivities: Vec<Vec<Vector<S>>> = Vec::with_capacity(q);
    let mut state = spec.initial_state.clone();
    for n in 0..q {
        gens.assemble(u, n, &mut a);
        let (e, ds) = expm_frechet_many(&a, &gens.controls)?;
        sensitivities.push(ds.iter().map(|d| d.mul_vec(&state)).collect());
        state = e.mul_vec(&state);
        propagators.push(e);
    }

    let loss = terminal_loss(spec, &state)?;
    let mut adjoint = terminal_adjoint(spec, &state)?;
    let mut grad = GradientField::zeros(spec.channels, q);
    for n in (0..q).rev() {
        for (l, dc) in sensitivities[n].iter().enumerate() {
            grad.values[l * q + n] = inner(&adjoint, dc).re();
        }
        adjoint = propagators[n].conj_transpose().mul_vec(&adjoint);
    }
    Ok((loss, grad))
}

/// Loss only, for finite-difference checks and cheap evaluation.
pub fn loss<S: Scalar>(
    spec: &SystemSpec<S>,
    theta: &ParameterSample,
    u: &ControlField,
) -> Result<f64> {
    let traj = propagate_forward(spec, theta, u)?;
    terminal_loss(spec, traj.final_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::systems::{relax3d, relax6d, spin2};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn th(v: &[f64]) -> ParameterSample {
        ParameterSample(v.to_vec())
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0, 200).unwrap();
        assert_eq!(g.dt(), 0.01);
        assert_eq!(g.step_index(0.0), 0);
        assert_eq!(g.step_index(0.8), 80);
        assert_eq!(g.step_index(2.0), 199);
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn sine_initial_guess_uses_left_endpoints() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        let u = ControlField::sine(g, 2);
        assert_eq!(u.get(0, 0), 0.0);
        assert_eq!(u.get(1, 3), 1.5f64.sin());
        assert_eq!(u.channel(0), u.channel(1));
    }

    #[test]
    fn free_spin_only_picks_up_phase() {
        let s = spin2();
        let u = ControlField::zeros(TimeGrid::new(2.0, 200).unwrap(), 2);
        let traj = propagate_forward(&s, &th(&[1.0, 1.0]), &u).unwrap();
        let cq = traj.final_state();
        assert!((cq[0] - c(0.0, 1.0).exp()).norm() < 1e-12);
        assert_eq!(cq[1], c(0.0, 0.0));
        assert_eq!(s.target_overlap(cq).unwrap(), 0.0);
    }

    #[test]
    fn relax3d_without_control_stays_put() {
        let s = relax3d();
        let u = ControlField::zeros(TimeGrid::new(s.default_time, 200).unwrap(), 2);
        let traj = propagate_forward(&s, &th(&[1.0, 0.7, 1.3]), &u).unwrap();
        assert_eq!(traj.final_state(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(loss(&s, &th(&[1.0, 0.7, 1.3]), &u).unwrap(), 1.0);
        let (l, _) = loss_and_gradient(&s, &th(&[1.0, 0.7, 1.3]), &u).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn resonant_pi_pulse_inverts_the_spin() {
        // Control block alone: X = −½ i u₁ σₓ, so e^{TX} = cos(u₁T/2) − i sin(u₁T/2) σₓ.
        let mut s = spin2();
        s.drift = |_| Matrix::zeros(2);
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let u = ControlField::from_fn(grid, 2, |l, _| if l == 0 { PI / 2.0 } else { 0.0 });
        let traj = propagate_forward(&s, &th(&[1.0, 1.0]), &u).unwrap();
        let cq = traj.final_state();
        assert!(cq[0].norm() < 1e-13);
        assert!((cq[1] - c(0.0, -1.0)).norm() < 1e-13);
        assert!((s.target_overlap(cq).unwrap() - 1.0).abs() < 1e-13);
        let (l, g) = loss_and_gradient(&s, &th(&[1.0, 1.0]), &u).unwrap();
        assert!(l.abs() < 1e-13);
        assert!(g.values.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn terminal_adjoint_cases() {
        let s = spin2();
        let target = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let lam = terminal_adjoint(&s, &target).unwrap();
        assert_eq!(lam, vec![c(0.0, 0.0), c(-1.0, 0.0)]);
        let lam = terminal_adjoint(&s, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(lam.iter().all(|x| *x == c(0.0, 0.0)));
        let r = relax6d();
        let lam = terminal_adjoint(&r, &[0.3, 0.1, 0.0, 0.2, 0.0, 0.4]).unwrap();
        assert_eq!(lam, vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(terminal_adjoint(&r, &[0.0; 4]).is_err());
    }

    #[test]
    fn free_adjoint_is_phase_rotation() {
        let s = spin2();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let u = ControlField::zeros(grid, 2);
        let w = 1.1;
        let cst = c(0.3, -0.4);
        let lam = propagate_adjoint(&s, &th(&[w, 1.0]), &u, &[c(0.0, 0.0), -cst]).unwrap();
        for (n, l) in lam.iter().enumerate() {
            let tn = grid.time(n);
            // (X†)₂₂ = +½iω
            let want = -cst * c(0.0, 0.5 * w * (2.0 - tn)).exp();
            assert_eq!(l[0], c(0.0, 0.0));
            assert!((l[1] - want).norm() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn zero_terminal_adjoint_stays_zero() {
        let s = relax6d();
        let u = ControlField::sine(TimeGrid::new(5.0, 50).unwrap(), 2);
        let lam = propagate_adjoint(&s, &s.domain.midpoint(), &u, &[0.0; 6]).unwrap();
        assert!(lam.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn pairing_is_conserved() {
        let s = spin2();
        let u = ControlField::sine(TimeGrid::new(2.0, 200).unwrap(), 2);
        let theta = th(&[0.93, 1.12]);
        let traj = propagate_forward(&s, &theta, &u).unwrap();
        let lam_q = terminal_adjoint(&s, traj.final_state()).unwrap();
        let lam = propagate_adjoint(&s, &theta, &u, &lam_q).unwrap();
        let p0 = inner(&lam[0], &traj.states[0]);
        for (l, cn) in lam.iter().zip(&traj.states) {
            assert!((inner(l, cn) - p0).norm() <= 1e-10 * p0.norm());
        }
    }

    #[test]
    fn unitary_norm_is_kept() {
        let s = spin2();
        let u = ControlField::sine(TimeGrid::new(2.0, 200).unwrap(), 2);
        let traj = propagate_forward(&s, &th(&[1.2, 0.8]), &u).unwrap();
        for st in &traj.states {
            assert!((norm(st) - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn gradient_carries_half_dt_scale() {
        // Against the time-continuous sensitivity δ|f|²/δu₁(t) at the step
        // midpoint: the discrete entry should be ≈ −(Δt/2)·that value.
        let s = spin2();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let u = ControlField::sine(grid, 2);
        let theta = th(&[1.05, 0.95]);
        let (_, g) = loss_and_gradient(&s, &theta, &u).unwrap();
        let n = 77;
        let dt = grid.dt();
        let traj = propagate_forward(&s, &theta, &u).unwrap();
        let target = match &s.target {
            Target::Overlap(t) => t.clone(),
            _ => unreachable!(),
        };
        let f = inner(&target, traj.final_state());
        // C at midpoint, propagate X₁ C(t) to T through the rest of the pulse
        let a = step_exponent(&s, theta.values(), &u, n);
        let half = expm_order8(&a.scaled(0.5)).unwrap();
        let mid = half.mul_vec(&traj.states[n]);
        let mut v = (s.control)(theta.values(), 0).mul_vec(&mid);
        v = half.mul_vec(&v);
        for m in n + 1..grid.steps() {
            v = expm_order8(&step_exponent(&s, theta.values(), &u, m))
                .unwrap()
                .mul_vec(&v);
        }
        let continuous = 2.0 * (f.conj() * inner(&target, &v)).re;
        let expected = -(dt / 2.0) * continuous;
        let got = g.get(0, n);
        assert!(
            (got - expected).abs() <= 1e-4 * expected.abs(),
            "{got} vs {expected}"
        );
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let s = spin2();
        let u = ControlField::zeros(TimeGrid::new(2.0, 10).unwrap(), 3);
        assert!(matches!(
            propagate_forward(&s, &th(&[1.0, 1.0]), &u),
            Err(Error::Shape(_))
        ));
        assert!(ControlField::from_values(TimeGrid::new(1.0, 3).unwrap(), 2, vec![0.0; 5]).is_err());
    }
}
