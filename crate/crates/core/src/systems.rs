//! The benchmark ensembles.
//!
//! Every system is bilinear: `X(θ, u) = X₀(θ) + Σₗ uₗ Xₗ(θ)`. A [`SystemSpec`]
//! stores the drift `X₀` and the control matrices `Xₗ` as plain functions of
//! `θ`, along with the parameter box, the initial state and the target.
//!
//! | id        | N | field   | θ                                   |
//! |-----------|---|---------|-------------------------------------|
//! | `spin2`   | 2 | complex | (ω, ε)                              |
//! | `lambda3` | 3 | complex | (ω, ε)                              |
//! | `relax3d` | 4 | real    | (ε, J, ξ)                           |
//! | `relax6d` | 6 | real    | (ε₁, ε₂, ω₁, ω₂, ξ_a, ξ_c/ξ_a)      |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, Matrix, Scalar, Vector};

/// Names of the four benchmark ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Spin2,
    Lambda3,
    Relax3d,
    Relax6d,
}

impl SystemId {
    pub const ALL: [SystemId; 4] = [
        SystemId::Spin2,
        SystemId::Lambda3,
        SystemId::Relax3d,
        SystemId::Relax6d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::Spin2 => "spin2",
            SystemId::Lambda3 => "lambda3",
            SystemId::Relax3d => "relax3d",
            SystemId::Relax6d => "relax6d",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SystemId::Spin2 => "two-level spins, Larmor and field-amplitude inhomogeneity",
            SystemId::Lambda3 => "three-level Lambda atoms, frequency and amplitude inhomogeneity",
            SystemId::Relax3d => "coupled spin pair with relaxation, 3 uncertain parameters",
            SystemId::Relax6d => {
                "coupled spin pair with cross-correlated relaxation, 6 uncertain parameters"
            }
        }
    }

    /// Calls `visitor` with the concrete spec, whatever its scalar field.
    pub fn visit<V: SystemVisitor>(self, visitor: V) -> V::Output {
        match self {
            SystemId::Spin2 => visitor.visit(&spin2()),
            SystemId::Lambda3 => visitor.visit(&lambda3()),
            SystemId::Relax3d => visitor.visit(&relax3d()),
            SystemId::Relax6d => visitor.visit(&relax6d()),
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownSystem(s.to_string()))
    }
}

/// Generic code over both scalar fields, dispatched from a [`SystemId`].
pub trait SystemVisitor {
    type Output;
    fn visit<S: Scalar>(self, spec: &SystemSpec<S>) -> Self::Output;
}

/// A box `Θ = Π [lowerᵢ, upperᵢ]` carrying the uniform law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Convenience constructor from `(lower, upper)` pairs.
    pub fn from_ranges(ranges: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            ranges.iter().map(|r| r.0).collect(),
            ranges.iter().map(|r| r.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn midpoint(&self) -> ParameterSample {
        ParameterSample(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    pub fn contains(&self, theta: &ParameterSample) -> bool {
        self.check(theta).is_ok()
    }

    pub fn check(&self, theta: &ParameterSample) -> Result<()> {
        if theta.0.len() != self.dim() {
            return Err(Error::Shape(format!(
                "parameter has {} coordinates, domain has {}",
                theta.0.len(),
                self.dim()
            )));
        }
        for (index, ((&value, &lower), &upper)) in
            theta.0.iter().zip(&self.lower).zip(&self.upper).enumerate()
        {
            if !(lower <= value && value <= upper) {
                return Err(Error::OutOfDomain {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }
}

/// One drawn parameter vector `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSample(pub Vec<f64>);

impl ParameterSample {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterSample {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// What the final state is scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<S> {
    /// Fidelity `|⟨C_target, C(T)⟩|`, loss `½(1 − |⟨C_target, C(T)⟩|²)`.
    Overlap(Vector<S>),
    /// Fidelity is the real coordinate `C(T)_j`, loss `1 − C(T)_j`.
    Coordinate(usize),
}

/// One benchmark ensemble.
///
/// The matrix-valued fields are plain function pointers so custom systems
/// (for tests, or for a reduced model) can be assembled from closures.
#[derive(Clone)]
pub struct SystemSpec<S> {
    pub name: &'static str,
    pub domain: ParameterDomain,
    pub initial_state: Vector<S>,
    pub target: Target<S>,
    pub channels: usize,
    pub default_time: f64,
    pub default_steps: usize,
    /// `X₀(θ)`.
    pub drift: fn(&[f64]) -> Matrix<S>,
    /// `Xₗ(θ) = ∂X/∂uₗ`.
    pub control: fn(&[f64], usize) -> Matrix<S>,
    /// Best fidelity reachable by a control tuned for `θ` alone.
    pub best_fidelity: fn(&[f64]) -> f64,
}

impl<S: Scalar> fmt::Debug for SystemSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("complex", &S::IS_COMPLEX)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> SystemSpec<S> {
    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn is_complex(&self) -> bool {
        S::IS_COMPLEX
    }

    /// `∂X/∂uₗ` at `θ`.
    pub fn control_direction(&self, theta: &ParameterSample, channel: usize) -> Result<Matrix<S>> {
        self.domain.check(theta)?;
        if channel >= self.channels {
            return Err(Error::Shape(format!(
                "channel {channel} out of range for {} channels",
                self.channels
            )));
        }
        Ok((self.control)(theta.values(), channel))
    }

    /// `X(θ, u) = X₀(θ) + Σₗ uₗ Xₗ(θ)`.
    pub fn generator(&self, theta: &ParameterSample, u: &[f64]) -> Result<Matrix<S>> {
        self.domain.check(theta)?;
        if u.len() != self.channels {
            return Err(Error::Shape(format!(
                "{} control values for {} channels",
                u.len(),
                self.channels
            )));
        }
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("control values".into()));
        }
        Ok(self.generator_unchecked(theta.values(), u))
    }

    pub(crate) fn generator_unchecked(&self, theta: &[f64], u: &[f64]) -> Matrix<S> {
        let mut x = (self.drift)(theta);
        for (l, &ul) in u.iter().enumerate() {
            x = x.add_scaled(&(self.control)(theta, l), ul);
        }
        x
    }

    /// `F_max(θ)`, always in `(0, 1]` inside the domain.
    pub fn f_max(&self, theta: &ParameterSample) -> Result<f64> {
        self.domain.check(theta)?;
        let f = (self.best_fidelity)(theta.values());
        if f.is_finite() && f > 0.0 && f <= 1.0 {
            Ok(f)
        } else {
            Err(Error::NonFinite(format!(
                "best attainable fidelity {f} for {theta:?}"
            )))
        }
    }

    /// Fidelity of a final state.
    pub fn target_overlap(&self, final_state: &[S]) -> Result<f64> {
        if final_state.len() != self.dim() {
            return Err(Error::Shape(format!(
                "state has {} coefficients, system has {}",
                final_state.len(),
                self.dim()
            )));
        }
        Ok(match &self.target {
            Target::Overlap(target) => inner(target, final_state).modulus(),
            Target::Coordinate(j) => final_state[*j].re(),
        })
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unit<S: Scalar>(n: usize, j: usize) -> Vector<S> {
    let mut v = vec![S::zero(); n];
    v[j] = S::one();
    v
}

fn always_one(_: &[f64]) -> f64 {
    1.0
}

/// Two-level spins, `θ = (ω, ε)`.
///
/// The off-diagonal pair is written in skew-Hermitian form,
/// `X₂₁ = −conj(X₁₂) = −½ε(u₂ + i u₁)`, so the evolution is unitary.
pub fn spin2() -> SystemSpec<Complex64> {
    fn drift(theta: &[f64]) -> Matrix<Complex64> {
        let w = theta[0];
        Matrix::from_diagonal(&[c(0.0, 0.5 * w), c(0.0, -0.5 * w)])
    }
    fn control(theta: &[f64], l: usize) -> Matrix<Complex64> {
        let e = theta[1];
        let mut m = Matrix::zeros(2);
        match l {
            0 => {
                m[(0, 1)] = c(0.0, -0.5 * e);
                m[(1, 0)] = c(0.0, -0.5 * e);
            }
            _ => {
                m[(0, 1)] = c(0.5 * e, 0.0);
                m[(1, 0)] = c(-0.5 * e, 0.0);
            }
        }
        m
    }
    SystemSpec {
        name: "spin2",
        domain: ParameterDomain::from_ranges(&[(0.8, 1.2), (0.8, 1.2)]).unwrap(),
        initial_state: unit(2, 0),
        target: Target::Overlap(unit(2, 1)),
        channels: 2,
        default_time: 2.0,
        default_steps: 200,
        drift,
        control,
        best_fidelity: always_one,
    }
}

/// Three-level Λ atoms, `θ = (ω, ε)`, starting from the uniform superposition.
pub fn lambda3() -> SystemSpec<Complex64> {
    fn drift(theta: &[f64]) -> Matrix<Complex64> {
        let w = theta[0];
        Matrix::from_diagonal(&[c(0.0, -1.5 * w), c(0.0, -w), c(0.0, 0.0)])
    }
    fn control(theta: &[f64], l: usize) -> Matrix<Complex64> {
        let e = theta[1];
        let mut m = Matrix::zeros(3);
        // u₁ couples levels 2–3, u₂ couples levels 1–3
        let k = if l == 0 { 1 } else { 0 };
        m[(k, 2)] = c(0.0, -e);
        m[(2, k)] = c(0.0, -e);
        m
    }
    let a = 1.0 / 3f64.sqrt();
    SystemSpec {
        name: "lambda3",
        domain: ParameterDomain::from_ranges(&[(0.8, 1.2), (0.8, 1.2)]).unwrap(),
        initial_state: vec![c(a, 0.0); 3],
        target: Target::Overlap(unit(3, 2)),
        channels: 2,
        default_time: 2.0,
        default_steps: 200,
        drift,
        control,
        best_fidelity: always_one,
    }
}

/// Coupled spin pair with relaxation, `θ = (ε, J, ξ)`; target is `c₄(T)`.
pub fn relax3d() -> SystemSpec<f64> {
    fn drift(theta: &[f64]) -> Matrix<f64> {
        let (j, xi) = (theta[1], theta[2]);
        Matrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0],
            [0.0, -xi, -j, 0.0],
            [0.0, j, -xi, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap()
    }
    fn control(theta: &[f64], l: usize) -> Matrix<f64> {
        let e = theta[0];
        let mut m = Matrix::zeros(4);
        if l == 0 {
            m[(0, 1)] = -e;
            m[(1, 0)] = e;
        } else {
            m[(2, 3)] = -e;
            m[(3, 2)] = e;
        }
        m
    }
    fn best(theta: &[f64]) -> f64 {
        let r = theta[2] / theta[1];
        (1.0 + r * r).sqrt() - r
    }
    SystemSpec {
        name: "relax3d",
        domain: ParameterDomain::from_ranges(&[(0.9, 1.1), (0.5, 1.5), (0.0, 2.0)]).unwrap(),
        initial_state: unit(4, 0),
        target: Target::Coordinate(3),
        channels: 2,
        default_time: 7.0 * std::f64::consts::PI / 6.0,
        default_steps: 200,
        drift,
        control,
        best_fidelity: best,
    }
}

/// Scalar coupling of the cross-correlated model.
pub const RELAX6D_COUPLING: f64 = 1.0;

/// Coupled spin pair with cross-correlated relaxation,
/// `θ = (ε₁, ε₂, ω₁, ω₂, ξ_a, ξ_c/ξ_a)`; target is `c₆(T)`.
pub fn relax6d() -> SystemSpec<f64> {
    fn drift(theta: &[f64]) -> Matrix<f64> {
        let (w1, w2, xa) = (theta[2], theta[3], theta[4]);
        let xc = xa * theta[5];
        let j = RELAX6D_COUPLING;
        Matrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, -xa, w1, -j, -xc, 0.0],
            [0.0, -w1, -xa, -xc, j, 0.0],
            [0.0, j, -xc, -xa, w2, 0.0],
            [0.0, -xc, -j, -w2, -xa, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap()
    }
    fn control(theta: &[f64], l: usize) -> Matrix<f64> {
        let mut m = Matrix::zeros(6);
        if l == 0 {
            let e = theta[0];
            m[(0, 1)] = -e;
            m[(1, 0)] = e;
            m[(4, 5)] = e;
            m[(5, 4)] = -e;
        } else {
            let e = theta[1];
            m[(0, 2)] = e;
            m[(2, 0)] = -e;
            m[(3, 5)] = -e;
            m[(5, 3)] = e;
        }
        m
    }
    fn best(theta: &[f64]) -> f64 {
        let xa = theta[4];
        let xc = xa * theta[5];
        let j = RELAX6D_COUPLING;
        let eta = ((xa * xa - xc * xc) / (j * j + xc * xc)).sqrt();
        (1.0 + eta * eta).sqrt() - eta
    }
    SystemSpec {
        name: "relax6d",
        domain: ParameterDomain::from_ranges(&[
            (0.9, 1.1),
            (0.9, 1.1),
            (0.0, 1.0),
            (0.0, 1.0),
            (0.75, 1.25),
            (0.7, 0.9),
        ])
        .unwrap(),
        initial_state: unit(6, 0),
        target: Target::Coordinate(5),
        channels: 2,
        default_time: 5.0,
        default_steps: 200,
        drift,
        control,
        best_fidelity: best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn theta(v: &[f64]) -> ParameterSample {
        ParameterSample(v.to_vec())
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for id in SystemId::ALL {
            assert_eq!(id.as_str().parse::<SystemId>().unwrap(), id);
        }
        assert!(matches!(
            "spin3".parse::<SystemId>(),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn spin2_drift_only() {
        let x = spin2().generator(&theta(&[1.0, 1.0]), &[0.0, 0.0]).unwrap();
        let want = Matrix::from_diagonal(&[c(0.0, 0.5), c(0.0, -0.5)]);
        assert_eq!(x, want);
    }

    #[test]
    fn spin2_off_diagonal_is_skew_hermitian() {
        let x = spin2().generator(&theta(&[1.0, 0.9]), &[0.7, -0.3]).unwrap();
        // upper-right 0.5ε(u₂ − i u₁), lower-left −0.5ε(u₂ + i u₁)
        assert!((x[(0, 1)] - c(0.45 * -0.3, -0.45 * 0.7)).norm() < 1e-15);
        assert!((x[(1, 0)] - c(-0.45 * -0.3, -0.45 * 0.7)).norm() < 1e-15);
    }

    #[test]
    fn relax3d_drift_only() {
        let x = relax3d()
            .generator(&theta(&[1.0, 1.0, 0.0]), &[0.0, 0.0])
            .unwrap();
        let want = Matrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(x, want);
    }

    #[test]
    fn relax6d_uses_ratio_for_cross_correlation() {
        let x = relax6d()
            .generator(&theta(&[1.0, 1.0, 0.0, 0.0, 1.0, 0.8]), &[0.0, 0.0])
            .unwrap();
        let xc = 0.8;
        let want = Matrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, -1.0, -xc, 0.0],
            [0.0, 0.0, -1.0, -xc, 1.0, 0.0],
            [0.0, 1.0, -xc, -1.0, 0.0, 0.0],
            [0.0, -xc, -1.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(x, want);
    }

    #[test]
    fn relax6d_control_pattern() {
        let s = relax6d();
        let th = theta(&[1.05, 0.95, 0.5, 0.5, 1.0, 0.8]);
        let x = s.generator(&th, &[2.0, 3.0]).unwrap();
        let x0 = s.generator(&th, &[0.0, 0.0]).unwrap();
        let d = &x - &x0;
        assert_eq!(d[(0, 1)], -1.05 * 2.0);
        assert_eq!(d[(1, 0)], 1.05 * 2.0);
        assert_eq!(d[(0, 2)], 0.95 * 3.0);
        assert_eq!(d[(2, 0)], -0.95 * 3.0);
        assert_eq!(d[(3, 5)], -0.95 * 3.0);
        assert_eq!(d[(5, 3)], 0.95 * 3.0);
        assert_eq!(d[(4, 5)], 1.05 * 2.0);
        assert_eq!(d[(5, 4)], -1.05 * 2.0);
    }

    #[test]
    fn f_max_values() {
        assert_eq!(spin2().f_max(&theta(&[0.9, 1.1])).unwrap(), 1.0);
        assert_eq!(lambda3().f_max(&theta(&[0.9, 1.1])).unwrap(), 1.0);
        let r = relax3d();
        assert_eq!(r.f_max(&theta(&[1.0, 1.0, 0.0])).unwrap(), 1.0);
        assert!((r.f_max(&theta(&[1.0, 1.0, 0.75])).unwrap() - 0.5).abs() < 1e-15);
        assert!((r.f_max(&theta(&[1.0, 0.8, 0.6])).unwrap() - 0.5).abs() < 1e-15);
        // ξ_c = ξ_a is outside the box; call the formula directly
        let f = (relax6d().best_fidelity)(&[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn target_overlap_examples() {
        let s = spin2();
        assert_eq!(s.target_overlap(&[c(0.0, 0.0), c(0.0, 1.0)]).unwrap(), 1.0);
        let l = lambda3();
        let a = 1.0 / 3f64.sqrt();
        let f = l.target_overlap(&l.initial_state).unwrap();
        assert!((f - a).abs() < 1e-15);
        assert_eq!(relax3d().target_overlap(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            relax6d().target_overlap(&[0.0, 0.0, 0.0, 0.0, 0.0, -0.25]).unwrap(),
            -0.25
        );
        assert!(matches!(
            relax3d().target_overlap(&[1.0, 0.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_out_of_domain_parameters() {
        let err = spin2().generator(&theta(&[1.3, 1.0]), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { index: 0, .. }));
        assert!(relax3d().f_max(&theta(&[1.0, 1.0])).is_err());
        assert!(spin2().generator(&theta(&[1.0, 1.0]), &[0.0]).is_err());
        assert!(spin2()
            .generator(&theta(&[1.0, 1.0]), &[f64::INFINITY, 0.0])
            .is_err());
    }

    #[test]
    fn initial_states_are_normalised() {
        assert!((crate::linalg::norm(&spin2().initial_state) - 1.0).abs() < 1e-15);
        assert!((crate::linalg::norm(&lambda3().initial_state) - 1.0).abs() < 1e-15);
        assert_eq!(relax3d().initial_state, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(relax6d().initial_state, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(ParameterDomain::from_ranges(&[(1.0, 1.0)]).is_err());
        assert!(ParameterDomain::from_ranges(&[]).is_err());
        assert!(ParameterDomain::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    fn point_in(domain: &ParameterDomain) -> impl Strategy<Value = ParameterSample> {
        let ranges: Vec<_> = domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(&a, &b)| a..=b)
            .collect();
        ranges.prop_map(ParameterSample)
    }

    fn symmetric_part_max_eig(x: &Matrix<f64>) -> f64 {
        // Gershgorin is too loose here; use power iteration on (S + σI) shifted
        // so the largest eigenvalue of S dominates.
        let n = x.dim();
        let sym = Matrix::from_vec(
            n,
            (0..n * n)
                .map(|k| 0.5 * (x[(k / n, k % n)] + x[(k % n, k / n)]))
                .collect(),
        )
        .unwrap();
        let shift = sym.one_norm();
        let mut shifted = sym.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        for _ in 0..2000 {
            let w = shifted.mul_vec(&v);
            let nw = crate::linalg::norm(&w);
            v = w.into_iter().map(|x| x / nw).collect();
        }
        let w = sym.mul_vec(&v);
        crate::linalg::inner(&v, &w)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spin2_and_lambda3_are_skew_hermitian(
            th in point_in(&spin2().domain),
            u1 in -5.0f64..5.0,
            u2 in -5.0f64..5.0,
        ) {
            for s in [spin2(), lambda3()] {
                let x = s.generator(&th, &[u1, u2]).unwrap();
                let herm = &x + &x.conj_transpose();
                prop_assert!(herm.max_abs() == 0.0);
            }
        }

        #[test]
        fn generators_are_affine_in_controls(
            th in point_in(&relax6d().domain),
            u1 in -5.0f64..5.0,
            u2 in -5.0f64..5.0,
        ) {
            fn check<S: Scalar>(s: &SystemSpec<S>, th: &ParameterSample, u: [f64; 2]) -> bool {
                let x = s.generator(th, &u).unwrap();
                let x0 = s.generator(th, &[0.0, 0.0]).unwrap();
                let e1 = &s.generator(th, &[1.0, 0.0]).unwrap() - &x0;
                let e2 = &s.generator(th, &[0.0, 1.0]).unwrap() - &x0;
                x == x0.add_scaled(&e1, u[0]).add_scaled(&e2, u[1])
            }
            let d = th.values();
            let th2 = ParameterSample(vec![0.8 + 0.4 * d[2], 0.8 + 0.4 * d[3]]);
            let th3 = ParameterSample(vec![d[0], 0.5 + d[2], 2.0 * d[3]]);
            prop_assert!(check(&spin2(), &th2, [u1, u2]));
            prop_assert!(check(&lambda3(), &th2, [u1, u2]));
            prop_assert!(check(&relax3d(), &th3, [u1, u2]));
            prop_assert!(check(&relax6d(), &th, [u1, u2]));
        }

        #[test]
        fn relaxation_models_are_dissipative(
            th6 in point_in(&relax6d().domain),
            th3 in point_in(&relax3d().domain),
            u1 in -5.0f64..5.0,
            u2 in -5.0f64..5.0,
        ) {
            let x6 = relax6d().generator(&th6, &[u1, u2]).unwrap();
            prop_assert!(symmetric_part_max_eig(&x6) <= 1e-9);
            let x3 = relax3d().generator(&th3, &[u1, u2]).unwrap();
            prop_assert!(symmetric_part_max_eig(&x3) <= 1e-9);
        }

        #[test]
        fn f_max_in_unit_interval(
            th6 in point_in(&relax6d().domain),
            th3 in point_in(&relax3d().domain),
        ) {
            let f6 = relax6d().f_max(&th6).unwrap();
            let f3 = relax3d().f_max(&th3).unwrap();
            prop_assert!(f6 > 0.0 && f6 <= 1.0);
            prop_assert!(f3 > 0.0 && f3 <= 1.0);
        }
    }
}
