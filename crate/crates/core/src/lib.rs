//! Robust control fields for inhomogeneous quantum ensembles.
//!
//! A single piecewise-constant control `u(t)` drives every member of an
//! ensemble whose dynamics `dC/dt = X(θ, u) C` depend on an uncertain
//! parameter `θ`. The goal is to minimise the average loss over `θ`. Instead
//! of a fixed quadrature grid, each optimizer iteration draws a fresh
//! mini-batch of parameters and follows the mean of their exact adjoint
//! gradients (SGD, Adam, or heavy-ball momentum).
//!
//! ```
//! use ensemble_control::dynamics::{loss_and_gradient, ControlField, TimeGrid};
//! use ensemble_control::systems::{spin2, ParameterSample};
//!
//! let spec = spin2();
//! let grid = TimeGrid::new(spec.default_time, spec.default_steps).unwrap();
//! let u = ControlField::sine(grid, spec.channels);
//! let theta = ParameterSample(vec![1.0, 1.0]);
//! let (loss, grad) = loss_and_gradient(&spec, &theta, &u).unwrap();
//! assert!(loss > 0.0 && loss < 0.5);
//! assert_eq!(grad.values.len(), 2 * 200);
//! ```
//!
//! Modules, bottom up:
//!
//! - [`linalg`]: dense matrices, `e^A` and its Fréchet derivative
//! - [`systems`]: the four benchmark ensembles
//! - [`dynamics`]: forward/adjoint propagation and gradients
//! - [`sampling`]: seeded draws, tensor grids, the frozen test set
//! - [`optimize`]: SGD / Adam / momentum / fixed-grid descent
//! - [`evaluate`]: relative fidelity errors, traces, gradient histograms
//! - [`experiment`]: configuration, manifests and output files used by the CLI

pub mod dynamics;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod linalg;
pub mod optimize;
pub mod sampling;
pub mod systems;

pub use error::{Error, Result};

/// The guide under `book/src`, compiled so its snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    mod gradients {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
