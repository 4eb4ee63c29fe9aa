//! Estimating the amplitudes of pure multi-qubit states from rotated-basis
//! measurement statistics.
//!
//! The pipeline is: build a [`plan::MeasurementPlan`], gather
//! [`sampling::ProbabilityEstimate`]s (exact or sampled), assemble a
//! [`system::NonlinearSystem`], solve it with [`solver::solve_nonlinear`] and
//! score the result with [`metrics::ErrorReport`].

pub mod bound;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linear;
pub mod measurement;
pub mod metrics;
pub mod par;
pub mod plan;
pub mod sampling;
pub mod seed;
pub mod solver;
pub mod state;
pub mod system;

pub use error::{Error, Result};
pub use measurement::{Angles, BasisSpec, Target};
pub use par::Exec;
pub use plan::MeasurementPlan;
pub use state::{NamedState, StateVector};
pub use system::NonlinearSystem;
