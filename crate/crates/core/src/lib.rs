//! Classical and quantum linear-Gaussian filtering and fixed-point
//! smoothing.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: RK4 and Euler–Maruyama stepping, PSD checks and exact
//!   Gaussian conditioning.
//! - [`model`]: linear systems built from measurement couplings, the
//!   composite Alice–Bob model and two-mode squeezed priors.
//! - [`estimator`]: the continuous-time filter and fixed-point smoother.
//! - [`analytic`]: closed forms and information diagnostics for the
//!   two-mode squeezed example.
//! - [`simulate`]: seeded Monte Carlo records and the discrete Bayes oracle.
//!
//! Quadratures are normalized so that `[x, y] = 2i` and the vacuum has unit
//! variance per quadrature.

pub mod analytic;
pub mod error;
pub mod estimator;
pub mod model;
pub mod numerics;
pub mod simulate;

pub use error::{Error, Result};
pub use estimator::{
    classical_filter_smoother, CovariancePath, CovarianceSnapshot, CovarianceState, Estimation, FilterState,
    GainSign, MeasurementRecord, SmootherState, SmoothingProblem,
};
pub use model::{
    build_composite, build_subsystem, qnd_transform, tmss_prior, Basis, CompositeModel, CouplingSpec,
    GaussianBelief, LinearModel, Party, QndTransform, SubsystemModel,
};
pub use numerics::{Matrix, Vector};
pub use simulate::{discrete_oracle, monte_carlo_error, simulate_record, DiscreteOracle, MonteCarloReport, SimConfig, TrajectoryBundle};
