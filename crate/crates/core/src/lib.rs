//! Spectral toolkit for linear SPDEs driven by α-stable Lévy noise and for
//! the associated Zakai filtering equation with point-process observations.

pub mod error;
pub mod exec;
pub mod filtering;
pub mod grid;
pub mod kernel;
pub mod lp_norms;
pub mod quadrature;
pub mod random_measure;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod symbol;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{Form, FrequencyGrid, GridShape, SpectralField};
pub use symbol::{
    calibrate_constant, check_assumptions, direct_symbol, evaluate_symbol, AngularMeasure, AssumptionReport,
    Coefficients, StableModel, TimeProfile,
};
