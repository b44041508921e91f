//! Neural critics for Hamilton–Jacobi–Bellman equations on a Hilbert space of
//! sine coefficients, with exact oracles for the linear–quadratic heat problem
//! and a finite-difference Monte Carlo oracle for stochastic Burgers.

pub mod error;
pub mod eval;
pub mod hgno;
pub mod measures;
pub mod oracle;
mod par;
pub mod residual;
pub mod rng;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use hgno::{Activation, ActorNet, Critic, CriticJet, CriticNet, Network, ParamVector};
pub use measures::{GaussianMeasure, MeasureId, SpectralDynamics};
pub use oracle::{lq_solve, oracle_control, oracle_value, LqSolution, QuadraticCritic};
pub use residual::{NoiseId, NoiseModel, Preset, ProblemKind, ProblemSpec};
pub use spectral::{Basis, HVec};
pub use train::{GradientKind, Schedule, TrainConfig, TrainLog, TrainState, Trainer};
