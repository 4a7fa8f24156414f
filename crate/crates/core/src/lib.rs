//! Floquet, Prüfer and Wigner–von Neumann construction machinery for
//! periodic Schrödinger and Jacobi operators with embedded eigenvalues.

pub mod bands;
pub mod construction;
pub mod error;
pub mod floquet;
pub mod jacobi;
pub mod ode;
pub mod potential;
pub mod prufer;
pub mod resonance;
pub mod verify;

pub use bands::{Band, BandStructure, Edge, ScanOptions};
pub use error::{Error, Result};
pub use floquet::{FloquetData, FloquetOptions};
pub use construction::{Envelope, GrowthMode, Schedule, ScalingPolicy};
pub use jacobi::{JacobiFloquet, PeriodicJacobi};
pub use potential::{PeriodicPotential, PotentialSpec, Smoothness};
pub use prufer::{BoundaryCondition, PruferOptions, PruferStart, PruferTrajectory};
pub use verify::{Experiment, ExperimentReport, Inequality, Operator};
