//! Simulation and optimization of detuning-controlled population transfer
//! in a three-level system with always-on couplings.
//!
//! The numerical core is generic over the scalar type (see [`Real`]); the
//! aliases at the crate root fix it to `f64`, which is what the experiment
//! harness and the command-line tool use.

pub mod controls;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod lindblad;
pub mod optimizer;
pub mod policy;
pub mod scalar;

pub use scalar::{Cplx, Real};

pub type DensityMatrix64 = lindblad::DensityMatrix<f64>;
pub type ControlSchedule64 = controls::ControlSchedule<f64>;
pub type NoiseChannel64 = lindblad::NoiseChannel<f64>;
pub type TrajectoryResult64 = lindblad::TrajectoryResult<f64>;
