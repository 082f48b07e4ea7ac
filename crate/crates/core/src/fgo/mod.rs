//! Sliding-window factor graph optimization.

pub mod config;
pub mod factors;
pub mod marginal;
pub mod pipeline;
pub mod solver;
pub mod state;
pub mod values;

pub use factors::{Factor, FactorKind};
pub use solver::{optimize, Graph, SolveReport, SolverConfig};
pub use values::{Key, Values};
pub use config::{ArMode, FgoConfig, LeverMode};
pub use pipeline::{dead_reckon, run_calibration, CalibrationRun, EpochRecord, FixEvent, SensorData, Setup};
