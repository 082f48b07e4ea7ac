//! Tightly coupled GNSS/IMU/odometer online calibration.
//!
//! A sliding-window factor graph jointly estimates the IMU navigation state,
//! receiver clock drift, single-differenced carrier ambiguities, odometer
//! scale factors and the IMU-odometer extrinsic transform from raw
//! double-differenced GNSS, IMU and wheel odometer measurements.
//!
//! Conventions: Hamilton scalar-first quaternions rotating body vectors into
//! the reference frame, right perturbations on rotations, ENU navigation
//! frame, right-forward-up vehicle mount frame.

pub mod ambiguity;
pub mod error;
pub mod fgo;
pub mod geomath;
pub mod gnss;
pub mod harness;
pub mod observability;
pub mod parallel;
pub mod preintegration;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
