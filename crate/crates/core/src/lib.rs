//! Tilt-stabilized delay-and-sum beamforming for in-air 3D sonar.
//!
//! The processing chain mirrors a real sensor: inertial samples are fused
//! into an elevation tilt estimate, a precomputed steering matrix that
//! counter-rotates the scan plane is selected from a bank, the raw
//! microphone frame is matched-filtered and beamformed into a range ×
//! azimuth acoustic image, and a calibrated gain factor offsets the
//! emitter's directivity loss. A point-reflector simulator stands in for
//! the hardware so that every stage can be exercised and validated on a
//! desk.

pub mod ahrs;
pub mod array;
pub mod beamformer;
pub mod bench;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod gain;
pub mod pipeline;
pub mod seed;
pub mod simulator;
pub mod steering;

pub use ahrs::{AttitudeEstimate, ImuSample, Quaternion};
pub use array::{DirectivityModel, MicArray, Vec3};
pub use beamformer::AcousticImage;
pub use dsp::{EmissionSpec, RawFrame, Signal};
pub use error::{Error, Result};
pub use gain::GainTable;
pub use steering::{DelayMatrix, DirectionGrid, Selection, SteeringBank};

/// Gravitational acceleration used by the IMU simulator and AHRS tests, m/s².
pub const GRAVITY: f64 = 9.81;
