//! Spin qubit in a physically rotating frame, driven by a tilted linearly
//! polarized microwave field.
//!
//! - [`spinalg`]: 2x2 complex algebra and SU(2) rotations
//! - [`frames`]: Hamiltonians in the lab and rotating-NV frames
//! - [`effphase`]: analytic effective drive amplitude/phase and the
//!   nonlinear spin-echo phase
//! - [`wirefield`]: wire position to microwave tilt
//! - [`pulsesim`]: time-domain simulation of rotation-synchronized pulse sequences
//! - [`analysis`]: Rabi-frequency extraction and fitting of calibration and fringe data

pub mod analysis;
pub mod effphase;
pub mod error;
pub mod frames;
pub mod pulsesim;
pub mod spinalg;
pub mod wirefield;

pub use error::{Error, Result};
pub use frames::RigConfig;
pub use spinalg::{Mat2, SpinState};
