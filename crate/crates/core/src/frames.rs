//! Lab-frame, rotating-NV-frame and free-evolution Hamiltonians.
//!
//! Rotation convention: `R_y(theta) S_z R_y(theta)^-1 = cos(theta) S_z + sin(theta) S_x`,
//! so a microwave tilt of 90 degrees maps the drive `S_z -> +S_x`. With this
//! choice the co-rotating off-diagonal element of the rotating-frame
//! interaction Hamiltonian is exactly [`crate::effphase::offdiag`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spinalg::{rotation, spin, Axis, Mat2};

/// NV ground-state zero-field splitting, Hz. Documents the carrier choice only.
pub const D_ZFS_HZ: f64 = 2.870e9;
/// Electron gyromagnetic ratio gamma/2pi, Hz/T.
pub const GAMMA_E_HZ_PER_T: f64 = 28.024e9;
/// Reference rig: NV axis tilt from the rotation axis, degrees.
pub const REF_THETA_NV_DEG: f64 = 54.7;
/// Reference rig: rotation rate, Hz.
pub const REF_ROTATION_HZ: f64 = 3.33e3;

/// Geometry and drive parameters of the rotating qubit.
///
/// Angles in radians, rates in rad/s, fields in tesla. Every operation that
/// takes a rotation angle interprets it as the motor angle; the NV azimuth
/// relative to lab x is `motor - azimuth_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigConfig {
    pub theta_nv: f64,
    pub theta_mw: f64,
    pub omega_rot: f64,
    /// Bare drive strength Omega_0.
    pub omega0: f64,
    /// Initial microwave phase.
    pub phi_mw0: f64,
    /// Microwave carrier angular frequency.
    pub omega_mw: f64,
    /// Two-level detuning from resonance in the carrier frame.
    pub detuning: f64,
    /// Applied dc field along lab x.
    pub b_transverse: f64,
    /// Bias field along the rotation axis; only sets the carrier.
    pub b_axial: f64,
    pub gyromagnetic_ratio: f64,
    /// Motor-to-NV azimuth calibration.
    pub azimuth_offset: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl RigConfig {
    /// Reference rig parameters: 54.7 degree NV tilt, 3.33 kHz rotation.
    ///
    /// Drive strength defaults to 2pi x 10 MHz and the bias to 10 mT, with the
    /// carrier placed on the |0> <-> |-1> resonance for that bias.
    pub fn reference() -> Self {
        let b_axial = 0.01;
        RigConfig {
            theta_nv: REF_THETA_NV_DEG.to_radians(),
            theta_mw: 0.0,
            omega_rot: 2.0 * PI * REF_ROTATION_HZ,
            omega0: 2.0 * PI * 10.0e6,
            phi_mw0: 0.0,
            omega_mw: 2.0 * PI * (D_ZFS_HZ - GAMMA_E_HZ_PER_T * b_axial),
            detuning: 0.0,
            b_transverse: 0.0,
            b_axial,
            gyromagnetic_ratio: 2.0 * PI * GAMMA_E_HZ_PER_T,
            azimuth_offset: 0.0,
        }
    }

    pub fn with_theta_mw(mut self, theta_mw: f64) -> Self {
        self.theta_mw = theta_mw;
        self
    }

    pub fn with_theta_nv(mut self, theta_nv: f64) -> Self {
        self.theta_nv = theta_nv;
        self
    }

    pub fn with_b_transverse(mut self, b: f64) -> Self {
        self.b_transverse = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| v.is_finite() && (0.0..=PI).contains(&v);
        if !in_range(self.theta_nv) {
            return Err(Error::InvalidInput(format!(
                "theta_nv = {} deg outside [0, 180]",
                self.theta_nv.to_degrees()
            )));
        }
        if !in_range(self.theta_mw) {
            return Err(Error::InvalidInput(format!(
                "theta_mw = {} deg outside [0, 180]",
                self.theta_mw.to_degrees()
            )));
        }
        if !(self.omega_rot.is_finite() && self.omega_rot >= 0.0) {
            return Err(Error::InvalidInput("omega_rot must be >= 0".into()));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::InvalidInput("omega0 must be > 0".into()));
        }
        for (name, v) in [
            ("phi_mw0", self.phi_mw0),
            ("omega_mw", self.omega_mw),
            ("detuning", self.detuning),
            ("b_transverse", self.b_transverse),
            ("b_axial", self.b_axial),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
            ("azimuth_offset", self.azimuth_offset),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// NV azimuth relative to lab x at the given motor angle.
    #[inline]
    pub fn nv_azimuth(&self, motor_angle: f64) -> f64 {
        motor_angle - self.azimuth_offset
    }

    /// Rotation angle advanced over `dt` seconds.
    #[inline]
    pub fn angle_after(&self, dt: f64) -> f64 {
        self.omega_rot * dt
    }

    pub fn rotation_period(&self) -> f64 {
        if self.omega_rot > 0.0 {
            2.0 * PI / self.omega_rot
        } else {
            f64::INFINITY
        }
    }
}

/// `R_NV = R_z(phi) R_y(theta_nv)`.
pub fn nv_rotation_operator(theta_nv: f64, phi: f64) -> Mat2 {
    rotation(Axis::Z, phi) * rotation(Axis::Y, theta_nv)
}

/// Linearly polarized drive tilted by `theta_mw` from z:
/// `R_y(theta_mw) omega0 S_z cos(omega_mw t - phi_mw0) R_y(theta_mw)^-1`.
pub fn microwave_hamiltonian(
    theta_mw: f64,
    omega0: f64,
    omega_mw: f64,
    phi_mw0: f64,
    t: f64,
) -> Mat2 {
    let r = rotation(Axis::Y, theta_mw);
    let amp = omega0 * (omega_mw * t - phi_mw0).cos();
    r * spin(Axis::Z).scale_re(amp) * r.dagger()
}

/// Drive Hamiltonian seen by the NV at motor angle `phi`: `R_NV^-1 H_mw R_NV`.
///
/// `phi` and `t` are independent so that stationary park-angle studies can
/// hold the angle fixed while the carrier runs.
pub fn interaction_hamiltonian(cfg: &RigConfig, phi: f64, t: f64) -> Mat2 {
    let r_nv = nv_rotation_operator(cfg.theta_nv, cfg.nv_azimuth(phi));
    let h_mw = microwave_hamiltonian(cfg.theta_mw, cfg.omega0, cfg.omega_mw, cfg.phi_mw0, t);
    r_nv.dagger() * h_mw * r_nv
}

/// Instantaneous splitting shift `detuning + gamma B_x sin(theta_nv) cos(phi_nv)`.
///
/// Only the projection of the lab-x field on the NV axis is kept.
pub fn free_evolution_detuning(cfg: &RigConfig, phi: f64) -> f64 {
    cfg.detuning
        + cfg.gyromagnetic_ratio * cfg.b_transverse * cfg.theta_nv.sin() * cfg.nv_azimuth(phi).cos()
}

/// Carrier-frame Hamiltonian with the microwave off: `delta(phi) S_z`.
pub fn free_evolution_hamiltonian(cfg: &RigConfig, phi: f64) -> Mat2 {
    spin(Axis::Z).scale_re(free_evolution_detuning(cfg, phi))
}
