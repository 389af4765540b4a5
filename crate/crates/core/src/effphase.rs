//! Effective drive amplitude and phase of the rotating qubit under the
//! rotating-wave approximation, and the nonlinear phase sampled by a spin echo.
//!
//! The complex drive element is
//!
//! ```text
//! z(phi) = omega0 e^{-i phi0} (cos th_nv cos phi sin th_mw - cos th_mw sin th_nv
//!                              + i sin th_mw sin phi) / 2
//! ```
//!
//! with `phi` the NV azimuth. Its modulus is the Rabi frequency and its
//! argument the effective phase `phi_eff`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::frames::RigConfig;

/// Below `AMPLITUDE_FLOOR * omega0` the effective phase is undefined.
pub const AMPLITUDE_FLOOR: f64 = 1e-9;

/// Largest accepted jump between adjacent unwrapped samples.
const TARGET_JUMP: f64 = PI / 2.0;
const MAX_TRACE_SAMPLES: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    /// Motor angle, rad.
    pub phi: f64,
    /// Rabi amplitude `|z|`, rad/s.
    pub omega: f64,
    /// Unwrapped effective phase, rad.
    pub phi_eff: f64,
}

/// Continuous effective-phase curve over a range of rotation angles.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    /// Strictly increasing in `phi`; `phi_eff` re-zeroed at the first sample.
    pub samples: Vec<DriveSample>,
    /// Principal argument at the first sample, subtracted from every sample.
    pub unwrap_reference: f64,
}

impl PhaseTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Unwrapped phase change from the first to the last sample.
    pub fn net_change(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.phi_eff)
    }

    /// Phase including the reference; congruent to `Arg z` mod 2pi.
    pub fn absolute_phase(&self, index: usize) -> f64 {
        self.samples[index].phi_eff + self.unwrap_reference
    }

    pub fn max_jump(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].phi_eff - w[0].phi_eff).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `phi_deg,omega_normalized,phi_eff_rad`; amplitude is
    /// normalized to the trace maximum.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let max = self.samples.iter().map(|s| s.omega).fold(0.0, f64::max);
        let norm = if max > 0.0 { max } else { 1.0 };
        writeln!(w, "phi_deg,omega_normalized,phi_eff_rad")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.6},{:.9},{:.9}",
                s.phi.to_degrees(),
                s.omega / norm,
                s.phi_eff
            )?;
        }
        Ok(())
    }
}

/// Off-diagonal RWA drive element `z(phi)` at motor angle `phi`.
pub fn offdiag(cfg: &RigConfig, phi: f64) -> C64 {
    let phi = cfg.nv_azimuth(phi);
    let (s_nv, c_nv) = cfg.theta_nv.sin_cos();
    let (s_mw, c_mw) = cfg.theta_mw.sin_cos();
    let (s_phi, c_phi) = phi.sin_cos();
    let w = C64::new(c_nv * c_phi * s_mw - c_mw * s_nv, s_mw * s_phi);
    C64::from_polar(0.5 * cfg.omega0, -cfg.phi_mw0) * w
}

/// Effective Rabi frequency `|z(phi)|`, rad/s.
pub fn rabi_amplitude(cfg: &RigConfig, phi: f64) -> f64 {
    offdiag(cfg, phi).norm()
}

fn checked_offdiag(cfg: &RigConfig, phi: f64) -> Result<C64> {
    let z = offdiag(cfg, phi);
    let amplitude = z.norm();
    if amplitude < AMPLITUDE_FLOOR * cfg.omega0 {
        return Err(Error::DegenerateDrive {
            phi_deg: phi.to_degrees(),
            amplitude,
        });
    }
    Ok(z)
}

/// Principal-value effective phase in (-pi, pi].
pub fn effective_phase(cfg: &RigConfig, phi: f64) -> Result<f64> {
    let z = checked_offdiag(cfg, phi)?;
    let a = z.arg();
    Ok(if a == -PI { PI } else { a })
}

/// Reject ranges that pass through an exact zero of the drive.
///
/// `Im z` vanishes only at NV azimuth 0 or pi (or everywhere when
/// `theta_mw = 0`), so checking those points covers every zero.
fn check_zero_crossing(cfg: &RigConfig, start: f64, end: f64) -> Result<()> {
    let (lo, hi) = (start.min(end), start.max(end));
    let nv_lo = cfg.nv_azimuth(lo);
    let nv_hi = cfg.nv_azimuth(hi);
    let first = (nv_lo / PI).ceil() as i64;
    let last = (nv_hi / PI).floor() as i64;
    for k in first..=last.min(first + 4) {
        let phi = k as f64 * PI + cfg.azimuth_offset;
        checked_offdiag(cfg, phi)?;
    }
    if cfg.theta_mw.sin().abs() < AMPLITUDE_FLOOR {
        checked_offdiag(cfg, lo)?;
    }
    Ok(())
}

fn sample_trace(cfg: &RigConfig, start: f64, end: f64, n: usize) -> Result<PhaseTrace> {
    let step = (end - start) / (n - 1) as f64;
    let mut samples = Vec::with_capacity(n);
    let mut prev_arg = 0.0;
    let mut acc = 0.0;
    let mut reference = 0.0;
    for k in 0..n {
        let phi = if k == n - 1 {
            end
        } else {
            start + step * k as f64
        };
        let z = checked_offdiag(cfg, phi)?;
        let arg = z.arg();
        if k == 0 {
            reference = arg;
        } else {
            // nearest branch
            let mut d = arg - prev_arg;
            d -= TAU * (d / TAU).round();
            acc += d;
        }
        prev_arg = arg;
        samples.push(DriveSample {
            phi,
            omega: z.norm(),
            phi_eff: acc,
        });
    }
    Ok(PhaseTrace {
        samples,
        unwrap_reference: reference,
    })
}

/// Unwrapped effective phase from `phi_start` to `phi_end`, re-zeroed at the
/// start. `n` is the initial sample count; it is doubled until adjacent
/// samples differ by less than pi/2.
pub fn phase_trace(cfg: &RigConfig, phi_start: f64, phi_end: f64, n: usize) -> Result<PhaseTrace> {
    if !(phi_start.is_finite() && phi_end.is_finite()) || phi_end <= phi_start {
        return Err(Error::InvalidInput(
            "phase trace needs finite phi_start < phi_end".into(),
        ));
    }
    check_zero_crossing(cfg, phi_start, phi_end)?;
    let mut n = n.max(2);
    loop {
        let trace = sample_trace(cfg, phi_start, phi_end, n)?;
        let jump = trace.max_jump();
        if jump < TARGET_JUMP {
            return Ok(trace);
        }
        if n >= MAX_TRACE_SAMPLES {
            if jump < PI {
                return Ok(trace);
            }
            return Err(Error::UnwrapFailure { jump });
        }
        n = 2 * n - 1;
    }
}

/// Net number of 2pi wraps of the effective phase over one full rotation.
///
/// Positive for counterclockwise traversal of `z` with increasing angle.
pub fn winding_number(cfg: &RigConfig) -> Result<i32> {
    let start = cfg.azimuth_offset + 0.5;
    let trace = phase_trace(cfg, start, start + TAU, 1025)?;
    Ok((trace.net_change() / TAU).round() as i32)
}

/// Nonlinear spin-echo phase `phi_eff(tau)/2 - phi_eff(tau/2)` with the
/// effective phase re-zeroed at `phi_start`. Unwrapped; fold with
/// [`wrap_half_pi`] to compare with the observable.
pub fn nonlinear_phase(cfg: &RigConfig, phi_start: f64, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidInput("tau must be >= 0".into()));
    }
    let span = cfg.angle_after(tau);
    if span == 0.0 {
        checked_offdiag(cfg, phi_start)?;
        return Ok(0.0);
    }
    check_zero_crossing(cfg, phi_start, phi_start + span)?;
    let mut half = 64usize;
    loop {
        let trace = sample_trace(cfg, phi_start, phi_start + span, 2 * half + 1)?;
        let jump = trace.max_jump();
        if jump < TARGET_JUMP || (2 * half + 1 >= MAX_TRACE_SAMPLES && jump < PI) {
            let mid = trace.samples[half].phi_eff;
            return Ok(trace.net_change() / 2.0 - mid);
        }
        if 2 * half + 1 >= MAX_TRACE_SAMPLES {
            return Err(Error::UnwrapFailure { jump });
        }
        half *= 2;
    }
}

/// Fold into (-pi/2, pi/2]: `cos^2` only identifies a phase modulo pi.
pub fn wrap_half_pi(x: f64) -> f64 {
    let y = x - PI * (x / PI).round();
    if y <= -PI / 2.0 {
        y + PI
    } else if y > PI / 2.0 {
        y - PI
    } else {
        y
    }
}

/// Fold into (-pi, pi].
pub fn wrap_pi(x: f64) -> f64 {
    let y = x - TAU * (x / TAU).round();
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Distance between two phases modulo pi.
pub fn half_pi_distance(a: f64, b: f64) -> f64 {
    wrap_half_pi(a - b).abs()
}
