//! Time-domain simulation of rotation-synchronized pulse sequences.
//!
//! States are reported in the frame rotating at the microwave carrier. The
//! full lab-frame drive model integrates the carrier explicitly and maps the
//! result back into that frame, so both drive models are directly comparable.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::analysis::{FringeDataset, FringePoint};
use crate::effphase::{self, nonlinear_phase, offdiag, rabi_amplitude, wrap_half_pi};
use crate::error::{Error, Result};
use crate::frames::{free_evolution_detuning, interaction_hamiltonian, RigConfig};
use crate::spinalg::{expm_hermitian_unchecked, spin, Axis, Mat2, SpinState};

/// Accuracy guard on a single exponential step, rad.
pub const MAX_STEP_PHASE: f64 = 0.1;
/// Default step phase `|H| dt`.
pub const DEFAULT_STEP_PHASE: f64 = 0.01;
/// Default steps per rotation period.
pub const STEPS_PER_ROTATION: f64 = 1e4;
/// Default shot-noise repetitions per point.
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriveModel {
    #[default]
    AnalyticRwa,
    FullLabFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseMode {
    /// Rotation angle frozen during each pulse.
    #[default]
    Instantaneous,
    /// Rotation continues during pulses; free evolution acts throughout.
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub mode: PulseMode,
    pub drive_model: DriveModel,
    /// Step phase `|H| dt` targeted by the integrator; at most [`MAX_STEP_PHASE`].
    pub step_phase: f64,
    pub steps_per_rotation: f64,
    pub record_trajectory: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: PulseMode::Instantaneous,
            drive_model: DriveModel::AnalyticRwa,
            step_phase: DEFAULT_STEP_PHASE,
            steps_per_rotation: STEPS_PER_ROTATION,
            record_trajectory: false,
        }
    }
}

impl SimOptions {
    /// `dt_max = min(step_phase / |H|, T_rot / steps_per_rotation)`.
    pub fn dt_max(&self, cfg: &RigConfig, norm_bound: f64) -> f64 {
        let a = if norm_bound > 0.0 {
            self.step_phase / norm_bound
        } else {
            f64::INFINITY
        };
        a.min(cfg.rotation_period() / self.steps_per_rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEvent {
    /// Motor angle at pulse start, rad.
    pub start_angle: f64,
    /// Rotation angle of the pulse on the Bloch sphere, rad.
    pub nominal_area: f64,
    /// Pulse length, s.
    pub duration: f64,
    pub drive_model: DriveModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub pulses: Vec<PulseEvent>,
    /// Free-evolution lengths between consecutive pulses, s.
    pub gaps: Vec<f64>,
    pub tau: f64,
    pub phi_start: f64,
}

impl PulseSequence {
    /// pi/2 - tau/2 - pi - tau/2 - pi/2 with pulses at `phi_start`,
    /// `phi_start + w tau / 2` and `phi_start + w tau`.
    pub fn spin_echo(
        cfg: &RigConfig,
        phi_start: f64,
        tau: f64,
        drive_model: DriveModel,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidInput("tau must be >= 0".into()));
        }
        let half = cfg.angle_after(tau / 2.0);
        let areas = [
            (phi_start, FRAC_PI_2),
            (phi_start + half, PI),
            (phi_start + 2.0 * half, FRAC_PI_2),
        ];
        let durations = calibrate_durations(cfg, &areas)?;
        let pulses = areas
            .iter()
            .zip(durations)
            .map(|(&(start_angle, nominal_area), duration)| PulseEvent {
                start_angle,
                nominal_area,
                duration,
                drive_model,
            })
            .collect();
        Ok(PulseSequence {
            pulses,
            gaps: vec![tau / 2.0, tau / 2.0],
            tau,
            phi_start,
        })
    }

    /// pi/2 - tau - pi/2.
    pub fn ramsey(
        cfg: &RigConfig,
        phi_start: f64,
        tau: f64,
        drive_model: DriveModel,
    ) -> Result<Self> {
        let areas = [
            (phi_start, FRAC_PI_2),
            (phi_start + cfg.angle_after(tau), FRAC_PI_2),
        ];
        let durations = calibrate_durations(cfg, &areas)?;
        Ok(PulseSequence {
            pulses: areas
                .iter()
                .zip(durations)
                .map(|(&(start_angle, nominal_area), duration)| PulseEvent {
                    start_angle,
                    nominal_area,
                    duration,
                    drive_model,
                })
                .collect(),
            gaps: vec![tau],
            tau,
            phi_start,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSample {
    pub t: f64,
    pub bloch: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub state: SpinState,
    pub population_ms0: f64,
    /// Total carrier-frame propagator of the sequence.
    pub propagator: Mat2,
    pub trajectory: Option<Vec<BlochSample>>,
}

/// Population time series of a stationary Rabi measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiScan {
    pub park_angle: f64,
    pub times: Vec<f64>,
    pub populations: Vec<f64>,
}

/// Time-ordered propagator from `t0` to `t1` using midpoint-sampled
/// exponential steps no longer than `dt_max`.
pub fn propagator<F>(hamiltonian: F, t0: f64, t1: f64, dt_max: f64) -> Result<Mat2>
where
    F: Fn(f64) -> Mat2,
{
    let mut u = Mat2::identity();
    step_segment(&mut u, &hamiltonian, t0, t1, dt_max, &mut |_, _| {})?;
    Ok(u)
}

/// Evolve `state` from `t0` to `t1`; see [`propagator`].
pub fn propagate<F>(
    state: SpinState,
    hamiltonian: F,
    t0: f64,
    t1: f64,
    dt_max: f64,
) -> Result<SpinState>
where
    F: Fn(f64) -> Mat2,
{
    Ok(propagator(hamiltonian, t0, t1, dt_max)?.apply(&state))
}

fn step_segment<F, O>(
    u: &mut Mat2,
    hamiltonian: &F,
    t0: f64,
    t1: f64,
    dt_max: f64,
    observe: &mut O,
) -> Result<()>
where
    F: Fn(f64) -> Mat2,
    O: FnMut(f64, &Mat2),
{
    if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
        return Err(Error::InvalidInput(format!(
            "propagation interval [{t0}, {t1}] is invalid"
        )));
    }
    if dt_max.is_nan() || dt_max <= 0.0 {
        return Err(Error::InvalidInput("dt_max must be > 0".into()));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(());
    }
    let n = (span / dt_max).ceil().max(1.0);
    if n > 1e10 {
        return Err(Error::InvalidInput(format!(
            "{n:.3e} integrator steps requested"
        )));
    }
    let n = n as u64;
    let dt = span / n as f64;
    for k in 0..n {
        let tm = t0 + (k as f64 + 0.5) * dt;
        let h = hamiltonian(tm);
        let phase = h.hermitian_norm() * dt;
        if phase > MAX_STEP_PHASE {
            return Err(Error::StepTooCoarse {
                phase,
                limit: MAX_STEP_PHASE,
            });
        }
        *u = expm_hermitian_unchecked(&h, dt) * *u;
        observe(t0 + (k + 1) as f64 * dt, u);
    }
    Ok(())
}

/// Carrier-frame RWA drive at motor angle `phi`: off-diagonal `z / 2`, so the
/// population oscillates as `cos^2(|z| t / 2)`.
pub fn rwa_drive(cfg: &RigConfig, phi: f64) -> Mat2 {
    let z = offdiag(cfg, phi) * 0.5;
    Mat2::new(C64::new(0.0, 0.0), z, z.conj(), C64::new(0.0, 0.0))
}

/// Pulse lengths `area / |z(angle)|` for `(angle, area)` pairs.
pub fn calibrate_durations(cfg: &RigConfig, pulses: &[(f64, f64)]) -> Result<Vec<f64>> {
    pulses
        .iter()
        .map(|&(angle, area)| {
            let omega = rabi_amplitude(cfg, angle);
            if omega < effphase::AMPLITUDE_FLOOR * cfg.omega0 {
                return Err(Error::DegenerateDrive {
                    phi_deg: angle.to_degrees(),
                    amplitude: omega,
                });
            }
            Ok(area / omega)
        })
        .collect()
}

/// Stationary Rabi oscillation at `park_angle`: `n_samples` points at
/// `t = k t_max / n_samples`.
pub fn rabi_scan(
    cfg: &RigConfig,
    park_angle: f64,
    t_max: f64,
    n_samples: usize,
) -> Result<RabiScan> {
    if n_samples == 0 || t_max.is_nan() || t_max <= 0.0 {
        return Err(Error::InvalidInput(
            "rabi scan needs t_max > 0 and samples".into(),
        ));
    }
    let h = rwa_drive(cfg, park_angle);
    let norm = h.hermitian_norm();
    let dt_max = if norm > 0.0 {
        DEFAULT_STEP_PHASE / norm
    } else {
        t_max
    };
    let step = t_max / n_samples as f64;
    let mut state = SpinState::ms0();
    let mut times = Vec::with_capacity(n_samples);
    let mut populations = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = step * k as f64;
        if k > 0 {
            state = propagate(state, |_| h, t - step, t, dt_max)?;
        }
        times.push(t);
        populations.push(state.population_ms0());
    }
    Ok(RabiScan {
        park_angle,
        times,
        populations,
    })
}

struct Evolver<'a> {
    cfg: &'a RigConfig,
    opts: &'a SimOptions,
    u: Mat2,
    /// Carrier clock, s.
    t_lab: f64,
    trajectory: Option<Vec<BlochSample>>,
}

impl<'a> Evolver<'a> {
    fn new(cfg: &'a RigConfig, opts: &'a SimOptions) -> Self {
        Evolver {
            cfg,
            opts,
            u: Mat2::identity(),
            t_lab: 0.0,
            trajectory: opts.record_trajectory.then(|| {
                vec![BlochSample {
                    t: 0.0,
                    bloch: SpinState::ms0().bloch(),
                }]
            }),
        }
    }

    fn carrier_frame(&self, t_lab: f64) -> Mat2 {
        match self.opts.drive_model {
            DriveModel::AnalyticRwa => Mat2::identity(),
            // psi_rot = exp(-i w S_z t) psi_lab
            DriveModel::FullLabFrame => {
                let a = 0.5 * self.cfg.omega_mw * t_lab;
                Mat2::diag(C64::from_polar(1.0, -a), C64::from_polar(1.0, a))
            }
        }
    }

    fn run<F>(&mut self, h: F, duration: f64, norm_bound: f64) -> Result<()>
    where
        F: Fn(f64) -> Mat2,
    {
        let dt_max = self.opts.dt_max(self.cfg, norm_bound);
        let dt_max = if dt_max.is_finite() {
            dt_max
        } else {
            duration.max(1e-300)
        };
        let t0 = self.t_lab;
        let mut traj = self.trajectory.take();
        let omega_mw = self.cfg.omega_mw;
        let lab = self.opts.drive_model == DriveModel::FullLabFrame;
        step_segment(&mut self.u, &h, t0, t0 + duration, dt_max, &mut |t, u| {
            if let Some(tr) = traj.as_mut() {
                let mut psi = u.apply(&SpinState::ms0());
                if lab {
                    let a = 0.5 * omega_mw * t;
                    psi.c0 *= C64::from_polar(1.0, -a);
                    psi.c1 *= C64::from_polar(1.0, a);
                }
                tr.push(BlochSample {
                    t,
                    bloch: psi.bloch(),
                });
            }
        })?;
        self.trajectory = traj;
        self.t_lab = t0 + duration;
        Ok(())
    }

    /// Free evolution over `duration` with the motor angle starting at `phi0`.
    fn free(&mut self, phi0: f64, duration: f64) -> Result<()> {
        let cfg = *self.cfg;
        let t0 = self.t_lab;
        let bound = 0.5
            * (cfg.detuning.abs()
                + (cfg.gyromagnetic_ratio * cfg.b_transverse * cfg.theta_nv.sin()).abs());
        match self.opts.drive_model {
            DriveModel::AnalyticRwa => self.run(
                |t| {
                    spin(Axis::Z).scale_re(free_evolution_detuning(
                        &cfg,
                        phi0 + cfg.omega_rot * (t - t0),
                    ))
                },
                duration,
                bound,
            ),
            DriveModel::FullLabFrame => {
                // diagonal, so the carrier term factors out exactly
                self.run(
                    |t| {
                        spin(Axis::Z).scale_re(free_evolution_detuning(
                            &cfg,
                            phi0 + cfg.omega_rot * (t - t0),
                        ))
                    },
                    duration,
                    bound,
                )?;
                let a = 0.5 * cfg.omega_mw * duration;
                self.u = Mat2::diag(C64::from_polar(1.0, a), C64::from_polar(1.0, -a)) * self.u;
                Ok(())
            }
        }
    }

    /// Drive pulse; in finite mode the angle advances and free evolution acts.
    fn pulse(&mut self, p: &PulseEvent) -> Result<()> {
        let cfg = *self.cfg;
        let t0 = self.t_lab;
        let finite = self.opts.mode == PulseMode::Finite;
        let angle = move |t: f64| {
            if finite {
                p.start_angle + cfg.omega_rot * (t - t0)
            } else {
                p.start_angle
            }
        };
        let extra = move |t: f64| {
            if finite {
                spin(Axis::Z).scale_re(free_evolution_detuning(&cfg, angle(t)))
            } else {
                Mat2::zero()
            }
        };
        let free_bound = if finite {
            0.5 * (cfg.detuning.abs()
                + (cfg.gyromagnetic_ratio * cfg.b_transverse * cfg.theta_nv.sin()).abs())
        } else {
            0.0
        };
        match p.drive_model {
            DriveModel::AnalyticRwa => {
                if self.opts.drive_model != DriveModel::AnalyticRwa {
                    return Err(Error::InvalidInput(
                        "pulse drive model differs from options".into(),
                    ));
                }
                let bound = 0.5 * cfg.omega0 + free_bound;
                self.run(|t| rwa_drive(&cfg, angle(t)) + extra(t), p.duration, bound)
            }
            DriveModel::FullLabFrame => {
                if self.opts.drive_model != DriveModel::FullLabFrame {
                    return Err(Error::InvalidInput(
                        "pulse drive model differs from options".into(),
                    ));
                }
                let bound = 0.5 * cfg.omega_mw.abs() + 0.5 * cfg.omega0 + free_bound;
                let carrier = spin(Axis::Z).scale_re(-cfg.omega_mw);
                self.run(
                    |t| carrier + interaction_hamiltonian(&cfg, angle(t), t) + extra(t),
                    p.duration,
                    bound,
                )
            }
        }
    }
}

/// Run an arbitrary pulse sequence starting from `|m_S = 0>`.
pub fn simulate_sequence(
    cfg: &RigConfig,
    seq: &PulseSequence,
    opts: &SimOptions,
) -> Result<SimResult> {
    if seq.gaps.len() + 1 != seq.pulses.len() {
        return Err(Error::InvalidInput(
            "sequence needs one gap between each pulse pair".into(),
        ));
    }
    let mut ev = Evolver::new(cfg, opts);
    for (k, p) in seq.pulses.iter().enumerate() {
        ev.pulse(p)?;
        if let Some(&gap) = seq.gaps.get(k) {
            match opts.mode {
                PulseMode::Instantaneous => ev.free(p.start_angle, gap)?,
                PulseMode::Finite => {
                    // next pulse starts `gap` after this one started
                    let rest = gap - p.duration;
                    if rest < 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "pulse {k} ({:.3e} s) longer than its slot ({gap:.3e} s)",
                            p.duration
                        )));
                    }
                    ev.free(p.start_angle + cfg.angle_after(p.duration), rest)?;
                }
            }
        }
    }
    let u = ev.carrier_frame(ev.t_lab) * ev.u;
    let state = u.apply(&SpinState::ms0());
    Ok(SimResult {
        state,
        population_ms0: state.population_ms0(),
        propagator: u,
        trajectory: ev.trajectory,
    })
}

/// Spin echo with default options (instantaneous pulses, RWA drive).
pub fn spin_echo(cfg: &RigConfig, phi_start: f64, tau: f64) -> Result<SimResult> {
    spin_echo_with(cfg, phi_start, tau, &SimOptions::default())
}

pub fn spin_echo_with(
    cfg: &RigConfig,
    phi_start: f64,
    tau: f64,
    opts: &SimOptions,
) -> Result<SimResult> {
    let seq = PulseSequence::spin_echo(cfg, phi_start, tau, opts.drive_model)?;
    simulate_sequence(cfg, &seq, opts)
}

/// Binomial photon-shot readout model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotNoise {
    pub trials: u64,
}

impl Default for ShotNoise {
    fn default() -> Self {
        ShotNoise {
            trials: DEFAULT_TRIALS,
        }
    }
}

impl ShotNoise {
    /// Sample an observed population and its standard error.
    pub fn sample(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("shot noise needs trials > 0".into()));
        }
        let n = self.trials as f64;
        let dist = Binomial::new(self.trials, p.clamp(0.0, 1.0))
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let hat = dist.sample(rng) as f64 / n;
        // floor keeps sigma > 0 at the fringe extrema
        let sigma = ((hat * (1.0 - hat) + 1.0 / n) / n).sqrt();
        Ok((hat, sigma))
    }
}

/// Independent per-point stream so results do not depend on scheduling.
pub fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Spin-echo fringes versus the applied lab-x field.
pub fn fringe_scan(
    cfg: &RigConfig,
    phi_start: f64,
    tau: f64,
    b_values: &[f64],
    noise: Option<ShotNoise>,
    seed: u64,
) -> Result<FringeDataset> {
    fringe_scan_with(
        cfg,
        phi_start,
        tau,
        b_values,
        noise,
        seed,
        &SimOptions::default(),
    )
}

pub fn fringe_scan_with(
    cfg: &RigConfig,
    phi_start: f64,
    tau: f64,
    b_values: &[f64],
    noise: Option<ShotNoise>,
    seed: u64,
    opts: &SimOptions,
) -> Result<FringeDataset> {
    let points = b_values
        .par_iter()
        .enumerate()
        .map(|(i, &b)| {
            let c = cfg.with_b_transverse(b);
            let p = spin_echo_with(&c, phi_start, tau, opts)?.population_ms0;
            match noise {
                None => Ok(FringePoint {
                    b_x: b,
                    population: p.clamp(0.0, 1.0),
                    sigma: None,
                }),
                Some(model) => {
                    let mut rng = point_rng(seed, i);
                    let (population, sigma) = model.sample(p, &mut rng)?;
                    Ok(FringePoint {
                        b_x: b,
                        population,
                        sigma: Some(sigma),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FringeDataset::new(points)
}

/// Closed-form fringe of an instantaneous-pulse spin echo:
/// population `cos^2(2 pi f0 B_x - delta_phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePrediction {
    /// Fringe frequency per tesla (signed).
    pub f0: f64,
    /// Unwrapped nonlinear phase.
    pub delta_phi: f64,
}

impl FringePrediction {
    /// Representation with `f0 >= 0` and `delta_phi` in (-pi/2, pi/2], the
    /// convention used by the fringe fit.
    pub fn canonical(&self) -> (f64, f64) {
        if self.f0 < 0.0 {
            (-self.f0, wrap_half_pi(-self.delta_phi))
        } else {
            (self.f0, wrap_half_pi(self.delta_phi))
        }
    }

    pub fn population(&self, b_x: f64) -> f64 {
        (2.0 * PI * self.f0 * b_x - self.delta_phi).cos().powi(2)
    }

    /// One fringe period in tesla.
    pub fn period(&self) -> f64 {
        1.0 / (2.0 * self.f0.abs())
    }
}

/// `int cos(phi_nv(t)) dt` over `duration` starting at motor angle `phi0`.
fn cos_integral(cfg: &RigConfig, phi0: f64, duration: f64) -> f64 {
    let a = cfg.nv_azimuth(phi0);
    if cfg.omega_rot == 0.0 {
        a.cos() * duration
    } else {
        ((a + cfg.omega_rot * duration).sin() - a.sin()) / cfg.omega_rot
    }
}

/// Fringe frequency from the first-half minus second-half projection
/// integrals of the up-converted field, and the nonlinear phase.
pub fn fringe_prediction(cfg: &RigConfig, phi_start: f64, tau: f64) -> Result<FringePrediction> {
    let half = tau / 2.0;
    let first = cos_integral(cfg, phi_start, half);
    let second = cos_integral(cfg, phi_start + cfg.angle_after(half), half);
    let f0 = cfg.gyromagnetic_ratio * cfg.theta_nv.sin() * (first - second) / (4.0 * PI);
    Ok(FringePrediction {
        f0,
        delta_phi: nonlinear_phase(cfg, phi_start, tau)?,
    })
}
